//! `PKCKPT1` training checkpoints: manifest, policy snapshot, curriculum
//! cells and optimizer moments in one file.
//!
//! ```text
//! magic "PKCKPT1\0" | format u8
//! | manifest_len u32 | manifest TOML
//! | policy_len u64 | policy snapshot bytes
//! | cells u32 | (row u32, col u32) * cells
//! | has_adam u8 | [t u64 | lr beta1 beta2 eps max_grad_norm f64 | tensors u32 | (len u64 | m f64*len | v f64*len) * tensors]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curriculum::{CurriculumState, Stage};
use crate::error::{Error, Result};
use crate::neural::policy::PolicyDims;
use crate::neural::{Adam, AdamConfig, ParamStore};

pub const CKPT_MAGIC: &[u8; 8] = b"PKCKPT1\0";
pub const CKPT_FORMAT: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Oracle,
    Student,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    pub kind: PolicyKind,
    pub stage: Stage,
    pub iteration: u64,
    pub policy_version: u64,
    pub optimizer_step: u64,
    pub parameters: usize,
    pub curriculum_cells: usize,
    pub dims: PolicyDims,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub policy: ParamStore,
    pub curriculum: Vec<CurriculumState>,
    pub adam: Option<Adam>,
}

impl Checkpoint {
    pub fn new(
        kind: PolicyKind,
        stage: Stage,
        iteration: u64,
        dims: PolicyDims,
        policy: ParamStore,
        curriculum: Vec<CurriculumState>,
        adam: Option<Adam>,
    ) -> Self {
        Checkpoint {
            manifest: Manifest {
                format: CKPT_FORMAT as u32,
                kind,
                stage,
                iteration,
                policy_version: policy.version,
                optimizer_step: adam.as_ref().map_or(0, |a| a.t),
                parameters: policy.len(),
                curriculum_cells: curriculum.len(),
                dims,
            },
            policy,
            curriculum,
            adam,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.push(CKPT_FORMAT);
        let manifest = toml::to_string(&self.manifest).expect("manifest serializes");
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        let policy = self.policy.to_snapshot_bytes();
        out.extend_from_slice(&(policy.len() as u64).to_le_bytes());
        out.extend_from_slice(&policy);
        out.extend_from_slice(&(self.curriculum.len() as u32).to_le_bytes());
        for c in &self.curriculum {
            out.extend_from_slice(&(c.row as u32).to_le_bytes());
            out.extend_from_slice(&(c.col as u32).to_le_bytes());
        }
        match &self.adam {
            None => out.push(0),
            Some(a) => {
                out.push(1);
                out.extend_from_slice(&a.t.to_le_bytes());
                for v in [a.cfg.lr, a.cfg.beta1, a.cfg.beta2, a.cfg.eps, a.cfg.max_grad_norm] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&(a.m.len() as u32).to_le_bytes());
                for (m, v) in a.m.iter().zip(&a.v) {
                    out.extend_from_slice(&(m.len() as u64).to_le_bytes());
                    for x in m.iter().chain(v) {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, origin };
        if r.take(8)? != CKPT_MAGIC {
            return Err(r.bad("bad magic"));
        }
        let format = r.take(1)?[0];
        if format != CKPT_FORMAT {
            return Err(r.bad(&format!("unsupported format version {format}")));
        }
        let mlen = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(mlen)?).map_err(|_| r.bad("manifest is not utf-8"))?;
        let manifest: Manifest = toml::from_str(text).map_err(|e| r.bad(&format!("manifest: {e}")))?;
        let plen = r.u64()? as usize;
        let policy = ParamStore::from_snapshot_bytes(r.take(plen)?, origin)?;
        let cells = r.u32()? as usize;
        let mut curriculum = Vec::with_capacity(cells.min(1 << 20));
        for _ in 0..cells {
            let row = r.u32()? as usize;
            let col = r.u32()? as usize;
            curriculum.push(CurriculumState { row, col });
        }
        let adam = match r.take(1)?[0] {
            0 => None,
            1 => {
                let t = r.u64()?;
                let mut c = [0.0; 5];
                for v in &mut c {
                    *v = r.f64()?;
                }
                let n = r.u32()? as usize;
                if n != policy.len() {
                    return Err(r.bad("optimizer state does not match the policy"));
                }
                let (mut m, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
                for p in policy.params() {
                    let len = r.u64()? as usize;
                    if len != p.value.len() {
                        return Err(r.bad(&format!("optimizer moment size mismatch for {}", p.name)));
                    }
                    m.push((0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
                    v.push((0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
                }
                Some(Adam {
                    cfg: AdamConfig {
                        lr: c[0],
                        beta1: c[1],
                        beta2: c[2],
                        eps: c[3],
                        max_grad_norm: c[4],
                    },
                    m,
                    v,
                    t,
                })
            }
            f => return Err(r.bad(&format!("bad optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(r.bad("trailing bytes"));
        }
        let m = &manifest;
        if m.policy_version != policy.version
            || m.parameters != policy.len()
            || m.curriculum_cells != curriculum.len()
            || m.optimizer_step != adam.as_ref().map_or(0, |a| a.t)
        {
            return Err(Error::corrupt(origin, "manifest disagrees with the archive contents"));
        }
        Ok(Checkpoint {
            manifest,
            policy,
            curriculum,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn bad(&self, why: &str) -> Error {
        Error::corrupt(self.origin, why.to_string())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.bad("truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
