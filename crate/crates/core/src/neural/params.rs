//! Named parameter storage, initialization and the policy snapshot format.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::neural::tensor::Tensor;

pub const SNAPSHOT_MAGIC: &[u8; 9] = b"PKPOLICY1";

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

impl Param {
    /// Rank-1 shapes are row vectors; higher ranks flatten trailing dims into columns.
    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => (self.shape[0], self.shape[1..].iter().product()),
        }
    }

    pub fn as_matrix(&self) -> Tensor {
        let (rows, cols) = self.matrix_dims();
        Tensor {
            rows,
            cols,
            data: self.value.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    /// Incremented by every optimizer step.
    pub version: u64,
}

/// Rounds to the nearest f32 so snapshots are lossless.
#[inline]
pub fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Adds a parameter; values are quantized to f32 precision.
    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> usize {
        let name = name.into();
        assert!(self.index_of(&name).is_none(), "duplicate parameter {name}");
        assert_eq!(shape.iter().product::<usize>().max(1), value.len().max(1), "shape/value mismatch for {name}");
        self.params.push(Param {
            name,
            shape,
            value: value.into_iter().map(quantize).collect(),
        });
        self.params.len() - 1
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> usize {
        let n = shape.iter().product();
        self.add(name, shape, vec![0.0; n])
    }

    /// Uniform in `+-scale / sqrt(fan_in)`.
    pub fn add_uniform(&mut self, name: impl Into<String>, shape: Vec<usize>, fan_in: usize, scale: f64, rng: &mut impl Rng) -> usize {
        let n: usize = shape.iter().product();
        let bound = scale / (fan_in.max(1) as f64).sqrt();
        let v = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.add(name, shape, v)
    }

    /// `rows x cols` matrix with orthonormal rows or columns (whichever is shorter).
    pub fn add_orthogonal(&mut self, name: impl Into<String>, rows: usize, cols: usize, gain: f64, rng: &mut impl Rng) -> usize {
        let v = orthogonal(rows, cols, rng).into_iter().map(|x| x * gain).collect();
        self.add(name, vec![rows, cols], v)
    }

    pub fn quantize_all(&mut self) {
        for p in &mut self.params {
            for v in &mut p.value {
                *v = quantize(*v);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|v| v.is_finite()))
    }

    /// Euclidean distance over the parameters whose names start with `prefix`.
    pub fn distance(&self, other: &ParamStore, prefix: &str) -> f64 {
        let mut s = 0.0;
        for p in self.params.iter().filter(|p| p.name.starts_with(prefix)) {
            if let Some(q) = other.get(&p.name) {
                s += p.value.iter().zip(&q.value).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            } else {
                return f64::INFINITY;
            }
        }
        s.sqrt()
    }

    /// Copies every parameter under `prefix` from `src`; shapes must match.
    pub fn copy_prefix_from(&mut self, src: &ParamStore, prefix: &str) -> Result<usize> {
        let mut n = 0;
        for p in self.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            let q = src
                .get(&p.name)
                .ok_or_else(|| Error::Contract(format!("source lacks parameter {}", p.name)))?;
            if q.shape != p.shape {
                return Err(Error::Contract(format!("shape mismatch for {}", p.name)));
            }
            p.value.clone_from(&q.value);
            n += 1;
        }
        Ok(n)
    }

    /// Replaces all values from `other`, which must have identical names and shapes.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Contract(format!(
                "parameter count mismatch: {} vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            if p.name != q.name || p.shape != q.shape {
                return Err(Error::Contract(format!(
                    "parameter layout mismatch: {} {:?} vs {} {:?}",
                    p.name, p.shape, q.name, q.shape
                )));
            }
            p.value.clone_from(&q.value);
        }
        self.version = other.version;
        Ok(())
    }

    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&(p.name.len() as u32).to_le_bytes())?;
            w.write_all(p.name.as_bytes())?;
            w.write_all(&(p.shape.len() as u32).to_le_bytes())?;
            for &d in &p.shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(p.value.len() * 4);
            for &v in &p.value {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.write_all(&self.version.to_le_bytes())
    }

    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_snapshot(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub fn from_snapshot_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = bytes;
        Self::read_snapshot(&mut r, origin)
    }

    pub fn read_snapshot<R: Read>(r: &mut R, origin: &Path) -> Result<Self> {
        let bad = |why: &str| Error::corrupt(origin, why.to_string());
        let mut magic = [0u8; 9];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32b = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32b).map_err(|_| bad("truncated record"))?;
            Ok(u32::from_le_bytes(u32b))
        };
        let count = read_u32(r)? as usize;
        if count > 1 << 16 {
            return Err(bad("implausible parameter count"));
        }
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            if name_len > 4096 {
                return Err(bad("implausible name length"));
            }
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(|_| bad("truncated name"))?;
            let name = String::from_utf8(name).map_err(|_| bad("name is not utf-8"))?;
            let ndim = read_u32(r)? as usize;
            if ndim > 8 {
                return Err(bad("implausible rank"));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u32(r)? as usize);
            }
            let n: usize = shape.iter().product();
            if n > 1 << 28 {
                return Err(bad("implausible tensor size"));
            }
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf).map_err(|_| bad("truncated tensor data"))?;
            let value: Vec<f64> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if store.index_of(&name).is_some() {
                return Err(bad("duplicate parameter name"));
            }
            store.params.push(Param { name, shape, value });
        }
        let mut v = [0u8; 8];
        r.read_exact(&mut v).map_err(|_| bad("missing version"))?;
        store.version = u64::from_le_bytes(v);
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(|e| Error::io(origin, e))? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(store)
    }

    /// Writes via a temporary file and rename so readers never see partial data.
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::atomic_write(path, &self.to_snapshot_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot_bytes(&bytes, path)
    }
}

/// Gram-Schmidt on a Gaussian matrix.
fn orthogonal(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (n, m) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // Build m orthonormal vectors of length n, then lay them out as columns (or rows).
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    while basis.len() < m {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows >= cols { basis[c][r] } else { basis[r][c] };
        }
    }
    out
}
