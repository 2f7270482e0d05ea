//! `PKTRAJ1` labeled trajectory files passed from collectors to the trainer.
//!
//! Layout, little-endian:
//!
//! ```text
//! magic "PKTRAJ1\0" | format u8 | collector u32 | policy_version u64 | count u64
//! | base_dim u32 | vel_dim u32 | depth_rows u32 | depth_cols u32 | action_dim u32
//! then `count` records:
//! env u32 | episode u64 | step u64 | base f32[base_dim] | true_vel f32[vel_dim]
//! | depth f32[rows*cols] | teacher_action f32[action_dim] | done u8
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::learning::{LabeledStep, BASE_DIM};
use crate::neural::policy::{ACTION_DIM, VEL_DIM};
use crate::perception::{DEPTH_COLS, DEPTH_ROWS};

pub const TRAJ_MAGIC: &[u8; 8] = b"PKTRAJ1\0";
pub const TRAJ_FORMAT: u8 = 1;
pub const TRAJ_EXTENSION: &str = "pktraj";

/// Per-record sizes declared in the header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecordLayout {
    pub base_dim: u32,
    pub vel_dim: u32,
    pub depth_rows: u32,
    pub depth_cols: u32,
    pub action_dim: u32,
}

impl Default for RecordLayout {
    fn default() -> Self {
        RecordLayout {
            base_dim: BASE_DIM as u32,
            vel_dim: VEL_DIM as u32,
            depth_rows: DEPTH_ROWS as u32,
            depth_cols: DEPTH_COLS as u32,
            action_dim: ACTION_DIM as u32,
        }
    }
}

impl RecordLayout {
    pub fn record_bytes(&self) -> usize {
        let floats = self.base_dim + self.vel_dim + self.depth_rows * self.depth_cols + self.action_dim;
        4 + 8 + 8 + 4 * floats as usize + 1
    }
}

pub const HEADER_BYTES: usize = 8 + 1 + 4 + 8 + 8 + 5 * 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrajectoryHeader {
    pub collector: u32,
    pub policy_version: u64,
    pub count: u64,
    pub layout: RecordLayout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryFile {
    pub header: TrajectoryHeader,
    pub records: Vec<LabeledStep>,
}

/// `c01-000003.pktraj`
pub fn file_name(collector: u32, seq: u64) -> String {
    format!("c{collector:02}-{seq:06}.{TRAJ_EXTENSION}")
}

/// Inverse of [`file_name`]; `None` for anything else, including temp files.
pub fn parse_file_name(name: &str) -> Option<(u32, u64)> {
    let stem = name.strip_suffix(&format!(".{TRAJ_EXTENSION}"))?;
    let rest = stem.strip_prefix('c')?;
    let (c, s) = rest.split_once('-')?;
    if c.is_empty() || s.is_empty() || !c.bytes().all(|b| b.is_ascii_digit()) || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((c.parse().ok()?, s.parse().ok()?))
}

fn put_f32s(out: &mut Vec<u8>, vals: impl IntoIterator<Item = f64>) {
    for v in vals {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

impl TrajectoryFile {
    pub fn new(collector: u32, policy_version: u64, records: Vec<LabeledStep>) -> Self {
        TrajectoryFile {
            header: TrajectoryHeader {
                collector,
                policy_version,
                count: records.len() as u64,
                layout: RecordLayout::default(),
            },
            records,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let l = self.header.layout;
        if l != RecordLayout::default() {
            return Err(Error::Contract("only the native record layout can be written".into()));
        }
        if self.header.count != self.records.len() as u64 {
            return Err(Error::Contract("header count does not match records".into()));
        }
        let mut out = Vec::with_capacity(HEADER_BYTES + self.records.len() * l.record_bytes());
        out.extend_from_slice(TRAJ_MAGIC);
        out.push(TRAJ_FORMAT);
        out.extend_from_slice(&self.header.collector.to_le_bytes());
        out.extend_from_slice(&self.header.policy_version.to_le_bytes());
        out.extend_from_slice(&self.header.count.to_le_bytes());
        for d in [l.base_dim, l.vel_dim, l.depth_rows, l.depth_cols, l.action_dim] {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for r in &self.records {
            if r.base.len() != BASE_DIM || r.depth.len() != (l.depth_rows * l.depth_cols) as usize {
                return Err(Error::Contract("record has wrong observation sizes".into()));
            }
            out.extend_from_slice(&r.env.to_le_bytes());
            out.extend_from_slice(&r.episode.to_le_bytes());
            out.extend_from_slice(&r.step.to_le_bytes());
            put_f32s(&mut out, r.base.iter().copied());
            put_f32s(&mut out, r.true_vel);
            for &d in &r.depth {
                out.extend_from_slice(&d.to_le_bytes());
            }
            put_f32s(&mut out, r.teacher_action);
            out.push(r.done as u8);
        }
        Ok(out)
    }

    /// Header only; checks magic, format, layout and that the length matches the count.
    pub fn parse_header(bytes: &[u8], total_len: u64, origin: &Path) -> Result<TrajectoryHeader> {
        let bad = |why: String| Error::corrupt(origin, why);
        if bytes.len() < HEADER_BYTES {
            return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..8] != TRAJ_MAGIC {
            return Err(bad("bad magic".into()));
        }
        if bytes[8] != TRAJ_FORMAT {
            return Err(bad(format!("unsupported format version {}", bytes[8])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let header = TrajectoryHeader {
            collector: u32_at(9),
            policy_version: u64_at(13),
            count: u64_at(21),
            layout: RecordLayout {
                base_dim: u32_at(29),
                vel_dim: u32_at(33),
                depth_rows: u32_at(37),
                depth_cols: u32_at(41),
                action_dim: u32_at(45),
            },
        };
        if header.layout != RecordLayout::default() {
            return Err(bad(format!("record layout {:?} does not match this build", header.layout)));
        }
        let expected = (HEADER_BYTES as u64).checked_add(header.count.checked_mul(header.layout.record_bytes() as u64).ok_or_else(|| bad("record count overflows".into()))?);
        if expected != Some(total_len) {
            return Err(bad(format!(
                "header declares {} records but the file has {total_len} bytes",
                header.count
            )));
        }
        Ok(header)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let header = Self::parse_header(bytes, bytes.len() as u64, origin)?;
        let l = header.layout;
        let rb = l.record_bytes();
        let mut records = Vec::with_capacity(header.count as usize);
        let f32s = |b: &[u8]| -> Vec<f32> { b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect() };
        for k in 0..header.count as usize {
            let r = &bytes[HEADER_BYTES + k * rb..HEADER_BYTES + (k + 1) * rb];
            let mut o = 0;
            let mut take = |n: usize| {
                let s = &r[o..o + n];
                o += n;
                s
            };
            let env = u32::from_le_bytes(take(4).try_into().expect("4 bytes"));
            let episode = u64::from_le_bytes(take(8).try_into().expect("8 bytes"));
            let step = u64::from_le_bytes(take(8).try_into().expect("8 bytes"));
            let base: Vec<f64> = f32s(take(4 * l.base_dim as usize)).into_iter().map(f64::from).collect();
            let vel = f32s(take(4 * l.vel_dim as usize));
            let depth = f32s(take(4 * (l.depth_rows * l.depth_cols) as usize));
            let act = f32s(take(4 * l.action_dim as usize));
            let done = match take(1)[0] {
                0 => false,
                1 => true,
                v => return Err(Error::corrupt(origin, format!("record {k} has done flag {v}"))),
            };
            if base.iter().any(|v| !v.is_finite()) || vel.iter().chain(&depth).chain(&act).any(|v| !v.is_finite()) {
                return Err(Error::corrupt(origin, format!("record {k} holds non-finite values")));
            }
            let mut true_vel = [0.0; VEL_DIM];
            for (d, s) in true_vel.iter_mut().zip(&vel) {
                *d = *s as f64;
            }
            let mut teacher_action = [0.0; ACTION_DIM];
            for (d, s) in teacher_action.iter_mut().zip(&act) {
                *d = *s as f64;
            }
            records.push(LabeledStep {
                env,
                episode,
                step,
                base,
                depth,
                true_vel,
                teacher_action,
                done,
            });
        }
        Ok(TrajectoryFile { header, records })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Reads just enough to validate and return the header.
    pub fn read_header(path: &Path) -> Result<TrajectoryHeader> {
        use std::io::Read;
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let len = f.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut buf = vec![0u8; HEADER_BYTES.min(len as usize)];
        f.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        Self::parse_header(&buf, len, path)
    }

    /// Temp-then-rename write; the final name appears only when complete.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        crate::io_util::atomic_write(path, &self.to_bytes()?)
    }
}

/// One CSV row per record: ids, velocity label, teacher action and mean depth.
pub fn replay_csv(file: &TrajectoryFile) -> String {
    use std::fmt::Write as _;
    let mut s = String::from("env,episode,step,done,vx,vy,vz");
    for j in 0..ACTION_DIM {
        let _ = write!(s, ",a{j}");
    }
    s.push_str(",depth_mean\n");
    for r in &file.records {
        let _ = write!(s, "{},{},{},{}", r.env, r.episode, r.step, r.done as u8);
        for v in r.true_vel.iter().chain(&r.teacher_action) {
            let _ = write!(s, ",{v}");
        }
        let mean = r.depth.iter().map(|&d| d as f64).sum::<f64>() / r.depth.len().max(1) as f64;
        let _ = writeln!(s, ",{mean:.4}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::DEPTH_LEN;

    pub(crate) fn record(env: u32, step: u64, done: bool) -> LabeledStep {
        LabeledStep {
            env,
            episode: 2,
            step,
            base: (0..BASE_DIM).map(|i| i as f64 * 0.5).collect(),
            depth: (0..DEPTH_LEN).map(|i| (i % 7) as f32 * 0.25).collect(),
            true_vel: [0.5, -0.25, 0.125],
            teacher_action: [0.75; ACTION_DIM],
            done,
        }
    }

    #[test]
    fn round_trip() {
        let f = TrajectoryFile::new(3, 17, vec![record(0, 0, false), record(1, 0, true), record(0, 1, false)]);
        let bytes = f.to_bytes().unwrap();
        assert_eq!(bytes.len(), HEADER_BYTES + 3 * RecordLayout::default().record_bytes());
        let back = TrajectoryFile::from_bytes(&bytes, Path::new("x")).unwrap();
        assert_eq!(back, f);
        assert_eq!(&bytes[..8], TRAJ_MAGIC);
    }

    #[test]
    fn record_size_matches_fields() {
        assert_eq!(RecordLayout::default().record_bytes(), 20 + 4 * (65 + 3 + 3072 + 19) + 1);
    }

    #[test]
    fn truncation_and_bad_magic_are_corrupt() {
        let bytes = TrajectoryFile::new(1, 1, vec![record(0, 0, false), record(0, 1, false)]).to_bytes().unwrap();
        for cut in [0, 5, HEADER_BYTES, bytes.len() - 1] {
            let e = TrajectoryFile::from_bytes(&bytes[..cut], Path::new("t")).unwrap_err();
            assert_eq!(e.exit_code(), 3, "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(TrajectoryFile::from_bytes(&extra, Path::new("t")).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(TrajectoryFile::from_bytes(&magic, Path::new("t")).is_err());
        let mut count = bytes;
        count[21] = 3;
        assert!(TrajectoryFile::from_bytes(&count, Path::new("t")).is_err());
    }

    #[test]
    fn bad_done_flag_is_corrupt() {
        let mut bytes = TrajectoryFile::new(1, 1, vec![record(0, 0, false)]).to_bytes().unwrap();
        let last = bytes.len() - 1;
        bytes[last] = 7;
        assert!(TrajectoryFile::from_bytes(&bytes, Path::new("t")).is_err());
    }

    #[test]
    fn names() {
        assert_eq!(file_name(1, 3), "c01-000003.pktraj");
        assert_eq!(parse_file_name("c01-000003.pktraj"), Some((1, 3)));
        assert_eq!(parse_file_name("c12-1234567.pktraj"), Some((12, 1_234_567)));
        assert_eq!(parse_file_name(".c01-000003.pktraj.77.0.tmp"), None);
        assert_eq!(parse_file_name("c01-000003.pktraj.tmp"), None);
        assert_eq!(parse_file_name("c-1.pktraj"), None);
    }

    #[test]
    fn header_reader_checks_length() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(file_name(0, 0));
        TrajectoryFile::new(0, 4, vec![record(0, 0, false)]).write_atomic(&p).unwrap();
        let h = TrajectoryFile::read_header(&p).unwrap();
        assert_eq!((h.collector, h.policy_version, h.count), (0, 4, 1));
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
        assert!(TrajectoryFile::read_header(&p).is_err());
    }

    #[test]
    fn replay_rows() {
        let f = TrajectoryFile::new(2, 1, vec![record(0, 0, false), record(1, 4, true)]);
        let csv = replay_csv(&f);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 4 + VEL_DIM + ACTION_DIM + 1);
        assert!(lines[2].starts_with("1,"));
        assert_eq!(lines[2].split(',').nth(3), Some("1"));
    }
}
