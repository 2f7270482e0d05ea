//! Shared-filesystem exchange between the trainer and collectors.
//!
//! ```text
//! root/student.pkpolicy   latest student snapshot, replaced by rename
//! root/teacher.pkpolicy   oracle snapshot used for labels
//! root/trajectories/      finished trajectory files awaiting the trainer
//! root/consumed/          files the trainer has read (the transition ledger)
//! root/rejected/          files that failed validation
//! ```

use std::fs;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io_util::ensure_dir;
use crate::neural::ParamStore;
use crate::orchestration::trajectory::{parse_file_name, TrajectoryFile};

pub const STUDENT_FILE: &str = "student.pkpolicy";
pub const TEACHER_FILE: &str = "teacher.pkpolicy";
pub const TRAJECTORY_DIR: &str = "trajectories";
pub const CONSUMED_DIR: &str = "consumed";
pub const REJECTED_DIR: &str = "rejected";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ledger {
    pub pending: usize,
    pub consumed: usize,
    pub rejected: usize,
    /// Sum of header record counts over `consumed/`.
    pub consumed_transitions: u64,
}

#[derive(Clone, Debug)]
pub struct SnapshotExchange {
    pub root: PathBuf,
}

impl SnapshotExchange {
    /// Creates the directory tree if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let ex = SnapshotExchange { root: root.into() };
        for d in [ex.trajectories_dir(), ex.consumed_dir(), ex.rejected_dir()] {
            ensure_dir(&d)?;
        }
        Ok(ex)
    }

    pub fn student_path(&self) -> PathBuf {
        self.root.join(STUDENT_FILE)
    }

    pub fn teacher_path(&self) -> PathBuf {
        self.root.join(TEACHER_FILE)
    }

    pub fn trajectories_dir(&self) -> PathBuf {
        self.root.join(TRAJECTORY_DIR)
    }

    pub fn consumed_dir(&self) -> PathBuf {
        self.root.join(CONSUMED_DIR)
    }

    pub fn rejected_dir(&self) -> PathBuf {
        self.root.join(REJECTED_DIR)
    }

    /// Version of the published student, read from the snapshot trailer.
    pub fn published_version(&self) -> Result<Option<u64>> {
        let p = self.student_path();
        let mut f = match fs::File::open(&p) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&p, e)),
        };
        let mut v = [0u8; 8];
        f.seek(SeekFrom::End(-8)).map_err(|e| Error::io(&p, e))?;
        f.read_exact(&mut v).map_err(|e| Error::io(&p, e))?;
        Ok(Some(u64::from_le_bytes(v)))
    }

    /// Replaces the student snapshot; the version must exceed the published one.
    pub fn publish_student(&self, store: &ParamStore) -> Result<u64> {
        if let Some(v) = self.published_version()? {
            if store.version <= v {
                return Err(Error::Contract(format!(
                    "snapshot version {} does not exceed published {v}",
                    store.version
                )));
            }
        }
        store.save(&self.student_path())?;
        Ok(store.version)
    }

    pub fn load_student(&self) -> Result<ParamStore> {
        ParamStore::load(&self.student_path())
    }

    fn listed(dir: &Path) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name();
            if parse_file_name(&name.to_string_lossy()).is_some() {
                out.push(entry.path());
            }
        }
        out.sort();
        Ok(out)
    }

    /// Finished trajectory files in name order; temp files are never listed.
    pub fn pending(&self) -> Result<Vec<PathBuf>> {
        Self::listed(&self.trajectories_dir())
    }

    pub fn consumed(&self) -> Result<Vec<PathBuf>> {
        Self::listed(&self.consumed_dir())
    }

    pub fn rejected(&self) -> Result<Vec<PathBuf>> {
        Self::listed(&self.rejected_dir())
    }

    fn move_into(&self, path: &Path, dir: PathBuf) -> Result<PathBuf> {
        let name = path
            .file_name()
            .ok_or_else(|| Error::Contract(format!("{} has no file name", path.display())))?;
        let dst = dir.join(name);
        fs::rename(path, &dst).map_err(|e| Error::io(path, e))?;
        Ok(dst)
    }

    pub fn mark_consumed(&self, path: &Path) -> Result<PathBuf> {
        self.move_into(path, self.consumed_dir())
    }

    pub fn quarantine(&self, path: &Path) -> Result<PathBuf> {
        self.move_into(path, self.rejected_dir())
    }

    pub fn ledger(&self) -> Result<Ledger> {
        let consumed = self.consumed()?;
        let mut transitions = 0;
        for p in &consumed {
            transitions += TrajectoryFile::read_header(p)?.count;
        }
        Ok(Ledger {
            pending: self.pending()?.len(),
            consumed: consumed.len(),
            rejected: self.rejected()?.len(),
            consumed_transitions: transitions,
        })
    }

    /// One past the highest sequence number this collector has used anywhere.
    pub fn next_sequence(&self, collector: u32) -> Result<u64> {
        let mut next = 0;
        for dir in [self.trajectories_dir(), self.consumed_dir(), self.rejected_dir()] {
            for p in Self::listed(&dir)? {
                if let Some((c, s)) = p.file_name().and_then(|n| parse_file_name(&n.to_string_lossy())) {
                    if c == collector {
                        next = next.max(s + 1);
                    }
                }
            }
        }
        Ok(next)
    }

    /// Removes temp files a collector left behind, e.g. after being killed mid-write.
    pub fn remove_stale_temps(&self, collector: u32) -> Result<usize> {
        let dir = self.trajectories_dir();
        let prefix = format!(".c{collector:02}-");
        let mut n = 0;
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with(&prefix) && name.ends_with(".tmp") && fs::remove_file(entry.path()).is_ok() {
                n += 1;
            }
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::LabeledStep;
    use crate::orchestration::trajectory::file_name;

    fn sample(env: u32) -> LabeledStep {
        LabeledStep {
            env,
            episode: 0,
            step: 0,
            base: vec![0.0; crate::learning::BASE_DIM],
            depth: vec![1.0; crate::learning::DEPTH_LEN],
            true_vel: [0.0; 3],
            teacher_action: [0.0; 19],
            done: false,
        }
    }

    #[test]
    fn publish_versions_must_increase() {
        let dir = tempfile::tempdir().unwrap();
        let ex = SnapshotExchange::open(dir.path()).unwrap();
        assert_eq!(ex.published_version().unwrap(), None);
        let mut s = ParamStore::new();
        s.add("w", vec![2], vec![0.5, 0.25]);
        s.version = 3;
        ex.publish_student(&s).unwrap();
        assert_eq!(ex.published_version().unwrap(), Some(3));
        assert!(ex.publish_student(&s).is_err());
        s.version = 4;
        ex.publish_student(&s).unwrap();
        assert_eq!(ex.load_student().unwrap().version, 4);
    }

    #[test]
    fn ledger_and_sequences() {
        let dir = tempfile::tempdir().unwrap();
        let ex = SnapshotExchange::open(dir.path()).unwrap();
        for s in 0..3 {
            let f = TrajectoryFile::new(2, 0, vec![sample(0), sample(1)]);
            f.write_atomic(&ex.trajectories_dir().join(file_name(2, s))).unwrap();
        }
        fs::write(ex.trajectories_dir().join(".c02-000009.pktraj.1.0.tmp"), b"partial").unwrap();
        assert_eq!(ex.pending().unwrap().len(), 3);
        let first = ex.pending().unwrap()[0].clone();
        ex.mark_consumed(&first).unwrap();
        let l = ex.ledger().unwrap();
        assert_eq!((l.pending, l.consumed, l.rejected, l.consumed_transitions), (2, 1, 0, 2));
        assert_eq!(ex.next_sequence(2).unwrap(), 3);
        assert_eq!(ex.next_sequence(5).unwrap(), 0);
        assert_eq!(ex.remove_stale_temps(1).unwrap(), 0);
        assert_eq!(ex.remove_stale_temps(2).unwrap(), 1);
    }
}
