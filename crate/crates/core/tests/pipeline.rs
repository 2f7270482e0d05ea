//! Trainer and collectors exchanging files in one process.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use parkour::learning::{LabeledStep, BASE_DIM, DEPTH_LEN};
use parkour::neural::policy::PolicyDims;
use parkour::orchestration::trajectory::{file_name, parse_file_name};
use parkour::orchestration::{collector_loop, trainer_loop, SnapshotExchange, StopWhen, TrajectoryFile};

fn stop_after(n: u64, secs: u64) -> StopWhen {
    StopWhen {
        max_items: Some(n),
        deadline: Some(Instant::now() + Duration::from_secs(secs)),
        flag: None,
    }
}

fn names(paths: &[std::path::PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect()
}

#[test]
fn three_collectors_ten_files_each_are_consumed_exactly_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config(dir.path(), PolicyDims::tiny());
    common::seed_teacher(&cfg);

    let (trainer, collectors) = std::thread::scope(|s| {
        let t = s.spawn(|| trainer_loop(&cfg, &stop_after(30, 300)).unwrap());
        let cs: Vec<_> = (1..=3u32)
            .map(|id| {
                let cfg = &cfg;
                s.spawn(move || collector_loop(cfg, id, &stop_after(10, 300)).unwrap())
            })
            .collect();
        let cs: Vec<_> = cs.into_iter().map(|h| h.join().unwrap()).collect();
        (t.join().unwrap(), cs)
    });

    for c in &collectors {
        assert_eq!(c.files, 10);
        assert_eq!(c.transitions, 1000);
    }
    assert_eq!(trainer.updates, 30);
    assert_eq!(trainer.files_consumed, 30);
    assert_eq!(trainer.files_rejected, 0);
    assert_eq!(trainer.transitions, 3000);

    let ex = SnapshotExchange::open(&cfg.exchange_dir).unwrap();
    let ledger = ex.ledger().unwrap();
    assert_eq!((ledger.pending, ledger.consumed, ledger.rejected), (0, 30, 0));
    assert_eq!(ledger.consumed_transitions, 3000);
    let consumed: BTreeSet<String> = names(&ex.consumed().unwrap()).into_iter().collect();
    let expected: BTreeSet<String> = (1..=3).flat_map(|c| (0..10).map(move |s| file_name(c, s))).collect();
    assert_eq!(consumed, expected);
    // Nothing but finished files and no leftovers from atomic writes.
    assert_eq!(std::fs::read_dir(ex.trajectories_dir()).unwrap().count(), 0);
    assert!(ex.published_version().unwrap().unwrap() > 0);
}

fn record(step: u64) -> LabeledStep {
    LabeledStep {
        env: 0,
        episode: 0,
        step,
        base: vec![0.125; BASE_DIM],
        depth: vec![1.5; DEPTH_LEN],
        true_vel: [0.25, 0.0, 0.0],
        teacher_action: [0.0; 19],
        done: false,
    }
}

#[test]
fn damaged_files_are_quarantined_and_good_ones_trained() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config(dir.path(), PolicyDims::tiny());
    common::seed_teacher(&cfg);
    let ex = SnapshotExchange::open(&cfg.exchange_dir).unwrap();
    let good = TrajectoryFile::new(4, 0, (0..5).map(record).collect());
    good.write_atomic(&ex.trajectories_dir().join(file_name(4, 0))).unwrap();
    let bytes = good.to_bytes().unwrap();
    // A reader racing a non-atomic writer would see exactly this.
    std::fs::write(ex.trajectories_dir().join(file_name(5, 0)), &bytes[..bytes.len() / 2]).unwrap();
    std::fs::write(ex.trajectories_dir().join(file_name(6, 0)), b"not a trajectory").unwrap();
    let mut flipped = bytes.clone();
    let last = flipped.len() - 1;
    flipped[last] = 7;
    std::fs::write(ex.trajectories_dir().join(file_name(7, 0)), &flipped).unwrap();

    let r = trainer_loop(&cfg, &stop_after(2, 3)).unwrap();
    assert_eq!((r.updates, r.files_consumed, r.files_rejected, r.transitions), (1, 1, 3, 5));
    assert_eq!(names(&ex.consumed().unwrap()), vec![file_name(4, 0)]);
    assert_eq!(names(&ex.rejected().unwrap()), vec![file_name(5, 0), file_name(6, 0), file_name(7, 0)]);
    assert!(ex.pending().unwrap().is_empty());
}

#[test]
fn restarted_collector_clears_temps_and_continues_numbering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config(dir.path(), PolicyDims::tiny());
    common::seed_teacher(&cfg);
    let ex = SnapshotExchange::open(&cfg.exchange_dir).unwrap();
    let student = parkour::neural::policy::StudentPolicy::new(cfg.policy.clone(), 1);
    ex.publish_student(&student.store).unwrap();

    let first = collector_loop(&cfg, 2, &stop_after(2, 120)).unwrap();
    assert_eq!(first.files, 2);
    // What a kill during the third write leaves behind.
    let torn = ex.trajectories_dir().join(format!(".{}.4242.0.tmp", file_name(2, 2)));
    std::fs::write(&torn, b"partial").unwrap();
    assert!(ex.pending().unwrap().iter().all(|p| parse_file_name(&p.file_name().unwrap().to_string_lossy()).is_some()));

    let second = collector_loop(&cfg, 2, &stop_after(1, 120)).unwrap();
    assert_eq!(second.files, 1);
    assert!(!torn.exists());
    assert_eq!(names(&ex.pending().unwrap()), vec![file_name(2, 0), file_name(2, 1), file_name(2, 2)]);
    for p in ex.pending().unwrap() {
        assert_eq!(TrajectoryFile::read(&p).unwrap().header.count, 100);
    }
}
