//! Collector and trainer processes of the distillation pipeline.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::curriculum::Stage;
use crate::env::{EnvMode, VecEnv};
use crate::error::{Error, Result};
use crate::learning::{dagger_label_from, distill_update, DistillBatch, DistillStats, StudentStep, DEPTH_LEN};
use crate::neural::policy::{OraclePolicy, PolicyHidden, StudentPolicy};
use crate::neural::{Adam, ParamStore};
use crate::orchestration::checkpoint::{Checkpoint, PolicyKind};
use crate::orchestration::config::RunConfig;
use crate::orchestration::deploy::{DeploymentScheduler, SimCamera};
use crate::orchestration::exchange::SnapshotExchange;
use crate::orchestration::trajectory::{file_name, TrajectoryFile};
use crate::terrain::assemble_track_grid;

/// When a worker loop should stop; unset limits never trigger.
#[derive(Clone, Debug, Default)]
pub struct StopWhen {
    pub max_items: Option<u64>,
    pub deadline: Option<Instant>,
    pub flag: Option<Arc<AtomicBool>>,
}

impl StopWhen {
    fn reached(&self, items: u64) -> bool {
        self.max_items.is_some_and(|m| items >= m)
            || self.deadline.is_some_and(|d| Instant::now() >= d)
            || self.flag.as_ref().is_some_and(|f| f.load(Ordering::Relaxed))
    }
}

/// Loads a snapshot, retrying with doubling delays while it is missing or unreadable.
pub fn load_with_retry(path: &Path, retries: u32, backoff: Duration) -> Result<ParamStore> {
    let mut delay = backoff;
    let mut attempt = 0;
    loop {
        match ParamStore::load(path) {
            Ok(s) => return Ok(s),
            Err(e) if attempt < retries => {
                log::warn!("snapshot {} not readable ({e}), retrying in {delay:?}", path.display());
                std::thread::sleep(delay);
                delay = (delay * 2).min(backoff * 16);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn worker_seed(seed: u64, id: u32) -> u64 {
    seed ^ 0xd1b5_4a32_d192_ed03_u64.wrapping_mul(id as u64 + 1)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CollectorReport {
    pub files: u64,
    pub transitions: u64,
    /// Student version used for each file, in order.
    pub versions: Vec<u64>,
}

/// Rolls out the newest student, labels with the teacher and writes one
/// trajectory file per `steps_per_file` control steps. Runs with whatever
/// snapshot is current rather than waiting for a new one.
pub fn collector_loop(cfg: &RunConfig, id: u32, stop: &StopWhen) -> Result<CollectorReport> {
    let d = &cfg.distill;
    let backoff = Duration::from_millis(d.retry_backoff_ms);
    let ex = SnapshotExchange::open(&cfg.exchange_dir)?;
    let stale = ex.remove_stale_temps(id)?;
    if stale > 0 {
        log::info!("collector {id}: removed {stale} stale temp files");
    }
    let teacher = OraclePolicy::from_store(cfg.policy.clone(), &load_with_retry(&cfg.teacher_path(), d.max_snapshot_retries, backoff)?)?;
    let store = load_with_retry(&ex.student_path(), d.max_snapshot_retries, backoff)?;
    let mut version = store.version;
    let mut student = Arc::new(StudentPolicy::from_store(cfg.policy.clone(), &store)?);

    let layout = cfg.terrain.layout(Stage::Parkour)?;
    let track = Arc::new(assemble_track_grid(&layout, cfg.seed)?);
    let seed = worker_seed(cfg.seed, id);
    let mut venv = VecEnv::new(&cfg.env, EnvMode::Train, track, d.envs_per_collector, seed)?;
    let mut scheds = (0..venv.len())
        .map(|_| DeploymentScheduler::new(cfg.deploy, student.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut teacher_hidden = vec![PolicyHidden::zeros(1, &teacher.dims); venv.len()];
    let mut steps = vec![0u64; venv.len()];
    let mut seq = ex.next_sequence(id)?;
    let mut report = CollectorReport::default();

    while !stop.reached(report.files) {
        match ex.published_version() {
            Ok(Some(v)) if v > version => match ParamStore::load(&ex.student_path()) {
                Ok(s) if s.version > version => {
                    version = s.version;
                    student = Arc::new(StudentPolicy::from_store(cfg.policy.clone(), &s)?);
                    for sc in &mut scheds {
                        sc.student = student.clone();
                    }
                }
                Ok(_) => {}
                Err(e) => log::warn!("collector {id}: keeping version {version}, reload failed: {e}"),
            },
            Ok(_) => {}
            Err(e) => log::warn!("collector {id}: cannot read published version: {e}"),
        }

        let mut trajs: Vec<Vec<StudentStep>> = vec![Vec::with_capacity(d.steps_per_file); venv.len()];
        let mut held_frames: Vec<Arc<Vec<f32>>> = vec![Arc::new(vec![0.0; DEPTH_LEN]); venv.len()];
        for _ in 0..d.steps_per_file {
            for (i, (env, sched)) in venv.envs.iter_mut().zip(&mut scheds).enumerate() {
                let privileged = env.privileged_observation();
                let true_vel = env.true_velocity();
                let episode = env.episode;
                let r = sched.tick(env, &mut SimCamera)?;
                if let Some(e) = &r.embedding {
                    held_frames[i] = e.frame.clone();
                }
                trajs[i].push(StudentStep {
                    base: r.base,
                    depth: held_frames[i].as_ref().clone(),
                    true_vel,
                    student_action: r.action,
                    privileged: Some(privileged),
                    done: r.outcome.done,
                    episode,
                    step: steps[i],
                });
                steps[i] = if r.outcome.done { 0 } else { steps[i] + 1 };
            }
        }
        let mut records = Vec::with_capacity(venv.len() * d.steps_per_file);
        for (i, traj) in trajs.iter().enumerate() {
            records.extend(dagger_label_from(&teacher, i as u32, traj, &mut teacher_hidden[i])?.steps);
        }
        let n = records.len() as u64;
        let file = TrajectoryFile::new(id, version, records);
        let path = ex.trajectories_dir().join(file_name(id, seq));
        if let Err(e) = file.write_atomic(&path) {
            ex.remove_stale_temps(id)?;
            log::error!("collector {id}: halting, cannot write {}: {e}", path.display());
            return Err(e);
        }
        seq += 1;
        report.files += 1;
        report.transitions += n;
        report.versions.push(version);
    }
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainerReport {
    pub updates: u64,
    pub files_consumed: u64,
    pub files_rejected: u64,
    pub transitions: u64,
    pub published: Vec<u64>,
    pub elapsed_s: f64,
    pub last: Option<DistillStats>,
}

impl TrainerReport {
    pub fn throughput(&self) -> f64 {
        if self.elapsed_s > 0.0 {
            self.transitions as f64 / self.elapsed_s
        } else {
            0.0
        }
    }
}

pub const TRAINER_CHECKPOINT: &str = "distill.pkckpt";

/// Consumes trajectory files exactly once, one distillation update per file,
/// publishing the student every `publish_every` updates. Resumes from the
/// published snapshot when one exists.
pub fn trainer_loop(cfg: &RunConfig, stop: &StopWhen) -> Result<TrainerReport> {
    let d = &cfg.distill;
    let ex = SnapshotExchange::open(&cfg.exchange_dir)?;
    let teacher = OraclePolicy::from_store(
        cfg.policy.clone(),
        &load_with_retry(&cfg.teacher_path(), d.max_snapshot_retries, Duration::from_millis(d.retry_backoff_ms))?,
    )?;
    let ckpt_path = cfg.output_dir.join(TRAINER_CHECKPOINT);
    let mut student = if ex.student_path().exists() {
        StudentPolicy::from_store(cfg.policy.clone(), &ex.load_student()?)?
    } else {
        let s = StudentPolicy::from_teacher(&teacher, cfg.seed)?;
        ex.publish_student(&s.store)?;
        s
    };
    let mut opt = Adam::new(&student.store, d.update.adam());
    if let Ok(c) = Checkpoint::load(&ckpt_path) {
        if c.manifest.kind == PolicyKind::Student && c.policy.version == student.store.version {
            if let Some(a) = c.adam {
                opt = a;
                opt.cfg = d.update.adam();
            }
        }
    }
    let poll = Duration::from_millis(d.poll_interval_ms);
    let start = Instant::now();
    let mut report = TrainerReport::default();
    let publish = |student: &StudentPolicy, opt: &Adam, report: &mut TrainerReport| -> Result<()> {
        if ex.published_version()? >= Some(student.store.version) {
            return Ok(());
        }
        crate::io_util::ensure_dir(&cfg.output_dir)?;
        Checkpoint::new(
            PolicyKind::Student,
            Stage::Parkour,
            report.updates,
            cfg.policy.clone(),
            student.store.clone(),
            Vec::new(),
            Some(opt.clone()),
        )
        .save(&ckpt_path)?;
        report.published.push(ex.publish_student(&student.store)?);
        Ok(())
    };

    'outer: while !stop.reached(report.updates) {
        let pending = ex.pending()?;
        if pending.is_empty() {
            std::thread::sleep(poll);
            continue;
        }
        for path in pending {
            if stop.reached(report.updates) {
                break 'outer;
            }
            let file = match TrajectoryFile::read(&path) {
                Ok(f) => f,
                Err(Error::Corrupt { reason, .. }) => {
                    log::error!("rejecting {}: {reason}", path.display());
                    ex.quarantine(&path)?;
                    report.files_rejected += 1;
                    continue;
                }
                Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => continue,
                Err(e) => return Err(e),
            };
            ex.mark_consumed(&path)?;
            report.files_consumed += 1;
            report.transitions += file.header.count;
            if file.records.is_empty() {
                continue;
            }
            let batch = DistillBatch::from_records(file.header.collector, file.header.policy_version, file.records);
            report.last = Some(distill_update(&mut student, &mut opt, &batch, &d.update)?);
            report.updates += 1;
            if report.updates % d.publish_every == 0 {
                publish(&student, &opt, &mut report)?;
            }
        }
    }
    publish(&student, &opt, &mut report)?;
    report.elapsed_s = start.elapsed().as_secs_f64();
    Ok(report)
}
