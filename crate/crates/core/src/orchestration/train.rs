//! Oracle training stages: plane walking, then parkour fine-tuning from it.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::curriculum::Stage;
use crate::env::{EnvConfig, EnvMode, VecEnv};
use crate::error::{Error, Result};
use crate::learning::{MetricsLogger, PpoLearner};
use crate::neural::policy::OraclePolicy;
use crate::orchestration::checkpoint::{Checkpoint, PolicyKind};
use crate::orchestration::config::RunConfig;
use crate::terrain::assemble_track_grid;

pub const METRICS_FILE: &str = "metrics.csv";
pub const POLICY_FILE: &str = "policy.pkpolicy";

pub fn checkpoint_name(stage: Stage) -> String {
    match stage {
        Stage::Plane => "plane.pkckpt".into(),
        Stage::Parkour => "parkour.pkckpt".into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub iterations: u64,
    pub final_mean_reward: f64,
    pub checkpoint: PathBuf,
    pub policy: PathBuf,
    pub metrics: PathBuf,
}

/// Stage-specific environment settings layered over the configured ones.
pub fn stage_env(cfg: &EnvConfig, stage: Stage) -> EnvConfig {
    let mut e = cfg.clone();
    e.stage = stage;
    if stage == Stage::Plane {
        e.auto_command = false;
    }
    e
}

/// Runs PPO for `cfg.train.iterations`, writing metrics, periodic checkpoints
/// and the final teacher snapshot into `out_dir`. With `init`, the policy is
/// loaded from that checkpoint; optimizer moments and curriculum cells are
/// restored only when it belongs to the same stage.
pub fn train_stage(cfg: &RunConfig, stage: Stage, init: Option<&Path>, out_dir: &Path) -> Result<TrainReport> {
    crate::io_util::ensure_dir(out_dir)?;
    let env_cfg = stage_env(&cfg.env, stage);
    let layout = cfg.terrain.layout(stage)?;
    let track = Arc::new(assemble_track_grid(&layout, cfg.seed)?);
    let n = cfg.train.num_envs;
    let mut venv = VecEnv::new(&env_cfg, EnvMode::Train, track, n, cfg.seed)?;
    let mut policy = OraclePolicy::new(cfg.policy.clone(), cfg.seed);
    let mut resume = None;
    if let Some(path) = init {
        let c = Checkpoint::load(path)?;
        if c.manifest.kind != PolicyKind::Oracle {
            return Err(Error::Config(format!("{} is not an oracle checkpoint", path.display())));
        }
        policy.store.load_values(&c.policy)?;
        if c.manifest.stage == stage {
            resume = Some(c);
        }
    }
    let mut learner = PpoLearner::new(policy, cfg.ppo, n)?;
    if let Some(c) = resume {
        if let Some(a) = c.adam {
            learner.opt = a;
            learner.opt.cfg = cfg.ppo.adam();
        }
        learner.iteration = c.manifest.iteration;
        if c.curriculum.len() == n {
            for (e, cell) in venv.envs.iter_mut().zip(&c.curriculum) {
                if cell.row < layout.rows && cell.col < layout.cols {
                    e.curriculum = *cell;
                    e.reset_episode(0.0);
                }
            }
        }
    }
    let metrics_path = out_dir.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut metrics = MetricsLogger::new(BufWriter::new(file))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ learner.iteration);
    let ckpt_path = out_dir.join(checkpoint_name(stage));
    let save = |learner: &PpoLearner<OraclePolicy>, venv: &VecEnv| {
        Checkpoint::new(
            PolicyKind::Oracle,
            stage,
            learner.iteration,
            cfg.policy.clone(),
            learner.policy.store.clone(),
            venv.envs.iter().map(|e| e.curriculum).collect(),
            Some(learner.opt.clone()),
        )
        .save(&ckpt_path)
    };
    let mut last_reward = f64::NAN;
    for _ in 0..cfg.train.iterations {
        let (buf, stats) = learner.iterate(&mut venv, &mut rng)?;
        last_reward = buf.mean_reward();
        metrics.log(learner.iteration, &buf, &stats, venv.mean_row())?;
        log::info!(
            "iteration {} reward {:.4} row {:.2} kl {:.5}",
            learner.iteration,
            last_reward,
            venv.mean_row(),
            stats.approx_kl
        );
        if cfg.train.checkpoint_every > 0 && learner.iteration % cfg.train.checkpoint_every == 0 {
            save(&learner, &venv)?;
        }
    }
    save(&learner, &venv)?;
    let policy_path = out_dir.join(POLICY_FILE);
    learner.policy.store.save(&policy_path)?;
    Ok(TrainReport {
        iterations: learner.iteration,
        final_mean_reward: last_reward,
        checkpoint: ckpt_path,
        policy: policy_path,
        metrics: metrics_path,
    })
}
