//! Single TOML run configuration covering every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curriculum::Stage;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::learning::{DistillConfig, PpoConfig};
use crate::neural::policy::PolicyDims;
use crate::orchestration::deploy::DeployConfig;
use crate::terrain::{DifficultySpacing, FractalNoise, ObstacleKind, SubtrackGeometry, TrackLayout};

/// Overrides `exchange_dir`.
pub const EXCHANGE_DIR_ENV: &str = "PARKOUR_EXCHANGE_DIR";
/// Overrides `seed`.
pub const SEED_ENV: &str = "PARKOUR_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainConfig {
    /// Difficulty levels along each column.
    pub rows: usize,
    pub cols: usize,
    /// Column `j` gets `kinds[j % kinds.len()]`.
    pub kinds: Vec<ObstacleKind>,
    pub geometry: SubtrackGeometry,
    pub noise: FractalNoise,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        TerrainConfig {
            rows: 10,
            cols: 40,
            kinds: ObstacleKind::ALL.to_vec(),
            geometry: SubtrackGeometry::default(),
            noise: FractalNoise::default(),
        }
    }
}

impl TerrainConfig {
    /// Flat noisy grid for the plane stage, obstacle grid otherwise.
    pub fn layout(&self, stage: Stage) -> Result<TrackLayout> {
        let layout = match stage {
            Stage::Plane => TrackLayout::flat(self.rows, self.cols, self.geometry, self.noise),
            Stage::Parkour => TrackLayout::grid(
                self.rows,
                self.cols,
                &self.kinds,
                DifficultySpacing::Curriculum,
                self.geometry,
                self.noise,
            )?,
        };
        layout.validate()?;
        Ok(layout)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub num_envs: usize,
    pub iterations: u64,
    /// Write a checkpoint every this many iterations; 0 only at the end.
    pub checkpoint_every: u64,
    /// Checkpoint to start from (stage hand-off).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_envs: 64,
            iterations: 1000,
            checkpoint_every: 50,
            init_checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillRunConfig {
    pub collectors: usize,
    pub envs_per_collector: usize,
    /// Control steps per environment in one trajectory file.
    pub steps_per_file: usize,
    /// Publish the student snapshot every this many updates.
    pub publish_every: u64,
    pub poll_interval_ms: u64,
    /// Delay before the first snapshot retry; doubles up to 16x.
    pub retry_backoff_ms: u64,
    pub max_snapshot_retries: u32,
    /// Teacher snapshot; defaults to `teacher.pkpolicy` in the exchange directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher: Option<PathBuf>,
    pub update: DistillConfig,
}

impl Default for DistillRunConfig {
    fn default() -> Self {
        DistillRunConfig {
            collectors: 3,
            envs_per_collector: 4,
            steps_per_file: 24,
            publish_every: 50,
            poll_interval_ms: 100,
            retry_backoff_ms: 100,
            max_snapshot_retries: 50,
            teacher: None,
            update: DistillConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes_per_terrain: usize,
    /// Domain randomization during evaluation.
    pub domain_randomization: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes_per_terrain: 20,
            domain_randomization: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; workers derive their own streams from it.
    pub seed: u64,
    pub exchange_dir: PathBuf,
    pub output_dir: PathBuf,
    pub terrain: TerrainConfig,
    pub env: EnvConfig,
    pub policy: PolicyDims,
    pub ppo: PpoConfig,
    pub train: TrainConfig,
    pub distill: DistillRunConfig,
    pub eval: EvalConfig,
    pub deploy: DeployConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            exchange_dir: PathBuf::from("exchange"),
            output_dir: PathBuf::from("runs"),
            terrain: TerrainConfig::default(),
            env: EnvConfig::default(),
            policy: PolicyDims::default(),
            ppo: PpoConfig::default(),
            train: TrainConfig::default(),
            distill: DistillRunConfig::default(),
            eval: EvalConfig::default(),
            deploy: DeployConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    /// Reads `path` (or the defaults when `None`) and applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml_str(&text)?
            }
            None => RunConfig::default(),
        };
        cfg.with_overrides(|k| std::env::var(k).ok())
    }

    pub fn with_overrides(mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Self> {
        if let Some(dir) = lookup(EXCHANGE_DIR_ENV).filter(|s| !s.is_empty()) {
            self.exchange_dir = PathBuf::from(dir);
        }
        if let Some(s) = lookup(SEED_ENV).filter(|s| !s.is_empty()) {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {s:?}")))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        self.terrain.geometry.validate()?;
        self.terrain.noise.validate()?;
        self.deploy.validate()?;
        if self.terrain.rows == 0 || self.terrain.cols == 0 || self.terrain.kinds.is_empty() {
            return Err(Error::Config("terrain needs rows, cols and at least one kind".into()));
        }
        if self.train.num_envs == 0 {
            return Err(Error::Config("train.num_envs must be positive".into()));
        }
        let d = &self.distill;
        if d.collectors == 0 || d.envs_per_collector == 0 || d.steps_per_file == 0 {
            return Err(Error::Config("distill worker counts and steps_per_file must be positive".into()));
        }
        if d.publish_every == 0 || d.poll_interval_ms == 0 {
            return Err(Error::Config("distill.publish_every and poll_interval_ms must be positive".into()));
        }
        if !(d.update.lr > 0.0) {
            return Err(Error::Config("distill.update.lr must be positive".into()));
        }
        if self.eval.episodes_per_terrain == 0 {
            return Err(Error::Config("eval.episodes_per_terrain must be positive".into()));
        }
        Ok(())
    }

    pub fn teacher_path(&self) -> PathBuf {
        self.distill
            .teacher
            .clone()
            .unwrap_or_else(|| self.exchange_dir.join(crate::orchestration::exchange::TEACHER_FILE))
    }
}
