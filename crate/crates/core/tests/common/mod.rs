#![allow(dead_code)]

use std::path::Path;

use parkour::neural::policy::{OraclePolicy, PolicyDims};
use parkour::orchestration::config::{DistillRunConfig, TerrainConfig};
use parkour::orchestration::exchange::SnapshotExchange;
use parkour::orchestration::RunConfig;
use parkour::terrain::ObstacleKind;

/// Small but complete run configuration rooted at `dir`.
pub fn small_config(dir: &Path, dims: PolicyDims) -> RunConfig {
    RunConfig {
        exchange_dir: dir.join("exchange"),
        output_dir: dir.join("runs"),
        terrain: TerrainConfig {
            rows: 3,
            cols: 10,
            kinds: ObstacleKind::ALL.to_vec(),
            ..TerrainConfig::default()
        },
        policy: dims,
        distill: DistillRunConfig {
            envs_per_collector: 4,
            steps_per_file: 25,
            publish_every: 5,
            poll_interval_ms: 20,
            retry_backoff_ms: 20,
            ..DistillRunConfig::default()
        },
        ..RunConfig::default()
    }
}

/// Writes a randomly initialized teacher into the exchange.
pub fn seed_teacher(cfg: &RunConfig) -> OraclePolicy {
    let ex = SnapshotExchange::open(&cfg.exchange_dir).unwrap();
    let teacher = OraclePolicy::new(cfg.policy.clone(), cfg.seed);
    teacher.store.save(&ex.teacher_path()).unwrap();
    teacher
}
