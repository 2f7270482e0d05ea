//! Trainer/collector distillation over a shared directory, evaluation, the
//! two-rate deployment loop, checkpoints and the run configuration.

pub mod checkpoint;
pub mod config;
pub mod deploy;
pub mod distill;
pub mod evaluate;
pub mod exchange;
pub mod train;
pub mod trajectory;

pub use checkpoint::{Checkpoint, Manifest, PolicyKind};
pub use config::RunConfig;
pub use deploy::{arm_override, DeployConfig, DeploymentScheduler, SimCamera, VisionSource};
pub use distill::{collector_loop, trainer_loop, CollectorReport, StopWhen, TrainerReport};
pub use evaluate::{evaluate, evaluation_layout, Agent, EvalTable, FallAgent, OracleAgent, StudentAgent, TeleportAgent};
pub use exchange::{Ledger, SnapshotExchange};
pub use train::{train_stage, TrainReport};
pub use trajectory::{replay_csv, TrajectoryFile, TrajectoryHeader};
