//! Per-terrain success rate and distance on three-sub-track evaluation columns.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::curriculum::CurriculumState;
use crate::dynamics::{CONTROL_DT, NUM_JOINTS};
use crate::env::{EnvConfig, EnvMode, ParkourEnv, StepOutcome};
use crate::error::Result;
use crate::geom::Vec3;
use crate::neural::policy::{OraclePolicy, PolicyHidden, StudentPolicy};
use crate::neural::Tensor;
use crate::orchestration::deploy::{DeployConfig, DeploymentScheduler, SimCamera};
use crate::terrain::{assemble_track_grid, ObstacleKind, TrackLayout};

/// Drives one evaluation episode at a time.
pub trait Agent {
    /// Called at the start of every episode.
    fn reset(&mut self, env: &ParkourEnv);
    fn step(&mut self, env: &mut ParkourEnv) -> Result<StepOutcome>;
}

/// Scripted agent gliding along +x at constant speed, standing on the terrain.
#[derive(Clone, Copy, Debug)]
pub struct TeleportAgent {
    pub speed: f64,
}

impl Agent for TeleportAgent {
    fn reset(&mut self, _env: &ParkourEnv) {}

    fn step(&mut self, env: &mut ParkourEnv) -> Result<StepOutcome> {
        let p = env.state.base_pos;
        Ok(env.teleport(p.x + self.speed * CONTROL_DT, p.y, Vec3::ZERO))
    }
}

/// Scripted agent that tips over on its first step.
#[derive(Clone, Copy, Debug, Default)]
pub struct FallAgent;

impl Agent for FallAgent {
    fn reset(&mut self, _env: &ParkourEnv) {}

    fn step(&mut self, env: &mut ParkourEnv) -> Result<StepOutcome> {
        let p = env.state.base_pos;
        Ok(env.teleport(p.x, p.y, Vec3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0)))
    }
}

/// Teacher acting on privileged observations.
#[derive(Clone, Debug)]
pub struct OracleAgent {
    pub policy: Arc<OraclePolicy>,
    hidden: PolicyHidden,
}

impl OracleAgent {
    pub fn new(policy: Arc<OraclePolicy>) -> Self {
        let hidden = PolicyHidden::zeros(1, &policy.dims);
        OracleAgent { policy, hidden }
    }
}

impl Agent for OracleAgent {
    fn reset(&mut self, _env: &ParkourEnv) {
        self.hidden = PolicyHidden::zeros(1, &self.policy.dims);
    }

    fn step(&mut self, env: &mut ParkourEnv) -> Result<StepOutcome> {
        let obs = Tensor::row_vector(&env.privileged_observation());
        let (a, h) = self.policy.act(&obs, &self.hidden)?;
        self.hidden = h;
        let mut action = [0.0; NUM_JOINTS];
        action.copy_from_slice(&a.data);
        Ok(env.step(&action))
    }
}

/// Depth student under the two-rate deployment scheduler.
#[derive(Clone, Debug)]
pub struct StudentAgent {
    pub sched: DeploymentScheduler,
}

impl StudentAgent {
    pub fn new(policy: Arc<StudentPolicy>, cfg: DeployConfig) -> Result<Self> {
        Ok(StudentAgent {
            sched: DeploymentScheduler::new(cfg, policy)?,
        })
    }
}

impl Agent for StudentAgent {
    fn reset(&mut self, _env: &ParkourEnv) {
        self.sched.reset();
    }

    fn step(&mut self, env: &mut ParkourEnv) -> Result<StepOutcome> {
        Ok(self.sched.tick(env, &mut SimCamera)?.outcome)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TerrainResult {
    pub terrain: String,
    pub episodes: usize,
    /// Percent of episodes reaching the end of the column.
    pub success_rate: f64,
    /// Mean distance along the column in meters, capped at its length.
    pub average_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalTable {
    pub rows: Vec<TerrainResult>,
}

impl EvalTable {
    pub const CSV_HEADER: &'static str = "terrain,success_rate_percent,average_distance_m";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.1},{:.2}", r.terrain, r.success_rate, r.average_distance);
        }
        s
    }

    /// Terrain rows with success and distance columns.
    pub fn to_table(&self) -> String {
        let w = self.rows.iter().map(|r| r.terrain.len()).max().unwrap_or(0).max("Terrain".len());
        let mut s = String::new();
        let _ = writeln!(s, "| {:<w$} | {:>16} | {:>20} |", "Terrain", "Success Rate (%)", "Average Distance (m)");
        let _ = writeln!(s, "|{:-<w2$}|{:->18}|{:->22}|", "", "", "", w2 = w + 2);
        for r in &self.rows {
            let _ = writeln!(s, "| {:<w$} | {:>16.1} | {:>20.2} |", r.terrain, r.success_rate, r.average_distance);
        }
        s
    }
}

/// Evaluation layout for the given kinds in order (all ten when empty).
pub fn evaluation_layout(kinds: &[ObstacleKind]) -> Result<TrackLayout> {
    if kinds.is_empty() {
        TrackLayout::evaluation(&ObstacleKind::ALL)
    } else {
        TrackLayout::evaluation(kinds)
    }
}

/// Runs `episodes` episodes per column. Deterministic per `(agent, layout, seed)`.
pub fn evaluate(
    agent: &mut dyn Agent,
    layout: &TrackLayout,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<EvalTable> {
    let track = Arc::new(assemble_track_grid(layout, seed)?);
    let length = layout.track_length();
    let mut rows = Vec::with_capacity(layout.cols);
    for col in 0..layout.cols {
        let terrain = layout
            .cell(0, col)
            .map_or_else(|| "flat".to_string(), |s| s.kind.name().to_string());
        let cell = CurriculumState { row: 0, col };
        let mut env = ParkourEnv::new(env_cfg.clone(), EnvMode::Evaluate, track.clone(), cell, 0.0, seed ^ ((col as u64 + 1) << 20))?;
        let (mut successes, mut distance) = (0usize, 0.0);
        for _ in 0..episodes {
            agent.reset(&env);
            let stats = loop {
                let out = agent.step(&mut env)?;
                if let Some((stats, _)) = out.finished {
                    break stats;
                }
            };
            successes += stats.success as usize;
            distance += stats.distance_along_track.min(length);
        }
        rows.push(TerrainResult {
            terrain,
            episodes,
            success_rate: 100.0 * successes as f64 / episodes as f64,
            average_distance: distance / episodes as f64,
        });
    }
    Ok(EvalTable { rows })
}
