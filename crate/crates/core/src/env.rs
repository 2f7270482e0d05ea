//! Training and evaluation environment: one surrogate robot on a shared track.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curriculum::{
    auto_command, curriculum_update, sample_command_with, Command, CommandRanges, CurriculumConfig, CurriculumState,
    Stage,
};
use crate::dynamics::{
    check_termination, record_fault, sample_domain_randomization, DomainRandomization, EpisodeStats, LatencyQueue,
    Progress, RobotState, Surrogate, TerminationConfig, CONTROL_DT, NUM_JOINTS,
};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::neural::policy::{oracle_obs, PROPRIO_DIM};
use crate::perception::{
    render_depth, sample_scandots, simulate_depth_noise, DepthImage, DepthNoiseConfig, RenderConfig, ScandotLayout,
    DEPTH_COLS, DEPTH_ROWS,
};
use crate::rewards::{link_contact_forces, point_kinematics, total_reward, BodyPointMesh, RewardBreakdown, RewardInputs, RewardWeights};
use crate::terrain::{SteppingTargets, Track, VirtualObstacle};

/// Observation scales for angular velocity and joint velocity.
pub const ANG_VEL_SCALE: f64 = 0.25;
pub const DOF_VEL_SCALE: f64 = 0.05;
/// Proprio and scandot history kept for latency lookups (s).
const LATENCY_HORIZON: f64 = 0.5;
/// Virtual obstacles farther than this from the base are skipped.
const OBSTACLE_RADIUS: f64 = 2.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub stage: Stage,
    pub episode_length_s: f64,
    pub commands: CommandRanges,
    pub curriculum: CurriculumConfig,
    pub rewards: RewardWeights,
    pub termination: TerminationConfig,
    pub domain_randomization: bool,
    pub safety_clip: bool,
    /// Steer toward the track axis instead of using the sampled yaw rate.
    pub auto_command: bool,
    /// Student depth rendering; training renders straight at the network resolution.
    pub render: RenderConfig,
    pub depth_noise: DepthNoiseConfig,
    pub mesh_lattice: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            stage: Stage::Parkour,
            episode_length_s: 20.0,
            commands: CommandRanges::default(),
            curriculum: CurriculumConfig::default(),
            rewards: RewardWeights::default(),
            termination: TerminationConfig::default(),
            domain_randomization: true,
            safety_clip: false,
            auto_command: true,
            render: RenderConfig {
                rows: DEPTH_ROWS,
                cols: DEPTH_COLS,
                ..RenderConfig::default()
            },
            depth_noise: DepthNoiseConfig {
                max_artifact_size: 1,
                ..DepthNoiseConfig::default()
            },
            mesh_lattice: 2,
        }
    }
}

impl EnvConfig {
    pub fn plane() -> Self {
        EnvConfig {
            stage: Stage::Plane,
            auto_command: false,
            ..EnvConfig::default()
        }
    }

    pub fn max_episode_steps(&self) -> u64 {
        (self.episode_length_s / CONTROL_DT).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.episode_length_s > 0.0) {
            return Err(Error::Config("episode_length_s must be positive".into()));
        }
        if self.mesh_lattice < 2 {
            return Err(Error::Config("mesh_lattice must be at least 2".into()));
        }
        if self.render.rows == 0 || self.render.cols == 0 {
            return Err(Error::Config("render resolution must be nonzero".into()));
        }
        Ok(())
    }
}

/// How episodes are laid out on the track.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvMode {
    /// One sub-track per episode; the row follows the curriculum.
    Train,
    /// Always start at row 0 and run the whole column.
    Evaluate,
}

/// Slot for an alternative gait shaping term evaluated on every control step.
pub trait GaitReward: Send + Sync {
    fn name(&self) -> &str;
    fn reward(&self, prev: &RobotState, cur: &RobotState, dt: f64) -> f64;
}

#[derive(Clone)]
pub struct GaitPlugin {
    pub reward: Arc<dyn GaitReward>,
    pub weight: f64,
}

impl std::fmt::Debug for GaitPlugin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaitPlugin")
            .field("name", &self.reward.name())
            .field("weight", &self.weight)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub done: bool,
    pub timeout: bool,
    /// Stats and curriculum cell of the episode that just ended.
    pub finished: Option<(EpisodeStats, CurriculumState)>,
    /// Joint targets fed to the PD law this tick.
    pub targets: [f64; NUM_JOINTS],
}

#[derive(Clone, Debug)]
pub struct ParkourEnv {
    pub cfg: EnvConfig,
    pub mode: EnvMode,
    pub track: Arc<Track>,
    pub sim: Surrogate,
    pub mesh: BodyPointMesh,
    pub layout: ScandotLayout,
    pub state: RobotState,
    pub last_action: [f64; NUM_JOINTS],
    pub base_command: Command,
    pub command: Command,
    pub curriculum: CurriculumState,
    pub progress: Progress,
    pub stats: EpisodeStats,
    pub episode: u64,
    pub gait: Option<GaitPlugin>,
    proprio: LatencyQueue<Vec<f64>>,
    nominal_height: f64,
    rng: ChaCha8Rng,
}

impl ParkourEnv {
    pub fn new(cfg: EnvConfig, mode: EnvMode, track: Arc<Track>, cell: CurriculumState, yaw: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cell.row >= track.layout.rows || cell.col >= track.layout.cols {
            return Err(Error::Config(format!("cell ({}, {}) outside the track", cell.row, cell.col)));
        }
        let sim = Surrogate::new(DomainRandomization::default());
        let nominal_height = {
            let flat = crate::terrain::HeightField::flat((-1.0, -1.0), 0.05, 40, 40, 0.0)?;
            sim.initial_state(&flat, 0.0, 0.0, 0.0).base_pos.z
        };
        let mesh = BodyPointMesh::lattice(cfg.mesh_lattice);
        let state = sim.initial_state(&track.field, 0.0, 0.0, 0.0);
        let mut env = ParkourEnv {
            cfg,
            mode,
            track,
            sim,
            mesh,
            layout: ScandotLayout::default(),
            state,
            last_action: [0.0; NUM_JOINTS],
            base_command: Command::default(),
            command: Command::default(),
            curriculum: cell,
            progress: Progress {
                start_x: 0.0,
                track_length: 0.0,
            },
            stats: EpisodeStats::default(),
            episode: 0,
            gait: None,
            proprio: LatencyQueue::new(LATENCY_HORIZON),
            nominal_height,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset_episode(yaw);
        Ok(env)
    }

    /// Starts a new episode at the current curriculum cell.
    pub fn reset_episode(&mut self, yaw: f64) {
        let dr = if self.cfg.domain_randomization {
            sample_domain_randomization(self.rng.random())
        } else {
            DomainRandomization::default()
        };
        self.sim = Surrogate::new(dr);
        self.sim.safety_clip = self.cfg.safety_clip;
        let row = match self.mode {
            EnvMode::Train => self.curriculum.row,
            EnvMode::Evaluate => 0,
        };
        let (x0, _) = self.track.cell_origin(row, self.curriculum.col);
        let spawn = match self.mode {
            EnvMode::Train => self.track.spawn_point(row, self.curriculum.col),
            // Distance is measured from the track entrance.
            EnvMode::Evaluate => self.track.spawn_point(row, self.curriculum.col) - Vec3::new(self.track.geometry().start_plane_length / 2.0, 0.0, 0.0),
        };
        self.state = self.sim.initial_state(&self.track.field, spawn.x, spawn.y, yaw);
        let g = self.track.geometry();
        self.progress = Progress {
            start_x: x0,
            track_length: match self.mode {
                EnvMode::Train => g.length,
                EnvMode::Evaluate => self.track.layout.track_length(),
            },
        };
        self.stats = EpisodeStats::default();
        self.last_action = [0.0; NUM_JOINTS];
        self.base_command = sample_command_with(&mut self.rng, self.cfg.stage, &self.cfg.commands);
        self.update_command();
        self.proprio.clear();
        self.proprio.push(self.state.time, self.proprio_now());
    }

    fn update_command(&mut self) {
        self.command = if self.cfg.auto_command {
            auto_command(
                0.0,
                self.state.base_rpy.z,
                self.base_command,
                self.cfg.curriculum.alpha_yaw,
                self.cfg.commands.yaw_rate,
            )
        } else {
            self.base_command
        };
    }

    /// `roll, pitch, angvel, q - default, qd` without latency.
    pub fn proprio_now(&self) -> Vec<f64> {
        let s = &self.state;
        let default = self.sim.joints.default_pose();
        let mut p = Vec::with_capacity(PROPRIO_DIM);
        p.push(s.base_rpy.x);
        p.push(s.base_rpy.y);
        p.extend(s.base_angvel.to_array().iter().map(|w| w * ANG_VEL_SCALE));
        p.extend(s.q.iter().zip(&default).map(|(q, d)| q - d));
        p.extend(s.qd.iter().map(|v| v * DOF_VEL_SCALE));
        p
    }

    /// Delayed proprio, last action and command: the student's non-visual input.
    pub fn base_observation(&self) -> Vec<f64> {
        let delayed = self
            .proprio
            .get(self.sim.dr.proprio_latency, self.state.time)
            .cloned()
            .unwrap_or_else(|| self.proprio_now());
        let mut o = delayed;
        o.extend_from_slice(&self.last_action);
        o.extend_from_slice(&self.command.to_array());
        o
    }

    /// Scandots around the current pose, shifted by the standing height and clipped.
    pub fn scandots(&self) -> Vec<f64> {
        let g = sample_scandots(&self.track.field, &self.state.pose(), &self.layout);
        g.values.iter().map(|v| (v + self.nominal_height).clamp(-1.0, 1.0)).collect()
    }

    pub fn true_velocity(&self) -> [f64; 3] {
        self.state.body_linvel().to_array()
    }

    /// Privileged teacher observation in [`oracle_obs`] layout.
    pub fn privileged_observation(&self) -> Vec<f64> {
        let mut o = self.base_observation();
        o.extend(self.scandots());
        o.extend_from_slice(&self.true_velocity());
        debug_assert_eq!(o.len(), oracle_obs::LEN);
        o
    }

    /// Noisy depth frame from the randomized camera.
    pub fn depth_image(&mut self) -> DepthImage {
        let img = render_depth(&self.track.field, &self.sim.dr.camera, &self.state.pose(), &self.cfg.render);
        let seed = self.rng.random();
        simulate_depth_noise(&img, &self.cfg.depth_noise, seed)
    }

    fn nearby_obstacles(&self) -> Vec<VirtualObstacle> {
        let p = self.state.base_pos;
        self.track
            .virtual_obstacles
            .iter()
            .filter(|o| {
                p.x >= o.min.x - OBSTACLE_RADIUS
                    && p.x <= o.max.x + OBSTACLE_RADIUS
                    && p.y >= o.min.y - OBSTACLE_RADIUS
                    && p.y <= o.max.y + OBSTACLE_RADIUS
            })
            .copied()
            .collect()
    }

    /// Applies one policy action. Ends and resets the episode on termination.
    pub fn step(&mut self, action: &[f64; NUM_JOINTS]) -> StepOutcome {
        let targets = self.sim.targets_from_action(action);
        self.step_targets(action, targets)
    }

    /// Actuates explicit joint targets (safety clipping still applies when
    /// enabled). `action` is what the policy emitted; it is what rewards and
    /// the next observation see.
    pub fn step_targets(&mut self, action: &[f64; NUM_JOINTS], mut targets: [f64; NUM_JOINTS]) -> StepOutcome {
        let prev = self.state.clone();
        let prev_action = self.last_action;
        let stepped = self.sim.step_targets(&prev, &mut targets, &self.track.field);
        let (reward, fault, applied) = match stepped {
            Ok((next, info)) => {
                self.state = next;
                let points = point_kinematics(&self.mesh, &prev, &self.state, &self.sim.params, CONTROL_DT);
                let link_forces = link_contact_forces(&self.mesh, &points, &self.track.field, self.sim.params.k_contact);
                let body_forces: Vec<f64> = self
                    .mesh
                    .links
                    .iter()
                    .zip(&link_forces)
                    .filter(|(l, _)| !l.is_foot)
                    .map(|(_, f)| *f)
                    .collect();
                let obstacles = self.nearby_obstacles();
                let touchdowns: Vec<(Vec3, Option<&SteppingTargets>)> = info
                    .touchdowns
                    .iter()
                    .flatten()
                    .map(|p| (*p, self.track.stepping_targets_at(p.x, p.y)))
                    .collect();
                let mut r = total_reward(
                    &RewardInputs {
                        state: &self.state,
                        prev_state: &prev,
                        action,
                        prev_action: &prev_action,
                        command: self.command.to_array(),
                        joints: &self.sim.joints,
                        dt: CONTROL_DT,
                        mesh_points: &points,
                        body_contact_forces: &body_forces,
                        obstacles: &obstacles,
                        touchdowns: &touchdowns,
                    },
                    &self.cfg.rewards,
                );
                if let Some(p) = &self.gait {
                    r.total += p.weight * p.reward.reward(&prev, &self.state, CONTROL_DT);
                }
                (r, false, info.targets)
            }
            Err(_) => (self.zero_reward(), true, targets),
        };
        self.last_action = *action;
        self.conclude(reward, fault, applied)
    }

    /// Places the robot in its default pose on the terrain at `(x, y)` with
    /// orientation `rpy`, for scripted agents. No reward is produced.
    pub fn teleport(&mut self, x: f64, y: f64, rpy: Vec3) -> StepOutcome {
        let prev = self.state.clone();
        let mut next = self.sim.initial_state(&self.track.field, x, y, rpy.z);
        next.base_rpy = rpy;
        next.time = prev.time + CONTROL_DT;
        next.base_linvel = (next.base_pos - prev.base_pos) * (1.0 / CONTROL_DT);
        self.state = next;
        self.last_action = [0.0; NUM_JOINTS];
        let targets = self.state.q;
        let reward = self.zero_reward();
        self.conclude(reward, false, targets)
    }

    fn zero_reward(&self) -> RewardBreakdown {
        crate::rewards::combine([0.0; crate::rewards::NUM_TERMS], &self.cfg.rewards)
    }

    fn conclude(&mut self, reward: RewardBreakdown, fault: bool, targets: [f64; NUM_JOINTS]) -> StepOutcome {
        let mut done = if fault {
            record_fault(&mut self.stats);
            self.stats.steps += 1;
            true
        } else {
            check_termination(&self.state, &self.track.field, &self.progress, &self.cfg.termination, &mut self.stats)
        };
        let timeout = !done && self.stats.steps >= self.cfg.max_episode_steps();
        done |= timeout;
        let finished = if done {
            let out = (self.stats, self.curriculum);
            self.finish_episode();
            Some(out)
        } else {
            self.update_command();
            self.proprio.push(self.state.time, self.proprio_now());
            None
        };
        StepOutcome {
            reward,
            done,
            timeout,
            finished,
            targets,
        }
    }

    fn finish_episode(&mut self) {
        if self.mode == EnvMode::Train {
            let rows = self.track.layout.rows;
            let l = self.track.geometry().length;
            self.curriculum = curriculum_update(
                self.curriculum,
                &self.stats,
                self.base_command.vx,
                l,
                rows,
                &self.cfg.curriculum,
                &mut self.rng,
            );
        }
        self.episode += 1;
        let yaw = match self.mode {
            EnvMode::Train => -self.rng.random_range(-PI..PI),
            EnvMode::Evaluate => 0.0,
        };
        self.reset_episode(yaw);
    }
}

/// A batch of environments stepped together.
#[derive(Clone, Debug)]
pub struct VecEnv {
    pub envs: Vec<ParkourEnv>,
}

impl VecEnv {
    /// Environments spread over the track columns by [`crate::curriculum::assign_environments`].
    pub fn new(cfg: &EnvConfig, mode: EnvMode, track: Arc<Track>, num_envs: usize, seed: u64) -> Result<Self> {
        let cells = crate::curriculum::assign_environments(num_envs, &track.layout, seed);
        let envs = cells
            .into_iter()
            .enumerate()
            .map(|(i, (cell, yaw))| {
                let yaw = if mode == EnvMode::Evaluate { 0.0 } else { yaw };
                ParkourEnv::new(cfg.clone(), mode, track.clone(), cell, yaw, seed ^ (0x5851_f42d_4c95_7f2d_u64.wrapping_mul(i as u64 + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(VecEnv { envs })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    /// Row-major `N x 277` privileged observations.
    pub fn privileged_observations(&self) -> Vec<f64> {
        self.envs.iter().flat_map(|e| e.privileged_observation()).collect()
    }

    pub fn base_observations(&self) -> Vec<f64> {
        self.envs.iter().flat_map(|e| e.base_observation()).collect()
    }

    /// `actions` is row-major `N x 19`.
    pub fn step(&mut self, actions: &[f64]) -> Vec<StepOutcome> {
        assert_eq!(actions.len(), self.envs.len() * NUM_JOINTS);
        self.envs
            .par_iter_mut()
            .zip(actions.par_chunks(NUM_JOINTS))
            .map(|(e, a)| {
                let mut arr = [0.0; NUM_JOINTS];
                arr.copy_from_slice(a);
                e.step(&arr)
            })
            .collect()
    }

    pub fn mean_row(&self) -> f64 {
        if self.envs.is_empty() {
            return 0.0;
        }
        self.envs.iter().map(|e| e.curriculum.row as f64).sum::<f64>() / self.envs.len() as f64
    }
}
