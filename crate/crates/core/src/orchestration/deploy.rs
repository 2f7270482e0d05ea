//! Two-rate student execution: a slow vision path producing depth embeddings
//! and a fast recurrent actor that reuses the newest embedding old enough to
//! respect the camera latency.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{JointConfig, LatencyQueue, ARM_JOINTS, CONTROL_DT, NUM_JOINTS};
use crate::env::{ParkourEnv, StepOutcome};
use crate::error::{Error, Result};
use crate::neural::policy::{PolicyHidden, StudentPolicy};
use crate::neural::Tensor;
use crate::perception::DepthImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeployConfig {
    pub vision_hz: f64,
    /// Must equal the control rate of the environment.
    pub actor_hz: f64,
    /// Vision silence longer than this puts the scheduler in degraded mode (s).
    pub stall_timeout_s: f64,
    /// Fail with a degraded-mode error instead of holding the last target.
    pub abort_on_degraded: bool,
}

impl Default for DeployConfig {
    fn default() -> Self {
        DeployConfig {
            vision_hz: 10.0,
            actor_hz: 50.0,
            stall_timeout_s: 0.5,
            abort_on_degraded: false,
        }
    }
}

impl DeployConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.actor_hz * CONTROL_DT - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("deploy.actor_hz must be {}", 1.0 / CONTROL_DT)));
        }
        let ratio = self.actor_hz / self.vision_hz;
        if !(self.vision_hz > 0.0) || ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config("deploy.vision_hz must divide actor_hz".into()));
        }
        if !(self.stall_timeout_s > 0.0) {
            return Err(Error::Config("deploy.stall_timeout_s must be positive".into()));
        }
        Ok(())
    }

    /// Actor ticks per vision tick.
    pub fn vision_period(&self) -> u64 {
        (self.actor_hz / self.vision_hz).round() as u64
    }
}

/// Produces depth frames for the vision path; `None` means no frame arrived.
pub trait VisionSource {
    fn capture(&mut self, env: &mut ParkourEnv) -> Option<DepthImage>;
}

/// Simulated camera with the environment's noise model.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimCamera;

impl VisionSource for SimCamera {
    fn capture(&mut self, env: &mut ParkourEnv) -> Option<DepthImage> {
        Some(env.depth_image())
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    /// Counts vision ticks since the scheduler was created.
    pub version: u64,
    pub frame_time: f64,
    pub values: Tensor,
    pub frame: Arc<Vec<f32>>,
}

/// Replaces the arm entries of `targets` with `arm`, clamped to joint limits.
/// Leg and waist entries are returned untouched.
pub fn arm_override(targets: &[f64; NUM_JOINTS], arm: &[f64; ARM_JOINTS.len()], joints: &JointConfig) -> [f64; NUM_JOINTS] {
    let mut out = *targets;
    for (k, &j) in ARM_JOINTS.iter().enumerate() {
        let joint = &joints.joints[j];
        let v = arm[k].clamp(joint.lower, joint.upper);
        if v != arm[k] {
            log::warn!("arm override {} = {} outside [{}, {}], clamped", joint.name, arm[k], joint.lower, joint.upper);
        }
        out[j] = v;
    }
    out
}

#[derive(Clone, Debug)]
pub struct TickReport {
    /// Simulated time at which the actor ran.
    pub time: f64,
    pub vision_ticked: bool,
    /// Embedding the actor used, `None` when holding during degraded mode.
    pub embedding: Option<Embedding>,
    pub action: [f64; NUM_JOINTS],
    pub degraded: bool,
    /// Observation the actor consumed.
    pub base: Vec<f64>,
    pub outcome: StepOutcome,
}

#[derive(Clone, Debug)]
pub struct DeploymentScheduler {
    pub cfg: DeployConfig,
    pub student: Arc<StudentPolicy>,
    pub arm: Option<[f64; ARM_JOINTS.len()]>,
    embeddings: LatencyQueue<Embedding>,
    hidden: PolicyHidden,
    tick: u64,
    vision_ticks: u64,
    last_frame: Option<f64>,
    last_action: [f64; NUM_JOINTS],
    degraded: bool,
}

impl DeploymentScheduler {
    pub fn new(cfg: DeployConfig, student: Arc<StudentPolicy>) -> Result<Self> {
        cfg.validate()?;
        let hidden = PolicyHidden::zeros(1, &student.dims);
        Ok(DeploymentScheduler {
            cfg,
            student,
            arm: None,
            embeddings: LatencyQueue::new(1.0),
            hidden,
            tick: 0,
            vision_ticks: 0,
            last_frame: None,
            last_action: [0.0; NUM_JOINTS],
            degraded: false,
        })
    }

    pub fn with_arm_override(mut self, arm: [f64; ARM_JOINTS.len()]) -> Self {
        self.arm = Some(arm);
        self
    }

    pub fn degraded(&self) -> bool {
        self.degraded
    }

    pub fn vision_ticks(&self) -> u64 {
        self.vision_ticks
    }

    /// Clears per-episode state; embedding versions keep counting.
    pub fn reset(&mut self) {
        self.embeddings.clear();
        self.hidden = PolicyHidden::zeros(1, &self.student.dims);
        self.tick = 0;
        self.last_frame = None;
        self.last_action = [0.0; NUM_JOINTS];
        self.degraded = false;
    }

    /// One 50 Hz actor tick; the vision path runs first on its own cadence.
    /// Targets go through [`arm_override`] and then the environment's safety clip.
    pub fn tick(&mut self, env: &mut ParkourEnv, camera: &mut impl VisionSource) -> Result<TickReport> {
        env.sim.safety_clip = true;
        let now = env.state.time;
        let vision_ticked = self.tick % self.cfg.vision_period() == 0;
        if vision_ticked {
            if let Some(img) = camera.capture(env) {
                let frame: Vec<f32> = img.pixels.iter().map(|&p| p as f32).collect();
                let values = self.student.depth_embedding(&Tensor::row_vector(&img.pixels))?;
                self.vision_ticks += 1;
                self.embeddings.push(
                    now,
                    Embedding {
                        version: self.vision_ticks,
                        frame_time: now,
                        values,
                        frame: Arc::new(frame),
                    },
                );
                self.last_frame = Some(now);
            }
        }
        let silent_for = match self.last_frame {
            Some(f) => now - f,
            None => self.tick as f64 * CONTROL_DT,
        };
        let stalled = self.last_frame.is_none() || silent_for > self.cfg.stall_timeout_s + 1e-9;
        let base = env.base_observation();
        let (action, embedding) = if stalled {
            if !self.degraded {
                log::warn!("vision path silent for {silent_for:.3} s, holding last target");
            }
            self.degraded = true;
            if self.cfg.abort_on_degraded {
                return Err(Error::Degraded(format!("no depth frame for {silent_for:.3} s")));
            }
            (self.last_action, None)
        } else {
            self.degraded = false;
            let emb = self
                .embeddings
                .get(env.sim.dr.depth_latency, now)
                .cloned()
                .expect("a frame was received");
            let (a, h) = self.student.act(&Tensor::row_vector(&base), &emb.values, &self.hidden)?;
            self.hidden = h;
            let mut action = [0.0; NUM_JOINTS];
            action.copy_from_slice(&a.data);
            (action, Some(emb))
        };
        let mut targets = env.sim.targets_from_action(&action);
        if let Some(arm) = &self.arm {
            targets = arm_override(&targets, arm, &env.sim.joints);
        }
        let outcome = env.step_targets(&action, targets);
        self.last_action = action;
        self.tick += 1;
        let degraded = self.degraded;
        if outcome.done {
            self.reset();
        }
        Ok(TickReport {
            time: now,
            vision_ticked,
            embedding,
            action,
            degraded,
            base,
            outcome,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::CurriculumState;
    use crate::env::{EnvConfig, EnvMode};
    use crate::neural::policy::PolicyDims;
    use crate::terrain::{assemble_track_grid, FractalNoise, SubtrackGeometry, TrackLayout};

    fn env() -> ParkourEnv {
        let layout = TrackLayout::flat(1, 1, SubtrackGeometry::default(), FractalNoise::none());
        let track = Arc::new(assemble_track_grid(&layout, 0).unwrap());
        let cfg = EnvConfig {
            domain_randomization: false,
            episode_length_s: 100.0,
            ..EnvConfig::default()
        };
        ParkourEnv::new(cfg, EnvMode::Train, track, CurriculumState { row: 0, col: 0 }, 0.0, 1).unwrap()
    }

    fn student() -> Arc<StudentPolicy> {
        Arc::new(StudentPolicy::new(PolicyDims::tiny(), 4))
    }

    struct Flaky {
        until: f64,
    }

    impl VisionSource for Flaky {
        fn capture(&mut self, env: &mut ParkourEnv) -> Option<DepthImage> {
            (env.state.time < self.until).then(|| env.depth_image())
        }
    }

    #[test]
    fn one_second_has_fifty_actor_and_ten_vision_ticks() {
        let mut e = env();
        let mut s = DeploymentScheduler::new(DeployConfig::default(), student()).unwrap();
        let mut vision = 0;
        let mut versions = Vec::new();
        for _ in 0..50 {
            let r = s.tick(&mut e, &mut SimCamera).unwrap();
            assert!(!r.outcome.done);
            vision += r.vision_ticked as usize;
            versions.push(r.embedding.unwrap().version);
        }
        assert_eq!(vision, 10);
        assert_eq!(s.vision_ticks(), 10);
        let changes: Vec<usize> = (1..versions.len()).filter(|&i| versions[i] != versions[i - 1]).collect();
        for w in changes.windows(2) {
            assert!(w[1] - w[0] >= 5);
        }
    }

    #[test]
    fn latency_selects_old_enough_frame() {
        let mut e = env();
        e.sim.dr.depth_latency = 0.1;
        let mut s = DeploymentScheduler::new(DeployConfig::default(), student()).unwrap();
        let mut used = Vec::new();
        for _ in 0..20 {
            let r = s.tick(&mut e, &mut SimCamera).unwrap();
            used.push((r.time, r.embedding.unwrap().frame_time));
        }
        for (t, f) in used {
            if (t - 0.15).abs() < 1e-9 {
                assert!(f <= 0.05 + 1e-9);
                assert_eq!(f, 0.0);
            }
            if t >= 0.1 - 1e-9 {
                assert!(f <= t - 0.1 + 1e-9, "t {t} used frame {f}");
            }
        }
    }

    #[test]
    fn stall_holds_last_target_and_recovers() {
        let mut e = env();
        let mut s = DeploymentScheduler::new(DeployConfig::default(), student()).unwrap();
        let mut cam = Flaky { until: 0.3 };
        let mut reports = Vec::new();
        for _ in 0..60 {
            reports.push(s.tick(&mut e, &mut cam).unwrap());
        }
        // The last frame is at t = 0.2, so degraded mode starts once t exceeds 0.7.
        let first = reports.iter().position(|r| r.degraded).unwrap();
        assert!((reports[first].time - 0.72).abs() < 1e-9, "{}", reports[first].time);
        assert_eq!(reports[first].action, reports[first - 1].action);
        assert!(reports[first..].iter().all(|r| r.action == reports[first - 1].action && r.degraded));
        cam.until = f64::INFINITY;
        let mut recovered = false;
        for _ in 0..10 {
            recovered |= !s.tick(&mut e, &mut cam).unwrap().degraded;
        }
        assert!(recovered);
    }

    #[test]
    fn abort_on_degraded_reports_exit_code_four() {
        let mut e = env();
        let cfg = DeployConfig {
            abort_on_degraded: true,
            ..DeployConfig::default()
        };
        let mut s = DeploymentScheduler::new(cfg, student()).unwrap();
        let mut cam = Flaky { until: -1.0 };
        let mut err = None;
        for _ in 0..40 {
            if let Err(x) = s.tick(&mut e, &mut cam) {
                err = Some(x);
                break;
            }
        }
        assert_eq!(err.unwrap().exit_code(), 4);
    }

    #[test]
    fn arm_override_replaces_and_clamps() {
        let joints = JointConfig::default();
        let t: [f64; NUM_JOINTS] = std::array::from_fn(|i| i as f64 * 0.01);
        let zero = arm_override(&t, &[0.0; 8], &joints);
        for j in 0..NUM_JOINTS {
            if ARM_JOINTS.contains(&j) {
                assert_eq!(zero[j], 0.0);
            } else {
                assert_eq!(zero[j].to_bits(), t[j].to_bits());
            }
        }
        let wild = arm_override(&t, &[100.0, -100.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0], &joints);
        assert_eq!(wild[ARM_JOINTS[0]], joints.joints[ARM_JOINTS[0]].upper);
        assert_eq!(wild[ARM_JOINTS[1]], joints.joints[ARM_JOINTS[1]].lower);
        assert_eq!(wild[ARM_JOINTS[2]], 0.5);
    }

    #[test]
    fn zero_override_on_zero_arm_policy_is_identity() {
        let joints = JointConfig::default();
        let mut t = [0.3; NUM_JOINTS];
        for &j in &ARM_JOINTS {
            t[j] = 0.0;
        }
        assert_eq!(arm_override(&t, &[0.0; 8], &joints), t);
    }

    #[test]
    fn bad_rates_rejected() {
        for cfg in [
            DeployConfig {
                vision_hz: 7.0,
                ..DeployConfig::default()
            },
            DeployConfig {
                actor_hz: 100.0,
                ..DeployConfig::default()
            },
            DeployConfig {
                stall_timeout_s: 0.0,
                ..DeployConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
