//! Non-physical surrogate for the articulated humanoid.
//!
//! Joints integrate a PD-driven double integrator. The base is not simulated as
//! a rigid body: its horizontal velocity relaxes toward the velocity implied by
//! stance legs sweeping backward, its height rides on the highest supporting
//! leg, and its attitude relaxes toward the terrain slope plus lean terms.

use serde::{Deserialize, Serialize};

use crate::dynamics::joints::*;
use crate::dynamics::randomization::DomainRandomization;
use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Mat3, Pose, Vec3};
use crate::terrain::HeightField;

pub const SIM_DT: f64 = 0.005;
pub const DECIMATION: usize = 4;
pub const CONTROL_DT: f64 = SIM_DT * DECIMATION as f64;
pub const GRAVITY: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateParams {
    pub thigh_length: f64,
    pub shank_length: f64,
    pub hip_offset: f64,
    pub base_mass: f64,
    /// Horizontal velocity coupling gain (1/s) at unit friction and nominal mass.
    pub velocity_gain: f64,
    pub attitude_gain: f64,
    /// Attitude lean per meter of COM offset (rad/m).
    pub com_lean: f64,
    /// Attitude lean per meter of mean stance-foot offset (rad/m).
    pub support_lean: f64,
    pub max_rise_speed: f64,
    pub k_contact: f64,
    pub contact_threshold: f64,
    pub action_scale: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            thigh_length: 0.4,
            shank_length: 0.4,
            hip_offset: 0.1,
            base_mass: 47.0,
            velocity_gain: 20.0,
            attitude_gain: 10.0,
            com_lean: 0.5,
            support_lean: 1.5,
            max_rise_speed: 3.0,
            k_contact: 5000.0,
            contact_threshold: 0.01,
            action_scale: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub base_pos: Vec3,
    pub base_rpy: Vec3,
    pub base_linvel: Vec3,
    pub base_angvel: Vec3,
    pub q: [f64; NUM_JOINTS],
    pub qd: [f64; NUM_JOINTS],
    pub foot_pos: [Vec3; 2],
    pub foot_contact: [bool; 2],
    pub contact_force: [f64; 2],
    /// Joint torques applied on the last sim substep.
    pub tau: [f64; NUM_JOINTS],
    pub time: f64,
}

impl RobotState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.base_pos, self.base_rpy)
    }

    pub fn is_finite(&self) -> bool {
        self.base_pos.is_finite()
            && self.base_rpy.is_finite()
            && self.base_linvel.is_finite()
            && self.base_angvel.is_finite()
            && self.q.iter().chain(&self.qd).chain(&self.tau).all(|v| v.is_finite())
            && self.foot_pos.iter().all(|p| p.is_finite())
            && self.contact_force.iter().all(|f| f.is_finite())
    }

    /// Base linear velocity expressed in the base frame.
    pub fn body_linvel(&self) -> Vec3 {
        Mat3::from_rpy(self.base_rpy.x, self.base_rpy.y, self.base_rpy.z)
            .transpose()
            .mul_vec(self.base_linvel)
    }

    /// World gravity direction `(0, 0, -1)` in the base frame.
    pub fn projected_gravity(&self) -> Vec3 {
        Mat3::from_rpy(self.base_rpy.x, self.base_rpy.y, self.base_rpy.z)
            .transpose()
            .mul_vec(Vec3::new(0.0, 0.0, -1.0))
    }
}

/// Result of one 50 Hz control tick.
#[derive(Clone, Debug)]
pub struct StepInfo {
    /// `sum_substeps sum_j |tau_j * qd_j| * dt` (J).
    pub energy: f64,
    /// Targets actually fed to the PD law after optional safety clipping.
    pub targets: [f64; NUM_JOINTS],
    /// Largest `|tau|` produced by the unclamped PD law on any substep.
    pub peak_unclamped_torque_ratio: f64,
    /// Left/right touchdown (contact rising edge) during this tick, with position.
    pub touchdowns: [Option<Vec3>; 2],
}

#[derive(Clone, Debug)]
pub struct Surrogate {
    pub joints: JointConfig,
    pub params: SurrogateParams,
    pub dr: DomainRandomization,
    pub safety_clip: bool,
}

/// Foot position relative to the hip-projected base origin, in the yaw frame.
/// Returns `(x, y, extension)` where extension is the base height above the foot.
pub fn leg_fk(q: &[f64; NUM_JOINTS], leg: usize, p: &SurrogateParams) -> (f64, f64, f64) {
    let o = if leg == 0 { LEFT_LEG } else { RIGHT_LEG };
    let side = if leg == 0 { 1.0 } else { -1.0 };
    let a1 = -q[o + HIP_PITCH];
    let a2 = a1 - q[o + KNEE];
    let x = p.thigh_length * a1.sin() + p.shank_length * a2.sin();
    let vertical = p.thigh_length * a1.cos() + p.shank_length * a2.cos();
    let roll = q[o + HIP_ROLL];
    let ext = vertical * roll.cos();
    let lateral = side * (p.hip_offset + vertical * roll.sin());
    let yaw = q[o + HIP_YAW];
    let (s, c) = yaw.sin_cos();
    (x * c - (lateral - side * p.hip_offset) * s, side * p.hip_offset + x * s + (lateral - side * p.hip_offset) * c, ext)
}

impl Surrogate {
    pub fn new(dr: DomainRandomization) -> Self {
        Surrogate {
            joints: JointConfig::default(),
            params: SurrogateParams::default(),
            dr,
            safety_clip: false,
        }
    }

    /// Default pose standing on the terrain at `(x, y)` facing `yaw`.
    pub fn initial_state(&self, field: &HeightField, x: f64, y: f64, yaw: f64) -> RobotState {
        let q = self.joints.default_pose();
        let mut s = RobotState {
            base_pos: Vec3::new(x, y, 0.0),
            base_rpy: Vec3::new(0.0, 0.0, yaw),
            base_linvel: Vec3::ZERO,
            base_angvel: Vec3::ZERO,
            q,
            qd: [0.0; NUM_JOINTS],
            foot_pos: [Vec3::ZERO; 2],
            foot_contact: [true; 2],
            contact_force: [0.0; 2],
            tau: [0.0; NUM_JOINTS],
            time: 0.0,
        };
        let rel = [leg_fk(&q, 0, &self.params), leg_fk(&q, 1, &self.params)];
        let rot = Mat3::from_yaw(yaw);
        let mut support = f64::NEG_INFINITY;
        for (i, r) in rel.iter().enumerate() {
            let d = rot.mul_vec(Vec3::new(r.0, r.1, 0.0));
            let h = field.height_at(x + d.x, y + d.y);
            support = support.max(h + r.2);
            s.foot_pos[i] = Vec3::new(x + d.x, y + d.y, h);
        }
        s.base_pos.z = support;
        for (i, r) in rel.iter().enumerate() {
            s.foot_pos[i].z = support - r.2;
        }
        s
    }

    pub fn targets_from_action(&self, action: &[f64; NUM_JOINTS]) -> [f64; NUM_JOINTS] {
        let mut t = self.joints.default_pose();
        for (t, a) in t.iter_mut().zip(action) {
            *t += a * self.params.action_scale;
        }
        t
    }

    /// One control tick: `DECIMATION` sim substeps of `SIM_DT`.
    pub fn step(&self, state: &RobotState, action: &[f64; NUM_JOINTS], field: &HeightField) -> Result<(RobotState, StepInfo)> {
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("action".into()));
        }
        let mut targets = self.targets_from_action(action);
        self.step_targets(state, &mut targets, field)
    }

    /// Same as [`Surrogate::step`] with absolute joint targets.
    pub fn step_targets(&self, state: &RobotState, targets: &mut [f64; NUM_JOINTS], field: &HeightField) -> Result<(RobotState, StepInfo)> {
        if targets.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("joint targets".into()));
        }
        if self.safety_clip {
            for (j, t) in targets.iter_mut().enumerate() {
                *t = clip_action_for_safety(*t, state.q[j], state.qd[j], &self.joints.joints[j]);
            }
        }
        let mut s = state.clone();
        let mut info = StepInfo {
            energy: 0.0,
            targets: *targets,
            peak_unclamped_torque_ratio: 0.0,
            touchdowns: [None, None],
        };
        for _ in 0..DECIMATION {
            let before = s.foot_contact;
            self.substep(&mut s, targets, field, &mut info);
            for i in 0..2 {
                if s.foot_contact[i] && !before[i] && info.touchdowns[i].is_none() {
                    info.touchdowns[i] = Some(s.foot_pos[i]);
                }
            }
        }
        if !s.is_finite() {
            return Err(Error::NonFinite("robot state".into()));
        }
        Ok((s, info))
    }

    fn substep(&self, s: &mut RobotState, targets: &[f64; NUM_JOINTS], field: &HeightField, info: &mut StepInfo) {
        let p = &self.params;
        let dt = SIM_DT;
        let q_old = s.q;
        for (j, joint) in self.joints.joints.iter().enumerate() {
            let raw = pd_torque_unclamped(targets[j], s.q[j], s.qd[j], joint);
            info.peak_unclamped_torque_ratio = info.peak_unclamped_torque_ratio.max(raw.abs() / joint.torque_limit);
            let tau = pd_torque(targets[j], s.q[j], s.qd[j], joint, self.dr.motor_strength);
            s.tau[j] = tau;
            s.qd[j] += tau / joint.inertia * dt;
            s.q[j] += s.qd[j] * dt;
            if s.q[j] <= joint.lower {
                s.q[j] = joint.lower;
                s.qd[j] = 0.0;
            } else if s.q[j] >= joint.upper {
                s.q[j] = joint.upper;
                s.qd[j] = 0.0;
            }
            info.energy += (tau * s.qd[j]).abs() * dt;
        }

        let rel_old = [leg_fk(&q_old, 0, p), leg_fk(&q_old, 1, p)];
        let rel = [leg_fk(&s.q, 0, p), leg_fk(&s.q, 1, p)];
        let yaw = s.base_rpy.z;
        let rot = Mat3::from_yaw(yaw);

        // Horizontal: stance feet sweeping backward push the base forward.
        let stance: Vec<usize> = (0..2).filter(|&i| s.foot_contact[i]).collect();
        if !stance.is_empty() {
            let mut v_leg = Vec3::ZERO;
            let mut w_leg = 0.0;
            for &i in &stance {
                let vx = (rel[i].0 - rel_old[i].0) / dt;
                let vy = (rel[i].1 - rel_old[i].1) / dt;
                v_leg = v_leg + Vec3::new(-vx, -vy, 0.0);
                let (rx, ry) = (rel[i].0, rel[i].1);
                w_leg += -(rx * vy - ry * vx) / (rx * rx + ry * ry).max(1e-4);
            }
            let n = stance.len() as f64;
            let v_leg = rot.mul_vec(v_leg * (1.0 / n));
            let w_leg = w_leg / n;
            let grip = self.dr.friction.max(0.0);
            let mass_ratio = p.base_mass / (p.base_mass + self.dr.added_mass);
            let k = (p.velocity_gain * grip * mass_ratio * dt).min(1.0);
            s.base_linvel.x += k * (v_leg.x - s.base_linvel.x);
            s.base_linvel.y += k * (v_leg.y - s.base_linvel.y);
            s.base_angvel.z += k * (w_leg - s.base_angvel.z);
        }
        s.base_pos.x += s.base_linvel.x * dt;
        s.base_pos.y += s.base_linvel.y * dt;
        s.base_rpy.z = wrap_angle(s.base_rpy.z + s.base_angvel.z * dt);

        // Vertical: ride on the highest supporting leg, rate-limited upward.
        let rot = Mat3::from_yaw(s.base_rpy.z);
        let mut foot_xy = [(0.0, 0.0); 2];
        let mut terrain = [0.0; 2];
        let mut support = f64::NEG_INFINITY;
        for i in 0..2 {
            let d = rot.mul_vec(Vec3::new(rel[i].0, rel[i].1, 0.0));
            foot_xy[i] = (s.base_pos.x + d.x, s.base_pos.y + d.y);
            terrain[i] = field.height_at(foot_xy[i].0, foot_xy[i].1);
            support = support.max(terrain[i] + rel[i].2);
        }
        let z = s.base_pos.z;
        let vz_pred = s.base_linvel.z - GRAVITY * dt;
        let z_pred = z + vz_pred * dt;
        let z_new = if z_pred > support {
            s.base_linvel.z = vz_pred;
            z_pred
        } else {
            let zn = support.min(z + p.max_rise_speed * dt);
            s.base_linvel.z = (zn - z) / dt;
            zn
        };
        s.base_pos.z = z_new;
        for i in 0..2 {
            let foot_z = z_new - rel[i].2;
            s.foot_pos[i] = Vec3::new(foot_xy[i].0, foot_xy[i].1, foot_z);
            s.foot_contact[i] = foot_z <= terrain[i] + p.contact_threshold;
            s.contact_force[i] = if s.foot_contact[i] {
                p.k_contact * (terrain[i] - (z_pred - rel[i].2)).max(0.0)
            } else {
                0.0
            };
        }

        // Attitude: relax toward terrain slope plus COM and support lean.
        let stance: Vec<usize> = (0..2).filter(|&i| s.foot_contact[i]).collect();
        if !stance.is_empty() {
            let (sy, cy) = s.base_rpy.z.sin_cos();
            let (bx, by) = (s.base_pos.x, s.base_pos.y);
            let h = 0.2;
            let slope_fwd = (field.height_at(bx + h * cy, by + h * sy) - field.height_at(bx - h * cy, by - h * sy)) / (2.0 * h);
            let slope_lat = (field.height_at(bx - h * sy, by + h * cy) - field.height_at(bx + h * sy, by - h * cy)) / (2.0 * h);
            let n = stance.len() as f64;
            let mx = stance.iter().map(|&i| rel[i].0).sum::<f64>() / n;
            let my = stance.iter().map(|&i| rel[i].1).sum::<f64>() / n;
            let target_pitch = -slope_fwd.atan() + p.com_lean * self.dr.com_offset.x - p.support_lean * mx;
            let target_roll = slope_lat.atan() - p.com_lean * self.dr.com_offset.y + p.support_lean * my;
            s.base_angvel.x = p.attitude_gain * (target_roll - s.base_rpy.x);
            s.base_angvel.y = p.attitude_gain * (target_pitch - s.base_rpy.y);
        }
        s.base_rpy.x += s.base_angvel.x * dt;
        s.base_rpy.y += s.base_angvel.y * dt;
        s.time += dt;
    }
}
