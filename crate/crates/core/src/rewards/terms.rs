//! Reward terms, weights and the weighted breakdown.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::joints::{ARM_JOINTS, HIP_YAW_JOINTS, NUM_JOINTS, WAIST_JOINTS};
use crate::dynamics::{JointConfig, RobotState};
use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::rewards::mesh::MeshPoint;
use crate::terrain::{SteppingTargets, VirtualObstacle};

pub const TERM_NAMES: [&str; 16] = [
    "lin_vel",
    "ang_vel",
    "orientation",
    "energy",
    "dof_vel",
    "dof_acc",
    "weighted_torques",
    "contact_forces",
    "collision",
    "action_rate",
    "arm_dof_err",
    "waist_dof_err",
    "hip_yaw_dof_err",
    "feet_away",
    "penetrate",
    "step",
];
pub const NUM_TERMS: usize = TERM_NAMES.len();

/// Floor on |d_x| in the footstep reward.
pub const STEP_DISTANCE_FLOOR: f64 = 4.539_992_976_248_485e-5; // e^-10

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub lin_vel: f64,
    pub ang_vel: f64,
    pub orientation: f64,
    pub energy: f64,
    pub dof_vel: f64,
    pub dof_acc: f64,
    pub weighted_torques: f64,
    pub contact_forces: f64,
    pub collision: f64,
    pub action_rate: f64,
    pub arm_dof_err: f64,
    pub waist_dof_err: f64,
    pub hip_yaw_dof_err: f64,
    pub feet_away: f64,
    pub penetrate: f64,
    pub step: f64,
    /// Contact-force threshold F_th (N).
    pub contact_force_threshold: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            lin_vel: 1.0,
            ang_vel: 1.5,
            orientation: -2.0,
            energy: -2.5e-7,
            dof_vel: -1e-4,
            dof_acc: -2e-6,
            weighted_torques: -1e-7,
            contact_forces: -3e-4,
            collision: -10.0,
            action_rate: -6e-3,
            arm_dof_err: -0.3,
            waist_dof_err: -0.1,
            hip_yaw_dof_err: -0.1,
            feet_away: 0.4,
            penetrate: -5e-3,
            step: 6.0,
            contact_force_threshold: 400.0,
        }
    }
}

impl RewardWeights {
    pub fn as_array(&self) -> [f64; NUM_TERMS] {
        [
            self.lin_vel,
            self.ang_vel,
            self.orientation,
            self.energy,
            self.dof_vel,
            self.dof_acc,
            self.weighted_torques,
            self.contact_forces,
            self.collision,
            self.action_rate,
            self.arm_dof_err,
            self.waist_dof_err,
            self.hip_yaw_dof_err,
            self.feet_away,
            self.penetrate,
            self.step,
        ]
    }
}

/// Unweighted terms in [`TERM_NAMES`] order plus the weighted total.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardBreakdown {
    pub terms: [f64; NUM_TERMS],
    pub weighted: [f64; NUM_TERMS],
    pub total: f64,
}

impl RewardBreakdown {
    pub fn term(&self, name: &str) -> Option<f64> {
        TERM_NAMES.iter().position(|n| *n == name).map(|i| self.terms[i])
    }
}

/// `(vx, vy, yaw_rate)` in the heading frame.
pub type Command = [f64; 3];

/// Base velocity rotated into the yaw-aligned heading frame.
pub fn heading_velocity(state: &RobotState) -> Vec3 {
    Mat3::from_yaw(state.base_rpy.z).transpose().mul_vec(state.base_linvel)
}

pub fn tracking_rewards(state: &RobotState, cmd: &Command) -> (f64, f64) {
    let v = heading_velocity(state);
    let ex = v.x - cmd[0];
    let ey = v.y - cmd[1];
    let lin = (-(ex * ex + ey * ey).sqrt() / 0.25).exp();
    let ang = (-(state.base_angvel.z - cmd[2]).abs() / 0.25).exp();
    (lin, ang)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizationTerms {
    pub orientation: f64,
    pub energy: f64,
    pub dof_vel: f64,
    pub dof_acc: f64,
    pub weighted_torques: f64,
    pub contact_forces: f64,
    pub collision: f64,
    pub action_rate: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn regularization_rewards(
    state: &RobotState,
    prev_state: &RobotState,
    action: &[f64; NUM_JOINTS],
    prev_action: &[f64; NUM_JOINTS],
    cfg: &JointConfig,
    dt: f64,
    contact_force_threshold: f64,
    body_contact_forces: &[f64],
) -> RegularizationTerms {
    let g = state.projected_gravity();
    let mut energy = 0.0;
    let mut dof_vel = 0.0;
    let mut dof_acc = 0.0;
    let mut weighted_torques = 0.0;
    let mut action_rate = 0.0;
    for j in 0..NUM_JOINTS {
        let p = state.tau[j] * state.qd[j];
        energy += p * p;
        dof_vel += state.qd[j] * state.qd[j];
        let acc = (state.qd[j] - prev_state.qd[j]) / dt;
        dof_acc += acc * acc;
        let w = state.tau[j] / cfg.joints[j].kp;
        weighted_torques += w * w;
        let da = prev_action[j] - action[j];
        action_rate += da * da;
    }
    let contact_forces = state
        .contact_force
        .iter()
        .map(|f| {
            let f = f.abs();
            if f >= contact_force_threshold {
                f - contact_force_threshold
            } else {
                0.0
            }
        })
        .sum();
    let collision = body_contact_forces.iter().filter(|f| f.abs() > 0.1).count() as f64;
    RegularizationTerms {
        orientation: g.x * g.x + g.y * g.y,
        energy,
        dof_vel,
        dof_acc,
        weighted_torques,
        contact_forces,
        collision,
        action_rate,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PostureTerms {
    pub arm_dof_err: f64,
    pub waist_dof_err: f64,
    pub hip_yaw_dof_err: f64,
    pub feet_away: f64,
}

fn sq_sum(q: &[f64; NUM_JOINTS], idx: &[usize]) -> f64 {
    idx.iter().map(|&j| q[j] * q[j]).sum()
}

pub fn feet_away(left: Vec3, right: Vec3) -> f64 {
    (left - right).norm().min(0.4)
}

pub fn safety_posture_rewards(state: &RobotState) -> PostureTerms {
    PostureTerms {
        arm_dof_err: sq_sum(&state.q, &ARM_JOINTS),
        waist_dof_err: sq_sum(&state.q, &WAIST_JOINTS),
        hip_yaw_dof_err: sq_sum(&state.q, &HIP_YAW_JOINTS),
        feet_away: feet_away(state.foot_pos[0], state.foot_pos[1]),
    }
}

/// `sum_p d(p) * |v(p)|`, with `d(p)` the deepest penetration over all boxes.
pub fn penetration_sum(points: &[MeshPoint], obstacles: &[VirtualObstacle]) -> f64 {
    points
        .iter()
        .map(|p| {
            let d = obstacles
                .iter()
                .map(|o| o.penetration_depth(p.pos))
                .fold(0.0, f64::max);
            if d > 0.0 {
                d * p.vel.norm()
            } else {
                0.0
            }
        })
        .sum()
}

pub fn penetration_penalty(points: &[MeshPoint], obstacles: &[VirtualObstacle], alpha: f64) -> f64 {
    alpha * penetration_sum(points, obstacles)
}

/// `-ln |d_x|` with `|d_x|` floored; zero without targets.
pub fn footstep_log_term(touchdown_x: f64, targets: Option<&SteppingTargets>) -> f64 {
    match targets.and_then(|t| t.nearest(touchdown_x)) {
        Some(tx) => -(touchdown_x - tx).abs().max(STEP_DISTANCE_FLOOR).ln(),
        None => 0.0,
    }
}

pub fn footstep_reward(touchdown_x: f64, targets: Option<&SteppingTargets>, alpha: f64) -> f64 {
    alpha * footstep_log_term(touchdown_x, targets)
}

/// Everything needed to evaluate one step's reward.
pub struct RewardInputs<'a> {
    pub state: &'a RobotState,
    pub prev_state: &'a RobotState,
    pub action: &'a [f64; NUM_JOINTS],
    pub prev_action: &'a [f64; NUM_JOINTS],
    pub command: Command,
    pub joints: &'a JointConfig,
    pub dt: f64,
    pub mesh_points: &'a [MeshPoint],
    pub body_contact_forces: &'a [f64],
    pub obstacles: &'a [VirtualObstacle],
    /// Touchdown positions this step paired with the stepping targets under each.
    pub touchdowns: &'a [(Vec3, Option<&'a SteppingTargets>)],
}

pub fn combine(terms: [f64; NUM_TERMS], weights: &RewardWeights) -> RewardBreakdown {
    let w = weights.as_array();
    let mut weighted = [0.0; NUM_TERMS];
    let mut total = 0.0;
    for i in 0..NUM_TERMS {
        weighted[i] = w[i] * terms[i];
        total += weighted[i];
    }
    RewardBreakdown { terms, weighted, total }
}

pub fn total_reward(inp: &RewardInputs<'_>, weights: &RewardWeights) -> RewardBreakdown {
    let (lin, ang) = tracking_rewards(inp.state, &inp.command);
    let r = regularization_rewards(
        inp.state,
        inp.prev_state,
        inp.action,
        inp.prev_action,
        inp.joints,
        inp.dt,
        weights.contact_force_threshold,
        inp.body_contact_forces,
    );
    let p = safety_posture_rewards(inp.state);
    let pen = penetration_sum(inp.mesh_points, inp.obstacles);
    let step: f64 = inp.touchdowns.iter().map(|(pos, t)| footstep_log_term(pos.x, *t)).sum();
    combine(
        [
            lin,
            ang,
            r.orientation,
            r.energy,
            r.dof_vel,
            r.dof_acc,
            r.weighted_torques,
            r.contact_forces,
            r.collision,
            r.action_rate,
            p.arm_dof_err,
            p.waist_dof_err,
            p.hip_yaw_dof_err,
            p.feet_away,
            pen,
            step,
        ],
        weights,
    )
}

/// Appends `step,term,value` rows.
pub struct RewardLogger<W: Write> {
    out: W,
}

impl<W: Write> RewardLogger<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "step,term,value").map_err(|e| Error::io("reward log", e))?;
        Ok(RewardLogger { out })
    }

    pub fn log(&mut self, step: u64, b: &RewardBreakdown) -> Result<()> {
        for (name, v) in TERM_NAMES.iter().zip(&b.terms) {
            writeln!(self.out, "{step},{name},{v}").map_err(|e| Error::io("reward log", e))?;
        }
        writeln!(self.out, "{step},total,{}", b.total).map_err(|e| Error::io("reward log", e))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
