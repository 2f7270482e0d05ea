//! Joint table for the 19-DoF humanoid and the PD actuation law.

use serde::{Deserialize, Serialize};

pub const NUM_JOINTS: usize = 19;

/// Leg joint offsets within one side's block of five.
pub const HIP_YAW: usize = 0;
pub const HIP_ROLL: usize = 1;
pub const HIP_PITCH: usize = 2;
pub const KNEE: usize = 3;
pub const ANKLE: usize = 4;
pub const LEFT_LEG: usize = 0;
pub const RIGHT_LEG: usize = 5;
pub const TORSO: usize = 10;
pub const LEFT_ARM: usize = 11;
pub const RIGHT_ARM: usize = 15;

pub const ARM_JOINTS: [usize; 8] = [11, 12, 13, 14, 15, 16, 17, 18];
pub const WAIST_JOINTS: [usize; 1] = [TORSO];
pub const HIP_YAW_JOINTS: [usize; 2] = [LEFT_LEG + HIP_YAW, RIGHT_LEG + HIP_YAW];
pub const LEG_JOINTS: [usize; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointGroup {
    ShoulderPitch,
    ShoulderRoll,
    ShoulderYaw,
    Elbow,
    Torso,
    HipYaw,
    HipRoll,
    HipPitch,
    Knee,
    Ankle,
}

impl JointGroup {
    /// `(kp, kd, torque_limit)` per group.
    pub fn gains(self) -> (f64, f64, f64) {
        match self {
            JointGroup::ShoulderPitch | JointGroup::ShoulderRoll => (30.0, 1.0, 40.0),
            JointGroup::ShoulderYaw | JointGroup::Elbow => (20.0, 0.5, 18.0),
            JointGroup::Torso => (200.0, 3.0, 200.0),
            JointGroup::HipYaw => (60.0, 1.5, 200.0),
            JointGroup::HipRoll | JointGroup::HipPitch => (220.0, 4.0, 200.0),
            JointGroup::Knee => (320.0, 4.0, 300.0),
            JointGroup::Ankle => (40.0, 2.0, 40.0),
        }
    }

    /// Reflected inertia used by the surrogate integrator (kg m^2).
    fn inertia(self) -> f64 {
        match self {
            JointGroup::ShoulderPitch | JointGroup::ShoulderRoll => 0.03,
            JointGroup::ShoulderYaw | JointGroup::Elbow => 0.02,
            JointGroup::Torso => 0.2,
            JointGroup::HipYaw => 0.05,
            JointGroup::HipRoll | JointGroup::HipPitch => 0.15,
            JointGroup::Knee => 0.2,
            JointGroup::Ankle => 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub group: JointGroup,
    pub kp: f64,
    pub kd: f64,
    pub torque_limit: f64,
    pub inertia: f64,
    pub lower: f64,
    pub upper: f64,
    pub default_position: f64,
}

/// Per-joint actuation table in policy action order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub joints: Vec<Joint>,
}

impl Default for JointConfig {
    fn default() -> Self {
        use JointGroup::*;
        let mut joints = Vec::with_capacity(NUM_JOINTS);
        let mut push = |name: &str, group: JointGroup, lower: f64, upper: f64, default_position: f64| {
            let (kp, kd, torque_limit) = group.gains();
            joints.push(Joint {
                name: name.to_string(),
                group,
                kp,
                kd,
                torque_limit,
                inertia: group.inertia(),
                lower,
                upper,
                default_position,
            });
        };
        for side in ["left", "right"] {
            push(&format!("{side}_hip_yaw"), HipYaw, -0.43, 0.43, 0.0);
            push(&format!("{side}_hip_roll"), HipRoll, -0.43, 0.43, 0.0);
            push(&format!("{side}_hip_pitch"), HipPitch, -1.57, 1.57, -0.4);
            push(&format!("{side}_knee"), Knee, -0.26, 2.05, 0.8);
            push(&format!("{side}_ankle"), Ankle, -0.87, 0.52, -0.4);
        }
        push("torso", Torso, -2.35, 2.35, 0.0);
        push("left_shoulder_pitch", ShoulderPitch, -2.87, 2.87, 0.0);
        push("left_shoulder_roll", ShoulderRoll, -0.34, 3.11, 0.0);
        push("left_shoulder_yaw", ShoulderYaw, -1.3, 4.45, 0.0);
        push("left_elbow", Elbow, -1.25, 2.61, 0.0);
        push("right_shoulder_pitch", ShoulderPitch, -2.87, 2.87, 0.0);
        push("right_shoulder_roll", ShoulderRoll, -3.11, 0.34, 0.0);
        push("right_shoulder_yaw", ShoulderYaw, -4.45, 1.3, 0.0);
        push("right_elbow", Elbow, -1.25, 2.61, 0.0);
        JointConfig { joints }
    }
}

impl JointConfig {
    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn default_pose(&self) -> [f64; NUM_JOINTS] {
        let mut q = [0.0; NUM_JOINTS];
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = j.default_position;
        }
        q
    }

    pub fn kp(&self) -> [f64; NUM_JOINTS] {
        let mut k = [0.0; NUM_JOINTS];
        for (v, j) in k.iter_mut().zip(&self.joints) {
            *v = j.kp;
        }
        k
    }
}

/// `clamp(strength * (kp * (target - q) - kd * qd), -tau_max, tau_max)`.
#[inline]
pub fn pd_torque(q_target: f64, q: f64, qd: f64, joint: &Joint, motor_strength: f64) -> f64 {
    let tau = motor_strength * (joint.kp * (q_target - q) - joint.kd * qd);
    tau.clamp(-joint.torque_limit, joint.torque_limit)
}

/// PD law without the torque clamp.
#[inline]
pub fn pd_torque_unclamped(q_target: f64, q: f64, qd: f64, joint: &Joint) -> f64 {
    joint.kp * (q_target - q) - joint.kd * qd
}

/// Clips a target so the unclamped PD law stays within the torque limit:
/// `clip(target, (kd*qd - tau_max)/kp + q, (kd*qd + tau_max)/kp + q)`.
#[inline]
pub fn clip_action_for_safety(q_target: f64, q: f64, qd: f64, joint: &Joint) -> f64 {
    let lo = (joint.kd * qd - joint.torque_limit) / joint.kp + q;
    let hi = (joint.kd * qd + joint.torque_limit) / joint.kp + q;
    q_target.clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joint(group: JointGroup) -> Joint {
        JointConfig::default()
            .joints
            .into_iter()
            .find(|j| j.group == group)
            .unwrap()
    }

    #[test]
    fn table_has_19_joints_with_listed_gains() {
        let cfg = JointConfig::default();
        assert_eq!(cfg.len(), NUM_JOINTS);
        let knee = &cfg.joints[LEFT_LEG + KNEE];
        assert_eq!((knee.kp, knee.kd, knee.torque_limit), (320.0, 4.0, 300.0));
        let elbow = &cfg.joints[18];
        assert_eq!(elbow.name, "right_elbow");
        assert_eq!((elbow.kp, elbow.kd, elbow.torque_limit), (20.0, 0.5, 18.0));
        assert_eq!(cfg.joints[TORSO].group, JointGroup::Torso);
    }

    #[test]
    fn equilibrium_has_zero_torque() {
        assert_eq!(pd_torque(0.3, 0.3, 0.0, &joint(JointGroup::Knee), 1.0), 0.0);
    }

    #[test]
    fn knee_saturates_at_limit() {
        assert_eq!(pd_torque(1.0, 0.0, 0.0, &joint(JointGroup::Knee), 1.0), 300.0);
    }

    #[test]
    fn ankle_example() {
        assert_eq!(pd_torque(0.5, 0.0, 1.0, &joint(JointGroup::Ankle), 1.0), 18.0);
    }

    #[test]
    fn knee_clip_example() {
        assert_eq!(clip_action_for_safety(2.0, 0.0, 0.0, &joint(JointGroup::Knee)), 0.9375);
        assert_eq!(clip_action_for_safety(0.1, 0.0, 0.0, &joint(JointGroup::Knee)), 0.1);
    }
}
