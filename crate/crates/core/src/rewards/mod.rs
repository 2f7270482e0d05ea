//! Reward terms for locomotion tracking, regularization, posture safety,
//! virtual-obstacle penetration and stair footstep guidance.

pub mod mesh;
mod terms;

pub use mesh::{link_contact_forces, lower_body_frames, point_kinematics, BodyPointMesh, LinkFrame, MeshPoint};
pub use terms::*;
