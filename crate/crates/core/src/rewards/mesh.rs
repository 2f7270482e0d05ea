//! Point lattices bound to the lower-body links.

use crate::dynamics::joints::{ANKLE, HIP_PITCH, HIP_ROLL, HIP_YAW, KNEE, LEFT_LEG, RIGHT_LEG};
use crate::dynamics::{RobotState, SurrogateParams};
use crate::geom::{Mat3, Vec3};
use crate::terrain::HeightField;

#[derive(Clone, Debug, PartialEq)]
pub struct MeshLink {
    pub name: String,
    pub is_foot: bool,
    /// Sample points in the link frame.
    pub points: Vec<Vec3>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BodyPointMesh {
    /// Order: pelvis, then thigh, shank, foot for the left and right leg.
    pub links: Vec<MeshLink>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkFrame {
    pub origin: Vec3,
    pub rot: Mat3,
}

impl LinkFrame {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.origin + self.rot.mul_vec(p)
    }
}

/// World position and finite-difference velocity of one mesh point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshPoint {
    pub link: usize,
    pub pos: Vec3,
    pub vel: Vec3,
}

fn lattice(min: Vec3, max: Vec3, n: usize) -> Vec<Vec3> {
    let t = |k: usize| if n == 1 { 0.5 } else { k as f64 / (n - 1) as f64 };
    let mut pts = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                pts.push(Vec3::new(
                    min.x + (max.x - min.x) * t(i),
                    min.y + (max.y - min.y) * t(j),
                    min.z + (max.z - min.z) * t(k),
                ));
            }
        }
    }
    pts
}

impl BodyPointMesh {
    /// `n x n x n` lattice over each link's bounding box (n >= 2).
    pub fn lattice(n: usize) -> Self {
        let n = n.max(2);
        let mut links = vec![MeshLink {
            name: "pelvis".into(),
            is_foot: false,
            points: lattice(Vec3::new(-0.1, -0.15, -0.05), Vec3::new(0.1, 0.15, 0.1), n),
        }];
        for side in ["left", "right"] {
            links.push(MeshLink {
                name: format!("{side}_thigh"),
                is_foot: false,
                points: lattice(Vec3::new(-0.05, -0.05, -0.35), Vec3::new(0.05, 0.05, 0.0), n),
            });
            links.push(MeshLink {
                name: format!("{side}_shank"),
                is_foot: false,
                points: lattice(Vec3::new(-0.05, -0.05, -0.35), Vec3::new(0.05, 0.05, 0.0), n),
            });
            links.push(MeshLink {
                name: format!("{side}_foot"),
                is_foot: true,
                points: lattice(Vec3::new(-0.05, -0.04, 0.0), Vec3::new(0.15, 0.04, 0.04), n),
            });
        }
        BodyPointMesh { links }
    }

    pub fn num_points(&self) -> usize {
        self.links.iter().map(|l| l.points.len()).sum()
    }
}

impl Default for BodyPointMesh {
    fn default() -> Self {
        Self::lattice(2)
    }
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
}

/// Link frames matching the surrogate's leg kinematics, in mesh link order.
pub fn lower_body_frames(state: &RobotState, p: &SurrogateParams) -> Vec<LinkFrame> {
    let q = &state.q;
    let yaw = Mat3::from_yaw(state.base_rpy.z);
    let mut frames = vec![LinkFrame {
        origin: state.base_pos,
        rot: Mat3::from_rpy(state.base_rpy.x, state.base_rpy.y, state.base_rpy.z),
    }];
    for (o, side) in [(LEFT_LEG, 1.0), (RIGHT_LEG, -1.0)] {
        let a1 = -q[o + HIP_PITCH];
        let a2 = a1 - q[o + KNEE];
        let hip_rot = yaw.mul(&Mat3::from_yaw(q[o + HIP_YAW])).mul(&rot_x(side * q[o + HIP_ROLL]));
        let hip = state.base_pos + yaw.mul_vec(Vec3::new(0.0, side * p.hip_offset, 0.0));
        let thigh = hip_rot.mul(&rot_y(-a1));
        let knee = hip + thigh.mul_vec(Vec3::new(0.0, 0.0, -p.thigh_length));
        let shank = hip_rot.mul(&rot_y(-a2));
        let ankle = knee + shank.mul_vec(Vec3::new(0.0, 0.0, -p.shank_length));
        let foot_pitch = q[o + HIP_PITCH] + q[o + KNEE] + q[o + ANKLE];
        let foot = yaw.mul(&Mat3::from_yaw(q[o + HIP_YAW])).mul(&rot_y(foot_pitch));
        frames.push(LinkFrame { origin: hip, rot: thigh });
        frames.push(LinkFrame { origin: knee, rot: shank });
        frames.push(LinkFrame { origin: ankle, rot: foot });
    }
    frames
}

pub fn world_points(mesh: &BodyPointMesh, frames: &[LinkFrame]) -> Vec<(usize, Vec3)> {
    let mut out = Vec::with_capacity(mesh.num_points());
    for (li, (link, frame)) in mesh.links.iter().zip(frames).enumerate() {
        out.extend(link.points.iter().map(|&pt| (li, frame.apply(pt))));
    }
    out
}

/// Current world points with velocities from the displacement since `prev`.
pub fn point_kinematics(
    mesh: &BodyPointMesh,
    prev: &RobotState,
    cur: &RobotState,
    p: &SurrogateParams,
    dt: f64,
) -> Vec<MeshPoint> {
    let a = world_points(mesh, &lower_body_frames(prev, p));
    let b = world_points(mesh, &lower_body_frames(cur, p));
    a.into_iter()
        .zip(b)
        .map(|((_, pa), (link, pb))| MeshPoint {
            link,
            pos: pb,
            vel: (pb - pa) * (1.0 / dt),
        })
        .collect()
}

/// Terrain contact force per link from point penetration (N).
pub fn link_contact_forces(mesh: &BodyPointMesh, points: &[MeshPoint], field: &HeightField, k_contact: f64) -> Vec<f64> {
    let mut f = vec![0.0; mesh.links.len()];
    for pt in points {
        let depth = field.height_at(pt.pos.x, pt.pos.y) - pt.pos.z;
        if depth > 0.0 {
            f[pt.link] += k_contact * depth;
        }
    }
    f
}
