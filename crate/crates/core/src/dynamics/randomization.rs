//! Per-episode physical and sensor perturbations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::perception::CameraExtrinsics;

pub const ADDED_MASS: (f64, f64) = (-1.0, 5.0);
pub const COM_X: (f64, f64) = (-0.1, 0.1);
pub const COM_Y: (f64, f64) = (-0.15, 0.15);
pub const COM_Z: (f64, f64) = (-0.2, 0.2);
pub const FRICTION: (f64, f64) = (-0.2, 2.0);
pub const MOTOR_STRENGTH: (f64, f64) = (0.8, 1.2);
pub const PROPRIO_LATENCY: (f64, f64) = (0.005, 0.045);
pub const DEPTH_FOV: (f64, f64) = (86.0, 90.0);
pub const DEPTH_LATENCY: (f64, f64) = (0.06, 0.12);
pub const CAMERA_X: (f64, f64) = (0.1, 0.12);
pub const CAMERA_Y: (f64, f64) = (-0.02, -0.015);
pub const CAMERA_Z: (f64, f64) = (0.64, 0.7);
pub const CAMERA_ROLL: (f64, f64) = (-0.1, 0.1);
pub const CAMERA_PITCH: (f64, f64) = (0.77, 0.99);
pub const CAMERA_YAW: (f64, f64) = (-0.1, 0.1);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainRandomization {
    pub added_mass: f64,
    pub com_offset: Vec3,
    /// Sampled friction coefficient; the surrogate clamps negatives to zero grip.
    pub friction: f64,
    pub motor_strength: f64,
    pub proprio_latency: f64,
    pub depth_latency: f64,
    pub camera: CameraExtrinsics,
}

impl Default for DomainRandomization {
    /// Nominal robot: no perturbation, zero latency, centered camera.
    fn default() -> Self {
        DomainRandomization {
            added_mass: 0.0,
            com_offset: Vec3::ZERO,
            friction: 1.0,
            motor_strength: 1.0,
            proprio_latency: 0.0,
            depth_latency: 0.0,
            camera: CameraExtrinsics::default(),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..=hi)
}

pub fn sample_domain_randomization(seed: u64) -> DomainRandomization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let added_mass = uniform(&mut rng, ADDED_MASS);
    let com_offset = Vec3::new(
        uniform(&mut rng, COM_X),
        uniform(&mut rng, COM_Y),
        uniform(&mut rng, COM_Z),
    );
    let friction = uniform(&mut rng, FRICTION);
    let motor_strength = uniform(&mut rng, MOTOR_STRENGTH);
    let proprio_latency = uniform(&mut rng, PROPRIO_LATENCY);
    let fov_deg = uniform(&mut rng, DEPTH_FOV);
    let depth_latency = uniform(&mut rng, DEPTH_LATENCY);
    let position = Vec3::new(
        uniform(&mut rng, CAMERA_X),
        uniform(&mut rng, CAMERA_Y),
        uniform(&mut rng, CAMERA_Z),
    );
    let rpy = Vec3::new(
        uniform(&mut rng, CAMERA_ROLL),
        uniform(&mut rng, CAMERA_PITCH),
        uniform(&mut rng, CAMERA_YAW),
    );
    DomainRandomization {
        added_mass,
        com_offset,
        friction,
        motor_strength,
        proprio_latency,
        depth_latency,
        camera: CameraExtrinsics {
            position,
            rpy,
            fov_deg,
        },
    }
}

impl DomainRandomization {
    pub fn within_ranges(&self) -> bool {
        let inr = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inr(self.added_mass, ADDED_MASS)
            && inr(self.com_offset.x, COM_X)
            && inr(self.com_offset.y, COM_Y)
            && inr(self.com_offset.z, COM_Z)
            && inr(self.friction, FRICTION)
            && inr(self.motor_strength, MOTOR_STRENGTH)
            && inr(self.proprio_latency, PROPRIO_LATENCY)
            && inr(self.depth_latency, DEPTH_LATENCY)
            && inr(self.camera.fov_deg, DEPTH_FOV)
            && inr(self.camera.position.x, CAMERA_X)
            && inr(self.camera.position.y, CAMERA_Y)
            && inr(self.camera.position.z, CAMERA_Z)
            && inr(self.camera.rpy.x, CAMERA_ROLL)
            && inr(self.camera.rpy.y, CAMERA_PITCH)
            && inr(self.camera.rpy.z, CAMERA_YAW)
    }
}
