use serde::{Deserialize, Serialize};

use crate::geom::Pose;
use crate::terrain::HeightField;

pub const SCANDOT_LATERAL: usize = 11;
pub const SCANDOT_FORWARD: usize = 19;
pub const SCANDOT_COUNT: usize = SCANDOT_LATERAL * SCANDOT_FORWARD;

/// Fixed body-frame `(forward, lateral)` sampling offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScandotLayout {
    offsets: Vec<(f64, f64)>,
}

impl Default for ScandotLayout {
    /// 11 lateral points 0.1 m apart, 19 forward points 0.15 m apart starting 0.1 m behind the base.
    fn default() -> Self {
        Self::grid(
            SCANDOT_LATERAL,
            SCANDOT_FORWARD,
            0.1,
            0.15,
            -0.1,
        )
    }
}

impl ScandotLayout {
    /// Lateral-major grid: value index is `lat * forward + fwd`.
    pub fn grid(lateral: usize, forward: usize, lateral_spacing: f64, forward_spacing: f64, forward_start: f64) -> Self {
        let half = (lateral as f64 - 1.0) / 2.0;
        let mut offsets = Vec::with_capacity(lateral * forward);
        for l in 0..lateral {
            for f in 0..forward {
                offsets.push((
                    forward_start + f as f64 * forward_spacing,
                    (l as f64 - half) * lateral_spacing,
                ));
            }
        }
        ScandotLayout { offsets }
    }

    pub fn from_offsets(offsets: Vec<(f64, f64)>) -> Self {
        ScandotLayout { offsets }
    }

    pub fn offsets(&self) -> &[(f64, f64)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Terrain elevations relative to the base height at each layout offset.
#[derive(Clone, Debug, PartialEq)]
pub struct ScandotGrid {
    pub values: Vec<f64>,
}

/// Offsets are rotated by yaw only, so the grid stays level with the world.
pub fn sample_scandots(field: &HeightField, pose: &Pose, layout: &ScandotLayout) -> ScandotGrid {
    let (s, c) = pose.yaw().sin_cos();
    let p = pose.position;
    let values = layout
        .offsets
        .iter()
        .map(|&(fx, fy)| {
            let wx = p.x + c * fx - s * fy;
            let wy = p.y + s * fx + c * fy;
            field.height_at(wx, wy) - p.z
        })
        .collect();
    ScandotGrid { values }
}
