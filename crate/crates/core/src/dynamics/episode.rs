//! Fall, success and progress bookkeeping.

use serde::{Deserialize, Serialize};

use crate::dynamics::surrogate::RobotState;
use crate::terrain::HeightField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminationConfig {
    pub max_roll: f64,
    pub max_pitch: f64,
    pub min_clearance: f64,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        TerminationConfig {
            max_roll: 1.0,
            max_pitch: 1.0,
            min_clearance: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub distance_along_track: f64,
    pub success: bool,
    pub fall: bool,
    pub steps: u64,
}

/// Track geometry an episode is measured against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Progress {
    pub start_x: f64,
    pub track_length: f64,
}

/// Base height above the lowest terrain under the base or either foot.
pub fn base_clearance(state: &RobotState, field: &HeightField) -> f64 {
    let mut ground = field.height_at(state.base_pos.x, state.base_pos.y);
    for f in &state.foot_pos {
        ground = ground.min(field.height_at(f.x, f.y));
    }
    state.base_pos.z - ground
}

pub fn is_fall(state: &RobotState, field: &HeightField, cfg: &TerminationConfig) -> bool {
    !state.is_finite()
        || state.base_rpy.x.abs() > cfg.max_roll
        || state.base_rpy.y.abs() > cfg.max_pitch
        || base_clearance(state, field) < cfg.min_clearance
}

/// Updates `stats` for one more step and returns whether the episode ended.
pub fn check_termination(
    state: &RobotState,
    field: &HeightField,
    progress: &Progress,
    cfg: &TerminationConfig,
    stats: &mut EpisodeStats,
) -> bool {
    stats.steps += 1;
    if stats.fall || stats.success {
        return true;
    }
    let x = (state.base_pos.x - progress.start_x).clamp(0.0, progress.track_length);
    stats.distance_along_track = stats.distance_along_track.max(x);
    if is_fall(state, field, cfg) {
        stats.fall = true;
        return true;
    }
    if stats.distance_along_track >= progress.track_length {
        stats.success = true;
        return true;
    }
    false
}

/// Marks a non-finite fault as a fall.
pub fn record_fault(stats: &mut EpisodeStats) {
    stats.fall = true;
    stats.success = false;
}
