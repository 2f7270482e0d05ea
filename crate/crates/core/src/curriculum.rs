//! Locomotion commands, the turn-to-track auto command and the terrain
//! row curriculum.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::EpisodeStats;
use crate::geom::wrap_angle;
use crate::terrain::TrackLayout;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

impl Command {
    pub fn new(vx: f64, vy: f64, yaw_rate: f64) -> Self {
        Command { vx, vy, yaw_rate }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.vx, self.vy, self.yaw_rate]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Plane,
    Parkour,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommandRanges {
    pub vx: (f64, f64),
    pub vy: (f64, f64),
    pub yaw_rate: (f64, f64),
}

impl Default for CommandRanges {
    fn default() -> Self {
        CommandRanges {
            vx: (-0.8, 2.0),
            vy: (-0.8, 0.8),
            yaw_rate: (-1.0, 1.0),
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo >= hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn sample_command_with(rng: &mut impl Rng, stage: Stage, ranges: &CommandRanges) -> Command {
    let vx_range = match stage {
        Stage::Plane => ranges.vx,
        Stage::Parkour => (ranges.vx.0.max(0.0), ranges.vx.1.max(0.0)),
    };
    Command {
        vx: uniform(rng, vx_range),
        vy: uniform(rng, ranges.vy),
        yaw_rate: uniform(rng, ranges.yaw_rate),
    }
}

pub fn sample_command(seed: u64, stage: Stage) -> Command {
    sample_command_with(&mut ChaCha8Rng::seed_from_u64(seed), stage, &CommandRanges::default())
}

/// Steers toward `theta_goal`; forward motion stops while facing away.
pub fn auto_command(theta_goal: f64, theta: f64, base: Command, alpha_yaw: f64, yaw_range: (f64, f64)) -> Command {
    let err = wrap_angle(theta_goal - theta);
    Command {
        vx: if err.abs() >= PI / 2.0 { 0.0 } else { base.vx },
        vy: base.vy,
        yaw_rate: (alpha_yaw * err).clamp(yaw_range.0, yaw_range.1),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtMaxRow {
    Stay,
    Resample,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub promote_fraction: f64,
    pub demote_fraction: f64,
    pub at_max_row: AtMaxRow,
    pub alpha_yaw: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            promote_fraction: 0.75,
            demote_fraction: 0.5,
            at_max_row: AtMaxRow::Stay,
            alpha_yaw: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub row: usize,
    pub col: usize,
}

/// Row change after one episode run under a sampled forward command `cmd_vx`.
/// `rng` is only used by [`AtMaxRow::Resample`].
pub fn curriculum_update(
    state: CurriculumState,
    stats: &EpisodeStats,
    cmd_vx: f64,
    subtrack_length: f64,
    rows: usize,
    cfg: &CurriculumConfig,
    rng: &mut impl Rng,
) -> CurriculumState {
    if cmd_vx <= 0.0 || rows == 0 {
        return state;
    }
    let d = stats.distance_along_track;
    let mut next = state;
    if stats.success && d >= cfg.promote_fraction * subtrack_length {
        if state.row + 1 < rows {
            next.row += 1;
        } else if cfg.at_max_row == AtMaxRow::Resample {
            next.row = rng.random_range(0..rows);
        }
    } else if stats.fall && d < cfg.demote_fraction * subtrack_length {
        next.row = state.row.saturating_sub(1);
    }
    next
}

/// Round-robin over columns, all at row 0, each with a uniform initial yaw.
pub fn assign_environments(num_envs: usize, layout: &TrackLayout, seed: u64) -> Vec<(CurriculumState, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_envs)
        .map(|i| {
            // random_range is half-open; flipping the sign maps [-pi, pi) onto (-pi, pi].
            let yaw = -rng.random_range(-PI..PI);
            (CurriculumState { row: 0, col: i % layout.cols }, yaw)
        })
        .collect()
}

/// Appends `episode,env,row` rows.
pub fn progression_csv_row(episode: u64, env: usize, row: usize) -> String {
    format!("{episode},{env},{row}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{FractalNoise, SubtrackGeometry};

    fn stats(d: f64, success: bool, fall: bool) -> EpisodeStats {
        EpisodeStats {
            distance_along_track: d,
            success,
            fall,
            steps: 10,
        }
    }

    fn update(s: CurriculumState, st: EpisodeStats) -> CurriculumState {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        curriculum_update(s, &st, 1.0, 4.8, 10, &CurriculumConfig::default(), &mut rng)
    }

    #[test]
    fn sampled_commands_cover_table_ranges() {
        let n = 10_000;
        let cs: Vec<Command> = (0..n).map(|s| sample_command(s, Stage::Plane)).collect();
        assert!(cs.iter().all(|c| (-0.8..=2.0).contains(&c.vx)
            && (-0.8..=0.8).contains(&c.vy)
            && (-1.0..=1.0).contains(&c.yaw_rate)));
        let mean = cs.iter().map(|c| c.vx).sum::<f64>() / n as f64;
        assert!((mean - 0.6).abs() < 0.05);
        assert_eq!(sample_command(9, Stage::Plane), sample_command(9, Stage::Plane));
        assert!((0..1000).all(|s| sample_command(s, Stage::Parkour).vx >= 0.0));
    }

    #[test]
    fn degenerate_range_returns_point() {
        let r = CommandRanges {
            vx: (0.7, 0.7),
            vy: (0.0, 0.0),
            yaw_rate: (-0.2, -0.2),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_command_with(&mut rng, Stage::Plane, &r), Command::new(0.7, 0.0, -0.2));
    }

    #[test]
    fn auto_command_examples() {
        let base = Command::new(1.2, 0.3, 0.0);
        assert_eq!(auto_command(0.4, 0.4, base, 1.0, (-1.0, 1.0)), Command::new(1.2, 0.3, 0.0));
        let back = auto_command(PI, 0.0, base, 1.0, (-1.0, 1.0));
        assert_eq!((back.vx, back.yaw_rate), (0.0, 1.0));
        let c = auto_command(0.5, 0.0, base, 1.0, (-1.0, 1.0));
        assert_eq!(c.vx, 1.2);
        assert_eq!(c.vy, 0.3);
        assert!((c.yaw_rate - 0.5).abs() < 1e-15);
    }

    #[test]
    fn thresholds() {
        let s = CurriculumState { row: 4, col: 7 };
        assert_eq!(update(s, stats(3.7, true, false)).row, 5);
        assert_eq!(update(s, stats(2.3, false, true)).row, 3);
        assert_eq!(update(s, stats(3.0, false, true)).row, 4);
        assert_eq!(update(s, stats(1.0, false, false)).row, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let backward = curriculum_update(s, &stats(4.8, true, false), -0.3, 4.8, 10, &CurriculumConfig::default(), &mut rng);
        assert_eq!(backward, s);
    }

    #[test]
    fn saturates_at_both_ends() {
        assert_eq!(update(CurriculumState { row: 9, col: 0 }, stats(4.8, true, false)).row, 9);
        assert_eq!(update(CurriculumState { row: 0, col: 0 }, stats(0.1, false, true)).row, 0);
    }

    #[test]
    fn always_successful_agent_reaches_top_in_rows_minus_one() {
        let mut s = CurriculumState { row: 0, col: 3 };
        let mut episodes = 0;
        while s.row < 9 {
            s = update(s, stats(4.8, true, false));
            episodes += 1;
        }
        assert_eq!(episodes, 9);
        assert_eq!(s.col, 3);
    }

    #[test]
    fn one_env_per_column() {
        let layout = TrackLayout::flat(10, 40, SubtrackGeometry::default(), FractalNoise::none());
        let envs = assign_environments(40, &layout, 3);
        let mut cols: Vec<usize> = envs.iter().map(|(s, _)| s.col).collect();
        cols.sort();
        assert_eq!(cols, (0..40).collect::<Vec<_>>());
        assert!(envs.iter().all(|(s, y)| s.row == 0 && *y > -PI && *y <= PI));
    }
}
