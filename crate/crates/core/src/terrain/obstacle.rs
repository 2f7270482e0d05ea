//! Single sub-track construction: a starting plane followed by one obstacle block.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::terrain::HeightField;

/// Trench floor for leap gaps, deep enough that falling in always terminates.
pub const GAP_DEPTH: f64 = -3.0;
pub const HURDLE_THICKNESS: f64 = 0.1;
pub const DISCRETE_BLOCK_SIZE: f64 = 0.4;
pub const WAVE_PERIOD: f64 = 1.5;
pub const TILT_SEGMENT_LENGTH: f64 = 0.8;
pub const MAX_STAIRS: usize = 6;

const SLOPE_RUN: f64 = 1.2;
const SLOPE_TOP: f64 = 0.8;
const EDGE_BOX_DEPTH: f64 = 0.1;
const DROP_BOX_LENGTH: f64 = 0.3;
const HURDLE_OFFSET: f64 = 1.0;
const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    JumpUp,
    JumpDown,
    Leap,
    Slope,
    StairsUp,
    StairsDown,
    Hurdle,
    TiltedRamp,
    Discrete,
    Wave,
}

impl ObstacleKind {
    pub const ALL: [ObstacleKind; 10] = [
        ObstacleKind::JumpUp,
        ObstacleKind::JumpDown,
        ObstacleKind::Leap,
        ObstacleKind::Slope,
        ObstacleKind::StairsUp,
        ObstacleKind::StairsDown,
        ObstacleKind::Hurdle,
        ObstacleKind::TiltedRamp,
        ObstacleKind::Discrete,
        ObstacleKind::Wave,
    ];

    pub fn critical_params(self) -> &'static [CriticalParam] {
        use CriticalParam::*;
        match self {
            ObstacleKind::JumpUp => &[JumpHeight],
            ObstacleKind::JumpDown => &[DownHeight],
            ObstacleKind::Leap => &[LeapLength],
            ObstacleKind::Slope => &[SlopeAngle],
            ObstacleKind::StairsUp | ObstacleKind::StairsDown => &[StairsHeight, StairsLength],
            ObstacleKind::Hurdle => &[HurdleHeight],
            ObstacleKind::TiltedRamp => &[RampAngle],
            ObstacleKind::Discrete => &[BlockHeight],
            ObstacleKind::Wave => &[WaveAmplitude],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObstacleKind::JumpUp => "jump_up",
            ObstacleKind::JumpDown => "jump_down",
            ObstacleKind::Leap => "leap",
            ObstacleKind::Slope => "slope",
            ObstacleKind::StairsUp => "stairs_up",
            ObstacleKind::StairsDown => "stairs_down",
            ObstacleKind::Hurdle => "hurdle",
            ObstacleKind::TiltedRamp => "tilted_ramp",
            ObstacleKind::Discrete => "discrete",
            ObstacleKind::Wave => "wave",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn is_stairs(self) -> bool {
        matches!(self, ObstacleKind::StairsUp | ObstacleKind::StairsDown)
    }
}

impl fmt::Display for ObstacleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scored obstacle properties. Ranges are `(easy, hard)` training endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CriticalParam {
    JumpHeight,
    DownHeight,
    LeapLength,
    SlopeAngle,
    StairsHeight,
    StairsLength,
    HurdleHeight,
    RampAngle,
    BlockHeight,
    WaveAmplitude,
}

impl CriticalParam {
    pub fn training_range(self) -> (f64, f64) {
        match self {
            CriticalParam::JumpHeight => (0.2, 0.5),
            CriticalParam::DownHeight => (0.1, 0.6),
            CriticalParam::LeapLength => (0.2, 1.2),
            CriticalParam::SlopeAngle => (0.2, 0.42),
            CriticalParam::StairsHeight => (0.1, 0.3),
            CriticalParam::StairsLength => (0.3, 0.5),
            CriticalParam::HurdleHeight => (0.05, 0.5),
            CriticalParam::RampAngle => (0.2, 0.5),
            CriticalParam::BlockHeight => (0.05, 0.25),
            CriticalParam::WaveAmplitude => (0.05, 0.25),
        }
    }

    pub fn testing_range(self) -> (f64, f64) {
        match self {
            CriticalParam::JumpHeight => (0.2, 0.6),
            CriticalParam::DownHeight => (0.2, 0.6),
            CriticalParam::SlopeAngle => (0.2, 0.4),
            CriticalParam::HurdleHeight => (0.1, 0.5),
            CriticalParam::RampAngle => (0.2, 0.4),
            other => other.training_range(),
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            CriticalParam::SlopeAngle | CriticalParam::RampAngle => "rad",
            _ => "m",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CriticalParam::JumpHeight => "jump_height",
            CriticalParam::DownHeight => "down_height",
            CriticalParam::LeapLength => "leap_length",
            CriticalParam::SlopeAngle => "slope_angle",
            CriticalParam::StairsHeight => "stairs_height",
            CriticalParam::StairsLength => "stairs_length",
            CriticalParam::HurdleHeight => "hurdle_height",
            CriticalParam::RampAngle => "ramp_angle",
            CriticalParam::BlockHeight => "block_height",
            CriticalParam::WaveAmplitude => "wave_amplitude",
        }
    }
}

/// `(1 - row/rows) * easy + (row/rows) * hard`.
///
/// `row == rows` is accepted and yields the hard endpoint; larger rows are a domain error.
pub fn interpolate_difficulty(range_easy: f64, range_hard: f64, row: usize, rows: usize) -> Result<f64> {
    if rows == 0 {
        return Err(Error::Domain("rows must be at least 1".into()));
    }
    if row > rows {
        return Err(Error::Domain(format!("row {row} outside 0..={rows}")));
    }
    Ok(lerp_difficulty(range_easy, range_hard, row as f64 / rows as f64))
}

pub(crate) fn lerp_difficulty(easy: f64, hard: f64, d: f64) -> f64 {
    (1.0 - d) * easy + d * hard
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub kind: ObstacleKind,
    pub difficulty: f64,
    pub params: Vec<(CriticalParam, f64)>,
    /// Seeds the random layout of discrete blocks.
    pub seed: u64,
    /// Number of treads for stairs; defaults to as many as fit (at most [`MAX_STAIRS`]).
    pub stairs_count: Option<usize>,
}

impl ObstacleSpec {
    /// Critical parameters interpolated over the training ranges at `difficulty` in [0, 1].
    pub fn at_difficulty(kind: ObstacleKind, difficulty: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&difficulty) {
            return Err(Error::Domain(format!("difficulty {difficulty} outside [0, 1]")));
        }
        let params = kind
            .critical_params()
            .iter()
            .map(|&p| {
                let (easy, hard) = p.training_range();
                (p, lerp_difficulty(easy, hard, difficulty))
            })
            .collect();
        Ok(ObstacleSpec {
            kind,
            difficulty,
            params,
            seed: 0,
            stairs_count: None,
        })
    }

    /// Explicit parameter values, not restricted to the training ranges. Missing
    /// parameters take the easy endpoint.
    pub fn with_params(kind: ObstacleKind, values: &[(CriticalParam, f64)]) -> Result<Self> {
        let mut params = Vec::new();
        for &p in kind.critical_params() {
            let v = values
                .iter()
                .find(|(q, _)| *q == p)
                .map(|&(_, v)| v)
                .unwrap_or(p.training_range().0);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!("{} = {v} must be finite and nonnegative", p.name())));
            }
            params.push((p, v));
        }
        if let Some((q, _)) = values.iter().find(|(q, _)| !kind.critical_params().contains(q)) {
            return Err(Error::Domain(format!("{} is not a parameter of {kind}", q.name())));
        }
        let (p0, v0) = params[0];
        let (easy, hard) = p0.training_range();
        Ok(ObstacleSpec {
            kind,
            difficulty: (v0 - easy) / (hard - easy),
            params,
            seed: 0,
            stairs_count: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_stairs_count(mut self, n: usize) -> Self {
        self.stairs_count = Some(n);
        self
    }

    pub fn param(&self, p: CriticalParam) -> Option<f64> {
        self.params.iter().find(|(q, _)| *q == p).map(|&(_, v)| v)
    }

    fn require(&self, p: CriticalParam) -> Result<f64> {
        self.param(p)
            .ok_or_else(|| Error::Domain(format!("{} spec lacks {}", self.kind, p.name())))
    }

    /// True when every critical parameter lies inside its training range.
    pub fn in_training_range(&self) -> bool {
        self.params.iter().all(|&(p, v)| {
            let (a, b) = p.training_range();
            v >= a.min(b) - EPS && v <= a.max(b) + EPS
        })
    }
}

/// Box face a body point must cross to count as penetrating.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoxFace {
    MinX,
    MaxX,
    MinY,
    MaxY,
    MinZ,
    MaxZ,
}

impl BoxFace {
    /// Unit vector pointing from the face into the box.
    pub fn inward(self) -> Vec3 {
        match self {
            BoxFace::MinX => Vec3::new(1.0, 0.0, 0.0),
            BoxFace::MaxX => Vec3::new(-1.0, 0.0, 0.0),
            BoxFace::MinY => Vec3::new(0.0, 1.0, 0.0),
            BoxFace::MaxY => Vec3::new(0.0, -1.0, 0.0),
            BoxFace::MinZ => Vec3::new(0.0, 0.0, 1.0),
            BoxFace::MaxZ => Vec3::new(0.0, 0.0, -1.0),
        }
    }
}

/// Invisible axis-aligned region with a designated penetration surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualObstacle {
    pub min: Vec3,
    pub max: Vec3,
    pub surface: BoxFace,
}

impl VirtualObstacle {
    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// Distance of `p` past the penetration surface along the inward normal; 0 outside.
    pub fn penetration_depth(&self, p: Vec3) -> f64 {
        if !self.contains(p) {
            return 0.0;
        }
        match self.surface {
            BoxFace::MinX => p.x - self.min.x,
            BoxFace::MaxX => self.max.x - p.x,
            BoxFace::MinY => p.y - self.min.y,
            BoxFace::MaxY => self.max.y - p.y,
            BoxFace::MinZ => p.z - self.min.z,
            BoxFace::MaxZ => self.max.z - p.z,
        }
    }

    pub fn translated(&self, d: Vec3) -> Self {
        VirtualObstacle {
            min: self.min + d,
            max: self.max + d,
            surface: self.surface,
        }
    }
}

/// Recommended foothold x-positions along the track, one per tread.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SteppingTargets {
    pub xs: Vec<f64>,
}

impl SteppingTargets {
    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Target closest to `x`, if any.
    pub fn nearest(&self, x: f64) -> Option<f64> {
        self.xs
            .iter()
            .copied()
            .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
    }

    pub fn shifted(&self, dx: f64) -> Self {
        SteppingTargets {
            xs: self.xs.iter().map(|x| x + dx).collect(),
        }
    }
}

/// Extent of a single sub-track in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubtrackGeometry {
    pub cell_size: f64,
    pub length: f64,
    pub start_plane_length: f64,
    pub width: f64,
}

impl Default for SubtrackGeometry {
    fn default() -> Self {
        SubtrackGeometry {
            cell_size: 0.05,
            length: 4.8,
            start_plane_length: 1.6,
            width: 1.6,
        }
    }
}

impl SubtrackGeometry {
    pub fn with_cell_size(cell_size: f64) -> Self {
        SubtrackGeometry {
            cell_size,
            ..Self::default()
        }
    }

    fn cells(&self, meters: f64, what: &str) -> Result<usize> {
        let n = meters / self.cell_size;
        if (n - n.round()).abs() > 1e-6 || n.round() < 2.0 {
            return Err(Error::Config(format!(
                "{what} {meters} m is not a whole number (>= 2) of {} m cells",
                self.cell_size
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn nodes_x(&self) -> Result<usize> {
        self.cells(self.length, "sub-track length")
    }

    pub fn nodes_y(&self) -> Result<usize> {
        self.cells(self.width, "sub-track width")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) {
            return Err(Error::Config("cell_size must be positive".into()));
        }
        self.nodes_x()?;
        self.nodes_y()?;
        if !(self.start_plane_length >= 0.0 && self.start_plane_length < self.length) {
            return Err(Error::Config(format!(
                "start plane {} m must lie within the {} m sub-track",
                self.start_plane_length, self.length
            )));
        }
        Ok(())
    }

    pub fn block_start(&self) -> f64 {
        self.start_plane_length
    }

    pub fn block_length(&self) -> f64 {
        self.length - self.start_plane_length
    }
}

/// A realized sub-track in local coordinates (origin at the sub-track corner, start plane at z = 0).
#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleCell {
    pub field: HeightField,
    pub virtual_obstacles: Vec<VirtualObstacle>,
    pub stepping_targets: SteppingTargets,
    /// Designed ground level where the sub-track ends, relative to its start plane.
    pub exit_level: f64,
}

pub fn build_obstacle(spec: &ObstacleSpec, cell_size: f64) -> Result<ObstacleCell> {
    build_obstacle_with(spec, &SubtrackGeometry::with_cell_size(cell_size))
}

/// Flat sub-track (start plane plus an empty block).
pub fn build_flat(geom: &SubtrackGeometry) -> Result<ObstacleCell> {
    geom.validate()?;
    let field = HeightField::flat((0.0, 0.0), geom.cell_size, geom.nodes_x()?, geom.nodes_y()?, 0.0)?;
    Ok(ObstacleCell {
        field,
        virtual_obstacles: Vec::new(),
        stepping_targets: SteppingTargets::default(),
        exit_level: 0.0,
    })
}

pub fn build_obstacle_with(spec: &ObstacleSpec, geom: &SubtrackGeometry) -> Result<ObstacleCell> {
    geom.validate()?;
    let cs = geom.cell_size;
    let nx = geom.nodes_x()?;
    let ny = geom.nodes_y()?;
    let b = geom.block_start();
    let block = geom.block_length();
    let w = geom.width;
    let y_mid = (ny - 1) as f64 * cs / 2.0;

    let feature = |size: f64, what: &str| -> Result<()> {
        if cs > size + EPS {
            return Err(Error::Config(format!(
                "cell_size {cs} m exceeds the smallest feature ({what} = {size} m)"
            )));
        }
        Ok(())
    };

    let mut heights = vec![0.0; nx * ny];
    let mut vos = Vec::new();
    let mut targets = SteppingTargets::default();
    let mut exit_level = 0.0;
    let xs: Vec<f64> = (0..nx).map(|i| i as f64 * cs).collect();
    let ys: Vec<f64> = (0..ny).map(|j| j as f64 * cs).collect();
    let in_seg = |x: f64, a: f64, len: f64| x >= a - EPS && x < a + len - EPS;
    let mut set_by_x = |f: &dyn Fn(f64) -> Option<f64>| {
        for (ix, &x) in xs.iter().enumerate() {
            if let Some(h) = f(x) {
                heights[ix * ny..(ix + 1) * ny].iter_mut().for_each(|v| *v = h);
            }
        }
    };

    match spec.kind {
        ObstacleKind::JumpUp => {
            let h = spec.require(CriticalParam::JumpHeight)?;
            set_by_x(&|x| (x >= b - EPS).then_some(h));
            exit_level = h;
            vos.push(VirtualObstacle {
                min: Vec3::new(b, 0.0, 0.0),
                max: Vec3::new(b + EDGE_BOX_DEPTH, w, h),
                surface: BoxFace::MinX,
            });
        }
        ObstacleKind::JumpDown => {
            let h = spec.require(CriticalParam::DownHeight)?;
            set_by_x(&|x| (x >= b - EPS).then_some(-h));
            exit_level = -h;
            vos.push(VirtualObstacle {
                min: Vec3::new(b, 0.0, -h),
                max: Vec3::new(b + DROP_BOX_LENGTH, w, 0.0),
                surface: BoxFace::MaxZ,
            });
        }
        ObstacleKind::Leap => {
            let len = spec.require(CriticalParam::LeapLength)?;
            feature(len, "leap length")?;
            if len > block {
                return Err(Error::Config(format!("leap length {len} m exceeds the obstacle block")));
            }
            set_by_x(&|x| in_seg(x, b, len).then_some(GAP_DEPTH));
            vos.push(VirtualObstacle {
                min: Vec3::new(b, 0.0, GAP_DEPTH),
                max: Vec3::new(b + len, w, 0.0),
                surface: BoxFace::MaxZ,
            });
        }
        ObstacleKind::Slope => {
            let a = spec.require(CriticalParam::SlopeAngle)?;
            let t = a.tan();
            set_by_x(&|x| {
                let d = x - b;
                if d < 0.0 {
                    None
                } else if d <= SLOPE_RUN {
                    Some(t * d)
                } else if d <= SLOPE_RUN + SLOPE_TOP {
                    Some(t * SLOPE_RUN)
                } else {
                    Some((t * (2.0 * SLOPE_RUN + SLOPE_TOP - d)).max(0.0))
                }
            });
        }
        ObstacleKind::StairsUp | ObstacleKind::StairsDown => {
            let rise = spec.require(CriticalParam::StairsHeight)?;
            let tread = spec.require(CriticalParam::StairsLength)?;
            feature(tread, "stairs length")?;
            let fit = (block / tread + EPS).floor() as usize;
            let n = spec.stairs_count.unwrap_or(fit.min(MAX_STAIRS));
            if n == 0 || n as f64 * tread > block + EPS {
                return Err(Error::Config(format!(
                    "{n} treads of {tread} m do not fit the {block} m block"
                )));
            }
            let sign = if spec.kind == ObstacleKind::StairsUp { 1.0 } else { -1.0 };
            set_by_x(&|x| {
                if x < b - EPS {
                    return None;
                }
                let k = (((x - b) + EPS) / tread).floor() as usize;
                Some(sign * rise * ((k + 1).min(n)) as f64)
            });
            exit_level = sign * rise * n as f64;
            targets.xs = (0..n).map(|k| b + (k as f64 + 0.5) * tread).collect();
        }
        ObstacleKind::Hurdle => {
            let h = spec.require(CriticalParam::HurdleHeight)?;
            feature(HURDLE_THICKNESS, "hurdle thickness")?;
            let x0 = b + HURDLE_OFFSET;
            set_by_x(&|x| in_seg(x, x0, HURDLE_THICKNESS).then_some(h));
            vos.push(VirtualObstacle {
                min: Vec3::new(x0, 0.0, 0.0),
                max: Vec3::new(x0 + HURDLE_THICKNESS, w, h),
                surface: BoxFace::MaxZ,
            });
        }
        ObstacleKind::TiltedRamp => {
            let a = spec.require(CriticalParam::RampAngle)?;
            let t = a.tan();
            for (ix, &x) in xs.iter().enumerate() {
                if x < b - EPS {
                    continue;
                }
                let seg = (((x - b) + EPS) / TILT_SEGMENT_LENGTH).floor() as i64;
                let s = if seg % 2 == 0 { 1.0 } else { -1.0 };
                for (iy, &y) in ys.iter().enumerate() {
                    heights[ix * ny + iy] = s * t * (y - y_mid);
                }
            }
        }
        ObstacleKind::Discrete => {
            let hmax = spec.require(CriticalParam::BlockHeight)?;
            feature(DISCRETE_BLOCK_SIZE, "discrete block size")?;
            let bx = (block / DISCRETE_BLOCK_SIZE).ceil() as usize;
            let by = (w / DISCRETE_BLOCK_SIZE).ceil() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let raw: Vec<f64> = (0..bx * by).map(|_| rng.random_range(0.05..1.0)).collect();
            let top = raw.iter().copied().fold(0.0, f64::max);
            for (ix, &x) in xs.iter().enumerate() {
                if x < b - EPS {
                    continue;
                }
                let i = (((x - b) + EPS) / DISCRETE_BLOCK_SIZE).floor() as usize;
                for (iy, &y) in ys.iter().enumerate() {
                    let j = ((y + EPS) / DISCRETE_BLOCK_SIZE).floor() as usize;
                    let u = raw[i.min(bx - 1) * by + j.min(by - 1)];
                    heights[ix * ny + iy] = hmax * u / top;
                }
            }
        }
        ObstacleKind::Wave => {
            let amp = spec.require(CriticalParam::WaveAmplitude)?;
            feature(WAVE_PERIOD / 4.0, "quarter wave period")?;
            let periods = (block / WAVE_PERIOD).floor();
            let span = periods * WAVE_PERIOD;
            set_by_x(&|x| {
                let d = x - b;
                (d >= -EPS && d < span - EPS)
                    .then(|| amp * (2.0 * std::f64::consts::PI * d / WAVE_PERIOD).sin())
            });
        }
    }

    let field = HeightField::from_heights((0.0, 0.0), cs, nx, ny, heights)?;
    Ok(ObstacleCell {
        field,
        virtual_obstacles: vos,
        stepping_targets: targets,
        exit_level,
    })
}
