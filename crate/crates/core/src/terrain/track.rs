//! Stitching sub-tracks into the training grid and evaluation tracks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::terrain::noise::{apply_fractal_noise, FractalNoise};
use crate::terrain::obstacle::{
    build_flat, build_obstacle_with, ObstacleCell, ObstacleKind, ObstacleSpec,
    SteppingTargets, SubtrackGeometry, VirtualObstacle,
};
use crate::terrain::HeightField;

/// How a row index maps onto a difficulty fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultySpacing {
    /// `row / rows`, the curriculum rule.
    Curriculum,
    /// `row / (rows - 1)`, spanning both range endpoints (evaluation tracks).
    Endpoints,
}

impl DifficultySpacing {
    pub fn difficulty(self, row: usize, rows: usize) -> f64 {
        match self {
            DifficultySpacing::Curriculum => row as f64 / rows as f64,
            DifficultySpacing::Endpoints if rows > 1 => row as f64 / (rows - 1) as f64,
            DifficultySpacing::Endpoints => 0.0,
        }
    }
}

/// Grid of sub-tracks: rows advance along +x with increasing difficulty, each
/// column is its own straight track along x.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackLayout {
    pub rows: usize,
    pub cols: usize,
    pub geometry: SubtrackGeometry,
    /// Row-major `rows * cols`; `None` is a flat cell.
    pub cells: Vec<Option<ObstacleSpec>>,
    pub noise: FractalNoise,
}

impl TrackLayout {
    /// Column `j` holds `kinds[j % kinds.len()]`, row `i` its difficulty under `spacing`.
    pub fn grid(
        rows: usize,
        cols: usize,
        kinds: &[ObstacleKind],
        spacing: DifficultySpacing,
        geometry: SubtrackGeometry,
        noise: FractalNoise,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || kinds.is_empty() {
            return Err(Error::Config("track layout needs rows, cols and kinds".into()));
        }
        let mut cells = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let d = spacing.difficulty(i, rows);
                cells.push(Some(ObstacleSpec::at_difficulty(kinds[j % kinds.len()], d)?));
            }
        }
        Ok(TrackLayout {
            rows,
            cols,
            geometry,
            cells,
            noise,
        })
    }

    /// The 10 x 40 training grid cycling through all obstacle kinds.
    pub fn training_grid() -> Result<Self> {
        Self::grid(
            10,
            40,
            &ObstacleKind::ALL,
            DifficultySpacing::Curriculum,
            SubtrackGeometry::default(),
            FractalNoise::default(),
        )
    }

    /// One column per kind, three sub-tracks from easiest to hardest, no noise.
    pub fn evaluation(kinds: &[ObstacleKind]) -> Result<Self> {
        Self::grid(
            3,
            kinds.len(),
            kinds,
            DifficultySpacing::Endpoints,
            SubtrackGeometry::default(),
            FractalNoise::none(),
        )
    }

    pub fn flat(rows: usize, cols: usize, geometry: SubtrackGeometry, noise: FractalNoise) -> Self {
        TrackLayout {
            rows,
            cols,
            geometry,
            cells: vec![None; rows * cols],
            noise,
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&ObstacleSpec> {
        self.cells[row * self.cols + col].as_ref()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.noise.validate()?;
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("layout must have at least one row and column".into()));
        }
        if self.cells.len() != self.rows * self.cols {
            return Err(Error::Config(format!(
                "layout declares {}x{} cells but lists {} specs (overlapping or missing cells)",
                self.rows,
                self.cols,
                self.cells.len()
            )));
        }
        Ok(())
    }

    /// Length of one column track in meters.
    pub fn track_length(&self) -> f64 {
        self.rows as f64 * self.geometry.length
    }
}

/// Foothold targets that apply on one stairs cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SteppingRegion {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub targets: SteppingTargets,
}

/// Assembled terrain plus per-cell metadata in world coordinates.
#[derive(Clone, Debug)]
pub struct Track {
    pub layout: TrackLayout,
    pub field: HeightField,
    pub virtual_obstacles: Vec<VirtualObstacle>,
    pub stepping: Vec<SteppingRegion>,
    /// Start-plane level of every cell, row-major.
    pub base_levels: Vec<f64>,
    /// Cells before noise, kept for inspection and seam checks.
    pub cells: Vec<ObstacleCell>,
}

impl Track {
    pub fn geometry(&self) -> &SubtrackGeometry {
        &self.layout.geometry
    }

    /// World `(x, y)` of a cell's local origin.
    pub fn cell_origin(&self, row: usize, col: usize) -> (f64, f64) {
        let g = &self.layout.geometry;
        (row as f64 * g.length, col as f64 * g.width)
    }

    pub fn base_level(&self, row: usize, col: usize) -> f64 {
        self.base_levels[row * self.layout.cols + col]
    }

    /// Owning cell of a world point, if inside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let g = &self.layout.geometry;
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let row = (x / g.length).floor() as usize;
        let col = (y / g.width).floor() as usize;
        (row < self.layout.rows && col < self.layout.cols).then_some((row, col))
    }

    /// World position where a robot spawns on a cell's start plane.
    pub fn spawn_point(&self, row: usize, col: usize) -> Vec3 {
        let (x0, y0) = self.cell_origin(row, col);
        let g = &self.layout.geometry;
        let x = x0 + g.start_plane_length / 2.0;
        let y = y0 + g.width / 2.0;
        Vec3::new(x, y, self.field.height_at(x, y))
    }

    pub fn stepping_targets_at(&self, x: f64, y: f64) -> Option<&SteppingTargets> {
        self.stepping
            .iter()
            .find(|r| x >= r.x_range.0 && x < r.x_range.1 && y >= r.y_range.0 && y < r.y_range.1)
            .map(|r| &r.targets)
    }

    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.field.height_at(x, y)
    }
}

fn cell_seed(seed: u64, row: usize, col: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((row as u64) << 32 | col as u64)
}

/// Builds every cell, chains start levels along each column so consecutive
/// sub-tracks meet at their designed exit level, then adds fractal noise.
pub fn assemble_track_grid(layout: &TrackLayout, seed: u64) -> Result<Track> {
    layout.validate()?;
    let g = layout.geometry;
    let nx = g.nodes_x()?;
    let ny = g.nodes_y()?;
    let total_x = nx * layout.rows;
    let total_y = ny * layout.cols;
    let mut heights = vec![0.0; total_x * total_y];
    let mut cells = Vec::with_capacity(layout.rows * layout.cols);
    let mut base_levels = vec![0.0; layout.rows * layout.cols];
    let mut vos = Vec::new();
    let mut stepping = Vec::new();

    for i in 0..layout.rows {
        for j in 0..layout.cols {
            let cell = match layout.cell(i, j) {
                Some(spec) => {
                    let spec = spec.clone().with_seed(cell_seed(seed, i, j) ^ spec.seed);
                    build_obstacle_with(&spec, &g)?
                }
                None => build_flat(&g)?,
            };
            cells.push(cell);
        }
    }
    for j in 0..layout.cols {
        let mut level = 0.0;
        for i in 0..layout.rows {
            base_levels[i * layout.cols + j] = level;
            level += cells[i * layout.cols + j].exit_level;
        }
    }

    for i in 0..layout.rows {
        for j in 0..layout.cols {
            let cell = &cells[i * layout.cols + j];
            let z0 = base_levels[i * layout.cols + j];
            for ix in 0..nx {
                let gx = i * nx + ix;
                let src = &cell.field.heights[ix * ny..(ix + 1) * ny];
                let dst = &mut heights[gx * total_y + j * ny..gx * total_y + (j + 1) * ny];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = z0 + s;
                }
            }
            let x0 = i as f64 * g.length;
            let y0 = j as f64 * g.width;
            let shift = Vec3::new(x0, y0, z0);
            vos.extend(cell.virtual_obstacles.iter().map(|v| v.translated(shift)));
            if !cell.stepping_targets.is_empty() {
                stepping.push(SteppingRegion {
                    x_range: (x0, x0 + g.length),
                    y_range: (y0, y0 + g.width),
                    targets: cell.stepping_targets.shifted(x0),
                });
            }
        }
    }

    let field = HeightField::from_heights((0.0, 0.0), g.cell_size, total_x, total_y, heights)?;
    let field = apply_fractal_noise(&field, &layout.noise, seed);
    Ok(Track {
        layout: layout.clone(),
        field,
        virtual_obstacles: vos,
        stepping,
        base_levels,
        cells,
    })
}
