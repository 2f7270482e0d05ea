//! Procedural parkour terrain: heightfields, the ten obstacle kinds, fractal
//! noise and the sub-track grid used for curriculum training and evaluation.

mod heightfield;
pub mod noise;
pub mod obstacle;
pub mod track;

pub use heightfield::HeightField;
pub use noise::{apply_fractal_noise, FractalNoise};
pub use obstacle::{
    build_flat, build_obstacle, build_obstacle_with, interpolate_difficulty, BoxFace, CriticalParam,
    ObstacleCell, ObstacleKind, ObstacleSpec, SteppingTargets, SubtrackGeometry, VirtualObstacle,
};
pub use track::{assemble_track_grid, DifficultySpacing, SteppingRegion, Track, TrackLayout};
