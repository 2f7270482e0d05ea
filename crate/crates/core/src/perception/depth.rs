//! Pinhole depth rendering by ray marching the heightfield.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Pose, Vec3};
use crate::terrain::HeightField;

pub const DEPTH_ROWS: usize = 48;
pub const DEPTH_COLS: usize = 64;
pub const SENSOR_ROWS: usize = 480;
pub const SENSOR_COLS: usize = 640;

#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub rows: usize,
    pub cols: usize,
    /// Row-major forward depths in meters.
    pub pixels: Vec<f64>,
    pub near_clip: f64,
    pub far_clip: f64,
    pub timestamp: f64,
}

impl DepthImage {
    pub fn filled(rows: usize, cols: usize, value: f64, near_clip: f64, far_clip: f64) -> Self {
        DepthImage {
            rows,
            cols,
            pixels: vec![value; rows * cols],
            near_clip,
            far_clip,
            timestamp: 0.0,
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.cols + c]
    }

    pub fn in_range(&self) -> bool {
        self.pixels
            .iter()
            .all(|&p| p >= self.near_clip && p <= self.far_clip)
    }

    /// 16-bit depth in millimeters, clamped to the u16 range.
    pub fn to_u16_mm(&self) -> Vec<u16> {
        self.pixels
            .iter()
            .map(|&d| (d * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16)
            .collect()
    }

    pub fn write_png(&self, path: &std::path::Path) -> Result<()> {
        let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
            self.cols as u32,
            self.rows as u32,
            self.to_u16_mm(),
        )
        .ok_or_else(|| Error::Contract("image buffer size mismatch".into()))?;
        img.save(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
    }
}

/// Depth camera mounting relative to the base frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraExtrinsics {
    pub position: Vec3,
    /// Roll, pitch (positive looks down), yaw.
    pub rpy: Vec3,
    /// Horizontal field of view in degrees.
    pub fov_deg: f64,
}

impl Default for CameraExtrinsics {
    /// Midpoints of the randomization ranges.
    fn default() -> Self {
        CameraExtrinsics {
            position: Vec3::new(0.11, -0.0175, 0.67),
            rpy: Vec3::new(0.0, 0.88, 0.0),
            fov_deg: 88.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub near_clip: f64,
    pub far_clip: f64,
    pub rows: usize,
    pub cols: usize,
    /// March step as a fraction of the heightfield cell size.
    pub step_fraction: f64,
    pub refinements: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            near_clip: 0.2,
            far_clip: 3.0,
            rows: SENSOR_ROWS,
            cols: SENSOR_COLS,
            step_fraction: 0.5,
            refinements: 10,
        }
    }
}

/// Camera-to-world rotation and optical center for a camera on a posed base.
pub fn camera_frame(cam: &CameraExtrinsics, base: &Pose) -> (Mat3, Vec3) {
    let base_rot = base.rotation();
    let cam_rot = Mat3::from_rpy(cam.rpy.x, cam.rpy.y, cam.rpy.z);
    (base_rot.mul(&cam_rot), base.transform_point(cam.position))
}

/// Camera-frame ray through pixel `(r, c)` with unit forward component.
///
/// Camera axes follow the body convention: x forward (optical axis), y left, z up.
#[inline]
pub fn pixel_ray(r: usize, c: usize, rows: usize, cols: usize, fov_deg: f64) -> Vec3 {
    let f = (cols as f64 / 2.0) / (fov_deg.to_radians() / 2.0).tan();
    let u = (c as f64 + 0.5 - cols as f64 / 2.0) / f;
    let v = (r as f64 + 0.5 - rows as f64 / 2.0) / f;
    Vec3::new(1.0, -u, -v)
}

pub fn render_depth(field: &HeightField, cam: &CameraExtrinsics, base: &Pose, cfg: &RenderConfig) -> DepthImage {
    let (rot, origin) = camera_frame(cam, base);
    let (rows, cols) = (cfg.rows, cfg.cols);
    let mut out = DepthImage::filled(rows, cols, cfg.far_clip, cfg.near_clip, cfg.far_clip);
    if origin.z <= field.height_at(origin.x, origin.y) {
        out.pixels.fill(cfg.near_clip);
        return out;
    }
    let step_len = cfg.step_fraction * field.cell_size;
    out.pixels
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(r, row)| {
            for (c, px) in row.iter_mut().enumerate() {
                let dir = rot.mul_vec(pixel_ray(r, c, rows, cols, cam.fov_deg));
                if let Some(t) = march(field, origin, dir, step_len, cfg.far_clip, cfg.refinements) {
                    *px = t;
                }
            }
        });
    out
}

/// First surface crossing along `origin + t * dir` for `t` in `(0, t_max]`.
fn march(field: &HeightField, origin: Vec3, dir: Vec3, step_len: f64, t_max: f64, refinements: u32) -> Option<f64> {
    let dt = step_len / dir.norm();
    let gap = |t: f64| {
        let p = origin + dir * t;
        p.z - field.height_at(p.x, p.y)
    };
    let mut t_prev = 0.0;
    loop {
        let t = (t_prev + dt).min(t_max);
        if gap(t) <= 0.0 {
            let (mut lo, mut hi) = (t_prev, t);
            for _ in 0..refinements {
                let mid = 0.5 * (lo + hi);
                if gap(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        if t >= t_max {
            return None;
        }
        t_prev = t;
    }
}

/// Block-min pooling to 48 x 64; min keeps the nearest obstacle in each block.
pub fn downsample_depth(img: &DepthImage) -> Result<DepthImage> {
    downsample_to(img, DEPTH_ROWS, DEPTH_COLS)
}

pub fn downsample_to(img: &DepthImage, rows: usize, cols: usize) -> Result<DepthImage> {
    if rows == 0 || cols == 0 || img.rows % rows != 0 || img.cols % cols != 0 {
        return Err(Error::Config(format!(
            "{}x{} is not an integer multiple of {rows}x{cols}",
            img.rows, img.cols
        )));
    }
    let (fr, fc) = (img.rows / rows, img.cols / cols);
    let mut pixels = vec![f64::INFINITY; rows * cols];
    for r in 0..img.rows {
        let orow = &mut pixels[(r / fr) * cols..(r / fr + 1) * cols];
        let irow = &img.pixels[r * img.cols..(r + 1) * img.cols];
        for (c, &v) in irow.iter().enumerate() {
            let o = &mut orow[c / fc];
            if v < *o {
                *o = v;
            }
        }
    }
    Ok(DepthImage {
        rows,
        cols,
        pixels,
        near_clip: img.near_clip,
        far_clip: img.far_clip,
        timestamp: img.timestamp,
    })
}
