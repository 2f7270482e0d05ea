//! Simulated stereo-depth corruption and the on-robot cleanup chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::DepthImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthNoiseConfig {
    /// Independent per-pixel Gaussian std (m).
    pub pixel_std: f64,
    /// Whole-frame Gaussian offset std (m).
    pub frame_std: f64,
    /// Artifact rectangles per frame are drawn uniformly from `0..=max_artifacts`.
    pub max_artifacts: usize,
    /// Largest artifact side in sensor pixels.
    pub max_artifact_size: usize,
}

impl Default for DepthNoiseConfig {
    fn default() -> Self {
        DepthNoiseConfig {
            pixel_std: 0.02,
            frame_std: 0.02,
            max_artifacts: 4,
            max_artifact_size: 8,
        }
    }
}

impl DepthNoiseConfig {
    pub fn none() -> Self {
        DepthNoiseConfig {
            pixel_std: 0.0,
            frame_std: 0.0,
            max_artifacts: 0,
            max_artifact_size: 8,
        }
    }
}

fn clip_in_place(img: &mut DepthImage) {
    let (lo, hi) = (img.near_clip, img.far_clip);
    img.pixels.iter_mut().for_each(|p| *p = p.clamp(lo, hi));
}

/// Clip, per-pixel plus per-frame Gaussian noise, random rectangular dropouts, re-clip.
pub fn simulate_depth_noise(img: &DepthImage, cfg: &DepthNoiseConfig, seed: u64) -> DepthImage {
    let mut out = img.clone();
    clip_in_place(&mut out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = if cfg.frame_std > 0.0 {
        Normal::new(0.0, cfg.frame_std).unwrap().sample(&mut rng)
    } else {
        0.0
    };
    if cfg.pixel_std > 0.0 {
        let n = Normal::new(0.0, cfg.pixel_std).unwrap();
        out.pixels.iter_mut().for_each(|p| *p += frame + n.sample(&mut rng));
    } else if frame != 0.0 {
        out.pixels.iter_mut().for_each(|p| *p += frame);
    }
    if cfg.max_artifacts > 0 && cfg.max_artifact_size > 0 {
        let count = rng.random_range(0..=cfg.max_artifacts);
        for _ in 0..count {
            let h = rng.random_range(1..=cfg.max_artifact_size.min(out.rows));
            let w = rng.random_range(1..=cfg.max_artifact_size.min(out.cols));
            let r0 = rng.random_range(0..=out.rows - h);
            let c0 = rng.random_range(0..=out.cols - w);
            let v = if rng.random_bool(0.5) { out.far_clip } else { out.near_clip };
            for r in r0..r0 + h {
                out.pixels[r * out.cols + c0..r * out.cols + c0 + w].fill(v);
            }
        }
    }
    clip_in_place(&mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Weight of the current frame in temporal smoothing.
    pub temporal_alpha: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { temporal_alpha: 0.6 }
    }
}

#[inline]
fn is_hole(v: f64) -> bool {
    v == 0.0 || !v.is_finite()
}

/// Fills holes along each row from the nearest valid pixel to the left, then
/// from the right for leading holes. Rows without any valid pixel copy the
/// nearest filled row. Returns `false` when the image has no valid pixel.
fn fill_holes(pixels: &mut [f64], valid: &[bool], rows: usize, cols: usize) -> bool {
    let mut row_ok = vec![false; rows];
    for r in 0..rows {
        let row = &mut pixels[r * cols..(r + 1) * cols];
        let vrow = &valid[r * cols..(r + 1) * cols];
        let mut last = None;
        for c in 0..cols {
            if vrow[c] {
                last = Some(row[c]);
            } else if let Some(v) = last {
                row[c] = v;
            }
        }
        let mut last = None;
        for c in (0..cols).rev() {
            if vrow[c] {
                last = Some(row[c]);
            } else if !vrow[..c].iter().any(|&b| b) {
                if let Some(v) = last {
                    row[c] = v;
                }
            }
        }
        row_ok[r] = vrow.iter().any(|&b| b);
    }
    if !row_ok.iter().any(|&b| b) {
        return false;
    }
    for r in 0..rows {
        if row_ok[r] {
            continue;
        }
        let src = (0..rows)
            .filter(|&k| row_ok[k])
            .min_by_key(|&k| (k as isize - r as isize).unsigned_abs())
            .unwrap();
        let (a, b) = (src * cols, r * cols);
        let copy: Vec<f64> = pixels[a..a + cols].to_vec();
        pixels[b..b + cols].copy_from_slice(&copy);
    }
    true
}

/// 3x3 median with replicated borders.
pub fn median3x3(img: &DepthImage) -> DepthImage {
    let (rows, cols) = (img.rows, img.cols);
    let mut out = img.clone();
    let mut win = [0.0f64; 9];
    for r in 0..rows {
        for c in 0..cols {
            let mut k = 0;
            for dr in [-1isize, 0, 1] {
                let rr = (r as isize + dr).clamp(0, rows as isize - 1) as usize;
                for dc in [-1isize, 0, 1] {
                    let cc = (c as isize + dc).clamp(0, cols as isize - 1) as usize;
                    win[k] = img.pixels[rr * cols + cc];
                    k += 1;
                }
            }
            win.sort_unstable_by(f64::total_cmp);
            out.pixels[r * cols + c] = win[4];
        }
    }
    out
}

/// Real-camera chain: clip, hole fill, 3x3 median, temporal exponential smoothing.
/// Holes are zero or non-finite pixels.
pub fn preprocess_real_depth(img: &DepthImage, prev: Option<&DepthImage>, cfg: &PreprocessConfig) -> Result<DepthImage> {
    if let Some(p) = prev {
        if (p.rows, p.cols) != (img.rows, img.cols) {
            return Err(Error::Contract("previous frame resolution differs".into()));
        }
    }
    let (lo, hi) = (img.near_clip, img.far_clip);
    let valid: Vec<bool> = img.pixels.iter().map(|&v| !is_hole(v)).collect();
    let mut out = img.clone();
    for (p, &ok) in out.pixels.iter_mut().zip(&valid) {
        if ok {
            *p = p.clamp(lo, hi);
        }
    }
    if !fill_holes(&mut out.pixels, &valid, img.rows, img.cols) {
        match prev {
            Some(p) => out.pixels.copy_from_slice(&p.pixels),
            None => return Err(Error::Domain("depth frame has no valid pixels".into())),
        }
    }
    let mut out = median3x3(&out);
    if let Some(p) = prev {
        let a = cfg.temporal_alpha;
        for (o, &q) in out.pixels.iter_mut().zip(&p.pixels) {
            *o = (a * *o + (1.0 - a) * q).clamp(lo, hi);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity_on_clipped_input() {
        let mut img = DepthImage::filled(10, 12, 1.0, 0.2, 3.0);
        img.pixels[7] = 2.5;
        let out = simulate_depth_noise(&img, &DepthNoiseConfig::none(), 9);
        assert_eq!(out, img);
    }

    #[test]
    fn beyond_far_clip_becomes_far_clip() {
        let img = DepthImage::filled(4, 4, 4.0, 0.2, 3.0);
        let out = simulate_depth_noise(&img, &DepthNoiseConfig::none(), 1);
        assert!(out.pixels.iter().all(|&p| p == 3.0));
    }

    #[test]
    fn single_hole_is_filled_from_neighbors() {
        let mut img = DepthImage::filled(5, 5, 1.5, 0.2, 3.0);
        img.pixels[12] = 0.0;
        let out = preprocess_real_depth(&img, None, &PreprocessConfig::default()).unwrap();
        assert!(out.pixels.iter().all(|&p| p == 1.5));
    }

    #[test]
    fn temporal_blend_halfway() {
        let cur = DepthImage::filled(4, 4, 2.0, 0.2, 3.0);
        let prev = DepthImage::filled(4, 4, 1.0, 0.2, 3.0);
        let cfg = PreprocessConfig { temporal_alpha: 0.5 };
        let out = preprocess_real_depth(&cur, Some(&prev), &cfg).unwrap();
        assert!(out.pixels.iter().all(|&p| p == 1.5));
    }

    #[test]
    fn all_holes_without_history_is_an_error() {
        let img = DepthImage::filled(4, 4, 0.0, 0.2, 3.0);
        assert!(preprocess_real_depth(&img, None, &PreprocessConfig::default()).is_err());
        let prev = DepthImage::filled(4, 4, 1.0, 0.2, 3.0);
        let out = preprocess_real_depth(&img, Some(&prev), &PreprocessConfig::default()).unwrap();
        assert!(out.pixels.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn median_is_idempotent_on_constants() {
        let img = DepthImage::filled(6, 7, 1.25, 0.2, 3.0);
        assert_eq!(median3x3(&img), img);
    }

    #[test]
    fn leading_holes_take_the_first_valid_value() {
        let mut img = DepthImage::filled(1, 4, 0.0, 0.2, 3.0);
        img.pixels[2] = 2.0;
        let valid: Vec<bool> = img.pixels.iter().map(|&v| v != 0.0).collect();
        let mut px = img.pixels.clone();
        assert!(fill_holes(&mut px, &valid, 1, 4));
        assert_eq!(px, vec![2.0, 2.0, 2.0, 2.0]);
    }
}
