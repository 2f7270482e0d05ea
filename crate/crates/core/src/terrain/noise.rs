//! Multi-octave value noise evaluated in grid-index space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terrain::HeightField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FractalNoise {
    /// Amplitude of the first octave in meters.
    pub amplitude: f64,
    pub octaves: u32,
    /// Lattice spacing of the first octave in meters.
    pub base_wavelength: f64,
}

impl Default for FractalNoise {
    fn default() -> Self {
        FractalNoise {
            amplitude: 0.05,
            octaves: 3,
            base_wavelength: 0.4,
        }
    }
}

impl FractalNoise {
    pub fn none() -> Self {
        FractalNoise {
            amplitude: 0.0,
            ..Self::default()
        }
    }

    /// Upper bound on |noise|: the sum of the octave amplitudes.
    pub fn bound(&self) -> f64 {
        (0..self.octaves).map(|k| self.amplitude / f64::powi(2.0, k as i32)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || self.octaves == 0 || !(self.base_wavelength > 0.0) {
            return Err(Error::Config(format!("invalid fractal noise settings {self:?}")));
        }
        Ok(())
    }
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lattice value in [-1, 1].
#[inline]
fn lattice(seed: u64, octave: u32, i: i64, j: i64) -> f64 {
    let h = splitmix(
        splitmix(splitmix(seed ^ (octave as u64).wrapping_mul(0x2545_f491_4f6c_dd1d)) ^ i as u64)
            ^ (j as u64).wrapping_mul(0x9e37_79b9),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn value_noise(seed: u64, octave: u32, u: f64, v: f64) -> f64 {
    let i = u.floor();
    let j = v.floor();
    let tu = u - i;
    let tv = v - j;
    let (i, j) = (i as i64, j as i64);
    let a = lattice(seed, octave, i, j);
    let b = lattice(seed, octave, i + 1, j);
    let c = lattice(seed, octave, i, j + 1);
    let d = lattice(seed, octave, i + 1, j + 1);
    let top = a + (b - a) * tu;
    let bot = c + (d - c) * tu;
    top + (bot - top) * tv
}

/// Noise offset at grid node `(ix, iy)` for a field with the given cell size.
pub fn noise_at_node(noise: &FractalNoise, cell_size: f64, seed: u64, ix: usize, iy: usize) -> f64 {
    let mut total = 0.0;
    let mut amp = noise.amplitude;
    let mut cells_per_lattice = noise.base_wavelength / cell_size;
    for octave in 0..noise.octaves {
        let u = ix as f64 / cells_per_lattice;
        let v = iy as f64 / cells_per_lattice;
        total += amp * value_noise(seed, octave, u, v);
        amp *= 0.5;
        cells_per_lattice *= 0.5;
    }
    total
}

/// Adds fractal noise to every node. Amplitude zero returns the input unchanged.
pub fn apply_fractal_noise(field: &HeightField, noise: &FractalNoise, seed: u64) -> HeightField {
    let mut out = field.clone();
    if noise.amplitude == 0.0 {
        return out;
    }
    for ix in 0..field.length {
        for iy in 0..field.width {
            let i = field.index(ix, iy);
            out.heights[i] += noise_at_node(noise, field.cell_size, seed, ix, iy);
        }
    }
    out
}
