use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Regular grid of terrain elevations.
///
/// Node `(ix, iy)` sits at world `(origin.0 + ix * cell_size, origin.1 + iy * cell_size)`.
/// `length` counts nodes along x (the track axis), `width` along y. Storage is
/// row-major with one row per x index: `heights[ix * width + iy]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightField {
    pub origin: (f64, f64),
    pub cell_size: f64,
    pub width: usize,
    pub length: usize,
    pub heights: Vec<f64>,
}

impl HeightField {
    pub fn flat(origin: (f64, f64), cell_size: f64, length: usize, width: usize, z: f64) -> Result<Self> {
        Self::from_heights(origin, cell_size, length, width, vec![z; length * width])
    }

    pub fn from_heights(
        origin: (f64, f64),
        cell_size: f64,
        length: usize,
        width: usize,
        heights: Vec<f64>,
    ) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Config(format!("cell_size must be positive, got {cell_size}")));
        }
        if width < 2 || length < 2 {
            return Err(Error::Config(format!(
                "heightfield needs at least 2x2 nodes, got {length}x{width}"
            )));
        }
        if heights.len() != width * length {
            return Err(Error::Config(format!(
                "expected {} heights, got {}",
                width * length,
                heights.len()
            )));
        }
        if let Some(i) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::NonFinite(format!("height at flat index {i}")));
        }
        Ok(HeightField {
            origin,
            cell_size,
            width,
            length,
            heights,
        })
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.width + iy
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.heights[self.index(ix, iy)]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, z: f64) {
        let i = self.index(ix, iy);
        self.heights[i] = z;
    }

    /// World coordinates of a grid node.
    pub fn node_position(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.0 + ix as f64 * self.cell_size,
            self.origin.1 + iy as f64 * self.cell_size,
        )
    }

    /// Extent of the node lattice along x in meters.
    pub fn extent_x(&self) -> f64 {
        (self.length - 1) as f64 * self.cell_size
    }

    pub fn extent_y(&self) -> f64 {
        (self.width - 1) as f64 * self.cell_size
    }

    /// Bilinear height at a world position. Queries outside the grid clamp to the edge.
    #[inline]
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.origin.0) / self.cell_size).clamp(0.0, (self.length - 1) as f64);
        let fy = ((y - self.origin.1) / self.cell_size).clamp(0.0, (self.width - 1) as f64);
        // NaN queries land on the origin node.
        let fx = if fx.is_nan() { 0.0 } else { fx };
        let fy = if fy.is_nan() { 0.0 } else { fy };
        let ix = (fx.floor() as usize).min(self.length - 2);
        let iy = (fy.floor() as usize).min(self.width - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let i00 = ix * self.width + iy;
        let i10 = i00 + self.width;
        let h = &self.heights;
        let a = h[i00] + (h[i00 + 1] - h[i00]) * ty;
        let b = h[i10] + (h[i10 + 1] - h[i10]) * ty;
        a + (b - a) * tx
    }

    pub fn min_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Portable ASCII form: a `HFIELD v1 width length cell_size origin_x origin_y`
    /// header, then one line of `width` heights per x row.
    pub fn to_hfield_string(&self) -> String {
        let mut out = String::with_capacity(self.heights.len() * 10 + 64);
        let _ = writeln!(
            out,
            "HFIELD v1 {} {} {} {} {}",
            self.width, self.length, self.cell_size, self.origin.0, self.origin.1
        );
        for ix in 0..self.length {
            let row = &self.heights[ix * self.width..(ix + 1) * self.width];
            let line: Vec<String> = row.iter().map(|h| format!("{h}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse_hfield(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let bad = |m: &str| Error::Config(format!("malformed HFIELD data: {m}"));
        if tokens.next() != Some("HFIELD") || tokens.next() != Some("v1") {
            return Err(bad("missing `HFIELD v1` header"));
        }
        let mut num = |name: &str| -> Result<f64> {
            tokens
                .next()
                .ok_or_else(|| bad(name))?
                .parse::<f64>()
                .map_err(|_| bad(name))
        };
        let width = num("width")? as usize;
        let length = num("length")? as usize;
        let cell_size = num("cell_size")?;
        let ox = num("origin_x")?;
        let oy = num("origin_y")?;
        let heights = tokens
            .map(|t| t.parse::<f64>().map_err(|_| bad("height value")))
            .collect::<Result<Vec<_>>>()?;
        Self::from_heights((ox, oy), cell_size, length, width, heights)
    }

    pub fn write_hfield(&self, path: &Path) -> Result<()> {
        crate::io_util::atomic_write(path, self.to_hfield_string().as_bytes())
    }

    pub fn read_hfield(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_hfield(&text).map_err(|e| match e {
            Error::Config(m) | Error::Domain(m) => Error::corrupt(path, m),
            e => e,
        })
    }

    /// Min-max normalized 16-bit grayscale pixels, one image row per x index.
    pub fn to_gray16(&self) -> Vec<u16> {
        let lo = self.min_height();
        let hi = self.max_height();
        let span = hi - lo;
        self.heights
            .iter()
            .map(|&h| {
                if span > 0.0 {
                    (((h - lo) / span) * u16::MAX as f64).round() as u16
                } else {
                    0
                }
            })
            .collect()
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
            self.width as u32,
            self.length as u32,
            self.to_gray16(),
        )
        .ok_or_else(|| Error::Contract("image buffer size mismatch".into()))?;
        img.save(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
    }
}
