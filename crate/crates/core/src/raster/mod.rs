//! Soft and hard triangle rasterization of per-vertex attributes.
//!
//! The soft rasterizer gives every triangle `f` a coverage
//! `D_f(p) = sigmoid(delta * d^2(p, f) / sigma)` at pixel `p` (`delta = +1`
//! inside the projected triangle, `-1` outside, `d` the distance to the
//! nearest edge in normalised image units) and blends triangles with a
//! depth softmax: `w_f ∝ D_f * exp(zbar_f / gamma)`, where
//! `zbar = (far - z) / (far - near)` clamped to `[0, 1]` so nearer surfaces
//! weigh more. The background takes part in the softmax at `zbar = 0`.
//! Back-facing triangles are dropped.
//!
//! Pixels are processed in square tiles; per pixel, triangles are always
//! visited in face-index order so tiled, untiled, sequential and parallel
//! runs agree bit for bit.

mod geometry;
mod hard;
mod semantic;
mod soft;

use serde::{Deserialize, Serialize};

use crate::body::Viewport;
use crate::{Error, Exec, Result};

pub use geometry::{logsigmoid, sigmoid};
pub use hard::{rasterize_hard, silhouette, visible_vertices, HardRaster, SENTINEL_NONE};
pub use semantic::render_semantic_channels;
pub(crate) use semantic::masked_rows;
pub use soft::{rasterize_soft, rasterize_soft_naive, rasterize_soft_vjp, SoftGrads};

/// Default spatial sharpness of the coverage sigmoid.
pub const DEFAULT_SIGMA: f64 = 1e-5;
/// Default temperature of the depth softmax.
pub const DEFAULT_GAMMA: f64 = 1e-1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterConfig {
    pub width: usize,
    pub height: usize,
    /// Coverage sharpness, in squared normalised image units.
    pub sigma: f64,
    /// Depth-softmax temperature.
    pub gamma: f64,
    /// Per-channel background fill; a single value is broadcast, empty means zero.
    pub background: Vec<f64>,
    pub near: f64,
    pub far: f64,
    /// Skip exterior fragments with `d^2 / sigma` above this value. `None`
    /// evaluates every front-facing triangle at every pixel.
    pub cutoff: Option<f64>,
    /// Tile edge length in pixels.
    pub tile: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            width: 64,
            height: 64,
            sigma: DEFAULT_SIGMA,
            gamma: DEFAULT_GAMMA,
            background: Vec::new(),
            near: -1.0,
            far: 1.0,
            cutoff: None,
            tile: 16,
            exec: Exec::default(),
        }
    }
}

impl RasterConfig {
    pub fn with_size(width: usize, height: usize) -> Self {
        RasterConfig {
            width,
            height,
            ..Default::default()
        }
    }

    pub fn viewport(&self) -> Viewport {
        Viewport::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("raster config", "width and height must be at least 1"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("raster config", format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid("raster config", format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.near < self.far) {
            return Err(Error::invalid(
                "raster config",
                format!("near ({}) must be below far ({})", self.near, self.far),
            ));
        }
        if self.tile == 0 {
            return Err(Error::invalid("raster config", "tile size must be at least 1"));
        }
        if let Some(c) = self.cutoff {
            if !(c > 0.0) {
                return Err(Error::invalid("raster config", format!("cutoff must be > 0, got {c}")));
            }
        }
        Ok(())
    }

    pub(crate) fn background_for(&self, channels: usize) -> Result<Vec<f64>> {
        match self.background.len() {
            0 => Ok(vec![0.0; channels]),
            1 => Ok(vec![self.background[0]; channels]),
            n if n == channels => Ok(self.background.clone()),
            n => Err(Error::dim("background channels", channels, n)),
        }
    }
}

/// `H x W x C` image, channel-last, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbImage {
    pub width: usize,
    pub height: usize,
    pub channel_names: Vec<String>,
    pub data: Vec<f64>,
}

impl ProbImage {
    pub fn new(width: usize, height: usize, channel_names: Vec<String>) -> Self {
        let c = channel_names.len();
        ProbImage {
            width,
            height,
            channel_names,
            data: vec![0.0; width * height * c],
        }
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    /// Copies one channel out as a row-major `H x W` plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        let nc = self.channels();
        self.data.iter().skip(c).step_by(nc).copied().collect()
    }

    /// Builds an image from row-major planes of equal size.
    pub fn from_planes(width: usize, height: usize, names: Vec<String>, planes: &[Vec<f64>]) -> Result<Self> {
        if planes.len() != names.len() {
            return Err(Error::dim("image planes", names.len(), planes.len()));
        }
        let mut img = ProbImage::new(width, height, names);
        let nc = img.channels();
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != width * height {
                return Err(Error::dim("image plane", width * height, plane.len()));
            }
            for (i, v) in plane.iter().enumerate() {
                img.data[i * nc + c] = *v;
            }
        }
        Ok(img)
    }

    /// Sum of each channel over all pixels.
    pub fn channel_sums(&self) -> Vec<f64> {
        let nc = self.channels();
        let mut sums = vec![0.0; nc];
        for px in self.data.chunks(nc) {
            for (s, v) in sums.iter_mut().zip(px) {
                *s += v;
            }
        }
        sums
    }
}

/// Default channel names `ch0, ch1, ...`.
pub fn channel_names(n: usize) -> Vec<String> {
    (0..n).map(|c| format!("ch{c}")).collect()
}
