use serde::{Deserialize, Serialize};

/// Weak-perspective camera: `(x, y, z) -> s * (x + tx, y + ty)` in
/// normalised image units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub s: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            s: 1.0,
            tx: 0.0,
            ty: 0.0,
        }
    }
}

impl Camera {
    /// Normalised image coordinates of a point.
    #[inline]
    pub fn apply(&self, p: [f64; 3]) -> [f64; 2] {
        [self.s * (p[0] + self.tx), self.s * (p[1] + self.ty)]
    }
}

/// Maps normalised image coordinates to pixels.
///
/// The image centre sits at normalised `(0, 0)`; one normalised unit spans
/// half of the shorter image side. Pixel `(i, j)` covers
/// `[i, i+1) x [j, j+1)` and is sampled at its centre.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: usize,
    pub height: usize,
}

impl Viewport {
    pub fn new(width: usize, height: usize) -> Self {
        Viewport { width, height }
    }

    /// Pixels per normalised unit.
    #[inline]
    pub fn scale(&self) -> f64 {
        0.5 * self.width.min(self.height) as f64
    }

    #[inline]
    pub fn center(&self) -> [f64; 2] {
        [0.5 * self.width as f64, 0.5 * self.height as f64]
    }

    #[inline]
    pub fn to_pixel(&self, ndc: [f64; 2]) -> [f64; 2] {
        let f = self.scale();
        let c = self.center();
        [c[0] + f * ndc[0], c[1] + f * ndc[1]]
    }

    /// Normalised coordinates of the centre of pixel `(x, y)`.
    #[inline]
    pub fn pixel_center_ndc(&self, x: usize, y: usize) -> [f64; 2] {
        let f = self.scale();
        let c = self.center();
        [(x as f64 + 0.5 - c[0]) / f, (y as f64 + 0.5 - c[1]) / f]
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }
}

#[inline]
pub fn project_point(p: [f64; 3], camera: &Camera, viewport: &Viewport) -> [f64; 2] {
    viewport.to_pixel(camera.apply(p))
}

/// Projects points to pixel coordinates.
pub fn project(points: &[[f64; 3]], camera: &Camera, viewport: &Viewport) -> Vec<[f64; 2]> {
    points
        .iter()
        .map(|&p| project_point(p, camera, viewport))
        .collect()
}
