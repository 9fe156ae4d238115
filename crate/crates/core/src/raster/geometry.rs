//! Screen-space triangle setup and per-fragment evaluation shared by the
//! soft forward pass, its VJP and the hard rasterizer.

use super::RasterConfig;
use crate::body::{Camera, TriangleMesh, Viewport};
use crate::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without overflow or underflow.
#[inline]
pub fn logsigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn cross2(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

#[inline]
fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// A front-facing triangle in normalised image coordinates.
#[derive(Clone, Debug)]
pub(crate) struct ScreenFace {
    pub index: u32,
    pub verts: [u32; 3],
    pub p: [[f64; 2]; 3],
    pub z: [f64; 3],
    /// `cross(p1 - p0, p2 - p0)`; negative for front-facing triangles.
    pub area: f64,
    pub bbox: [f64; 4],
}

/// Projects the mesh and keeps front-facing, non-degenerate triangles in
/// face-index order. Also returns the projected vertices.
pub(crate) fn setup_faces(mesh: &TriangleMesh, camera: &Camera) -> Result<(Vec<ScreenFace>, Vec<[f64; 2]>)> {
    let mut projected = Vec::with_capacity(mesh.vertices.len());
    for (i, &v) in mesh.vertices.iter().enumerate() {
        let uv = camera.apply(v);
        if !(uv[0].is_finite() && uv[1].is_finite() && v[2].is_finite()) {
            return Err(Error::NonFiniteVertex { vertex: i });
        }
        projected.push(uv);
    }
    let mut faces = Vec::with_capacity(mesh.faces.len());
    for (fi, f) in mesh.faces.iter().enumerate() {
        if f.iter().any(|&v| v as usize >= projected.len()) {
            return Err(Error::invalid("mesh", format!("face {fi} references a missing vertex")));
        }
        let p = f.map(|v| projected[v as usize]);
        let area = cross2(sub2(p[1], p[0]), sub2(p[2], p[0]));
        if !(area < 0.0) {
            continue;
        }
        let z = f.map(|v| mesh.vertices[v as usize][2]);
        let bbox = [
            p[0][0].min(p[1][0]).min(p[2][0]),
            p[0][1].min(p[1][1]).min(p[2][1]),
            p[0][0].max(p[1][0]).max(p[2][0]),
            p[0][1].max(p[1][1]).max(p[2][1]),
        ];
        faces.push(ScreenFace {
            index: fi as u32,
            verts: *f,
            p,
            z,
            area,
            bbox,
        });
    }
    Ok((faces, projected))
}

/// Barycentric coordinates of `pix`; all non-negative iff inside (edges inclusive).
#[inline]
pub(crate) fn barycentric(face: &ScreenFace, pix: [f64; 2]) -> [f64; 3] {
    let [a, b, c] = face.p;
    let (pa, pb, pc) = (sub2(a, pix), sub2(b, pix), sub2(c, pix));
    [
        cross2(pb, pc) / face.area,
        cross2(pc, pa) / face.area,
        cross2(pa, pb) / face.area,
    ]
}

/// One triangle's contribution at one pixel.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Fragment {
    /// Position of the face in the screen-face list.
    pub slot: u32,
    pub inside: bool,
    /// Sigmoid argument `delta * d^2 / sigma`.
    pub x: f64,
    /// Nearest edge `k` runs from vertex `k` to vertex `(k + 1) % 3`.
    pub edge: u8,
    /// Closest-point parameter on the nearest edge.
    pub t: f64,
    pub t_clamped: bool,
    pub bary: [f64; 3],
    pub z_clamped: bool,
    pub logit: f64,
    pub weight: f64,
}

/// Evaluates the soft fragment of `face` at `pix`, or `None` when the cutoff culls it.
#[inline]
pub(crate) fn fragment(face: &ScreenFace, slot: u32, pix: [f64; 2], cfg: &RasterConfig) -> Option<Fragment> {
    let mut best = (f64::INFINITY, 0usize, 0.0, false);
    for k in 0..3 {
        let pk = face.p[k];
        let qk = face.p[(k + 1) % 3];
        let e = sub2(qk, pk);
        let r = sub2(pix, pk);
        let ee = e[0] * e[0] + e[1] * e[1];
        let raw = (r[0] * e[0] + r[1] * e[1]) / ee;
        let t = raw.clamp(0.0, 1.0);
        let dx = r[0] - t * e[0];
        let dy = r[1] - t * e[1];
        let d2 = dx * dx + dy * dy;
        if d2 < best.0 {
            best = (d2, k, t, raw != t);
        }
    }
    let (d2, edge, t, t_clamped) = best;
    let lambda = barycentric(face, pix);
    let inside = lambda.iter().all(|&l| l >= 0.0);
    let ratio = d2 / cfg.sigma;
    if !inside {
        if let Some(c) = cfg.cutoff {
            if ratio > c {
                return None;
            }
        }
    }
    let bary = if inside {
        lambda
    } else {
        let mut b = [0.0; 3];
        b[edge] = 1.0 - t;
        b[(edge + 1) % 3] = t;
        b
    };
    let x = if inside { ratio } else { -ratio };
    let z = bary[0] * face.z[0] + bary[1] * face.z[1] + bary[2] * face.z[2];
    let raw = (cfg.far - z) / (cfg.far - cfg.near);
    let zbar = raw.clamp(0.0, 1.0);
    Some(Fragment {
        slot,
        inside,
        x,
        edge: edge as u8,
        t,
        t_clamped,
        bary,
        z_clamped: raw != zbar,
        logit: logsigmoid(x) + zbar / cfg.gamma,
        weight: 0.0,
    })
}

/// Gradient of a fragment's `(x, bary)` inputs pulled back to the three
/// projected vertex positions.
#[inline]
pub(crate) fn fragment_geometry_vjp(
    face: &ScreenFace,
    frag: &Fragment,
    pix: [f64; 2],
    g_x: f64,
    g_bary: [f64; 3],
    sigma: f64,
    g_p: &mut [[f64; 2]; 3],
) {
    let k = frag.edge as usize;
    let k1 = (k + 1) % 3;
    let pk = face.p[k];
    let qk = face.p[k1];
    let e = sub2(qk, pk);
    let t = frag.t;
    // d^2 = |pix - (P + t e)|^2; by the envelope theorem only the endpoints move it.
    let diff = [pix[0] - pk[0] - t * e[0], pix[1] - pk[1] - t * e[1]];
    let delta = if frag.inside { 1.0 } else { -1.0 };
    let g_d2 = g_x * delta / sigma;
    if g_d2 != 0.0 {
        for a in 0..2 {
            g_p[k][a] += g_d2 * -2.0 * (1.0 - t) * diff[a];
            g_p[k1][a] += g_d2 * -2.0 * t * diff[a];
        }
    }

    if frag.inside {
        let area = face.area;
        let lambda = frag.bary;
        let g_sub: [f64; 3] = std::array::from_fn(|i| g_bary[i] / area);
        let g_area = -(0..3).map(|i| g_bary[i] * lambda[i]).sum::<f64>() / area;
        // lambda_i = cross(p_{i+1} - pix, p_{i+2} - pix) / area
        for i in 0..3 {
            let j = (i + 1) % 3;
            let l = (i + 2) % 3;
            let u = sub2(face.p[j], pix);
            let v = sub2(face.p[l], pix);
            let g = g_sub[i];
            g_p[j][0] += g * v[1];
            g_p[j][1] += -g * v[0];
            g_p[l][0] += -g * u[1];
            g_p[l][1] += g * u[0];
        }
        let u = sub2(face.p[1], face.p[0]);
        let v = sub2(face.p[2], face.p[0]);
        g_p[1][0] += g_area * v[1];
        g_p[1][1] += -g_area * v[0];
        g_p[2][0] += -g_area * u[1];
        g_p[2][1] += g_area * u[0];
        g_p[0][0] -= g_area * (v[1] - u[1]);
        g_p[0][1] -= g_area * (u[0] - v[0]);
    } else if !frag.t_clamped {
        let g_t = g_bary[k1] - g_bary[k];
        if g_t != 0.0 {
            let r = sub2(pix, pk);
            let ee = e[0] * e[0] + e[1] * e[1];
            let dt_dq = [(r[0] - 2.0 * t * e[0]) / ee, (r[1] - 2.0 * t * e[1]) / ee];
            let dt_dp = [-dt_dq[0] - e[0] / ee, -dt_dq[1] - e[1] / ee];
            for a in 0..2 {
                g_p[k][a] += g_t * dt_dp[a];
                g_p[k1][a] += g_t * dt_dq[a];
            }
        }
    }
}

/// Pixel rectangle `[x0, x1) x [y0, y1)` of one tile.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Tile {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

pub(crate) fn tiles(width: usize, height: usize, size: usize) -> Vec<Tile> {
    let mut out = Vec::new();
    for y0 in (0..height).step_by(size) {
        for x0 in (0..width).step_by(size) {
            out.push(Tile {
                x0,
                y0,
                x1: (x0 + size).min(width),
                y1: (y0 + size).min(height),
            });
        }
    }
    out
}

/// Faces (by slot, ascending) whose bounding box, grown by `margin`, reaches
/// a pixel centre of the tile. `margin = None` keeps every face.
pub(crate) fn tile_candidates(faces: &[ScreenFace], tile: &Tile, vp: &Viewport, margin: Option<f64>) -> Vec<u32> {
    let Some(margin) = margin else {
        return (0..faces.len() as u32).collect();
    };
    let lo = vp.pixel_center_ndc(tile.x0, tile.y0);
    let hi = vp.pixel_center_ndc(tile.x1 - 1, tile.y1 - 1);
    faces
        .iter()
        .enumerate()
        .filter(|(_, f)| {
            f.bbox[0] - margin <= hi[0]
                && f.bbox[2] + margin >= lo[0]
                && f.bbox[1] - margin <= hi[1]
                && f.bbox[3] + margin >= lo[1]
        })
        .map(|(i, _)| i as u32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsigmoid_is_stable() {
        assert!((logsigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(logsigmoid(1e6), 0.0);
        assert!((logsigmoid(-1e6) + 1e6).abs() < 1e-6);
        for x in [-30.0, -2.0, 0.5, 7.0] {
            assert!((logsigmoid(x) - sigmoid(x).ln()).abs() < 1e-12);
        }
    }
}
