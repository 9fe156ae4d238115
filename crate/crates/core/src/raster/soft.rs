use super::geometry::{fragment, fragment_geometry_vjp, setup_faces, sigmoid, tile_candidates, tiles, Fragment, ScreenFace};
use super::{channel_names, ProbImage, RasterConfig};
use crate::body::{Camera, TriangleMesh};
use crate::{Error, Result};

/// Gradients of a soft render contracted with an output cotangent.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftGrads {
    pub vertices: Vec<[f64; 3]>,
    /// `V x C`, row-major.
    pub attributes: Vec<f64>,
    /// `[d/ds, d/dtx, d/dty]`.
    pub camera: [f64; 3],
}

fn check_inputs(mesh: &TriangleMesh, attributes: &[f64], channels: usize, cfg: &RasterConfig) -> Result<()> {
    cfg.validate()?;
    if channels == 0 {
        return Err(Error::invalid("attributes", "at least one channel is required"));
    }
    let v = mesh.vertices.len();
    if attributes.len() != v * channels {
        return Err(Error::dim("attribute rows", v, attributes.len() / channels));
    }
    Ok(())
}

fn margin(cfg: &RasterConfig) -> Option<f64> {
    cfg.cutoff.map(|c| (c * cfg.sigma).sqrt())
}

#[inline]
fn color(face: &ScreenFace, frag: &Fragment, attributes: &[f64], nc: usize, c: usize) -> f64 {
    let mut v = 0.0;
    for i in 0..3 {
        v += frag.bary[i] * attributes[face.verts[i] as usize * nc + c];
    }
    v
}

/// Shades one pixel: fills `frags` (with normalised weights) and `out`,
/// returns the background weight.
#[allow(clippy::too_many_arguments)]
#[inline]
fn shade(
    faces: &[ScreenFace],
    candidates: &[u32],
    pix: [f64; 2],
    attributes: &[f64],
    background: &[f64],
    cfg: &RasterConfig,
    frags: &mut Vec<Fragment>,
    out: &mut [f64],
) -> f64 {
    frags.clear();
    let mut m = 0.0f64;
    for &slot in candidates {
        if let Some(f) = fragment(&faces[slot as usize], slot, pix, cfg) {
            m = m.max(f.logit);
            frags.push(f);
        }
    }
    let bg = (-m).exp();
    let mut total = bg;
    for f in frags.iter_mut() {
        f.weight = (f.logit - m).exp();
        total += f.weight;
    }
    let w_bg = bg / total;
    let nc = out.len();
    for (o, b) in out.iter_mut().zip(background) {
        *o = w_bg * b;
    }
    for f in frags.iter_mut() {
        f.weight /= total;
        let face = &faces[f.slot as usize];
        for (c, o) in out.iter_mut().enumerate() {
            *o += f.weight * color(face, f, attributes, nc, c);
        }
    }
    w_bg
}

/// Soft-renders `channels` per-vertex attribute channels.
pub fn rasterize_soft(
    mesh: &TriangleMesh,
    attributes: &[f64],
    channels: usize,
    camera: &Camera,
    cfg: &RasterConfig,
) -> Result<ProbImage> {
    check_inputs(mesh, attributes, channels, cfg)?;
    let background = cfg.background_for(channels)?;
    let (faces, _) = setup_faces(mesh, camera)?;
    let vp = cfg.viewport();
    let tiles = tiles(cfg.width, cfg.height, cfg.tile);
    let margin = margin(cfg);

    let rendered = cfg.exec.map(tiles.len(), |ti| {
        let tile = tiles[ti];
        let cands = tile_candidates(&faces, &tile, &vp, margin);
        let mut frags = Vec::new();
        let mut buf = vec![0.0; (tile.x1 - tile.x0) * (tile.y1 - tile.y0) * channels];
        let mut i = 0;
        for y in tile.y0..tile.y1 {
            for x in tile.x0..tile.x1 {
                let pix = vp.pixel_center_ndc(x, y);
                shade(&faces, &cands, pix, attributes, &background, cfg, &mut frags, &mut buf[i..i + channels]);
                i += channels;
            }
        }
        buf
    });

    let mut img = ProbImage::new(cfg.width, cfg.height, channel_names(channels));
    for (tile, buf) in tiles.iter().zip(rendered) {
        let tw = tile.x1 - tile.x0;
        for y in tile.y0..tile.y1 {
            let src = &buf[(y - tile.y0) * tw * channels..][..tw * channels];
            let dst = (y * cfg.width + tile.x0) * channels;
            img.data[dst..dst + tw * channels].copy_from_slice(src);
        }
    }
    Ok(img)
}

/// Untiled, single-threaded reference: every pixel against every face.
pub fn rasterize_soft_naive(
    mesh: &TriangleMesh,
    attributes: &[f64],
    channels: usize,
    camera: &Camera,
    cfg: &RasterConfig,
) -> Result<ProbImage> {
    check_inputs(mesh, attributes, channels, cfg)?;
    let background = cfg.background_for(channels)?;
    let (faces, _) = setup_faces(mesh, camera)?;
    let vp = cfg.viewport();
    let all: Vec<u32> = (0..faces.len() as u32).collect();
    let mut img = ProbImage::new(cfg.width, cfg.height, channel_names(channels));
    let mut frags = Vec::new();
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let at = (y * cfg.width + x) * channels;
            let pix = vp.pixel_center_ndc(x, y);
            shade(&faces, &all, pix, attributes, &background, cfg, &mut frags, &mut img.data[at..at + channels]);
        }
    }
    Ok(img)
}

struct TileGrads {
    candidates: Vec<u32>,
    g_p: Vec<[[f64; 2]; 3]>,
    g_z: Vec<[f64; 3]>,
    g_attr: Vec<f64>,
}

/// Exact VJP of [`rasterize_soft`] with respect to vertices, attributes and camera.
///
/// Per-tile partial gradients are merged in tile order, so the result does
/// not depend on the execution policy.
pub fn rasterize_soft_vjp(
    mesh: &TriangleMesh,
    attributes: &[f64],
    channels: usize,
    camera: &Camera,
    cfg: &RasterConfig,
    cotangent: &ProbImage,
) -> Result<SoftGrads> {
    check_inputs(mesh, attributes, channels, cfg)?;
    if cotangent.width != cfg.width || cotangent.height != cfg.height {
        return Err(Error::dim("cotangent pixels", cfg.width * cfg.height, cotangent.width * cotangent.height));
    }
    if cotangent.channels() != channels {
        return Err(Error::dim("cotangent channels", channels, cotangent.channels()));
    }
    let background = cfg.background_for(channels)?;
    let (faces, _) = setup_faces(mesh, camera)?;
    let vp = cfg.viewport();
    let tiles = tiles(cfg.width, cfg.height, cfg.tile);
    let margin = margin(cfg);
    let nc = channels;
    let z_scale = -1.0 / (cfg.far - cfg.near);

    let partials = cfg.exec.map(tiles.len(), |ti| {
        let tile = tiles[ti];
        let candidates = tile_candidates(&faces, &tile, &vp, margin);
        let n = candidates.len();
        let mut acc = TileGrads {
            g_p: vec![[[0.0; 2]; 3]; n],
            g_z: vec![[0.0; 3]; n],
            g_attr: vec![0.0; n * 3 * nc],
            candidates,
        };
        let mut frags = Vec::new();
        let mut out = vec![0.0; nc];
        let mut g_color = vec![0.0; nc];
        for y in tile.y0..tile.y1 {
            for x in tile.x0..tile.x1 {
                let at = (y * cfg.width + x) * nc;
                let g = &cotangent.data[at..at + nc];
                if g.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let pix = vp.pixel_center_ndc(x, y);
                shade(&faces, &acc.candidates, pix, attributes, &background, cfg, &mut frags, &mut out);
                let a_bar: f64 = g.iter().zip(&out).map(|(a, b)| a * b).sum();
                for f in &frags {
                    let face = &faces[f.slot as usize];
                    let local = acc.candidates.binary_search(&f.slot).expect("fragment from a candidate face");
                    let mut a_f = 0.0;
                    for c in 0..nc {
                        a_f += g[c] * color(face, f, attributes, nc, c);
                        g_color[c] = f.weight * g[c];
                    }
                    let g_logit = f.weight * (a_f - a_bar);
                    let g_x = g_logit * sigmoid(-f.x);
                    let g_zbar = if f.z_clamped { 0.0 } else { g_logit / cfg.gamma };
                    let g_depth = g_zbar * z_scale;
                    let mut g_bary = [0.0; 3];
                    for i in 0..3 {
                        let row = face.verts[i] as usize * nc;
                        let mut s = g_depth * face.z[i];
                        for c in 0..nc {
                            s += g_color[c] * attributes[row + c];
                            acc.g_attr[(local * 3 + i) * nc + c] += f.bary[i] * g_color[c];
                        }
                        g_bary[i] = s;
                        acc.g_z[local][i] += f.bary[i] * g_depth;
                    }
                    fragment_geometry_vjp(face, f, pix, g_x, g_bary, cfg.sigma, &mut acc.g_p[local]);
                }
            }
        }
        acc
    });

    let nv = mesh.vertices.len();
    let mut g_uv = vec![[0.0; 2]; nv];
    let mut g_vert = vec![[0.0; 3]; nv];
    let mut g_attr = vec![0.0; nv * nc];
    for part in &partials {
        for (local, &slot) in part.candidates.iter().enumerate() {
            let face = &faces[slot as usize];
            for i in 0..3 {
                let v = face.verts[i] as usize;
                g_uv[v][0] += part.g_p[local][i][0];
                g_uv[v][1] += part.g_p[local][i][1];
                g_vert[v][2] += part.g_z[local][i];
                for c in 0..nc {
                    g_attr[v * nc + c] += part.g_attr[(local * 3 + i) * nc + c];
                }
            }
        }
    }
    let mut g_cam = [0.0; 3];
    for (v, p) in mesh.vertices.iter().enumerate() {
        let [gu, gv] = g_uv[v];
        g_vert[v][0] = camera.s * gu;
        g_vert[v][1] = camera.s * gv;
        g_cam[0] += gu * (p[0] + camera.tx) + gv * (p[1] + camera.ty);
        g_cam[1] += camera.s * gu;
        g_cam[2] += camera.s * gv;
    }
    Ok(SoftGrads {
        vertices: g_vert,
        attributes: g_attr,
        camera: g_cam,
    })
}
