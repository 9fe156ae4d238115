use super::geometry::{barycentric, setup_faces, tile_candidates, tiles};
use super::RasterConfig;
use crate::body::{Camera, TriangleMesh};
use crate::Result;

/// Marks pixels not covered by any front-facing triangle.
pub const SENTINEL_NONE: u32 = u32::MAX;

/// Z-buffer output: nearest front-facing face per pixel and its depth.
#[derive(Clone, Debug, PartialEq)]
pub struct HardRaster {
    pub width: usize,
    pub height: usize,
    pub face_index: Vec<u32>,
    /// Interpolated z of the winning face, `+inf` where uncovered.
    pub depth: Vec<f64>,
}

impl HardRaster {
    pub fn face_at(&self, x: usize, y: usize) -> Option<u32> {
        match self.face_index[y * self.width + x] {
            SENTINEL_NONE => None,
            f => Some(f),
        }
    }
}

/// Classic z-buffer rasterization at pixel centres. Edges are inclusive;
/// at equal depth the lower face index wins.
pub fn rasterize_hard(mesh: &TriangleMesh, camera: &Camera, cfg: &RasterConfig) -> Result<HardRaster> {
    cfg.validate()?;
    let (faces, _) = setup_faces(mesh, camera)?;
    let vp = cfg.viewport();
    let tiles = tiles(cfg.width, cfg.height, cfg.tile);

    let parts = cfg.exec.map(tiles.len(), |ti| {
        let tile = tiles[ti];
        let cands = tile_candidates(&faces, &tile, &vp, Some(1e-9));
        let n = (tile.x1 - tile.x0) * (tile.y1 - tile.y0);
        let mut index = vec![SENTINEL_NONE; n];
        let mut depth = vec![f64::INFINITY; n];
        let mut i = 0;
        for y in tile.y0..tile.y1 {
            for x in tile.x0..tile.x1 {
                let pix = vp.pixel_center_ndc(x, y);
                for &slot in &cands {
                    let face = &faces[slot as usize];
                    let l = barycentric(face, pix);
                    if l.iter().all(|&v| v >= 0.0) {
                        let z = l[0] * face.z[0] + l[1] * face.z[1] + l[2] * face.z[2];
                        if z < depth[i] {
                            depth[i] = z;
                            index[i] = face.index;
                        }
                    }
                }
                i += 1;
            }
        }
        (index, depth)
    });

    let mut out = HardRaster {
        width: cfg.width,
        height: cfg.height,
        face_index: vec![SENTINEL_NONE; cfg.width * cfg.height],
        depth: vec![f64::INFINITY; cfg.width * cfg.height],
    };
    for (tile, (index, depth)) in tiles.iter().zip(parts) {
        let tw = tile.x1 - tile.x0;
        for y in tile.y0..tile.y1 {
            let src = (y - tile.y0) * tw;
            let dst = y * cfg.width + tile.x0;
            out.face_index[dst..dst + tw].copy_from_slice(&index[src..src + tw]);
            out.depth[dst..dst + tw].copy_from_slice(&depth[src..src + tw]);
        }
    }
    Ok(out)
}

/// A vertex is visible when any face using it wins at least one pixel.
pub fn visible_vertices(mesh: &TriangleMesh, hard: &HardRaster) -> Vec<bool> {
    let mut seen = vec![false; mesh.faces.len()];
    for &f in &hard.face_index {
        if f != SENTINEL_NONE {
            seen[f as usize] = true;
        }
    }
    let mut visible = vec![false; mesh.vertices.len()];
    for (f, face) in mesh.faces.iter().enumerate() {
        if seen[f] {
            for &v in face {
                visible[v as usize] = true;
            }
        }
    }
    visible
}

/// Pixels covered by any face.
pub fn silhouette(hard: &HardRaster) -> Vec<bool> {
    hard.face_index.iter().map(|&f| f != SENTINEL_NONE).collect()
}
