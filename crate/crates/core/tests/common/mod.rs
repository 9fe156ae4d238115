//! Scalar reference implementations written independently of the library,
//! shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use dsr_core::body::{Camera, TriangleMesh};
use dsr_core::fixtures::rng;
use dsr_core::masks::LabelMask;
use dsr_core::raster::RasterConfig;
use rand::Rng;

pub fn ndc_of_pixel(x: usize, y: usize, w: usize, h: usize) -> [f64; 2] {
    let f = 0.5 * w.min(h) as f64;
    [(x as f64 + 0.5 - 0.5 * w as f64) / f, (y as f64 + 0.5 - 0.5 * h as f64) / f]
}

fn project(cam: &Camera, p: [f64; 3]) -> [f64; 2] {
    [cam.s * (p[0] + cam.tx), cam.s * (p[1] + cam.ty)]
}

fn edge_fn(a: [f64; 2], b: [f64; 2], q: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
}

struct Tri {
    p: [[f64; 2]; 3],
    z: [f64; 3],
    v: [usize; 3],
}

/// Front-facing triangles (negative signed area with y pointing down) in face order.
fn front_faces(mesh: &TriangleMesh, cam: &Camera) -> Vec<(usize, Tri)> {
    mesh.faces
        .iter()
        .enumerate()
        .filter_map(|(i, f)| {
            let v = f.map(|k| k as usize);
            let p = v.map(|k| project(cam, mesh.vertices[k]));
            (edge_fn(p[0], p[1], p[2]) < 0.0).then(|| (i, Tri { p, z: v.map(|k| mesh.vertices[k][2]), v }))
        })
        .collect()
}

fn bary(t: &Tri, q: [f64; 2]) -> [f64; 3] {
    let area = edge_fn(t.p[0], t.p[1], t.p[2]);
    [
        edge_fn(t.p[1], t.p[2], q) / area,
        edge_fn(t.p[2], t.p[0], q) / area,
        edge_fn(t.p[0], t.p[1], q) / area,
    ]
}

/// Squared distance to the triangle boundary and the barycentric weights of
/// the closest boundary point.
fn boundary(t: &Tri, q: [f64; 2]) -> (f64, [f64; 3]) {
    let mut best = (f64::INFINITY, [0.0; 3]);
    for k in 0..3 {
        let (a, b) = (t.p[k], t.p[(k + 1) % 3]);
        let e = [b[0] - a[0], b[1] - a[1]];
        let s = (((q[0] - a[0]) * e[0] + (q[1] - a[1]) * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
        let c = [a[0] + s * e[0], a[1] + s * e[1]];
        let d2 = (q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2);
        if d2 < best.0 {
            let mut w = [0.0; 3];
            w[k] = 1.0 - s;
            w[(k + 1) % 3] = s;
            best = (d2, w);
        }
    }
    best
}

/// Soft render straight from the definition: sigmoid coverage times
/// `exp(zbar / gamma)`, background weight `exp(0)`, normalised per pixel.
/// Ignores `cfg.cutoff` and `cfg.tile`.
pub fn soft_render(mesh: &TriangleMesh, attrs: &[f64], nc: usize, cam: &Camera, cfg: &RasterConfig) -> Vec<f64> {
    let faces = front_faces(mesh, cam);
    let bg: Vec<f64> = match cfg.background.len() {
        0 => vec![0.0; nc],
        1 => vec![cfg.background[0]; nc],
        _ => cfg.background.clone(),
    };
    let mut out = vec![0.0; cfg.width * cfg.height * nc];
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let q = ndc_of_pixel(x, y, cfg.width, cfg.height);
            let mut num = bg.clone();
            let mut den = 1.0;
            for (_, t) in &faces {
                let l = bary(t, q);
                let inside = l.iter().all(|&v| v >= 0.0);
                let (d2, wb) = boundary(t, q);
                let w = if inside { l } else { wb };
                let cov = 1.0 / (1.0 + (-(if inside { d2 } else { -d2 }) / cfg.sigma).exp());
                let z = w[0] * t.z[0] + w[1] * t.z[1] + w[2] * t.z[2];
                let zbar = ((cfg.far - z) / (cfg.far - cfg.near)).clamp(0.0, 1.0);
                let weight = cov * (zbar / cfg.gamma).exp();
                den += weight;
                for c in 0..nc {
                    let col: f64 = (0..3).map(|k| w[k] * attrs[t.v[k] * nc + c]).sum();
                    num[c] += weight * col;
                }
            }
            for c in 0..nc {
                out[(y * cfg.width + x) * nc + c] = num[c] / den;
            }
        }
    }
    out
}

/// Nearest covering front face per pixel centre; the lowest index wins ties.
pub fn hard_render(mesh: &TriangleMesh, cam: &Camera, w: usize, h: usize) -> Vec<Option<u32>> {
    let faces = front_faces(mesh, cam);
    let mut out = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let q = ndc_of_pixel(x, y, w, h);
            let mut best: Option<(f64, usize)> = None;
            for (i, t) in &faces {
                let e = [edge_fn(t.p[1], t.p[2], q), edge_fn(t.p[2], t.p[0], q), edge_fn(t.p[0], t.p[1], q)];
                if e.iter().any(|&v| v > 0.0) {
                    continue;
                }
                let l = bary(t, q);
                let z = l[0] * t.z[0] + l[1] * t.z[1] + l[2] * t.z[2];
                if best.is_none_or(|(bz, _)| z < bz) {
                    best = Some((z, *i));
                }
            }
            out[y * w + x] = best.map(|(_, i)| i as u32);
        }
    }
    out
}

/// Distance from every pixel to the nearest inside pixel by exhaustive search.
pub fn brute_edt(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            mask.iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(j, _)| ((x - (j % w) as f64).powi(2) + (y - (j / w) as f64).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn distm_oracle(r: &[f64], d: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut mass = 0.0;
    for i in 0..r.len() {
        num += r[i] * d[i];
        mass += r[i];
    }
    num / mass.powf(1.5)
}

pub fn iou_loss_oracle(p: &[f64], g: &[bool]) -> f64 {
    let mut i_ = 0.0;
    let mut u = 0.0;
    for k in 0..p.len() {
        let gv = if g[k] { 1.0 } else { 0.0 };
        i_ += p[k] * gv;
        u += p[k] + gv - p[k] * gv;
    }
    1.0 - i_ / u
}

/// Mean over counted pixels of `-log softmax(x)[t]`.
pub fn nll_oracle(x: &[f64], nc: usize, target: &[u8], sil: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for i in 0..target.len() {
        let t = target[i] as usize;
        if !sil[i] || t >= nc {
            continue;
        }
        let row = &x[i * nc..(i + 1) * nc];
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        total -= (row[t].exp() / z).max(1e-8).ln();
        n += 1;
    }
    total / n as f64
}

/// Per-pixel label counts credited to the three vertices of the visible face.
pub fn count_oracle(mesh: &TriangleMesh, cam: &Camera, labels: &LabelMask) -> Vec<u64> {
    let vis = hard_render(mesh, cam, labels.width, labels.height);
    let mut counts = vec![0u64; mesh.vertices.len() * 20];
    for (i, f) in vis.iter().enumerate() {
        if let Some(f) = f {
            for &v in &mesh.faces[*f as usize] {
                counts[v as usize * 20 + labels.labels[i] as usize] += 1;
            }
        }
    }
    counts
}

/// Supplementary label table: fine label name to coarse class index
/// (0 Background, 1 LowerClothes, 2 UpperClothes, 3 MinimalClothing).
pub fn coarse_of(name: &str) -> u8 {
    match name {
        "Background" => 0,
        "Pants" | "Skirt" => 1,
        "UpperClothes" | "Dress" | "Coat" | "Jumpsuits" => 2,
        "Hat" | "Hair" | "Glove" | "Sunglasses" | "Socks" | "Scarf" | "Face" | "LeftArm" | "RightArm" | "LeftLeg"
        | "RightLeg" | "LeftShoe" | "RightShoe" => 3,
        other => panic!("unknown label {other}"),
    }
}

/// `n` triangles with vertices inside the unit square; about half face away.
pub fn random_triangles(seed: u64, n: usize) -> TriangleMesh {
    let mut r = rng(seed);
    dsr_core::fixtures::random_scene(&mut r, n)
}

pub fn random_mask(seed: u64, w: usize, h: usize, density: f64) -> Vec<bool> {
    let mut r = rng(seed);
    (0..w * h).map(|_| r.random_bool(density)).collect()
}

pub fn random_unit(seed: u64, n: usize) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random::<f64>()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A hand-worked mask-cleaning case on a 100x80 image.
pub struct MaskFixture {
    pub name: &'static str,
    /// `(label, x0, y0, x1, y1)` inclusive rectangles painted in order over Background.
    pub regions: Vec<(u8, usize, usize, usize, usize)>,
    pub keypoints: Vec<[f64; 3]>,
    pub crop: Option<(usize, usize, usize, usize)>,
    pub valid: Vec<u8>,
    pub has_mc: bool,
    pub has_c: bool,
}

pub const FIXTURE_W: usize = 100;
pub const FIXTURE_H: usize = 80;

impl MaskFixture {
    pub fn mask(&self) -> LabelMask {
        let mut labels = vec![0u8; FIXTURE_W * FIXTURE_H];
        for &(l, x0, y0, x1, y1) in &self.regions {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    labels[y * FIXTURE_W + x] = l;
                }
            }
        }
        LabelMask { width: FIXTURE_W, height: FIXTURE_H, labels }
    }

    fn in_crop(&self, x: usize, y: usize) -> bool {
        self.crop.is_some_and(|(x0, y0, x1, y1)| x0 <= x && x <= x1 && y0 <= y && y <= y1)
    }

    pub fn expected_mc(&self) -> Vec<bool> {
        let m = self.mask();
        (0..FIXTURE_W * FIXTURE_H)
            .map(|i| self.in_crop(i % FIXTURE_W, i / FIXTURE_W) && self.valid.contains(&m.labels[i]))
            .collect()
    }

    pub fn expected_c(&self) -> Vec<u8> {
        use dsr_core::prior::LABEL_NAMES;
        let m = self.mask();
        (0..FIXTURE_W * FIXTURE_H)
            .map(|i| if self.in_crop(i % FIXTURE_W, i / FIXTURE_W) { coarse_of(LABEL_NAMES[m.labels[i] as usize]) } else { 0 })
            .collect()
    }
}

/// Ten cases exercising the 30 px crop margin, the 60 px label threshold and
/// the clothing class table; the expected rectangles and label lists were
/// worked out by hand.
pub fn mask_fixtures() -> Vec<MaskFixture> {
    let kp = |pts: &[(f64, f64, f64)]| pts.iter().map(|&(x, y, c)| [x, y, c]).collect::<Vec<_>>();
    let centre = kp(&[(50.0, 40.0, 1.0)]);
    vec![
        MaskFixture {
            name: "margin and one label exactly at the threshold",
            // Face 100 px, LeftArm 60 px, RightArm 50 px, Pants.
            regions: vec![(13, 40, 10, 49, 19), (14, 20, 30, 29, 35), (15, 70, 30, 79, 34), (9, 40, 50, 59, 69)],
            keypoints: kp(&[(45.0, 15.0, 1.0), (25.0, 32.0, 1.0), (55.0, 60.0, 1.0)]),
            crop: Some((0, 0, 85, 79)),
            valid: vec![14, 13],
            has_mc: true,
            has_c: true,
        },
        MaskFixture {
            name: "fractional keypoints and a zero-confidence outlier",
            // LeftShoe lies outside the crop; only 4x3 px of Face stay inside.
            regions: vec![(18, 0, 0, 19, 79), (19, 20, 10, 29, 19), (13, 80, 70, 89, 79), (7, 30, 20, 70, 60)],
            keypoints: kp(&[(50.4, 40.6, 1.0), (52.2, 41.1, 0.8), (5.0, 5.0, 0.0)]),
            crop: Some((20, 10, 83, 72)),
            valid: vec![19],
            has_mc: true,
            has_c: true,
        },
        MaskFixture {
            name: "no confident keypoint",
            regions: vec![(13, 10, 10, 30, 30)],
            keypoints: kp(&[(50.0, 40.0, 0.0)]),
            crop: None,
            valid: vec![],
            has_mc: false,
            has_c: false,
        },
        MaskFixture {
            name: "crop clamped to the image",
            // LeftArm 59 px is dropped, RightArm 60 px is kept.
            regions: vec![(14, 0, 0, 58, 0), (15, 0, 1, 59, 1), (12, 10, 10, 20, 20)],
            keypoints: kp(&[(0.0, 0.0, 1.0), (99.0, 79.0, 1.0)]),
            crop: Some((0, 0, 99, 79)),
            valid: vec![15],
            has_mc: true,
            has_c: true,
        },
        MaskFixture {
            name: "all five minimal-clothing labels in table order",
            regions: vec![
                (13, 50, 10, 57, 17),
                (19, 40, 10, 47, 17),
                (18, 30, 10, 37, 17),
                (15, 20, 10, 27, 17),
                (14, 10, 10, 17, 17),
            ],
            keypoints: kp(&[(30.0, 30.0, 1.0)]),
            crop: Some((0, 0, 60, 60)),
            valid: vec![14, 15, 18, 19, 13],
            has_mc: true,
            has_c: true,
        },
        MaskFixture {
            name: "every fine label maps to its clothing class",
            regions: (1u8..20).map(|l| (l, 20 + 3 * l as usize, 20, 21 + 3 * l as usize, 21)).chain([(1, 0, 0, 1, 1)]).collect(),
            keypoints: centre.clone(),
            crop: Some((20, 10, 80, 70)),
            valid: vec![],
            has_mc: false,
            has_c: true,
        },
        MaskFixture {
            name: "inclusive crop edges",
            regions: vec![(13, 0, 0, 99, 79)],
            keypoints: centre.clone(),
            crop: Some((20, 10, 80, 70)),
            valid: vec![13],
            has_mc: true,
            has_c: true,
        },
        MaskFixture {
            name: "counts are taken after cropping",
            // LeftShoe keeps 5x10 px, RightShoe 6x5 px, Face has exactly 60.
            regions: vec![(18, 15, 10, 24, 19), (19, 75, 10, 86, 14), (13, 40, 40, 45, 49)],
            keypoints: centre.clone(),
            crop: Some((20, 10, 80, 70)),
            valid: vec![13],
            has_mc: true,
            has_c: true,
        },
        MaskFixture {
            name: "background only",
            regions: vec![],
            keypoints: centre,
            crop: Some((20, 10, 80, 70)),
            valid: vec![],
            has_mc: false,
            has_c: false,
        },
        MaskFixture {
            name: "keypoint near the bottom-right corner",
            // 3x30 px of LeftArm fall inside the crop.
            regions: vec![(14, 60, 50, 69, 79), (3, 90, 60, 95, 65), (10, 0, 0, 50, 79)],
            keypoints: kp(&[(97.5, 78.2, 1.0)]),
            crop: Some((67, 48, 99, 79)),
            valid: vec![14],
            has_mc: true,
            has_c: true,
        },
    ]
}
