//! Synthetic data: clothing painted onto the procedural body, labelled
//! multi-view scans for prior building, fitting instances with known
//! ground truth, and small random triangle scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::body::{forward, regress_joints, BodyParams, BodyTemplate, Camera, TriangleMesh, Viewport, POSE_DIM};
use crate::losses::JointTargets;
use crate::masks::{clean_sample, LabelMask, MaskConfig, SampleTargets};
use crate::prior::{label, ScanObservation};
use crate::raster::{rasterize_hard, RasterConfig, SENTINEL_NONE};
use crate::{Exec, Result};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sleeves {
    None,
    Short,
    Long,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bottoms {
    Pants,
    Shorts,
    Skirt,
}

/// A procedural outfit; `top` is one of the upper-body garment labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outfit {
    pub top: u8,
    pub sleeves: Sleeves,
    pub bottoms: Bottoms,
    pub hat: bool,
    pub sunglasses: bool,
    pub gloves: bool,
    pub socks: bool,
    pub scarf: bool,
}

pub fn random_outfit<R: Rng>(rng: &mut R) -> Outfit {
    let top = match rng.random_range(0..10) {
        0..=5 => label::UPPER_CLOTHES,
        6 => label::DRESS,
        7 | 8 => label::COAT,
        _ => label::JUMPSUITS,
    };
    let sleeves = match rng.random_range(0..3) {
        0 => Sleeves::None,
        1 => Sleeves::Short,
        _ => Sleeves::Long,
    };
    let bottoms = match rng.random_range(0..4) {
        0 | 1 => Bottoms::Pants,
        2 => Bottoms::Shorts,
        _ => Bottoms::Skirt,
    };
    Outfit {
        top,
        sleeves: if top == label::COAT { Sleeves::Long } else { sleeves },
        bottoms,
        hat: rng.random_bool(0.2),
        sunglasses: rng.random_bool(0.15),
        gloves: rng.random_bool(0.1),
        socks: rng.random_bool(0.3),
        scarf: rng.random_bool(0.1),
    }
}

/// Fine label of every template vertex under `outfit`, decided from the
/// vertex's body part and rest position. Left is `+x`.
pub fn paint_vertices(template: &BodyTemplate, outfit: &Outfit) -> Vec<u8> {
    use label::*;
    template
        .vertices
        .iter()
        .zip(&template.part_labels)
        .map(|(p, &part)| {
            let left = p[0] > 0.0;
            let arm = if left { LEFT_ARM } else { RIGHT_ARM };
            let leg = if left { LEFT_LEG } else { RIGHT_LEG };
            let shoe = if left { LEFT_SHOE } else { RIGHT_SHOE };
            let lower = match (outfit.top, outfit.bottoms) {
                (JUMPSUITS, _) => JUMPSUITS,
                (DRESS, _) => DRESS,
                (_, Bottoms::Skirt) => SKIRT,
                _ => PANTS,
            };
            match part {
                15 => {
                    if outfit.hat && p[1] < -0.76 {
                        HAT
                    } else if outfit.sunglasses && p[2] < -0.05 && p[1] < -0.68 && p[1] > -0.74 {
                        SUNGLASSES
                    } else if p[2] < 0.01 && p[1] > -0.78 {
                        FACE
                    } else {
                        HAIR
                    }
                }
                12 => {
                    if outfit.scarf {
                        SCARF
                    } else {
                        FACE
                    }
                }
                3 | 6 | 9 | 13 | 14 => outfit.top,
                0 => {
                    if p[1] < -0.02 {
                        outfit.top
                    } else {
                        lower
                    }
                }
                16 | 17 => match outfit.sleeves {
                    Sleeves::None => arm,
                    _ => outfit.top,
                },
                18 | 19 => match outfit.sleeves {
                    Sleeves::Long => outfit.top,
                    _ => arm,
                },
                20 | 21 => arm,
                22 | 23 => {
                    if outfit.gloves {
                        GLOVE
                    } else {
                        arm
                    }
                }
                1 | 2 => {
                    if lower == DRESS && p[1] > 0.3 {
                        leg
                    } else {
                        lower
                    }
                }
                4 | 5 => match (lower, outfit.bottoms) {
                    (JUMPSUITS, _) => JUMPSUITS,
                    (PANTS, Bottoms::Pants) => PANTS,
                    _ => leg,
                },
                _ => {
                    if p[1] > 0.895 {
                        shoe
                    } else if outfit.socks {
                        SOCKS
                    } else if lower == JUMPSUITS || (lower == PANTS && outfit.bottoms == Bottoms::Pants) {
                        lower
                    } else {
                        leg
                    }
                }
            }
        })
        .collect()
}

/// How far garments of each label stand off the skin, in metres.
fn thickness(l: u8) -> f64 {
    use label::*;
    match l {
        COAT => 0.025,
        SKIRT | DRESS => 0.03,
        UPPER_CLOTHES | PANTS | JUMPSUITS | SCARF => 0.015,
        HAT => 0.02,
        HAIR => 0.012,
        LEFT_SHOE | RIGHT_SHOE => 0.008,
        GLOVE | SOCKS => 0.004,
        _ => 0.0,
    }
}

/// Pushes garment vertices out along the vertex normals.
pub fn dress(mesh: &TriangleMesh, vertex_labels: &[u8]) -> TriangleMesh {
    let normals = mesh.vertex_normals();
    let vertices = mesh
        .vertices
        .iter()
        .zip(&normals)
        .zip(vertex_labels)
        .map(|((p, n), &l)| {
            let t = thickness(l);
            [p[0] + t * n[0], p[1] + t * n[1], p[2] + t * n[2]]
        })
        .collect();
    TriangleMesh::new(vertices, mesh.faces.clone())
}

/// Hard-renders per-vertex labels: each covered pixel takes the label of
/// the visible face's vertex with the largest barycentric weight.
pub fn render_vertex_labels(
    mesh: &TriangleMesh,
    vertex_labels: &[u8],
    camera: &Camera,
    width: usize,
    height: usize,
    exec: Exec,
) -> Result<LabelMask> {
    let cfg = RasterConfig {
        exec,
        ..RasterConfig::with_size(width, height)
    };
    let hard = rasterize_hard(mesh, camera, &cfg)?;
    let vp = Viewport::new(width, height);
    let mut labels = vec![label::BACKGROUND; width * height];
    for y in 0..height {
        for x in 0..width {
            let f = hard.face_index[y * width + x];
            if f == SENTINEL_NONE {
                continue;
            }
            let face = mesh.faces[f as usize];
            let p = face.map(|v| camera.apply(mesh.vertices[v as usize]));
            let q = vp.pixel_center_ndc(x, y);
            let area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
            let mut best = (0usize, f64::NEG_INFINITY);
            for i in 0..3 {
                let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                let w = ((a[0] - q[0]) * (b[1] - q[1]) - (a[1] - q[1]) * (b[0] - q[0])) / area;
                if w > best.1 {
                    best = (i, w);
                }
            }
            labels[y * width + x] = vertex_labels[face[best.0] as usize];
        }
    }
    Ok(LabelMask { width, height, labels })
}

/// Camera framing the standing body in a square image.
pub fn default_camera() -> Camera {
    Camera {
        s: 0.95,
        tx: 0.0,
        ty: -0.06,
    }
}

/// A plausible random pose: arms lowered from the T-pose, moderate bends
/// elsewhere, small global tilt.
pub fn random_pose<R: Rng>(rng: &mut R, shape_std: f64) -> BodyParams {
    let mut p = BodyParams::zeros(default_camera());
    let n = |rng: &mut R, s: f64| Normal::new(0.0, s).unwrap().sample(rng);
    for j in 1..24 {
        for k in 0..3 {
            p.theta[3 * j + k] = n(rng, 0.12);
        }
    }
    for k in 0..3 {
        p.theta[k] = n(rng, 0.05);
    }
    // Shoulders: lower the arms.
    p.theta[3 * 16 + 2] += rng.random_range(0.5..1.1);
    p.theta[3 * 17 + 2] -= rng.random_range(0.5..1.1);
    // Elbows and knees bend one way.
    p.theta[3 * 18 + 1] -= rng.random_range(0.0..0.6);
    p.theta[3 * 19 + 1] += rng.random_range(0.0..0.6);
    p.theta[3 * 4] += rng.random_range(0.0..0.4);
    p.theta[3 * 5] += rng.random_range(0.0..0.4);
    for b in p.beta.iter_mut() {
        *b = n(rng, shape_std);
    }
    p
}

/// Registered meshes of `subjects` random dressed bodies, each seen from
/// `views` yaw angles, with label images rendered from the dressed mesh.
pub fn scan_set(
    template: &BodyTemplate,
    subjects: usize,
    views: usize,
    size: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<ScanObservation>> {
    let mut r = rng(seed);
    let specs: Vec<(Outfit, BodyParams)> = (0..subjects)
        .map(|_| {
            let o = random_outfit(&mut r);
            let mut p = random_pose(&mut r, 0.5);
            p.theta[..3].iter_mut().for_each(|v| *v = 0.0);
            (o, p)
        })
        .collect();
    let jobs = exec.map(subjects * views, |i| -> Result<ScanObservation> {
        let (outfit, base) = &specs[i / views];
        let yaw = std::f64::consts::TAU * (i % views) as f64 / views as f64;
        let mut p = base.clone();
        p.theta[1] = yaw;
        let mesh = forward(template, &p)?;
        let labels = paint_vertices(template, outfit);
        let clothed = dress(&mesh, &labels);
        let image = render_vertex_labels(&clothed, &labels, &p.camera, size, size, Exec::Sequential)?;
        Ok(ScanObservation {
            mesh,
            camera: p.camera,
            labels: image,
        })
    });
    jobs.into_iter().collect()
}

/// A fitting problem with known ground truth.
#[derive(Clone, Debug)]
pub struct FitInstance {
    pub gt: BodyParams,
    pub init: BodyParams,
    pub gt_mesh: TriangleMesh,
    pub outfit: Outfit,
    pub joints: JointTargets,
    pub labels: LabelMask,
    pub sample: SampleTargets,
}

/// Random ground truth, dressed label rendering, cleaned targets and an
/// initialisation with Gaussian noise of `pose_noise` radians on every pose
/// entry (shape and camera start at the truth).
pub fn fit_instance(template: &BodyTemplate, seed: u64, size: usize, pose_noise: f64) -> Result<FitInstance> {
    let mut r = rng(seed);
    let outfit = random_outfit(&mut r);
    let gt = random_pose(&mut r, 0.5);
    let gt_mesh = forward(template, &gt)?;
    let joints3d = regress_joints(&gt_mesh, template)?;
    let vp = Viewport::new(size, size);
    let joints2d: Vec<[f64; 3]> = joints3d
        .iter()
        .map(|p| {
            let px = vp.to_pixel(gt.camera.apply(*p));
            [px[0], px[1], 1.0]
        })
        .collect();
    let vertex_labels = paint_vertices(template, &outfit);
    let clothed = dress(&gt_mesh, &vertex_labels);
    let labels = render_vertex_labels(&clothed, &vertex_labels, &gt.camera, size, size, Exec::Sequential)?;
    let sample = clean_sample(&labels, &joints2d, &MaskConfig::default())?;
    let mut init = gt.clone();
    let noise = Normal::new(0.0, pose_noise).map_err(|e| crate::Error::invalid("pose noise", e.to_string()))?;
    for v in init.theta.iter_mut().take(POSE_DIM) {
        *v += noise.sample(&mut r);
    }
    Ok(FitInstance {
        gt,
        init,
        gt_mesh,
        outfit,
        joints: JointTargets {
            joints_2d: Some(joints2d),
            joints_3d: Some(joints3d),
            params: None,
        },
        labels,
        sample,
    })
}

/// `n` random triangles inside the unit square with depths in
/// `(-0.8, 0.8)`; roughly half face away from the camera.
pub fn random_scene<R: Rng>(rng: &mut R, n: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(3 * n);
    let mut faces = Vec::with_capacity(n);
    for f in 0..n {
        let c = [rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)];
        let z0: f64 = rng.random_range(-0.6..0.6);
        for _ in 0..3 {
            vertices.push([
                c[0] + rng.random_range(-0.5..0.5),
                c[1] + rng.random_range(-0.5..0.5),
                z0 + rng.random_range(-0.2..0.2),
            ]);
        }
        let b = 3 * f as u32;
        faces.push([b, b + 1, b + 2]);
    }
    TriangleMesh::new(vertices, faces)
}
