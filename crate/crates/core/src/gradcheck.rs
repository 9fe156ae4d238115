//! Finite-difference verification of every analytic gradient in the crate.
//!
//! Each group compares an analytic gradient against central differences
//! and reports the normwise relative error
//! `max_i |g_fd - g| / max(max_i |g|, 1e-12)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::body::procedural::{humanoid, Resolution};
use crate::body::{BodyParams, NUM_BETAS, POSE_DIM};
use crate::fit::{FitSchedule, FitTargets, Objective, SemanticPrior};
use crate::fixtures::{random_pose, random_scene, rng};
use crate::losses::{distance_transform, dsr_c_nll, soft_distm, soft_iou_loss, JointTargets, Reduction};
use crate::prior::{normalize_counts, LabelCounts, NUM_LABELS};
use crate::raster::{channel_names, rasterize_soft, rasterize_soft_vjp, ProbImage, RasterConfig};
use crate::{Error, Exec, Result};

/// Arithmetic used for the finite-difference evaluations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    #[default]
    Double,
    /// Forward values rounded to `f32`, emulating a single-precision build.
    Single,
}

impl Precision {
    pub fn tolerance(self) -> f64 {
        match self {
            Precision::Double => 1e-4,
            Precision::Single => 1e-2,
        }
    }

    fn default_step(self) -> f64 {
        match self {
            Precision::Double => 1e-6,
            Precision::Single => 1e-3,
        }
    }

    fn round(self, v: f64) -> f64 {
        match self {
            Precision::Double => v,
            Precision::Single => v as f32 as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckOptions {
    /// Image edge length of the fixtures.
    pub size: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Central-difference step; `None` picks one suited to the precision.
    pub step: Option<f64>,
    pub sigma: f64,
    pub gamma: f64,
    /// Triangles in the random raster scene.
    pub triangles: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            size: 16,
            seed: 0,
            precision: Precision::Double,
            step: None,
            sigma: 2e-3,
            gamma: 1e-1,
            triangles: 6,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub name: String,
    pub max_rel_err: f64,
    pub entries: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub precision: Precision,
    pub tolerance: f64,
    pub step: f64,
    pub groups: Vec<GroupResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }
}

/// Normwise relative error between two gradients.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / scale
}

/// Central differences of `f` at `x` along every coordinate.
pub fn central_differences<F>(x: &[f64], h: f64, exec: Exec, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    exec.map(x.len(), |i| {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        Ok((f(&xp)? - f(&xm)?) / (2.0 * h))
    })
    .into_iter()
    .collect()
}

struct Checker<'a> {
    opts: &'a GradcheckOptions,
    step: f64,
    groups: Vec<GroupResult>,
}

impl Checker<'_> {
    fn check<F>(&mut self, name: &str, x: &[f64], analytic: &[f64], f: F) -> Result<()>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync + Send,
    {
        self.check_split(&[(name, 0..x.len())], x, analytic, f)
    }

    /// One finite-difference sweep reported as several named slices.
    fn check_split<F>(&mut self, parts: &[(&str, std::ops::Range<usize>)], x: &[f64], analytic: &[f64], f: F) -> Result<()>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync + Send,
    {
        let p = self.opts.precision;
        let numeric = central_differences(x, self.step, self.opts.exec, |x| f(x).map(|v| p.round(v)))?;
        for (name, range) in parts {
            let err = relative_error(&analytic[range.clone()], &numeric[range.clone()]);
            self.groups.push(GroupResult {
                name: name.to_string(),
                max_rel_err: err,
                entries: range.len(),
                passed: err < p.tolerance(),
            });
        }
        Ok(())
    }
}

fn contract(img: &ProbImage, cot: &ProbImage) -> f64 {
    img.data.iter().zip(&cot.data).map(|(a, b)| a * b).sum()
}

/// Runs every gradient group on small seeded fixtures.
pub fn run(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    if opts.size == 0 || opts.size > 64 {
        return Err(Error::invalid("gradcheck size", format!("must lie in 1..=64, got {}", opts.size)));
    }
    let cfg = RasterConfig {
        sigma: opts.sigma,
        gamma: opts.gamma,
        exec: Exec::Sequential,
        ..RasterConfig::with_size(opts.size, opts.size)
    };
    cfg.validate()?;
    let step = opts.step.unwrap_or(opts.precision.default_step());
    if !(step > 0.0) {
        return Err(Error::invalid("gradcheck step", format!("must be > 0, got {step}")));
    }
    let mut c = Checker {
        opts,
        step,
        groups: Vec::new(),
    };
    let mut r = rng(opts.seed);
    let n = opts.size * opts.size;

    // Rasterizer.
    let nc = 2;
    let scene = random_scene(&mut r, opts.triangles);
    let nv = scene.vertices.len();
    let attrs: Vec<f64> = (0..nv * nc).map(|_| r.random_range(0.0..1.0)).collect();
    let camera = crate::body::Camera { s: 0.9, tx: 0.05, ty: -0.03 };
    let mut cot = ProbImage::new(opts.size, opts.size, channel_names(nc));
    cot.data.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
    let g = rasterize_soft_vjp(&scene, &attrs, nc, &camera, &cfg, &cot)?;

    let xv: Vec<f64> = scene.vertices.iter().flatten().copied().collect();
    let gv: Vec<f64> = g.vertices.iter().flatten().copied().collect();
    c.check("raster/vertices", &xv, &gv, |x| {
        let mut m = scene.clone();
        m.vertices = x.chunks(3).map(|p| [p[0], p[1], p[2]]).collect();
        Ok(contract(&rasterize_soft(&m, &attrs, nc, &camera, &cfg)?, &cot))
    })?;
    c.check("raster/attributes", &attrs, &g.attributes, |x| {
        Ok(contract(&rasterize_soft(&scene, x, nc, &camera, &cfg)?, &cot))
    })?;
    let xc = [camera.s, camera.tx, camera.ty];
    c.check("raster/camera", &xc, &g.camera, |x| {
        let cam = crate::body::Camera { s: x[0], tx: x[1], ty: x[2] };
        Ok(contract(&rasterize_soft(&scene, &attrs, nc, &cam, &cfg)?, &cot))
    })?;

    // Image losses.
    let mask: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
    let dist = distance_transform(&mask, opts.size, opts.size, Exec::Sequential)?;
    let rimg: Vec<f64> = (0..n).map(|_| r.random_range(0.05..0.95)).collect();
    let e = soft_distm(&rimg, &dist)?;
    c.check("loss/soft-distm", &rimg, &e.grad, |x| Ok(soft_distm(x, &dist)?.value))?;
    let e = soft_iou_loss(&rimg, &mask)?;
    c.check("loss/soft-iou", &rimg, &e.grad, |x| Ok(soft_iou_loss(x, &mask)?.value))?;
    let ch: Vec<f64> = (0..n * 4).map(|_| r.random_range(0.0..1.0)).collect();
    let target: Vec<u8> = (0..n).map(|_| r.random_range(0..4)).collect();
    let sil: Vec<bool> = (0..n).map(|_| r.random_bool(0.7)).collect();
    let img = |x: &[f64]| ProbImage {
        width: opts.size,
        height: opts.size,
        channel_names: channel_names(4),
        data: x.to_vec(),
    };
    let e = dsr_c_nll(&img(&ch), &target, &sil, Reduction::Mean)?;
    c.check("loss/dsr-c-nll", &ch, &e.grad, |x| Ok(dsr_c_nll(&img(x), &target, &sil, Reduction::Mean)?.value))?;

    // End-to-end: parameters -> mesh -> render -> every loss.
    let template = humanoid(Resolution::Small);
    let gt = random_pose(&mut r, 0.5);
    let mut params = gt.clone();
    for v in params.theta.iter_mut() {
        *v += r.random_range(-0.1..0.1);
    }
    params.camera.tx += 0.02;
    let gt_mesh = crate::body::forward(&template, &gt)?;
    let joints3d = crate::body::regress_joints(&gt_mesh, &template)?;
    let vp = cfg.viewport();
    let targets = FitTargets {
        joints: JointTargets {
            joints_2d: Some(
                joints3d
                    .iter()
                    .map(|p| {
                        let q = vp.to_pixel(gt.camera.apply(*p));
                        [q[0], q[1], 1.0]
                    })
                    .collect(),
            ),
            joints_3d: Some(joints3d),
            params: Some(gt.clone()),
        },
        mc: Some((0..n).map(|i| (i % opts.size) > opts.size / 2).collect()),
        c: Some((0..n).map(|i| ((i / opts.size) * 4 / opts.size) as u8).collect()),
        mc_labels: None,
        gt_mesh: None,
    };
    let mut counts = LabelCounts::zeros(template.num_vertices());
    counts.counts.iter_mut().for_each(|v| *v = r.random_range(0..5));
    let prior = SemanticPrior::from_prior(&normalize_counts(&counts, 0.05)?)?;
    debug_assert_eq!(counts.counts.len(), template.num_vertices() * NUM_LABELS);
    let mut schedule = FitSchedule::new(1);
    schedule.warmup = 0;
    schedule.weights.w_mc = 1.0;
    schedule.weights.w_c = 1.0;
    let objective = Objective::new(&template, &targets, Some(&prior), &cfg, &schedule)?;
    let eval = objective.evaluate(&params, 0)?;
    let x = params.to_vec();
    let parts = [
        ("chain/theta", 0..POSE_DIM),
        ("chain/beta", POSE_DIM..POSE_DIM + NUM_BETAS),
        ("chain/camera", POSE_DIM + NUM_BETAS..x.len()),
    ];
    c.check_split(&parts, &x, &eval.grad, |x| {
        Ok(objective.evaluate(&BodyParams::from_slice(x)?, 0)?.loss.total)
    })?;

    Ok(GradcheckReport {
        precision: opts.precision,
        tolerance: opts.precision.tolerance(),
        step,
        groups: c.groups,
    })
}
