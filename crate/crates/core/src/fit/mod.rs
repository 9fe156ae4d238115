//! Gradient-based fitting of body parameters to joint and semantic targets.

mod metrics;
mod objective;

use serde::{Deserialize, Serialize};

use crate::body::{forward, BodyParams, BodyTemplate, TriangleMesh, NUM_BETAS, PARAM_DIM, POSE_DIM};
use crate::losses::{JointTargets, LossBreakdown, LossWeights, McLoss, Reduction};
use crate::masks::SampleTargets;
use crate::prior::{aggregate_labels, CoarseScheme, VertexLabelPrior, LABEL_NAMES, MC_LABELS};
use crate::raster::RasterConfig;
use crate::{Error, Result};

pub use metrics::{evaluate, procrustes, Metrics};
pub use objective::{Evaluation, Objective};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    GradientDescent,
    /// Adam with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    #[default]
    Adam,
}

/// Parameter groups the optimiser may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamMask {
    pub pose: bool,
    pub shape: bool,
    pub camera_scale: bool,
    pub camera_translation: bool,
}

impl Default for ParamMask {
    fn default() -> Self {
        ParamMask {
            pose: true,
            shape: true,
            camera_scale: true,
            camera_translation: true,
        }
    }
}

impl ParamMask {
    pub fn camera_translation_only() -> Self {
        ParamMask {
            pose: false,
            shape: false,
            camera_scale: false,
            camera_translation: true,
        }
    }

    fn allows(&self, index: usize) -> bool {
        match index {
            i if i < POSE_DIM => self.pose,
            i if i < POSE_DIM + NUM_BETAS => self.shape,
            i if i == PARAM_DIM - 3 => self.camera_scale,
            _ => self.camera_translation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSchedule {
    pub iterations: usize,
    /// Iterations before the semantic terms switch on.
    pub warmup: usize,
    pub step_size: f64,
    pub optimizer: Optimizer,
    pub weights: LossWeights,
    pub mask: ParamMask,
    pub mc_loss: McLoss,
    pub reduction: Reduction,
}

impl Default for FitSchedule {
    fn default() -> Self {
        FitSchedule::new(100)
    }
}

impl FitSchedule {
    /// Defaults with the warmup at a tenth of the iterations.
    pub fn new(iterations: usize) -> Self {
        FitSchedule {
            iterations,
            warmup: iterations / 10,
            step_size: 1e-2,
            optimizer: Optimizer::Adam,
            weights: LossWeights::default(),
            mask: ParamMask::default(),
            mc_loss: McLoss::SoftIou,
            reduction: Reduction::Mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup > self.iterations {
            return Err(Error::invalid(
                "fit schedule",
                format!("warmup ({}) exceeds iterations ({})", self.warmup, self.iterations),
            ));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::invalid("fit schedule", format!("step size must be > 0, got {}", self.step_size)));
        }
        self.weights.validate()
    }
}

/// Supervision for one fit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitTargets {
    pub joints: JointTargets,
    /// Binary minimal-clothing mask at raster resolution.
    pub mc: Option<Vec<bool>>,
    /// Coarse clothing classes at raster resolution.
    pub c: Option<Vec<u8>>,
    /// Labels that make up `mc`. The rendered minimal-clothing channel sums
    /// the prior over the same labels; `None` means all of [`MC_LABELS`].
    pub mc_labels: Option<Vec<u8>>,
    /// Reference mesh for the reported metrics.
    pub gt_mesh: Option<TriangleMesh>,
}

impl FitTargets {
    pub fn with_masks(joints: JointTargets, sample: &SampleTargets) -> Self {
        FitTargets {
            joints,
            mc: sample.mc_mask.clone(),
            c: sample.c_mask.clone(),
            mc_labels: Some(sample.valid_mc_labels.clone()),
            gt_mesh: None,
        }
    }

    fn has_any(&self) -> bool {
        self.joints.joints_2d.is_some()
            || self.joints.joints_3d.is_some()
            || self.joints.params.is_some()
            || self.mc.is_some()
            || self.c.is_some()
    }
}

/// Per-vertex rows rendered for the semantic terms: the minimal-clothing
/// probability followed by the four coarse clothing classes.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticPrior {
    pub names: Vec<String>,
    pub num_vertices: usize,
    pub rows: Vec<f64>,
    /// `V x 5` probabilities of the individual [`MC_LABELS`].
    pub mc_parts: Vec<f64>,
}

impl SemanticPrior {
    pub fn from_prior(prior: &VertexLabelPrior) -> Result<Self> {
        let mc = aggregate_labels(prior, &CoarseScheme::mc())?.select(&[1]);
        let c = aggregate_labels(prior, &CoarseScheme::dsr_c())?;
        let both = mc.stack(&c)?;
        let cols = MC_LABELS
            .iter()
            .map(|&l| prior.label_set.require(LABEL_NAMES[l as usize]))
            .collect::<Result<Vec<_>>>()?;
        let n = prior.label_set.len();
        let mc_parts = prior.probs.chunks(n).flat_map(|row| cols.iter().map(move |&i| row[i])).collect();
        Ok(SemanticPrior {
            names: both.names,
            num_vertices: both.num_vertices,
            rows: both.probs,
            mc_parts,
        })
    }

    /// Copy whose minimal-clothing channel sums only `labels`, which must
    /// be drawn from [`MC_LABELS`].
    pub fn restrict_mc(&self, labels: &[u8]) -> Result<SemanticPrior> {
        let k = MC_LABELS.len();
        let mut keep = [false; MC_LABELS.len()];
        for l in labels {
            let i = MC_LABELS
                .iter()
                .position(|m| m == l)
                .ok_or_else(|| Error::invalid("minimal-clothing labels", format!("label {l} is not a minimal-clothing label")))?;
            keep[i] = true;
        }
        let nc = self.channels();
        let mut out = self.clone();
        for (row, parts) in out.rows.chunks_mut(nc).zip(self.mc_parts.chunks(k)) {
            row[0] = parts.iter().zip(&keep).filter(|(_, &on)| on).map(|(p, _)| p).sum();
        }
        Ok(out)
    }

    pub fn channels(&self) -> usize {
        self.names.len()
    }
}

/// Final parameters, the per-iteration loss trace and, when a reference
/// mesh was given, the error metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BodyParams,
    pub trace: Vec<LossBreakdown>,
    pub metrics: Option<Metrics>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const MIN_SCALE: f64 = 1e-6;

fn step(x: &mut [f64], grad: &[f64], schedule: &FitSchedule, adam: &mut Adam) {
    let lr = schedule.step_size;
    adam.t += 1;
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let c1 = 1.0 - f64::powi(b1, adam.t);
    let c2 = 1.0 - f64::powi(b2, adam.t);
    for i in 0..x.len() {
        if !schedule.mask.allows(i) {
            continue;
        }
        let g = grad[i];
        match schedule.optimizer {
            Optimizer::GradientDescent => x[i] -= lr * g,
            Optimizer::Adam => {
                adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * g;
                adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * g * g;
                let mh = adam.m[i] / c1;
                let vh = adam.v[i] / c2;
                x[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
    let s = PARAM_DIM - 3;
    x[s] = x[s].max(MIN_SCALE);
}

fn finish(template: &BodyTemplate, targets: &FitTargets, params: BodyParams, trace: Vec<LossBreakdown>) -> Result<FitResult> {
    let metrics = match &targets.gt_mesh {
        Some(gt) => Some(evaluate(&forward(template, &params)?, gt, template)?),
        None => None,
    };
    Ok(FitResult { params, trace, metrics })
}

/// Runs the optimiser; see [`fit_with_observer`].
pub fn fit(
    template: &BodyTemplate,
    params0: &BodyParams,
    targets: &FitTargets,
    prior: Option<&SemanticPrior>,
    raster: &RasterConfig,
    schedule: &FitSchedule,
) -> Result<FitResult> {
    fit_with_observer(template, params0, targets, prior, raster, schedule, |_, _, _| {})
}

/// Minimises the weighted total loss from `params0`.
///
/// The trace holds the loss evaluated before each update, so it has one
/// entry per iteration. `observer` sees the parameters and loss of every
/// iteration before the update. A non-finite loss or gradient aborts with
/// [`Error::Diverged`] carrying the last finite state.
#[allow(clippy::too_many_arguments)]
pub fn fit_with_observer<F>(
    template: &BodyTemplate,
    params0: &BodyParams,
    targets: &FitTargets,
    prior: Option<&SemanticPrior>,
    raster: &RasterConfig,
    schedule: &FitSchedule,
    mut observer: F,
) -> Result<FitResult>
where
    F: FnMut(usize, &BodyParams, &LossBreakdown),
{
    params0.validate()?;
    if !targets.has_any() {
        return Err(Error::invalid("fit targets", "no supervision term is present"));
    }
    let objective = Objective::new(template, targets, prior, raster, schedule)?;
    let mut x = params0.to_vec();
    let mut params = params0.clone();
    let mut trace = Vec::with_capacity(schedule.iterations);
    let mut adam = Adam {
        m: vec![0.0; PARAM_DIM],
        v: vec![0.0; PARAM_DIM],
        t: 0,
    };
    for it in 0..schedule.iterations {
        let eval = objective.evaluate(&params, it)?;
        let bad = if !eval.loss.total.is_finite() {
            Some(format!("loss is {}", eval.loss.total))
        } else {
            eval.grad.iter().position(|g| !g.is_finite()).map(|i| format!("gradient entry {i} is not finite"))
        };
        if let Some(reason) = bad {
            let last = finish(template, targets, params, trace)
                .unwrap_or_else(|_| FitResult {
                    params: params0.clone(),
                    trace: Vec::new(),
                    metrics: None,
                });
            return Err(Error::Diverged {
                iteration: it,
                reason,
                last: Box::new(last),
            });
        }
        observer(it, &params, &eval.loss);
        trace.push(eval.loss);
        let before = x.clone();
        step(&mut x, &eval.grad, schedule, &mut adam);
        let next = BodyParams::from_slice(&x)?;
        if next.validate().is_err() {
            let last = finish(template, targets, BodyParams::from_slice(&before)?, trace.clone())?;
            return Err(Error::Diverged {
                iteration: it,
                reason: "update produced non-finite parameters".into(),
                last: Box::new(last),
            });
        }
        params = next;
    }
    finish(template, targets, params, trace)
}
