//! One evaluation of the fitting objective and its gradient.

use std::borrow::Cow;

use super::{FitSchedule, FitTargets, SemanticPrior};
use crate::body::{forward_vjp, forward_with_cache, regress_joints, regress_joints_vjp, BodyParams, BodyTemplate, NUM_BETAS, POSE_DIM};
use crate::losses::{
    dsr_c_nll, dsr_gate, soft_distm, soft_iou_loss, standard_losses, total_loss, DistanceField, LossBreakdown, McLoss,
    SampleTerms,
};
use crate::raster::{rasterize_hard, rasterize_soft, rasterize_soft_vjp, silhouette, visible_vertices, ProbImage, RasterConfig};
use crate::{Error, Result};

/// Everything that stays fixed across iterations of one fit.
pub struct Objective<'a> {
    pub template: &'a BodyTemplate,
    pub targets: &'a FitTargets,
    pub prior: Option<Cow<'a, SemanticPrior>>,
    pub raster: &'a RasterConfig,
    pub schedule: &'a FitSchedule,
    pub(crate) distance: Option<DistanceField>,
}

/// Loss breakdown and gradient of the weighted total with respect to the
/// flat parameter vector `[theta, beta, s, tx, ty]`.
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub grad: Vec<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(
        template: &'a BodyTemplate,
        targets: &'a FitTargets,
        prior: Option<&'a SemanticPrior>,
        raster: &'a RasterConfig,
        schedule: &'a FitSchedule,
    ) -> Result<Self> {
        raster.validate()?;
        schedule.validate()?;
        let n = raster.width * raster.height;
        if let Some(m) = &targets.mc {
            if m.len() != n {
                return Err(Error::dim("MC target pixels", n, m.len()));
            }
        }
        if let Some(c) = &targets.c {
            if c.len() != n {
                return Err(Error::dim("C target pixels", n, c.len()));
            }
        }
        if let Some(p) = prior {
            if p.num_vertices != template.num_vertices() {
                return Err(Error::dim("prior rows", template.num_vertices(), p.num_vertices));
            }
        }
        let distance = match (&targets.mc, schedule.mc_loss) {
            (Some(m), McLoss::SoftDistm) => Some(crate::losses::distance_transform(m, raster.width, raster.height, raster.exec)?),
            _ => None,
        };
        let prior = match (prior, &targets.mc_labels) {
            (Some(p), Some(labels)) => Some(Cow::Owned(p.restrict_mc(labels)?)),
            (p, _) => p.map(Cow::Borrowed),
        };
        Ok(Objective {
            template,
            targets,
            prior,
            raster,
            schedule,
            distance,
        })
    }

    fn semantic_terms(&self, iteration: usize) -> (bool, bool) {
        let w = &self.schedule.weights;
        let has_prior = self.prior.is_some();
        let mc = has_prior && self.targets.mc.is_some() && dsr_gate(w.w_mc, iteration, self.schedule.warmup);
        let c = has_prior && self.targets.c.is_some() && dsr_gate(w.w_c, iteration, self.schedule.warmup);
        (mc, c)
    }

    pub fn evaluate(&self, params: &BodyParams, iteration: usize) -> Result<Evaluation> {
        let (mesh, cache) = forward_with_cache(self.template, params)?;
        let joints = regress_joints(&mesh, self.template)?;
        let weights = &self.schedule.weights;
        let (standard, sgrad) =
            standard_losses(params, &joints, &self.targets.joints, weights, &self.raster.viewport())?;

        let mut terms = SampleTerms {
            standard,
            mc: None,
            c: None,
        };
        let mut g_vertices = vec![[0.0; 3]; mesh.vertices.len()];
        let mut g_camera = sgrad.camera;

        let (mc_on, c_on) = self.semantic_terms(iteration);
        if mc_on || c_on {
            let prior = self.prior.as_deref().expect("semantic terms require a prior");
            let hard = rasterize_hard(&mesh, &params.camera, self.raster)?;
            let visible = visible_vertices(&mesh, &hard);
            let nc = prior.channels();
            let attrs = crate::raster::masked_rows(&prior.rows, nc, &visible)?;
            let img = rasterize_soft(&mesh, &attrs, nc, &params.camera, self.raster)?;
            let mut cot = ProbImage::new(img.width, img.height, img.channel_names.clone());
            let mut any = false;

            if mc_on {
                let plane = img.channel(0);
                let eval = match self.schedule.mc_loss {
                    McLoss::SoftIou => soft_iou_loss(&plane, self.targets.mc.as_ref().unwrap())?,
                    McLoss::SoftDistm => soft_distm(&plane, self.distance.as_ref().unwrap())?,
                };
                if !eval.skipped {
                    terms.mc = Some(eval.value);
                    for (i, g) in eval.grad.iter().enumerate() {
                        cot.data[i * nc] += weights.w_mc * g;
                    }
                    any = true;
                }
            }
            if c_on {
                let c_img = ProbImage::from_planes(
                    img.width,
                    img.height,
                    prior.names[1..].to_vec(),
                    &(1..nc).map(|c| img.channel(c)).collect::<Vec<_>>(),
                )?;
                let sil = silhouette(&hard);
                let eval = dsr_c_nll(&c_img, self.targets.c.as_ref().unwrap(), &sil, self.schedule.reduction)?;
                if !eval.skipped {
                    terms.c = Some(eval.value);
                    let cc = nc - 1;
                    for (i, g) in eval.grad.iter().enumerate() {
                        let (px, ch) = (i / cc, i % cc);
                        cot.data[px * nc + ch + 1] += weights.w_c * g;
                    }
                    any = true;
                }
            }
            if any {
                let g = rasterize_soft_vjp(&mesh, &attrs, nc, &params.camera, self.raster, &cot)?;
                g_vertices = g.vertices;
                for k in 0..3 {
                    g_camera[k] += g.camera[k];
                }
            }
        }

        regress_joints_vjp(self.template, &sgrad.joints, &mut g_vertices)?;
        let (g_theta, g_beta) = forward_vjp(self.template, params, &cache, &g_vertices)?;

        let loss = total_loss(&[terms], weights, iteration, self.schedule.warmup);
        let mut grad = Vec::with_capacity(POSE_DIM + NUM_BETAS + 3);
        grad.extend(g_theta.iter().zip(&sgrad.theta).map(|(a, b)| a + b));
        grad.extend(g_beta.iter().zip(&sgrad.beta).map(|(a, b)| a + b));
        grad.extend_from_slice(&g_camera);
        Ok(Evaluation { loss, grad })
    }
}
