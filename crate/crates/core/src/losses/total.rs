//! Combination of supervised and semantic terms with warmup gating.

use serde::{Deserialize, Serialize};

use super::{LossWeights, StandardLosses};

/// Loss values of one sample. A `None` semantic term means the sample has
/// no valid target for it.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SampleTerms {
    pub standard: StandardLosses,
    pub mc: Option<f64>,
    pub c: Option<f64>,
}

/// One line of a loss trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub iter: usize,
    pub l2d: f64,
    pub l3d: f64,
    pub ltheta: f64,
    pub lmc: f64,
    pub lc: f64,
    pub total: f64,
}

/// True when a semantic term with weight `w` takes part at `iteration`.
pub fn dsr_gate(w: f64, iteration: usize, warmup: usize) -> bool {
    w > 0.0 && iteration >= warmup
}

/// Batch-mean of `L_SD + w_mc L_MC + w_c L_C`, where the semantic terms are
/// left out entirely before `warmup` and for samples without a valid target.
/// Component columns of the breakdown report the active (unweighted) means.
pub fn total_loss(samples: &[SampleTerms], weights: &LossWeights, iteration: usize, warmup: usize) -> LossBreakdown {
    let mut out = LossBreakdown {
        iter: iteration,
        ..Default::default()
    };
    if samples.is_empty() {
        return out;
    }
    let mc_on = dsr_gate(weights.w_mc, iteration, warmup);
    let c_on = dsr_gate(weights.w_c, iteration, warmup);
    for s in samples {
        out.l2d += s.standard.l2d;
        out.l3d += s.standard.l3d;
        out.ltheta += s.standard.ltheta;
        let mut sample_total = s.standard.total;
        if let (true, Some(v)) = (mc_on, s.mc) {
            out.lmc += v;
            sample_total += weights.w_mc * v;
        }
        if let (true, Some(v)) = (c_on, s.c) {
            out.lc += v;
            sample_total += weights.w_c * v;
        }
        out.total += sample_total;
    }
    if samples.len() > 1 {
        let n = samples.len() as f64;
        for v in [&mut out.l2d, &mut out.l3d, &mut out.ltheta, &mut out.lmc, &mut out.lc, &mut out.total] {
            *v /= n;
        }
    }
    out
}
