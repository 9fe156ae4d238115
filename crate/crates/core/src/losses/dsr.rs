//! Image losses on rendered probabilities: soft-DistM, soft-IoU and the
//! four-class clothing negative log-likelihood.

use serde::{Deserialize, Serialize};

use super::{DistanceField, LossEval};
use crate::raster::ProbImage;
use crate::{Error, Result};

/// Smallest probability admitted under the log in [`dsr_c_nll`].
pub const PROB_FLOOR: f64 = 1e-8;

/// `sum(R * d) / sum(R)^(3/2)` over a single-channel render `r`.
///
/// Degenerate renders (`sum(R) <= 1e-12`) give a skipped zero loss.
pub fn soft_distm(r: &[f64], dist: &DistanceField) -> Result<LossEval> {
    if r.len() != dist.d.len() {
        return Err(Error::dim("render pixels", dist.d.len(), r.len()));
    }
    if r.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite { term: "soft-DistM render" });
    }
    let mass: f64 = r.iter().sum();
    if mass <= 1e-12 || dist.empty {
        return Ok(LossEval::skip(r.len()));
    }
    let num: f64 = r.iter().zip(&dist.d).map(|(a, b)| a * b).sum();
    let s15 = mass * mass.sqrt();
    let value = num / s15;
    let tail = 1.5 * value / mass;
    Ok(LossEval {
        value,
        grad: dist.d.iter().map(|d| d / s15 - tail).collect(),
        skipped: false,
    })
}

/// `1 - sum(P G) / sum(P + G - P G)`.
///
/// `p` is clamped into `[0, 1]` (with a warning); clamped pixels receive no
/// gradient. Both masks empty gives a skipped zero loss.
pub fn soft_iou_loss(p: &[f64], g: &[bool]) -> Result<LossEval> {
    if p.len() != g.len() {
        return Err(Error::dim("render pixels", g.len(), p.len()));
    }
    if p.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite { term: "soft-IoU render" });
    }
    let out_of_range = p.iter().filter(|&&v| !(0.0..=1.0).contains(&v)).count();
    if out_of_range > 0 {
        log::warn!("soft-IoU: clamping {out_of_range} probabilities into [0, 1]");
    }
    let mut inter = 0.0;
    let mut union = 0.0;
    for (&pv, &gv) in p.iter().zip(g) {
        let pv = pv.clamp(0.0, 1.0);
        if gv {
            inter += pv;
            union += 1.0;
        } else {
            union += pv;
        }
    }
    if union == 0.0 {
        return Ok(LossEval::skip(p.len()));
    }
    let u2 = union * union;
    let grad = p
        .iter()
        .zip(g)
        .map(|(&pv, &gv)| {
            if !(0.0..=1.0).contains(&pv) {
                0.0
            } else if gv {
                -1.0 / union
            } else {
                inter / u2
            }
        })
        .collect();
    Ok(LossEval {
        value: 1.0 - inter / union,
        grad,
        skipped: false,
    })
}

/// How per-pixel NLL values are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// Average over the counted pixels.
    #[default]
    Mean,
    /// Plain sum over the counted pixels.
    Sum,
}

/// Negative log-likelihood of the per-pixel target class under a softmax
/// across the rendered channels.
///
/// Pixels count when `silhouette` is set and the target is a valid class
/// index (anything `>= channels`, e.g. `255`, means "no target").
/// Probabilities are floored at [`PROB_FLOOR`]; floored pixels carry no
/// gradient. The gradient is laid out like `channels.data`.
pub fn dsr_c_nll(channels: &ProbImage, target: &[u8], silhouette: &[bool], reduction: Reduction) -> Result<LossEval> {
    let n = channels.width * channels.height;
    let nc = channels.channels();
    if target.len() != n {
        return Err(Error::dim("target pixels", n, target.len()));
    }
    if silhouette.len() != n {
        return Err(Error::dim("silhouette pixels", n, silhouette.len()));
    }
    if channels.data.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite { term: "DSR-C render" });
    }
    let mut grad = vec![0.0; channels.data.len()];
    let mut total = 0.0;
    let mut count = 0usize;
    let mut probs = vec![0.0; nc];
    for i in 0..n {
        let t = target[i] as usize;
        if !silhouette[i] || t >= nc {
            continue;
        }
        let x = &channels.data[i * nc..(i + 1) * nc];
        let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (p, &v) in probs.iter_mut().zip(x) {
            *p = (v - m).exp();
            z += *p;
        }
        let log_p = x[t] - m - z.ln();
        count += 1;
        if log_p.exp() < PROB_FLOOR {
            total -= PROB_FLOOR.ln();
            continue;
        }
        total -= log_p;
        let g = &mut grad[i * nc..(i + 1) * nc];
        for c in 0..nc {
            g[c] = probs[c] / z - if c == t { 1.0 } else { 0.0 };
        }
    }
    if count == 0 {
        return Ok(LossEval::skip(channels.data.len()));
    }
    if reduction == Reduction::Mean {
        let inv = 1.0 / count as f64;
        total /= count as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
    }
    Ok(LossEval {
        value: total,
        grad,
        skipped: false,
    })
}
