//! Loss terms and their gradients with respect to rendered images and
//! body parameters.

mod dsr;
mod edt;
mod standard;
mod total;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dsr::{dsr_c_nll, soft_distm, soft_iou_loss, Reduction, PROB_FLOOR};
pub use edt::{distance_transform, DistanceField};
pub use standard::{standard_losses, JointTargets, StandardGrads, StandardLosses};
pub use total::{dsr_gate, total_loss, LossBreakdown, SampleTerms};

/// A scalar loss with its gradient with respect to the image it consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Set when the input was degenerate and the loss was forced to zero.
    pub skipped: bool,
}

impl LossEval {
    fn skip(n: usize) -> Self {
        LossEval {
            value: 0.0,
            grad: vec![0.0; n],
            skipped: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_2d: f64,
    pub w_3d: f64,
    pub w_theta: f64,
    pub w_mc: f64,
    pub w_c: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_2d: 1.0,
            w_3d: 1.0,
            w_theta: 1.0,
            w_mc: 0.01,
            w_c: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_2d", self.w_2d),
            ("w_3d", self.w_3d),
            ("w_theta", self.w_theta),
            ("w_mc", self.w_mc),
            ("w_c", self.w_c),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid("loss weights", format!("{name} must be a finite value >= 0, got {w}")));
            }
        }
        Ok(())
    }

    /// Weights with both semantic terms switched off.
    pub fn joints_only(self) -> Self {
        LossWeights {
            w_mc: 0.0,
            w_c: 0.0,
            ..self
        }
    }
}

/// Which image loss drives the minimal-clothing term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McLoss {
    #[default]
    SoftIou,
    SoftDistm,
}
