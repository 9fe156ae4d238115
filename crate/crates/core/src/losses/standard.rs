//! Joint reprojection, 3D joint and parameter losses.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::LossWeights;
use crate::body::{rodrigues, rodrigues_vjp, BodyParams, Viewport, NUM_BETAS};
use crate::{Error, Result};

/// Ground truth for the supervised terms; absent terms contribute zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JointTargets {
    /// Pixel coordinates and confidence `(x, y, c)` per joint.
    pub joints_2d: Option<Vec<[f64; 3]>>,
    /// 3D joint positions; compared after centring on joint 0.
    pub joints_3d: Option<Vec<[f64; 3]>>,
    pub params: Option<BodyParams>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardLosses {
    pub l2d: f64,
    pub l3d: f64,
    pub ltheta: f64,
    /// `w_2d l2d + w_3d l3d + w_theta ltheta`.
    pub total: f64,
}

/// Gradients of [`StandardLosses::total`].
#[derive(Clone, Debug, PartialEq)]
pub struct StandardGrads {
    pub joints: Vec<[f64; 3]>,
    pub camera: [f64; 3],
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
}

fn check_finite(term: &'static str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite { term });
    }
    Ok(())
}

/// Evaluates the supervised loss terms for predicted `joints` (the joints of
/// the mesh produced by `pred`) and returns each term with the gradient of
/// the weighted total.
///
/// * `l2d`: confidence-weighted squared pixel error, summed over joints and
///   divided by the joint count.
/// * `l3d`: squared error of pelvis-centred joints, divided by the joint count.
/// * `ltheta`: mean squared difference of the per-joint rotation matrices
///   plus the mean squared difference of the shape coefficients.
pub fn standard_losses(
    pred: &BodyParams,
    joints: &[[f64; 3]],
    targets: &JointTargets,
    weights: &LossWeights,
    viewport: &Viewport,
) -> Result<(StandardLosses, StandardGrads)> {
    let nj = joints.len();
    let mut grads = StandardGrads {
        joints: vec![[0.0; 3]; nj],
        camera: [0.0; 3],
        theta: vec![0.0; pred.theta.len()],
        beta: vec![0.0; pred.beta.len()],
    };
    let mut out = StandardLosses::default();
    check_finite("predicted joints", joints.iter().flatten().copied())?;
    check_finite("predicted parameters", pred.to_vec())?;

    if let Some(t2d) = &targets.joints_2d {
        check_finite("l2d", t2d.iter().flatten().copied())?;
        if t2d.len() != nj {
            return Err(Error::dim("2D joint targets", nj, t2d.len()));
        }
        let f = viewport.scale();
        let cam = pred.camera;
        let inv = 1.0 / nj as f64;
        let gw = 2.0 * weights.w_2d * inv;
        for (j, (p, t)) in joints.iter().zip(t2d).enumerate() {
            let px = viewport.to_pixel(cam.apply(*p));
            let (dx, dy, c) = (px[0] - t[0], px[1] - t[1], t[2]);
            out.l2d += c * (dx * dx + dy * dy) * inv;
            let (gx, gy) = (gw * c * dx * f, gw * c * dy * f);
            grads.joints[j][0] += gx * cam.s;
            grads.joints[j][1] += gy * cam.s;
            grads.camera[0] += gx * (p[0] + cam.tx) + gy * (p[1] + cam.ty);
            grads.camera[1] += gx * cam.s;
            grads.camera[2] += gy * cam.s;
        }
    }

    if let Some(t3d) = &targets.joints_3d {
        check_finite("l3d", t3d.iter().flatten().copied())?;
        if t3d.len() != nj {
            return Err(Error::dim("3D joint targets", nj, t3d.len()));
        }
        if nj > 0 {
            let inv = 1.0 / nj as f64;
            let gw = 2.0 * weights.w_3d * inv;
            let (p0, t0) = (joints[0], t3d[0]);
            let mut root = [0.0; 3];
            for j in 0..nj {
                for k in 0..3 {
                    let d = (joints[j][k] - p0[k]) - (t3d[j][k] - t0[k]);
                    out.l3d += d * d * inv;
                    grads.joints[j][k] += gw * d;
                    root[k] += gw * d;
                }
            }
            for k in 0..3 {
                grads.joints[0][k] -= root[k];
            }
        }
    }

    if let Some(gt) = &targets.params {
        check_finite("ltheta", gt.theta.iter().chain(&gt.beta).copied())?;
        if gt.theta.len() != pred.theta.len() || gt.beta.len() != NUM_BETAS || pred.beta.len() != NUM_BETAS {
            return Err(Error::dim("parameter targets", pred.theta.len(), gt.theta.len()));
        }
        let joints_n = pred.theta.len() / 3;
        let inv_r = 1.0 / (9 * joints_n) as f64;
        for j in 0..joints_n {
            let w = pred.joint_axis_angle(j);
            let d: Matrix3<f64> = rodrigues(w) - rodrigues(gt.joint_axis_angle(j));
            out.ltheta += d.norm_squared() * inv_r;
            let g = rodrigues_vjp(w, &(d * (2.0 * weights.w_theta * inv_r)));
            grads.theta[3 * j..3 * j + 3].copy_from_slice(&g);
        }
        let inv_b = 1.0 / NUM_BETAS as f64;
        for k in 0..NUM_BETAS {
            let d = pred.beta[k] - gt.beta[k];
            out.ltheta += d * d * inv_b;
            grads.beta[k] = 2.0 * weights.w_theta * inv_b * d;
        }
    }

    out.total = weights.w_2d * out.l2d + weights.w_3d * out.l3d + weights.w_theta * out.ltheta;
    Ok((out, grads))
}
