//! Joint and vertex error metrics.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::body::{regress_joints, BodyTemplate, TriangleMesh};
use crate::{Error, Result};

/// Errors in millimetres.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pa_mpjpe: f64,
    pub mpjpe: f64,
    pub pve: f64,
}

fn v3(p: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

/// Similarity transform `(s, R, t)` minimising `sum |s R x_i + t - y_i|^2`.
pub fn procrustes(x: &[[f64; 3]], y: &[[f64; 3]]) -> Result<(f64, Matrix3<f64>, Vector3<f64>)> {
    if x.len() != y.len() {
        return Err(Error::dim("procrustes point sets", x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::invalid("procrustes", "empty point sets"));
    }
    let n = x.len() as f64;
    let mx = x.iter().map(v3).sum::<Vector3<f64>>() / n;
    let my = y.iter().map(v3).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (a, b) in x.iter().zip(y) {
        let xa = v3(a) - mx;
        let yb = v3(b) - my;
        cov += yb * xa.transpose();
        var_x += xa.norm_squared();
    }
    if var_x == 0.0 {
        return Ok((1.0, Matrix3::identity(), my - mx));
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    let s = (Matrix3::from_diagonal(&svd.singular_values) * d).trace() / var_x;
    let t = my - r * mx * s;
    Ok((s, r, t))
}

fn mean_dist(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (v3(p) - v3(q)).norm()).sum::<f64>() / a.len().max(1) as f64
}

fn centred(points: &[[f64; 3]], root: [f64; 3]) -> Vec<[f64; 3]> {
    points
        .iter()
        .map(|p| [p[0] - root[0], p[1] - root[1], p[2] - root[2]])
        .collect()
}

/// MPJPE and PVE after aligning the root joints; PA-MPJPE after the best
/// similarity transform of the predicted joints.
pub fn evaluate(pred: &TriangleMesh, gt: &TriangleMesh, template: &BodyTemplate) -> Result<Metrics> {
    if pred.vertices.len() != gt.vertices.len() || pred.faces != gt.faces {
        return Err(Error::invalid("evaluation meshes", "prediction and ground truth differ in topology"));
    }
    let jp = regress_joints(pred, template)?;
    let jg = regress_joints(gt, template)?;
    if jp.is_empty() {
        return Err(Error::invalid("evaluation", "template has no joints"));
    }
    let (rp, rg) = (jp[0], jg[0]);
    let mpjpe = mean_dist(&centred(&jp, rp), &centred(&jg, rg));
    let pve = mean_dist(&centred(&pred.vertices, rp), &centred(&gt.vertices, rg));
    let (s, r, t) = procrustes(&jp, &jg)?;
    let aligned: Vec<[f64; 3]> = jp
        .iter()
        .map(|p| {
            let q = r * v3(p) * s + t;
            [q.x, q.y, q.z]
        })
        .collect();
    let pa = mean_dist(&aligned, &jg);
    let m = Metrics {
        pa_mpjpe: pa * 1000.0,
        mpjpe: mpjpe * 1000.0,
        pve: pve * 1000.0,
    };
    if !(m.pa_mpjpe.is_finite() && m.mpjpe.is_finite() && m.pve.is_finite()) {
        return Err(Error::NonFinite { term: "evaluation metrics" });
    }
    Ok(m)
}
