//! Axis-angle to rotation matrix conversion and its derivative.

use nalgebra::{Matrix3, Vector3};

// Below this angle the trigonometric coefficients switch to their Taylor
// expansions; the truncation error there is below 1e-18.
const SERIES_ANGLE: f64 = 0.05;

/// Coefficients of `R = I + a K + b K^2` (with `K = [w]x`, unnormalised) and
/// the derivatives `a'(t)/t`, `b'(t)/t` needed for the Jacobian.
fn coefficients(theta2: f64) -> (f64, f64, f64, f64) {
    if theta2 < SERIES_ANGLE * SERIES_ANGLE {
        series(theta2)
    } else {
        closed_form(theta2)
    }
}

fn series(t2: f64) -> (f64, f64, f64, f64) {
    let t4 = t2 * t2;
    let t6 = t4 * t2;
    let t8 = t4 * t4;
    let a = 1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0 + t8 / 362_880.0;
    let b = 0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40_320.0 + t8 / 3_628_800.0;
    let da = -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0 + t6 / 45_360.0;
    let db = -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0 + t6 / 453_600.0;
    (a, b, da, db)
}

fn closed_form(theta2: f64) -> (f64, f64, f64, f64) {
    let t = theta2.sqrt();
    let (s, c) = t.sin_cos();
    let half = (0.5 * t).sin();
    let a = s / t;
    let b = 2.0 * half * half / theta2;
    let da = (t * c - s) / (theta2 * t);
    let db = (t * s - 4.0 * half * half) / (theta2 * theta2);
    (a, b, da, db)
}

pub(crate) fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation matrix for an axis-angle vector (Rodrigues' formula).
///
/// The zero vector maps to the identity; small angles use a series
/// expansion so the map stays smooth through the origin.
pub fn rodrigues(axis_angle: [f64; 3]) -> Matrix3<f64> {
    let w = Vector3::from(axis_angle);
    let (a, b, _, _) = coefficients(w.norm_squared());
    let k = skew(&w);
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation matrix together with `dR/dw_k` for `k = 0, 1, 2`.
pub fn rodrigues_jacobian(axis_angle: [f64; 3]) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
    let w = Vector3::from(axis_angle);
    let (a, b, da, db) = coefficients(w.norm_squared());
    let k = skew(&w);
    let k2 = k * k;
    let r = Matrix3::identity() + k * a + k2 * b;
    let basis = [Vector3::x(), Vector3::y(), Vector3::z()];
    let jac = std::array::from_fn(|i| {
        let e = skew(&basis[i]);
        k * (da * w[i]) + e * a + k2 * (db * w[i]) + (e * k + k * e) * b
    });
    (r, jac)
}

/// Contracts a cotangent on `R` back to the axis-angle vector.
pub fn rodrigues_vjp(axis_angle: [f64; 3], grad_r: &Matrix3<f64>) -> [f64; 3] {
    let (_, jac) = rodrigues_jacobian(axis_angle);
    std::array::from_fn(|k| jac[k].component_mul(grad_r).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_is_identity() {
        assert_eq!(rodrigues([0.0; 3]), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rodrigues([0.0, 0.0, FRAC_PI_2]);
        let x = r * Vector3::x();
        assert!((x - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn orthonormal_with_unit_determinant() {
        for w in [[0.3, -1.2, 2.0], [1e-9, 0.0, 2e-9], [0.04, 0.01, -0.02]] {
            let r = rodrigues(w);
            assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-14);
            assert!((r.determinant() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        for w in [[0.3, -1.2, 2.0], [0.01, 0.02, -0.03], [0.0, 0.0, 0.0], [0.049, 0.0, 0.0]] {
            let (_, jac) = rodrigues_jacobian(w);
            for k in 0..3 {
                let h = 1e-6;
                let mut wp = w;
                let mut wm = w;
                wp[k] += h;
                wm[k] -= h;
                let fd = (rodrigues(wp) - rodrigues(wm)) / (2.0 * h);
                assert!((fd - jac[k]).norm() < 1e-8, "w={w:?} k={k}");
            }
        }
    }

    #[test]
    fn series_and_closed_form_agree_at_the_switch() {
        let t2 = SERIES_ANGLE * SERIES_ANGLE;
        let below = series(t2);
        let above = closed_form(t2);
        assert!((below.0 - above.0).abs() < 1e-9);
        assert!((below.1 - above.1).abs() < 1e-9);
        assert!((below.2 - above.2).abs() < 1e-9);
        assert!((below.3 - above.3).abs() < 1e-9);
    }
}
