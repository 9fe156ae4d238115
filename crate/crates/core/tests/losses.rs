mod common;

use common::{brute_edt, distm_oracle, iou_loss_oracle, nll_oracle, random_mask, random_unit};
use dsr_core::body::{BodyParams, Camera, Viewport, NUM_BETAS, NUM_JOINTS, POSE_DIM};
use dsr_core::fixtures::rng;
use dsr_core::losses::{
    distance_transform, dsr_c_nll, dsr_gate, soft_distm, soft_iou_loss, standard_losses, total_loss, JointTargets,
    LossWeights, Reduction, SampleTerms, StandardLosses, PROB_FLOOR,
};
use dsr_core::raster::ProbImage;
use dsr_core::Exec;
use proptest::prelude::*;
use rand::Rng;

fn image(w: usize, h: usize, nc: usize, data: Vec<f64>) -> ProbImage {
    let mut img = ProbImage::new(w, h, (0..nc).map(|c| format!("c{c}")).collect());
    img.data = data;
    img
}

fn central<F: Fn(&[f64]) -> f64>(x: &[f64], f: F) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn distance_transform_matches_brute_force() {
    for seed in 0..40 {
        let density = [0.02, 0.1, 0.5][seed as usize % 3];
        let (w, h) = (13 + seed as usize % 5, 9 + seed as usize % 7);
        let mask = random_mask(seed, w, h, density);
        if !mask.iter().any(|&m| m) {
            continue;
        }
        let got = distance_transform(&mask, w, h, Exec::Sequential).unwrap();
        assert_eq!(got.d, brute_edt(&mask, w, h), "seed {seed}");
        assert!(!got.empty);
    }
}

#[test]
fn empty_mask_yields_the_diagonal_and_skips() {
    let f = distance_transform(&[false; 12], 4, 3, Exec::Sequential).unwrap();
    assert!(f.empty);
    assert!(f.d.iter().all(|&d| d == 5.0));
    let l = soft_distm(&[0.5; 12], &f).unwrap();
    assert!(l.skipped);
    assert_eq!(l.value, 0.0);
}

#[test]
fn distance_transform_policies_agree() {
    let mask = random_mask(77, 40, 33, 0.03);
    let a = distance_transform(&mask, 40, 33, Exec::Sequential).unwrap();
    let b = distance_transform(&mask, 40, 33, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn soft_distm_hand_example() {
    // Mask at pixel 0 of a 1x3 strip; distances 0, 1, 2.
    let f = distance_transform(&[true, false, false], 3, 1, Exec::Sequential).unwrap();
    let l = soft_distm(&[1.0, 1.0, 2.0], &f).unwrap();
    assert!((l.value - 5.0 / 8.0).abs() < 1e-15);
}

#[test]
fn soft_iou_hand_example() {
    let l = soft_iou_loss(&[1.0, 0.5, 0.0, 0.25], &[true, true, false, false]).unwrap();
    // I = 1.5, U = 1 + 1 + 0 + 0.25.
    assert!((l.value - (1.0 - 1.5 / 2.25)).abs() < 1e-15);
}

#[test]
fn soft_iou_skips_when_both_masks_are_empty() {
    let l = soft_iou_loss(&[0.0; 4], &[false; 4]).unwrap();
    assert!(l.skipped);
}

#[test]
fn image_loss_gradients_match_finite_differences() {
    let (w, h) = (6, 5);
    let mask = random_mask(3, w, h, 0.3);
    let f = distance_transform(&mask, w, h, Exec::Sequential).unwrap();
    let r: Vec<f64> = random_unit(4, w * h).iter().map(|v| 0.05 + 0.9 * v).collect();

    let g = soft_distm(&r, &f).unwrap().grad;
    let n = central(&r, |x| soft_distm(x, &f).unwrap().value);
    assert!(common::max_abs_diff(&g, &n) < 1e-7);

    let g = soft_iou_loss(&r, &mask).unwrap().grad;
    let n = central(&r, |x| soft_iou_loss(x, &mask).unwrap().value);
    assert!(common::max_abs_diff(&g, &n) < 1e-7);

    let x = random_unit(5, w * h * 4);
    let mut rr = rng(6);
    let target: Vec<u8> = (0..w * h).map(|_| [0, 1, 2, 3, 255][rr.random_range(0..5)]).collect();
    let sil = random_mask(7, w, h, 0.7);
    for red in [Reduction::Mean, Reduction::Sum] {
        let g = dsr_c_nll(&image(w, h, 4, x.clone()), &target, &sil, red).unwrap().grad;
        let n = central(&x, |v| dsr_c_nll(&image(w, h, 4, v.to_vec()), &target, &sil, red).unwrap().value);
        assert!(common::max_abs_diff(&g, &n) < 1e-7);
    }
}

#[test]
fn nll_is_ln_4_on_uniform_channels() {
    let img = image(3, 3, 4, vec![0.3; 36]);
    let l = dsr_c_nll(&img, &[0, 1, 2, 3, 0, 1, 2, 3, 0], &[true; 9], Reduction::Mean).unwrap();
    assert!((l.value - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn nll_counts_only_silhouette_pixels_with_valid_targets() {
    let img = image(2, 2, 4, random_unit(1, 16));
    let l = dsr_c_nll(&img, &[255, 1, 2, 4], &[true, true, false, true], Reduction::Sum).unwrap();
    let row = &img.data[4..8];
    let z: f64 = row.iter().map(|v| v.exp()).sum();
    assert!((l.value + (row[1].exp() / z).ln()).abs() < 1e-12);
    assert!(l.grad[..4].iter().chain(&l.grad[8..]).all(|&g| g == 0.0));
    let none = dsr_c_nll(&img, &[255; 4], &[true; 4], Reduction::Mean).unwrap();
    assert!(none.skipped);
}

#[test]
fn floored_pixels_carry_no_gradient() {
    let img = image(1, 1, 4, vec![0.0, 40.0, 0.0, 0.0]);
    let l = dsr_c_nll(&img, &[0], &[true], Reduction::Mean).unwrap();
    assert!((l.value + PROB_FLOOR.ln()).abs() < 1e-12);
    assert!(l.grad.iter().all(|&g| g == 0.0));
}

fn params(seed: u64) -> BodyParams {
    let mut r = rng(seed);
    let mut p = BodyParams::zeros(Camera { s: 0.9, tx: 0.1, ty: -0.05 });
    p.theta.iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
    p.beta.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
    p
}

fn random_joints(seed: u64) -> Vec<[f64; 3]> {
    let mut r = rng(seed);
    (0..NUM_JOINTS).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect()
}

fn rot(w: [f64; 3]) -> [[f64; 3]; 3] {
    // Matrix exponential of the skew matrix by truncated series.
    let k = [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]];
    let mut out = [[0.0; 3]; 3];
    let mut term = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for n in 1..40 {
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] += term[i][j];
            }
        }
        let mut next = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                next[i][j] = (0..3).map(|m| term[i][m] * k[m][j]).sum::<f64>() / n as f64;
            }
        }
        term = next;
    }
    out
}

#[test]
fn standard_losses_match_scalar_formulas() {
    let pred = params(1);
    let gt = params(2);
    let joints = random_joints(3);
    let vp = Viewport::new(64, 48);
    let mut r = rng(4);
    let t2d: Vec<[f64; 3]> = (0..NUM_JOINTS).map(|_| [r.random_range(0.0..64.0), r.random_range(0.0..48.0), r.random()]).collect();
    let t3d = random_joints(5);
    let targets = JointTargets { joints_2d: Some(t2d.clone()), joints_3d: Some(t3d.clone()), params: Some(gt.clone()) };
    let w = LossWeights { w_2d: 0.5, w_3d: 2.0, w_theta: 3.0, ..Default::default() };
    let (l, _) = standard_losses(&pred, &joints, &targets, &w, &vp).unwrap();

    let nj = NUM_JOINTS as f64;
    let c = pred.camera;
    let l2d: f64 = joints
        .iter()
        .zip(&t2d)
        .map(|(p, t)| {
            let u = 24.0 * c.s * (p[0] + c.tx) + 32.0;
            let v = 24.0 * c.s * (p[1] + c.ty) + 24.0;
            t[2] * ((u - t[0]).powi(2) + (v - t[1]).powi(2))
        })
        .sum::<f64>()
        / nj;
    let l3d: f64 = (0..NUM_JOINTS)
        .map(|j| (0..3).map(|k| ((joints[j][k] - joints[0][k]) - (t3d[j][k] - t3d[0][k])).powi(2)).sum::<f64>())
        .sum::<f64>()
        / nj;
    let mut lt = 0.0;
    for j in 0..NUM_JOINTS {
        let a = rot([pred.theta[3 * j], pred.theta[3 * j + 1], pred.theta[3 * j + 2]]);
        let b = rot([gt.theta[3 * j], gt.theta[3 * j + 1], gt.theta[3 * j + 2]]);
        for i in 0..3 {
            for k in 0..3 {
                lt += (a[i][k] - b[i][k]).powi(2) / (9.0 * nj);
            }
        }
    }
    lt += (0..NUM_BETAS).map(|k| (pred.beta[k] - gt.beta[k]).powi(2)).sum::<f64>() / NUM_BETAS as f64;

    assert!((l.l2d - l2d).abs() < 1e-9 * l2d.max(1.0));
    assert!((l.l3d - l3d).abs() < 1e-12);
    assert!((l.ltheta - lt).abs() < 1e-12);
    assert!((l.total - (0.5 * l2d + 2.0 * l3d + 3.0 * lt)).abs() < 1e-9 * l.total);
}

#[test]
fn standard_gradients_match_finite_differences() {
    let pred = params(11);
    let joints = random_joints(12);
    let vp = Viewport::new(32, 32);
    let mut r = rng(13);
    let targets = JointTargets {
        joints_2d: Some((0..NUM_JOINTS).map(|_| [r.random_range(0.0..32.0), r.random_range(0.0..32.0), 0.7]).collect()),
        joints_3d: Some(random_joints(14)),
        params: Some(params(15)),
    };
    let w = LossWeights::default();
    let (_, g) = standard_losses(&pred, &joints, &targets, &w, &vp).unwrap();

    let flat: Vec<f64> = joints.iter().flatten().copied().collect();
    let n = central(&flat, |x| {
        let j: Vec<[f64; 3]> = x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        standard_losses(&pred, &j, &targets, &w, &vp).unwrap().0.total
    });
    let ga: Vec<f64> = g.joints.iter().flatten().copied().collect();
    assert!(common::max_abs_diff(&ga, &n) < 1e-5);

    let pv = pred.to_vec();
    let n = central(&pv, |x| standard_losses(&BodyParams::from_slice(x).unwrap(), &joints, &targets, &w, &vp).unwrap().0.total);
    let mut ga = g.theta.clone();
    ga.extend(&g.beta);
    ga.extend(g.camera);
    assert_eq!(ga.len(), POSE_DIM + NUM_BETAS + 3);
    assert!(common::max_abs_diff(&ga, &n) < 1e-5);
}

#[test]
fn root_centred_3d_loss_ignores_global_translation() {
    let pred = params(1);
    let joints = random_joints(2);
    let shifted: Vec<[f64; 3]> = joints.iter().map(|p| [p[0] + 3.0, p[1] - 1.0, p[2] + 0.5]).collect();
    let t = JointTargets { joints_3d: Some(shifted), ..Default::default() };
    let (l, _) = standard_losses(&pred, &joints, &t, &LossWeights::default(), &Viewport::new(8, 8)).unwrap();
    assert!(l.l3d < 1e-24);
}

#[test]
fn semantic_terms_are_gated_by_weight_and_warmup() {
    assert!(!dsr_gate(0.0, 50, 10));
    assert!(!dsr_gate(0.01, 9, 10));
    assert!(dsr_gate(0.01, 10, 10));

    let s = SampleTerms {
        standard: StandardLosses { l2d: 1.0, l3d: 2.0, ltheta: 3.0, total: 6.0 },
        mc: Some(0.5),
        c: Some(1.5),
    };
    let w = LossWeights { w_mc: 0.1, w_c: 0.2, ..Default::default() };
    let before = total_loss(&[s], &w, 4, 5);
    assert_eq!((before.lmc, before.lc, before.total), (0.0, 0.0, 6.0));
    let after = total_loss(&[s], &w, 5, 5);
    assert!((after.total - (6.0 + 0.05 + 0.3)).abs() < 1e-15);

    let skip = SampleTerms { mc: None, c: None, ..s };
    let batch = total_loss(&[s, skip], &w, 5, 5);
    assert!((batch.total - (6.35 + 6.0) / 2.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn image_losses_match_scalar_oracles(seed in 0u64..100_000) {
        let (w, h) = (8, 8);
        let mask = random_mask(seed, w, h, 0.3);
        let r = random_unit(seed + 1, w * h);
        if mask.iter().any(|&m| m) {
            let f = distance_transform(&mask, w, h, Exec::Sequential).unwrap();
            let d = brute_edt(&mask, w, h);
            let got = soft_distm(&r, &f).unwrap().value;
            prop_assert!((got - distm_oracle(&r, &d)).abs() < 1e-12);
        }
        prop_assert!((soft_iou_loss(&r, &mask).unwrap().value - iou_loss_oracle(&r, &mask)).abs() < 1e-12);
        let x = random_unit(seed + 2, w * h * 4);
        let mut rr = rng(seed + 3);
        let target: Vec<u8> = (0..w * h).map(|_| rr.random_range(0..4)).collect();
        let sil = random_mask(seed + 4, w, h, 0.8);
        if sil.iter().any(|&s| s) {
            let got = dsr_c_nll(&image(w, h, 4, x.clone()), &target, &sil, Reduction::Mean).unwrap().value;
            prop_assert!((got - nll_oracle(&x, 4, &target, &sil)).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_distm_scales_as_inverse_square_root_of_mass(seed in 0u64..100_000, c in 0.1f64..10.0) {
        let mask = random_mask(seed, 8, 8, 0.2);
        prop_assume!(mask.iter().any(|&m| m));
        let f = distance_transform(&mask, 8, 8, Exec::Sequential).unwrap();
        let r = random_unit(seed + 1, 64);
        let scaled: Vec<f64> = r.iter().map(|v| c * v).collect();
        let a = soft_distm(&r, &f).unwrap().value;
        let b = soft_distm(&scaled, &f).unwrap().value;
        prop_assert!((b - a / c.sqrt()).abs() < 1e-12 * a.max(1.0));
    }

    #[test]
    fn soft_distm_vanishes_under_containment(seed in 0u64..100_000) {
        let mask = random_mask(seed, 8, 8, 0.4);
        prop_assume!(mask.iter().any(|&m| m));
        let f = distance_transform(&mask, 8, 8, Exec::Sequential).unwrap();
        let r: Vec<f64> = random_unit(seed + 1, 64).iter().zip(&mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
        prop_assume!(r.iter().sum::<f64>() > 1e-6);
        prop_assert_eq!(soft_distm(&r, &f).unwrap().value, 0.0);
    }

    #[test]
    fn soft_iou_is_zero_on_exact_match_and_bounded(seed in 0u64..100_000) {
        let mask = random_mask(seed, 8, 8, 0.4);
        prop_assume!(mask.iter().any(|&m| m));
        let exact: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        prop_assert_eq!(soft_iou_loss(&exact, &mask).unwrap().value, 0.0);
        let v = soft_iou_loss(&random_unit(seed + 1, 64), &mask).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn soft_iou_decreases_as_a_contained_render_grows(seed in 0u64..100_000) {
        let mask = random_mask(seed, 8, 8, 0.5);
        prop_assume!(mask.iter().any(|&m| m));
        let r = random_unit(seed + 1, 64);
        let small: Vec<f64> = r.iter().zip(&mask).map(|(v, &m)| if m { 0.5 * v } else { 0.0 }).collect();
        let large: Vec<f64> = r.iter().zip(&mask).map(|(v, &m)| if m { v.max(0.5) } else { 0.0 }).collect();
        prop_assert!(soft_iou_loss(&large, &mask).unwrap().value <= soft_iou_loss(&small, &mask).unwrap().value);
    }

    #[test]
    fn nll_is_bounded_by_the_floor(seed in 0u64..100_000, scale in 0.1f64..50.0) {
        let x: Vec<f64> = random_unit(seed, 64 * 4).iter().map(|v| scale * v).collect();
        let mut rr = rng(seed + 1);
        let target: Vec<u8> = (0..64).map(|_| rr.random_range(0..4)).collect();
        let v = dsr_c_nll(&image(8, 8, 4, x), &target, &[true; 64], Reduction::Mean).unwrap().value;
        prop_assert!(v >= 0.0 && v <= -PROB_FLOOR.ln());
    }
}
