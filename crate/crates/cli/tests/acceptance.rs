//! End-to-end acceptance criteria. Each test prints one `criterion N: PASS`
//! or `criterion N: FAIL` line with the measured numbers.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use common::{brute_edt, count_oracle, distm_oracle, hard_render, iou_loss_oracle, mask_fixtures, random_mask, random_triangles, random_unit, soft_render};
use dsr_core::body::procedural::{humanoid, Resolution};
use dsr_core::body::Camera;
use dsr_core::fit::{fit, fit_with_observer, FitSchedule, FitTargets, SemanticPrior};
use dsr_core::fixtures::{fit_instance, rng, scan_set};
use dsr_core::gradcheck::{self, GradcheckOptions};
use dsr_core::losses::{distance_transform, dsr_c_nll, soft_distm, soft_iou_loss, Reduction};
use dsr_core::masks::{clean_sample, MaskConfig};
use dsr_core::prior::{
    accumulate_counts, aggregate_labels, clean_with_part_segmentation, label, normalize_counts, CoarseScheme,
    IncompatibilityTable, LabelCounts, NUM_LABELS,
};
use dsr_core::raster::{rasterize_hard, rasterize_soft, ProbImage, RasterConfig, SENTINEL_NONE};
use dsr_core::Exec;
use rand::Rng;

fn verdict(n: u32, ok: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let t0 = Instant::now();
    let report = gradcheck::run(&GradcheckOptions { exec: Exec::Sequential, ..Default::default() }).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let worst = report.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
    for g in &report.groups {
        println!("  {:<20} {:.3e}", g.name, g.max_rel_err);
    }
    let names: Vec<&str> = report.groups.iter().map(|g| g.name.as_str()).collect();
    let covered = ["raster/", "loss/soft-distm", "loss/soft-iou", "loss/dsr-c-nll", "chain/"]
        .iter()
        .all(|p| names.iter().any(|n| n.starts_with(p)));
    let small = humanoid(Resolution::Small).num_vertices() <= 300 && report.tolerance == 1e-4;
    verdict(
        1,
        report.passed() && worst < 1e-4 && covered && small && secs < 60.0,
        format!("max rel err {worst:.2e}, {secs:.1} s single-threaded"),
    );
}

#[test]
fn criterion_2_rasterizers_match_the_reference_loop() {
    let mut r = rng(2024);
    let (mut worst, mut hard_ok) = (0.0f64, true);
    for case in 0..50u64 {
        let size = r.random_range(8..=32);
        let n = r.random_range(1..=20);
        let mesh = random_triangles(1000 + case, n);
        let attrs = random_unit(2000 + case, mesh.num_vertices() * 2);
        let cam = Camera { s: r.random_range(0.7..1.3), tx: r.random_range(-0.1..0.1), ty: r.random_range(-0.1..0.1) };
        let cfg = RasterConfig {
            sigma: r.random_range(1e-4..1e-2),
            gamma: r.random_range(0.05..0.5),
            background: vec![r.random(), r.random()],
            ..RasterConfig::with_size(size, size)
        };
        let soft = rasterize_soft(&mesh, &attrs, 2, &cam, &cfg).unwrap();
        worst = worst.max(common::max_abs_diff(&soft.data, &soft_render(&mesh, &attrs, 2, &cam, &cfg)));
        let hard = rasterize_hard(&mesh, &cam, &cfg).unwrap();
        let got: Vec<Option<u32>> = hard.face_index.iter().map(|&f| (f != SENTINEL_NONE).then_some(f)).collect();
        hard_ok &= got == hard_render(&mesh, &cam, size, size);
    }
    verdict(2, worst <= 1e-10 && hard_ok, format!("50 cases, soft max diff {worst:.2e}, hard identical {hard_ok}"));
}

#[test]
fn criterion_3_distance_transform_is_exact() {
    let mut mismatches = 0;
    let mut tested = 0;
    for seed in 0..100u64 {
        let mut mask = random_mask(3000 + seed, 16, 16, [0.01, 0.05, 0.2, 0.6][seed as usize % 4]);
        if !mask.iter().any(|&m| m) {
            mask[(seed as usize * 37) % 256] = true;
        }
        let got = distance_transform(&mask, 16, 16, Exec::Sequential).unwrap();
        tested += 1;
        if got.d != brute_edt(&mask, 16, 16) {
            mismatches += 1;
        }
    }
    verdict(3, tested == 100 && mismatches == 0, format!("{tested} masks, {mismatches} mismatches"));
}

#[test]
fn criterion_4_loss_values_match_scalar_oracles() {
    let (mut d_err, mut i_err) = (0.0f64, 0.0f64);
    let (mut contained, mut exact) = (0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let mut mask = random_mask(4000 + seed, 8, 8, 0.3);
        mask[0] = true;
        let r = random_unit(5000 + seed, 64);
        let field = distance_transform(&mask, 8, 8, Exec::Sequential).unwrap();
        d_err = d_err.max((soft_distm(&r, &field).unwrap().value - distm_oracle(&r, &brute_edt(&mask, 8, 8))).abs());
        i_err = i_err.max((soft_iou_loss(&r, &mask).unwrap().value - iou_loss_oracle(&r, &mask)).abs());
        let inside: Vec<f64> = r.iter().zip(&mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
        contained = contained.max(soft_distm(&inside, &field).unwrap().value.abs());
        let binary: Vec<f64> = mask.iter().map(|&m| m as u8 as f64).collect();
        exact = exact.max(soft_iou_loss(&binary, &mask).unwrap().value.abs());
    }
    let mut uniform = ProbImage::new(8, 8, (0..4).map(|c| format!("c{c}")).collect());
    uniform.data.iter_mut().for_each(|v| *v = 0.25);
    let mut rr = rng(4);
    let target: Vec<u8> = (0..64).map(|_| rr.random_range(0..4)).collect();
    let nll = dsr_c_nll(&uniform, &target, &[true; 64], Reduction::Mean).unwrap().value;
    let nll_err = (nll - 4f64.ln()).abs();
    verdict(
        4,
        d_err <= 1e-12 && i_err <= 1e-12 && contained <= 1e-9 && exact <= 1e-9 && nll_err <= 1e-9,
        format!(
            "distm {d_err:.1e}, iou {i_err:.1e}, containment {contained:.1e}, exact match {exact:.1e}, ln 4 {nll_err:.1e}"
        ),
    );
}

#[test]
fn criterion_5_prior_pipeline() {
    let t = humanoid(Resolution::Small);
    let obs = scan_set(&t, 2, 3, 64, 55, Exec::Sequential).unwrap();
    let mut counts_ok = true;
    let mut total = LabelCounts::zeros(t.num_vertices());
    for o in &obs {
        let mut c = LabelCounts::zeros(t.num_vertices());
        accumulate_counts(o, &mut c, Exec::Parallel).unwrap();
        counts_ok &= c.counts == count_oracle(&o.mesh, &o.camera, &o.labels);
        total.add(&c).unwrap();
    }
    let prior = normalize_counts(&total, 0.05).unwrap();
    let row_err = (0..prior.num_vertices).map(|v| (prior.row(v).iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    let mut mass_err = 0.0f64;
    for scheme in [CoarseScheme::dsr_c(), CoarseScheme::mc()] {
        let a = aggregate_labels(&prior, &scheme).unwrap();
        for v in 0..prior.num_vertices {
            let s: f64 = a.probs[v * a.channels()..(v + 1) * a.channels()].iter().sum();
            mass_err = mass_err.max((s - prior.row(v).iter().sum::<f64>()).abs());
        }
    }
    // A leg vertex whose counts say "hand" loses that label.
    let mut row = [0u64; NUM_LABELS];
    row[label::LEFT_ARM as usize] = 9;
    row[label::PANTS as usize] = 1;
    let mut leg = LabelCounts::zeros(1);
    leg.counts.copy_from_slice(&row);
    let leg_prior = normalize_counts(&leg, 0.05).unwrap();
    let cleaned = clean_with_part_segmentation(&leg_prior, &[1], &IncompatibilityTable::default()).unwrap();
    let example = cleaned.row(0)[label::LEFT_ARM as usize] == 0.0
        && (cleaned.row(0)[label::PANTS as usize] - 0.95).abs() < 1e-15
        && cleaned.row(0)[0] == 0.05;
    verdict(
        5,
        row_err <= 1e-6 && counts_ok && mass_err <= 1e-12 && example,
        format!("row sum err {row_err:.1e}, counts exact {counts_ok}, mass err {mass_err:.1e}, leg/hand example {example}"),
    );
}

#[test]
fn criterion_6_mask_pipeline_fixtures() {
    let fixtures = mask_fixtures();
    let mut failed = Vec::new();
    for f in &fixtures {
        let s = clean_sample(&f.mask(), &f.keypoints, &MaskConfig::default()).unwrap();
        let ok = s.crop.map(|r| (r.x0, r.y0, r.x1, r.y1)) == f.crop
            && s.valid_mc_labels == f.valid
            && s.mc_mask.is_some() == f.has_mc
            && s.c_mask.is_some() == f.has_c
            && s.mc_mask.as_ref().is_none_or(|m| *m == f.expected_mc())
            && s.c_mask.as_ref().is_none_or(|c| *c == f.expected_c());
        if !ok {
            failed.push(f.name);
        }
    }
    verdict(6, fixtures.len() == 10 && failed.is_empty(), format!("{} fixtures, failing: {failed:?}", fixtures.len()));
}

#[test]
fn criterion_7_semantic_terms_lower_vertex_error() {
    const SIZE: usize = 128;
    const N: u64 = 20;
    let t0 = Instant::now();
    let t = humanoid(Resolution::Desk);
    let obs = scan_set(&t, 8, 8, SIZE, 100, Exec::Parallel).unwrap();
    let counts = dsr_core::prior::accumulate_all(&obs, t.num_vertices(), Exec::Parallel).unwrap();
    let prior = normalize_counts(&counts, 0.05).unwrap();
    let prior = clean_with_part_segmentation(&prior, &t.part_labels, &IncompatibilityTable::default()).unwrap();
    let sp = SemanticPrior::from_prior(&prior).unwrap();
    // Fragments beyond 50 sigma weigh below e^-40 relative to the nearest surface.
    let cfg = RasterConfig { cutoff: Some(50.0), ..RasterConfig::with_size(SIZE, SIZE) };

    let (mut joints_only, mut with_dsr, mut wins) = (Vec::new(), Vec::new(), 0);
    for seed in 0..N {
        let inst = fit_instance(&t, seed, SIZE, 0.1).unwrap();
        let base = FitTargets { joints: inst.joints.clone(), gt_mesh: Some(inst.gt_mesh.clone()), ..Default::default() };
        let mut plain = FitSchedule::new(100);
        plain.weights = plain.weights.joints_only();
        let a = fit(&t, &inst.init, &base, None, &cfg, &plain).unwrap().metrics.unwrap().pve;
        let targets = FitTargets { gt_mesh: Some(inst.gt_mesh.clone()), ..FitTargets::with_masks(inst.joints.clone(), &inst.sample) };
        let b = fit(&t, &inst.init, &targets, Some(&sp), &cfg, &FitSchedule::new(100)).unwrap().metrics.unwrap().pve;
        println!("  instance {seed:2}: joints-only PVE {a:7.3} mm, joints+DSR PVE {b:7.3} mm");
        wins += (b < a) as usize;
        joints_only.push(a);
        with_dsr.push(b);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
    };
    let (ma, mb) = (median(&mut joints_only), median(&mut with_dsr));
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        7,
        mb < ma && wins >= 15,
        format!("median PVE {ma:.3} -> {mb:.3} mm, DSR better on {wins}/{N}, {secs:.0} s on {} threads", rayon_threads()),
    );
}

fn rayon_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[test]
fn criterion_8_schedule_gating() {
    const SIZE: usize = 48;
    let t = humanoid(Resolution::Small);
    let obs = scan_set(&t, 2, 2, SIZE, 8, Exec::Sequential).unwrap();
    let sp = SemanticPrior::from_prior(
        &normalize_counts(&dsr_core::prior::accumulate_all(&obs, t.num_vertices(), Exec::Sequential).unwrap(), 0.05).unwrap(),
    )
    .unwrap();
    let inst = fit_instance(&t, 8, SIZE, 0.1).unwrap();
    let cfg = RasterConfig { sigma: 1e-4, ..RasterConfig::with_size(SIZE, SIZE) };
    let targets = FitTargets::with_masks(inst.joints.clone(), &inst.sample);

    let mut zero = FitSchedule::new(20);
    zero.weights = zero.weights.joints_only();
    let gated = fit(&t, &inst.init, &targets, Some(&sp), &cfg, &zero).unwrap();
    let plain_targets = FitTargets { joints: inst.joints.clone(), ..Default::default() };
    let disabled = fit(&t, &inst.init, &plain_targets, None, &cfg, &zero).unwrap();
    let identical = gated.trace == disabled.trace && gated.params == disabled.params;

    let s = FitSchedule::new(20);
    let mut path = Vec::new();
    let on = fit_with_observer(&t, &inst.init, &targets, Some(&sp), &cfg, &s, |_, p, _| path.push(p.clone())).unwrap();
    let mut plain_path = Vec::new();
    fit_with_observer(&t, &inst.init, &plain_targets, None, &cfg, &zero, |_, p, _| plain_path.push(p.clone())).unwrap();
    let w = s.warmup;
    let silent = on.trace[..w].iter().all(|l| l.lmc == 0.0 && l.lc == 0.0)
        && on.trace[..w].iter().zip(&disabled.trace).all(|(a, b)| a.total == b.total)
        && path[..=w] == plain_path[..=w];
    let active = on.trace[w].lmc + on.trace[w].lc > 0.0 && on.trace[w].total != disabled.trace[w].total;
    verdict(
        8,
        identical && silent && active,
        format!("zero-weight traces identical {identical}, silent for {w} warmup iterations {silent}, active after {active}"),
    );
}

fn dsr(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_dsr")).args(args).output().unwrap();
    assert!(
        out.status.success() || out.status.code() == Some(4),
        "dsr {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn with<'a>(rest: &[&'a str]) -> Vec<&'a str> {
    [rest, &["--seed", "7", "--threads", "2"][..]].concat()
}

fn run_pipeline(root: &Path) {
    let p = |rel: &str| root.join(rel).to_string_lossy().into_owned();
    dsr(&with(&["gen-fixture", "--out-dir", &p(""), "--resolution", "small", "--size", "96", "--subjects", "2", "--views", "2"]));
    dsr(&with(&["build-prior", "--scans", &p("scans"), "--template", &p("template.dsrt"), "--csv", &p("prior.csv"), "--out", &p("prior.dsrt")]));
    dsr(&with(&["clean-mask", "--mask", &p("sample/labels.png"), "--keypoints", &p("sample/joints.json"), "--out-dir", &p("clean"), "--name", "s"]));
    for mode in ["mc", "c", "hard"] {
        dsr(&with(&[
            "render", "--template", &p("template.dsrt"), "--params", &p("sample/gt.json"), "--prior", &p("prior.dsrt"),
            "--mode", mode, "--size", "96", "--sigma", "1e-4", "--png", "--out", &p(&format!("render/{mode}.pfm")),
        ]));
    }
    dsr(&with(&[
        "fit", "--template", &p("template.dsrt"), "--init", &p("sample/params0.json"), "--joints", &p("sample/joints.json"),
        "--joints3d", &p("sample/joints3d.json"), "--mc", &p("clean/s.mc.png"), "--c", &p("clean/s.c.png"),
        "--meta", &p("clean/s.meta.json"), "--prior", &p("prior.dsrt"), "--gt-mesh", &p("sample/gt.obj"),
        "--iters", "15", "--sigma", "1e-4", "--render-every", "5", "--trace", &p("fit/trace.jsonl"), "--out", &p("fit/result.json"),
    ]));
    dsr(&with(&["gradcheck", "--size", "8", "--json", &p("gradcheck.json")]));
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_9_cli_outputs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(a.path());
    run_pipeline(b.path());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let differing: Vec<_> = ta.iter().filter(|(k, v)| tb.get(*k) != Some(v)).map(|(k, _)| k.display().to_string()).collect();
    let same_files = ta.keys().eq(tb.keys());
    let kinds = ["prior.dsrt", "clean/s.mc.png", "render/c.lowerclothes.pfm", "render/hard.pfm", "fit/result.json", "gradcheck.json"];
    let complete = kinds.iter().all(|k| ta.contains_key(Path::new(k)));
    verdict(
        9,
        same_files && differing.is_empty() && complete,
        format!("{} artifacts from six subcommands, differing: {differing:?}", ta.len()),
    );
}
