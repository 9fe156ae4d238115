use std::cell::RefCell;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use log::info;

use dsr_core::body::procedural::{humanoid, Resolution};
use dsr_core::body::{forward, BodyParams, BodyTemplate, Camera, TriangleMesh};
use dsr_core::fit::{fit_with_observer, FitSchedule, FitTargets, Optimizer, SemanticPrior};
use dsr_core::fixtures::{fit_instance, scan_set};
use dsr_core::gradcheck::{self, GradcheckOptions, Precision};
use dsr_core::io;
use dsr_core::losses::{JointTargets, McLoss, Reduction};
use dsr_core::masks::{clean_sample, LabelMask, MaskConfig, SampleMeta, IGNORE};
use dsr_core::prior::{
    accumulate_all, clean_with_part_segmentation, normalize_counts, to_csv, IncompatibilityTable, ScanObservation,
    DEFAULT_EPS_BG, LABEL_NAMES,
};
use dsr_core::raster::{
    rasterize_hard, rasterize_soft, render_semantic_channels, silhouette, visible_vertices, RasterConfig, DEFAULT_GAMMA,
    DEFAULT_SIGMA, SENTINEL_NONE,
};
use dsr_core::{Error, Exec};

use crate::config::{pick, pick_enum, FileConfig};
use crate::*;

const DEFAULT_SIZE: usize = 128;

struct Ctx {
    file: FileConfig,
    seed: u64,
    exec: Exec,
}

/// Maps an error to its exit code: 3 for numerical failures, 2 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::NonFinite { .. } | Error::NonFiniteVertex { .. } | Error::Diverged { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let threads = cli.threads.or(file.threads);
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let ctx = Ctx {
        seed: pick(cli.seed, file.seed, 0),
        exec: if threads == Some(1) { Exec::Sequential } else { Exec::Parallel },
        file,
    };
    match &cli.command {
        Command::BuildPrior(a) => build_prior(&ctx, a),
        Command::CleanMask(a) => clean_mask(&ctx, a),
        Command::Render(a) => render(&ctx, a),
        Command::Fit(a) => fit(&ctx, a),
        Command::Gradcheck(a) => run_gradcheck(&ctx, a),
        Command::GenFixture(a) => gen_fixture(&ctx, a),
    }
}

fn raster_config(ctx: &Ctx, args: &RasterArgs, width: usize, height: usize) -> Result<RasterConfig> {
    let cfg = RasterConfig {
        sigma: pick(args.sigma, ctx.file.sigma, DEFAULT_SIGMA),
        gamma: pick(args.gamma, ctx.file.gamma, DEFAULT_GAMMA),
        cutoff: args.cutoff.or(ctx.file.cutoff),
        exec: ctx.exec,
        ..RasterConfig::with_size(width, height)
    };
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => {
            fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
        }
        _ => Ok(()),
    }
}

/// `dir/stem.suffix` for an output path `dir/stem.ext`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn build_prior(ctx: &Ctx, a: &BuildPriorArgs) -> Result<ExitCode> {
    let eps = pick(a.eps_bg, ctx.file.eps_bg, DEFAULT_EPS_BG);
    let mut meshes: Vec<PathBuf> = fs::read_dir(&a.scans)
        .with_context(|| format!("reading scan directory {}", a.scans.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "obj"))
        .collect();
    meshes.sort();
    if meshes.is_empty() {
        bail!("{}: no .obj scans found", a.scans.display());
    }
    let mut obs = Vec::with_capacity(meshes.len());
    for path in &meshes {
        let mesh = io::read_obj(path)?;
        let camera: Camera = io::read_json(&path.with_extension("camera.json"))?;
        let labels = io::read_label_png(&path.with_extension("png"))?;
        labels
            .validate()
            .with_context(|| format!("{}", path.with_extension("png").display()))?;
        obs.push(ScanObservation { mesh, camera, labels });
    }
    let nv = obs[0].mesh.num_vertices();
    let counts = accumulate_all(&obs, nv, ctx.exec)?;
    let mut prior = normalize_counts(&counts, eps)?;
    if let Some(t) = &a.template {
        let template = io::read_template(t)?;
        let table = match &a.incompatibility {
            Some(p) => io::read_json::<IncompatibilityTable>(p)?,
            None => IncompatibilityTable::default(),
        };
        prior = clean_with_part_segmentation(&prior, &template.part_labels, &table)?;
    }
    ensure_parent(&a.out)?;
    io::write_prior(&a.out, &prior, eps)?;
    if let Some(csv) = &a.csv {
        ensure_parent(csv)?;
        fs::write(csv, to_csv(&prior)).with_context(|| format!("writing {}", csv.display()))?;
    }
    info!("prior over {nv} vertices from {} scans", obs.len());
    Ok(ExitCode::SUCCESS)
}

fn clean_mask(ctx: &Ctx, a: &CleanMaskArgs) -> Result<ExitCode> {
    let mask = io::read_label_png(&a.mask)?;
    mask.validate().with_context(|| format!("{}", a.mask.display()))?;
    let kps = io::read_keypoints(&a.keypoints)?;
    let defaults = MaskConfig::default();
    let cfg = MaskConfig {
        offset: pick(a.offset, ctx.file.offset, defaults.offset),
        min_pixels: pick(a.min_pixels, ctx.file.min_pixels, defaults.min_pixels),
    };
    let t = clean_sample(&mask, &kps, &cfg)?;
    let name = match &a.name {
        Some(n) => n.clone(),
        None => a.mask.file_stem().and_then(|s| s.to_str()).unwrap_or("sample").to_string(),
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    if let Some(mc) = &t.mc_mask {
        let m = LabelMask {
            width: t.width,
            height: t.height,
            labels: mc.iter().map(|&b| b as u8).collect(),
        };
        io::write_label_png(&a.out_dir.join(format!("{name}.mc.png")), &m)?;
    }
    if let Some(c) = &t.c_mask {
        let m = LabelMask {
            width: t.width,
            height: t.height,
            labels: c.clone(),
        };
        io::write_label_png(&a.out_dir.join(format!("{name}.c.png")), &m)?;
    }
    io::write_json(&a.out_dir.join(format!("{name}.meta.json")), &t.meta())?;
    if t.mc_mask.is_none() && t.c_mask.is_none() {
        log::warn!("{}: sample skipped, no usable targets", a.mask.display());
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}

fn load_prior(path: &Path, template: &BodyTemplate) -> Result<SemanticPrior> {
    let prior = io::read_prior(path)?;
    if prior.num_vertices != template.num_vertices() {
        bail!(
            "{}: prior has {} vertices, template has {}",
            path.display(),
            prior.num_vertices,
            template.num_vertices()
        );
    }
    Ok(SemanticPrior::from_prior(&prior)?)
}

fn write_plane(path: &Path, w: usize, h: usize, plane: &[f64], png: bool) -> Result<()> {
    io::write_pfm(path, w, h, 1, plane)?;
    if png {
        io::write_gray_png(&path.with_extension("png"), w, h, plane)?;
    }
    Ok(())
}

fn render(ctx: &Ctx, a: &RenderArgs) -> Result<ExitCode> {
    let template = io::read_template(&a.template)?;
    let params = io::read_params(&a.params)?;
    let size = pick(a.size, ctx.file.size, DEFAULT_SIZE);
    let cfg = raster_config(ctx, &a.raster, size, size)?;
    let prior = match (a.mode, &a.prior) {
        (RenderMode::Hard, _) => None,
        (_, Some(p)) => Some(load_prior(p, &template)?),
        (_, None) => bail!("--prior is required for --mode {:?}", a.mode),
    };
    let mesh = forward(&template, &params)?;
    let hard = rasterize_hard(&mesh, &params.camera, &cfg)?;
    ensure_parent(&a.out)?;
    let mut written = Vec::new();
    match prior {
        None => {
            let plane: Vec<f64> = hard
                .face_index
                .iter()
                .map(|&f| if f == SENTINEL_NONE { -1.0 } else { f as f64 })
                .collect();
            io::write_pfm(&a.out, size, size, 1, &plane)?;
            if a.png {
                let sil: Vec<f64> = silhouette(&hard).iter().map(|&b| b as u8 as f64).collect();
                io::write_gray_png(&a.out.with_extension("png"), size, size, &sil)?;
            }
            written.push((a.out.clone(), plane.iter().sum::<f64>()));
        }
        Some(sp) => {
            let vis = visible_vertices(&mesh, &hard);
            let nc = sp.channels();
            let img = render_semantic_channels(&mesh, &sp.rows, nc, &vis, &params.camera, &cfg)?;
            let channels: Vec<usize> = match a.mode {
                RenderMode::Mc => vec![0],
                _ => (1..nc).collect(),
            };
            for c in channels {
                let path = if a.mode == RenderMode::Mc {
                    a.out.clone()
                } else {
                    sibling(&a.out, &format!("{}.pfm", sp.names[c].to_lowercase()))
                };
                let plane = img.channel(c);
                write_plane(&path, size, size, &plane, a.png)?;
                written.push((path, plane.iter().sum::<f64>()));
            }
        }
    }
    for (path, sum) in &written {
        println!("{}\t{sum:.9e}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn mask_size(path: &Path, m: &LabelMask, size: &mut Option<(usize, usize)>) -> Result<()> {
    match *size {
        Some((w, h)) if (w, h) != (m.width, m.height) => {
            bail!("{}: mask is {}x{}, expected {w}x{h}", path.display(), m.width, m.height)
        }
        _ => *size = Some((m.width, m.height)),
    }
    Ok(())
}

fn fit(ctx: &Ctx, a: &FitArgs) -> Result<ExitCode> {
    let f = &ctx.file;
    let template = io::read_template(&a.template)?;
    let init = io::read_params(&a.init)?;
    let joints = JointTargets {
        joints_2d: a.joints.as_deref().map(io::read_keypoints).transpose()?,
        joints_3d: a.joints3d.as_deref().map(io::read_json::<Vec<[f64; 3]>>).transpose()?,
        params: a.params_target.as_deref().map(io::read_params).transpose()?,
    };
    let mut dims = a.size.map(|s| (s, s));
    let mc = match &a.mc {
        Some(p) => {
            let m = io::read_label_png(p)?;
            mask_size(p, &m, &mut dims)?;
            Some(m.labels.iter().map(|&l| l != 0 && l != IGNORE).collect::<Vec<bool>>())
        }
        None => None,
    };
    let c = match &a.c {
        Some(p) => {
            let m = io::read_label_png(p)?;
            mask_size(p, &m, &mut dims)?;
            Some(m.labels)
        }
        None => None,
    };
    let mc_labels = match &a.meta {
        Some(p) => {
            let meta: SampleMeta = io::read_json(p)?;
            let names = meta
                .valid_mc_labels
                .iter()
                .map(|n| {
                    LABEL_NAMES
                        .iter()
                        .position(|l| l == n)
                        .map(|i| i as u8)
                        .ok_or_else(|| anyhow!("{}: unknown label {n}", p.display()))
                })
                .collect::<Result<Vec<u8>>>()?;
            Some(names)
        }
        None => None,
    };
    let prior = match &a.prior {
        Some(p) => Some(load_prior(p, &template)?),
        None if mc.is_some() || c.is_some() => bail!("--prior is required with --mc or --c"),
        None => None,
    };
    let (w, h) = dims.unwrap_or_else(|| {
        let s = f.size.unwrap_or(DEFAULT_SIZE);
        (s, s)
    });
    let cfg = raster_config(ctx, &a.raster, w, h)?;

    let iters = pick(a.iters, f.iters, 100);
    let mut schedule = FitSchedule::new(iters);
    schedule.warmup = pick(a.warmup, f.warmup, schedule.warmup);
    schedule.step_size = pick(a.lr, f.lr, schedule.step_size);
    schedule.optimizer = match pick_enum(a.optimizer, &f.optimizer, "optimizer", OptimizerArg::Adam)? {
        OptimizerArg::Adam => Optimizer::Adam,
        OptimizerArg::Gd => Optimizer::GradientDescent,
    };
    schedule.mc_loss = match pick_enum(a.mc_loss, &f.mc_loss, "mc-loss", McLossArg::SoftIou)? {
        McLossArg::SoftIou => McLoss::SoftIou,
        McLossArg::SoftDistm => McLoss::SoftDistm,
    };
    schedule.reduction = match pick_enum(a.reduction, &f.reduction, "reduction", ReductionArg::Mean)? {
        ReductionArg::Mean => Reduction::Mean,
        ReductionArg::Sum => Reduction::Sum,
    };
    let wd = schedule.weights;
    schedule.weights.w_2d = pick(a.w_2d, f.w_2d, wd.w_2d);
    schedule.weights.w_3d = pick(a.w_3d, f.w_3d, wd.w_3d);
    schedule.weights.w_theta = pick(a.w_theta, f.w_theta, wd.w_theta);
    schedule.weights.w_mc = pick(a.w_mc, f.w_mc, wd.w_mc);
    schedule.weights.w_c = pick(a.w_c, f.w_c, wd.w_c);
    schedule.validate()?;

    let targets = FitTargets {
        joints,
        mc,
        c,
        mc_labels,
        gt_mesh: a.gt_mesh.as_deref().map(io::read_obj).transpose()?,
    };

    let render_dir = a.render_dir.clone().unwrap_or_else(|| {
        a.out.parent().map(Path::to_path_buf).unwrap_or_default().join("renders")
    });
    if a.render_every.is_some() {
        fs::create_dir_all(&render_dir).with_context(|| format!("creating {}", render_dir.display()))?;
    }
    let dump_error: RefCell<Option<anyhow::Error>> = RefCell::new(None);
    let observer = |it: usize, p: &BodyParams, _: &_| {
        let Some(n) = a.render_every.filter(|&n| n > 0) else {
            return;
        };
        if !it.is_multiple_of(n) || dump_error.borrow().is_some() {
            return;
        }
        let path = render_dir.join(format!("iter_{it:04}.pfm"));
        if let Err(e) = dump_render(&template, prior.as_ref(), p, &cfg, &path) {
            *dump_error.borrow_mut() = Some(e);
        }
    };

    ensure_parent(&a.out)?;
    let outcome = fit_with_observer(&template, &init, &targets, prior.as_ref(), &cfg, &schedule, observer);
    if let Some(e) = dump_error.into_inner() {
        return Err(e);
    }
    let result = match outcome {
        Ok(r) => r,
        Err(Error::Diverged {
            iteration,
            reason,
            last,
        }) => {
            write_result(a, &last)?;
            return Err(Error::Diverged {
                iteration,
                reason,
                last,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    write_result(a, &result)?;
    if let Some(m) = &result.metrics {
        info!("PVE {:.2} mm, MPJPE {:.2} mm, PA-MPJPE {:.2} mm", m.pve, m.mpjpe, m.pa_mpjpe);
    }
    Ok(ExitCode::SUCCESS)
}

fn write_result(a: &FitArgs, result: &dsr_core::fit::FitResult) -> Result<()> {
    io::write_json(&a.out, result)?;
    if let Some(path) = &a.trace {
        ensure_parent(path)?;
        let mut out = Vec::new();
        for row in &result.trace {
            serde_json::to_writer(&mut out, row)?;
            out.push(b'\n');
        }
        fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Minimal-clothing probability when a prior is loaded, soft silhouette otherwise.
fn dump_render(
    template: &BodyTemplate,
    prior: Option<&SemanticPrior>,
    params: &BodyParams,
    cfg: &RasterConfig,
    path: &Path,
) -> Result<()> {
    let mesh: TriangleMesh = forward(template, params)?;
    let plane = match prior {
        Some(sp) => {
            let hard = rasterize_hard(&mesh, &params.camera, cfg)?;
            let vis = visible_vertices(&mesh, &hard);
            render_semantic_channels(&mesh, &sp.rows, sp.channels(), &vis, &params.camera, cfg)?.channel(0)
        }
        None => {
            let ones = vec![1.0; mesh.num_vertices()];
            rasterize_soft(&mesh, &ones, 1, &params.camera, cfg)?.channel(0)
        }
    };
    write_plane(path, cfg.width, cfg.height, &plane, true)
}

fn run_gradcheck(ctx: &Ctx, a: &GradcheckArgs) -> Result<ExitCode> {
    let f = &ctx.file;
    let d = GradcheckOptions::default();
    let precision = match pick_enum(a.precision, &f.precision, "precision", PrecisionArg::Double)? {
        PrecisionArg::Double => Precision::Double,
        PrecisionArg::Single => Precision::Single,
    };
    let opts = GradcheckOptions {
        size: pick(a.size, f.size, d.size),
        seed: ctx.seed,
        precision,
        step: a.step.or(f.step),
        sigma: pick(a.sigma, f.sigma, d.sigma),
        gamma: pick(a.gamma, f.gamma, d.gamma),
        exec: ctx.exec,
        ..d
    };
    let report = gradcheck::run(&opts)?;
    println!("precision {:?}, step {:e}, tolerance {:e}", report.precision, report.step, report.tolerance);
    for g in &report.groups {
        let verdict = if g.passed { "ok" } else { "FAIL" };
        println!("{:<20} {:>10.3e}  {verdict}", g.name, g.max_rel_err);
    }
    if let Some(path) = &a.json {
        ensure_parent(path)?;
        io::write_json(path, &report)?;
    }
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(3))
    }
}

fn gen_fixture(ctx: &Ctx, a: &GenFixtureArgs) -> Result<ExitCode> {
    let f = &ctx.file;
    let resolution = match a.resolution.unwrap_or(ResolutionArg::Desk) {
        ResolutionArg::Small => Resolution::Small,
        ResolutionArg::Desk => Resolution::Desk,
    };
    let size = pick(a.size, f.size, DEFAULT_SIZE);
    let subjects = a.subjects.unwrap_or(4);
    let views = a.views.unwrap_or(4);
    let noise = a.pose_noise.unwrap_or(0.1);
    if size == 0 || subjects == 0 || views == 0 {
        bail!("--size, --subjects and --views must be at least 1");
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(anyhow!("--pose-noise must be a finite non-negative number, got {noise}"));
    }
    let scans = a.out_dir.join("scans");
    let sample = a.out_dir.join("sample");
    for d in [&scans, &sample] {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }

    let template = humanoid(resolution);
    io::write_template(&a.out_dir.join("template.dsrt"), &template)?;
    let obs = scan_set(&template, subjects, views, size, ctx.seed, ctx.exec)?;
    for (i, o) in obs.iter().enumerate() {
        let base = scans.join(format!("scan_{i:03}"));
        io::write_obj(&base.with_extension("obj"), &o.mesh)?;
        io::write_json(&base.with_extension("camera.json"), &o.camera)?;
        io::write_label_png(&base.with_extension("png"), &o.labels)?;
    }

    let inst = fit_instance(&template, ctx.seed.wrapping_add(1), size, noise)?;
    io::write_json(&sample.join("gt.json"), &inst.gt)?;
    io::write_json(&sample.join("params0.json"), &inst.init)?;
    io::write_json(&sample.join("joints.json"), &inst.joints.joints_2d)?;
    io::write_json(&sample.join("joints3d.json"), &inst.joints.joints_3d)?;
    io::write_label_png(&sample.join("labels.png"), &inst.labels)?;
    io::write_obj(&sample.join("gt.obj"), &inst.gt_mesh)?;
    info!(
        "{} vertices, {} scans, sample at {size}x{size}",
        template.num_vertices(),
        obs.len()
    );
    Ok(ExitCode::SUCCESS)
}
