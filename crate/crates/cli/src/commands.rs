use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use ktnext::fft::{fft2c, fft_t, ifft2c};
use ktnext::io::{load_mask, load_sequence, load_sequence_as, save_mask, save_sequence};
use ktnext::metrics::{evaluate, ReconMetrics};
use ktnext::model::{fit_from, ktnext_forward, TrainConfig, TrainRecord};
use ktnext::phantom::generate_phantom;
use ktnext::sampling::{apply_mask, make_shear_mask};
use ktnext::{AcquisitionSpec, ComplexVolume, DcLambda, Domain, KtMeasurement, KtNextConfig, SamplingMask};

use crate::checkpoint;
use crate::error::{at, CliError, CliResult};
use crate::manifest::{timestamp, RunManifest};
use crate::render::Gray;
use crate::{
    Cli, Command, EvaluateArgs, MaskArgs, ReconstructArgs, RenderArgs, ReplayArgs, SimulateArgs, TrainArgs,
};

const GT_SUFFIX: &str = "_gt.ckt";
const KSPACE_SUFFIX: &str = "_kspace.ckt";
const RECON_SUFFIX: &str = "_recon.ckt";
const ERROR_GAIN: f64 = 6.0;

/// Parses `args` (without the program name) and runs the command.
pub fn run_args(args: &[String]) -> CliResult<()> {
    let cli = match Cli::try_parse_from(std::iter::once("ktnext".to_string()).chain(args.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => return Err(CliError::Usage(e.render().to_string())),
        Err(e) => {
            print!("{}", e.render());
            return Ok(());
        }
    };
    let ctx = Ctx {
        args: args.to_vec(),
        deterministic: cli.deterministic,
    };
    match cli.command {
        Command::Mask(a) => cmd_mask(&ctx, &a),
        Command::Simulate(a) => cmd_simulate(&ctx, &a),
        Command::Train(a) => cmd_train(&ctx, &a),
        Command::Reconstruct(a) => cmd_reconstruct(&ctx, &a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, &a),
        Command::Render(a) => cmd_render(&ctx, &a),
        Command::Replay(a) => cmd_replay(&a),
    }
}

struct Ctx {
    args: Vec<String>,
    deterministic: bool,
}

impl Ctx {
    fn manifest<C: Serialize>(
        &self,
        command: &str,
        config: &C,
        seed: Option<u64>,
        inputs: &[&Path],
        outputs: &[&Path],
    ) -> RunManifest {
        let show = |ps: &[&Path]| ps.iter().map(|p| p.display().to_string()).collect();
        RunManifest {
            command: command.into(),
            args: self.args.clone(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed,
            inputs: show(inputs),
            outputs: show(outputs),
            timestamp: timestamp(self.deterministic),
            deterministic: self.deterministic,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    /// Worker threads: 1 in deterministic mode, else `KTNEXT_THREADS` or
    /// the machine's parallelism.
    fn threads(&self) -> usize {
        if self.deterministic {
            return 1;
        }
        let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        match std::env::var("KTNEXT_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()) {
            Some(n) if n >= 1 => n.min(avail),
            _ => avail,
        }
    }
}

fn parse_lambda(s: &str) -> CliResult<DcLambda> {
    s.parse().map_err(|_| CliError::Usage(format!("--lambda expects a non-negative number or \"inf\", got {s:?}\n")))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Files in `dir` ending in `suffix`, as `(name, path)` sorted by name.
fn list_with_suffix(dir: &Path, suffix: &str) -> CliResult<Vec<(String, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let file = entry.file_name().to_string_lossy().into_owned();
        if let Some(name) = file.strip_suffix(suffix) {
            found.push((name.to_string(), entry.path()));
        }
    }
    found.sort();
    Ok(found)
}

fn check_mask_fits(mask: &SamplingMask, frames: usize, cols: usize, what: &Path) -> CliResult<()> {
    if mask.t_frames() != frames || mask.cols() != cols {
        return Err(CliError::Format(format!(
            "{}: {} frames × {} columns, mask is {} × {}",
            what.display(),
            frames,
            cols,
            mask.t_frames(),
            mask.cols()
        )));
    }
    Ok(())
}

fn cmd_mask(ctx: &Ctx, a: &MaskArgs) -> CliResult<()> {
    let spec = AcquisitionSpec::new(a.accel, a.center);
    let mask = make_shear_mask(&spec, a.frames, a.cols)?;
    save_mask(&a.output, &mask).map_err(at(&a.output))?;
    println!("effective acceleration: {}", mask.effective_acceleration());
    ctx.manifest("mask", a, None, &[], &[&a.output]).write(&a.output)?;
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> CliResult<()> {
    let mask = match &a.mask {
        Some(p) => {
            let m = load_mask(p).map_err(at(p))?;
            check_mask_fits(&m, a.frames, a.cols, p)?;
            m
        }
        None => make_shear_mask(&AcquisitionSpec::new(a.accel, a.center), a.frames, a.cols)?,
    };
    if a.count == 0 {
        return Err(CliError::Usage("--count must be >= 1\n".into()));
    }
    create_dir(&a.output)?;
    let mask_out = a.output.join("mask.ckm");
    save_mask(&mask_out, &mask).map_err(at(&mask_out))?;
    let mut outputs = vec![mask_out];
    for seed in a.seed..a.seed + a.count {
        let (gt, m) = acquire(&generate_phantom(seed, a.frames, a.rows, a.cols)?, &mask)?;
        let name = format!("phantom{seed:04}");
        let gt_path = a.output.join(format!("{name}{GT_SUFFIX}"));
        let k_path = a.output.join(format!("{name}{KSPACE_SUFFIX}"));
        save_sequence(&gt_path, &gt).map_err(at(&gt_path))?;
        save_sequence(&k_path, m.kspace()).map_err(at(&k_path))?;
        outputs.push(gt_path);
        outputs.push(k_path);
    }
    let inputs: Vec<&Path> = a.mask.iter().map(|p| p.as_path()).collect();
    let outs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    ctx.manifest("simulate", a, Some(a.seed), &inputs, &outs).write(&a.output)?;
    Ok(())
}

/// Rounds to what a CKT1 round trip would store.
pub fn at_file_precision(v: &ComplexVolume) -> ComplexVolume {
    v.map(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64))
}

/// Fully sampled k-space at file precision, the reference image derived from
/// it, and the undersampled measurement. Deriving the reference from the
/// stored samples makes a fully sampled reconstruction reproduce it exactly.
fn acquire(phantom: &ComplexVolume, mask: &SamplingMask) -> CliResult<(ComplexVolume, KtMeasurement)> {
    let k = at_file_precision(&fft2c(phantom)?);
    let gt = ifft2c(&k)?;
    let m = KtMeasurement::new(apply_mask(&k, mask)?, mask.clone())?;
    Ok((gt, m))
}

fn load_ground_truth(input: &Path) -> CliResult<Vec<(PathBuf, ComplexVolume)>> {
    let paths: Vec<PathBuf> = if input.is_dir() {
        list_with_suffix(input, GT_SUFFIX)?.into_iter().map(|(_, p)| p).collect()
    } else {
        vec![input.to_path_buf()]
    };
    if paths.is_empty() {
        return Err(CliError::Core(ktnext::Error::EmptyDataset));
    }
    paths
        .into_iter()
        .map(|p| {
            let v = load_sequence(&p).map_err(at(&p))?;
            Ok((p, v))
        })
        .collect()
}

fn format_history(history: &[TrainRecord]) -> String {
    let mut csv = String::from("step,loss,psnr_train\n");
    for r in history {
        csv.push_str(&format!("{},{},{}\n", r.step, r.loss, r.psnr_train));
    }
    csv
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> CliResult<()> {
    let data = load_ground_truth(&a.input)?;
    let mask = load_mask(&a.mask).map_err(at(&a.mask))?;
    for (p, v) in &data {
        check_mask_fits(&mask, v.t_frames(), v.cols(), p)?;
        if v.dims() != data[0].1.dims() {
            return Err(CliError::Format(format!("{}: shape differs from {}", p.display(), data[0].0.display())));
        }
    }
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(CliError::Usage(format!("--lr must be positive, got {}\n", a.lr)));
    }
    let config = KtNextConfig {
        n_cascades: a.cascades,
        channels: a.channels,
        dc_lambda: parse_lambda(&a.lambda)?,
        ..KtNextConfig::default()
    };
    config.validate()?;
    let train = TrainConfig {
        steps: a.steps,
        lr: a.lr,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let volumes: Vec<ComplexVolume> = data.iter().map(|(_, v)| v.clone()).collect();
    let params = config.init_params(a.seed)?;
    let outcome = fit_from(&volumes, &mask, &config, &train, params, |r| {
        if r.step % 50 == 0 {
            eprintln!("step {} loss {} psnr {}", r.step, r.loss, r.psnr_train);
        }
    })
    .map_err(|e| match e {
        ktnext::Error::NonFiniteLoss { step, loss } => {
            CliError::Numeric(format!("training diverged: loss {loss} at step {step}"))
        }
        other => CliError::Core(other),
    })?;
    checkpoint::save(&a.checkpoint, &outcome.params, &config)?;
    fs::write(&a.output, format_history(&outcome.history)).map_err(|e| CliError::io(&a.output, e))?;
    let mut inputs: Vec<&Path> = data.iter().map(|(p, _)| p.as_path()).collect();
    inputs.push(&a.mask);
    ctx.manifest("train", a, Some(a.seed), &inputs, &[&a.checkpoint, &a.output])
        .write(&a.checkpoint)?;
    Ok(())
}

fn load_measurement(path: &Path, mask: &SamplingMask) -> CliResult<KtMeasurement> {
    let k = load_sequence_as(path, Domain::KSpace).map_err(at(path))?;
    check_mask_fits(mask, k.t_frames(), k.cols(), path)?;
    KtMeasurement::new(k, mask.clone()).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

/// Writes the reconstruction to `out`, and with `intermediates` each
/// cascade's image and x-f estimate next to it.
fn reconstruct_one(
    m: &KtMeasurement,
    params: &ktnext::nn::ParamStore,
    config: &KtNextConfig,
    out: &Path,
    intermediates: bool,
) -> CliResult<Vec<PathBuf>> {
    let rec = ktnext_forward(m, params, config)?;
    if !rec.image.is_finite() {
        return Err(CliError::Numeric(format!("{}: non-finite reconstruction", out.display())));
    }
    save_sequence(out, &rec.image).map_err(at(out))?;
    let mut written = vec![out.to_path_buf()];
    if intermediates {
        let stem = out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let stem = stem.strip_suffix(".ckt").unwrap_or(&stem).to_string();
        for (n, c) in rec.cascades.iter().enumerate() {
            let img = out.with_file_name(format!("{stem}_cascade{}.ckt", n + 1));
            let xf = out.with_file_name(format!("{stem}_cascade{}_xf.ckt", n + 1));
            save_sequence(&img, &c.image).map_err(at(&img))?;
            save_sequence(&xf, &c.xf).map_err(at(&xf))?;
            written.push(img);
            written.push(xf);
        }
    }
    Ok(written)
}

fn cmd_reconstruct(ctx: &Ctx, a: &ReconstructArgs) -> CliResult<()> {
    let (params, mut config) = checkpoint::load(&a.checkpoint)?;
    if let Some(l) = &a.lambda {
        config.dc_lambda = parse_lambda(l)?;
    }
    let mask = load_mask(&a.mask).map_err(at(&a.mask))?;
    let jobs: Vec<(PathBuf, PathBuf)> = if a.input.is_dir() {
        create_dir(&a.output)?;
        list_with_suffix(&a.input, KSPACE_SUFFIX)?
            .into_iter()
            .map(|(name, p)| (p, a.output.join(format!("{name}{RECON_SUFFIX}"))))
            .collect()
    } else {
        vec![(a.input.clone(), a.output.clone())]
    };
    if jobs.is_empty() {
        return Err(CliError::Core(ktnext::Error::EmptyDataset));
    }
    let mut outputs = Vec::new();
    for (input, out) in &jobs {
        let m = load_measurement(input, &mask)?;
        outputs.extend(reconstruct_one(&m, &params, &config, out, a.intermediates)?);
    }
    let mut inputs: Vec<&Path> = jobs.iter().map(|(p, _)| p.as_path()).collect();
    inputs.push(&a.mask);
    inputs.push(&a.checkpoint);
    let outs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    ctx.manifest("reconstruct", a, None, &inputs, &outs).write(&a.output)?;
    Ok(())
}

/// Model and zero-filled scores for one sequence.
pub struct EvalRow {
    pub name: String,
    pub model: ReconMetrics,
    pub zero_filled: ReconMetrics,
}

/// The zero-filled baseline is scored at file precision, like the stored
/// reconstructions.
fn eval_row(name: &str, recon: &Path, reference: &Path) -> CliResult<EvalRow> {
    let gt_path = reference.join(format!("{name}{GT_SUFFIX}"));
    let k_path = reference.join(format!("{name}{KSPACE_SUFFIX}"));
    let rec = load_sequence(recon).map_err(at(recon))?;
    let gt = load_sequence(&gt_path).map_err(at(&gt_path))?;
    let k = load_sequence_as(&k_path, Domain::KSpace).map_err(at(&k_path))?;
    let zf = at_file_precision(&ifft2c(&k)?);
    let score = |v: &ComplexVolume| {
        evaluate(v, &gt).map_err(|e| match e {
            ktnext::Error::UndefinedMetric(m) => CliError::Numeric(format!("{name}: {m}")),
            ktnext::Error::DimensionMismatch(m) => CliError::Format(format!("{name}: {m}")),
            other => CliError::Core(other),
        })
    };
    Ok(EvalRow {
        name: name.to_string(),
        model: score(&rec)?,
        zero_filled: score(&zf)?,
    })
}

fn metric_fields(m: &ReconMetrics) -> String {
    format!("{},{},{}", m.psnr, m.ssim, m.hfen)
}

fn mean(rows: &[EvalRow], f: impl Fn(&EvalRow) -> ReconMetrics) -> ReconMetrics {
    let n = rows.len() as f64;
    ReconMetrics {
        psnr: rows.iter().map(|r| f(r).psnr).sum::<f64>() / n,
        ssim: rows.iter().map(|r| f(r).ssim).sum::<f64>() / n,
        hfen: rows.iter().map(|r| f(r).hfen).sum::<f64>() / n,
    }
}

/// One row per sequence, sorted by name, then a `mean` row.
pub fn format_metrics(rows: &[EvalRow]) -> String {
    let mut csv = String::from("name,psnr,ssim,hfen,psnr_zf,ssim_zf,hfen_zf\n");
    for r in rows {
        csv.push_str(&format!("{},{},{}\n", r.name, metric_fields(&r.model), metric_fields(&r.zero_filled)));
    }
    if !rows.is_empty() {
        csv.push_str(&format!(
            "mean,{},{}\n",
            metric_fields(&mean(rows, |r| r.model)),
            metric_fields(&mean(rows, |r| r.zero_filled))
        ));
    }
    csv
}

fn cmd_evaluate(ctx: &Ctx, a: &EvaluateArgs) -> CliResult<()> {
    let reference = a.reference.clone().unwrap_or_else(|| a.input.clone());
    let recons = list_with_suffix(&a.input, RECON_SUFFIX)?;
    if recons.is_empty() {
        return Err(CliError::Core(ktnext::Error::EmptyDataset));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.threads())
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}\n")))?;
    let rows: Vec<EvalRow> = pool.install(|| {
        recons
            .par_iter()
            .map(|(name, p)| eval_row(name, p, &reference))
            .collect::<CliResult<Vec<_>>>()
    })?;
    fs::write(&a.output, format_metrics(&rows)).map_err(|e| CliError::io(&a.output, e))?;
    let inputs: Vec<&Path> = recons.iter().map(|(_, p)| p.as_path()).collect();
    ctx.manifest("evaluate", a, None, &inputs, &[&a.output]).write(&a.output)?;
    Ok(())
}

/// Magnitudes along row `y`, one output row per frame: `[t][x]`.
fn profile(v: &ComplexVolume, y: usize) -> Vec<f64> {
    (0..v.t_frames())
        .flat_map(|t| (0..v.cols()).map(move |x| (t, x)))
        .map(|(t, x)| v.get(t, y, x).norm())
        .collect()
}

fn cmd_render(ctx: &Ctx, a: &RenderArgs) -> CliResult<()> {
    let seq = load_sequence(&a.input).map_err(at(&a.input))?;
    let reference = match &a.reference {
        Some(p) => {
            let r = load_sequence(p).map_err(at(p))?;
            if r.dims() != seq.dims() {
                return Err(CliError::Format(format!("{}: shape differs from {}", p.display(), a.input.display())));
            }
            Some(r)
        }
        None => None,
    };
    create_dir(&a.output)?;
    let [t_frames, rows, cols] = seq.dims();
    let peak = reference.as_ref().unwrap_or(&seq).max_abs();
    let mut outputs = Vec::new();
    let mut emit = |name: String, img: Gray| -> CliResult<()> {
        let p = a.output.join(name);
        img.save(&p)?;
        outputs.push(p);
        Ok(())
    };
    let n = rows * cols;
    let mag = seq.magnitude();
    for t in 0..t_frames {
        emit(format!("frame_{t:03}.pgm"), Gray::from_values(cols, rows, &mag[t * n..(t + 1) * n], peak))?;
    }
    if let Some(r) = &reference {
        let rm = r.magnitude();
        let err: Vec<f64> = mag.iter().zip(&rm).map(|(p, q)| (p - q).abs() * ERROR_GAIN).collect();
        for t in 0..t_frames {
            emit(format!("error_{t:03}.pgm"), Gray::from_values(cols, rows, &err[t * n..(t + 1) * n], peak))?;
        }
    }
    let mid = rows / 2;
    emit("xt.pgm".into(), Gray::from_values(cols, t_frames, &profile(&seq, mid), peak))?;
    let xf = profile(&fft_t(&seq)?, mid);
    let xf_peak = xf.iter().cloned().fold(0.0, f64::max);
    emit("xf.pgm".into(), Gray::from_values(cols, t_frames, &xf, xf_peak))?;
    let mut inputs: Vec<&Path> = vec![&a.input];
    inputs.extend(a.reference.as_deref());
    let outs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    ctx.manifest("render", a, None, &inputs, &outs).write(&a.output)?;
    Ok(())
}

fn cmd_replay(a: &ReplayArgs) -> CliResult<()> {
    let m = RunManifest::read(&a.input)?;
    if m.args.first().map(String::as_str) == Some("replay") {
        return Err(CliError::Format(format!("{}: manifest records a replay", a.input.display())));
    }
    run_args(&m.args)
}
