use std::path::{Path, PathBuf};

use dagf_core::filters::{BilateralParams, GifParams};
use dagf_core::loss::{LossWeights, Omega3Schedule};
use dagf_core::network::{AblationVariant, DagfConfig};

use dagf_harness::dataset::{generate_synthetic_pairs, load_manifest, write_manifest, SamplePair, SynthOptions};
use dagf_harness::degrade::DegradeMode;
use dagf_harness::eval::{evaluate_with_threads, write_metrics_csv, EvalMethod};
use dagf_harness::io::{load_png, save_png};
use dagf_harness::metrics::{EvalProtocol, RmseConvention};
use dagf_harness::model::DagfModel;
use dagf_harness::texture::texture_remove;
use dagf_harness::trainer::{train, train_from, write_loss_csv, TrainOptions};

use crate::{Command, DegradeArgs, LossArgs, NetworkArgs};

pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

// Errors raised after validation are runtime failures by definition.
impl From<dagf_harness::HarnessError> for CliError {
    fn from(e: dagf_harness::HarnessError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<dagf_core::CoreError> for CliError {
    fn from(e: dagf_core::CoreError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::validation(format!("{what} `{}` does not exist", path.display())))
    }
}

fn parse_network(net: &NetworkArgs) -> Result<DagfConfig> {
    let variant = AblationVariant::parse(&net.variant)
        .ok_or_else(|| CliError::validation(format!("unknown variant `{}`", net.variant)))?;
    let cfg = DagfConfig {
        m: net.levels,
        k: net.kernel_size,
        channels: net.channels,
        variant,
        lambda_init: 0.0,
        normalize_kernels: net.normalize_kernels,
    };
    cfg.validate().map_err(|e| CliError::validation(e.to_string()))?;
    Ok(cfg)
}

fn parse_degrade(args: &DegradeArgs) -> Result<(usize, DegradeMode, f64)> {
    let mode = DegradeMode::parse(&args.mode)
        .ok_or_else(|| CliError::validation(format!("unknown degradation mode `{}`", args.mode)))?;
    if args.scale == 0 {
        return Err(CliError::validation("scale must be >= 1"));
    }
    if args.noise_sigma < 0.0 {
        return Err(CliError::validation("noise sigma must be >= 0"));
    }
    Ok((args.scale, mode, args.noise_sigma))
}

fn parse_loss(args: &LossArgs, epochs: usize) -> Result<LossWeights> {
    let schedule = match args.omega3_schedule.as_str() {
        "constant" => Omega3Schedule::Constant,
        "linear-decay" => Omega3Schedule::LinearDecay { start_epoch: 0, end_epoch: epochs.max(1) },
        other => {
            return Err(CliError::validation(format!(
                "unknown omega3 schedule `{other}` (use constant or linear-decay)"
            )))
        }
    };
    let weights = LossWeights {
        omega1: args.omega1,
        omega2: args.omega2,
        omega3: args.omega3,
        omega3_schedule: schedule,
    };
    weights.validate().map_err(|e| CliError::validation(e.to_string()))?;
    Ok(weights)
}

fn thread_cap() -> usize {
    std::env::var("DAGF_NUM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v >= 1)
        .unwrap_or(1)
}

fn banner(seed: u64, strict: bool, extra: &str) {
    println!("seed={seed} strict={strict} threads={} {extra}", thread_cap());
}

/// FNV-1a over the dataset description, recorded in the run manifest.
fn dataset_hash(pairs: &[SamplePair]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for p in pairs {
        eat(p.meta.source_id.as_bytes());
        eat(&(p.target_gt.height as u64).to_le_bytes());
        eat(&(p.target_gt.width as u64).to_le_bytes());
        eat(&(p.meta.scale as u64).to_le_bytes());
        eat(p.meta.mode.name().as_bytes());
        eat(&p.meta.noise_sigma.to_le_bytes());
    }
    h
}

fn load_dataset(
    manifest: &Option<PathBuf>,
    synthetic: &Option<usize>,
    synthetic_size: usize,
    scale: usize,
    mode: DegradeMode,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<SamplePair>> {
    match (manifest, synthetic) {
        (Some(path), None) => Ok(load_manifest(path, scale, mode, noise_sigma, seed)?),
        (None, Some(count)) => Ok(generate_synthetic_pairs(&SynthOptions {
            count: *count,
            size: synthetic_size,
            scale,
            mode,
            noise_sigma,
            seed,
        })?),
        (Some(_), Some(_)) => Err(CliError::validation("pass either --manifest or --synthetic, not both")),
        (None, None) => Err(CliError::validation("a dataset is required: --manifest or --synthetic")),
    }
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Filter {
            filter,
            target,
            guidance,
            out,
            checkpoint,
            sigma_s,
            sigma_r,
            radius,
            epsilon,
            scale,
            dump_kernels,
            seed,
            strict,
        } => cmd_filter(
            &filter, &target, &guidance, &out, checkpoint.as_deref(), sigma_s, sigma_r, radius,
            epsilon, scale, dump_kernels.as_deref(), seed, strict,
        ),
        Command::Train {
            manifest,
            synthetic,
            synthetic_size,
            out_dir,
            net,
            degrade,
            loss,
            epochs,
            batch_size,
            patch_size,
            lr,
            lr_halve_every,
            resume,
            start_epoch,
            seed,
            strict,
        } => cmd_train(
            &manifest, &synthetic, synthetic_size, &out_dir, &net, &degrade, &loss, epochs,
            batch_size, patch_size, lr, lr_halve_every, resume.as_deref(), start_epoch, seed,
            strict,
        ),
        Command::Eval {
            manifest,
            synthetic,
            synthetic_size,
            method,
            degrade,
            rmse_convention,
            depth_scale,
            border_crop,
            checkpoint,
            sigma_s,
            sigma_r,
            radius,
            epsilon,
            out,
            seed,
            strict,
        } => cmd_eval(
            &manifest, &synthetic, synthetic_size, &method, &degrade, &rmse_convention,
            depth_scale, border_crop, checkpoint.as_deref(), sigma_s, sigma_r, radius, epsilon,
            &out, seed, strict,
        ),
        Command::Texture { input, checkpoint, iterations, out, seed, strict } => {
            cmd_texture(&input, &checkpoint, iterations, &out, seed, strict)
        }
        Command::Gradcheck { level, seeds } => cmd_gradcheck(&level, seeds),
        Command::Synth { out_dir, count, size, degrade, seed } => {
            cmd_synth(&out_dir, count, size, &degrade, seed)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_filter(
    filter: &str,
    target: &Path,
    guidance: &Path,
    out: &Path,
    checkpoint: Option<&Path>,
    sigma_s: f64,
    sigma_r: f64,
    radius: usize,
    epsilon: f64,
    scale: usize,
    dump_kernels: Option<&Path>,
    seed: u64,
    strict: bool,
) -> Result<()> {
    // Validate everything before touching pixels.
    require_exists(target, "target image")?;
    require_exists(guidance, "guidance image")?;
    let bilateral = BilateralParams { sigma_s, sigma_r, radius };
    let gif = GifParams { radius, epsilon };
    match filter {
        "bilateral" | "jbu" => bilateral.validate().map_err(|e| CliError::validation(e.to_string()))?,
        "gif" => gif.validate().map_err(|e| CliError::validation(e.to_string()))?,
        "dagf" => {
            let ckpt = checkpoint
                .ok_or_else(|| CliError::validation("dagf filtering needs --checkpoint"))?;
            require_exists(ckpt, "checkpoint")?;
        }
        other => return Err(CliError::validation(format!("unknown filter `{other}`"))),
    }
    banner(seed, strict, &format!("filter={filter}"));
    if filter == "bilateral" && !bilateral.radius_covers_sigma() {
        eprintln!(
            "warning: radius {radius} < 2*sigma_s = {}; the window truncates the spatial kernel",
            2.0 * sigma_s
        );
    }

    let t = load_png(target)?;
    let g = load_png(guidance)?;
    let result = match filter {
        "bilateral" => dagf_core::filters::bilateral_filter(&t, &g, &bilateral)?,
        "gif" => dagf_core::filters::guided_image_filter(&t, &g, &gif)?,
        "jbu" => dagf_core::filters::joint_bilateral_upsample(&t, &g, &bilateral, scale)?,
        "dagf" => {
            let model = DagfModel::load(checkpoint.expect("validated above"))?;
            let up = if scale > 1 { dagf_harness::degrade::upsample_input(&t, scale) } else { t };
            if let Some(dir) = dump_kernels {
                model.dump_internals(&up, &g, dir)?;
                println!("kernel/attention dumps written to {}", dir.display());
            }
            model.per_channel_apply(&up, &g)?
        }
        _ => unreachable!("validated above"),
    };
    save_png(&result, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    manifest: &Option<PathBuf>,
    synthetic: &Option<usize>,
    synthetic_size: usize,
    out_dir: &Path,
    net: &NetworkArgs,
    degrade: &DegradeArgs,
    loss: &LossArgs,
    epochs: usize,
    batch_size: usize,
    patch_size: usize,
    lr: f64,
    lr_halve_every: usize,
    resume: Option<&Path>,
    start_epoch: usize,
    seed: u64,
    strict: bool,
) -> Result<()> {
    let cfg = parse_network(net)?;
    let (scale, mode, noise_sigma) = parse_degrade(degrade)?;
    let weights = parse_loss(loss, epochs)?;
    if let Some(path) = manifest {
        require_exists(path, "manifest")?;
    }
    if let Some(ckpt) = resume {
        require_exists(ckpt, "resume checkpoint")?;
    }
    if lr <= 0.0 {
        return Err(CliError::validation("learning rate must be positive"));
    }
    let mult = cfg.dim_multiple();
    if patch_size % (mult.max(1)) != 0 || patch_size % scale != 0 {
        return Err(CliError::validation(format!(
            "patch size {patch_size} must be divisible by 2^(levels-1) = {mult} and scale {scale}"
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Runtime(e.to_string()))?;

    banner(
        seed,
        strict,
        &format!(
            "m={} k={} channels={} variant={} lr={lr} batch={batch_size} patch={patch_size} epochs={epochs}",
            cfg.m,
            cfg.k,
            cfg.channels,
            cfg.variant.name()
        ),
    );

    let dataset = load_dataset(manifest, synthetic, synthetic_size, scale, mode, noise_sigma, seed)?;
    let opts = TrainOptions {
        epochs,
        batch_size,
        patch_size,
        learning_rate: lr,
        lr_halve_every,
        seed,
        strict,
        weights,
    };
    let result = match resume {
        None => train(&dataset, &cfg, &opts)?,
        Some(ckpt) => {
            let model = DagfModel::load(ckpt)?;
            if model.cfg != cfg {
                return Err(CliError::Runtime(format!(
                    "checkpoint config {:?} does not match the requested config",
                    model.cfg
                )));
            }
            let sidecar = ckpt.with_extension("optim");
            let optimizer = if sidecar.exists() {
                dagf_core::checkpoint::load_optimizer_state(&sidecar)?
            } else {
                dagf_core::optim::OptimizerState::new(lr)
            };
            train_from(model.params, optimizer, start_epoch, &dataset, &cfg, &opts)?
        }
    };

    let ckpt_path = out_dir.join("model.ckpt");
    dagf_core::checkpoint::save_checkpoint(&result.params, &cfg, &ckpt_path)?;
    dagf_core::checkpoint::save_optimizer_state(&result.optimizer, &ckpt_path.with_extension("optim"))?;
    write_loss_csv(&result.history, &out_dir.join("loss.csv"))?;
    let run_manifest = format!(
        "seed={seed}\nstrict={strict}\nm={}\nk={}\nchannels={}\nvariant={}\nscale={scale}\nmode={}\nnoise_sigma={noise_sigma}\nepochs={epochs}\nbatch={batch_size}\npatch={patch_size}\nlr={lr}\nlr_halve_every={lr_halve_every}\nomega=({},{},{})\ndataset_hash={:016x}\nsteps={}\n",
        cfg.m,
        cfg.k,
        cfg.channels,
        cfg.variant.name(),
        mode.name(),
        weights.omega1,
        weights.omega2,
        weights.omega3,
        dataset_hash(&dataset),
        result.optimizer.step_count,
    );
    std::fs::write(out_dir.join("run.txt"), run_manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(last) = result.history.last() {
        println!("final epoch {}: total={:.6} l1={:.6}", last.epoch, last.total, last.l1);
    }
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    manifest: &Option<PathBuf>,
    synthetic: &Option<usize>,
    synthetic_size: usize,
    method_list: &str,
    degrade: &DegradeArgs,
    rmse_convention: &str,
    depth_scale: f64,
    border_crop: usize,
    checkpoint: Option<&Path>,
    sigma_s: f64,
    sigma_r: f64,
    radius: usize,
    epsilon: f64,
    out: &Path,
    seed: u64,
    strict: bool,
) -> Result<()> {
    let (scale, mode, noise_sigma) = parse_degrade(degrade)?;
    let convention = match rmse_convention {
        "byte" => RmseConvention::ByteRange,
        "cm" => RmseConvention::Centimeters { unit_scale: depth_scale },
        other => return Err(CliError::validation(format!("unknown rmse convention `{other}`"))),
    };
    if let Some(path) = manifest {
        require_exists(path, "manifest")?;
    }
    let methods: Vec<&str> = method_list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if methods.is_empty() {
        return Err(CliError::validation("no evaluation methods given"));
    }
    for m in &methods {
        match *m {
            "bicubic" | "nearest" | "bilateral" | "gif" | "jbu" => {}
            "dagf" => {
                let ckpt =
                    checkpoint.ok_or_else(|| CliError::validation("dagf evaluation needs --checkpoint"))?;
                require_exists(ckpt, "checkpoint")?;
            }
            other => return Err(CliError::validation(format!("unknown method `{other}`"))),
        }
    }
    banner(seed, strict, &format!("methods={method_list} scale={scale} mode={}", mode.name()));

    let pairs = load_dataset(manifest, synthetic, synthetic_size, scale, mode, noise_sigma, seed)?;
    let proto = EvalProtocol { convention, border_crop };
    let threads = if strict { 1 } else { thread_cap() };
    let mut summaries = Vec::new();
    for name in methods {
        let method = match name {
            "bicubic" => EvalMethod::Bicubic,
            "nearest" => EvalMethod::Nearest,
            "bilateral" => EvalMethod::Bilateral(BilateralParams { sigma_s, sigma_r, radius }),
            "gif" => EvalMethod::Gif(GifParams { radius, epsilon }),
            "jbu" => EvalMethod::Jbu(BilateralParams { sigma_s, sigma_r, radius }),
            "dagf" => EvalMethod::Dagf(DagfModel::load(checkpoint.expect("validated above"))?),
            _ => unreachable!("validated above"),
        };
        let summary = evaluate_with_threads(&pairs, &method, &proto, threads)?;
        println!("{name}: average rmse {:.4} over {} image(s)", summary.average, summary.rows.len());
        summaries.push((summary, scale, mode.name().to_string()));
    }
    write_metrics_csv(&summaries, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_texture(
    input: &Path,
    checkpoint: &Path,
    iterations: usize,
    out: &Path,
    seed: u64,
    strict: bool,
) -> Result<()> {
    require_exists(input, "input image")?;
    require_exists(checkpoint, "checkpoint")?;
    if iterations < 1 {
        return Err(CliError::validation("iterations must be >= 1"));
    }
    banner(seed, strict, &format!("iterations={iterations}"));
    let img = load_png(input)?;
    let model = DagfModel::load(checkpoint)?;
    let outputs = texture_remove(&img, &model, iterations)?;
    let stem = out.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_else(|| "out".into());
    let dir = out.parent().unwrap_or(Path::new("."));
    for (i, image) in outputs.iter().enumerate() {
        if i + 1 == outputs.len() {
            save_png(image, out)?;
            println!("iteration {}: {}", i + 1, out.display());
        } else {
            let path = dir.join(format!("{stem}_iter{}.png", i + 1));
            save_png(image, &path)?;
            println!("iteration {}: {}", i + 1, path.display());
        }
    }
    Ok(())
}

fn cmd_gradcheck(level: &str, seeds: u64) -> Result<()> {
    use dagf_core::gradsuite::{block_checks, full_model_check, primitive_checks};
    if seeds == 0 {
        return Err(CliError::validation("--seeds must be >= 1"));
    }
    let entries = match level {
        "primitives" => primitive_checks(seeds).map_err(|e| CliError::Runtime(e.to_string()))?,
        "blocks" => block_checks().map_err(|e| CliError::Runtime(e.to_string()))?,
        "full" => vec![full_model_check().map_err(|e| CliError::Runtime(e.to_string()))?],
        "all" => dagf_core::gradsuite::run_full_suite(seeds).map_err(|e| CliError::Runtime(e.to_string()))?,
        other => return Err(CliError::validation(format!("unknown gradcheck level `{other}`"))),
    };
    let mut all_ok = true;
    for e in &entries {
        let status = if e.passed() { "ok" } else { "FAIL" };
        println!(
            "{status:4} {:32} max_rel_error {:.3e} (tolerance {:.0e})",
            e.name, e.report.max_rel_error, e.tolerance
        );
        all_ok &= e.passed();
    }
    if all_ok {
        Ok(())
    } else {
        Err(CliError::Runtime("gradient checks failed".into()))
    }
}

fn cmd_synth(out_dir: &Path, count: usize, size: usize, degrade: &DegradeArgs, seed: u64) -> Result<()> {
    let (scale, mode, noise_sigma) = parse_degrade(degrade)?;
    if count == 0 {
        return Err(CliError::validation("--count must be >= 1"));
    }
    if size % scale != 0 {
        return Err(CliError::validation(format!("size {size} must be divisible by scale {scale}")));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    banner(seed, false, &format!("count={count} size={size}"));
    let pairs = generate_synthetic_pairs(&SynthOptions { count, size, scale, mode, noise_sigma, seed })?;
    let mut entries = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let g = out_dir.join(format!("guidance_{i:03}.png"));
        let t = out_dir.join(format!("target_{i:03}.png"));
        save_png(&pair.guidance, &g)?;
        save_png(&pair.target_gt, &t)?;
        entries.push((g, t));
    }
    let manifest = out_dir.join("pairs.tsv");
    write_manifest(&manifest, &entries)?;
    println!("wrote {count} pairs and {}", manifest.display());
    Ok(())
}
