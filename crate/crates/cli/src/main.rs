//! `dagf` — guided image filtering from the command line: classical filters,
//! network training and evaluation, iterative texture removal, and the
//! gradient verification suite.
//!
//! Exit codes: 0 success, 2 validation error, 3 runtime/numeric failure.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "dagf", version, about = "Guided image filtering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct NetworkArgs {
    /// Pyramid levels.
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// Generated kernel size (odd).
    #[arg(long, default_value_t = 3)]
    kernel_size: usize,
    /// Intermediate feature width.
    #[arg(long, default_value_t = 32)]
    channels: usize,
    /// Ablation variant (Model1..Model7).
    #[arg(long, default_value = "Model7")]
    variant: String,
    /// Enable sum-to-one kernel normalization.
    #[arg(long, default_value_t = false)]
    normalize_kernels: bool,
}

#[derive(Args, Debug, Clone)]
struct DegradeArgs {
    /// Downsampling factor.
    #[arg(long, default_value_t = 4)]
    scale: usize,
    /// Downsampling operator: nearest or bicubic.
    #[arg(long, default_value = "nearest")]
    mode: String,
    /// Gaussian noise standard deviation on the [0,255] scale (0 = off).
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
}

#[derive(Args, Debug, Clone)]
struct LossArgs {
    #[arg(long, default_value_t = 1.0)]
    omega1: f64,
    #[arg(long, default_value_t = 0.001)]
    omega2: f64,
    #[arg(long, default_value_t = 1.0)]
    omega3: f64,
    /// omega3 schedule: "constant" or "linear-decay" (full-run decay).
    #[arg(long, default_value = "linear-decay")]
    omega3_schedule: String,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a target image with a guidance image.
    Filter {
        /// One of: bilateral, gif, jbu, dagf.
        #[arg(long)]
        filter: String,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        guidance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint path (dagf filter only).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Bilateral/JBU spatial sigma in pixels.
        #[arg(long, default_value_t = 2.0)]
        sigma_s: f64,
        /// Bilateral/JBU range sigma in guidance units.
        #[arg(long, default_value_t = 0.1)]
        sigma_r: f64,
        /// Window half-size (bilateral/jbu) or guided-filter radius.
        #[arg(long, default_value_t = 4)]
        radius: usize,
        /// Guided-filter regularizer.
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
        /// Upsampling factor for jbu (guidance dims = target dims * scale).
        #[arg(long, default_value_t = 1)]
        scale: usize,
        /// Directory for per-level kernel/attention dumps (dagf only).
        #[arg(long)]
        dump_kernels: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pin bit-reproducible sequential execution.
        #[arg(long, default_value_t = false)]
        strict: bool,
    },
    /// Train the network on a manifest or on synthetic data.
    Train {
        /// Tab-separated manifest of guidance/target PNG pairs.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Use a generated synthetic dataset with this many pairs instead.
        #[arg(long)]
        synthetic: Option<usize>,
        /// Synthetic scene size (pixels).
        #[arg(long, default_value_t = 64)]
        synthetic_size: usize,
        /// Output directory (checkpoint, loss CSV, run manifest).
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        net: NetworkArgs,
        #[command(flatten)]
        degrade: DegradeArgs,
        #[command(flatten)]
        loss: LossArgs,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        /// High-resolution training patch size.
        #[arg(long, default_value_t = 256)]
        patch_size: usize,
        /// Initial learning rate.
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        /// Halve the learning rate every this many epochs.
        #[arg(long, default_value_t = 80)]
        lr_halve_every: usize,
        /// Resume from an existing checkpoint (with optimizer sidecar).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Epoch the resumed run starts at.
        #[arg(long, default_value_t = 0)]
        start_epoch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = false)]
        strict: bool,
    },
    /// Evaluate reconstruction methods over a dataset, reporting RMSE.
    Eval {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 64)]
        synthetic_size: usize,
        /// Comma-separated methods: bicubic,nearest,bilateral,gif,jbu,dagf.
        #[arg(long, default_value = "bicubic")]
        method: String,
        #[command(flatten)]
        degrade: DegradeArgs,
        /// RMSE convention: "byte" (gt range mapped to [0,255]) or "cm".
        #[arg(long, default_value = "byte")]
        rmse_convention: String,
        /// Multiplier turning stored target values into centimeters
        /// (cm convention only).
        #[arg(long, default_value_t = 1.0)]
        depth_scale: f64,
        /// Border pixels excluded from the metric.
        #[arg(long, default_value_t = 0)]
        border_crop: usize,
        /// Checkpoint for the dagf method.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        sigma_s: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma_r: f64,
        #[arg(long, default_value_t = 4)]
        radius: usize,
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
        /// Metrics CSV output path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = false)]
        strict: bool,
    },
    /// Iterative self-guided texture removal.
    Texture {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Self-guided filtering passes.
        #[arg(long, default_value_t = 4)]
        iterations: usize,
        /// Output path; intermediate iterations save next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = false)]
        strict: bool,
    },
    /// Finite-difference verification of the autodiff engine.
    Gradcheck {
        /// Which checks: primitives, blocks, full, or all.
        #[arg(long, default_value = "all")]
        level: String,
        /// Random repetitions per primitive.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Generate a synthetic dataset (PNG pairs plus manifest).
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[command(flatten)]
        degrade: DegradeArgs,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(commands::CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(commands::CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            3
        }
    };
    std::process::exit(code);
}
