#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::json;

use udenoise_core::denoise::{
    choose_bandwidth, cumulative_loss, denoise_sliding, denoise_symbolwise, BandwidthPolicy, ContextLayout,
    ContextShape, LossFunction, LossKind, SlidingOptions, SymbolwiseOptions,
};
use udenoise_core::density::{covering_grid, histogram_estimate, kde, KdeMethod, DEFAULT_GRID_1D};
use udenoise_core::dude::{equivalence_check, EquivalenceConfig};
use udenoise_core::harness::{rmse, run_experiment, ExperimentConfig};
use udenoise_core::inversion::{invert_channel, InversionOptions, PivotRule, SolverKind};
use udenoise_core::io::{load_sequence, save_sequence, Image};
use udenoise_core::{ChannelModel, ChannelSpec, DensityEstimate, Kernel, KernelKind, SupportGrid};

#[derive(Parser, Debug)]
#[command(name = "udenoise", version, about = "Universal denoising through known memoryless channels")]
struct Cli {
    /// Worker threads; UDENOISE_THREADS takes precedence. Defaults to the available cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Master seed; overrides the seed of a benchmark config.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Kernel or histogram density estimate of a sequence.
    Density(DensityArgs),
    /// Recovers the clean symbol distribution from an output density.
    Invert(InvertArgs),
    /// Denoises a sequence (CSV or binary) or a PGM image.
    Denoise(DenoiseArgs),
    /// Runs an experiment described by a JSON config.
    Benchmark(BenchmarkArgs),
    /// Compares the quantized pipeline with the count-based discrete rule.
    DudeCheck(DudeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Density(_) => "density",
            Command::Invert(_) => "invert",
            Command::Denoise(_) => "denoise",
            Command::Benchmark(_) => "benchmark",
            Command::DudeCheck(_) => "dude-check",
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum KernelArg {
    Gaussian,
    Epanechnikov,
    Box,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Gaussian => KernelKind::Gaussian,
            KernelArg::Epanechnikov => KernelKind::Epanechnikov,
            KernelArg::Box => KernelKind::Box,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SolverArg {
    Simplex,
    PrimalDual,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PivotArg {
    Bland,
    Dantzig,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ShapeArg {
    Window,
    Cross,
}

#[derive(Args, Debug)]
struct DensityArgs {
    /// Input sequence (.csv, .bin, .f64) or PGM image.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian", conflicts_with = "histogram")]
    kernel: KernelArg,
    /// auto (Silverman), lcv, or a positive width.
    #[arg(long, value_name = "POLICY", default_value = "auto", value_parser = parse_bandwidth, conflicts_with = "histogram")]
    bandwidth: BandwidthPolicy,
    /// Histogram estimate with this bin width instead of a kernel estimate.
    #[arg(long, value_name = "WIDTH")]
    histogram: Option<f64>,
    #[arg(long, value_name = "COUNT", default_value_t = DEFAULT_GRID_1D)]
    grid_points: usize,
    /// Density CSV to write.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InvertArgs {
    /// Density CSV written by `density`.
    #[arg(long, value_name = "PATH")]
    density: PathBuf,
    /// Channel, e.g. awgn:sigma=0.3, multiplicative:sigma=0.2, rayleigh:slope=0.137.
    #[arg(long, value_name = "SPEC", value_parser = parse_channel)]
    channel: String,
    /// Clean range as A:B.
    #[arg(long, value_name = "A:B", value_parser = parse_range)]
    range: (f64, f64),
    /// Support step; (B - A) / 32 when absent.
    #[arg(long = "Delta", value_name = "STEP")]
    support_step: Option<f64>,
    /// Mass quantizer step.
    #[arg(long = "delta", value_name = "STEP", default_value_t = 1.0 / 256.0)]
    level_step: f64,
    /// Kernel the density was estimated with.
    #[arg(long, value_enum, default_value = "gaussian")]
    kernel: KernelArg,
    /// Fit raw channel columns instead of kernel-smoothed ones.
    #[arg(long)]
    no_kernel_match: bool,
    /// LP solver.
    #[arg(long, value_enum, default_value = "simplex")]
    solver: SolverArg,
    /// Entering-column rule of the simplex solver.
    #[arg(long, value_enum, default_value = "bland")]
    pivot: PivotArg,
    /// Pmf CSV to write; a JSON sidecar goes next to it.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    /// Noisy sequence (.csv, .bin, .f64) or PGM image.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_name = "SPEC", value_parser = parse_channel)]
    channel: String,
    /// Clean range as A:B; 0:maxval for images.
    #[arg(long, value_name = "A:B", value_parser = parse_range)]
    range: Option<(f64, f64)>,
    /// squared or absolute.
    #[arg(long, value_name = "LOSS", default_value = "squared", value_parser = parse_loss)]
    loss: LossKind,
    /// Context half-width.
    #[arg(long, value_name = "K", default_value_t = 0)]
    k: usize,
    /// Support step; (B - A) / 32 when absent.
    #[arg(long = "Delta", value_name = "STEP")]
    support_step: Option<f64>,
    /// Mass quantizer step.
    #[arg(long = "delta", value_name = "STEP", default_value_t = 1.0 / 256.0)]
    level_step: f64,
    /// Support step of context tuples; (B - A) / 15 when absent.
    #[arg(long = "context-Delta", value_name = "STEP")]
    context_step: Option<f64>,
    /// Neighbourhood of image contexts.
    #[arg(long, value_enum, default_value = "window")]
    context_shape: ShapeArg,
    /// auto (Silverman), lcv, or a positive width.
    #[arg(long, value_name = "POLICY", default_value = "auto", value_parser = parse_bandwidth)]
    bandwidth: BandwidthPolicy,
    /// Clean signal, for error metrics.
    #[arg(long, value_name = "PATH")]
    clean: Option<PathBuf>,
    /// Denoised output, same format as the input.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// JSON diagnostics to write.
    #[arg(long, value_name = "PATH")]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DudeArgs {
    /// Noisy sequence (.csv, .bin, .f64).
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Number of clean symbols.
    #[arg(long = "M", value_name = "LEVELS")]
    levels: usize,
    /// Symbol spacing and quantizer cell width.
    #[arg(long, value_name = "ALPHA")]
    alpha: f64,
    /// Context half-width.
    #[arg(long, value_name = "K", default_value_t = 0)]
    k: usize,
    /// First clean symbol.
    #[arg(long, value_name = "VALUE", default_value_t = 0.0)]
    origin: f64,
    /// Channel; awgn with sigma = ALPHA when absent.
    #[arg(long, value_name = "SPEC", value_parser = parse_channel)]
    channel: Option<String>,
    /// Histogram bins per quantizer cell.
    #[arg(long, value_name = "R", default_value_t = 1)]
    refinement: usize,
    /// squared or absolute.
    #[arg(long, value_name = "LOSS", default_value = "squared", value_parser = parse_loss)]
    loss: LossKind,
    /// JSON report to write.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected A:B")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("'{a}' is not a number"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("'{b}' is not a number"))?;
    if !(a < b) {
        return Err(format!("range {a}:{b} is empty"));
    }
    Ok((a, b))
}

fn parse_channel(s: &str) -> Result<String, String> {
    s.parse::<ChannelSpec>().map_err(|e| e.to_string())?;
    Ok(s.to_string())
}

fn parse_bandwidth(s: &str) -> Result<BandwidthPolicy, String> {
    s.parse().map_err(|e: udenoise_core::Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: udenoise_core::Error| e.to_string())
}

/// A problem with the invocation rather than the data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

enum Signal {
    Sequence(Vec<f64>),
    Image(Image),
}

impl Signal {
    fn is_image(path: &Path) -> bool {
        path.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
    }

    fn load(path: &Path) -> anyhow::Result<Signal> {
        Ok(if Signal::is_image(path) {
            Signal::Image(Image::load(path)?)
        } else {
            Signal::Sequence(load_sequence(path)?)
        })
    }

    fn values(&self) -> &[f64] {
        match self {
            Signal::Sequence(v) => v,
            Signal::Image(img) => &img.pixels,
        }
    }
}

fn density(args: DensityArgs) -> anyhow::Result<()> {
    let signal = Signal::load(&args.input)?;
    let y = signal.values();
    if y.is_empty() {
        bail!("{} holds no samples", args.input.display());
    }
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let estimate = match args.histogram {
        Some(width) => histogram_estimate(y, 1, width, lo)?,
        None => {
            let span = if hi > lo { hi - lo } else { 1.0 };
            let (h, _) = choose_bandwidth(y, 1, args.bandwidth, args.kernel.into(), span)?;
            let axes = covering_grid(y, 1, h, args.grid_points)?;
            kde(y, &Kernel::new(args.kernel.into(), 1)?, h, &axes, KdeMethod::Auto)?
        }
    };
    estimate.save_csv(&args.out)?;
    println!(
        "bandwidth: {}\npoints: {}\nintegral: {}",
        estimate.bandwidth(),
        estimate.values().len(),
        estimate.integral()
    );
    Ok(())
}

fn invert(args: InvertArgs) -> anyhow::Result<()> {
    let (a, b) = args.range;
    let f_hat = DensityEstimate::load_csv(&args.density)?;
    let channel = ChannelModel::from_spec(&args.channel, a, b)?;
    let grid = SupportGrid::new(a, b, args.support_step.unwrap_or((b - a) / 32.0))?;
    let opts = InversionOptions {
        solver: match args.solver {
            SolverArg::Simplex => SolverKind::Simplex,
            SolverArg::PrimalDual => SolverKind::PrimalDual,
        },
        pivot: match args.pivot {
            PivotArg::Bland => PivotRule::Bland,
            PivotArg::Dantzig => PivotRule::Dantzig,
        },
        match_kernel: (!args.no_kernel_match).then(|| args.kernel.into()),
        ..InversionOptions::default()
    };
    let lp = invert_channel(&f_hat, &channel, &grid, args.level_step, &opts)?;
    lp.save(&args.out)?;
    println!(
        "objective: {}\ngap: {}\niterations: {}\ntotal: {}",
        lp.objective,
        lp.gap,
        lp.iterations,
        lp.pmf.total()
    );
    Ok(())
}

fn denoise(args: DenoiseArgs) -> anyhow::Result<()> {
    if args.range.is_none() && !Signal::is_image(&args.input) {
        return Err(Usage("--range <A:B> is required for sequence input".into()).into());
    }
    let signal = Signal::load(&args.input)?;
    let (a, b) = match (&signal, args.range) {
        (_, Some(r)) => r,
        (Signal::Image(img), None) => (0.0, img.maxval as f64),
        (Signal::Sequence(_), None) => unreachable!("checked above"),
    };
    let y = signal.values();
    let channel = ChannelModel::from_spec(&args.channel, a, b)?;
    let loss = LossFunction::new(args.loss, a, b)?;
    let base = SymbolwiseOptions {
        delta_support: args.support_step,
        level_step: args.level_step,
        bandwidth: args.bandwidth,
        ..SymbolwiseOptions::default()
    };
    let mut metrics = json!({
        "n": y.len(),
        "k": args.k,
        "range": [a, b],
    });
    let estimate = if args.k == 0 {
        let out = denoise_symbolwise(y, &channel, &loss, &base)?;
        let d = &out.diagnostics;
        metrics["bandwidth"] = json!(d.bandwidth);
        metrics["lp-objective"] = json!(d.lp_objective);
        metrics["lp-gap"] = json!(d.lp_gap);
        metrics["lp-iterations"] = json!(d.lp_iterations);
        metrics["pmf-total"] = json!(d.pmf.total());
        metrics["degenerate"] = json!(d.degenerate);
        out.estimate
    } else {
        let shape = match args.context_shape {
            ShapeArg::Window => ContextShape::Window,
            ShapeArg::Cross => ContextShape::Cross,
        };
        let layout = match &signal {
            Signal::Image(img) => ContextLayout::raster(img.height, img.width, &shape, args.k)?,
            Signal::Sequence(v) => ContextLayout::sequence(v.len(), args.k)?,
        };
        let opts = SlidingOptions {
            k: args.k,
            base,
            context_delta: Some(args.context_step.unwrap_or((b - a) / 15.0)),
            ..SlidingOptions::default()
        };
        let out = denoise_sliding(y, &layout, &channel, &loss, &opts)?;
        let d = &out.diagnostics;
        metrics["bandwidth"] = json!(d.base.bandwidth);
        metrics["lp-objective"] = json!(d.base.lp_objective);
        metrics["border-positions"] = json!(d.border_positions);
        metrics["classes"] = serde_json::to_value(&d.classes)?;
        out.estimate
    };
    if let Some(path) = &args.clean {
        let clean = Signal::load(path)?;
        let x = clean.values();
        metrics["rmse-noisy"] = json!(rmse(x, y)?);
        metrics["rmse-denoised"] = json!(rmse(x, &estimate)?);
        metrics["cumulative-loss"] = json!(cumulative_loss(x, &estimate, &loss)?);
    }
    match &signal {
        Signal::Image(img) => Image::new(img.width, img.height, img.maxval, estimate)?.save(&args.out)?,
        Signal::Sequence(_) => save_sequence(&estimate, &args.out)?,
    }
    let text = serde_json::to_string_pretty(&metrics)?;
    match &args.metrics {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn benchmark(args: BenchmarkArgs, seed: Option<u64>) -> anyhow::Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(dir) = args.out_dir {
        config.output_dir = Some(dir);
    }
    let out = run_experiment(&config)?;
    println!("{}", out.summary_json()?);
    if out.summary.failed == out.rows.len() {
        bail!("every run failed; first error: {}", out.rows[0].error.as_deref().unwrap_or("unknown"));
    }
    Ok(())
}

fn dude_check(args: DudeArgs) -> anyhow::Result<()> {
    if args.levels < 2 {
        return Err(Usage("--M must be at least 2".into()).into());
    }
    if !(args.alpha > 0.0) {
        return Err(Usage("--alpha must be positive".into()).into());
    }
    let y = Signal::load(&args.input)?;
    let a = args.origin;
    let b = a + (args.levels - 1) as f64 * args.alpha;
    let spec = args.channel.unwrap_or_else(|| format!("awgn:sigma={}", args.alpha));
    let channel = ChannelModel::from_spec(&spec, a, b)?;
    let loss = LossFunction::new(args.loss, a, b)?;
    let config = EquivalenceConfig {
        k: args.k,
        levels: args.levels,
        alpha: args.alpha,
        refinement: args.refinement,
        origin: Some(a),
    };
    let report = equivalence_check(y.values(), &channel, &loss, &config)?;
    println!("match: {}", report.matched);
    println!("positions-checked: {}", report.positions_checked);
    println!("mismatches: {}", report.mismatches);
    match report.first_mismatch {
        Some(i) => println!("first-mismatch: {i}"),
        None => println!("first-mismatch: none"),
    }
    println!("condition-number: {}", report.condition_number);
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    if !report.matched {
        bail!("the two rules disagree at {} positions", report.mismatches);
    }
    Ok(())
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, Usage> {
    match std::env::var("UDENOISE_THREADS") {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Usage(format!("UDENOISE_THREADS={v} is not a positive integer"))),
        },
        _ => match flag {
            Some(0) => Err(Usage("--threads must be positive".into())),
            other => Ok(other),
        },
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Density(a) => density(a),
        Command::Invert(a) => invert(a),
        Command::Denoise(a) => denoise(a),
        Command::Benchmark(a) => benchmark(a, cli.seed),
        Command::DudeCheck(a) => dude_check(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if std::env::args_os().len() <= 1 {
        let _ = Cli::command().print_help();
        return ExitCode::from(1);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                let mut cmd = Cli::command();
                let usage = match cmd.find_subcommand_mut(name) {
                    Some(sub) => sub.render_usage(),
                    None => cmd.render_usage(),
                };
                eprintln!("\n{usage}");
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
