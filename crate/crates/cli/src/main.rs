use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use respgate_core::heartbeat::{ScoreMethod, DEFAULT_RR_TOLERANCE};
use respgate_core::phantom::{OrientationScenario, PhantomConfig, RespPattern};

mod commands;
mod report;

/// Respiratory signal extraction and heartbeat gating for multi-slice
/// real-time cine.
#[derive(Debug, Parser)]
#[command(name = "respgate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic stack with known respiratory ground truth.
    Phantom(PhantomArgs),
    /// Extract sign-resolved respiratory signals and select heartbeats.
    Extract(ExtractArgs),
    /// Score extracted signals against phantom ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PatternArg {
    Periodic,
    LongCycle,
    Irregular,
    WithDrift,
}

impl From<PatternArg> for RespPattern {
    fn from(p: PatternArg) -> Self {
        match p {
            PatternArg::Periodic => RespPattern::Periodic,
            PatternArg::LongCycle => RespPattern::LongCycle,
            PatternArg::Irregular => RespPattern::Irregular,
            PatternArg::WithDrift => RespPattern::WithDrift,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OrientationArg {
    Aligned,
    Transposed,
    Flipped,
    Oblique,
}

impl From<OrientationArg> for OrientationScenario {
    fn from(o: OrientationArg) -> Self {
        match o {
            OrientationArg::Aligned => OrientationScenario::Aligned,
            OrientationArg::Transposed => OrientationScenario::Transposed,
            OrientationArg::Flipped => OrientationScenario::Flipped,
            OrientationArg::Oblique => OrientationScenario::Oblique,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScoreArg {
    Mean,
    FirstFrame,
}

impl From<ScoreArg> for ScoreMethod {
    fn from(s: ScoreArg) -> Self {
        match s {
            ScoreArg::Mean => ScoreMethod::Mean,
            ScoreArg::FirstFrame => ScoreMethod::FirstFrame,
        }
    }
}

#[derive(Debug, Args)]
struct PhantomArgs {
    #[arg(long, default_value_t = 10)]
    slices: usize,
    #[arg(long, default_value_t = 64)]
    rows: usize,
    #[arg(long, default_value_t = 64)]
    cols: usize,
    #[arg(long, default_value_t = 250)]
    frames: usize,
    /// Frame period in seconds.
    #[arg(long, default_value_t = 0.04)]
    dt: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PatternArg::Periodic)]
    resp_pattern: PatternArg,
    /// Respiratory period in seconds.
    #[arg(long, default_value_t = 4.0)]
    resp_period: f64,
    /// Diaphragm excursion amplitude in pixels.
    #[arg(long, default_value_t = 5.0)]
    resp_amp: f64,
    /// Heart rate in Hz.
    #[arg(long, default_value_t = 1.2)]
    cardiac_rate: f64,
    /// Heart radius pulsation in pixels.
    #[arg(long, default_value_t = 2.0)]
    cardiac_amp: f64,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = OrientationArg::Aligned)]
    orientation: OrientationArg,
    #[arg(long)]
    out: PathBuf,
}

impl PhantomArgs {
    fn config(&self) -> PhantomConfig {
        PhantomConfig {
            slices: self.slices,
            rows: self.rows,
            cols: self.cols,
            frames: self.frames,
            frame_period_s: self.dt,
            resp_pattern: self.resp_pattern.into(),
            resp_period_s: self.resp_period,
            resp_amp_px: self.resp_amp,
            cardiac_rate_hz: self.cardiac_rate,
            cardiac_amp_px: self.cardiac_amp,
            noise_sigma: self.noise,
            orientation: self.orientation.into(),
            seed: self.seed,
            ..PhantomConfig::default()
        }
    }
}

/// Settings shared by extraction and split evaluation.
#[derive(Debug, Args)]
struct PipelineArgs {
    /// Low-pass cutoff in Hz.
    #[arg(long, default_value_t = respgate_core::filter::DEFAULT_CUTOFF_HZ)]
    cutoff_hz: f64,
    /// Correlation threshold for the ZMC consensus.
    #[arg(long, default_value_t = respgate_core::direction::DEFAULT_TAU)]
    tau: f64,
    /// Compute ZMC curves on the unfiltered images.
    #[arg(long)]
    zmc_unfiltered: bool,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Stack directory or its stack.json.
    stack: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// How a heartbeat's respiratory position is scored.
    #[arg(long, value_enum, default_value_t = ScoreArg::Mean)]
    score: ScoreArg,
    /// Largest accepted relative deviation from the mean RR interval.
    #[arg(long, default_value_t = DEFAULT_RR_TOLERANCE)]
    rr_tolerance: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Output directory of `extract`.
    #[arg(long)]
    extract_dir: PathBuf,
    /// truth.json written by `phantom`.
    #[arg(long)]
    truth: PathBuf,
    /// Also cut every series into this many parts and evaluate each part
    /// from scratch. Needs --stack.
    #[arg(long)]
    split: Option<usize>,
    /// Stack the signals were extracted from (for --split).
    #[arg(long)]
    stack: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Where to write summary.json and run.json [default: <extract-dir>/eval].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_threads() -> anyhow::Result<Option<usize>> {
    let Ok(raw) = std::env::var("RESPGATE_THREADS") else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| anyhow::anyhow!("RESPGATE_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(Some(n))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let undetermined = err
        .chain()
        .filter_map(|e| e.downcast_ref::<respgate_core::Error>())
        .any(|e| e.is_undetermined());
    if undetermined {
        2
    } else {
        1
    }
}

/// The error chain on one line. Library errors already embed their
/// sources in their messages, so repeated text is dropped.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = init_threads().and_then(|threads| match &cli.command {
        Command::Phantom(args) => commands::phantom(args),
        Command::Extract(args) => commands::extract(args, threads),
        Command::Eval(args) => commands::eval(args, threads),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
