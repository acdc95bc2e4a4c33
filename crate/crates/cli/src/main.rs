use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rrq_cli::config::{ExperimentConfig, MetricConfig, ReportFormat};
use rrq_cli::evaluate::evaluate_predictions;
use rrq_cli::landmarks::LandmarkFormat;
use rrq_cli::report::{write_atomic, ExperimentReport};
use rrq_cli::sweep::run_sweep;
use rrq_cli::verify::{run_suite, VerifyOptions, MC_SAMPLES};
use rrq_core::metrics::NormalizationKind;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;

#[derive(Parser)]
#[command(
    name = "rrq",
    version,
    about = "Randomized-rounding heatmap codec experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the encode -> predict -> decode sweep described by a config file.
    Run(RunArgs),
    /// Score a prediction landmark file against ground truth.
    Evaluate(EvaluateArgs),
    /// Run the oracle suite; exits with 2 if any check fails.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Overrides the config output path; stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Landmark file format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    input_format: Option<LandmarkFormat>,
    #[arg(long, group = "norm")]
    fixed_distance: Option<f64>,
    /// Landmark indices of the outer eye corners.
    #[arg(long, num_args = 2, value_names = ["LEFT", "RIGHT"], group = "norm")]
    inter_ocular: Option<Vec<usize>>,
    /// Landmark indices of the pupil centres.
    #[arg(long, num_args = 2, value_names = ["LEFT", "RIGHT"], group = "norm")]
    inter_pupil: Option<Vec<usize>>,
    /// PCK threshold; repeatable.
    #[arg(long = "alpha")]
    alphas: Vec<f64>,
    #[arg(long)]
    per_image_mean: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    format: ReportFormat,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo draws per statistical check.
    #[arg(long, default_value_t = MC_SAMPLES)]
    samples: u64,
    /// Also write the verdicts as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn emit(
    report: &ExperimentReport,
    out: Option<&PathBuf>,
    format: ReportFormat,
) -> anyhow::Result<()> {
    match out {
        Some(path) => report.write(path, format)?,
        None => std::io::stdout().write_all(&report.render(format))?,
    }
    Ok(())
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = run_sweep(&cfg, args.workers)?;
    let out = args
        .out
        .or_else(|| cfg.output.as_ref().map(|o| o.path.clone()));
    let format = args
        .format
        .or_else(|| cfg.output.as_ref().map(|o| o.format))
        .unwrap_or_default();
    emit(&report, out.as_ref(), format)?;
    if !report.all_verdicts_pass() {
        for v in report.verdicts.iter().filter(|v| !v.pass) {
            eprintln!(
                "FAIL {}: observed {} expected {}",
                v.name, v.observed, v.expected
            );
        }
        return Ok(ExitCode::from(EXIT_VERIFY));
    }
    Ok(ExitCode::SUCCESS)
}

fn evaluate(args: EvaluateArgs) -> anyhow::Result<ExitCode> {
    let pair = |v: &Vec<usize>| (v[0], v[1]);
    let normalization = if let Some(d) = args.fixed_distance {
        Some(NormalizationKind::FixedDistance { d })
    } else if let Some((left, right)) = args.inter_ocular.as_ref().map(pair) {
        Some(NormalizationKind::InterOcular { left, right })
    } else {
        args.inter_pupil
            .as_ref()
            .map(pair)
            .map(|(left, right)| NormalizationKind::InterPupil { left, right })
    };
    let metrics = MetricConfig {
        normalization,
        alphas: args.alphas,
        per_image_mean: args.per_image_mean,
    };
    let report = evaluate_predictions(&args.pred, &args.gt, &metrics, args.input_format)?;
    emit(&report, args.out.as_ref(), args.format)?;
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let report = run_suite(VerifyOptions {
        seed: args.seed,
        samples: args.samples,
    })?;
    print!("{}", report.render_text());
    if let Some(path) = &args.json {
        let mut bytes = serde_json::to_vec_pretty(&report)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)?;
    }
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
