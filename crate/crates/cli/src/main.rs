mod commands;
mod error;

use std::path::PathBuf;

use activereg_bench::verify::Suite;
use activereg_bench::ReportFormat;
use activereg_core::basis::MapKind;
use activereg_core::sampler::DEFAULT_C0;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use error::{EXIT_OK, EXIT_USAGE};

/// Active linear regression with barrier-based sample selection.
#[derive(Debug, Parser)]
#[command(name = "activereg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Generate a synthetic linear regression CSV.
    Gen(GenArgs),
    /// Whiten a basis on the data and select rows with the barrier sampler.
    Select(SelectArgs),
    /// Fit weighted least squares on the rows of a selection file.
    Fit(FitArgs),
    /// Report the RMSE of a saved model.
    Eval(EvalArgs),
    /// Split, select, query labels, fit and score in one run.
    Pipeline(PipelineArgs),
    /// Epsilon sweep over seeds.
    Sweep(SweepArgs),
    /// BSS against uniform sampling at matched sample sizes.
    Ksweep(KsweepArgs),
    /// Run a statistical verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Standard deviation of the Gaussian label noise.
    #[arg(long, default_value_t = activereg_core::data::DEFAULT_NOISE_SIGMA)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV path; provenance goes to `<out>.provenance.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the target column.
    #[arg(long, default_value = "y")]
    target: String,
}

#[derive(Debug, Args, Serialize)]
struct BasisArgs {
    #[arg(long, default_value_t = MapKind::Affine)]
    map: MapKind,
    /// Ridge added to the pool second moment before whitening.
    #[arg(long, default_value_t = 0.0)]
    basis_ridge: f64,
}

#[derive(Debug, Args, Serialize)]
struct SamplerArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_C0)]
    c0: f64,
    /// Abort after this many draws (default: 100 d / gamma^2).
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    basis: BasisArgs,
    /// Selection JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    selection: PathBuf,
    #[command(flatten)]
    basis: BasisArgs,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Model JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Score only the test part of this split (all rows when omitted).
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long, default_value_t = 0.2)]
    test_frac: f64,
    /// Also write the result JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PipelineArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    basis: BasisArgs,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long, default_value_t = 0.2)]
    test_frac: f64,
    /// Split seed (defaults to --seed).
    #[arg(long)]
    split_seed: Option<u64>,
    /// Model JSON path.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Selection JSON path.
    #[arg(long)]
    selection_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    eps_list: Vec<f64>,
    /// Number of seeds; seeds run from --seed-base upwards.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long, default_value_t = 0.2)]
    test_frac: f64,
    #[arg(long, default_value_t = DEFAULT_C0)]
    c0: f64,
    #[command(flatten)]
    basis: BasisArgs,
    /// Standardize features with pool statistics before whitening.
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value_t = ReportFormat::Markdown)]
    format: ReportFormat,
    /// Report path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct KsweepArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Plot-ready CSV (k, strategy, rmse_mean, rmse_std).
    #[arg(long)]
    plot_csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    suite: Suite,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the suite report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match serde_json::to_string(&cli.command) {
        Ok(json) => eprintln!("activereg {} config: {json}", env!("CARGO_PKG_VERSION")),
        Err(e) => eprintln!("activereg: could not render config: {e}"),
    }
    let code = match commands::run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("activereg: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
