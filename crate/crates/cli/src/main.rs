use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use samossa::{ArOrder, Layout, RankRule, SegmentLength};

mod commands;
mod config;

use config::Preset;

#[derive(Parser)]
#[command(name = "samossa", version, about = "Decompose and forecast multivariate time series")]
struct Cli {
    /// Config file (TOML, or JSON when the name ends in .json); flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for parallel stages (0 = all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel: y.csv, f.csv, x.csv and truth.json
    Synth(SynthArgs),
    /// Fit a model and write it as JSON
    Fit(FitArgs),
    /// Write the estimated deterministic part and residual as f_hat.csv and x_hat.csv
    Decompose(DecomposeArgs),
    /// Recursive multi-step forecasts from a saved model
    Forecast(ForecastArgs),
    /// Rolling one-step forecasts over a test CSV, revealing each value after forecasting it.
    ///
    /// A wide test file is taken to start right after the model's last observation; a long file
    /// must carry matching time indices.
    ObserveForecast(ObserveArgs),
    /// Select the AR order on a validation window, then score rolling forecasts on the test window
    Eval(EvalArgs),
    /// Grid search over rank rule, shape ratio and AR order, with the order-0 baseline
    Grid(GridArgs),
    /// Estimation-error sweep over panel sizes; writes fig2.csv and summary.json
    Fig2(Fig2Args),
}

#[derive(Args)]
pub struct InputArgs {
    /// Input panel CSV
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,

    /// CSV layout for input and output panels [default: wide]
    #[arg(long, value_name = "wide|long", value_parser = parse_layout)]
    pub layout: Option<Layout>,
}

#[derive(Args)]
pub struct ModelArgs {
    /// Page-matrix segment length: auto or an integer >= 2 [default: auto]
    #[arg(long = "L", value_name = "auto|N", value_parser = parse_l)]
    pub l: Option<SegmentLength>,

    /// Rank rule: fixed:K, energy:F or universal [default: energy:0.9]
    #[arg(long, value_name = "RULE", value_parser = parse_rank)]
    pub rank: Option<RankRule>,

    /// Page-matrix shape ratio used by --L auto [default: 1]
    #[arg(long, value_name = "R")]
    pub shape_ratio: Option<f64>,
}

#[derive(Args)]
pub struct SplitArgs {
    /// Training window length [default: all rows before validation and test]
    #[arg(long, value_name = "T")]
    pub train_len: Option<usize>,

    /// Validation window length [default: 25]
    #[arg(long, value_name = "T")]
    pub valid_len: Option<usize>,

    /// Test window length [default: 25]
    #[arg(long, value_name = "T")]
    pub test_len: Option<usize>,

    /// Directory written by `synth`; forecasts are then also scored against the conditional mean
    #[arg(long, value_name = "DIR")]
    pub truth: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Generator preset
    #[arg(long, value_enum, value_name = "NAME")]
    pub preset: Option<Preset>,

    /// Largest AR root modulus (fig2 and pure-ar presets) [default: 0.3]
    #[arg(long, value_name = "X")]
    pub lambda_star: Option<f64>,

    /// Number of series [default: 10 for fig2 and pure-ar, 25 for table1]
    #[arg(long, value_name = "N")]
    pub n_series: Option<usize>,

    /// Series length [default: 2500 for fig2 and pure-ar, 10050 for table1]
    #[arg(long, value_name = "T")]
    pub len: Option<usize>,

    /// Innovation variance (overrides the preset)
    #[arg(long, value_name = "S2")]
    pub noise_var: Option<f64>,

    /// Random seed [default: 1]
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,

    /// CSV layout of the written panels [default: wide]
    #[arg(long, value_name = "wide|long", value_parser = parse_layout)]
    pub layout: Option<Layout>,

    /// Output directory [default: .]
    #[arg(short, long, value_name = "DIR")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub model: ModelArgs,

    /// AR order: an integer, grid (0..=3) or grid:a,b,.. [default: 1]
    #[arg(long, value_name = "grid|N", value_parser = parse_order)]
    pub p: Option<ArOrder>,

    /// Trailing rows used to pick the order when --p is a grid [default: 25]
    #[arg(long, value_name = "T")]
    pub valid_len: Option<usize>,

    /// Model file [default: model.json]
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub model: ModelArgs,

    /// Output directory [default: .]
    #[arg(short, long, value_name = "DIR")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct ForecastArgs {
    /// Model file written by `fit`
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// Number of steps ahead [default: 1]
    #[arg(long, value_name = "H")]
    pub horizon: Option<usize>,

    /// CSV layout of the forecasts [default: wide]
    #[arg(long, value_name = "wide|long", value_parser = parse_layout)]
    pub layout: Option<Layout>,

    /// Output CSV [default: standard output]
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct ObserveArgs {
    /// Model file written by `fit`
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,

    #[command(flatten)]
    pub input: InputArgs,

    /// Write the model, advanced past the test window, to this file
    #[arg(long, value_name = "FILE")]
    pub save_model: Option<PathBuf>,

    /// Output directory for forecasts.csv and summary.json [default: .]
    #[arg(short, long, value_name = "DIR")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub model: ModelArgs,

    /// AR order: an integer, grid (0..=3) or grid:a,b,.. [default: grid]
    #[arg(long, value_name = "grid|N", value_parser = parse_order)]
    pub p: Option<ArOrder>,

    #[command(flatten)]
    pub split: SplitArgs,

    /// Exit with status 3 if the mean test R^2 is below this value
    #[arg(long, value_name = "X")]
    pub min_r2: Option<f64>,

    /// Output directory for forecasts.csv and summary.json [default: .]
    #[arg(short, long, value_name = "DIR")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Page-matrix segment length for every lattice point: auto or an integer >= 2 [default: auto]
    #[arg(long = "L", value_name = "auto|N", value_parser = parse_l)]
    pub l: Option<SegmentLength>,

    #[command(flatten)]
    pub split: SplitArgs,

    /// Exit with status 3 if the selected model's mean test R^2 is below this value
    #[arg(long, value_name = "X")]
    pub min_r2: Option<f64>,

    /// Exit with status 3 if the R^2 gain over the order-0 baseline is below this value
    #[arg(long, value_name = "X")]
    pub min_gap: Option<f64>,

    /// Output directory for grid.csv and summary.json [default: .]
    #[arg(short, long, value_name = "DIR")]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct Fig2Args {
    /// Largest AR root modulus; repeat for several curves [default: 0.3]
    #[arg(long, value_name = "X")]
    pub lambda_star: Vec<f64>,

    /// Panel sizes as NxT, comma separated [default: 10x30,10x600,10x18000,10x300000]
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub sweep: Vec<String>,

    /// Number of seeds per point [default: 10]
    #[arg(long, value_name = "K")]
    pub seeds: Option<u64>,

    /// First seed; runs use SEED, SEED+1, .. [default: 1]
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,

    /// Rank rule [default: fixed:6]
    #[arg(long, value_name = "RULE", value_parser = parse_rank)]
    pub rank: Option<RankRule>,

    /// AR order fitted to the residual [default: 2]
    #[arg(long, value_name = "N")]
    pub p: Option<usize>,

    /// Exit with status 3 unless every estimation-error slope lies in [-0.75, -0.25]
    #[arg(long)]
    pub check: bool,

    /// Output directory [default: .]
    #[arg(short, long, value_name = "DIR")]
    pub output: Option<PathBuf>,
}

fn parse_l(s: &str) -> Result<SegmentLength, String> {
    s.parse().map_err(|e: samossa::Error| e.to_string())
}

fn parse_rank(s: &str) -> Result<RankRule, String> {
    s.parse().map_err(|e: samossa::Error| e.to_string())
}

fn parse_order(s: &str) -> Result<ArOrder, String> {
    s.parse().map_err(|e: samossa::Error| e.to_string())
}

fn parse_layout(s: &str) -> Result<Layout, String> {
    s.parse().map_err(|e: samossa::Error| e.to_string())
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(samossa::Error),
    Acceptance(String),
}

impl From<samossa::Error> for CliError {
    fn from(e: samossa::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(samossa::Error::Config(_)) => 1,
            CliError::Core(_) => 2,
            CliError::Acceptance(_) => 3,
        }
    }

    fn render(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("UsageError", m.clone()),
            CliError::Core(e) => (e.kind(), e.to_string()),
            CliError::Acceptance(m) => ("AcceptanceError", m.clone()),
        };
        format!("samossa: error[{kind}]: {}", msg.replace('\n', " "))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default();
            let err = CliError::Usage(first.trim_start_matches("error: ").to_owned());
            eprintln!("{}", err.render());
            return ExitCode::from(err.exit_code());
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.render());
            ExitCode::from(e.exit_code())
        }
    }
}
