//! `lomn`: jump tests, online detection and Monte Carlo tables for quote
//! data with one-sided microstructure noise.
//!
//! Exit status is 0 on success and 2 when input, configuration or
//! computation fails. `reproduce-table --strict` exits 1 when a cell falls
//! outside its tolerance.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lomn", version, about = "Jump inference under one-sided limit-order noise")]
struct Cli {
    /// Worker threads for replications and bootstrap draws (0 = all cores).
    #[arg(long, global = true, env = "LOMN_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one session and write it as a quote file.
    Simulate(SimulateArgs),
    /// Global test for jumps over the whole session.
    TestGlobal(TestGlobalArgs),
    /// Test for a jump at a given time.
    TestLocal(TestLocalArgs),
    /// Replay a session through the online detector; events as JSON lines.
    DetectOnline(DetectOnlineArgs),
    /// Compare detection times of the ask, bid and mid-quote detectors.
    Race(RaceArgs),
    /// Bootstrap critical values under the no-jump null.
    CalibrateBootstrap(CalibrateArgs),
    /// Regenerate a stored size/power table and check every cell.
    ReproduceTable(ReproduceArgs),
    /// Cross-day median autocorrelation of quote returns.
    DiagnoseAcf(AcfArgs),
    /// Apply session cleaning and optionally split into intraday segments.
    Clean(CleanArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FileFormat {
    Csv,
    Lobster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SideArg {
    Ask,
    Bid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CleanSide {
    Ask,
    Bid,
    Mid,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CriticalArg {
    Asymptotic,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseArg {
    Ar1,
    HalfNormal,
    Gaussian,
    Exponential,
    Rounding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ThresholdArg {
    BlockRate,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StatisticArg {
    Ext,
    Lm,
    LocalExt,
    LocalLm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Thinned,
    HalfNormal,
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableArg {
    T1,
    T2,
    T3,
    T4,
    S1,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Quote CSV (`time_sec,ask_price,bid_price`) or LOBSTER orderbook file.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
    format: FileFormat,
    /// LOBSTER message file paired with `--input`.
    #[arg(long, required_if_eq("format", "lobster"))]
    message: Option<PathBuf>,
    /// Restrict to 09:30-16:00 and drop 09:30-09:35 before testing.
    #[arg(long)]
    clean: bool,
    /// Keep repeated quotes instead of only quote changes.
    #[arg(long)]
    keep_repeats: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Grid steps in the session.
    #[arg(long, default_value_t = 23_400)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = NoiseArg::Ar1)]
    noise: NoiseArg,
    /// Noise level q on the log scale.
    #[arg(long, default_value_t = 0.001)]
    q: f64,
    /// AR(1) coefficient.
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    phi: f64,
    /// Price tick for rounding noise.
    #[arg(long, default_value_t = 0.01)]
    tick: f64,
    /// Initial log price.
    #[arg(long, default_value_t = 50f64.ln(), allow_hyphen_values = true)]
    x0: f64,
    /// Jump size on the log scale; 0 for none. Without `--jump-time` the
    /// sign and time are random.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    jump: f64,
    /// Jump time in session units.
    #[arg(long)]
    jump_time: Option<f64>,
    /// Session start in seconds after midnight.
    #[arg(long, default_value_t = 34_200.0)]
    start_sec: f64,
    #[arg(long, default_value_t = 57_600.0)]
    end_sec: f64,
    /// Quote file; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// JSON file receiving the simulated jumps and settings.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TestGlobalArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = SideArg::Ask)]
    side: SideArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Number of test blocks; defaults to floor(n^(2/3) / 1.3).
    #[arg(long, conflicts_with = "nhn")]
    blocks: Option<usize>,
    /// Observations per test block.
    #[arg(long)]
    nhn: Option<usize>,
    /// Volatility window K_n in blocks.
    #[arg(long, default_value_t = 200)]
    kn: usize,
    #[arg(long, value_enum, default_value_t = CriticalArg::Asymptotic)]
    critical_source: CriticalArg,
    /// Bootstrap critical value for the raw statistic; calibrated when absent.
    #[arg(long)]
    critical_value: Option<f64>,
    /// Bootstrap samples.
    #[arg(long, default_value_t = 1_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report every jump found by repeated testing.
    #[arg(long)]
    sequential: bool,
    #[arg(long, default_value_t = 5)]
    max_jumps: usize,
    /// Include every standardized block difference in the report.
    #[arg(long)]
    full: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TestLocalArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = SideArg::Ask)]
    side: SideArg,
    /// Test time in session units.
    #[arg(long, required_unless_present = "tau_sec", conflicts_with = "tau_sec")]
    tau: Option<f64>,
    /// Test time in seconds after midnight.
    #[arg(long)]
    tau_sec: Option<f64>,
    /// Observations on each side of the test time.
    #[arg(long, default_value_t = 12)]
    nhn: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 200)]
    kn: usize,
    #[arg(long, value_enum, default_value_t = CriticalArg::Asymptotic)]
    critical_source: CriticalArg,
    #[arg(long)]
    critical_value: Option<f64>,
    #[arg(long, default_value_t = 5_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectOnlineArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = SideArg::Ask)]
    side: SideArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Number of blocks; defaults to floor(n^(2/3) / 1.3).
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long, default_value_t = 200)]
    kn: usize,
    #[arg(long, value_enum, default_value_t = ThresholdArg::BlockRate)]
    threshold: ThresholdArg,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RaceArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long, default_value_t = 200)]
    kn: usize,
    /// Mid quotes per block of the local-average detector.
    #[arg(long, default_value_t = 30)]
    nhn: usize,
    /// Events within this many seconds are paired.
    #[arg(long, default_value_t = 60.0)]
    window_sec: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long, value_enum, default_value_t = StatisticArg::Ext)]
    statistic: StatisticArg,
    /// Noise level q.
    #[arg(long, default_value_t = 0.0005)]
    q: f64,
    /// Grid steps per session.
    #[arg(long, default_value_t = 23_400)]
    n: usize,
    /// Observations per block.
    #[arg(long, default_value_t = 11)]
    nhn: usize,
    /// Number of blocks for the extrema statistic instead of `--nhn` chunks.
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long, value_enum, default_value_t = SchemeArg::Thinned)]
    scheme: SchemeArg,
    /// Diffusion variance for the local statistics; defaults to the
    /// mid-session level of the simulation model.
    #[arg(long)]
    sigma_sq: Option<f64>,
    /// Bootstrap samples m.
    #[arg(long, default_value_t = 5_000)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(long, value_enum)]
    table: TableArg,
    /// Replications per cell (at least 200).
    #[arg(long, default_value_t = 1_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cell checks CSV; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Full size/power table CSV.
    #[arg(long)]
    rows: Option<PathBuf>,
    /// Exit with status 1 when any cell misses its tolerance.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct AcfArgs {
    /// One quote file per day.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
    format: FileFormat,
    /// LOBSTER message files, in the order of the inputs.
    #[arg(long, num_args = 1..)]
    message: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = CleanSide::Mid)]
    side: CleanSide,
    #[arg(long, default_value_t = 10)]
    max_lag: usize,
    #[arg(long)]
    clean: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CleanArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
    format: FileFormat,
    #[arg(long, required_if_eq("format", "lobster"))]
    message: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CleanSide::All)]
    side: CleanSide,
    /// Session window, `HH:MM[:SS]-HH:MM[:SS]`.
    #[arg(long, default_value = "09:30-16:00")]
    session: String,
    /// Opening exclusion window.
    #[arg(long, default_value = "09:30-09:35")]
    exclude: String,
    #[arg(long)]
    keep_repeats: bool,
    /// Also write the seven intraday segments.
    #[arg(long)]
    split: bool,
    /// Directory receiving `<side>.csv` (and segment files).
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = commands::init_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
