use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use openevt::Error;

mod benchmark;
mod fit;
mod hill_plot;
mod score;
mod settings;

/// Open-set classification with extreme value statistics.
#[derive(Parser, Debug)]
#[command(name = "openevt", version)]
struct Cli {
    /// Worker threads for scoring and protocol repetitions (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a classifier on a labelled CSV and write a model file.
    Fit(FitArgs),
    /// Score the rows of a CSV against a model file.
    Score(ScoreArgs),
    /// Run an evaluation protocol (toy, oletter or thyroid).
    Benchmark(BenchmarkArgs),
    /// Shape estimates over a range of exceedance counts for one query.
    HillPlot(HillPlotArgs),
}

/// Input CSV layout, shared by commands that read feature files.
#[derive(Args, Debug, Clone)]
struct CsvArgs {
    /// Which column holds the label: first, last or none.
    #[arg(long)]
    label_column: Option<String>,
    /// The first row is a header.
    #[arg(long)]
    header: bool,
    /// Field delimiter (one character, or "tab").
    #[arg(long)]
    delimiter: Option<String>,
}

impl CsvArgs {
    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("label-column", self.label_column.clone()),
            ("header", self.header.then(|| "true".into())),
            ("delimiter", self.delimiter.clone()),
        ]
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Plain-text key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gpdc, gevc or evm.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Type-I error target (gpdc, gevc).
    #[arg(long)]
    alpha: Option<String>,
    /// Exceedance count (gpdc) or margin tail size (evm).
    #[arg(long)]
    k: Option<String>,
    /// Exceedance count as a fraction of the training size (gpdc).
    #[arg(long)]
    tail_fraction: Option<String>,
    /// Quantile level for the radius (gpdc; default 1/n).
    #[arg(long)]
    gamma: Option<String>,
    /// Probability threshold (evm).
    #[arg(long)]
    delta: Option<String>,
    /// Weibull endpoint for gevc: zero or estimated.
    #[arg(long)]
    endpoint: Option<String>,
    /// euclidean, manhattan or minkowski:q.
    #[arg(long)]
    metric: Option<String>,
    /// Z-score features using training means and deviations.
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    test: Option<String>,
    /// Output CSV path (default: stdout).
    #[arg(long)]
    out: Option<String>,
    /// Override the model's type-I error target (gpdc, gevc).
    #[arg(long)]
    alpha: Option<String>,
    /// Probability threshold (evm; required unless stored in the model).
    #[arg(long)]
    delta: Option<String>,
    #[command(flatten)]
    csv: CsvArgs,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// toy, oletter or thyroid.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Dataset file (LETTER or ann-thyroid); synthetic data when absent.
    #[arg(long)]
    data: Option<String>,
    /// Metrics CSV path (default: stdout).
    #[arg(long)]
    out: Option<String>,
    /// Directory for per-method ROC curves.
    #[arg(long)]
    roc_dir: Option<String>,
    /// Toy protocol: write per-test-point shape estimates instead of metrics.
    #[arg(long)]
    emit_xi: bool,
    /// Toy protocol: number of consecutive seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Oletter protocol: repetitions.
    #[arg(long)]
    reps: Option<String>,
    /// Comma-separated GPDC tail fractions for the thyroid protocol.
    #[arg(long)]
    gpdc_tail_fractions: Option<String>,
    /// Exceedance count for GPDC (toy, oletter).
    #[arg(long)]
    k_gpdc: Option<String>,
    /// Margin tail size for the EVM.
    #[arg(long)]
    k_evm: Option<String>,
    /// Thyroid protocol: comma-separated healthy class labels.
    #[arg(long)]
    healthy: Option<String>,
}

#[derive(Args, Debug)]
struct HillPlotArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<String>,
    /// Comma-separated query coordinates.
    #[arg(long)]
    query: Option<String>,
    #[arg(long)]
    k_min: Option<String>,
    #[arg(long)]
    k_max: Option<String>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[command(flatten)]
    csv: CsvArgs,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 2,
        Error::Data(_) | Error::FileNotFound(_) | Error::Csv(_) | Error::Io(_) | Error::Model(_) => 3,
        Error::Fit { .. } => 4,
        Error::Unsupported(_) => 5,
    }
}

fn run(cli: Cli) -> openevt::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot size the worker pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => fit::run(&a),
        Command::Score(a) => score::run(&a),
        Command::Benchmark(a) => benchmark::run(&a),
        Command::HillPlot(a) => hill_plot::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
