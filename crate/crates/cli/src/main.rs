use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use psdc_core::dataset::NoiseType;
use psdc_core::selection::Method;

mod commands;

/// Noisy-label sample selection by pairwise similarity distribution clustering.
#[derive(Parser, Debug)]
#[command(name = "psdc", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for every random choice the command makes
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Overwrite existing output files
    #[arg(long, global = true)]
    pub force: bool,

    /// Primary input file
    #[arg(short, long, global = true)]
    pub input: Option<PathBuf>,

    /// Primary output file
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SpecArgs {
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long = "per-class", default_value_t = 200)]
    pub per_class: usize,
    /// Distance between class means, in units of sigma
    #[arg(long, default_value_t = 8.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseArg {
    Uniform,
    Pairwise,
    Structured,
}

impl From<NoiseArg> for NoiseType {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Uniform => NoiseType::Uniform,
            NoiseArg::Pairwise => NoiseType::Pairwise,
            NoiseArg::Structured => NoiseType::Structured,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Psdc,
    Jsd,
    Hybrid,
    #[value(name = "gmm_raw", alias = "gmm-raw")]
    GmmRaw,
    Ce,
    Kmeans,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Psdc => Method::Psdc,
            MethodArg::Jsd => Method::Jsd,
            MethodArg::Hybrid => Method::Hybrid,
            MethodArg::GmmRaw => Method::GmmRaw,
            MethodArg::Ce => Method::Ce,
            MethodArg::Kmeans => Method::Kmeans,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic Gaussian-cluster dataset as CSV
    Generate(SpecArgs),

    /// Corrupt the labels of a dataset with a transition matrix
    Corrupt {
        #[arg(long, value_enum, default_value = "uniform")]
        noise: NoiseArg,
        #[arg(long)]
        rate: f64,
        /// Where to write the transition matrix [default: <output>.transition.json]
        #[arg(long)]
        transition: Option<PathBuf>,
    },

    /// Split a dataset into clean and noisy samples
    Select(commands::SelectArgs),

    /// Score a saved partition against the ground-truth labels
    Evaluate {
        /// Partition JSON written by `select`
        #[arg(long)]
        partition: PathBuf,
    },

    /// Check the divergence and row-sum orderings numerically
    Verify(commands::VerifyArgs),

    /// Run the co-teaching loop and write per-round metrics
    Train(commands::TrainArgs),

    /// Compare the selectors across noise rates on synthetic data
    Ablate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_enum, default_value = "uniform")]
        noise: NoiseArg,
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.5, 0.8])]
        rates: Vec<f64>,
        #[arg(long, default_value_t = 0.9)]
        cutoff: f64,
        #[arg(long, default_value_t = 3)]
        anchors: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match cli.command {
        Command::Generate(spec) => commands::generate(g, &spec),
        Command::Corrupt { noise, rate, transition } => commands::corrupt(g, noise.into(), rate, transition),
        Command::Select(args) => commands::select(g, &args),
        Command::Evaluate { partition } => commands::evaluate(g, &partition),
        Command::Verify(args) => commands::verify(g, &args),
        Command::Train(args) => commands::train(g, &args),
        Command::Ablate {
            spec,
            noise,
            rates,
            cutoff,
            anchors,
        } => commands::ablate(g, &spec, noise.into(), &rates, cutoff, anchors),
    };
    match result {
        Ok(commands::Outcome::Ok) => ExitCode::SUCCESS,
        Ok(commands::Outcome::AssertionFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
