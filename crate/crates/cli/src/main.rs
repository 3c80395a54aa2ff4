//! `sds`: split data, train embedding nets, score fake samples and run the
//! failure-mode experiments.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use settings::{join, Settings};

#[derive(Parser, Debug)]
#[command(
    name = "sds",
    version,
    about = "Siamese Distance Score evaluation of generative models"
)]
#[command(
    after_help = "Settings precedence: command-line flags, then --config, then built-in defaults.

Examples:
  sds generate --classes 4 --dimension 2 --output mix.csv
  sds split mix.csv --out parts
  sds train parts/mix.s.csv --out run
  sds score --model run/model.json --real parts/mix.s.csv --fake fakes.csv --mmd
  sds experiment quality --repetitions 3"
)]
struct Cli {
    /// Flat `key = value` config file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; every random stream is derived from it
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Write a synthetic Gaussian-mixture CSV
    Generate(GenerateArgs),
    /// Stratified generator / Siamese / evaluation split of a CSV
    Split(SplitArgs),
    /// Train an embedding net with the contrastive loss
    Train(TrainArgs),
    /// Score a fake sample set against real samples
    Score(ScoreArgs),
    /// Run one of the repeated failure-mode experiments
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Default)]
struct LabelArgs {
    /// Label column: `last` or a 0-based index
    #[arg(long, value_name = "COL")]
    label_column: Option<String>,
}

#[derive(Args, Debug, Default)]
struct MixtureArgs {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    dimension: Option<usize>,
    /// Distance of the class means from the origin
    #[arg(long)]
    radius: Option<f64>,
    /// Per-class standard deviation
    #[arg(long)]
    within_sigma: Option<f64>,
    #[arg(long)]
    per_class: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct NetArgs {
    /// Hidden layer widths, comma separated
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    leaky_slope: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct TrainFlags {
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Pairs drawn per epoch (default: 10 x samples)
    #[arg(long)]
    pair_count: Option<usize>,
    #[arg(long)]
    genuine_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    mixture: MixtureArgs,
    /// Output file (default: <out>/mixture.csv)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    input: PathBuf,
    #[command(flatten)]
    label: LabelArgs,
    /// Generator, Siamese and evaluation fractions
    #[arg(long, value_delimiter = ',', num_args = 1, value_name = "G,S,E")]
    fractions: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Labeled training CSV (normally the Siamese part of a split)
    input: PathBuf,
    #[command(flatten)]
    label: LabelArgs,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    train: TrainFlags,
    /// Choose the margin among these candidates by cross-validated 1-NN accuracy
    #[arg(long, value_delimiter = ',')]
    margin_candidates: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    /// Model file (default: <out>/model.json)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Training report CSV (default: <out>/train-report.csv)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled real samples
    #[arg(long)]
    real: PathBuf,
    /// Fake samples, with or without a label column
    #[arg(long)]
    fake: PathBuf,
    #[command(flatten)]
    label: LabelArgs,
    /// Nearest neighbors per fake sample
    #[arg(long)]
    k: Option<usize>,
    /// Also print the two-sided score
    #[arg(long)]
    two_sided: bool,
    /// Also print the squared MMD between real and fake inputs
    #[arg(long)]
    mmd: bool,
    /// MMD bandwidth: a positive number or `median`
    #[arg(long)]
    bandwidth: Option<String>,
    /// Report CSV (default: <out>/sds-report.csv)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Mode,
    Intraclass,
    Quality,
    Ranking,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Mode => "mode",
            ExperimentKind::Intraclass => "intraclass",
            ExperimentKind::Quality => "quality",
            ExperimentKind::Ranking => "ranking",
        }
    }
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentKind,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Labeled CSV to use instead of a synthetic mixture
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    label: LabelArgs,
    #[command(flatten)]
    mixture: MixtureArgs,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, value_delimiter = ',', value_name = "G,S,E")]
    split_fractions: Option<Vec<f64>>,
    #[arg(long)]
    k: Option<usize>,
    /// Score direction: `two-sided` or `forward`
    #[arg(long)]
    direction: Option<String>,
    /// Reference reals: `siamese` or `eval`
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    bandwidth: Option<String>,
    /// Pool fractions (intraclass)
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    /// Noise levels (quality)
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Noise levels of the degraded fake sets (ranking)
    #[arg(long, value_delimiter = ',')]
    ranking_sigmas: Option<Vec<f64>>,
    /// Extra fixed fake set for ranking, `name=path.csv`; repeatable
    #[arg(long = "fake", value_name = "NAME=PATH")]
    fakes: Vec<String>,
    /// Result CSV (default: <out>/<experiment>-<timestamp>.csv)
    #[arg(long)]
    output: Option<PathBuf>,
}

impl LabelArgs {
    fn apply(&self, s: &mut Settings) {
        s.set("data.label_column", self.label_column.as_ref());
    }
}

impl MixtureArgs {
    fn apply(&self, s: &mut Settings) {
        s.set("mixture.classes", self.classes);
        s.set("mixture.dimension", self.dimension);
        s.set("mixture.radius", self.radius);
        s.set("mixture.within_sigma", self.within_sigma);
        s.set("mixture.per_class", self.per_class);
    }
}

impl NetArgs {
    fn apply(&self, s: &mut Settings) {
        s.set("net.hidden", self.hidden.as_deref().map(join));
        s.set("net.embed_dim", self.embed_dim);
        s.set("net.leaky_slope", self.leaky_slope);
    }
}

impl TrainFlags {
    fn apply(&self, s: &mut Settings) {
        s.set("train.margin", self.margin);
        s.set("train.learning_rate", self.learning_rate);
        s.set("train.epochs", self.epochs);
        s.set("train.batch_size", self.batch_size);
        s.set("train.pair_count", self.pair_count);
        s.set("train.genuine_fraction", self.genuine_fraction);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut s = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    s.set("seed", cli.seed);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let ctx = commands::Context { out };

    match cli.command {
        Command::Generate(a) => {
            a.mixture.apply(&mut s);
            commands::generate(&ctx, &s, a.output)
        }
        Command::Split(a) => {
            a.label.apply(&mut s);
            s.set("split.fractions", a.fractions.as_deref().map(join));
            commands::split(&ctx, &s, &a.input)
        }
        Command::Train(a) => {
            a.label.apply(&mut s);
            a.net.apply(&mut s);
            a.train.apply(&mut s);
            s.set("train.margin_candidates", a.margin_candidates.as_deref().map(join));
            s.set("train.folds", a.folds);
            commands::train(&ctx, &s, &a.input, a.model, a.report)
        }
        Command::Score(a) => {
            a.label.apply(&mut s);
            s.set("sds.k", a.k);
            s.set("mmd.bandwidth", a.bandwidth.as_ref());
            commands::score(
                &ctx,
                &s,
                &commands::ScoreInputs {
                    model: a.model,
                    real: a.real,
                    fake: a.fake,
                    two_sided: a.two_sided,
                    mmd: a.mmd,
                    output: a.output,
                },
            )
        }
        Command::Experiment(a) => {
            s.set("experiment.repetitions", a.repetitions);
            s.set("experiment.data", a.data.as_ref().map(|p| p.display()));
            a.label.apply(&mut s);
            a.mixture.apply(&mut s);
            a.net.apply(&mut s);
            a.train.apply(&mut s);
            s.set("split.fractions", a.split_fractions.as_deref().map(join));
            s.set("sds.k", a.k);
            s.set("sds.direction", a.direction.as_ref());
            s.set("experiment.reference", a.reference.as_ref());
            s.set("mmd.bandwidth", a.bandwidth.as_ref());
            s.set("experiment.fractions", a.fractions.as_deref().map(join));
            s.set("experiment.sigmas", a.sigmas.as_deref().map(join));
            s.set("experiment.ranking_sigmas", a.ranking_sigmas.as_deref().map(join));
            commands::experiment(&ctx, &s, a.name, &a.fakes, a.output)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
