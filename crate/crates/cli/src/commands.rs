use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context as _, Result};
use ndarray::{Array2, Axis};
use sds_core::experiments::{
    degraded_fake_sets, intraclass_experiment, mode_experiment, mode_shape_holds, quality_experiment,
    ranking_experiment, DataSource, ExperimentConfig, FakeSet, FakeSetKind, ReferenceSet, SeriesReport,
    DEFAULT_FRACTIONS, DEFAULT_SIGMAS,
};
use sds_core::sds::score_two_sided;
use sds_core::seed::sub_seed;
use sds_core::{
    gen_mixture, load_csv, load_features, mmd2, score_set, select_margin, split as split_data, train as train_net,
    Bandwidth, Dataset, EmbeddingNet, LabelColumn, MixtureSpec, MmdConfig, NetSpec, ScoreDirection, SdsConfig,
    TrainConfig,
};

use crate::settings::Settings;
use crate::ExperimentKind;

pub struct Context {
    pub out: PathBuf,
}

impl Context {
    fn path(&self, explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit.unwrap_or_else(|| self.out.join(default_name))
    }
}

const DEFAULT_RANKING_SIGMAS: [f64; 3] = [0.5, 1.0, 2.0];

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn master_seed(s: &Settings) -> Result<u64> {
    s.get_or("seed", 0)
}

fn label_column(s: &Settings) -> Result<LabelColumn> {
    s.get_or("data.label_column", LabelColumn::Last)
}

fn mixture_spec(s: &Settings, seed: u64) -> Result<MixtureSpec> {
    let spec = MixtureSpec {
        class_count: s.get_or("mixture.classes", 10)?,
        dimension: s.get_or("mixture.dimension", 8)?,
        mode_radius: s.get_or("mixture.radius", 10.0)?,
        within_sigma: s.get_or("mixture.within_sigma", 1.0)?,
        per_class_count: s.get_or("mixture.per_class", 200)?,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn split_fractions(s: &Settings) -> Result<(f64, f64, f64)> {
    match s.list::<f64>("split.fractions")? {
        None => Ok((0.4, 0.4, 0.2)),
        Some(v) if v.len() == 3 => Ok((v[0], v[1], v[2])),
        Some(v) => bail!("split.fractions needs three values, got {}", v.len()),
    }
}

fn net_spec(s: &Settings, input_dim: usize, init_seed: u64) -> Result<NetSpec> {
    let defaults = NetSpec::with_defaults(input_dim);
    let spec = NetSpec {
        hidden_dims: s.list("net.hidden")?.unwrap_or(defaults.hidden_dims),
        embed_dim: s.get_or("net.embed_dim", defaults.embed_dim)?,
        leaky_slope: s.get_or("net.leaky_slope", defaults.leaky_slope)?,
        init_seed,
        input_dim,
    };
    spec.validate()?;
    Ok(spec)
}

fn train_config(s: &Settings, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        margin: s.get_or("train.margin", d.margin)?,
        learning_rate: s.get_or("train.learning_rate", d.learning_rate)?,
        epochs: s.get_or("train.epochs", d.epochs)?,
        batch_size: s.get_or("train.batch_size", d.batch_size)?,
        pair_count: s.get("train.pair_count")?,
        genuine_fraction: s.get_or("train.genuine_fraction", d.genuine_fraction)?,
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn sds_config(s: &Settings) -> Result<SdsConfig> {
    let k = s.get_or("sds.k", SdsConfig::default().k)?;
    ensure!(k >= 1, "sds.k must be at least 1");
    Ok(SdsConfig { k })
}

fn mmd_config(s: &Settings) -> Result<MmdConfig> {
    Ok(MmdConfig {
        bandwidth: s.get_or("mmd.bandwidth", Bandwidth::MedianHeuristic)?,
    })
}

fn histogram_line(name: &str, data: &Dataset) -> String {
    format!("{name}: {} rows, per class {:?}", data.len(), data.class_histogram())
}

pub fn generate(ctx: &Context, s: &Settings, output: Option<PathBuf>) -> Result<()> {
    let spec = mixture_spec(s, sub_seed(master_seed(s)?, "mixture"))?;
    let data = gen_mixture(&spec)?;
    let path = ctx.path(output, "mixture.csv");
    write_file(&path, &data.to_csv_string())?;
    println!("{}", histogram_line("mixture", &data));
    println!("wrote {}", path.display());
    Ok(())
}

pub fn split(ctx: &Context, s: &Settings, input: &Path) -> Result<()> {
    let data = load_csv(input, label_column(s)?)?;
    let parts = split_data(&data, split_fractions(s)?, sub_seed(master_seed(s)?, "split"))?;
    let stem = input
        .file_stem()
        .map(|st| st.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    for (suffix, part) in [
        ("g", &parts.generator_part),
        ("s", &parts.siamese_part),
        ("e", &parts.eval_part),
    ] {
        let path = ctx.out.join(format!("{stem}.{suffix}.csv"));
        write_file(&path, &part.to_csv_string())?;
        println!("{} -> {}", histogram_line(&suffix.to_uppercase(), part), path.display());
    }
    Ok(())
}

pub fn train(ctx: &Context, s: &Settings, input: &Path, model: Option<PathBuf>, report: Option<PathBuf>) -> Result<()> {
    let data = load_csv(input, label_column(s)?)?;
    let seed = master_seed(s)?;
    let spec = net_spec(s, data.dim(), sub_seed(seed, "init"))?;
    let mut cfg = train_config(s, sub_seed(seed, "train"))?;

    if let Some(candidates) = s.list::<f64>("train.margin_candidates")? {
        let template = TrainConfig {
            seed: sub_seed(seed, "margin"),
            ..cfg.clone()
        };
        let sel = select_margin(&spec, &data, &candidates, &template, s.get_or("train.folds", 3)?)?;
        for (m, acc) in &sel.accuracies {
            println!("margin {m}: held-out 1-NN accuracy {acc:.4}");
        }
        println!("selected margin {}", sel.margin);
        cfg.margin = sel.margin;
    }

    let (net, rep) = train_net(EmbeddingNet::init(spec)?, &data, &cfg)?;
    for (e, loss) in rep.epoch_losses.iter().enumerate() {
        println!("epoch {:>4}  loss {loss:.6}", e + 1);
    }
    println!(
        "mean distance: genuine {:.6}, impostor {:.6}",
        rep.genuine_mean_distance, rep.impostor_mean_distance
    );
    let model_path = ctx.path(model, "model.json");
    let report_path = ctx.path(report, "train-report.csv");
    write_file(&model_path, &net.to_json())?;
    write_file(&report_path, &rep.to_csv())?;
    println!("wrote {} and {}", model_path.display(), report_path.display());
    Ok(())
}

/// Fake rows with the label column dropped when the file has one more
/// column than the model expects.
fn fake_features(path: &Path, dim: usize, label: LabelColumn) -> Result<Array2<f64>> {
    let raw = load_features(path)?;
    let cols = raw.ncols();
    if cols == dim {
        return Ok(raw);
    }
    if cols == dim + 1 {
        let drop = match label {
            LabelColumn::Last => cols - 1,
            LabelColumn::Index(k) => k,
        };
        ensure!(drop < cols, "label column {drop} out of range in {}", path.display());
        let keep: Vec<usize> = (0..cols).filter(|&c| c != drop).collect();
        return Ok(raw.select(Axis(1), &keep));
    }
    Err(sds_core::Error::DimensionMismatch {
        expected: dim,
        actual: cols,
    })
    .with_context(|| format!("fake samples in {}", path.display()))
}

pub struct ScoreInputs {
    pub model: PathBuf,
    pub real: PathBuf,
    pub fake: PathBuf,
    pub two_sided: bool,
    pub mmd: bool,
    pub output: Option<PathBuf>,
}

pub fn score(ctx: &Context, s: &Settings, inputs: &ScoreInputs) -> Result<()> {
    let net = EmbeddingNet::load(&inputs.model)?;
    let label = label_column(s)?;
    let real = load_csv(&inputs.real, label)?;
    if real.dim() != net.input_dim() {
        return Err(sds_core::Error::DimensionMismatch {
            expected: net.input_dim(),
            actual: real.dim(),
        })
        .with_context(|| format!("real samples in {}", inputs.real.display()));
    }
    let fake = fake_features(&inputs.fake, net.input_dim(), label)?;
    let cfg = sds_config(s)?;

    let report = score_set(&net, &real, fake.view(), &cfg)?;
    let path = ctx.path(inputs.output.clone(), "sds-report.csv");
    write_file(&path, &report.to_csv())?;
    println!("aggregate_sds {}", report.aggregate_sds);
    if inputs.two_sided {
        let two = score_two_sided(&net, &real, fake.view(), &cfg)?;
        println!("reverse_sds {}", two.reverse.aggregate_sds);
        println!("two_sided_sds {}", two.score());
    }
    if inputs.mmd {
        println!("mmd2 {}", mmd2(real.features(), fake.view(), &mmd_config(s)?)?);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn experiment_config(s: &Settings) -> Result<ExperimentConfig> {
    let seed = master_seed(s)?;
    let data = match s.get::<PathBuf>("experiment.data")? {
        Some(path) => DataSource::Table(load_csv(&path, label_column(s)?)?),
        None => DataSource::Mixture(mixture_spec(s, sub_seed(seed, "mixture"))?),
    };
    let dim = match &data {
        DataSource::Table(d) => d.dim(),
        DataSource::Mixture(m) => m.dimension,
    };
    let cfg = ExperimentConfig {
        repetitions: s.get_or("experiment.repetitions", 10)?,
        data,
        split_fractions: split_fractions(s)?,
        net: net_spec(s, dim, 0)?,
        train: train_config(s, 0)?,
        sds: sds_config(s)?,
        direction: s.get_or("sds.direction", ScoreDirection::TwoSided)?,
        reference: s.get_or("experiment.reference", ReferenceSet::Siamese)?,
        mmd: mmd_config(s)?,
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

fn print_series(series: &SeriesReport) {
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    println!("x           {}", fmt(&series.x_values));
    println!("mean        {}", fmt(&series.mean_scores));
    println!("normalized  {}", fmt(&series.normalized_scores));
}

/// Loads a user-supplied fake set. Labels are not needed for scoring, so an
/// unlabeled file gets a placeholder class.
fn fixed_fake_set(spec: &str, dim: usize, label: LabelColumn) -> Result<FakeSet> {
    let Some((name, path)) = spec.split_once('=') else {
        bail!("--fake expects NAME=PATH, got `{spec}`");
    };
    let features = fake_features(Path::new(path), dim, label)?;
    let n = features.nrows();
    Ok(FakeSet {
        name: name.to_string(),
        kind: FakeSetKind::Fixed(Dataset::new(features, vec![0; n], 1)?),
    })
}

pub fn experiment(
    ctx: &Context,
    s: &Settings,
    kind: ExperimentKind,
    fakes: &[String],
    output: Option<PathBuf>,
) -> Result<()> {
    let cfg = experiment_config(s)?;
    let (csv, headline) = match kind {
        ExperimentKind::Mode => {
            let rep = mode_experiment(&cfg)?;
            let half = rep.x_values.len() / 2;
            let holding = rep.per_repetition.iter().filter(|r| mode_shape_holds(r, half)).count();
            print_series(&rep);
            println!(
                "mode: minimum at i={} (trained on {half} classes); shape holds in {holding}/{} repetitions",
                argmin(&rep.mean_scores) + 1,
                cfg.repetitions
            );
            let ok = mode_shape_holds(&rep.mean_scores, half);
            (
                rep.to_csv(),
                format!("{} minimum at i={half} with both ends higher", verdict(ok)),
            )
        }
        ExperimentKind::Intraclass => {
            let fractions = s.list("experiment.fractions")?.unwrap_or(DEFAULT_FRACTIONS.to_vec());
            let rep = intraclass_experiment(&cfg, &fractions)?;
            let neg: Vec<f64> = rep.x_values.iter().map(|x| -x).collect();
            let (lo, hi) = (argmin(&rep.x_values), argmin(&neg));
            let holding = rep.per_repetition.iter().filter(|r| r[lo] > r[hi]).count();
            print_series(&rep);
            println!(
                "intraclass: score at p={} above p={} in {holding}/{} repetitions",
                rep.x_values[lo], rep.x_values[hi], cfg.repetitions
            );
            let ok = rep.mean_scores[lo] > rep.mean_scores[hi];
            let line = format!(
                "{} mean score at p={} exceeds p={}",
                verdict(ok),
                rep.x_values[lo],
                rep.x_values[hi]
            );
            (rep.to_csv(), line)
        }
        ExperimentKind::Quality => {
            let sigmas = s.list("experiment.sigmas")?.unwrap_or(DEFAULT_SIGMAS.to_vec());
            let rep = quality_experiment(&cfg, &sigmas)?;
            print_series(&rep.series);
            println!("quality: spearman {:.4}", rep.spearman);
            let line = format!("{} spearman(sigma, score) >= 0.9", verdict(rep.spearman >= 0.9));
            (rep.series.to_csv(), line)
        }
        ExperimentKind::Ranking => {
            let sigmas = s
                .list("experiment.ranking_sigmas")?
                .unwrap_or(DEFAULT_RANKING_SIGMAS.to_vec());
            let mut sets = degraded_fake_sets(&sigmas);
            let dim = cfg.source()?.dim();
            for f in fakes {
                sets.push(fixed_fake_set(f, dim, label_column(s)?)?);
            }
            let rep = ranking_experiment(&cfg, &sets)?;
            for r in &rep.rows {
                println!("{:<16} sds {:.6}  mmd2 {:.6}", r.name, r.sds_mean, r.mmd_mean);
            }
            println!(
                "ranking: kendall tau of mean rankings {:.4}; full agreement in {}/{} repetitions",
                rep.mean_tau,
                rep.agreeing_repetitions(),
                cfg.repetitions
            );
            let line = format!("{} SDS and MMD rankings agree", verdict(rep.mean_tau == 1.0));
            (rep.to_csv(), line)
        }
    };
    let default_name = format!("{}-{}.csv", kind.name(), chrono::Utc::now().format("%Y%m%dT%H%M%SZ"));
    let path = ctx.path(output, &default_name);
    write_file(&path, &csv)?;
    println!("{headline}");
    println!("wrote {}", path.display());
    Ok(())
}
