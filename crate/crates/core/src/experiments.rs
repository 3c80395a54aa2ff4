//! Repeated, seeded failure-mode studies.
//!
//! Every study follows the same outline per repetition: partition the source
//! data into generator / Siamese / evaluation parts, train a fresh embedding
//! net on (a subset of) the Siamese part, build fake sets from the
//! evaluation part, and score them against the reference reals. Means and
//! standard deviations are taken over repetitions and the mean series is
//! max-min normalized.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use log::info;
use rayon::prelude::*;

use crate::contrastive::{train, TrainConfig};
use crate::dataset::{degrade, filter_classes, gen_mixture, split, subsample_per_class, Dataset, MixtureSpec};
use crate::embedding_net::{EmbeddingMatrix, EmbeddingNet, NetSpec};
use crate::error::{Error, Result};
use crate::mmd::{median_heuristic, mmd2_with_bandwidth, Bandwidth, MmdConfig};
use crate::sds::{
    embed_features, embed_set, normalize_series, score_embeddings, score_two_sided_embeddings, ScoreDirection,
    SdsConfig,
};
use crate::seed::sub_seed;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Mixture(MixtureSpec),
    Table(Dataset),
}

/// Which real samples the fakes are scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceSet {
    /// The Siamese training partition (disjoint from every fake set).
    #[default]
    Siamese,
    /// The evaluation partition the fakes are derived from.
    Eval,
}

impl std::str::FromStr for ReferenceSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "s" | "siamese" => Ok(ReferenceSet::Siamese),
            "e" | "eval" => Ok(ReferenceSet::Eval),
            other => Err(Error::config(format!(
                "reference must be `siamese` or `eval`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub repetitions: usize,
    pub data: DataSource,
    pub split_fractions: (f64, f64, f64),
    /// Architecture template; `input_dim` and `init_seed` are set per run.
    pub net: NetSpec,
    /// Training template; `seed` is set per run.
    pub train: TrainConfig,
    pub sds: SdsConfig,
    pub direction: ScoreDirection,
    pub reference: ReferenceSet,
    pub mmd: MmdConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            repetitions: 10,
            data: DataSource::Mixture(MixtureSpec {
                class_count: 10,
                dimension: 8,
                mode_radius: 10.0,
                within_sigma: 1.0,
                per_class_count: 200,
                seed: 0,
            }),
            split_fractions: (0.4, 0.4, 0.2),
            net: NetSpec::with_defaults(8),
            train: TrainConfig::default(),
            sds: SdsConfig::default(),
            direction: ScoreDirection::TwoSided,
            reference: ReferenceSet::Siamese,
            mmd: MmdConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        if self.sds.k == 0 {
            return Err(Error::config("K must be at least 1"));
        }
        self.train.validate()
    }

    pub fn source(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Mixture(spec) => gen_mixture(spec),
            DataSource::Table(d) => Ok(d.clone()),
        }
    }
}

/// One plotted series: score per x value, aggregated over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesReport {
    pub x_values: Vec<f64>,
    pub mean_scores: Vec<f64>,
    pub std_scores: Vec<f64>,
    pub normalized_scores: Vec<f64>,
    /// `per_repetition[r][i]` is repetition `r`'s score at `x_values[i]`.
    pub per_repetition: Vec<Vec<f64>>,
}

impl SeriesReport {
    fn from_runs(x_values: Vec<f64>, per_repetition: Vec<Vec<f64>>) -> Self {
        let n = x_values.len();
        let column = |i: usize| per_repetition.iter().map(|r| r[i]).collect::<Vec<_>>();
        let mean_scores: Vec<f64> = (0..n).map(|i| stats::mean(&column(i))).collect();
        let std_scores = (0..n).map(|i| stats::std_dev(&column(i))).collect();
        let normalized_scores = normalize_series(&mean_scores);
        Self {
            x_values,
            mean_scores,
            std_scores,
            normalized_scores,
            per_repetition,
        }
    }

    /// `x,mean,std,normalized`, one row per x value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,mean,std,normalized\n");
        for i in 0..self.x_values.len() {
            let _ = writeln!(
                out,
                "{:?},{:?},{:?},{:?}",
                self.x_values[i], self.mean_scores[i], self.std_scores[i], self.normalized_scores[i]
            );
        }
        out
    }
}

/// Embeds the reference reals once and scores fake sets against them.
struct Scorer<'a> {
    net: &'a EmbeddingNet,
    reference: EmbeddingMatrix,
    cfg: SdsConfig,
    direction: ScoreDirection,
}

impl<'a> Scorer<'a> {
    fn new(net: &'a EmbeddingNet, reference: &Dataset, cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            net,
            reference: embed_set(net, reference)?,
            cfg: cfg.sds,
            direction: cfg.direction,
        })
    }

    fn score(&self, fake: &Dataset) -> Result<f64> {
        let fake = embed_features(self.net, fake.features())?;
        match self.direction {
            ScoreDirection::Forward => Ok(score_embeddings(&self.reference, &fake, &self.cfg)?.aggregate_sds),
            ScoreDirection::TwoSided => Ok(score_two_sided_embeddings(&self.reference, &fake, &self.cfg)?.score()),
        }
    }
}

/// Seeds and partitions for one repetition.
struct Repetition {
    seed: u64,
    siamese: Dataset,
    eval: Dataset,
}

impl Repetition {
    fn new(cfg: &ExperimentConfig, source: &Dataset, r: usize) -> Result<Self> {
        let seed = sub_seed(cfg.seed, &format!("rep/{r}"));
        let parts = split(source, cfg.split_fractions, sub_seed(seed, "split"))?;
        Ok(Self {
            seed,
            siamese: parts.siamese_part,
            eval: parts.eval_part,
        })
    }

    fn train(&self, cfg: &ExperimentConfig, data: &Dataset) -> Result<EmbeddingNet> {
        let spec = NetSpec {
            input_dim: data.dim(),
            init_seed: sub_seed(self.seed, "init"),
            ..cfg.net.clone()
        };
        let train_cfg = TrainConfig {
            seed: sub_seed(self.seed, "train"),
            ..cfg.train.clone()
        };
        let (net, _) = train(EmbeddingNet::init(spec)?, data, &train_cfg)?;
        Ok(net)
    }

    fn reference<'s>(&'s self, cfg: &ExperimentConfig) -> &'s Dataset {
        match cfg.reference {
            ReferenceSet::Siamese => &self.siamese,
            ReferenceSet::Eval => &self.eval,
        }
    }
}

fn run_repetitions<T: Send>(cfg: &ExperimentConfig, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..cfg.repetitions).into_par_iter().map(f).collect()
}

/// Mode dropping and invention. The Siamese net only sees the first half of
/// the classes; test sets hold the first `i` classes for `i = 1..=C`.
pub fn mode_experiment(cfg: &ExperimentConfig) -> Result<SeriesReport> {
    cfg.validate()?;
    let source = cfg.source()?;
    let classes = source.present_classes();
    if classes.len() < 3 {
        return Err(Error::config("mode experiment needs at least three classes"));
    }
    let half = classes.len() / 2;
    let trained: BTreeSet<usize> = classes[..half].iter().copied().collect();

    let runs = run_repetitions(cfg, |r| {
        let rep = Repetition::new(cfg, &source, r)?;
        let siamese = filter_classes(&rep.siamese, &trained)?;
        let net = rep.train(cfg, &siamese)?;
        let reference = filter_classes(rep.reference(cfg), &trained)?;
        let scorer = Scorer::new(&net, &reference, cfg)?;
        let scores = (1..=classes.len())
            .map(|i| {
                let keep: BTreeSet<usize> = classes[..i].iter().copied().collect();
                scorer.score(&filter_classes(&rep.eval, &keep)?)
            })
            .collect::<Result<Vec<_>>>()?;
        info!("mode repetition {r}: {scores:?}");
        Ok(scores)
    })?;
    let x = (1..=classes.len()).map(|i| i as f64).collect();
    Ok(SeriesReport::from_runs(x, runs))
}

/// True when a mode-experiment series bottoms out at `i = half` and both
/// ends score worse than it.
pub fn mode_shape_holds(scores: &[f64], half: usize) -> bool {
    let at_half = scores[half - 1];
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    at_half == min && scores[0] > at_half && scores[scores.len() - 1] > at_half
}

/// Default grid of per-class pool fractions.
pub const DEFAULT_FRACTIONS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];

/// Intra-class collapse. Test sets keep every class but draw the same
/// number of samples per class from a pool shrunk to fraction `p`.
pub fn intraclass_experiment(cfg: &ExperimentConfig, fractions: &[f64]) -> Result<SeriesReport> {
    cfg.validate()?;
    if fractions.is_empty() || fractions.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
        return Err(Error::config("fractions must be nonempty and lie in (0, 1]"));
    }
    let source = cfg.source()?;
    let runs = run_repetitions(cfg, |r| {
        let rep = Repetition::new(cfg, &source, r)?;
        let net = rep.train(cfg, &rep.siamese)?;
        let scorer = Scorer::new(&net, rep.reference(cfg), cfg)?;
        let per_class = rep.eval.len() / rep.eval.present_classes().len();
        fractions
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let t = subsample_per_class(&rep.eval, p, per_class, sub_seed(rep.seed, &format!("intraclass/{k}")))?;
                scorer.score(&t)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(SeriesReport::from_runs(fractions.to_vec(), runs))
}

/// Default degradation levels.
pub const DEFAULT_SIGMAS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub series: SeriesReport,
    /// Spearman correlation between noise level and mean score.
    pub spearman: f64,
}

/// Quality degradation: fakes are the evaluation part plus Gaussian noise.
pub fn quality_experiment(cfg: &ExperimentConfig, sigmas: &[f64]) -> Result<QualityReport> {
    cfg.validate()?;
    if sigmas.is_empty() || sigmas[0] != 0.0 || sigmas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("sigmas must start at 0 and increase strictly"));
    }
    let source = cfg.source()?;
    let runs = run_repetitions(cfg, |r| {
        let rep = Repetition::new(cfg, &source, r)?;
        let net = rep.train(cfg, &rep.siamese)?;
        let scorer = Scorer::new(&net, rep.reference(cfg), cfg)?;
        sigmas
            .iter()
            .enumerate()
            .map(|(k, &s)| scorer.score(&degrade(&rep.eval, s, sub_seed(rep.seed, &format!("quality/{k}")))?))
            .collect::<Result<Vec<_>>>()
    })?;
    let series = SeriesReport::from_runs(sigmas.to_vec(), runs);
    let spearman = stats::spearman(&series.x_values, &series.mean_scores);
    Ok(QualityReport { series, spearman })
}

/// A candidate fake set for the ranking study.
#[derive(Debug, Clone, PartialEq)]
pub enum FakeSetKind {
    /// The repetition's evaluation part degraded with this noise level.
    Degraded(f64),
    Fixed(Dataset),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FakeSet {
    pub name: String,
    pub kind: FakeSetKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingRow {
    pub name: String,
    pub sds_mean: f64,
    pub sds_std: f64,
    pub mmd_mean: f64,
    pub mmd_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub rows: Vec<RankingRow>,
    /// Kendall tau between the SDS and MMD orderings, per repetition.
    pub taus: Vec<f64>,
    /// Kendall tau between the mean SDS and mean MMD orderings.
    pub mean_tau: f64,
}

impl RankingReport {
    pub fn agreeing_repetitions(&self) -> usize {
        self.taus.iter().filter(|&&t| t == 1.0).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,sds_mean,sds_std,mmd_mean,mmd_std\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?}",
                r.name, r.sds_mean, r.sds_std, r.mmd_mean, r.mmd_std
            );
        }
        out
    }
}

/// Scores several fake sets with both SDS and MMD and compares the rankings.
/// MMD is measured against the evaluation part with a bandwidth fixed per
/// repetition (the median heuristic over the evaluation part alone).
pub fn ranking_experiment(cfg: &ExperimentConfig, fake_sets: &[FakeSet]) -> Result<RankingReport> {
    cfg.validate()?;
    if fake_sets.len() < 2 {
        return Err(Error::config("ranking needs at least two fake sets"));
    }
    let source = cfg.source()?;
    let runs = run_repetitions(cfg, |r| {
        let rep = Repetition::new(cfg, &source, r)?;
        let net = rep.train(cfg, &rep.siamese)?;
        let reference = rep.reference(cfg);
        let scorer = Scorer::new(&net, reference, cfg)?;

        let fakes = fake_sets
            .iter()
            .enumerate()
            .map(|(k, f)| match &f.kind {
                FakeSetKind::Degraded(s) => degrade(&rep.eval, *s, sub_seed(rep.seed, &format!("ranking/{k}"))),
                FakeSetKind::Fixed(d) if d.dim() == source.dim() => Ok(d.clone()),
                FakeSetKind::Fixed(d) => Err(Error::DimensionMismatch {
                    expected: source.dim(),
                    actual: d.dim(),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        let n = fakes[0].len();
        if fakes.iter().any(|f| f.len() != n) {
            return Err(Error::config("fake sets must have equal sample counts"));
        }

        // MMD compares each fake set with the reals it was derived from, as a
        // two-sample distance; the nearest-neighbor score keeps its own
        // disjoint reference.
        let bandwidth = match cfg.mmd.bandwidth {
            Bandwidth::Fixed(s) => s,
            Bandwidth::MedianHeuristic => median_heuristic(rep.eval.features(), rep.eval.features())?,
        };

        let mut sds = Vec::with_capacity(fakes.len());
        let mut mmd = Vec::with_capacity(fakes.len());
        for f in &fakes {
            sds.push(scorer.score(f)?);
            mmd.push(mmd2_with_bandwidth(rep.eval.features(), f.features(), bandwidth)?);
        }
        Ok((sds, mmd))
    })?;

    let taus: Vec<f64> = runs.iter().map(|(s, m)| stats::kendall_tau(s, m)).collect();
    let rows: Vec<RankingRow> = fake_sets
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let s: Vec<f64> = runs.iter().map(|r| r.0[k]).collect();
            let m: Vec<f64> = runs.iter().map(|r| r.1[k]).collect();
            RankingRow {
                name: f.name.clone(),
                sds_mean: stats::mean(&s),
                sds_std: stats::std_dev(&s),
                mmd_mean: stats::mean(&m),
                mmd_std: stats::std_dev(&m),
            }
        })
        .collect();
    let sds_means: Vec<f64> = rows.iter().map(|r| r.sds_mean).collect();
    let mmd_means: Vec<f64> = rows.iter().map(|r| r.mmd_mean).collect();
    let mean_tau = stats::kendall_tau(&sds_means, &mmd_means);
    Ok(RankingReport { rows, taus, mean_tau })
}

/// Fake sets `degrade(E, sigma)` named `sigma=<value>`.
pub fn degraded_fake_sets(sigmas: &[f64]) -> Vec<FakeSet> {
    sigmas
        .iter()
        .map(|&s| FakeSet {
            name: format!("sigma={s}"),
            kind: FakeSetKind::Degraded(s),
        })
        .collect()
}
