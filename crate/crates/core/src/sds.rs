//! Siamese Distance Score.
//!
//! Real samples are embedded once. Every fake sample is embedded, its `K`
//! nearest real embeddings are found by exact search, the fake is assigned
//! the majority class among them, and its score `sds_j` is the mean distance
//! to those neighbors that carry the assigned class. The aggregate score is
//! the mean of `sds_j` over all fakes; lower is better.
//!
//! [`score_two_sided`] additionally runs the same procedure with the roles
//! swapped (real samples scored against the fake set, using the classes
//! assigned to the fakes), which exposes classes and within-class variety
//! that the fake set fails to cover.

use std::cmp::Ordering;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::embedding_net::{distance, EmbeddingMatrix, EmbeddingNet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SdsConfig {
    pub k: usize,
}

impl Default for SdsConfig {
    fn default() -> Self {
        Self { k: 1 }
    }
}

/// Which way samples are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreDirection {
    /// Fakes against reals only.
    Forward,
    /// Mean of the forward score and the reals-against-fakes score.
    #[default]
    TwoSided,
}

impl std::str::FromStr for ScoreDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "forward" => Ok(ScoreDirection::Forward),
            "two-sided" | "two_sided" => Ok(ScoreDirection::TwoSided),
            other => Err(Error::config(format!(
                "score direction must be `forward` or `two-sided`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FakeScore {
    pub assigned_class: usize,
    pub sds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdsReport {
    pub per_fake: Vec<FakeScore>,
    pub aggregate_sds: f64,
    pub real_count: usize,
    pub fake_count: usize,
}

impl SdsReport {
    /// `index,assigned_class,sds` rows followed by `aggregate,,<mean>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,assigned_class,sds\n");
        for (j, s) in self.per_fake.iter().enumerate() {
            let _ = writeln!(out, "{j},{},{:?}", s.assigned_class, s.sds);
        }
        let _ = writeln!(out, "aggregate,,{:?}", self.aggregate_sds);
        out
    }
}

/// Embeds every row of `data`, carrying its labels.
pub fn embed_set(net: &EmbeddingNet, data: &Dataset) -> Result<EmbeddingMatrix> {
    let mut m = embed_features(net, data.features())?;
    m.source_labels = Some(data.labels().to_vec());
    Ok(m)
}

/// Embeds unlabeled rows.
pub fn embed_features(net: &EmbeddingNet, xs: ArrayView2<'_, f64>) -> Result<EmbeddingMatrix> {
    if xs.nrows() == 0 {
        return Err(Error::EmptyInput("nothing to embed".into()));
    }
    if xs.ncols() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            actual: xs.ncols(),
        });
    }
    let rows: Vec<_> = (0..xs.nrows())
        .into_par_iter()
        .map(|i| net.forward(xs.row(i)))
        .collect::<Result<_>>()?;
    let mut vectors = Array2::zeros((xs.nrows(), net.embed_dim()));
    for (i, r) in rows.into_iter().enumerate() {
        vectors.row_mut(i).assign(&r);
    }
    Ok(EmbeddingMatrix {
        vectors,
        source_labels: None,
    })
}

fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index))
}

/// The `k` real embeddings closest to `fake`, nearest first; equal
/// distances go to the smaller index.
pub fn nearest(real: &EmbeddingMatrix, fake: ArrayView1<'_, f64>, k: usize) -> Result<Vec<Neighbor>> {
    if k == 0 || k > real.len() {
        return Err(Error::config(format!("K = {k} outside [1, {}]", real.len())));
    }
    let mut all = Vec::with_capacity(real.len());
    for (index, r) in real.vectors.rows().into_iter().enumerate() {
        all.push(Neighbor {
            index,
            distance: distance(r, fake)?,
        });
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, by_distance_then_index);
        all.truncate(k);
    }
    all.sort_by(by_distance_then_index);
    Ok(all)
}

/// Majority label among `neighbors`. Ties go to the class with the smaller
/// summed neighbor distance, then to the smaller class id.
pub fn assign_class(neighbors: &[Neighbor], labels: &[usize]) -> usize {
    // (class, votes, summed distance)
    let mut tally: Vec<(usize, usize, f64)> = Vec::new();
    for n in neighbors {
        let class = labels[n.index];
        match tally.iter_mut().find(|t| t.0 == class) {
            Some(t) => {
                t.1 += 1;
                t.2 += n.distance;
            }
            None => tally.push((class, 1, n.distance)),
        }
    }
    tally
        .into_iter()
        .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|t| t.0)
        .expect("at least one neighbor")
}

/// Class and score of a single fake embedding.
pub fn score_sample(real: &EmbeddingMatrix, fake: ArrayView1<'_, f64>, cfg: &SdsConfig) -> Result<FakeScore> {
    let labels = real
        .source_labels
        .as_deref()
        .ok_or_else(|| Error::config("real embeddings carry no labels"))?;
    let neighbors = nearest(real, fake, cfg.k)?;
    let class = assign_class(&neighbors, labels);
    let (sum, count) = neighbors
        .iter()
        .filter(|n| labels[n.index] == class)
        .fold((0.0, 0usize), |(s, c), n| (s + n.distance, c + 1));
    Ok(FakeScore {
        assigned_class: class,
        sds: sum / count as f64,
    })
}

/// Scores already-embedded fakes against already-embedded reals.
pub fn score_embeddings(real: &EmbeddingMatrix, fake: &EmbeddingMatrix, cfg: &SdsConfig) -> Result<SdsReport> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::EmptyInput("score needs real and fake samples".into()));
    }
    if real.vectors.ncols() != fake.vectors.ncols() {
        return Err(Error::DimensionMismatch {
            expected: real.vectors.ncols(),
            actual: fake.vectors.ncols(),
        });
    }
    let per_fake: Vec<FakeScore> = (0..fake.len())
        .into_par_iter()
        .map(|j| score_sample(real, fake.row(j), cfg))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for s in &per_fake {
        total += s.sds;
    }
    Ok(SdsReport {
        aggregate_sds: total / per_fake.len() as f64,
        real_count: real.len(),
        fake_count: fake.len(),
        per_fake,
    })
}

/// Full score of a fake sample set. Labels on the fakes, if any, are not
/// consulted.
pub fn score_set(net: &EmbeddingNet, real: &Dataset, fake: ArrayView2<'_, f64>, cfg: &SdsConfig) -> Result<SdsReport> {
    if fake.ncols() != real.dim() {
        return Err(Error::DimensionMismatch {
            expected: real.dim(),
            actual: fake.ncols(),
        });
    }
    let real_emb = embed_set(net, real)?;
    let fake_emb = embed_features(net, fake)?;
    score_embeddings(&real_emb, &fake_emb, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoSidedReport {
    /// Fakes scored against reals.
    pub forward: SdsReport,
    /// Reals scored against fakes labeled with their assigned classes.
    pub reverse: SdsReport,
}

impl TwoSidedReport {
    pub fn score(&self) -> f64 {
        0.5 * (self.forward.aggregate_sds + self.reverse.aggregate_sds)
    }
}

pub fn score_two_sided_embeddings(
    real: &EmbeddingMatrix,
    fake: &EmbeddingMatrix,
    cfg: &SdsConfig,
) -> Result<TwoSidedReport> {
    let forward = score_embeddings(real, fake, cfg)?;
    let labeled_fakes = EmbeddingMatrix {
        vectors: fake.vectors.clone(),
        source_labels: Some(forward.per_fake.iter().map(|s| s.assigned_class).collect()),
    };
    let reverse = score_embeddings(&labeled_fakes, real, cfg)?;
    Ok(TwoSidedReport { forward, reverse })
}

pub fn score_two_sided(
    net: &EmbeddingNet,
    real: &Dataset,
    fake: ArrayView2<'_, f64>,
    cfg: &SdsConfig,
) -> Result<TwoSidedReport> {
    if fake.ncols() != real.dim() {
        return Err(Error::DimensionMismatch {
            expected: real.dim(),
            actual: fake.ncols(),
        });
    }
    let real_emb = embed_set(net, real)?;
    let fake_emb = embed_features(net, fake)?;
    score_two_sided_embeddings(&real_emb, &fake_emb, cfg)
}

/// Headline score of `fake` under `direction`.
pub fn score_in_direction(
    net: &EmbeddingNet,
    real: &Dataset,
    fake: ArrayView2<'_, f64>,
    cfg: &SdsConfig,
    direction: ScoreDirection,
) -> Result<f64> {
    match direction {
        ScoreDirection::Forward => Ok(score_set(net, real, fake, cfg)?.aggregate_sds),
        ScoreDirection::TwoSided => Ok(score_two_sided(net, real, fake, cfg)?.score()),
    }
}

/// Held-out 1-NN label accuracy in the embedding space of `net`.
pub fn one_nn_accuracy(net: &EmbeddingNet, reference: &Dataset, queries: &Dataset) -> Result<f64> {
    let real = embed_set(net, reference)?;
    let q = embed_features(net, queries.features())?;
    let cfg = SdsConfig { k: 1 };
    let hits = (0..q.len())
        .map(|j| score_sample(&real, q.row(j), &cfg).map(|s| s.assigned_class == queries.labels()[j]))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&hit| hit)
        .count();
    Ok(hits as f64 / q.len() as f64)
}

/// Max-min normalization to `[0, 1]`; a constant series maps to zeros.
pub fn normalize_series(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - min) / (max - min)).collect()
}
