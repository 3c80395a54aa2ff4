//! Contrastive objective and the mini-batch gradient-descent loop that
//! trains an [`EmbeddingNet`] on genuine/impostor pairs.

use std::fmt::Write as _;

use log::{debug, info};
use ndarray::Axis;
use rand::seq::SliceRandom;

use crate::dataset::{make_pairs, Dataset, PairBatch, PairCount};
use crate::embedding_net::{distance, EmbeddingNet, NetSpec};
use crate::error::{Error, Result};
use crate::sds;
use crate::seed;

/// Per-pair loss: `D^2 / 2` for a genuine pair, `max(0, M - D)^2 / 2` for
/// an impostor pair.
pub fn pair_loss(distance: f64, genuine: bool, margin: f64) -> Result<f64> {
    if !(distance >= 0.0) {
        return Err(Error::config(format!("distance must be non-negative, got {distance}")));
    }
    if !(margin > 0.0) {
        return Err(Error::config("margin must be positive"));
    }
    Ok(if genuine {
        0.5 * distance * distance
    } else {
        let gap = (margin - distance).max(0.0);
        0.5 * gap * gap
    })
}

/// `d loss / d D`. Zero for impostors at or beyond the margin.
pub fn pair_loss_derivative(distance: f64, genuine: bool, margin: f64) -> f64 {
    if genuine {
        distance
    } else if distance < margin {
        distance - margin
    } else {
        0.0
    }
}

/// Mean pair loss over `batch` under the current embedding.
pub fn batch_loss(net: &EmbeddingNet, batch: &PairBatch<'_>, margin: f64) -> Result<f64> {
    let data = batch.source();
    let mut total = 0.0;
    if 2 * batch.len() >= data.len() {
        // Cheaper to embed every row once; forward is row-wise deterministic.
        let emb = net.forward_batch(data.features())?;
        for p in batch.pairs() {
            total += pair_loss(distance(emb.row(p.index_a), emb.row(p.index_b))?, p.genuine, margin)?;
        }
    } else {
        for p in batch.pairs() {
            let fa = net.forward(data.row(p.index_a))?;
            let fb = net.forward(data.row(p.index_b))?;
            total += pair_loss(distance(fa.view(), fb.view())?, p.genuine, margin)?;
        }
    }
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Pairs drawn per epoch; `None` means ten per training sample.
    pub pair_count: Option<usize>,
    pub genuine_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            learning_rate: 0.05,
            epochs: 50,
            batch_size: 64,
            pair_count: None,
            genuine_fraction: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::config("margin must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be non-negative"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.pair_count == Some(0) {
            return Err(Error::config("epochs, batch size and pair count must be positive"));
        }
        if !(self.genuine_fraction > 0.0 && self.genuine_fraction < 1.0) {
            return Err(Error::config("genuine fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn pairs_per_epoch(&self, samples: usize) -> usize {
        self.pair_count.unwrap_or(10 * samples)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean loss on a fixed monitoring pair set after each epoch.
    pub epoch_losses: Vec<f64>,
    pub genuine_mean_distance: f64,
    pub impostor_mean_distance: f64,
    pub config: TrainConfig,
}

impl TrainReport {
    /// Two CSV blocks separated by a blank line: `epoch,mean_loss` rows,
    /// then `metric,value` rows for the final distances and the config.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (e, loss) in self.epoch_losses.iter().enumerate() {
            let _ = writeln!(out, "{},{loss:?}", e + 1);
        }
        let c = &self.config;
        out.push_str("\nmetric,value\n");
        let _ = writeln!(out, "genuine_mean_distance,{:?}", self.genuine_mean_distance);
        let _ = writeln!(out, "impostor_mean_distance,{:?}", self.impostor_mean_distance);
        let _ = writeln!(out, "margin,{:?}", c.margin);
        let _ = writeln!(out, "learning_rate,{:?}", c.learning_rate);
        let _ = writeln!(out, "epochs,{}", c.epochs);
        let _ = writeln!(out, "batch_size,{}", c.batch_size);
        match c.pair_count {
            Some(n) => {
                let _ = writeln!(out, "pair_count,{n}");
            }
            None => out.push_str("pair_count,auto\n"),
        }
        let _ = writeln!(out, "genuine_fraction,{:?}", c.genuine_fraction);
        let _ = writeln!(out, "seed,{}", c.seed);
        out
    }
}

const MONITOR_PAIRS_MAX: usize = 2048;

/// Mean embedding distance of genuine and impostor pairs in `batch`.
pub fn mean_pair_distances(net: &EmbeddingNet, batch: &PairBatch<'_>) -> Result<(f64, f64)> {
    let data = batch.source();
    let emb = net.forward_batch(data.features())?;
    let (mut gs, mut gn, mut is, mut inn) = (0.0, 0usize, 0.0, 0usize);
    for p in batch.pairs() {
        let d = distance(emb.row(p.index_a), emb.row(p.index_b))?;
        if p.genuine {
            gs += d;
            gn += 1;
        } else {
            is += d;
            inn += 1;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
    Ok((mean(gs, gn), mean(is, inn)))
}

/// Trains `net` in place. Each epoch draws fresh pairs from the seed stream
/// and takes one descent step per mini-batch of `batch_size` pairs.
pub fn train(mut net: EmbeddingNet, data: &Dataset, cfg: &TrainConfig) -> Result<(EmbeddingNet, TrainReport)> {
    cfg.validate()?;
    if data.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            actual: data.dim(),
        });
    }
    if data.present_classes().len() < 2 {
        return Err(Error::Pairing("training needs at least two classes".into()));
    }
    let pair_count = cfg.pairs_per_epoch(data.len());
    let monitor = make_pairs(
        data,
        PairCount::Sampled(pair_count.clamp(2, MONITOR_PAIRS_MAX)),
        cfg.genuine_fraction,
        seed::sub_seed(cfg.seed, "train/monitor"),
    )?;

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let pairs = make_pairs(
            data,
            PairCount::Sampled(pair_count),
            cfg.genuine_fraction,
            seed::sub_seed(cfg.seed, &format!("train/epoch/{epoch}")),
        )?;
        for (b, chunk) in pairs.pairs().chunks(cfg.batch_size).enumerate() {
            let ia: Vec<usize> = chunk.iter().map(|p| p.index_a).collect();
            let ib: Vec<usize> = chunk.iter().map(|p| p.index_b).collect();
            let genuine: Vec<bool> = chunk.iter().map(|p| p.genuine).collect();
            let xa = data.features().select(Axis(0), &ia);
            let xb = data.features().select(Axis(0), &ib);
            let diverged = |loss: f64| Error::Diverged {
                epoch: epoch + 1,
                batch: b + 1,
                loss,
            };
            let (losses, grads) = net
                .pair_batch_gradient(xa.view(), xb.view(), &genuine, cfg.margin, 1.0 / chunk.len() as f64)
                .map_err(|e| match e {
                    Error::NonFinite(_) => diverged(f64::NAN),
                    other => other,
                })?;
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            if !mean.is_finite() {
                return Err(diverged(mean));
            }
            net.apply_gradients(&grads, cfg.learning_rate);
        }
        let loss = batch_loss(&net, &monitor, cfg.margin).map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged {
                epoch: epoch + 1,
                batch: 0,
                loss: f64::NAN,
            },
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                batch: 0,
                loss,
            });
        }
        debug!("epoch {} mean_loss {loss:.6}", epoch + 1);
        epoch_losses.push(loss);
    }

    let (genuine_mean_distance, impostor_mean_distance) = mean_pair_distances(&net, &monitor)?;
    info!(
        "trained {} epochs: final loss {:.6}, genuine/impostor distance {:.4}/{:.4}",
        cfg.epochs,
        epoch_losses.last().copied().unwrap_or(f64::NAN),
        genuine_mean_distance,
        impostor_mean_distance
    );
    let report = TrainReport {
        epoch_losses,
        genuine_mean_distance,
        impostor_mean_distance,
        config: cfg.clone(),
    };
    Ok((net, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginSelection {
    pub margin: f64,
    /// `(candidate, mean held-out 1-NN accuracy)` in candidate order.
    pub accuracies: Vec<(f64, f64)>,
}

/// Picks the margin with the best mean held-out 1-NN accuracy over
/// stratified folds. Ties go to the smaller margin.
pub fn select_margin(
    net_spec: &NetSpec,
    data: &Dataset,
    candidates: &[f64],
    template: &TrainConfig,
    folds: usize,
) -> Result<MarginSelection> {
    if candidates.is_empty() {
        return Err(Error::config("no candidate margins"));
    }
    if folds < 2 {
        return Err(Error::config("margin selection needs at least two folds"));
    }
    if let Some(bad) = candidates.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::config(format!("candidate margin {bad} is not positive")));
    }

    let mut rng = seed::rng(seed::sub_seed(template.seed, "margin/folds"));
    let mut fold_of = vec![0usize; data.len()];
    for mut members in data.indices_by_class() {
        members.shuffle(&mut rng);
        for (k, i) in members.into_iter().enumerate() {
            fold_of[i] = k % folds;
        }
    }

    let mut accuracies = Vec::with_capacity(candidates.len());
    for &margin in candidates {
        let mut total = 0.0;
        for fold in 0..folds {
            let train_rows: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != fold).collect();
            let test_rows: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == fold).collect();
            if test_rows.is_empty() || train_rows.is_empty() {
                return Err(Error::config(format!("fold {fold} is empty; use fewer folds")));
            }
            let train_set = data.select(&train_rows)?;
            let test_set = data.select(&test_rows)?;
            let cfg = TrainConfig {
                margin,
                seed: seed::sub_seed(template.seed, &format!("margin/fold/{fold}")),
                ..template.clone()
            };
            let (net, _) = train(EmbeddingNet::init(net_spec.clone())?, &train_set, &cfg)?;
            total += sds::one_nn_accuracy(&net, &train_set, &test_set)?;
        }
        accuracies.push((margin, total / folds as f64));
    }

    let mut best = accuracies[0];
    for &(m, acc) in &accuracies[1..] {
        if acc > best.1 || (acc == best.1 && m < best.0) {
            best = (m, acc);
        }
    }
    Ok(MarginSelection {
        margin: best.0,
        accuracies,
    })
}
