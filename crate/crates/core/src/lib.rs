//! Generative-model evaluation with a Siamese Distance Score (SDS).
//!
//! A contrastive-loss embedding network is trained on labeled real data;
//! fake samples are then scored by their nearest-neighbor distances to real
//! samples in the learned embedding space. A Gaussian-kernel MMD baseline
//! and a seeded experiment harness for mode dropping, mode invention,
//! intra-class collapse and quality degradation sit on top.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contrastive;
pub mod dataset;
pub mod embedding_net;
pub mod error;
pub mod experiments;
pub mod mmd;
pub mod sds;
pub mod seed;
pub mod stats;

pub use contrastive::{batch_loss, pair_loss, select_margin, train, MarginSelection, TrainConfig, TrainReport};
pub use dataset::{
    degrade, filter_classes, gen_mixture, load_csv, load_features, make_pairs, split, subsample_per_class, DataSplit,
    Dataset, LabelColumn, MixtureSpec, PairBatch, PairCount, SamplePair,
};
pub use embedding_net::{distance, EmbeddingMatrix, EmbeddingNet, Gradients, NetSpec};
pub use error::{Error, Result};
pub use mmd::{mmd2, Bandwidth, MmdConfig};
pub use sds::{normalize_series, score_set, ScoreDirection, SdsConfig, SdsReport};
