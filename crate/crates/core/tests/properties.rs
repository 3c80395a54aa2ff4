//! Randomized invariants over the data and metric primitives.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use sds_core::dataset::parse_csv;
use sds_core::seed::sub_seed;
use sds_core::{
    degrade, distance, filter_classes, make_pairs, normalize_series, pair_loss, split, subsample_per_class, Dataset,
    LabelColumn, PairCount,
};

/// Dataset with `counts[c]` rows of class `c` and pseudo-random features.
fn dataset(counts: &[usize], dim: usize, salt: u64) -> Dataset {
    let labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    let n = labels.len();
    let feats = Array2::from_shape_fn((n, dim), |(i, j)| {
        let h = sub_seed(salt, &format!("{i}/{j}"));
        (h % 10_000) as f64 / 1000.0 - 5.0
    });
    Dataset::new(feats, labels, counts.len()).unwrap()
}

proptest! {
    #[test]
    fn split_partitions_every_class(
        counts in prop::collection::vec(3usize..40, 1..6),
        g in 0.1f64..0.6,
        s_share in 0.2f64..0.8,
        seed in any::<u64>(),
    ) {
        let s = (1.0 - g) * s_share;
        let e = 1.0 - g - s;
        let data = dataset(&counts, 2, seed);
        let parts = match split(&data, (g, s, e), seed) {
            Ok(p) => p,
            // Tiny classes can leave a whole partition empty.
            Err(sds_core::Error::EmptySelection(_)) => return Ok(()),
            Err(other) => panic!("{other}"),
        };
        let mut all: Vec<usize> = parts.indices.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..data.len()).collect::<Vec<_>>());
        for (c, &n) in counts.iter().enumerate() {
            let per_part: Vec<usize> = parts.indices.iter().map(|p| p.iter().filter(|&&i| data.labels()[i] == c).count()).collect();
            for (k, f) in [g, s, e].iter().enumerate() {
                let floor = (f * n as f64).floor() as usize;
                prop_assert!(per_part[k] >= floor && per_part[k] <= floor + 1);
            }
        }
        let again = split(&data, (g, s, e), seed).unwrap();
        prop_assert_eq!(again.indices, parts.indices);
    }

    #[test]
    fn pairs_are_labeled_by_class(
        counts in prop::collection::vec(2usize..15, 2..5),
        total in 1usize..300,
        seed in any::<u64>(),
    ) {
        let data = dataset(&counts, 1, seed);
        let batch = make_pairs(&data, PairCount::Sampled(total), 0.5, seed).unwrap();
        prop_assert_eq!(batch.len(), total);
        let genuine = batch.pairs().iter().filter(|p| p.genuine).count();
        prop_assert_eq!(genuine, (total as f64 * 0.5).round() as usize);
        for p in batch.pairs() {
            prop_assert!(p.index_a != p.index_b);
            prop_assert_eq!(p.genuine, data.labels()[p.index_a] == data.labels()[p.index_b]);
        }
    }

    #[test]
    fn exhaustive_pairs_cover_each_unordered_pair_once(counts in prop::collection::vec(1usize..6, 1..4)) {
        let data = dataset(&counts, 1, 0);
        let n = data.len();
        prop_assume!(n >= 2);
        let batch = make_pairs(&data, PairCount::Exhaustive, 0.5, 0).unwrap();
        let set: BTreeSet<(usize, usize)> = batch.pairs().iter().map(|p| (p.index_a.min(p.index_b), p.index_a.max(p.index_b))).collect();
        prop_assert_eq!(set.len(), n * (n - 1) / 2);
        prop_assert_eq!(batch.len(), set.len());
    }

    #[test]
    fn distance_is_a_metric(
        a in prop::collection::vec(-100.0f64..100.0, 1..6),
        seed in any::<u64>(),
    ) {
        let d = a.len();
        let shift = |tag: &str| Array1::from_shape_fn(d, |j| (sub_seed(seed, &format!("{tag}{j}")) % 2000) as f64 / 10.0 - 100.0);
        let x = Array1::from(a);
        let y = shift("y");
        let z = shift("z");
        let dxy = distance(x.view(), y.view()).unwrap();
        prop_assert_eq!(distance(x.view(), x.view()).unwrap(), 0.0);
        prop_assert_eq!(dxy, distance(y.view(), x.view()).unwrap());
        prop_assert!(dxy >= 0.0);
        let via = distance(x.view(), z.view()).unwrap() + distance(z.view(), y.view()).unwrap();
        prop_assert!(dxy <= via * (1.0 + 1e-12));
    }

    #[test]
    fn pair_loss_shape(d in 0.0f64..20.0, m in 0.01f64..20.0) {
        let g = pair_loss(d, true, m).unwrap();
        let i = pair_loss(d, false, m).unwrap();
        prop_assert_eq!(g, 0.5 * d * d);
        prop_assert!(i >= 0.0);
        if d >= m {
            prop_assert_eq!(i, 0.0);
        } else {
            prop_assert!((i - 0.5 * (m - d) * (m - d)).abs() <= 1e-12 * m * m);
        }
    }

    #[test]
    fn normalized_series_spans_unit_interval(xs in prop::collection::vec(-1e6f64..1e6, 1..20)) {
        let n = normalize_series(&xs);
        prop_assert_eq!(n.len(), xs.len());
        prop_assert!(n.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > min {
            let lo = xs.iter().position(|&v| v == min).unwrap();
            let hi = xs.iter().position(|&v| v == max).unwrap();
            prop_assert_eq!(n[lo], 0.0);
            prop_assert_eq!(n[hi], 1.0);
        } else {
            prop_assert!(n.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn subsample_keeps_per_class_total(
        counts in prop::collection::vec(1usize..30, 1..5),
        p in 0.01f64..=1.0,
        k in 1usize..40,
        seed in any::<u64>(),
    ) {
        let data = dataset(&counts, 2, seed);
        let out = subsample_per_class(&data, p, k, seed).unwrap();
        prop_assert!(out.class_histogram().iter().all(|&c| c == k));
        // Every emitted row is a copy of some input row of the same class.
        for i in 0..out.len() {
            let row = out.row(i);
            prop_assert!((0..data.len()).any(|j| data.row(j) == row && data.labels()[j] == out.labels()[i]));
        }
    }

    #[test]
    fn filter_keeps_exactly_requested_classes(counts in prop::collection::vec(1usize..10, 2..6), mask in any::<u8>()) {
        let data = dataset(&counts, 1, 3);
        let keep: BTreeSet<usize> = (0..counts.len()).filter(|c| mask & (1 << c) != 0).collect();
        prop_assume!(!keep.is_empty());
        let out = filter_classes(&data, &keep).unwrap();
        let present: BTreeSet<usize> = out.present_classes().into_iter().collect();
        prop_assert_eq!(present, keep.clone());
        prop_assert_eq!(out.len(), keep.iter().map(|&c| counts[c]).sum::<usize>());
    }

    #[test]
    fn csv_round_trip_is_exact(counts in prop::collection::vec(1usize..6, 1..4), seed in any::<u64>(), noise in 0.0f64..3.0) {
        let data = degrade(&dataset(&counts, 3, seed), noise, seed).unwrap();
        let back = parse_csv(data.to_csv_string().as_bytes(), LabelColumn::Last).unwrap();
        prop_assert_eq!(back.features(), data.features());
        prop_assert_eq!(back.labels(), data.labels());
    }
}

#[test]
fn sub_seeds_are_stable_and_distinct() {
    assert_eq!(sub_seed(7, "split"), sub_seed(7, "split"));
    assert_ne!(sub_seed(7, "split"), sub_seed(7, "init"));
    assert_ne!(sub_seed(7, "split"), sub_seed(8, "split"));
}

#[test]
fn unlabeled_csv_keeps_every_column() {
    let m = sds_core::dataset::parse_features("a,b\n1,2\n3.5,-4\n".as_bytes()).unwrap();
    assert_eq!(m, ndarray::array![[1.0, 2.0], [3.5, -4.0]]);
    assert!(sds_core::dataset::parse_features("1,2\n3\n".as_bytes()).is_err());
    assert!(sds_core::dataset::parse_features("".as_bytes()).is_err());
}
