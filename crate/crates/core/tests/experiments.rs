//! Experiment harness on a tiny mixture.

use sds_core::experiments::{
    degraded_fake_sets, intraclass_experiment, mode_experiment, mode_shape_holds, quality_experiment,
    ranking_experiment, DataSource, ExperimentConfig, FakeSet, FakeSetKind, ReferenceSet,
};
use sds_core::{gen_mixture, MixtureSpec, NetSpec, ScoreDirection, TrainConfig};

fn tiny(repetitions: usize) -> ExperimentConfig {
    ExperimentConfig {
        repetitions,
        data: DataSource::Mixture(MixtureSpec {
            class_count: 4,
            dimension: 3,
            mode_radius: 8.0,
            within_sigma: 1.0,
            per_class_count: 30,
            seed: 1,
        }),
        net: NetSpec {
            hidden_dims: vec![8],
            embed_dim: 4,
            ..NetSpec::with_defaults(3)
        },
        train: TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        },
        seed: 42,
        ..ExperimentConfig::default()
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg = tiny(2);
    assert_eq!(mode_experiment(&cfg).unwrap(), mode_experiment(&cfg).unwrap());
    assert_eq!(
        quality_experiment(&cfg, &[0.0, 1.0]).unwrap(),
        quality_experiment(&cfg, &[0.0, 1.0]).unwrap()
    );
    let other = ExperimentConfig {
        seed: 43,
        ..cfg.clone()
    };
    assert_ne!(mode_experiment(&cfg).unwrap(), mode_experiment(&other).unwrap());
}

#[test]
fn series_have_one_entry_per_x() {
    let cfg = tiny(3);
    let m = mode_experiment(&cfg).unwrap();
    assert_eq!(m.x_values, vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m.per_repetition.len(), 3);
    assert!(m.per_repetition.iter().all(|r| r.len() == 4));
    let lo = m.normalized_scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.normalized_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!((lo, hi), (0.0, 1.0));

    let ic = intraclass_experiment(&cfg, &[0.2, 1.0]).unwrap();
    assert_eq!(ic.x_values, vec![0.2, 1.0]);
    assert!(ic.to_csv().starts_with("x,mean,std,normalized\n"));
    assert_eq!(ic.to_csv().lines().count(), 3);
}

#[test]
fn forward_and_two_sided_differ() {
    let cfg = tiny(1);
    let fwd = ExperimentConfig {
        direction: ScoreDirection::Forward,
        ..cfg.clone()
    };
    assert_ne!(
        quality_experiment(&cfg, &[0.0, 2.0]).unwrap().series.mean_scores,
        quality_experiment(&fwd, &[0.0, 2.0]).unwrap().series.mean_scores
    );
}

#[test]
fn eval_reference_scores_undegraded_fakes_at_zero() {
    let cfg = ExperimentConfig {
        reference: ReferenceSet::Eval,
        direction: ScoreDirection::Forward,
        ..tiny(1)
    };
    let q = quality_experiment(&cfg, &[0.0, 1.0]).unwrap();
    assert_eq!(q.series.mean_scores[0], 0.0);
    assert!(q.series.mean_scores[1] > 0.0);
}

#[test]
fn ranking_reports_every_set() {
    let cfg = tiny(2);
    let mut sets = degraded_fake_sets(&[0.5, 3.0]);
    let far = gen_mixture(&MixtureSpec {
        class_count: 4,
        dimension: 3,
        mode_radius: 30.0,
        within_sigma: 1.0,
        // Same size as the evaluation part (a fifth of 30 per class).
        per_class_count: 6,
        seed: 9,
    })
    .unwrap();
    sets.push(FakeSet {
        name: "far".into(),
        kind: FakeSetKind::Fixed(far),
    });
    let r = ranking_experiment(&cfg, &sets).unwrap();
    assert_eq!(r.rows.len(), 3);
    assert_eq!(r.taus.len(), 2);
    assert_eq!(r.rows[0].name, "sigma=0.5");
    assert!(r.rows[2].sds_mean > r.rows[0].sds_mean);
    assert!(r.rows[2].mmd_mean > r.rows[0].mmd_mean);
    assert_eq!(r.to_csv().lines().count(), 4);
}

#[test]
fn ranking_puts_undegraded_fakes_first() {
    let r = ranking_experiment(&tiny(2), &degraded_fake_sets(&[0.0, 1.0, 4.0])).unwrap();
    assert_eq!(r.rows[0].mmd_mean, 0.0);
    for w in r.rows.windows(2) {
        assert!(w[0].sds_mean < w[1].sds_mean);
        assert!(w[0].mmd_mean < w[1].mmd_mean);
    }
}

#[test]
fn ranking_rejects_unequal_set_sizes() {
    let mut sets = degraded_fake_sets(&[0.5]);
    let small = gen_mixture(&MixtureSpec {
        class_count: 4,
        dimension: 3,
        mode_radius: 8.0,
        within_sigma: 1.0,
        per_class_count: 2,
        seed: 3,
    })
    .unwrap();
    sets.push(FakeSet {
        name: "small".into(),
        kind: FakeSetKind::Fixed(small),
    });
    assert!(ranking_experiment(&tiny(1), &sets).is_err());
}

#[test]
fn single_noise_level_normalizes_to_zero() {
    let q = quality_experiment(&tiny(1), &[0.0]).unwrap();
    assert_eq!(q.series.x_values, vec![0.0]);
    assert_eq!(q.series.normalized_scores, vec![0.0]);
    assert_eq!(q.spearman, 0.0);
}

#[test]
fn invalid_settings_are_rejected() {
    let cfg = tiny(1);
    assert!(mode_experiment(&ExperimentConfig {
        repetitions: 0,
        ..cfg.clone()
    })
    .is_err());
    assert!(intraclass_experiment(&cfg, &[0.0]).is_err());
    assert!(intraclass_experiment(&cfg, &[]).is_err());
    assert!(quality_experiment(&cfg, &[0.5, 1.0]).is_err());
    assert!(quality_experiment(&cfg, &[0.0, 1.0, 1.0]).is_err());
    assert!(ranking_experiment(&cfg, &degraded_fake_sets(&[1.0])).is_err());
    let two_classes = ExperimentConfig {
        data: DataSource::Mixture(MixtureSpec {
            class_count: 2,
            dimension: 3,
            mode_radius: 8.0,
            within_sigma: 1.0,
            per_class_count: 30,
            seed: 1,
        }),
        ..cfg
    };
    assert!(mode_experiment(&two_classes).is_err());
}

#[test]
fn mode_shape_rule() {
    assert!(mode_shape_holds(&[3.0, 2.0, 1.0, 2.0], 3));
    assert!(!mode_shape_holds(&[3.0, 0.5, 1.0, 2.0], 3));
    assert!(!mode_shape_holds(&[1.0, 2.0, 1.0, 2.0], 3));
}
