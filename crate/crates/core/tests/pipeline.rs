use pmi::data::{split_folds, Bag, Dataset, Instance, Label};
use pmi::eval::{fit_fold, OracleMode, RunConfig};
use pmi::kernel::KernelSpec;
use pmi::pmi::{fit_pmi, max_query_bound, GroundTruthOracle, PmiConfig, TerminationReason};
use pmi::synth::{synth_generate, Cluster, NegativeMode, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mixed(seed: u64) -> Dataset {
    let mut c = SynthConfig::scattered(3, 25, 10, seed);
    c.positives_per_bag = 2;
    c.instances_per_bag = 5;
    synth_generate(&c).unwrap()
}

fn perturb_bags(data: &Dataset, which: &[usize], seed: u64) -> Dataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let bags = data
        .bags()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if !which.contains(&i) {
                return b.clone();
            }
            let instances = b
                .instances
                .iter()
                .map(|inst| {
                    let f = inst.features.iter().map(|x| x + r.random_range(-5.0..5.0)).collect();
                    Instance::new(f, inst.label)
                })
                .collect();
            Bag::new(b.id.clone(), b.label, instances)
        })
        .collect();
    Dataset::new(bags).unwrap()
}

#[test]
fn test_fold_contents_never_reach_the_model() {
    let data = mixed(12);
    let folds = split_folds(&data, 5, 9).unwrap();
    let mut config = RunConfig::new(PmiConfig::new(KernelSpec::Rbf { gamma: 8.0 }, 0.2));
    config.k_folds = 5;
    config.oracle = OracleMode::GroundTruth;
    for scale in [false, true] {
        config.scale = scale;
        for (i, fold) in folds.iter().enumerate() {
            let mutated = perturb_bags(&data, &fold.test, i as u64);
            assert_ne!(mutated, data);
            let a = fit_fold(&data, fold, &config).unwrap();
            let b = fit_fold(&mutated, fold, &config).unwrap();
            assert_eq!(a, b, "fold {i}, scale {scale}");
        }
    }
}

#[test]
fn parameter_search_ignores_the_test_fold() {
    let data = mixed(13);
    let folds = split_folds(&data, 4, 1).unwrap();
    let mut config = RunConfig::new(PmiConfig::new(KernelSpec::Rbf { gamma: 1.0 }, 0.1));
    config.k_folds = 4;
    config.scale = true;
    config.oracle = OracleMode::GroundTruth;
    config.grid = vec![(0.1, 2.0), (0.1, 10.0), (0.3, 10.0)];
    let fold = &folds[0];
    let a = fit_fold(&data, fold, &config).unwrap();
    let b = fit_fold(&perturb_bags(&data, &fold.test, 77), fold, &config).unwrap();
    assert_eq!(a, b);
}

/// Positives in one cluster, a tight negative cluster shared by every bag,
/// and one stray background instance per bag, kept clear of the positives.
fn tight_negatives_with_strays(seed: u64) -> Dataset {
    let d = 5;
    let mut c = SynthConfig::scattered(d, 40, 0, seed);
    c.positive_cluster = Cluster {
        center: vec![0.3; d],
        spread: 0.08,
    };
    c.negative_mode = NegativeMode::Clustered(Cluster {
        center: vec![0.7; d],
        spread: 0.02,
    });
    c.instances_per_bag = 3;
    let base = synth_generate(&c).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let bags = base
        .into_bags()
        .into_iter()
        .map(|mut b| {
            let stray = loop {
                let x: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
                if x.iter().map(|v| (v - 0.3).powi(2)).sum::<f64>() >= 0.36 {
                    break x;
                }
            };
            b.instances.push(Instance::new(stray, Label::Negative));
            b
        })
        .collect();
    Dataset::new(bags).unwrap()
}

#[test]
fn tight_negative_cluster_is_removed_before_the_positive_query() {
    for seed in 0..10 {
        let data = tight_negatives_with_strays(seed);
        let config = PmiConfig::new(KernelSpec::Rbf { gamma: 20.0 }, 0.1);
        let m = fit_pmi(&data, &config, &mut GroundTruthOracle::new(&data)).unwrap();
        assert_eq!(m.query_log.first_answer(), Some(Label::Negative), "seed {seed}");
        assert!(m.queries() >= 2, "seed {seed}: {} queries", m.queries());
        assert!(m.queries() <= max_query_bound(&data, 0.1));
        assert_eq!(m.termination, TerminationReason::PositiveQuery, "seed {seed}");
        let removed = m.passes[0].removed.unwrap();
        assert!(removed >= data.len(), "seed {seed}: only {removed} removed");
    }
}

#[test]
fn removal_passes_shrink_every_bag_with_a_captured_witness() {
    let data = tight_negatives_with_strays(3);
    let config = PmiConfig::new(KernelSpec::Rbf { gamma: 20.0 }, 0.1);
    let m = fit_pmi(&data, &config, &mut GroundTruthOracle::new(&data)).unwrap();
    for w in m.passes.windows(2) {
        if w[0].removed.is_some() {
            assert!(w[1].instances < w[0].instances);
            assert!(w[0].bags_with_removal >= 1);
        }
    }
}

