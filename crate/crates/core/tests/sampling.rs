//! Sample-set accounting, determinism and regret bookkeeping of both
//! samplers.

mod common;

use common::{normal_vec, rng, sizes};
use lcgln::optim::Optimizer;
use lcgln::problems::{DecisionProblem, Instance, Portfolio};
use lcgln::sampling::{gaussian_generate, mbs_generate, read_triples_csv, write_triples_csv, SampleTriple, SamplerConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn check_accounting(samples: &[SampleTriple], instances: &[Instance], k: usize) {
    assert_eq!(samples.len(), instances.len() * k, "K = {k}");
    let anchors = samples.iter().filter(|s| s.is_anchor()).count();
    assert!(anchors >= instances.len());
    for (s, inst) in samples.iter().zip(instances) {
        assert!(s.is_anchor());
        assert_eq!(s.target, inst.y);
    }
    assert!(samples.iter().all(|s| s.regret >= 0.0));
}

#[test]
fn model_based_sets_hold_n_times_k_triples() {
    let (inv, data) = common::inventory(50, sizes(40, 5, 5));
    let cfg = SamplerConfig {
        lr: 1.0,
        ..SamplerConfig::default()
    };
    for k in [1, 2, 4, 8, 16, 32] {
        let samples = mbs_generate(&data.train, &inv, &cfg, k, &mut rng(k as u64)).unwrap();
        check_accounting(&samples, &data.train, k);
        // the first N triples are the anchors, one per instance, in order
        assert!(samples[..40].iter().all(|s| s.regret == 0.0 && s.pred == s.target));
        if k == 1 {
            assert!(samples.iter().all(SampleTriple::is_anchor));
        }
    }
}

#[test]
fn gaussian_sets_hold_n_times_k_triples() {
    let (bud, data) = common::budget(51, 5, sizes(20, 5, 5));
    for k in [2, 4, 8, 16, 32] {
        let samples = gaussian_generate(&data.train, &bud, 0.1, k, &mut rng(k as u64)).unwrap();
        check_accounting(&samples, &data.train, k);
    }
    let still = gaussian_generate(&data.train, &bud, 0.0, 4, &mut rng(0)).unwrap();
    assert!(still.iter().all(SampleTriple::is_anchor));
}

#[test]
fn gaussian_noise_is_centred() {
    let (port, _) = common::portfolio(52, 5);
    let y = vec![0.3, -0.2, 0.0, 1.0, 0.5];
    let inst = vec![Instance {
        x: vec![0.0; port.feature_dim()],
        y: y.clone(),
        truth: None,
    }];
    let sigma = 0.5;
    let samples = gaussian_generate(&inst, &port, sigma, 10_001, &mut rng(7)).unwrap();
    for j in 0..5 {
        let mean = samples[1..].iter().map(|s| s.pred[j] - y[j]).sum::<f64>() / 10_000.0;
        assert!(mean.abs() <= 3.0 * sigma / 100.0, "coordinate {j}: mean offset {mean}");
    }
}

#[test]
fn recorded_regrets_match_fresh_solves() {
    let (bud, data) = common::budget(53, 5, sizes(15, 5, 5));
    let samples = mbs_generate(&data.train, &bud, &SamplerConfig::default(), 6, &mut rng(8)).unwrap();
    for s in &samples {
        assert_eq!(s.regret, bud.regret(&s.pred, &s.target).unwrap());
    }
    let again = mbs_generate(&data.train, &bud, &SamplerConfig::default(), 6, &mut rng(8)).unwrap();
    assert_eq!(samples, again);
}

#[test]
fn samples_approach_targets_on_a_linear_task() {
    let mut r = rng(54);
    let n = 4;
    let map = DMatrix::from_fn(n, n, |_, _| rand::Rng::gen_range(&mut r, -0.5..0.5));
    let instances: Vec<Instance> = (0..50)
        .map(|_| {
            let x = normal_vec(&mut r, n);
            let y = (&map * nalgebra::DVector::from_column_slice(&x)).as_slice().to_vec();
            Instance { x, y, truth: None }
        })
        .collect();
    let port = Portfolio::new(DMatrix::identity(n, n), 0.1, 1).unwrap();
    let cfg = SamplerConfig {
        hidden: vec![],
        lr: 0.01,
        optimizer: Optimizer::Sgd,
        ..SamplerConfig::default()
    };
    let k = 12;
    let samples = mbs_generate(&instances, &port, &cfg, k, &mut r).unwrap();
    let distance: Vec<f64> = samples[instances.len()..]
        .chunks(instances.len())
        .map(|epoch| {
            epoch
                .iter()
                .map(|s| s.pred.iter().zip(&s.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .sum::<f64>()
                / epoch.len() as f64
        })
        .collect();
    assert_eq!(distance.len(), k - 1);
    assert!(distance.windows(2).all(|w| w[1] <= w[0]), "{distance:?}");
}

#[test]
fn triples_survive_a_csv_round_trip() {
    let (inv, data) = common::inventory(55, sizes(10, 2, 2));
    let samples = mbs_generate(&data.train, &inv, &SamplerConfig::default(), 3, &mut rng(9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("triples.csv");
    write_triples_csv(&path, &samples).unwrap();
    assert_eq!(read_triples_csv(&path).unwrap(), samples);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_sampler_run_keeps_the_invariants(seed in 0u64..1000, k in 1usize..6, train in 1usize..12, gaussian in any::<bool>()) {
        let (bud, data) = common::budget(seed, 2, sizes(train, 1, 1));
        let samples = if gaussian {
            gaussian_generate(&data.train, &bud, 0.2, k, &mut rng(seed)).unwrap()
        } else {
            mbs_generate(&data.train, &bud, &SamplerConfig::default(), k, &mut rng(seed)).unwrap()
        };
        prop_assert_eq!(samples.len(), train * k);
        prop_assert!(samples.iter().all(|s| s.regret >= 0.0 && s.regret.is_finite()));
        prop_assert!(samples[..train].iter().all(SampleTriple::is_anchor));
        for s in &samples[train..] {
            prop_assert!(s.pred.iter().all(|v| v.is_finite()));
            prop_assert!(bud.worst_regret(&s.target).unwrap() + 1e-9 >= s.regret);
        }
    }
}
