//! Fitting the convex surrogate: convexity of fitted models, capacity checks
//! on known regret shapes, and the local-minimum behavior around targets.

mod common;

use common::suites::fit;
use common::{normal_vec, rng, sizes, suites};
use lcgln::net::Activation;
use lcgln::optim::{BatchMode, TrainConfig};
use lcgln::picnn::{InputGate, Picnn};
use lcgln::sampling::{anchors, SampleTriple, SamplerConfig};
use lcgln::train::{fit_surrogate, train_lcgln, LcglnConfig, SamplerChoice};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn mse(model: &Picnn, samples: &[SampleTriple]) -> f64 {
    samples
        .iter()
        .map(|s| (model.forward(&s.pred, &s.target).unwrap() - s.regret).powi(2))
        .sum::<f64>()
        / samples.len() as f64
}

#[test]
fn fitted_surrogates_are_convex_for_every_problem() {
    suites::fitted_surrogates_are_convex(1000);
}

#[test]
fn directional_derivative_is_monotone() {
    let mut r = rng(11);
    for _ in 0..50 {
        let d = 3;
        let model = Picnn::new(d, &[4, 4], Activation::Softplus, InputGate::Full, &mut r).unwrap();
        let y = normal_vec(&mut r, d);
        let base = normal_vec(&mut r, d);
        let dir = normal_vec(&mut r, d);
        let slope = |t: f64| {
            let p: Vec<f64> = base.iter().zip(&dir).map(|(b, v)| b + t * v).collect();
            let (_, g) = model.pred_grad(&p, &y).unwrap();
            g.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>()
        };
        let (t1, t2) = (r.gen_range(-2.0..0.0), r.gen_range(0.0..2.0));
        assert!(slope(t1) <= slope(t2) + 1e-6);
    }
}

/// Samples of `f(pred, y)` with both arguments uniform in `[-1, 1]^d`.
fn synthetic(r: &mut ChaCha8Rng, n: usize, d: usize, f: impl Fn(&[f64], &[f64]) -> f64) -> Vec<SampleTriple> {
    (0..n)
        .map(|_| {
            let pred: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
            let target: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
            let regret = f(&pred, &target);
            SampleTriple { pred, target, regret }
        })
        .collect()
}

#[test]
fn two_layer_width_eight_fits_squared_distance() {
    let mut r = rng(12);
    let sq = |p: &[f64], y: &[f64]| p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let samples = synthetic(&mut r, 200, 2, sq);
    let model = Picnn::new(2, &[8, 8], Activation::Softplus, InputGate::Full, &mut r).unwrap();
    let model = fit(model, &samples, 1e-2, 3000, BatchMode::Full);
    let err = mse(&model, &samples);
    assert!(err < 1e-3, "fitting error {err}");
}

#[test]
fn fifty_triples_of_a_convex_quadratic_are_fit_closely() {
    let mut r = rng(13);
    let quad = |p: &[f64], y: &[f64]| {
        let d: Vec<f64> = p.iter().zip(y).map(|(a, b)| a - b).collect();
        2.0 * d[0] * d[0] + 0.5 * d[1] * d[1] + 0.5 * d[0] * d[1]
    };
    let samples = synthetic(&mut r, 50, 2, quad);
    let model = Picnn::new(2, &[8, 8], Activation::Softplus, InputGate::Full, &mut r).unwrap();
    let model = fit(model, &samples, 1e-2, 4000, BatchMode::Full);
    let err = mse(&model, &samples);
    assert!(err < 1e-3, "fitting error {err}");
}

#[test]
fn fitting_error_does_not_increase() {
    let mut r = rng(14);
    let samples = synthetic(&mut r, 100, 3, |p, y| p.iter().zip(y).map(|(a, b)| (a - b).abs()).sum());
    let model = Picnn::new(3, &[2], Activation::Softplus, InputGate::Full, &mut r).unwrap();
    let cfg = TrainConfig {
        lr: 1e-3,
        epochs: 50,
        batch: BatchMode::PerInstance,
        ..TrainConfig::default()
    };
    let (_, report) = fit_surrogate(model, &samples, &cfg).unwrap();
    assert!(report.final_error <= report.trace[0]);
    assert!(report.trace.last().unwrap() <= &report.trace[0]);
}

#[test]
fn anchors_alone_are_fit_to_zero() {
    let mut r = rng(16);
    let (_, data) = common::inventory(4, sizes(10, 2, 2));
    let samples = anchors(&data.train);
    assert_eq!(samples.len(), 10);
    let model = Picnn::new(5, &[2], Activation::Softplus, InputGate::Full, &mut r).unwrap();
    let cfg = TrainConfig {
        lr: 1e-2,
        epochs: 500,
        batch: BatchMode::Full,
        ..TrainConfig::default()
    };
    let (_, report) = fit_surrogate(model, &samples, &cfg).unwrap();
    assert!(report.anchor_residual < 1e-2, "anchor residual {}", report.anchor_residual);
}

#[test]
#[ignore = "inventory targets sit on a zero-regret plateau and the fitted surrogate keeps a nonzero slope there"]
fn fitted_inventory_surrogate_has_local_minima_at_test_targets() {
    let mut r = rng(15);
    let (inv, data) = common::inventory(5, sizes(200, 50, 100));
    let mut config = LcglnConfig::default();
    config.sampler = SamplerChoice::ModelBased(SamplerConfig {
        lr: 1.0,
        ..SamplerConfig::default()
    });
    config.predictor.train.epochs = 1;
    let outcome = train_lcgln(&inv, &data, 32, &config, &mut r).unwrap();
    let model = &outcome.surrogate;

    let mut held = 0;
    for inst in &data.test {
        let y = &inst.y;
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let at = model.forward(y, y).unwrap();
        let ok = (0..20).all(|_| {
            let dir = normal_vec(&mut r, y.len());
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let p: Vec<f64> = y.iter().zip(&dir).map(|(a, v)| a + 0.05 * norm * v / len).collect();
            at <= model.forward(&p, y).unwrap()
        });
        held += usize::from(ok);
    }
    let n = data.test.len();
    println!("local minimum held on {held} of {n} test targets");
    assert!(held * 10 >= n * 9, "local minimum held on {held} of {n} test targets");
}
