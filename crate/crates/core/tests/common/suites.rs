//! Check suites that both the focused tests and the acceptance run use.
//! Every suite panics on the first violation.

use super::{assert_gradient, normal_vec, rng, simplex_point, sizes};
use lcgln::net::{Activation, DenseNet, Loss};
use lcgln::optim::{BatchMode, TrainConfig};
use lcgln::picnn::{InputGate, Picnn};
use lcgln::problems::{normalized_regret, Decision, DecisionProblem, Inventory, InventoryConfig, Portfolio};
use lcgln::sampling::{mbs_generate, SampleTriple, SamplerConfig};
use lcgln::train::fit_surrogate;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_mlp(r: &mut rand_chacha::ChaCha8Rng, output: Activation) -> DenseNet {
    let depth = r.gen_range(1..=3);
    let mut sizes = vec![r.gen_range(1..=5)];
    for _ in 0..depth {
        sizes.push(r.gen_range(1..=5));
    }
    sizes.push(r.gen_range(2..=4));
    DenseNet::mlp(&sizes, Activation::Softplus, output, r).unwrap()
}

pub fn dense_net_gradients(cases: usize) {
    let mut r = rng(100);
    for case in 0..cases {
        let softmax = case % 2 == 1;
        let mut net = random_mlp(&mut r, if softmax { Activation::Softmax } else { Activation::Linear });
        if case % 4 == 0 {
            // Row sharing is used with per-row regression outputs.
            net = net.with_shared_rows(3).unwrap();
        }
        // Nonzero biases so every unit is exercised away from the origin.
        for v in net.params_mut() {
            *v += 0.1 * r.gen_range(-1.0..1.0);
        }
        let x = normal_vec(&mut r, net.input_dim());
        let target = normal_vec(&mut r, net.output_dim());
        let class = r.gen_range(0..net.output_dim());
        let loss = || if softmax { Loss::Nll(class) } else { Loss::Mse(&target) };
        let g = net.grad(&x, loss()).unwrap();

        assert_gradient(
            &format!("case {case} params"),
            |p| {
                let mut m = net.clone();
                m.params_mut().copy_from_slice(p);
                m.grad(&x, loss()).unwrap().loss
            },
            net.params(),
            &g.params,
        );
        assert_gradient(
            &format!("case {case} input"),
            |xi| net.grad(xi, loss()).unwrap().loss,
            &x,
            &g.input,
        );
    }
}

pub fn picnn_gradients(cases: usize) {
    let mut r = rng(200);
    for case in 0..cases {
        let dim = r.gen_range(1..=5);
        let depth = r.gen_range(1..=2);
        let hidden: Vec<usize> = (0..depth).map(|_| r.gen_range(1..=4)).collect();
        let gate = if case % 3 == 0 { InputGate::Diagonal } else { InputGate::Full };
        let mut model = Picnn::new(dim, &hidden, Activation::Softplus, gate, &mut r).unwrap();
        for v in model.params_mut() {
            *v += 0.2 * r.gen_range(-1.0..1.0);
        }
        model.enforce_nonnegativity();
        let pred = normal_vec(&mut r, dim);
        let target = normal_vec(&mut r, dim);
        let g = model.grad(&pred, &target).unwrap();

        assert_gradient(
            &format!("case {case} prediction"),
            |p| model.forward(p, &target).unwrap(),
            &pred,
            &g.pred,
        );
        assert_gradient(
            &format!("case {case} target"),
            |t| model.forward(&pred, t).unwrap(),
            &target,
            &g.target,
        );
        assert_gradient(
            &format!("case {case} params"),
            |p| {
                let mut m = model.clone();
                m.params_mut().copy_from_slice(p);
                m.forward(&pred, &target).unwrap()
            },
            model.params(),
            &g.params,
        );
    }
}

pub fn random_portfolio(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> Portfolio {
    let a = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    let sigma = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    Portfolio::new(sigma, 0.1, 1).unwrap()
}

pub fn portfolio_gradients(cases: usize) {
    let mut r = rng(300);
    for case in 0..cases {
        let n = r.gen_range(2..=8);
        let p = random_portfolio(&mut r, n);
        let y = normal_vec(&mut r, n);
        let pred = normal_vec(&mut r, n);
        let g = p.regret_gradient(&pred, &y).unwrap();
        assert_gradient(
            &format!("case {case}"),
            |q| p.regret_unclamped(q, &y).unwrap(),
            &pred,
            &g,
        );
    }
}

/// Expected inventory cost written out from the cost model, independent of
/// the library's own evaluation.
fn scripted_cost(p: &[f64], demands: &[f64], a: f64) -> f64 {
    let (c0, q0, cb, qb, ch, qh) = (10.0, 2.0, 30.0, 14.0, 10.0, 2.0);
    p.iter()
        .zip(demands)
        .map(|(pi, d)| {
            let short = (d - a).max(0.0);
            let over = (a - d).max(0.0);
            pi * (c0 * a + q0 / 2.0 * a * a + cb * short + qb / 2.0 * short * short + ch * over + qh / 2.0 * over * over)
        })
        .sum()
}

fn order(d: &Decision) -> f64 {
    match d {
        Decision::Order { quantity, .. } => *quantity,
        other => panic!("expected an order, got {other:?}"),
    }
}

pub fn inventory_against_grid(points: usize) {
    let inv = Inventory::new(&InventoryConfig::default(), vec![0.0; 100]).unwrap();
    let demands = [1.0, 2.0, 5.0, 10.0, 20.0];
    assert_eq!(inv.demands(), demands);
    let mut r = rng(20);
    for _ in 0..points {
        let p = simplex_point(&mut r, 5);
        let a = order(&inv.solve(&p).unwrap());
        let (mut best_a, mut best_v) = (0.0, f64::INFINITY);
        for step in 0..=20_000 {
            let cand = step as f64 * 1e-3;
            let v = scripted_cost(&p, &demands, cand);
            if v < best_v {
                (best_a, best_v) = (cand, v);
            }
        }
        assert!((a - best_a).abs() <= 2e-3, "solver {a} vs grid {best_a} at {p:?}");
        assert!((inv.objective(&inv.solve(&p).unwrap(), &p).unwrap() - scripted_cost(&p, &demands, a)).abs() < 1e-9);
    }
}

/// Best and worst `budget`-subsets by walking every bitmask.
fn brute_force(ctr: &[f64], users: usize, budget: u32) -> (Vec<bool>, Vec<bool>) {
    let rows = ctr.len() / users;
    let value = |mask: u32| -> f64 {
        (0..users)
            .map(|u| {
                let miss: f64 = (0..rows).filter(|w| mask >> w & 1 == 1).map(|w| 1.0 - ctr[w * users + u]).product();
                1.0 - miss
            })
            .sum()
    };
    let masks: Vec<u32> = (0u32..1 << rows).filter(|m| m.count_ones() == budget).collect();
    let best = masks.iter().copied().max_by(|a, b| value(*a).total_cmp(&value(*b))).unwrap();
    let worst = masks.iter().copied().min_by(|a, b| value(*a).total_cmp(&value(*b))).unwrap();
    let unpack = |m: u32| (0..rows).map(|w| m >> w & 1 == 1).collect();
    (unpack(best), unpack(worst))
}

pub fn budget_against_brute_force(cases: usize) {
    let mut r = rng(21);
    for case in 0..cases {
        let fakes = [0, 2, 5][case % 3];
        let (bud, _) = super::budget(case as u64, fakes, sizes(1, 1, 1));
        let ctr: Vec<f64> = (0..bud.target_dim()).map(|_| r.gen_range(0.0..1.0)).collect();
        let (best, worst) = brute_force(&ctr, bud.users(), bud.budget() as u32);
        assert_eq!(bud.solve(&ctr).unwrap(), Decision::Selection(best), "case {case}");
        assert_eq!(bud.worst_decision(&ctr).unwrap(), Decision::Selection(worst), "case {case}");
    }
}

fn random_pd(r: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * 0.5
}

/// Projected gradient ascent on `y^T a - gamma a^T S a` over `sum(a) = 1`.
fn projected_gradient(sigma: &DMatrix<f64>, gamma: f64, y: &[f64], steps: usize) -> Vec<f64> {
    let n = y.len();
    let top = SymmetricEigen::new(sigma.clone()).eigenvalues.max();
    let eta = 1.0 / (2.0 * gamma * top);
    let y = DVector::from_column_slice(y);
    let mut a = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..steps {
        let g = &y - sigma * &a * (2.0 * gamma);
        a += g * eta;
        let shift = (a.sum() - 1.0) / n as f64;
        a.add_scalar_mut(-shift);
    }
    a.as_slice().to_vec()
}

pub fn portfolio_against_projected_gradient(cases: usize) {
    let mut r = rng(22);
    for case in 0..cases {
        let n = 2 + case % 9;
        let sigma = random_pd(&mut r, n);
        let port = Portfolio::new(sigma.clone(), 0.1, 1).unwrap();
        let y = normal_vec(&mut r, n);
        let exact = port.optimal_weights(&y).unwrap();
        assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let oracle = projected_gradient(&sigma, 0.1, &y, 10_000);
        let (fe, fo) = (port.mean_variance(&exact, &y).unwrap(), port.mean_variance(&oracle, &y).unwrap());
        assert!((fe - fo).abs() <= 1e-6, "case {case}: closed form {fe} vs oracle {fo}");
        assert!(fe >= fo - 1e-12);
    }
}

/// Pairs of (prediction, truth) drawn from each problem's target space.
fn random_pair(problem: &str, r: &mut ChaCha8Rng, d: usize) -> (Vec<f64>, Vec<f64>) {
    match problem {
        "inventory" => (simplex_point(r, d), simplex_point(r, d)),
        "budget" => (
            (0..d).map(|_| r.gen_range(0.0..1.0)).collect(),
            (0..d).map(|_| r.gen_range(0.0..1.0)).collect(),
        ),
        _ => (normal_vec(r, d), normal_vec(r, d)),
    }
}

pub fn regret_axioms(pairs: usize) {
    let mut r = rng(23);
    let (inv, _) = super::inventory(1, sizes(1, 1, 1));
    let (bud, _) = super::budget(2, 5, sizes(1, 1, 1));
    let (port, _) = super::portfolio(3, 10);
    let problems: [(&str, &dyn DecisionProblem); 3] = [("inventory", &inv), ("budget", &bud), ("portfolio", &port)];
    for (name, p) in problems {
        let d = p.target_dim();
        let (mut chosen, mut worst) = (Vec::new(), Vec::new());
        for _ in 0..pairs {
            let (pred, y) = random_pair(name, &mut r, d);
            assert!(p.regret_unclamped(&y, &y).unwrap().abs() <= 1e-9, "{name}: regret at truth");
            assert!(p.regret_unclamped(&pred, &y).unwrap() >= -1e-9, "{name}: negative regret");
            let w = p.worst_regret(&y).unwrap();
            let reached = p.decision_regret(&p.worst_decision(&y).unwrap(), &y).unwrap();
            assert!((normalized_regret(&[reached], &[w]).unwrap() - 1.0).abs() <= 1e-6, "{name}");
            chosen.push(reached);
            worst.push(w);
        }
        assert!((normalized_regret(&chosen, &worst).unwrap() - 1.0).abs() <= 1e-6, "{name}: aggregate");
    }
}

pub fn fit(model: Picnn, samples: &[SampleTriple], lr: f64, epochs: usize, batch: BatchMode) -> Picnn {
    let cfg = TrainConfig {
        lr,
        epochs,
        batch,
        ..TrainConfig::default()
    };
    let (model, report) = fit_surrogate(model, samples, &cfg).unwrap();
    assert!(report.diverged_at.is_none());
    assert!(model.is_feasible());
    model
}

/// Midpoint and random-weight convex-combination checks at random targets.
pub fn assert_convex(model: &Picnn, r: &mut ChaCha8Rng, scale: f64, trials: usize) {
    let d = model.dim();
    for trial in 0..trials {
        let y: Vec<f64> = normal_vec(r, d).iter().map(|v| v * scale).collect();
        let a: Vec<f64> = normal_vec(r, d).iter().map(|v| v * scale).collect();
        let b: Vec<f64> = normal_vec(r, d).iter().map(|v| v * scale).collect();
        let lambda = if trial % 2 == 0 { 0.5 } else { r.gen_range(0.0..1.0) };
        let mix: Vec<f64> = a.iter().zip(&b).map(|(u, v)| lambda * u + (1.0 - lambda) * v).collect();
        let f = |p: &[f64]| model.forward(p, &y).unwrap();
        let gap = f(&mix) - (lambda * f(&a) + (1.0 - lambda) * f(&b));
        assert!(gap <= 1e-6, "trial {trial}: convexity violated by {gap}");
    }
}

pub fn fitted_surrogates_are_convex(trials: usize) {
    let mut r = rng(10);

    let (inv, data) = super::inventory(1, sizes(60, 10, 10));
    let samples = mbs_generate(&data.train, &inv, &SamplerConfig { lr: 1.0, ..SamplerConfig::default() }, 4, &mut r).unwrap();
    let model = Picnn::new(inv.target_dim(), &[2], Activation::Softplus, InputGate::Full, &mut r).unwrap();
    assert_convex(&fit(model, &samples, 1e-2, 20, BatchMode::PerInstance), &mut r, 1.0, trials);

    let (bud, data) = super::budget(2, 5, sizes(30, 5, 5));
    let samples = mbs_generate(&data.train, &bud, &SamplerConfig::default(), 3, &mut r).unwrap();
    let model = Picnn::new(bud.target_dim(), &[2], Activation::Softplus, InputGate::Full, &mut r).unwrap();
    assert_convex(&fit(model, &samples, 1e-2, 10, BatchMode::PerInstance), &mut r, 0.5, trials);

    let (port, data) = super::portfolio(3, 8);
    let samples = mbs_generate(&data.train, &port, &SamplerConfig { lr: 1e-3, ..SamplerConfig::default() }, 3, &mut r).unwrap();
    let model = Picnn::new(port.target_dim(), &[2], Activation::Softplus, InputGate::Diagonal, &mut r).unwrap();
    assert_convex(&fit(model, &samples, 1e-2, 10, BatchMode::PerInstance), &mut r, 3.0, trials);
}
