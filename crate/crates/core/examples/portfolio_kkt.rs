//! The portfolio decision has a closed form. This example checks it against
//! the optimality conditions and a slow projected-gradient ascent, then
//! shows that the regret gradient matches finite differences.
//!
//! cargo run --example portfolio_kkt

use lcgln::problems::{Decision, DecisionProblem, Portfolio, PortfolioConfig};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lcgln::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let config = PortfolioConfig {
        assets: 10,
        ..PortfolioConfig::default()
    };
    let (p, data) = Portfolio::generate(&config, &mut rng)?;
    let sigma = p.sigma();
    let gamma = p.risk_aversion();
    let inst = &data.test[0];
    let y = DVector::from_column_slice(&inst.y);

    let Decision::Weights(w) = p.solve(&inst.y)? else { unreachable!() };
    let a = DVector::from_column_slice(&w);
    println!("weights sum to {:.12}", a.sum());

    // Stationarity: y - 2 gamma Sigma a must be the same in every coordinate.
    let multiplier = &y - sigma * &a * (2.0 * gamma);
    let spread = multiplier.max() - multiplier.min();
    println!("spread of the stationarity multiplier: {spread:.2e}");

    // Projected gradient ascent on the same objective, projecting onto the
    // hyperplane sum(a) = 1 by removing the mean of each step.
    let n = inst.y.len();
    let mut b = DVector::from_element(n, 1.0 / n as f64);
    let step = 1.0 / (2.0 * gamma * sigma.symmetric_eigenvalues().max());
    for _ in 0..10_000 {
        let g = &y - sigma * &b * (2.0 * gamma);
        let mean = g.mean();
        b += (g.add_scalar(-mean)) * step;
    }
    let closed = p.mean_variance(&w, &inst.y)?;
    let iterative = p.mean_variance(b.as_slice(), &inst.y)?;
    println!("objective closed form {closed:.9}, projected gradient {iterative:.9}");

    // Regret gradient of a perturbed prediction against central differences.
    let pred: Vec<f64> = inst.y.iter().enumerate().map(|(i, v)| v + 0.3 * (i as f64).sin()).collect();
    let analytic = p.regret_gradient(&pred, &inst.y)?;
    let h = 1e-5;
    let worst_rel = (0..n)
        .map(|i| {
            let mut up = pred.clone();
            let mut down = pred.clone();
            up[i] += h;
            down[i] -= h;
            let numeric = (p.regret_unclamped(&up, &inst.y).unwrap() - p.regret_unclamped(&down, &inst.y).unwrap()) / (2.0 * h);
            (numeric - analytic[i]).abs() / numeric.abs().max(1e-8)
        })
        .fold(0.0, f64::max);
    println!("largest relative gap to finite differences: {worst_rel:.2e}");
    Ok(())
}
