//! Helpers shared by the integration tests: finite differences and small,
//! fast problem instances.

#![allow(dead_code)]

pub mod suites;

use lcgln::problems::{
    Budget, BudgetConfig, Inventory, InventoryConfig, Portfolio, PortfolioConfig, SplitDataset, SplitSizes,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + h;
    let up = f(&p);
    p[i] = x[i] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

/// `|a - b| <= rel * max(|a|, |b|) + abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

/// Compares every entry of `analytic` with a central difference of `f`,
/// panicking with the first mismatch.
pub fn assert_gradient(what: &str, f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) {
    assert_eq!(x.len(), analytic.len(), "{what}: gradient length");
    for i in 0..x.len() {
        let numeric = central_diff(&f, x, i, 1e-5);
        assert!(
            close(analytic[i], numeric, 1e-4, 1e-7),
            "{what}[{i}]: analytic {} vs numeric {numeric}",
            analytic[i]
        );
    }
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
}

pub fn simplex_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-9..1.0f64).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

pub fn sizes(train: usize, validation: usize, test: usize) -> SplitSizes {
    SplitSizes {
        train,
        validation,
        test,
    }
}

pub fn inventory(seed: u64, split: SplitSizes) -> (Inventory, SplitDataset) {
    let config = InventoryConfig {
        split,
        ..InventoryConfig::default()
    };
    Inventory::generate(&config, &mut rng(seed)).unwrap()
}

pub fn budget(seed: u64, fakes: usize, split: SplitSizes) -> (Budget, SplitDataset) {
    let config = BudgetConfig {
        fakes,
        split,
        ..BudgetConfig::default()
    };
    Budget::generate(&config, &mut rng(seed)).unwrap()
}

pub fn portfolio(seed: u64, assets: usize) -> (Portfolio, SplitDataset) {
    let config = PortfolioConfig {
        assets,
        ..PortfolioConfig::default()
    };
    Portfolio::generate(&config, &mut rng(seed)).unwrap()
}
