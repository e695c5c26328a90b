//! Newsvendor-style inventory problem with discrete demand.
//!
//! Ordering `a` units against demand `d` costs
//!
//! ```text
//! f(d, a) = c0 a + q0 a^2 / 2 + cb [d-a]+ + qb ([d-a]+)^2 / 2 + ch [a-d]+ + qh ([a-d]+)^2 / 2
//! ```
//!
//! and the decision minimizes the expectation of `f` under a demand
//! distribution over five fixed levels.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, WeightedIndex};

use super::{Decision, DecisionProblem, Instance, Sense, SplitDataset, SplitSizes};
use crate::error::{check_len, Error, Result};
use crate::net::{softmax, Activation, PredictionLoss};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostCoefficients {
    pub c0: f64,
    pub q0: f64,
    pub cb: f64,
    pub qb: f64,
    pub ch: f64,
    pub qh: f64,
}

impl Default for CostCoefficients {
    fn default() -> Self {
        Self {
            c0: 10.0,
            q0: 2.0,
            cb: 30.0,
            qb: 14.0,
            ch: 10.0,
            qh: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InventoryConfig {
    pub feature_dim: usize,
    pub demands: Vec<f64>,
    pub costs: CostCoefficients,
    /// Row-major `feature_dim x demands.len()` mapping; drawn from N(0, 1) when absent.
    pub theta: Option<Vec<f64>>,
    pub split: SplitSizes,
}

impl Default for InventoryConfig {
    fn default() -> Self {
        Self {
            feature_dim: 20,
            demands: vec![1.0, 2.0, 5.0, 10.0, 20.0],
            costs: CostCoefficients::default(),
            theta: None,
            split: SplitSizes {
                train: 400,
                validation: 100,
                test: 400,
            },
        }
    }
}

impl InventoryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Error::Config {
            field: field.into(),
            msg: msg.into(),
        };
        if self.demands.is_empty()
            || self.demands[0] <= 0.0
            || self.demands.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(bad("demands", "demands must be positive and strictly increasing"));
        }
        let c = self.costs;
        if [c.c0, c.q0, c.cb, c.qb, c.ch, c.qh].iter().any(|v| !(*v > 0.0)) {
            return Err(bad("costs", "all cost coefficients must be > 0"));
        }
        if self.feature_dim == 0 {
            return Err(bad("feature_dim", "must be >= 1"));
        }
        if let Some(theta) = &self.theta {
            check_len("theta", self.feature_dim * self.demands.len(), theta.len())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inventory {
    demands: Vec<f64>,
    costs: CostCoefficients,
    feature_dim: usize,
    theta: Vec<f64>,
}

impl Inventory {
    pub fn new(config: &InventoryConfig, theta: Vec<f64>) -> Result<Self> {
        config.validate()?;
        check_len("theta", config.feature_dim * config.demands.len(), theta.len())?;
        Ok(Self {
            demands: config.demands.clone(),
            costs: config.costs,
            feature_dim: config.feature_dim,
            theta,
        })
    }

    /// Draws the instance set. Features are standard normal, the demand
    /// distribution is `softmax(theta^T x)` and the stored target is the
    /// one-hot of one realized demand; the distribution itself is kept as
    /// hidden truth.
    pub fn generate<R: Rng + ?Sized>(config: &InventoryConfig, rng: &mut R) -> Result<(Self, SplitDataset)> {
        config.validate()?;
        let k = config.demands.len();
        let theta = match &config.theta {
            Some(t) => t.clone(),
            None => (0..config.feature_dim * k)
                .map(|_| rng.sample(StandardNormal))
                .collect(),
        };
        let problem = Self::new(config, theta)?;
        let all = (0..config.split.total())
            .map(|_| {
                let x: Vec<f64> = (0..config.feature_dim).map(|_| rng.sample(StandardNormal)).collect();
                let p = problem.demand_distribution(&x);
                let realized = WeightedIndex::new(&p)
                    .map_err(|e| Error::Contract(format!("bad demand distribution: {e}")))?
                    .sample(rng);
                let mut y = vec![0.0; k];
                y[realized] = 1.0;
                Ok(Instance { x, y, truth: Some(p) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((
            problem,
            SplitDataset::from_ordered(all, config.split.train, config.split.validation),
        ))
    }

    pub fn demands(&self) -> &[f64] {
        &self.demands
    }

    pub fn costs(&self) -> CostCoefficients {
        self.costs
    }

    /// `softmax(theta^T x)`.
    pub fn demand_distribution(&self, x: &[f64]) -> Vec<f64> {
        let k = self.demands.len();
        let logits: Vec<f64> = (0..k)
            .map(|j| x.iter().enumerate().map(|(i, xi)| xi * self.theta[i * k + j]).sum())
            .collect();
        softmax(&logits)
    }

    /// Cost of ordering `a` when `demand` is realized.
    pub fn cost(&self, demand: f64, a: f64) -> f64 {
        let c = self.costs;
        let short = (demand - a).max(0.0);
        let over = (a - demand).max(0.0);
        c.c0 * a + 0.5 * c.q0 * a * a + c.cb * short + 0.5 * c.qb * short * short + c.ch * over + 0.5 * c.qh * over * over
    }

    pub fn expected_cost(&self, p: &[f64], a: f64) -> Result<f64> {
        check_len("demand distribution", self.demands.len(), p.len())?;
        if a < 0.0 || !a.is_finite() {
            return Err(Error::Contract(format!("order quantity must be >= 0, got {a}")));
        }
        Ok(p.iter().zip(&self.demands).map(|(pi, d)| pi * self.cost(*d, a)).sum())
    }

    /// Exact minimizer of the expected cost over `a >= 0`.
    ///
    /// Between consecutive demand levels the objective is a single quadratic;
    /// each segment's stationary point is clipped into the segment and the
    /// cheapest candidate wins (smallest `a` on ties).
    pub fn optimal_order(&self, p: &[f64]) -> Result<f64> {
        check_simplex(p, self.demands.len())?;
        let c = self.costs;
        let mut bounds = vec![0.0];
        bounds.extend(self.demands.iter().copied().filter(|d| *d > 0.0));
        let mut best = (f64::INFINITY, 0.0);
        let mut consider = |a: f64| -> Result<()> {
            let v = self.expected_cost(p, a)?;
            if v < best.0 {
                best = (v, a);
            }
            Ok(())
        };
        for s in 0..bounds.len() {
            let lo = bounds[s];
            let hi = bounds.get(s + 1).copied().unwrap_or(f64::INFINITY);
            // demands at or above `hi` are short, those at or below `lo` are over
            let (mut p_short, mut pd_short, mut p_over, mut pd_over) = (0.0, 0.0, 0.0, 0.0);
            for (pi, d) in p.iter().zip(&self.demands) {
                if *d >= hi {
                    p_short += pi;
                    pd_short += pi * d;
                } else if *d <= lo {
                    p_over += pi;
                    pd_over += pi * d;
                }
            }
            let curvature = c.q0 + c.qb * p_short + c.qh * p_over;
            let stationary = (-c.c0 + c.cb * p_short + c.qb * pd_short - c.ch * p_over + c.qh * pd_over) / curvature;
            consider(lo)?;
            consider(stationary.clamp(lo, hi))?;
        }
        Ok(best.1)
    }

    pub fn order_decision(&self, a: f64) -> Decision {
        Decision::Order {
            quantity: a,
            shortfall: self.demands.iter().map(|d| (d - a).max(0.0)).collect(),
            surplus: self.demands.iter().map(|d| (a - d).max(0.0)).collect(),
        }
    }
}

fn check_simplex(p: &[f64], k: usize) -> Result<()> {
    check_len("demand distribution", k, p.len())?;
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!(
            "demand distribution must lie on the simplex (sum = {sum})"
        )));
    }
    Ok(())
}

impl DecisionProblem for Inventory {
    fn name(&self) -> &'static str {
        "inventory"
    }

    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn target_dim(&self) -> usize {
        self.demands.len()
    }

    fn sense(&self) -> Sense {
        Sense::Minimize
    }

    fn output_activation(&self) -> Activation {
        Activation::Softmax
    }

    fn prediction_loss(&self) -> PredictionLoss {
        PredictionLoss::Nll
    }

    fn solve(&self, pred: &[f64]) -> Result<Decision> {
        Ok(self.order_decision(self.optimal_order(pred)?))
    }

    fn objective(&self, decision: &Decision, y: &[f64]) -> Result<f64> {
        match decision {
            Decision::Order { quantity, .. } => self.expected_cost(y, *quantity),
            other => Err(Error::Contract(format!("inventory cannot score {other:?}"))),
        }
    }

    /// Ordering nothing.
    fn worst_decision(&self, _y: &[f64]) -> Result<Decision> {
        Ok(self.order_decision(0.0))
    }

    /// Clamp at zero and renormalize; an all-zero vector becomes uniform.
    fn project_target(&self, v: &mut [f64]) {
        v.iter_mut().for_each(|x| *x = x.max(0.0));
        let sum: f64 = v.iter().sum();
        if sum > 0.0 {
            v.iter_mut().for_each(|x| *x /= sum);
        } else {
            let n = v.len() as f64;
            v.iter_mut().for_each(|x| *x = 1.0 / n);
        }
    }
}
