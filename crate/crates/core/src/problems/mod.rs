//! Benchmark decision problems: data generation, exact solvers and regret.

pub mod budget;
pub mod inventory;
pub mod portfolio;

use crate::error::{check_len, Error, Result};
use crate::net::{Activation, PredictionLoss};

pub use budget::{Budget, BudgetConfig};
pub use inventory::{Inventory, InventoryConfig};
pub use portfolio::{Portfolio, PortfolioConfig, ReturnsSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A feasible decision of one of the benchmark problems.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    /// Inventory order: quantity plus the per-demand shortfall and surplus.
    Order {
        quantity: f64,
        shortfall: Vec<f64>,
        surplus: Vec<f64>,
    },
    /// Budget allocation: indicator of the selected websites.
    Selection(Vec<bool>),
    /// Portfolio weights summing to one.
    Weights(Vec<f64>),
}

/// One `(features, target)` record. `truth` carries latent ground truth that
/// only oracle tests may look at (the inventory demand distribution).
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub truth: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitDataset {
    pub train: Vec<Instance>,
    pub validation: Vec<Instance>,
    pub test: Vec<Instance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl SplitDataset {
    /// Splits a sequence in order: first `train`, then `validation`, then the rest.
    pub fn from_ordered(mut all: Vec<Instance>, train: usize, validation: usize) -> Self {
        let test = all.split_off((train + validation).min(all.len()));
        let validation_set = all.split_off(train.min(all.len()));
        Self {
            train: all,
            validation: validation_set,
            test,
        }
    }

    pub fn split(&self, which: Split) -> &[Instance] {
        match which {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// The contract every benchmark problem fulfils.
///
/// `objective` is the raw objective in the problem's own sense; `task_loss`
/// flips maximization objectives so that lower is always better.
pub trait DecisionProblem: Send + Sync {
    fn name(&self) -> &'static str;
    fn feature_dim(&self) -> usize;
    fn target_dim(&self) -> usize;
    fn sense(&self) -> Sense;

    /// Number of equal blocks the features and targets split into, each
    /// predicted by the same network; 1 means one joint prediction.
    fn shared_rows(&self) -> usize {
        1
    }

    /// Activation on the predictive model's last layer.
    fn output_activation(&self) -> Activation;
    /// Loss used by prediction-focused training.
    fn prediction_loss(&self) -> PredictionLoss;

    /// Optimal decision for predicted parameters.
    fn solve(&self, pred: &[f64]) -> Result<Decision>;
    fn objective(&self, decision: &Decision, y: &[f64]) -> Result<f64>;
    /// Reference worst decision under the true parameters.
    fn worst_decision(&self, y: &[f64]) -> Result<Decision>;

    /// Maps an arbitrary vector back onto the set of valid targets.
    fn project_target(&self, _v: &mut [f64]) {}

    fn task_loss(&self, decision: &Decision, y: &[f64]) -> Result<f64> {
        let v = self.objective(decision, y)?;
        Ok(match self.sense() {
            Sense::Minimize => v,
            Sense::Maximize => -v,
        })
    }

    /// Regret before clamping; tiny negative values are rounding noise.
    fn regret_unclamped(&self, pred: &[f64], y: &[f64]) -> Result<f64> {
        check_len("prediction", self.target_dim(), pred.len())?;
        check_len("target", self.target_dim(), y.len())?;
        let chosen = self.task_loss(&self.solve(pred)?, y)?;
        let best = self.task_loss(&self.solve(y)?, y)?;
        Ok(chosen - best)
    }

    fn regret(&self, pred: &[f64], y: &[f64]) -> Result<f64> {
        let r = self.regret_unclamped(pred, y)?;
        if r < -1e-6 * (1.0 + r.abs()) {
            return Err(Error::Solver(format!(
                "{}: prediction beat the true-parameter decision by {}",
                self.name(),
                -r
            )));
        }
        Ok(r.max(0.0))
    }

    /// Raw objective of the worst reference decision.
    fn worst_case_loss(&self, y: &[f64]) -> Result<f64> {
        self.objective(&self.worst_decision(y)?, y)
    }

    /// Regret of the worst reference decision; the normalizer.
    fn worst_regret(&self, y: &[f64]) -> Result<f64> {
        let worst = self.task_loss(&self.worst_decision(y)?, y)?;
        let best = self.task_loss(&self.solve(y)?, y)?;
        Ok((worst - best).max(0.0))
    }

    /// Regret of an explicit decision.
    fn decision_regret(&self, decision: &Decision, y: &[f64]) -> Result<f64> {
        let chosen = self.task_loss(decision, y)?;
        let best = self.task_loss(&self.solve(y)?, y)?;
        Ok((chosen - best).max(0.0))
    }
}

/// Ratio of summed regrets to summed worst-case regrets.
pub fn normalized_regret(regrets: &[f64], worst: &[f64]) -> Result<f64> {
    check_len("worst-case regrets", regrets.len(), worst.len())?;
    let denom: f64 = worst.iter().sum();
    if denom <= 0.0 {
        return Err(Error::Contract(
            "worst-case regret sums to zero; normalization undefined".into(),
        ));
    }
    Ok(regrets.iter().sum::<f64>() / denom)
}

/// One of the three benchmark problems, for callers that pick at runtime.
#[derive(Debug, Clone)]
pub enum AnyProblem {
    Inventory(Inventory),
    Budget(Budget),
    Portfolio(Portfolio),
}

impl AnyProblem {
    pub fn as_dyn(&self) -> &dyn DecisionProblem {
        match self {
            AnyProblem::Inventory(p) => p,
            AnyProblem::Budget(p) => p,
            AnyProblem::Portfolio(p) => p,
        }
    }

    pub fn as_portfolio(&self) -> Option<&Portfolio> {
        match self {
            AnyProblem::Portfolio(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Inventory,
    Budget,
    Portfolio,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [ProblemKind::Inventory, ProblemKind::Budget, ProblemKind::Portfolio];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Inventory => "inventory",
            ProblemKind::Budget => "budget",
            ProblemKind::Portfolio => "portfolio",
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config {
                field: "problem".into(),
                msg: format!("unknown problem `{s}` (expected inventory, budget or portfolio)"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_is_ratio_of_sums() {
        let v = normalized_regret(&[1.0, 0.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert!(normalized_regret(&[0.0], &[0.0]).is_err());
    }

    #[test]
    fn ordered_split() {
        let all: Vec<Instance> = (0..10)
            .map(|i| Instance {
                x: vec![i as f64],
                y: vec![],
                truth: None,
            })
            .collect();
        let d = SplitDataset::from_ordered(all, 6, 2);
        assert_eq!((d.train.len(), d.validation.len(), d.test.len()), (6, 2, 2));
        assert_eq!(d.validation[0].x, vec![6.0]);
        assert_eq!(d.test[1].x, vec![9.0]);
    }
}
