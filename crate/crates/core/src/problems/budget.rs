//! Budget allocation over websites with click-through rates.
//!
//! Targets are a row-major `websites x users` CTR matrix. Selecting a set of
//! websites reaches user `u` with probability `1 - prod_w (1 - a_w y_wu)`;
//! the objective sums that over users and is maximized. Fake websites, when
//! configured, are extra uninformative CTR rows appended after the real ones.

use itertools::Itertools;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Decision, DecisionProblem, Instance, Sense, SplitDataset, SplitSizes};
use crate::error::{check_len, Error, Result};
use crate::net::{Activation, PredictionLoss};

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetConfig {
    pub users: usize,
    pub websites: usize,
    pub budget: usize,
    pub fakes: usize,
    /// Row-major `users x users` feature map; drawn from N(0, 1) when absent.
    pub mixing: Option<Vec<f64>>,
    pub split: SplitSizes,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            users: 10,
            websites: 5,
            budget: 2,
            fakes: 0,
            mixing: None,
            split: SplitSizes {
                train: 80,
                validation: 20,
                test: 100,
            },
        }
    }
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.websites == 0 {
            return Err(Error::Config {
                field: "websites".into(),
                msg: "users and websites must be >= 1".into(),
            });
        }
        if self.budget == 0 || self.budget > self.websites {
            return Err(Error::Config {
                field: "budget".into(),
                msg: format!("budget must lie in 1..={}, got {}", self.websites, self.budget),
            });
        }
        if let Some(m) = &self.mixing {
            check_len("mixing matrix", self.users * self.users, m.len())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    users: usize,
    websites: usize,
    fakes: usize,
    budget: usize,
    mixing: Vec<f64>,
}

/// `sum_u (1 - prod_{w selected} (1 - y_wu))` for a row-major CTR matrix.
pub fn coverage(selected: &[bool], ctr: &[f64], users: usize) -> Result<f64> {
    check_len("ctr matrix", selected.len() * users, ctr.len())?;
    let mut miss = vec![1.0; users];
    for (row, _) in ctr.chunks_exact(users).zip(selected).filter(|(_, s)| **s) {
        for (m, y) in miss.iter_mut().zip(row) {
            *m *= 1.0 - y;
        }
    }
    Ok(miss.iter().map(|m| 1.0 - m).sum())
}

/// Best (or worst) `budget`-subset by exhaustive enumeration in
/// lexicographic order; the first subset attaining the extreme wins.
fn enumerate_extreme(ctr: &[f64], users: usize, budget: usize, maximize: bool) -> Result<Vec<bool>> {
    let rows = ctr.len() / users;
    if budget == 0 || budget > rows {
        return Err(Error::Contract(format!(
            "cannot select {budget} of {rows} websites"
        )));
    }
    let miss: Vec<f64> = ctr.iter().map(|y| 1.0 - y.clamp(0.0, 1.0)).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut scratch = vec![0.0; users];
    for subset in (0..rows).combinations(budget) {
        scratch.fill(1.0);
        for &w in &subset {
            for (s, m) in scratch.iter_mut().zip(&miss[w * users..(w + 1) * users]) {
                *s *= m;
            }
        }
        let value: f64 = scratch.iter().map(|m| 1.0 - m).sum();
        let better = match &best {
            None => true,
            Some((b, _)) => {
                if maximize {
                    value > *b
                } else {
                    value < *b
                }
            }
        };
        if better {
            best = Some((value, subset));
        }
    }
    let (_, subset) = best.expect("at least one subset exists");
    let mut selected = vec![false; rows];
    subset.into_iter().for_each(|w| selected[w] = true);
    Ok(selected)
}

impl Budget {
    pub fn new(config: &BudgetConfig, mixing: Vec<f64>) -> Result<Self> {
        config.validate()?;
        check_len("mixing matrix", config.users * config.users, mixing.len())?;
        Ok(Self {
            users: config.users,
            websites: config.websites,
            fakes: config.fakes,
            budget: config.budget,
            mixing,
        })
    }

    /// Uniform CTRs for real and fake websites. Real websites get features
    /// `x_w = A y_w`; a fake website gets `A z` for an independent uniform
    /// draw `z`, so its features say nothing about its CTRs.
    pub fn generate<R: Rng + ?Sized>(config: &BudgetConfig, rng: &mut R) -> Result<(Self, SplitDataset)> {
        config.validate()?;
        let u = config.users;
        let mixing = match &config.mixing {
            Some(m) => m.clone(),
            None => (0..u * u).map(|_| rng.sample(StandardNormal)).collect(),
        };
        let problem = Self::new(config, mixing)?;
        let all = (0..config.split.total())
            .map(|_| {
                let y: Vec<f64> = (0..(config.websites + config.fakes) * u)
                    .map(|_| rng.gen_range(0.0..=1.0))
                    .collect();
                let noise: Vec<f64> = (0..config.fakes * u).map(|_| rng.gen_range(0.0..=1.0)).collect();
                let mut x = problem.features(&y[..config.websites * u]);
                x.extend(problem.features(&noise));
                Instance { x, y, truth: None }
            })
            .collect();
        Ok((
            problem,
            SplitDataset::from_ordered(all, config.split.train, config.split.validation),
        ))
    }

    fn features(&self, ctr: &[f64]) -> Vec<f64> {
        let u = self.users;
        ctr.chunks_exact(u)
            .flat_map(|row| {
                self.mixing
                    .chunks_exact(u)
                    .map(move |a| a.iter().zip(row).map(|(p, q)| p * q).sum::<f64>())
            })
            .collect()
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Real plus fake websites.
    pub fn total_websites(&self) -> usize {
        self.websites + self.fakes
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn optimal_selection(&self, pred: &[f64]) -> Result<Vec<bool>> {
        check_len("ctr prediction", self.target_dim(), pred.len())?;
        enumerate_extreme(pred, self.users, self.budget, true)
    }
}

impl DecisionProblem for Budget {
    fn name(&self) -> &'static str {
        "budget"
    }

    fn feature_dim(&self) -> usize {
        self.total_websites() * self.users
    }

    fn target_dim(&self) -> usize {
        self.total_websites() * self.users
    }

    fn sense(&self) -> Sense {
        Sense::Maximize
    }

    /// One predictor row per website, mapping its features to its CTRs.
    fn shared_rows(&self) -> usize {
        self.total_websites()
    }

    fn output_activation(&self) -> Activation {
        Activation::Linear
    }

    fn prediction_loss(&self) -> PredictionLoss {
        PredictionLoss::Mse
    }

    /// Predictions outside `[0, 1]` are clamped before enumeration.
    fn solve(&self, pred: &[f64]) -> Result<Decision> {
        Ok(Decision::Selection(self.optimal_selection(pred)?))
    }

    fn objective(&self, decision: &Decision, y: &[f64]) -> Result<f64> {
        match decision {
            Decision::Selection(sel) => {
                check_len("selection", self.total_websites(), sel.len())?;
                coverage(sel, y, self.users)
            }
            other => Err(Error::Contract(format!("budget cannot score {other:?}"))),
        }
    }

    /// The feasible selection with the lowest true objective.
    fn worst_decision(&self, y: &[f64]) -> Result<Decision> {
        check_len("ctr matrix", self.target_dim(), y.len())?;
        Ok(Decision::Selection(enumerate_extreme(y, self.users, self.budget, false)?))
    }

    fn project_target(&self, v: &mut [f64]) {
        v.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
    }
}
