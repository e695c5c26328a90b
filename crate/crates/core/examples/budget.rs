//! Budget allocation: pick 2 of 5 websites to maximize the expected number
//! of users who click at least once. Fake websites can be appended as extra
//! candidates whose features say nothing about their click-through rates,
//! which makes the prediction task harder as their number grows.
//!
//! cargo run --example budget

use lcgln::problems::{Budget, BudgetConfig, Decision, DecisionProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lcgln::Result<()> {
    for fakes in [0, 5, 50, 500] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let config = BudgetConfig {
            fakes,
            ..BudgetConfig::default()
        };
        let (budget, data) = Budget::generate(&config, &mut rng)?;
        let inst = &data.test[0];

        let Decision::Selection(best) = budget.solve(&inst.y)? else { unreachable!() };
        let chosen: Vec<usize> = best.iter().enumerate().filter(|(_, s)| **s).map(|(i, _)| i).collect();

        // A prediction off by uniform noise of +-0.2 in every entry.
        let noisy: Vec<f64> = inst.y.iter().map(|y| y + rng.gen_range(-0.2..0.2)).collect();
        println!(
            "F={fakes:3}: {:5} targets, best websites {chosen:?}, coverage {:.3}, \
             regret of noisy prediction {:.3} (worst {:.3})",
            budget.target_dim(),
            budget.objective(&Decision::Selection(best.clone()), &inst.y)?,
            budget.regret(&noisy, &inst.y)?,
            budget.worst_regret(&inst.y)?,
        );
    }
    Ok(())
}
