//! The inventory problem on its own: a demand distribution predicted from
//! features, the order it induces, and how much a bad prediction costs.
//!
//! cargo run --example inventory

use lcgln::problems::{Decision, DecisionProblem, Inventory, InventoryConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lcgln::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (inv, data) = Inventory::generate(&InventoryConfig::default(), &mut rng)?;
    println!(
        "{} train / {} validation / {} test instances, {} features",
        data.train.len(),
        data.validation.len(),
        data.test.len(),
        inv.feature_dim()
    );

    // The least certain test instance makes the trade-off visible.
    let peak = |i: &lcgln::problems::Instance| {
        let p = i.truth.as_ref().expect("generated instances carry the true distribution");
        p.iter().cloned().fold(0.0, f64::max)
    };
    let inst = data
        .test
        .iter()
        .min_by(|a, b| peak(a).total_cmp(&peak(b)))
        .expect("non-empty test split");
    let p = inst.truth.as_ref().unwrap();
    println!("demand levels  {:?}", inv.demands());
    println!("P(demand | x)  {:?}", p.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("observed       {:?}", inst.y);

    // Ordering against the true distribution versus a flat guess.
    let uniform = vec![0.2; 5];
    for (label, pred) in [("true distribution", p.as_slice()), ("uniform guess", uniform.as_slice())] {
        let a = inv.optimal_order(pred)?;
        println!(
            "{label:>18}: order {a:6.3}, expected cost under truth {:8.3}",
            inv.expected_cost(p, a)?
        );
    }

    let Decision::Order { quantity, .. } = inv.solve(&inst.y)? else { unreachable!() };
    println!("\nwith hindsight the best order is {quantity}");
    println!("regret of the uniform guess on this instance: {:.3}", inv.regret(&uniform, &inst.y)?);
    println!("regret of ordering nothing:                   {:.3}", inv.worst_regret(&inst.y)?);
    Ok(())
}
