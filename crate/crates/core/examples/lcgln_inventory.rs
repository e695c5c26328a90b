//! The whole pipeline on the inventory problem: sample, fit the convex
//! surrogate, train the predictor through it, and compare with a predictor
//! fit by likelihood alone.
//!
//! cargo run --release --example lcgln_inventory

use lcgln::problems::{Inventory, InventoryConfig};
use lcgln::sampling::SamplerConfig;
use lcgln::train::{evaluate, train_lcgln, train_pfl, LcglnConfig, SamplerChoice};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lcgln::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (inv, data) = Inventory::generate(&InventoryConfig::default(), &mut rng)?;

    let config = LcglnConfig {
        sampler: SamplerChoice::ModelBased(SamplerConfig {
            lr: 1.0,
            ..SamplerConfig::default()
        }),
        ..LcglnConfig::default()
    };

    let pfl = train_pfl(&inv, &data, &config.predictor, &mut rng)?;
    let pfl_eval = evaluate(&pfl.model, &inv, &data.test)?;

    let k = 16;
    let out = train_lcgln(&inv, &data, k, &config, &mut rng)?;
    println!(
        "{} surrogate samples, regrets divided by {:.2} before fitting",
        out.samples.len(),
        out.regret_scale
    );
    println!(
        "surrogate fit error {:.4} -> {:.4}, mean |L(y, y)| on anchors {:.4}",
        out.fit.trace.first().copied().unwrap_or(f64::NAN),
        out.fit.final_error,
        out.fit.anchor_residual
    );
    println!(
        "stage times: sampling {:.2?}, fitting {:.2?}, predictor {:.2?}",
        out.timings.sample, out.timings.fit, out.timings.train
    );
    let lcgln_eval = evaluate(&out.predictor.model, &inv, &data.test)?;

    println!("\nnormalized test regret (0 = perfect, 1 = ordering nothing)");
    println!("  likelihood fit  {:.4}  (best epoch {})", pfl_eval.normalized_regret, pfl.best_epoch);
    println!("  lcgln, K={k:<3}  {:.4}  (best epoch {})", lcgln_eval.normalized_regret, out.predictor.best_epoch);
    Ok(())
}
