//! Where the surrogate's training data come from. The model-based sampler
//! records a plain MSE learner's outputs as it trains, so its samples start
//! far from the targets and close in; Gaussian sampling perturbs the targets
//! directly. Both add one zero-regret anchor per instance.
//!
//! cargo run --example model_based_sampling

use lcgln::problems::{DecisionProblem, Inventory, InventoryConfig, SplitSizes};
use lcgln::sampling::{gaussian_generate, mbs_generate, SampleTriple, SamplerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn describe(label: &str, samples: &[SampleTriple], n: usize, k: usize) {
    let anchors = samples.iter().filter(|s| s.is_anchor()).count();
    // Projection back onto the simplex can land a perturbed target exactly
    // on the original, so Gaussian sets may hold more than n such triples.
    println!("{label}: {} triples ({n} instances x K={k}), {anchors} of the form (y, y, 0)", samples.len());
    // Samples are stored anchors first, then one block of n per round.
    for (round, block) in samples.chunks(n).enumerate() {
        let mean = block.iter().map(|s| s.regret).sum::<f64>() / block.len() as f64;
        println!("  round {round}: mean regret {mean:9.3}");
    }
}

fn main() -> lcgln::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let config = InventoryConfig {
        split: SplitSizes {
            train: 200,
            validation: 50,
            test: 50,
        },
        ..InventoryConfig::default()
    };
    let (inv, data) = Inventory::generate(&config, &mut rng)?;
    let n = data.train.len();
    let k = 6;

    let sampler = SamplerConfig {
        lr: 1.0,
        ..SamplerConfig::default()
    };
    let mbs = mbs_generate(&data.train, &inv, &sampler, k, &mut rng)?;
    describe("model-based", &mbs, n, k);

    let gaussian = gaussian_generate(&data.train, &inv, 0.1, k, &mut rng)?;
    describe("gaussian, sigma 0.1", &gaussian, n, k);

    let worst = data.train.iter().map(|i| inv.worst_regret(&i.y)).sum::<lcgln::Result<f64>>()? / n as f64;
    println!("for scale, ordering nothing costs {worst:.3} on average");
    Ok(())
}
