//! A partially input-convex network is convex in the prediction for every
//! fixed target, however its weights were set, as long as the hidden-to-hidden
//! weights stay non-negative. Here a random one is probed on midpoints, then
//! a negative weight is forced in to show the property break, and finally the
//! projection restores it.
//!
//! cargo run --example picnn_convexity

use lcgln::net::Activation;
use lcgln::picnn::{InputGate, Picnn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest amount by which `f((a+b)/2)` exceeds `(f(a)+f(b))/2`.
fn worst_midpoint_gap(model: &Picnn, rng: &mut ChaCha8Rng, trials: usize) -> f64 {
    let d = model.dim();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let mut draw = || (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<f64>>();
        let (y, a, b) = (draw(), draw(), draw());
        let mid: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect();
        let f = |p: &[f64]| model.forward(p, &y).unwrap();
        worst = worst.max(f(&mid) - 0.5 * (f(&a) + f(&b)));
    }
    worst
}

fn main() -> lcgln::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut model = Picnn::new(4, &[8, 8], Activation::Softplus, InputGate::Full, &mut rng)?;
    println!("{} parameters, feasible: {}", model.param_count(), model.is_feasible());
    println!("worst midpoint gap, random weights: {:+.3e}", worst_midpoint_gap(&model, &mut rng, 1000));

    // Push every constrained weight strongly negative.
    for range in model.constrained_ranges() {
        model.params_mut()[range].iter_mut().for_each(|w| *w = -3.0 * w.abs() - 1.0);
    }
    println!(
        "after forcing negative weights, feasible: {}, worst gap {:+.3e}",
        model.is_feasible(),
        worst_midpoint_gap(&model, &mut rng, 1000)
    );

    model.enforce_nonnegativity();
    println!(
        "after projection, feasible: {}, worst gap {:+.3e}",
        model.is_feasible(),
        worst_midpoint_gap(&model, &mut rng, 1000)
    );

    let path = std::env::temp_dir().join("picnn_convexity_example.txt");
    model.save(&path)?;
    let back = Picnn::load(&path)?;
    println!("saved to {} and reloaded identically: {}", path.display(), back.params() == model.params());
    Ok(())
}
