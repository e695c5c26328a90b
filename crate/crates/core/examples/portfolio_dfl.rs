//! On the portfolio problem the optimal weights are an affine function of the
//! predicted returns, so the true regret can be differentiated exactly and
//! used as the training loss. This compares that against fitting returns by
//! squared error, on a reduced instance so it finishes quickly.
//!
//! cargo run --release --example portfolio_dfl

use lcgln::problems::{Portfolio, PortfolioConfig};
use lcgln::train::{evaluate, init_predictor, train_dfl_portfolio, train_pfl, PredictorConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lcgln::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let config = PortfolioConfig {
        assets: 20,
        ..PortfolioConfig::default()
    };
    let (portfolio, data) = Portfolio::generate(&config, &mut rng)?;

    let mut predictor = PredictorConfig {
        hidden: vec![64],
        ..PredictorConfig::default()
    };
    predictor.train.epochs = 100;

    let untrained = init_predictor(&portfolio, &predictor, &mut rng)?;
    let rows = [
        ("untrained", evaluate(&untrained, &portfolio, &data.test)?),
        ("squared error", {
            let out = train_pfl(&portfolio, &data, &predictor, &mut rng)?;
            evaluate(&out.model, &portfolio, &data.test)?
        }),
        ("exact regret gradient", {
            let out = train_dfl_portfolio(&portfolio, &data, &predictor, &mut rng)?;
            evaluate(&out.model, &portfolio, &data.test)?
        }),
    ];
    println!("{:<22} {:>17} {:>15}", "training loss", "normalized regret", "prediction mse");
    for (label, e) in rows {
        println!("{label:<22} {:>17.4} {:>15.4}", e.normalized_regret, e.prediction_loss);
    }
    Ok(())
}
