//! Mean-variance portfolio with a full-investment constraint.
//!
//! `max_a  y^T a - gamma a^T Sigma a   s.t.  1^T a = 1`
//!
//! has the closed-form KKT solution
//! `a = Sigma^{-1} (y - lambda 1) / (2 gamma)` with
//! `lambda = (1^T Sigma^{-1} y - 2 gamma) / (1^T Sigma^{-1} 1)`,
//! which is affine in `y`. That makes the regret gradient w.r.t. the
//! prediction exact: `d regret / d pred = M (2 gamma Sigma a - y)` with
//! `M = (Sigma^{-1} - Sigma^{-1} 1 1^T Sigma^{-1} / (1^T Sigma^{-1} 1)) / (2 gamma)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use std::path::{Path, PathBuf};

use super::{Decision, DecisionProblem, Instance, Sense, SplitDataset};
use crate::error::{check_len, Error, Result};
use crate::net::{Activation, PredictionLoss};

/// Low-rank factor model `r_t = mu + L f_t + e_t` with AR(1) factors
/// `f_t = phi f_{t-1} + s eta_t`, so trailing returns carry signal about the
/// next period.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub periods: usize,
    pub factors: usize,
    pub persistence: f64,
    pub factor_scale: f64,
    pub loading_scale: f64,
    pub noise_scale: f64,
    pub drift_scale: f64,
}

impl Default for FactorModel {
    fn default() -> Self {
        Self {
            periods: 400,
            factors: 4,
            persistence: 0.8,
            factor_scale: 1.0,
            loading_scale: 1.0,
            noise_scale: 0.5,
            drift_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReturnsSource {
    Synthetic(FactorModel),
    /// Comma-separated file: a header row of asset identifiers, then one row
    /// of decimal returns per period.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioConfig {
    pub assets: usize,
    pub risk_aversion: f64,
    pub source: ReturnsSource,
    /// Number of trailing periods flattened into the feature vector.
    pub lookback: usize,
    /// Chronological train and validation fractions; the rest is test.
    pub train_fraction: f64,
    pub validation_fraction: f64,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self {
            assets: 50,
            risk_aversion: 0.1,
            source: ReturnsSource::Synthetic(FactorModel::default()),
            lookback: 5,
            train_fraction: 0.7,
            validation_fraction: 0.15,
        }
    }
}

impl PortfolioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Error::Config {
            field: field.into(),
            msg,
        };
        if self.assets < 2 {
            return Err(bad("assets", format!("need at least 2 assets, got {}", self.assets)));
        }
        if !(self.risk_aversion > 0.0) {
            return Err(bad("risk_aversion", format!("must be > 0, got {}", self.risk_aversion)));
        }
        if self.lookback == 0 {
            return Err(bad("lookback", "must be >= 1".into()));
        }
        let (t, v) = (self.train_fraction, self.validation_fraction);
        if !(t > 0.0 && v >= 0.0 && t + v < 1.0) {
            return Err(bad("train_fraction", "split fractions must leave a test set".into()));
        }
        if let ReturnsSource::Synthetic(m) = &self.source {
            if m.periods <= self.lookback + 2 || m.factors == 0 {
                return Err(bad("periods", "too few periods or factors for the lookback".into()));
            }
            if !(m.persistence.abs() < 1.0) {
                return Err(bad("persistence", "factor persistence must lie in (-1, 1)".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Portfolio {
    assets: usize,
    lookback: usize,
    gamma: f64,
    sigma: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `Sigma^{-1} 1`.
    inv_ones: DVector<f64>,
    /// `1^T Sigma^{-1} 1`.
    ones_inv_ones: f64,
}

/// Unbiased sample covariance of the rows of `returns`, plus `ridge * I`.
pub fn covariance_estimate(returns: &[Vec<f64>], ridge: f64) -> Result<DMatrix<f64>> {
    if returns.len() < 2 {
        return Err(Error::Contract(format!(
            "covariance needs at least 2 periods, got {}",
            returns.len()
        )));
    }
    let n = returns[0].len();
    for r in returns {
        check_len("return row", n, r.len())?;
    }
    let t = returns.len() as f64;
    let mut mean = vec![0.0; n];
    for r in returns {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / t);
    }
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for r in returns {
        let centered: Vec<f64> = r.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..n {
            for j in 0..=i {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let v = cov[(i, j)] / (t - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
        cov[(i, i)] += ridge;
    }
    Ok(cov)
}

/// `1e-4 * trace / n`, floored so a degenerate estimate still yields a
/// positive-definite matrix.
pub fn default_ridge(cov: &DMatrix<f64>) -> f64 {
    let n = cov.nrows() as f64;
    (1e-4 * cov.trace() / n).max(1e-10)
}

/// Reads the comma-separated returns format; ragged or non-numeric rows are
/// rejected with their position (1-based rows, header is row 1).
pub fn read_returns_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        Some(r) => r?.iter().map(|s| s.trim().to_string()).collect(),
        None => {
            return Err(Error::Ingest {
                row: 1,
                col: 1,
                msg: "empty file".into(),
            })
        }
    };
    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let record = record?;
        let row = i + 2;
        if record.len() != header.len() {
            return Err(Error::Ingest {
                row,
                col: record.len().min(header.len()) + 1,
                msg: format!("expected {} columns, found {}", header.len(), record.len()),
            });
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.trim().parse::<f64>().map_err(|e| Error::Ingest {
                    row,
                    col: j + 1,
                    msg: format!("`{field}` is not a number: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(values);
    }
    Ok((header, rows))
}

fn synthetic_returns<R: Rng + ?Sized>(assets: usize, m: &FactorModel, rng: &mut R) -> Vec<Vec<f64>> {
    let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
    let loadings: Vec<f64> = (0..assets * m.factors).map(|_| m.loading_scale * normal(rng)).collect();
    let drift: Vec<f64> = (0..assets).map(|_| m.drift_scale * normal(rng)).collect();
    let stationary = m.factor_scale / (1.0 - m.persistence * m.persistence).sqrt();
    let mut f: Vec<f64> = (0..m.factors).map(|_| stationary * normal(rng)).collect();
    (0..m.periods)
        .map(|_| {
            f.iter_mut()
                .for_each(|v| *v = m.persistence * *v + m.factor_scale * normal(rng));
            (0..assets)
                .map(|i| {
                    let common: f64 = loadings[i * m.factors..(i + 1) * m.factors]
                        .iter()
                        .zip(&f)
                        .map(|(l, fv)| l * fv)
                        .sum();
                    drift[i] + common + m.noise_scale * normal(rng)
                })
                .collect()
        })
        .collect()
}

impl Portfolio {
    pub fn new(sigma: DMatrix<f64>, risk_aversion: f64, lookback: usize) -> Result<Self> {
        let n = sigma.nrows();
        check_len("covariance columns", n, sigma.ncols())?;
        let asym = (&sigma - sigma.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(Error::Contract(format!("covariance is not symmetric (max gap {asym})")));
        }
        let chol = Cholesky::new(sigma.clone())
            .ok_or_else(|| Error::Solver("covariance is not positive definite; add a ridge".into()))?;
        let inv_ones = chol.solve(&DVector::from_element(n, 1.0));
        let ones_inv_ones = inv_ones.sum();
        Ok(Self {
            assets: n,
            lookback,
            gamma: risk_aversion,
            sigma,
            chol,
            inv_ones,
            ones_inv_ones,
        })
    }

    /// Builds the dataset from the configured return source. Features are the
    /// flattened trailing `lookback` returns, the target is the next return,
    /// and the covariance is estimated on the training targets.
    pub fn generate<R: Rng + ?Sized>(config: &PortfolioConfig, rng: &mut R) -> Result<(Self, SplitDataset)> {
        config.validate()?;
        let returns = match &config.source {
            ReturnsSource::Synthetic(m) => synthetic_returns(config.assets, m, rng),
            ReturnsSource::File(path) => read_returns_csv(path)?.1,
        };
        Self::from_returns(&returns, config)
    }

    pub fn from_returns(returns: &[Vec<f64>], config: &PortfolioConfig) -> Result<(Self, SplitDataset)> {
        let lookback = config.lookback;
        if returns.len() <= lookback + 2 {
            return Err(Error::Contract(format!(
                "{} periods are too few for lookback {lookback}",
                returns.len()
            )));
        }
        let n = returns[0].len();
        let all: Vec<Instance> = (lookback..returns.len())
            .map(|t| Instance {
                x: returns[t - lookback..t].concat(),
                y: returns[t].clone(),
                truth: None,
            })
            .collect();
        let train = ((all.len() as f64) * config.train_fraction).round() as usize;
        let validation = ((all.len() as f64) * config.validation_fraction).round() as usize;
        let data = SplitDataset::from_ordered(all, train.max(2), validation);
        let targets: Vec<Vec<f64>> = data.train.iter().map(|i| i.y.clone()).collect();
        let raw = covariance_estimate(&targets, 0.0)?;
        let mut sigma = raw.clone();
        let ridge = default_ridge(&raw);
        for i in 0..n {
            sigma[(i, i)] += ridge;
        }
        Ok((Self::new(sigma, config.risk_aversion, lookback)?, data))
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn risk_aversion(&self) -> f64 {
        self.gamma
    }

    /// Closed-form optimal weights for predicted returns.
    pub fn optimal_weights(&self, pred: &[f64]) -> Result<Vec<f64>> {
        check_len("return prediction", self.assets, pred.len())?;
        let w = self.chol.solve(&DVector::from_column_slice(pred));
        let lambda = (w.sum() - 2.0 * self.gamma) / self.ones_inv_ones;
        let a = (w - &self.inv_ones * lambda) / (2.0 * self.gamma);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite portfolio weights".into()));
        }
        Ok(a.as_slice().to_vec())
    }

    /// `y^T a - gamma a^T Sigma a`.
    pub fn mean_variance(&self, weights: &[f64], y: &[f64]) -> Result<f64> {
        check_len("weights", self.assets, weights.len())?;
        check_len("returns", self.assets, y.len())?;
        let a = DVector::from_column_slice(weights);
        let ret: f64 = weights.iter().zip(y).map(|(w, r)| w * r).sum();
        Ok(ret - self.gamma * a.dot(&(&self.sigma * &a)))
    }

    /// `M v` for the symmetric solution-map Jacobian `M`.
    fn jacobian_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let w = self.chol.solve(v);
        let coef = w.sum() / self.ones_inv_ones;
        (w - &self.inv_ones * coef) / (2.0 * self.gamma)
    }

    /// Exact gradient of the (unclamped) regret w.r.t. the prediction.
    pub fn regret_gradient(&self, pred: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_len("returns", self.assets, y.len())?;
        let a = DVector::from_column_slice(&self.optimal_weights(pred)?);
        // gradient of the task loss -(y^T a - gamma a^T Sigma a) w.r.t. a
        let da = &self.sigma * &a * (2.0 * self.gamma) - DVector::from_column_slice(y);
        Ok(self.jacobian_apply(&da).as_slice().to_vec())
    }

    /// The affine solution map `a(pred) = M pred + m` as `(M, m)`.
    pub fn solution_map(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.assets;
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            m.set_column(j, &self.jacobian_apply(&e));
        }
        (m, &self.inv_ones / self.ones_inv_ones)
    }
}

impl DecisionProblem for Portfolio {
    fn name(&self) -> &'static str {
        "portfolio"
    }

    fn feature_dim(&self) -> usize {
        self.assets * self.lookback
    }

    fn target_dim(&self) -> usize {
        self.assets
    }

    fn sense(&self) -> Sense {
        Sense::Maximize
    }

    fn output_activation(&self) -> Activation {
        Activation::Linear
    }

    fn prediction_loss(&self) -> PredictionLoss {
        PredictionLoss::Mse
    }

    fn solve(&self, pred: &[f64]) -> Result<Decision> {
        Ok(Decision::Weights(self.optimal_weights(pred)?))
    }

    fn objective(&self, decision: &Decision, y: &[f64]) -> Result<f64> {
        match decision {
            Decision::Weights(w) => self.mean_variance(w, y),
            other => Err(Error::Contract(format!("portfolio cannot score {other:?}"))),
        }
    }

    /// Everything in the asset with the lowest true return.
    fn worst_decision(&self, y: &[f64]) -> Result<Decision> {
        check_len("returns", self.assets, y.len())?;
        let worst = y
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v < y[best] { i } else { best });
        let mut w = vec![0.0; self.assets];
        w[worst] = 1.0;
        Ok(Decision::Weights(w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn two_asset_hand_solution() {
        let p = Portfolio::new(DMatrix::identity(2, 2), 0.1, 1).unwrap();
        let a = p.optimal_weights(&[0.2, 0.0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-12 && a[1].abs() < 1e-12);
    }

    #[test]
    fn constant_prediction_gives_uniform_weights() {
        let p = Portfolio::new(DMatrix::identity(5, 5), 0.1, 1).unwrap();
        let a = p.optimal_weights(&[0.3; 5]).unwrap();
        assert!(a.iter().all(|v| (v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn kkt_conditions_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let sigma = random_pd(8, &mut rng);
            let p = Portfolio::new(sigma.clone(), 0.1, 1).unwrap();
            let y: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = p.optimal_weights(&y).unwrap();
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            // stationarity: y - 2 gamma Sigma a = lambda 1
            let grad = DVector::from_column_slice(&y) - &sigma * DVector::from_column_slice(&a) * 0.2;
            let spread = grad.max() - grad.min();
            assert!(spread < 1e-8, "stationarity residual {spread}");
        }
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let sigma = DMatrix::from_element(3, 3, 1.0);
        assert!(matches!(Portfolio::new(sigma, 0.1, 1), Err(Error::Solver(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Portfolio::new(asym, 0.1, 1).is_err());
    }

    #[test]
    fn covariance_by_hand() {
        let returns = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 9.0]];
        // means (2, 5); centered (-1,-3), (0,-1), (1,4)
        // var0 = 2/2 = 1, var1 = (9+1+16)/2 = 13, cov = (3+0+4)/2 = 3.5
        let c = covariance_estimate(&returns, 0.01).unwrap();
        assert!((c[(0, 0)] - 1.01).abs() < 1e-12);
        assert!((c[(1, 1)] - 13.01).abs() < 1e-12);
        assert!((c[(0, 1)] - 3.5).abs() < 1e-12);
        assert!((c[(1, 0)] - 3.5).abs() < 1e-12);

        let flat = vec![vec![0.5, -0.2, 1.0]; 4];
        let c = covariance_estimate(&flat, 0.3).unwrap();
        assert_eq!(c, DMatrix::identity(3, 3) * 0.3);
        assert!(covariance_estimate(&flat[..1], 0.3).is_err());
    }

    #[test]
    fn covariance_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let c = covariance_estimate(&rows, 1e-4).unwrap();
        assert!((&c - c.transpose()).abs().max() <= 1e-12);
    }

    #[test]
    fn solution_map_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = Portfolio::new(random_pd(6, &mut rng), 0.1, 1).unwrap();
        let (m, offset) = p.solution_map();
        let y: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let via_map = &m * DVector::from_column_slice(&y) + offset;
        let direct = p.optimal_weights(&y).unwrap();
        for (a, b) in via_map.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((&m - m.transpose()).abs().max() < 1e-9);
    }

    #[test]
    fn worst_is_no_better_than_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = Portfolio::new(random_pd(5, &mut rng), 0.1, 1).unwrap();
        let y: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let best = p.objective(&p.solve(&y).unwrap(), &y).unwrap();
        assert!(p.worst_case_loss(&y).unwrap() <= best);
    }

    #[test]
    fn synthetic_generation() {
        let cfg = PortfolioConfig::default();
        let (p, data) = Portfolio::generate(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(p.target_dim(), 50);
        assert_eq!(p.feature_dim(), 250);
        let n = data.train.len() + data.validation.len() + data.test.len();
        assert_eq!(n, 400 - 5);
        assert_eq!(data.train.len(), (395.0f64 * 0.7).round() as usize);
        // chronological: the next instance's features end with this target
        assert_eq!(&data.train[1].x[200..250], data.train[0].y.as_slice());
        let (_, again) = Portfolio::generate(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn noiseless_one_factor_targets_are_rank_one() {
        let cfg = PortfolioConfig {
            assets: 6,
            source: ReturnsSource::Synthetic(FactorModel {
                periods: 40,
                factors: 1,
                noise_scale: 0.0,
                drift_scale: 0.0,
                ..FactorModel::default()
            }),
            ..PortfolioConfig::default()
        };
        let (_, data) = Portfolio::generate(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let rows: Vec<f64> = data.train.iter().flat_map(|i| i.y.clone()).collect();
        let m = DMatrix::from_row_slice(data.train.len(), 6, &rows);
        let sv = m.singular_values();
        let top = sv.max();
        assert!(sv.iter().filter(|s| **s > 1e-9 * top).count() == 1);
    }

    #[test]
    fn csv_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.csv");
        std::fs::write(&good, "AAA,BBB\n0.01,-0.02\n0.03,0.00\n").unwrap();
        let (names, rows) = read_returns_csv(&good).unwrap();
        assert_eq!(names, vec!["AAA", "BBB"]);
        assert_eq!(rows, vec![vec![0.01, -0.02], vec![0.03, 0.0]]);

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "AAA,BBB\n0.01,-0.02\n0.03\n").unwrap();
        match read_returns_csv(&ragged) {
            Err(Error::Ingest { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected ingest error, got {other:?}"),
        }

        let junk = dir.path().join("junk.csv");
        std::fs::write(&junk, "AAA,BBB\n0.01,abc\n").unwrap();
        match read_returns_csv(&junk) {
            Err(Error::Ingest { row, col, .. }) => assert_eq!((row, col), (2, 2)),
            other => panic!("expected ingest error, got {other:?}"),
        }
    }
}
