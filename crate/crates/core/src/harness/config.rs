//! Experiment configuration: a flat TOML table, validated as a whole before
//! any run starts.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::net::Activation;
use crate::optim::{BatchMode, Optimizer, TrainConfig};
use crate::picnn::InputGate;
use crate::problems::portfolio::FactorModel;
use crate::problems::{
    BudgetConfig, InventoryConfig, PortfolioConfig, ProblemKind, ReturnsSource, SplitSizes,
};
use crate::sampling::SamplerConfig;
use crate::train::{LcglnConfig, Method, PredictorConfig, SamplerChoice, SurrogateConfig};

/// Sample counts the grid may sweep over.
pub const ALLOWED_SAMPLES: [usize; 5] = [2, 4, 8, 16, 32];
/// Fake-target counts the budget grid may sweep over.
pub const ALLOWED_FAKES: [usize; 4] = [0, 5, 50, 500];
/// Environment variable naming the default output root.
pub const OUTPUT_DIR_ENV: &str = "LCGLN_OUTPUT_DIR";

/// What a repetition reseeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Reseed {
    /// Fresh data and fresh model initialization per seed.
    #[default]
    #[serde(rename = "data+model")]
    DataAndModel,
    /// Data fixed by `base_seed`; only model initialization and training vary.
    #[serde(rename = "model-only")]
    ModelOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BatchKey {
    Full,
    #[default]
    PerInstance,
}

impl From<BatchKey> for BatchMode {
    fn from(b: BatchKey) -> Self {
        match b {
            BatchKey::Full => BatchMode::Full,
            BatchKey::PerInstance => BatchMode::PerInstance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GateKey {
    #[default]
    Auto,
    Full,
    Diagonal,
}

/// Every knob of an experiment grid. Keys left out of the file take the
/// defaults below; `None` fields resolve per problem in [`ExperimentConfig::resolved`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: String,
    pub methods: Vec<String>,
    pub samples: Vec<usize>,
    pub fakes: Vec<usize>,
    pub seeds: usize,
    pub base_seed: u64,
    pub reseed: Reseed,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 means the available parallelism.
    pub workers: usize,

    pub train_size: Option<usize>,
    pub validation_size: Option<usize>,
    pub test_size: Option<usize>,

    pub inventory_features: usize,
    pub budget_users: usize,
    pub budget_websites: usize,
    pub budget_size: usize,
    pub portfolio_assets: usize,
    pub risk_aversion: f64,
    pub lookback: usize,
    pub periods: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub returns_file: Option<PathBuf>,

    pub predictor_hidden: Option<Vec<usize>>,
    pub predictor_lr: f64,
    pub predictor_epochs: usize,
    pub predictor_batch: BatchKey,
    pub patience: usize,

    pub sampler_lr: Option<f64>,
    pub gaussian_sigma: f64,

    pub surrogate_hidden: Vec<usize>,
    pub surrogate_lr: f64,
    pub surrogate_epochs: usize,
    pub surrogate_batch: BatchKey,
    pub surrogate_gate: GateKey,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let factor = FactorModel::default();
        let portfolio = PortfolioConfig::default();
        Self {
            problem: "inventory".into(),
            methods: vec!["pfl".into(), "lcgln".into()],
            samples: vec![32],
            fakes: vec![0],
            seeds: 5,
            base_seed: 0,
            reseed: Reseed::default(),
            out_dir: None,
            workers: 0,
            train_size: None,
            validation_size: None,
            test_size: None,
            inventory_features: InventoryConfig::default().feature_dim,
            budget_users: BudgetConfig::default().users,
            budget_websites: BudgetConfig::default().websites,
            budget_size: BudgetConfig::default().budget,
            portfolio_assets: portfolio.assets,
            risk_aversion: portfolio.risk_aversion,
            lookback: portfolio.lookback,
            periods: factor.periods,
            train_fraction: portfolio.train_fraction,
            validation_fraction: portfolio.validation_fraction,
            returns_file: None,
            predictor_hidden: None,
            predictor_lr: 1e-3,
            predictor_epochs: 300,
            predictor_batch: BatchKey::PerInstance,
            patience: 30,
            sampler_lr: None,
            gaussian_sigma: 0.1,
            surrogate_hidden: vec![2],
            surrogate_lr: 1e-3,
            surrogate_epochs: 50,
            surrogate_batch: BatchKey::PerInstance,
            surrogate_gate: GateKey::Auto,
        }
    }
}

fn bad(field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        msg: msg.into(),
    }
}

/// Sampler learning rate per problem. Inventory and budget were picked from
/// {0.01, 0.05, 0.1, 0.5, 1} by validation regret. Every value on that grid
/// diverges on the synthetic portfolio features, whose squared norm is in
/// the thousands, so portfolio uses the largest stable step found.
pub fn default_sampler_lr(problem: ProblemKind) -> f64 {
    match problem {
        ProblemKind::Inventory => 1.0,
        ProblemKind::Budget => 0.1,
        ProblemKind::Portfolio => 1e-3,
    }
}

pub fn default_predictor_hidden(problem: ProblemKind) -> Vec<usize> {
    match problem {
        ProblemKind::Portfolio => vec![500],
        _ => vec![10],
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field"))
                .unwrap_or("config")
                .to_string();
            Error::Config { field, msg }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            field: "config".into(),
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn problem_kind(&self) -> Result<ProblemKind> {
        self.problem.parse()
    }

    pub fn method_tags(&self) -> Result<Vec<Method>> {
        self.methods
            .iter()
            .map(|m| m.parse::<Method>().map_err(|_| bad("methods", format!("unknown method `{m}`"))))
            .collect()
    }

    /// Output directory: the configured one, else `$LCGLN_OUTPUT_DIR`, else `runs`.
    pub fn output_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    /// Fills the per-problem defaults so that the echo and the hash show
    /// every value actually used.
    pub fn resolved(&self) -> Result<Self> {
        let kind = self.problem_kind()?;
        let mut out = self.clone();
        out.predictor_hidden.get_or_insert_with(|| default_predictor_hidden(kind));
        out.sampler_lr.get_or_insert(default_sampler_lr(kind));
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.problem_kind()?;
        let methods = self.method_tags()?;
        if methods.is_empty() {
            return Err(bad("methods", "at least one method is required"));
        }
        if kind != ProblemKind::Portfolio && methods.contains(&Method::DflPortfolio) {
            return Err(bad("methods", "dfl_portfolio only applies to the portfolio problem"));
        }
        if self.samples.is_empty() {
            return Err(bad("samples", "at least one sample count is required"));
        }
        if let Some(k) = self.samples.iter().find(|k| !ALLOWED_SAMPLES.contains(k)) {
            return Err(bad("samples", format!("sample count {k} is not one of {ALLOWED_SAMPLES:?}")));
        }
        if self.fakes.is_empty() {
            return Err(bad("fakes", "at least one fake-target count is required"));
        }
        if let Some(f) = self.fakes.iter().find(|f| !ALLOWED_FAKES.contains(f)) {
            return Err(bad("fakes", format!("fake-target count {f} is not one of {ALLOWED_FAKES:?}")));
        }
        if kind != ProblemKind::Budget && self.fakes.iter().any(|&f| f != 0) {
            return Err(bad("fakes", "fake targets only apply to the budget problem"));
        }
        if self.seeds == 0 {
            return Err(bad("seeds", "seed count must be >= 1"));
        }
        if !(self.gaussian_sigma >= 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(bad("gaussian_sigma", format!("must be >= 0, got {}", self.gaussian_sigma)));
        }
        if let Some(lr) = self.sampler_lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(bad("sampler_lr", format!("must be > 0, got {lr}")));
            }
        }
        if self.predictor_hidden.as_ref().is_some_and(|h| h.contains(&0)) {
            return Err(bad("predictor_hidden", "hidden widths must be >= 1"));
        }
        if self.surrogate_hidden.is_empty() || self.surrogate_hidden.contains(&0) {
            return Err(bad("surrogate_hidden", "need at least one hidden layer of width >= 1"));
        }
        for (field, lr) in [("predictor_lr", self.predictor_lr), ("surrogate_lr", self.surrogate_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(bad(field, format!("must be > 0, got {lr}")));
            }
        }
        for (field, n) in [
            ("predictor_epochs", self.predictor_epochs),
            ("surrogate_epochs", self.surrogate_epochs),
        ] {
            if n == 0 {
                return Err(bad(field, "must be >= 1"));
            }
        }
        if self.train_size == Some(0) {
            return Err(bad("train_size", "must be >= 1"));
        }
        match kind {
            ProblemKind::Inventory => self.inventory_config()?.validate(),
            ProblemKind::Budget => {
                for &f in &self.fakes {
                    self.budget_config(f).validate()?;
                }
                Ok(())
            }
            ProblemKind::Portfolio => {
                if let Some(path) = &self.returns_file {
                    if !path.is_file() {
                        return Err(bad("returns_file", format!("{} is not a file", path.display())));
                    }
                }
                self.portfolio_config().validate()
            }
        }
    }

    fn split(&self, default: SplitSizes) -> SplitSizes {
        SplitSizes {
            train: self.train_size.unwrap_or(default.train),
            validation: self.validation_size.unwrap_or(default.validation),
            test: self.test_size.unwrap_or(default.test),
        }
    }

    pub fn inventory_config(&self) -> Result<InventoryConfig> {
        let base = InventoryConfig::default();
        if self.inventory_features == 0 {
            return Err(bad("inventory_features", "must be >= 1"));
        }
        Ok(InventoryConfig {
            feature_dim: self.inventory_features,
            split: self.split(base.split),
            ..base
        })
    }

    pub fn budget_config(&self, fakes: usize) -> BudgetConfig {
        let base = BudgetConfig::default();
        BudgetConfig {
            users: self.budget_users,
            websites: self.budget_websites,
            budget: self.budget_size,
            fakes,
            mixing: None,
            split: self.split(base.split),
        }
    }

    pub fn portfolio_config(&self) -> PortfolioConfig {
        let source = match &self.returns_file {
            Some(path) => ReturnsSource::File(path.clone()),
            None => ReturnsSource::Synthetic(FactorModel {
                periods: self.periods,
                ..FactorModel::default()
            }),
        };
        PortfolioConfig {
            assets: self.portfolio_assets,
            risk_aversion: self.risk_aversion,
            source,
            lookback: self.lookback,
            train_fraction: self.train_fraction,
            validation_fraction: self.validation_fraction,
        }
    }

    /// Training settings of every stage; call on a resolved config.
    pub fn lcgln_config(&self) -> Result<LcglnConfig> {
        let kind = self.problem_kind()?;
        let predictor = PredictorConfig {
            hidden: self
                .predictor_hidden
                .clone()
                .unwrap_or_else(|| default_predictor_hidden(kind)),
            hidden_activation: Activation::Relu,
            train: TrainConfig {
                lr: self.predictor_lr,
                epochs: self.predictor_epochs,
                optimizer: Optimizer::adam(),
                seed: self.base_seed,
                batch: self.predictor_batch.into(),
            },
            patience: self.patience,
            keep_checkpoints: false,
        };
        let sampler = SamplerConfig {
            hidden: predictor.hidden.clone(),
            lr: self.sampler_lr.unwrap_or_else(|| default_sampler_lr(kind)),
            ..SamplerConfig::default()
        };
        let surrogate = SurrogateConfig {
            hidden: self.surrogate_hidden.clone(),
            activation: Activation::Softplus,
            gate: match self.surrogate_gate {
                GateKey::Auto => None,
                GateKey::Full => Some(InputGate::Full),
                GateKey::Diagonal => Some(InputGate::Diagonal),
            },
            train: TrainConfig {
                lr: self.surrogate_lr,
                epochs: self.surrogate_epochs,
                optimizer: Optimizer::adam(),
                seed: self.base_seed,
                batch: self.surrogate_batch.into(),
            },
            normalize_regret: true,
        };
        Ok(LcglnConfig {
            sampler: SamplerChoice::ModelBased(sampler),
            surrogate,
            predictor,
        })
    }

    /// The effective configuration as TOML, for the startup echo.
    pub fn echo(&self) -> Result<String> {
        toml::to_string(&self.resolved()?).map_err(|e| Error::Format(e.to_string()))
    }

    /// Hash of everything that determines a run's numbers apart from the
    /// seed: the resolved settings minus the grid lists, seed count, output
    /// location and worker count, plus the run's own method, K and fakes.
    pub fn setting_hash(&self, method: Method, samples: usize, fakes: usize) -> Result<String> {
        let mut shared = self.resolved()?;
        shared.methods = vec![method.as_str().into()];
        shared.samples = vec![samples];
        shared.fakes = vec![fakes];
        shared.seeds = 1;
        shared.out_dir = None;
        shared.workers = 0;
        let text = toml::to_string(&shared).map_err(|e| Error::Format(e.to_string()))?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_names_the_key() {
        match ExperimentConfig::from_toml_str("problem = \"budget\"\nlearning_rate = 0.1\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "learning_rate"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn sample_count_outside_the_sweep_is_rejected() {
        let cfg = ExperimentConfig::from_toml_str("samples = [2, 3]").unwrap();
        match cfg.validate() {
            Err(Error::Config { field, msg }) => {
                assert_eq!(field, "samples");
                assert!(msg.contains('3'));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn fakes_need_the_budget_problem() {
        let cfg = ExperimentConfig::from_toml_str("fakes = [5]").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "fakes"));
        let cfg = ExperimentConfig::from_toml_str("problem = \"budget\"\nfakes = [0, 7]").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "fakes"));
    }

    #[test]
    fn dfl_only_for_portfolio() {
        let cfg = ExperimentConfig::from_toml_str("methods = [\"dfl_portfolio\"]").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "methods"));
    }

    #[test]
    fn hash_ignores_bookkeeping_but_not_settings() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            seeds: 9,
            workers: 3,
            out_dir: Some("elsewhere".into()),
            samples: vec![2, 32],
            ..a.clone()
        };
        let h = |c: &ExperimentConfig| c.setting_hash(Method::Lcgln, 32, 0).unwrap();
        assert_eq!(h(&a), h(&b));
        let c = ExperimentConfig {
            surrogate_lr: 0.01,
            ..a.clone()
        };
        assert_ne!(h(&a), h(&c));
        assert_ne!(h(&a), a.setting_hash(Method::Lcgln, 16, 0).unwrap());
        // an explicit default and an omitted key hash alike
        let d = ExperimentConfig {
            sampler_lr: Some(default_sampler_lr(ProblemKind::Inventory)),
            ..a.clone()
        };
        assert_eq!(h(&a), h(&d));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::from_toml_str("problem = \"portfolio\"\nmethods = [\"dfl_portfolio\"]").unwrap();
        let echoed = ExperimentConfig::from_toml_str(&cfg.echo().unwrap()).unwrap();
        assert_eq!(echoed, cfg.resolved().unwrap());
        assert_eq!(echoed.predictor_hidden, Some(vec![500]));
    }
}
