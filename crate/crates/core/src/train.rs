//! Training paradigms and evaluation.
//!
//! * prediction-focused: fit the predictor to targets with NLL or MSE;
//! * analytic decision-focused (portfolio only): backpropagate the exact
//!   regret through the affine solution map;
//! * surrogate-based: sample triples, fit a convex-in-prediction surrogate to
//!   the regrets, then train the predictor through the surrogate's gradient.
//!
//! Every predictor keeps the epoch with the best validation score. Decision
//! methods select on true validation regret, the prediction-focused baseline
//! on its own prediction loss.

use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{check_finite, Error, Result};
use crate::net::{loss_and_grad, one_hot_class, prediction_loss, Activation, DenseNet, Loss, PredictionLoss};
use crate::optim::{optimizer_step, BatchMode, OptimizerState, TrainConfig};
use crate::picnn::{InputGate, Picnn};
use crate::problems::{normalized_regret, AnyProblem, DecisionProblem, Instance, Portfolio, SplitDataset};
use crate::sampling::{gaussian_generate, mbs_generate, SampleTriple, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pfl,
    DflPortfolio,
    Lcgln,
    LcglnGaussian,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pfl, Method::DflPortfolio, Method::Lcgln, Method::LcglnGaussian];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pfl => "pfl",
            Method::DflPortfolio => "dfl_portfolio",
            Method::Lcgln => "lcgln",
            Method::LcglnGaussian => "lcgln_gaussian",
        }
    }

    /// Whether the method's result depends on the sample count K.
    pub fn uses_samples(self) -> bool {
        matches!(self, Method::Lcgln | Method::LcglnGaussian)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config {
                field: "methods".into(),
                msg: format!("unknown method `{s}`"),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorConfig {
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub train: TrainConfig,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Keep a copy of the model after every epoch.
    pub keep_checkpoints: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![10],
            hidden_activation: Activation::Relu,
            train: TrainConfig {
                batch: BatchMode::PerInstance,
                ..TrainConfig::default()
            },
            patience: 30,
            keep_checkpoints: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// `None` picks a dense gate up to [`FULL_GATE_MAX_DIM`] target entries.
    pub gate: Option<InputGate>,
    pub train: TrainConfig,
    /// Divide regrets by their mean over the sample set before fitting.
    pub normalize_regret: bool,
}

/// Widest target that still gets a dense first-layer gate by default.
pub const FULL_GATE_MAX_DIM: usize = 128;

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden: vec![2],
            activation: Activation::Softplus,
            gate: None,
            train: TrainConfig {
                epochs: 50,
                batch: BatchMode::PerInstance,
                ..TrainConfig::default()
            },
            normalize_regret: true,
        }
    }
}

impl SurrogateConfig {
    pub fn gate_for(&self, dim: usize) -> InputGate {
        self.gate.unwrap_or(if dim <= FULL_GATE_MAX_DIM {
            InputGate::Full
        } else {
            InputGate::Diagonal
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerChoice {
    ModelBased(SamplerConfig),
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcglnConfig {
    pub sampler: SamplerChoice,
    pub surrogate: SurrogateConfig,
    pub predictor: PredictorConfig,
}

impl Default for LcglnConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerChoice::ModelBased(SamplerConfig::default()),
            surrogate: SurrogateConfig::default(),
            predictor: PredictorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Mean squared fitting error over the whole sample set after training.
    pub final_error: f64,
    /// Fitting error at the start of every epoch.
    pub trace: Vec<f64>,
    /// Mean `|L(y, y)|` over anchor triples.
    pub anchor_residual: f64,
    /// Epoch at which the loss stopped being finite; parameters were rolled
    /// back to the previous epoch.
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DenseNet,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Validation score after every epoch.
    pub validation: Vec<f64>,
    pub checkpoints: Vec<DenseNet>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub sample: Duration,
    pub fit: Duration,
    pub train: Duration,
}

#[derive(Debug, Clone)]
pub struct LcglnOutcome {
    pub predictor: TrainOutcome,
    pub samples: Vec<SampleTriple>,
    pub surrogate: Picnn,
    pub fit: FitReport,
    /// Regrets were divided by this before fitting.
    pub regret_scale: f64,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub normalized_regret: f64,
    pub mean_regret: f64,
    pub prediction_loss: f64,
}

/// Per-instance optimal losses and worst-case regrets, computed once so that
/// repeated evaluations only solve for the predictions.
pub struct RegretOracle<'a> {
    problem: &'a dyn DecisionProblem,
    instances: &'a [Instance],
    best: Vec<f64>,
    worst: Vec<f64>,
}

impl<'a> RegretOracle<'a> {
    pub fn new(problem: &'a dyn DecisionProblem, instances: &'a [Instance]) -> Result<Self> {
        let mut best = Vec::with_capacity(instances.len());
        let mut worst = Vec::with_capacity(instances.len());
        for inst in instances {
            let b = problem.task_loss(&problem.solve(&inst.y)?, &inst.y)?;
            let w = problem.task_loss(&problem.worst_decision(&inst.y)?, &inst.y)?;
            best.push(b);
            worst.push((w - b).max(0.0));
        }
        Ok(Self {
            problem,
            instances,
            best,
            worst,
        })
    }

    pub fn regret(&self, i: usize, pred: &[f64]) -> Result<f64> {
        let y = &self.instances[i].y;
        let chosen = self.problem.task_loss(&self.problem.solve(pred)?, y)?;
        Ok((chosen - self.best[i]).max(0.0))
    }

    pub fn worst_regrets(&self) -> &[f64] {
        &self.worst
    }

    /// Normalized and mean regret of a model over the instances.
    pub fn score(&self, model: &DenseNet) -> Result<(f64, f64)> {
        let regrets = self
            .instances
            .iter()
            .enumerate()
            .map(|(i, inst)| self.regret(i, &model.forward(&inst.x)?))
            .collect::<Result<Vec<_>>>()?;
        let mean = regrets.iter().sum::<f64>() / regrets.len().max(1) as f64;
        Ok((normalized_regret(&regrets, &self.worst)?, mean))
    }
}

pub fn evaluate(model: &DenseNet, problem: &dyn DecisionProblem, instances: &[Instance]) -> Result<Evaluation> {
    let oracle = RegretOracle::new(problem, instances)?;
    let (normalized, mean) = oracle.score(model)?;
    let kind = problem.prediction_loss();
    let mut loss = 0.0;
    for inst in instances {
        loss += prediction_loss(&model.forward(&inst.x)?, &inst.y, kind)?;
    }
    Ok(Evaluation {
        normalized_regret: normalized,
        mean_regret: mean,
        prediction_loss: loss / instances.len().max(1) as f64,
    })
}

pub fn init_predictor<R: Rng + ?Sized>(
    problem: &dyn DecisionProblem,
    config: &PredictorConfig,
    rng: &mut R,
) -> Result<DenseNet> {
    build_mlp(problem, &config.hidden, config.hidden_activation, rng)
}

/// The predictive architecture for `problem`, also mirrored by the sampler.
pub fn build_mlp<R: Rng + ?Sized>(
    problem: &dyn DecisionProblem,
    hidden: &[usize],
    hidden_activation: Activation,
    rng: &mut R,
) -> Result<DenseNet> {
    let rows = problem.shared_rows();
    if rows == 0 || problem.feature_dim() % rows != 0 || problem.target_dim() % rows != 0 {
        return Err(Error::Contract(format!(
            "{}: {} shared rows do not divide the feature and target sizes",
            problem.name(),
            rows
        )));
    }
    let mut sizes = vec![problem.feature_dim() / rows];
    sizes.extend(hidden);
    sizes.push(problem.target_dim() / rows);
    DenseNet::mlp(&sizes, hidden_activation, problem.output_activation(), rng)?.with_shared_rows(rows)
}

/// Shared epoch loop. `upstream` maps `(instance, model output)` to the loss
/// value and its gradient w.r.t. the output; `score` rates a model on the
/// validation split (lower is better).
fn fit_predictor(
    mut model: DenseNet,
    train: &[Instance],
    config: &PredictorConfig,
    mut upstream: impl FnMut(&Instance, &[f64]) -> Result<(f64, Vec<f64>)>,
    mut score: impl FnMut(&DenseNet) -> Result<f64>,
) -> Result<TrainOutcome> {
    config.train.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("training split is empty".into()));
    }
    let n = train.len() as f64;
    let mut state = OptimizerState::new(model.param_count());
    let mut grad = vec![0.0; model.param_count()];
    let mut validation = Vec::new();
    let mut checkpoints = Vec::new();
    let mut best: Option<(f64, usize, DenseNet)> = None;

    for epoch in 0..config.train.epochs {
        grad.fill(0.0);
        let mut epoch_loss = 0.0;
        for inst in train {
            let trace = model.forward_trace(&inst.x)?;
            let (loss, mut up) = upstream(inst, trace.output())?;
            epoch_loss += loss;
            match config.train.batch {
                BatchMode::Full => {
                    up.iter_mut().for_each(|g| *g /= n);
                    model.backward_into(&trace, &up, &mut grad)?;
                }
                BatchMode::PerInstance => {
                    grad.fill(0.0);
                    model.backward_into(&trace, &up, &mut grad)?;
                    optimizer_step(model.params_mut(), &grad, &mut state, &config.train)?;
                }
            }
        }
        if config.train.batch == BatchMode::Full {
            optimizer_step(model.params_mut(), &grad, &mut state, &config.train)?;
        }
        let val = score(&model)?;
        debug!("epoch {epoch}: train loss {:.6}, validation {val:.6}", epoch_loss / n);
        check_finite("validation score", &[val])?;
        validation.push(val);
        if config.keep_checkpoints {
            checkpoints.push(model.clone());
        }
        match &best {
            Some((b, _, _)) if val >= *b => {}
            _ => best = Some((val, epoch, model.clone())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch - best_epoch >= config.patience {
            break;
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        best_epoch,
        validation,
        checkpoints,
    })
}

/// Picks the model-selection split: validation when present, else training.
fn selection_split(data: &SplitDataset) -> &[Instance] {
    if data.validation.is_empty() {
        &data.train
    } else {
        &data.validation
    }
}

/// Prediction-focused baseline: NLL or MSE against the targets, keeping the
/// epoch with the lowest validation prediction loss.
pub fn train_pfl<R: Rng + ?Sized>(
    problem: &dyn DecisionProblem,
    data: &SplitDataset,
    config: &PredictorConfig,
    rng: &mut R,
) -> Result<TrainOutcome> {
    let model = init_predictor(problem, config, rng)?;
    let kind = problem.prediction_loss();
    let val = selection_split(data);
    fit_predictor(
        model,
        &data.train,
        config,
        |inst, out| match kind {
            PredictionLoss::Nll => loss_and_grad(out, Loss::Nll(one_hot_class(&inst.y)?)),
            PredictionLoss::Mse => loss_and_grad(out, Loss::Mse(&inst.y)),
        },
        |m| {
            let mut total = 0.0;
            for inst in val {
                total += prediction_loss(&m.forward(&inst.x)?, &inst.y, kind)?;
            }
            Ok(total / val.len() as f64)
        },
    )
}

/// Decision-focused training through the closed-form portfolio solution.
pub fn train_dfl_portfolio<R: Rng + ?Sized>(
    problem: &Portfolio,
    data: &SplitDataset,
    config: &PredictorConfig,
    rng: &mut R,
) -> Result<TrainOutcome> {
    let model = init_predictor(problem, config, rng)?;
    let oracle = RegretOracle::new(problem, selection_split(data))?;
    fit_predictor(
        model,
        &data.train,
        config,
        |inst, out| {
            let value = problem.regret_unclamped(out, &inst.y)?;
            Ok((value, problem.regret_gradient(out, &inst.y)?))
        },
        |m| Ok(oracle.score(m)?.0),
    )
}

/// Fits the surrogate to the triples by minimizing the mean squared error
/// between its output and the regret, projecting the constrained weights
/// after every step.
pub fn fit_surrogate(mut model: Picnn, samples: &[SampleTriple], config: &TrainConfig) -> Result<(Picnn, FitReport)> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Contract("cannot fit a surrogate to zero samples".into()));
    }
    model.enforce_nonnegativity();
    let n = samples.len() as f64;
    let mut state = OptimizerState::new(model.param_count());
    let mut grad = vec![0.0; model.param_count()];
    let mut trace = Vec::with_capacity(config.epochs);
    let mut diverged_at = None;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffler = ChaCha8Rng::seed_from_u64(config.seed);

    for epoch in 0..config.epochs {
        let last_good = model.params().to_vec();
        let mut sse = 0.0;
        let mut failed = None;
        match config.batch {
            BatchMode::Full => {
                grad.fill(0.0);
                for s in samples {
                    let v = model.accumulate_param_grad(&s.pred, &s.target, |v| 2.0 * (v - s.regret) / n, &mut grad)?;
                    sse += (v - s.regret).powi(2);
                }
                if let Err(e) = optimizer_step(model.params_mut(), &grad, &mut state, config) {
                    failed = Some(e);
                }
            }
            BatchMode::PerInstance => {
                // Samples are stored anchors first, then one block per sampler
                // epoch; visiting them in that order would bias the fit
                // toward the last block.
                order.shuffle(&mut shuffler);
                for s in order.iter().map(|&i| &samples[i]) {
                    grad.fill(0.0);
                    let v = model.accumulate_param_grad(&s.pred, &s.target, |v| 2.0 * (v - s.regret), &mut grad)?;
                    sse += (v - s.regret).powi(2);
                    if let Err(e) = optimizer_step(model.params_mut(), &grad, &mut state, config) {
                        failed = Some(e);
                        break;
                    }
                    model.enforce_nonnegativity();
                }
            }
        }
        model.enforce_nonnegativity();
        let loss = sse / n;
        if failed.is_some() || !loss.is_finite() || model.params().iter().any(|v| !v.is_finite()) {
            model.params_mut().copy_from_slice(&last_good);
            diverged_at = Some(epoch);
            break;
        }
        trace.push(loss);
    }

    let mut sse = 0.0;
    let mut anchor_abs = 0.0;
    let mut anchor_count = 0usize;
    for s in samples {
        let v = model.forward(&s.pred, &s.target)?;
        sse += (v - s.regret).powi(2);
        if s.is_anchor() {
            anchor_abs += v.abs();
            anchor_count += 1;
        }
    }
    let report = FitReport {
        final_error: sse / n,
        trace,
        anchor_residual: if anchor_count == 0 {
            0.0
        } else {
            anchor_abs / anchor_count as f64
        },
        diverged_at,
    };
    Ok((model, report))
}

/// Surrogate value at `(model(x), y)` and its gradient w.r.t. the predictor
/// parameters.
pub fn surrogate_loss_grad(model: &DenseNet, surrogate: &Picnn, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let trace = model.forward_trace(x)?;
    let (value, up) = surrogate.pred_grad(trace.output(), y)?;
    let mut grad = vec![0.0; model.param_count()];
    model.backward_into(&trace, &up, &mut grad)?;
    Ok((value, grad))
}

/// Sample generation, surrogate fitting and predictor training in sequence.
pub fn train_lcgln<R: Rng + ?Sized>(
    problem: &dyn DecisionProblem,
    data: &SplitDataset,
    k: usize,
    config: &LcglnConfig,
    rng: &mut R,
) -> Result<LcglnOutcome> {
    let started = Instant::now();
    let samples = match &config.sampler {
        SamplerChoice::ModelBased(s) => mbs_generate(&data.train, problem, s, k, rng)?,
        SamplerChoice::Gaussian { sigma } => gaussian_generate(&data.train, problem, *sigma, k, rng)?,
    };
    let sample_time = started.elapsed();

    let started = Instant::now();
    let mean_regret = samples.iter().map(|s| s.regret).sum::<f64>() / samples.len().max(1) as f64;
    let regret_scale = if config.surrogate.normalize_regret && mean_regret > 0.0 {
        mean_regret
    } else {
        1.0
    };
    let scaled: Vec<SampleTriple> = samples
        .iter()
        .map(|s| SampleTriple {
            regret: s.regret / regret_scale,
            ..s.clone()
        })
        .collect();
    let dim = problem.target_dim();
    let init = Picnn::new(
        dim,
        &config.surrogate.hidden,
        config.surrogate.activation,
        config.surrogate.gate_for(dim),
        rng,
    )?;
    let fit_config = TrainConfig {
        seed: rng.gen(),
        ..config.surrogate.train.clone()
    };
    let (surrogate, fit) = fit_surrogate(init, &scaled, &fit_config)?;
    if let Some(epoch) = fit.diverged_at {
        return Err(Error::NonFinite(format!(
            "surrogate fit diverged at epoch {epoch} (last finite error {:?})",
            fit.trace.last()
        )));
    }
    let fit_time = started.elapsed();

    let started = Instant::now();
    let model = init_predictor(problem, &config.predictor, rng)?;
    let oracle = RegretOracle::new(problem, selection_split(data))?;
    let predictor = fit_predictor(
        model,
        &data.train,
        &config.predictor,
        |inst, out| surrogate.pred_grad(out, &inst.y),
        |m| Ok(oracle.score(m)?.0),
    )?;
    Ok(LcglnOutcome {
        predictor,
        samples,
        surrogate,
        fit,
        regret_scale,
        timings: StageTimings {
            sample: sample_time,
            fit: fit_time,
            train: started.elapsed(),
        },
    })
}

/// Trains `method` on `problem`; surrogate methods use `k` samples per instance.
pub fn train_method<R: Rng + ?Sized>(
    method: Method,
    problem: &AnyProblem,
    data: &SplitDataset,
    k: usize,
    config: &LcglnConfig,
    gaussian_sigma: f64,
    rng: &mut R,
) -> Result<(TrainOutcome, StageTimings)> {
    let started = Instant::now();
    match method {
        Method::Pfl => {
            let out = train_pfl(problem.as_dyn(), data, &config.predictor, rng)?;
            Ok((
                out,
                StageTimings {
                    train: started.elapsed(),
                    ..StageTimings::default()
                },
            ))
        }
        Method::DflPortfolio => {
            let portfolio = problem.as_portfolio().ok_or_else(|| {
                Error::Contract(format!(
                    "dfl_portfolio only applies to the portfolio problem, not {}",
                    problem.as_dyn().name()
                ))
            })?;
            let out = train_dfl_portfolio(portfolio, data, &config.predictor, rng)?;
            Ok((
                out,
                StageTimings {
                    train: started.elapsed(),
                    ..StageTimings::default()
                },
            ))
        }
        Method::Lcgln | Method::LcglnGaussian => {
            let cfg = if method == Method::LcglnGaussian {
                LcglnConfig {
                    sampler: SamplerChoice::Gaussian { sigma: gaussian_sigma },
                    ..config.clone()
                }
            } else {
                config.clone()
            };
            let out = train_lcgln(problem.as_dyn(), data, k, &cfg, rng)?;
            Ok((out.predictor, out.timings))
        }
    }
}
