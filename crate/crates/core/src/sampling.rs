//! Surrogate training sets: `(prediction, target, regret)` triples.
//!
//! Both samplers start with one zero-regret anchor `(y, y, 0)` per instance
//! and then add `K - 1` rounds of perturbed predictions, so a set built from
//! `N` instances always holds `N * K` triples when every solve succeeds.

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use std::path::{Path, PathBuf};

use crate::error::{check_len, Error, Result};
use crate::net::{loss_and_grad, Activation, Loss};
use crate::optim::{optimizer_step, BatchMode, Optimizer, OptimizerState, TrainConfig};
use crate::problems::{DecisionProblem, Instance};
use crate::train::build_mlp;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTriple {
    pub pred: Vec<f64>,
    pub target: Vec<f64>,
    pub regret: f64,
}

impl SampleTriple {
    pub fn is_anchor(&self) -> bool {
        self.regret == 0.0 && self.pred == self.target
    }
}

/// Settings of the model-based sampler. The sampling model mirrors the
/// predictive architecture and is trained per instance with MSE.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub lr: f64,
    pub optimizer: Optimizer,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            hidden: vec![10],
            hidden_activation: Activation::Relu,
            lr: 0.1,
            optimizer: Optimizer::Sgd,
        }
    }
}

/// One `(y, y, 0)` triple per instance.
pub fn anchors(instances: &[Instance]) -> Vec<SampleTriple> {
    instances
        .iter()
        .map(|inst| SampleTriple {
            pred: inst.y.clone(),
            target: inst.y.clone(),
            regret: 0.0,
        })
        .collect()
}

fn push_scored(
    out: &mut Vec<SampleTriple>,
    problem: &dyn DecisionProblem,
    pred: Vec<f64>,
    target: &[f64],
) {
    match problem.regret(&pred, target) {
        Ok(regret) => out.push(SampleTriple {
            pred,
            target: target.to_vec(),
            regret,
        }),
        Err(e) => warn!("skipping sample: regret evaluation failed: {e}"),
    }
}

/// Model-based sampling over `instances`.
///
/// Each of the `k - 1` epochs walks the instances in order; the sampler's
/// output for an instance is recorded before the MSE update on that
/// instance, then scored with the exact regret.
pub fn mbs_generate<R: Rng + ?Sized>(
    instances: &[Instance],
    problem: &dyn DecisionProblem,
    config: &SamplerConfig,
    k: usize,
    rng: &mut R,
) -> Result<Vec<SampleTriple>> {
    if k == 0 {
        return Err(Error::Contract("sample count K must be >= 1".into()));
    }
    let mut sampler = build_mlp(problem, &config.hidden, config.hidden_activation, rng)?;
    let train = TrainConfig {
        lr: config.lr,
        epochs: k.max(2) - 1,
        optimizer: config.optimizer,
        seed: 0,
        batch: BatchMode::PerInstance,
    };
    train.validate()?;
    let mut state = OptimizerState::new(sampler.param_count());

    let mut grad = vec![0.0; sampler.param_count()];
    let mut out = anchors(instances);
    out.reserve(instances.len() * (k - 1));
    for _ in 1..k {
        for inst in instances {
            check_len("instance target", problem.target_dim(), inst.y.len())?;
            let trace = sampler.forward_trace(&inst.x)?;
            let pred = trace.output().to_vec();
            let (_, upstream) = loss_and_grad(&pred, Loss::Mse(&inst.y))?;
            grad.fill(0.0);
            sampler.backward_into(&trace, &upstream, &mut grad)?;
            optimizer_step(sampler.params_mut(), &grad, &mut state, &train)?;
            push_scored(&mut out, problem, pred, &inst.y);
        }
    }
    Ok(out)
}

/// Gaussian perturbations `y + sigma * eta` of the true targets, mapped back
/// onto the valid target set of the problem.
pub fn gaussian_generate<R: Rng + ?Sized>(
    instances: &[Instance],
    problem: &dyn DecisionProblem,
    sigma: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<SampleTriple>> {
    if k == 0 {
        return Err(Error::Contract("sample count K must be >= 1".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Contract(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut out = anchors(instances);
    for _ in 1..k {
        for inst in instances {
            let mut pred: Vec<f64> = inst
                .y
                .iter()
                .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            if sigma > 0.0 {
                problem.project_target(&mut pred);
            }
            push_scored(&mut out, problem, pred, &inst.y);
        }
    }
    Ok(out)
}

/// Writes triples as comma-separated rows `p0..,y0..,regret` with a header.
pub fn write_triples_csv(path: &Path, triples: &[SampleTriple]) -> Result<()> {
    let dim = triples.first().map_or(0, |t| t.pred.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..dim).map(|i| format!("p{i}")).collect();
    header.extend((0..dim).map(|i| format!("y{i}")));
    header.push("regret".into());
    w.write_record(&header)?;
    for t in triples {
        check_len("cached prediction", dim, t.pred.len())?;
        let row: Vec<String> = t
            .pred
            .iter()
            .chain(&t.target)
            .chain(std::iter::once(&t.regret))
            .map(|v| v.to_string())
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_triples_csv(path: &Path) -> Result<Vec<SampleTriple>> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width < 3 || width % 2 == 0 {
        return Err(Error::Format(format!("triple cache has {width} columns")));
    }
    let dim = (width - 1) / 2;
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let values = rec
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    s.parse::<f64>().map_err(|e| Error::Ingest {
                        row: i + 2,
                        col: j + 1,
                        msg: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampleTriple {
                pred: values[..dim].to_vec(),
                target: values[dim..2 * dim].to_vec(),
                regret: values[2 * dim],
            })
        })
        .collect()
}

/// Cache file for a sampler configuration identified by `key`.
pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("samples-{key}.csv"))
}
