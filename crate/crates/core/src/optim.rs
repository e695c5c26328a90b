//! First-order parameter updates over flat parameter buffers.

use crate::error::{check_finite, check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatchMode {
    /// One update per pass over the data, gradients averaged.
    #[default]
    Full,
    /// One update per instance.
    PerInstance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub optimizer: Optimizer,
    /// Seeds the per-epoch visiting order when surrogate fitting updates
    /// once per sample.
    pub seed: u64,
    pub batch: BatchMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 300,
            optimizer: Optimizer::default(),
            seed: 0,
            batch: BatchMode::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config {
                field: "lr".into(),
                msg: format!("learning rate must be > 0, got {}", self.lr),
            });
        }
        if self.epochs == 0 {
            return Err(Error::Config {
                field: "epochs".into(),
                msg: "epoch count must be >= 1".into(),
            });
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::Config {
                    field: "optimizer".into(),
                    msg: "adam needs beta1, beta2 in [0, 1) and eps > 0".into(),
                });
            }
        }
        Ok(())
    }
}

/// Moment buffers carried between steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl OptimizerState {
    pub fn new(param_count: usize) -> Self {
        Self {
            step: 0,
            first: vec![0.0; param_count],
            second: vec![0.0; param_count],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

pub fn optimizer_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    check_len("gradient", params.len(), grads.len())?;
    check_finite("gradient", grads)?;
    if state.first.len() != params.len() {
        *state = OptimizerState::new(params.len());
    }
    state.step += 1;
    match config.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grads) {
                *p -= config.lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for (((p, g), m), v) in params
                .iter_mut()
                .zip(grads)
                .zip(state.first.iter_mut())
                .zip(state.second.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= config.lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(())
}
