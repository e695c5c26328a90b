//! Dense feedforward networks with hand-written reverse accumulation.
//!
//! Parameters live in one flat buffer so the optimizer, checkpointing and
//! gradient checks can treat every network uniformly. Layer `i` occupies a
//! row-major `out x in` weight block followed by its `out` biases.

use rand::Rng;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{check_finite, check_len, Error, Result};

const FORMAT_TAG: &str = "densenet v1";

/// Probability floor applied before taking a logarithm in the NLL loss.
pub const NLL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Softplus,
    /// Only valid on the final layer.
    Softmax,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
            Activation::Softmax => "softmax",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "softplus" => Ok(Activation::Softplus),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::Format(format!("unknown activation `{other}`"))),
        }
    }
}

/// Overflow-safe `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], i.e. the logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerSpec {
    fn param_count(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    /// The same layers are applied to each of `rows` equal chunks of the input.
    rows: usize,
}

/// Intermediate values of one forward pass, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `values[0]` is the input; `values[i + 1]` is the output of layer `i`.
    values: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace always holds the input")
    }
}

/// What the network output is scored against.
#[derive(Debug, Clone, Copy)]
pub enum Loss<'a> {
    /// Mean squared error against a target vector.
    Mse(&'a [f64]),
    /// Negative log-likelihood of a class index; output must be on the simplex.
    Nll(usize),
    /// Gradient w.r.t. the output supplied by the caller, together with the
    /// loss value it belongs to.
    Upstream { grad: &'a [f64], value: f64 },
}

#[derive(Debug, Clone)]
pub struct NetGrad {
    pub loss: f64,
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl DenseNet {
    /// Builds a network from layer specs with all parameters zero.
    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_len("layer chaining", pair[0].outputs, pair[1].inputs)?;
        }
        if let Some(pos) = layers[..layers.len() - 1]
            .iter()
            .position(|l| l.activation == Activation::Softmax)
        {
            return Err(Error::Contract(format!(
                "softmax is only allowed on the final layer (found on layer {pos})"
            )));
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for layer in &layers {
            offsets.push(total);
            total += layer.param_count();
        }
        Ok(Self {
            layers,
            offsets,
            params: vec![0.0; total],
            rows: 1,
        })
    }

    /// A multilayer perceptron `sizes[0] -> ... -> sizes[last]` with `hidden`
    /// activations between layers and `output` on the last one.
    ///
    /// Weights are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; biases start at zero.
    pub fn mlp<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Contract("an mlp needs input and output sizes".into()));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| LayerSpec {
                inputs: sizes[i],
                outputs: sizes[i + 1],
                activation: if i + 1 == n { output } else { hidden },
            })
            .collect();
        let mut net = Self::zeros(layers)?;
        for i in 0..n {
            let bound = 1.0 / (sizes[i] as f64).sqrt();
            let (w, _) = net.layer_params_mut(i);
            for v in w.iter_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn from_params(layers: Vec<LayerSpec>, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(layers)?;
        check_len("parameter buffer", net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    /// Shares the weights across `rows` chunks: the input is `rows` blocks of
    /// the first layer's width and the output the matching output blocks.
    pub fn with_shared_rows(mut self, rows: usize) -> Result<Self> {
        if rows == 0 {
            return Err(Error::Contract("row count must be >= 1".into()));
        }
        self.rows = rows;
        Ok(self)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn input_dim(&self) -> usize {
        self.rows * self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.rows * self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight block (row-major `out x in`) and bias of layer `i`.
    pub fn layer_params(&self, i: usize) -> (&[f64], &[f64]) {
        let spec = self.layers[i];
        let start = self.offsets[i];
        let split = start + spec.inputs * spec.outputs;
        (
            &self.params[start..split],
            &self.params[split..start + spec.param_count()],
        )
    }

    pub fn layer_params_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let spec = self.layers[i];
        let start = self.offsets[i];
        let block = &mut self.params[start..start + spec.param_count()];
        block.split_at_mut(spec.inputs * spec.outputs)
    }

    /// Versioned plain-text record: a header, one line per layer shape, then
    /// one line of parameters per layer.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_TAG}");
        let _ = writeln!(out, "rows {}", self.rows);
        let _ = writeln!(out, "layers {}", self.layers.len());
        for l in &self.layers {
            let _ = writeln!(out, "shape {} {} {}", l.inputs, l.outputs, l.activation);
        }
        for (i, l) in self.layers.iter().enumerate() {
            let start = self.offsets[i];
            let values: Vec<String> = self.params[start..start + l.param_count()]
                .iter()
                .map(|v| v.to_string())
                .collect();
            let _ = writeln!(out, "params {}", values.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut field = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing `{key}` line")))?;
            match line.split_once(' ') {
                Some((k, rest)) if k == key => Ok(rest.to_string()),
                _ => Err(Error::Format(format!("expected `{key}`, found `{line}`"))),
            }
        };
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Format(format!("bad integer `{s}`: {e}")))
        };
        let tag = field("densenet")?;
        if format!("densenet {tag}") != FORMAT_TAG {
            return Err(Error::Format(format!("unsupported version `{tag}`")));
        }
        let rows = int(&field("rows")?)?;
        let count = int(&field("layers")?)?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let shape = field("shape")?;
            let parts: Vec<&str> = shape.split_whitespace().collect();
            let [inputs, outputs, activation] = parts[..] else {
                return Err(Error::Format(format!("malformed layer shape `{shape}`")));
            };
            layers.push(LayerSpec {
                inputs: int(inputs)?,
                outputs: int(outputs)?,
                activation: activation.parse()?,
            });
        }
        let mut params = Vec::new();
        for (i, l) in layers.iter().enumerate() {
            let line = field("params")?;
            let values = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad value `{v}` in layer {i}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != l.param_count() {
                return Err(Error::Format(format!(
                    "layer {i} holds {} values, expected {}",
                    values.len(),
                    l.param_count()
                )));
            }
            params.extend(values);
        }
        Self::from_params(layers, params)?.with_shared_rows(rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.values.pop().expect("trace always holds the input"))
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        check_len("network input", self.input_dim(), x.len())?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_all = Vec::with_capacity(self.layers.len());
        values.push(x.to_vec());
        for (i, spec) in self.layers.iter().enumerate() {
            let mut pre = Vec::with_capacity(self.rows * spec.outputs);
            let mut out = Vec::with_capacity(self.rows * spec.outputs);
            for chunk in values[i].chunks_exact(spec.inputs) {
                let p = self.affine(i, chunk);
                out.extend(activate(spec.activation, &p));
                pre.extend(p);
            }
            values.push(out);
            pre_all.push(pre);
        }
        Ok(Trace {
            values,
            pre: pre_all,
        })
    }

    fn affine(&self, i: usize, input: &[f64]) -> Vec<f64> {
        let spec = self.layers[i];
        let (w, b) = self.layer_params(i);
        let mut out = b.to_vec();
        for (o, row) in out.iter_mut().zip(w.chunks_exact(spec.inputs)) {
            *o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
        }
        out
    }

    /// Reverse pass: adds parameter gradients into `grad_params` and returns
    /// the gradient w.r.t. the network input.
    pub fn backward_into(
        &self,
        trace: &Trace,
        upstream: &[f64],
        grad_params: &mut [f64],
    ) -> Result<Vec<f64>> {
        check_len("upstream gradient", self.output_dim(), upstream.len())?;
        check_len("parameter gradient", self.params.len(), grad_params.len())?;
        let mut g_out = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let spec = self.layers[i];
            let start = self.offsets[i];
            let split = start + spec.inputs * spec.outputs;
            let w = &self.params[start..split];
            let mut g_in = vec![0.0; self.rows * spec.inputs];
            for r in 0..self.rows {
                let (o, n) = (r * spec.outputs, r * spec.inputs);
                let g_pre = activation_backward(
                    spec.activation,
                    &trace.pre[i][o..o + spec.outputs],
                    &trace.values[i + 1][o..o + spec.outputs],
                    &g_out[o..o + spec.outputs],
                );
                let input = &trace.values[i][n..n + spec.inputs];
                let (gw, gb) = grad_params[start..start + spec.param_count()].split_at_mut(spec.inputs * spec.outputs);
                for ((row, gp), bias) in gw.chunks_exact_mut(spec.inputs).zip(&g_pre).zip(gb) {
                    *bias += gp;
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += gp * x;
                    }
                }
                let g_row = &mut g_in[n..n + spec.inputs];
                for (row, gp) in w.chunks_exact(spec.inputs).zip(&g_pre) {
                    for (g, wv) in g_row.iter_mut().zip(row) {
                        *g += gp * wv;
                    }
                }
            }
            g_out = g_in;
        }
        Ok(g_out)
    }

    /// Loss value plus gradients w.r.t. every parameter and the input.
    pub fn grad(&self, x: &[f64], loss: Loss<'_>) -> Result<NetGrad> {
        let trace = self.forward_trace(x)?;
        let (value, upstream) = loss_and_grad(trace.output(), loss)?;
        let mut params = vec![0.0; self.params.len()];
        let input = self.backward_into(&trace, &upstream, &mut params)?;
        check_finite("parameter gradient", &params)?;
        Ok(NetGrad {
            loss: value,
            params,
            input,
        })
    }
}

fn activate(act: Activation, pre: &[f64]) -> Vec<f64> {
    match act {
        Activation::Linear => pre.to_vec(),
        Activation::Relu => pre.iter().map(|v| v.max(0.0)).collect(),
        Activation::Softplus => pre.iter().map(|&v| softplus(v)).collect(),
        Activation::Softmax => softmax(pre),
    }
}

fn activation_backward(act: Activation, pre: &[f64], out: &[f64], g_out: &[f64]) -> Vec<f64> {
    match act {
        Activation::Linear => g_out.to_vec(),
        Activation::Relu => pre
            .iter()
            .zip(g_out)
            .map(|(p, g)| if *p > 0.0 { *g } else { 0.0 })
            .collect(),
        Activation::Softplus => pre.iter().zip(g_out).map(|(p, g)| sigmoid(*p) * g).collect(),
        Activation::Softmax => {
            let dot: f64 = out.iter().zip(g_out).map(|(s, g)| s * g).sum();
            out.iter().zip(g_out).map(|(s, g)| s * (g - dot)).collect()
        }
    }
}

fn check_simplex(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!(
            "nll requires a probability vector (sum = {sum})"
        )));
    }
    Ok(())
}

/// Loss value and its gradient w.r.t. the network output.
pub fn loss_and_grad(out: &[f64], loss: Loss<'_>) -> Result<(f64, Vec<f64>)> {
    match loss {
        Loss::Mse(target) => {
            check_len("mse target", out.len(), target.len())?;
            let n = out.len() as f64;
            let value = prediction_loss(out, target, PredictionLoss::Mse)?;
            let grad = out
                .iter()
                .zip(target)
                .map(|(o, t)| 2.0 * (o - t) / n)
                .collect();
            Ok((value, grad))
        }
        Loss::Nll(class) => {
            let value = nll(out, class)?;
            let mut grad = vec![0.0; out.len()];
            if out[class] > NLL_FLOOR {
                grad[class] = -1.0 / out[class];
            }
            Ok((value, grad))
        }
        Loss::Upstream { grad, value } => {
            check_len("upstream gradient", out.len(), grad.len())?;
            Ok((value, grad.to_vec()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionLoss {
    Mse,
    Nll,
}

impl PredictionLoss {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictionLoss::Mse => "mse",
            PredictionLoss::Nll => "nll",
        }
    }
}

/// `-ln max(p[class], 1e-12)`.
pub fn nll(pred: &[f64], class: usize) -> Result<f64> {
    check_simplex(pred)?;
    if class >= pred.len() {
        return Err(Error::Contract(format!(
            "class index {class} out of range for {} classes",
            pred.len()
        )));
    }
    Ok(-pred[class].max(NLL_FLOOR).ln())
}

/// Index of the hot entry of a one-hot vector.
pub fn one_hot_class(target: &[f64]) -> Result<usize> {
    let hot: Vec<usize> = target
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect();
    match hot.as_slice() {
        [i] if target[*i] == 1.0 => Ok(*i),
        _ => Err(Error::Contract("nll target must be a one-hot vector".into())),
    }
}

/// Prediction-quality loss. For NLL the target is a one-hot vector.
pub fn prediction_loss(pred: &[f64], target: &[f64], kind: PredictionLoss) -> Result<f64> {
    match kind {
        PredictionLoss::Mse => {
            check_len("mse target", pred.len(), target.len())?;
            let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum();
            Ok(sum / pred.len() as f64)
        }
        PredictionLoss::Nll => {
            check_len("nll target", pred.len(), target.len())?;
            nll(pred, one_hot_class(target)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(inputs: usize, outputs: usize, activation: Activation) -> Vec<LayerSpec> {
        vec![LayerSpec {
            inputs,
            outputs,
            activation,
        }]
    }

    #[test]
    fn zero_weights_return_bias() {
        let mut net = DenseNet::zeros(single(3, 2, Activation::Linear)).unwrap();
        net.layer_params_mut(0).1.copy_from_slice(&[0.5, -1.5]);
        assert_eq!(net.forward(&[7.0, -3.0, 2.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn identity_layer() {
        let net =
            DenseNet::from_params(single(2, 2, Activation::Linear), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
                .unwrap();
        assert_eq!(net.forward(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn softplus_at_zero_is_ln2() {
        let net = DenseNet::from_params(single(1, 1, Activation::Softplus), vec![1.0, 0.0]).unwrap();
        let out = net.forward(&[0.0]).unwrap();
        assert!((out[0] - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }

    #[test]
    fn input_dimension_is_checked() {
        let net = DenseNet::zeros(single(3, 1, Activation::Linear)).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn softmax_only_final() {
        let layers = vec![
            LayerSpec {
                inputs: 2,
                outputs: 2,
                activation: Activation::Softmax,
            },
            LayerSpec {
                inputs: 2,
                outputs: 1,
                activation: Activation::Linear,
            },
        ];
        assert!(DenseNet::zeros(layers).is_err());
    }

    #[test]
    fn mse_gradient_of_scalar_line() {
        let net = DenseNet::from_params(single(1, 1, Activation::Linear), vec![2.0, 0.0]).unwrap();
        let g = net.grad(&[1.0], Loss::Mse(&[0.0])).unwrap();
        assert_eq!(g.loss, 4.0);
        assert_eq!(g.params, vec![4.0, 4.0]);
        assert_eq!(g.input, vec![8.0]);
    }

    #[test]
    fn stationary_at_interpolating_minimum() {
        let net = DenseNet::from_params(single(2, 1, Activation::Linear), vec![1.5, -0.5, 0.25]).unwrap();
        let x = [2.0, 1.0];
        let target = net.forward(&x).unwrap();
        let g = net.grad(&x, Loss::Mse(&target)).unwrap();
        assert!(g.params.iter().all(|v| v.abs() <= 1e-9));
    }

    #[test]
    fn nll_requires_simplex() {
        let net = DenseNet::zeros(single(2, 3, Activation::Linear)).unwrap();
        let err = net.grad(&[1.0, 1.0], Loss::Nll(0)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn prediction_losses() {
        assert_eq!(prediction_loss(&[1.0, 2.0], &[1.0, 2.0], PredictionLoss::Mse).unwrap(), 0.0);
        assert_eq!(prediction_loss(&[0.0, 0.0], &[3.0, 4.0], PredictionLoss::Mse).unwrap(), 12.5);
        let uniform = [0.2; 5];
        for class in 0..5 {
            let v = nll(&uniform, class).unwrap();
            assert!((v - 5f64.ln()).abs() < 1e-12);
        }
        assert!(nll(&uniform, 5).is_err());
        assert!(prediction_loss(&uniform, &[0.0, 1.0, 1.0, 0.0, 0.0], PredictionLoss::Nll).is_err());
        assert_eq!(nll(&[1.0, 0.0], 1).unwrap(), -NLL_FLOOR.ln());
    }

    #[test]
    fn softmax_network_lands_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::mlp(&[4, 6, 5], Activation::Relu, Activation::Softmax, &mut rng).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let p = net.forward(&x).unwrap();
            assert!(p.iter().all(|v| *v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn mlp_init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = DenseNet::mlp(&[16, 4, 2], Activation::Relu, Activation::Linear, &mut rng).unwrap();
        let (w0, b0) = net.layer_params(0);
        assert!(w0.iter().all(|v| v.abs() <= 0.25));
        assert!(b0.iter().all(|v| *v == 0.0));
        let (w1, _) = net.layer_params(1);
        assert!(w1.iter().all(|v| v.abs() <= 0.5));
        assert_eq!(net.param_count(), 16 * 4 + 4 + 4 * 2 + 2);
    }

    #[test]
    fn shared_rows_apply_one_network_per_block() {
        let net = DenseNet::from_params(single(2, 1, Activation::Linear), vec![1.0, -2.0, 0.5]).unwrap();
        let shared = net.clone().with_shared_rows(3).unwrap();
        assert_eq!((shared.input_dim(), shared.output_dim()), (6, 3));
        let x = [1.0, 1.0, 2.0, 0.0, 0.0, 3.0];
        assert_eq!(shared.forward(&x).unwrap(), vec![-0.5, 2.5, -5.5]);
        // parameter gradient is the sum of the per-row gradients
        let up = [1.0, 2.0, -1.0];
        let mut g = vec![0.0; 3];
        let gin = shared.backward_into(&shared.forward_trace(&x).unwrap(), &up, &mut g).unwrap();
        assert_eq!(g, vec![1.0 + 4.0 + 0.0, 1.0 + 0.0 - 3.0, 2.0]);
        assert_eq!(gin, vec![1.0, -2.0, 2.0, -4.0, -1.0, 2.0]);
    }

    #[test]
    fn text_record_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = DenseNet::mlp(&[3, 4, 2], Activation::Relu, Activation::Softmax, &mut rng)
            .unwrap()
            .with_shared_rows(2)
            .unwrap();
        let back = DenseNet::from_text(&net.to_text()).unwrap();
        assert_eq!(back, net);
        let bad = net.to_text().replacen("densenet v1", "densenet v9", 1);
        assert!(matches!(DenseNet::from_text(&bad), Err(Error::Format(_))));
    }
}
