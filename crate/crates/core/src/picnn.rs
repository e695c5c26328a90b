//! Partially input-convex network used as the learned regret surrogate.
//!
//! The network maps a prediction `p` and a target `c` to a scalar that is
//! convex in `p` for every fixed `c`. Two paths run side by side: a context
//! path over `c` that is an ordinary feedforward stack, and a convex path
//! over `p` whose layers are conditioned on the context.
//!
//! With `u_0 = c`, `z_0` empty, hidden widths `w_0..w_{k-2}` and a scalar
//! final width, layer `i` computes
//!
//! ```text
//! u_{i+1} = act(Ut_i u_i + bt_i)                                  (i < k-1)
//! g_i     = max(Wzu_i u_i + bzu_i, 0)                             gate on z
//! h_i     = Wvu_i u_i + bvu_i                                     gate on p
//! s_i     = Wz_i (z_i * g_i) + Wv_i (p * h_i) + Wu_i u_i + b_i
//! z_{i+1} = act(s_i)   for hidden layers,   s_i for the output layer
//! ```
//!
//! `Wz_i >= 0` elementwise and `act` is convex and non-decreasing, so every
//! `z_{i+1}` is convex in `p`: `p * h_i` is affine in `p` for fixed `c`,
//! `z_i * g_i` scales convex functions by nonnegative constants, and the
//! nonnegative combination of convex terms stays convex.
//!
//! For very wide targets the first gate `Wvu_0` (a `d x d` block) can be
//! replaced by an elementwise gate `h_0 = wvu_0 * c + bvu_0`.

use rand::Rng;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use crate::error::{check_finite, check_len, Error, Result};
use crate::net::{sigmoid, softplus, Activation};

const FORMAT_TAG: &str = "picnn v1";

/// Shape of the first layer's prediction gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputGate {
    /// Dense `d x d` map from the target into the gate.
    Full,
    /// One weight per coordinate.
    Diagonal,
}

impl InputGate {
    pub fn as_str(self) -> &'static str {
        match self {
            InputGate::Full => "full",
            InputGate::Diagonal => "diagonal",
        }
    }
}

impl FromStr for InputGate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(InputGate::Full),
            "diagonal" => Ok(InputGate::Diagonal),
            other => Err(Error::Format(format!("unknown gate `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConvexLayout {
    nz: usize,
    nu: usize,
    out: usize,
    diagonal_gate: bool,
    wz: usize,
    wzu: usize,
    bzu: usize,
    wv: usize,
    wvu: usize,
    bvu: usize,
    wu: usize,
    b: usize,
    end: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct ContextLayout {
    inp: usize,
    out: usize,
    w: usize,
    b: usize,
    end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Picnn {
    dim: usize,
    hidden: Vec<usize>,
    activation: Activation,
    gate: InputGate,
    convex: Vec<ConvexLayout>,
    context: Vec<ContextLayout>,
    params: Vec<f64>,
}

/// Gradients of one evaluation.
#[derive(Debug, Clone)]
pub struct PicnnGrad {
    pub value: f64,
    pub pred: Vec<f64>,
    pub target: Vec<f64>,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Trace {
    /// `u[i]` feeds convex layer `i`.
    u: Vec<Vec<f64>>,
    ctx_pre: Vec<Vec<f64>>,
    /// `z[i]` feeds convex layer `i`; `z[0]` is empty.
    z: Vec<Vec<f64>>,
    z_pre: Vec<Vec<f64>>,
    gate_z_pre: Vec<Vec<f64>>,
    gate_v: Vec<Vec<f64>>,
    value: f64,
}

fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    if cols == 0 {
        return;
    }
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W^T g` for a row-major `g.len() x out.len()` block.
fn matvec_t_add(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    if cols == 0 {
        return;
    }
    for (row, gv) in w.chunks_exact(cols).zip(g) {
        if *gv == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += gv * a;
        }
    }
}

/// `dw += g x^T`.
fn outer_add(g: &[f64], x: &[f64], dw: &mut [f64]) {
    let cols = x.len();
    if cols == 0 {
        return;
    }
    for (row, gv) in dw.chunks_exact_mut(cols).zip(g) {
        if *gv == 0.0 {
            continue;
        }
        for (d, xv) in row.iter_mut().zip(x) {
            *d += gv * xv;
        }
    }
}

impl Picnn {
    /// All-zero network. `hidden` lists the hidden widths; the output layer is
    /// always scalar, so `hidden.len() + 1` convex layers are built.
    pub fn zeros(dim: usize, hidden: &[usize], activation: Activation, gate: InputGate) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Contract("picnn input dimension must be >= 1".into()));
        }
        if hidden.iter().any(|w| *w == 0) {
            return Err(Error::Contract("picnn hidden widths must be >= 1".into()));
        }
        if !matches!(activation, Activation::Softplus | Activation::Relu) {
            return Err(Error::Contract(format!(
                "picnn activation must be convex and non-decreasing, got {activation}"
            )));
        }
        let mut widths = hidden.to_vec();
        widths.push(1);
        let mut offset = 0;
        let mut take = |n: usize| {
            let start = offset;
            offset += n;
            start
        };
        let mut convex = Vec::with_capacity(widths.len());
        let mut context = Vec::with_capacity(hidden.len());
        for (i, &out) in widths.iter().enumerate() {
            let nz = if i == 0 { 0 } else { widths[i - 1] };
            let nu = if i == 0 { dim } else { widths[i - 1] };
            let diagonal_gate = i == 0 && gate == InputGate::Diagonal;
            let wz = take(out * nz);
            let wzu = take(nz * nu);
            let bzu = take(nz);
            let wv = take(out * dim);
            let wvu = take(if diagonal_gate { dim } else { dim * nu });
            let bvu = take(dim);
            let wu = take(out * nu);
            let b = take(out);
            convex.push(ConvexLayout {
                nz,
                nu,
                out,
                diagonal_gate,
                wz,
                wzu,
                bzu,
                wv,
                wvu,
                bvu,
                wu,
                b,
                end: b + out,
            });
            if i + 1 < widths.len() {
                let w = take(out * nu);
                let b = take(out);
                context.push(ContextLayout {
                    inp: nu,
                    out,
                    w,
                    b,
                    end: b + out,
                });
            }
        }
        Ok(Self {
            dim,
            hidden: hidden.to_vec(),
            activation,
            gate,
            convex,
            context,
            params: vec![0.0; offset],
        })
    }

    /// Random initialization: free weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// constrained weights `U(0, 1/sqrt(fan_in))`, gate biases 1, other biases 0.
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        hidden: &[usize],
        activation: Activation,
        gate: InputGate,
        rng: &mut R,
    ) -> Result<Self> {
        let mut model = Self::zeros(dim, hidden, activation, gate)?;
        let mut uniform = |slice: &mut [f64], fan_in: usize, nonneg: bool| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            let lo = if nonneg { 0.0 } else { -bound };
            for v in slice.iter_mut() {
                *v = rng.gen_range(lo..=bound);
            }
        };
        let p = &mut model.params;
        for (i, l) in model.convex.iter().enumerate() {
            if i < model.context.len() {
                let c = &model.context[i];
                uniform(&mut p[c.w..c.b], c.inp, false);
            }
            let fan_in = l.nz + l.dim_free_fan_in(dim);
            uniform(&mut p[l.wz..l.wzu], fan_in, true);
            uniform(&mut p[l.wzu..l.bzu], l.nu, false);
            p[l.bzu..l.wv].fill(1.0);
            uniform(&mut p[l.wv..l.wvu], fan_in, false);
            uniform(&mut p[l.wvu..l.bvu], if l.diagonal_gate { 1 } else { l.nu }, false);
            p[l.bvu..l.wu].fill(1.0);
            uniform(&mut p[l.wu..l.b], fan_in, false);
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn gate(&self) -> InputGate {
        self.gate
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

    /// Index ranges of the hidden-to-hidden weights that must stay nonnegative.
    pub fn constrained_ranges(&self) -> Vec<Range<usize>> {
        self.convex
            .iter()
            .filter(|l| l.nz > 0)
            .map(|l| l.wz..l.wzu)
            .collect()
    }

    /// Clamps every constrained weight to `max(w, 0)`.
    pub fn enforce_nonnegativity(&mut self) {
        for range in self.constrained_ranges() {
            for w in &mut self.params[range] {
                *w = w.max(0.0);
            }
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.constrained_ranges()
            .into_iter()
            .all(|r| self.params[r].iter().all(|w| *w >= 0.0))
    }

    fn act(&self, x: f64) -> f64 {
        match self.activation {
            Activation::Relu => x.max(0.0),
            _ => softplus(x),
        }
    }

    fn act_deriv(&self, x: f64) -> f64 {
        match self.activation {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            _ => sigmoid(x),
        }
    }

    fn check_inputs(&self, pred: &[f64], target: &[f64]) -> Result<()> {
        check_len("surrogate prediction", self.dim, pred.len())?;
        check_len("surrogate target", self.dim, target.len())
    }

    pub fn forward(&self, pred: &[f64], target: &[f64]) -> Result<f64> {
        self.check_inputs(pred, target)?;
        let value = self.trace(pred, target).value;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("surrogate output {value}")));
        }
        Ok(value)
    }

    fn trace(&self, pred: &[f64], target: &[f64]) -> Trace {
        let p = &self.params;
        let k = self.convex.len();
        let mut u = Vec::with_capacity(k);
        let mut ctx_pre = Vec::with_capacity(k - 1);
        u.push(target.to_vec());
        for c in &self.context {
            let mut pre = p[c.b..c.end].to_vec();
            matvec_add(&p[c.w..c.b], u.last().unwrap(), &mut pre);
            u.push(pre.iter().map(|&v| self.act(v)).collect());
            ctx_pre.push(pre);
        }

        let mut z = Vec::with_capacity(k + 1);
        let mut z_pre = Vec::with_capacity(k);
        let mut gate_z_pre = Vec::with_capacity(k);
        let mut gate_v = Vec::with_capacity(k);
        z.push(Vec::new());
        for (i, l) in self.convex.iter().enumerate() {
            let ui = &u[i];
            let mut s = p[l.b..l.end].to_vec();
            matvec_add(&p[l.wu..l.b], ui, &mut s);

            let mut gz = p[l.bzu..l.wv].to_vec();
            matvec_add(&p[l.wzu..l.bzu], ui, &mut gz);
            if l.nz > 0 {
                let gated: Vec<f64> = z[i].iter().zip(&gz).map(|(a, g)| a * g.max(0.0)).collect();
                matvec_add(&p[l.wz..l.wzu], &gated, &mut s);
            }

            let mut gv = p[l.bvu..l.wu].to_vec();
            if l.diagonal_gate {
                for ((g, w), c) in gv.iter_mut().zip(&p[l.wvu..l.bvu]).zip(ui) {
                    *g += w * c;
                }
            } else {
                matvec_add(&p[l.wvu..l.bvu], ui, &mut gv);
            }
            let gated_v: Vec<f64> = pred.iter().zip(&gv).map(|(a, g)| a * g).collect();
            matvec_add(&p[l.wv..l.wvu], &gated_v, &mut s);

            let next = if i + 1 == k {
                s.clone()
            } else {
                s.iter().map(|&v| self.act(v)).collect()
            };
            z.push(next);
            z_pre.push(s);
            gate_z_pre.push(gz);
            gate_v.push(gv);
        }
        let value = z[k][0];
        Trace {
            u,
            ctx_pre,
            z,
            z_pre,
            gate_z_pre,
            gate_v,
            value,
        }
    }

    /// Reverse pass scaled by `upstream`. Parameter gradients are added into
    /// `grad_params` when given. Returns gradients w.r.t. prediction and target.
    fn backward(
        &self,
        pred: &[f64],
        tr: &Trace,
        upstream: f64,
        mut grad_params: Option<&mut [f64]>,
    ) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let k = self.convex.len();
        let mut d_pred = vec![0.0; self.dim];
        let mut du: Vec<Vec<f64>> = tr.u.iter().map(|u| vec![0.0; u.len()]).collect();
        let mut g = vec![upstream];

        for i in (0..k).rev() {
            // context layer i produced u[i + 1]; its gradient is complete here
            if i + 1 < k {
                let c = &self.context[i];
                let gt: Vec<f64> = du[i + 1]
                    .iter()
                    .zip(&tr.ctx_pre[i])
                    .map(|(d, pre)| d * self.act_deriv(*pre))
                    .collect();
                if let Some(gp) = grad_params.as_deref_mut() {
                    outer_add(&gt, &tr.u[i], &mut gp[c.w..c.b]);
                    gp[c.b..c.end].iter_mut().zip(&gt).for_each(|(a, b)| *a += b);
                }
                let (lower, _) = du.split_at_mut(i + 1);
                matvec_t_add(&p[c.w..c.b], &gt, &mut lower[i]);
            }

            let l = &self.convex[i];
            let ui = &tr.u[i];
            let gv = &tr.gate_v[i];

            if let Some(gp) = grad_params.as_deref_mut() {
                gp[l.b..l.end].iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                outer_add(&g, ui, &mut gp[l.wu..l.b]);
                let gated_v: Vec<f64> = pred.iter().zip(gv).map(|(a, b)| a * b).collect();
                outer_add(&g, &gated_v, &mut gp[l.wv..l.wvu]);
            }
            matvec_t_add(&p[l.wu..l.b], &g, &mut du[i]);

            let mut ds_v = vec![0.0; self.dim];
            matvec_t_add(&p[l.wv..l.wvu], &g, &mut ds_v);
            let d_gate_v: Vec<f64> = ds_v.iter().zip(pred).map(|(d, a)| d * a).collect();
            for ((dp, d), gate) in d_pred.iter_mut().zip(&ds_v).zip(gv) {
                *dp += d * gate;
            }
            if let Some(gp) = grad_params.as_deref_mut() {
                gp[l.bvu..l.wu].iter_mut().zip(&d_gate_v).for_each(|(a, b)| *a += b);
                if l.diagonal_gate {
                    for ((w, d), c) in gp[l.wvu..l.bvu].iter_mut().zip(&d_gate_v).zip(ui) {
                        *w += d * c;
                    }
                } else {
                    outer_add(&d_gate_v, ui, &mut gp[l.wvu..l.bvu]);
                }
            }
            if l.diagonal_gate {
                for ((du_j, d), w) in du[i].iter_mut().zip(&d_gate_v).zip(&p[l.wvu..l.bvu]) {
                    *du_j += d * w;
                }
            } else {
                matvec_t_add(&p[l.wvu..l.bvu], &d_gate_v, &mut du[i]);
            }

            if l.nz == 0 {
                continue;
            }
            let zi = &tr.z[i];
            let gz_pre = &tr.gate_z_pre[i];
            if let Some(gp) = grad_params.as_deref_mut() {
                let gated: Vec<f64> = zi.iter().zip(gz_pre).map(|(a, b)| a * b.max(0.0)).collect();
                outer_add(&g, &gated, &mut gp[l.wz..l.wzu]);
            }
            let mut ds_z = vec![0.0; l.nz];
            matvec_t_add(&p[l.wz..l.wzu], &g, &mut ds_z);
            let d_gate_z: Vec<f64> = ds_z
                .iter()
                .zip(zi)
                .zip(gz_pre)
                .map(|((d, a), pre)| if *pre > 0.0 { d * a } else { 0.0 })
                .collect();
            if let Some(gp) = grad_params.as_deref_mut() {
                outer_add(&d_gate_z, ui, &mut gp[l.wzu..l.bzu]);
                gp[l.bzu..l.wv].iter_mut().zip(&d_gate_z).for_each(|(a, b)| *a += b);
            }
            matvec_t_add(&p[l.wzu..l.bzu], &d_gate_z, &mut du[i]);

            // gradient w.r.t. z_i, pushed through the previous layer's activation
            g = ds_z
                .iter()
                .zip(gz_pre)
                .zip(&tr.z_pre[i - 1])
                .map(|((d, gate), pre)| d * gate.max(0.0) * self.act_deriv(*pre))
                .collect();
        }
        let d_target = std::mem::take(&mut du[0]);
        (d_pred, d_target)
    }

    /// Value and all three gradient groups.
    pub fn grad(&self, pred: &[f64], target: &[f64]) -> Result<PicnnGrad> {
        self.check_inputs(pred, target)?;
        let tr = self.trace(pred, target);
        let mut params = vec![0.0; self.params.len()];
        let (d_pred, d_target) = self.backward(pred, &tr, 1.0, Some(&mut params));
        check_finite("surrogate value", &[tr.value])?;
        check_finite("surrogate prediction gradient", &d_pred)?;
        check_finite("surrogate parameter gradient", &params)?;
        Ok(PicnnGrad {
            value: tr.value,
            pred: d_pred,
            target: d_target,
            params,
        })
    }

    /// Value and gradient w.r.t. the prediction only.
    pub fn pred_grad(&self, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_inputs(pred, target)?;
        let tr = self.trace(pred, target);
        let (d_pred, _) = self.backward(pred, &tr, 1.0, None);
        check_finite("surrogate value", &[tr.value])?;
        check_finite("surrogate prediction gradient", &d_pred)?;
        Ok((tr.value, d_pred))
    }

    /// Adds `upstream * dL/dparams` into `grad_params` and returns the value.
    pub fn accumulate_param_grad(
        &self,
        pred: &[f64],
        target: &[f64],
        upstream: impl FnOnce(f64) -> f64,
        grad_params: &mut [f64],
    ) -> Result<f64> {
        self.check_inputs(pred, target)?;
        check_len("surrogate parameter gradient", self.params.len(), grad_params.len())?;
        let tr = self.trace(pred, target);
        let scale = upstream(tr.value);
        self.backward(pred, &tr, scale, Some(grad_params));
        Ok(tr.value)
    }

    /// Versioned plain-text record: header lines followed by one line per
    /// parameter block in layout order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let hidden: Vec<String> = self.hidden.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(out, "{FORMAT_TAG}");
        let _ = writeln!(out, "dim {}", self.dim);
        let _ = writeln!(out, "layers {}", self.convex.len());
        let _ = writeln!(out, "hidden {}", hidden.join(" "));
        let _ = writeln!(out, "activation {}", self.activation);
        let _ = writeln!(out, "gate {}", self.gate.as_str());
        let _ = writeln!(out, "params {}", self.params.len());
        for (name, range) in self.blocks() {
            let values: Vec<String> = self.params[range].iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{name} {}", values.join(" "));
        }
        out
    }

    fn blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut out = Vec::new();
        for (i, l) in self.convex.iter().enumerate() {
            if let Some(c) = self.context.get(i) {
                out.push((format!("ctx{i}.w"), c.w..c.b));
                out.push((format!("ctx{i}.b"), c.b..c.end));
            }
            for (name, r) in [
                ("wz", l.wz..l.wzu),
                ("wzu", l.wzu..l.bzu),
                ("bzu", l.bzu..l.wv),
                ("wv", l.wv..l.wvu),
                ("wvu", l.wvu..l.bvu),
                ("bvu", l.bvu..l.wu),
                ("wu", l.wu..l.b),
                ("b", l.b..l.end),
            ] {
                out.push((format!("layer{i}.{name}"), r));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing `{key}` line")))?;
            if key == FORMAT_TAG {
                return if line == FORMAT_TAG {
                    Ok(String::new())
                } else {
                    Err(Error::Format(format!("unsupported header `{line}`")))
                };
            }
            match line.split_once(' ') {
                Some((k, rest)) if k == key => Ok(rest.to_string()),
                None if line == key => Ok(String::new()),
                _ => Err(Error::Format(format!("expected `{key}`, found `{line}`"))),
            }
        };
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Format(format!("bad integer `{s}`: {e}")))
        };
        next(FORMAT_TAG)?;
        let dim = parse_usize(&next("dim")?)?;
        let layers = parse_usize(&next("layers")?)?;
        let hidden = next("hidden")?
            .split_whitespace()
            .map(parse_usize)
            .collect::<Result<Vec<_>>>()?;
        if hidden.len() + 1 != layers {
            return Err(Error::Format("layer count disagrees with hidden widths".into()));
        }
        let activation: Activation = next("activation")?.parse()?;
        let gate: InputGate = next("gate")?.parse()?;
        let count = parse_usize(&next("params")?)?;
        let mut model = Self::zeros(dim, &hidden, activation, gate)?;
        if count != model.params.len() {
            return Err(Error::Format(format!(
                "parameter count {count} does not match architecture ({})",
                model.params.len()
            )));
        }
        for (name, range) in model.blocks() {
            let rest = next(&name)?;
            let values = rest
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad value `{v}` in {name}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != range.len() {
                return Err(Error::Format(format!(
                    "block {name} holds {} values, expected {}",
                    values.len(),
                    range.len()
                )));
            }
            model.params[range].copy_from_slice(&values);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

impl ConvexLayout {
    fn dim_free_fan_in(&self, dim: usize) -> usize {
        dim + self.nu
    }
}

/// Projection onto the feasible set: constrained weights clamped at zero.
pub fn enforce_nonnegativity(mut model: Picnn) -> Picnn {
    model.enforce_nonnegativity();
    model
}
