//! Multilayer perceptron with forward-mode and reverse-mode derivatives, and
//! the Generalized Gauss-Newton operator `G = Σ Jᵀ H J`.
//!
//! Parameters are one flat vector. Layer `l` maps `R^{d_l} → R^{d_{l+1}}`
//! and stores its `d_{l+1} x d_l` weight matrix column-major followed by
//! its bias. The last layer is affine; every hidden layer applies the
//! activation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix, LinearOperator};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative; relu uses 0 at the kink.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = libm::tanh(z);
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass: pre-activations of every layer
/// and the inputs each layer saw.
#[derive(Clone, Debug)]
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }
}

pub fn param_count(layer_dims: &[usize]) -> usize {
    layer_dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl MlpModel {
    /// Weights drawn `N(0, 1/fan_in)`, biases zero.
    pub fn new(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::check_dims(layer_dims)?;
        let mut g = rng::stream(seed, rng::streams::MODEL_INIT);
        let mut params = Vec::with_capacity(param_count(layer_dims));
        for w in layer_dims.windows(2) {
            let std = 1.0 / libm::sqrt(w[0] as f64);
            for _ in 0..w[0] * w[1] {
                params.push(std * rng::gaussian(&mut g));
            }
            params.extend(core::iter::repeat_n(0.0, w[1]));
        }
        Ok(Self { layer_dims: layer_dims.to_vec(), activation, params })
    }

    pub fn from_params(layer_dims: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        Self::check_dims(layer_dims)?;
        Error::check_len(param_count(layer_dims), params.len())?;
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("parameters must be finite".into()));
        }
        Ok(Self { layer_dims: layer_dims.to_vec(), activation, params })
    }

    fn check_dims(layer_dims: &[usize]) -> Result<()> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::InvalidDimensions(format!(
                "layer_dims {layer_dims:?} needs at least two positive entries"
            )));
        }
        Ok(())
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// `(weights, bias)` slices of `theta` for layer `l`.
    fn split<'a>(&self, theta: &'a [f64], l: usize) -> (&'a [f64], &'a [f64]) {
        let offset: usize = param_count(&self.layer_dims[..=l]);
        let (din, dout) = (self.layer_dims[l], self.layer_dims[l + 1]);
        let w = &theta[offset..offset + din * dout];
        (w, &theta[offset + din * dout..offset + (din + 1) * dout])
    }

    fn split_mut<'a>(&self, theta: &'a mut [f64], l: usize) -> (&'a mut [f64], &'a mut [f64]) {
        let offset: usize = param_count(&self.layer_dims[..=l]);
        let (din, dout) = (self.layer_dims[l], self.layer_dims[l + 1]);
        let (w, b) = theta[offset..offset + (din + 1) * dout].split_at_mut(din * dout);
        (w, b)
    }

    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        Error::check_len(self.input_dim(), x.len())?;
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut a = x.to_vec();
        for l in 0..layers {
            let (w, b) = self.split(&self.params, l);
            let mut z = b.to_vec();
            affine_acc(w, &a, &mut z);
            let next = if l + 1 < layers { z.iter().map(|&v| self.activation.eval(v)).collect() } else { Vec::new() };
            inputs.push(core::mem::replace(&mut a, next));
            pre.push(z);
        }
        Ok(Trace { inputs, pre })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut t = self.trace(x)?;
        Ok(t.pre.pop().expect("at least one layer"))
    }

    /// `J(x) v` by tangent propagation.
    pub fn jvp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let t = self.trace(x)?;
        self.jvp_traced(&t, v)
    }

    pub fn jvp_traced(&self, t: &Trace, v: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.num_params(), v.len())?;
        let layers = self.num_layers();
        let mut da = alloc::vec![0.0; self.input_dim()];
        for l in 0..layers {
            let (w, _) = self.split(&self.params, l);
            let (dw, db) = self.split(v, l);
            let mut dz = db.to_vec();
            affine_acc(w, &da, &mut dz);
            affine_acc(dw, &t.inputs[l], &mut dz);
            if l + 1 < layers {
                for (d, &z) in dz.iter_mut().zip(&t.pre[l]) {
                    *d *= self.activation.derivative(z);
                }
            }
            da = dz;
        }
        Ok(da)
    }

    /// `J(x)ᵀ u` by reverse accumulation.
    pub fn vjp(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let t = self.trace(x)?;
        let mut out = alloc::vec![0.0; self.num_params()];
        self.vjp_traced_acc(&t, u, 1.0, &mut out)?;
        Ok(out)
    }

    /// `out += c · J(x)ᵀ u`.
    pub fn vjp_traced_acc(&self, t: &Trace, u: &[f64], c: f64, out: &mut [f64]) -> Result<()> {
        Error::check_len(self.output_dim(), u.len())?;
        Error::check_len(self.num_params(), out.len())?;
        let mut g: Vec<f64> = u.iter().map(|x| c * x).collect();
        for l in (0..self.num_layers()).rev() {
            let (din, dout) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let a = &t.inputs[l];
            {
                let (dw, db) = self.split_mut(out, l);
                for (j, &aj) in a.iter().enumerate() {
                    crate::linalg::axpy(aj, &g, &mut dw[j * dout..(j + 1) * dout]);
                }
                for (b, gi) in db.iter_mut().zip(&g) {
                    *b += gi;
                }
            }
            if l > 0 {
                let (w, _) = self.split(&self.params, l);
                g = (0..din)
                    .map(|j| dot(&w[j * dout..(j + 1) * dout], &g) * self.activation.derivative(t.pre[l - 1][j]))
                    .collect();
            }
        }
        Ok(())
    }

    /// `J(x)ᵀ` as a `p x t` matrix, one vjp per output.
    pub fn jacobian_t(&self, x: &[f64]) -> Result<DenseMatrix> {
        let t = self.trace(x)?;
        self.jacobian_t_traced(&t)
    }

    pub fn jacobian_t_traced(&self, t: &Trace) -> Result<DenseMatrix> {
        let (p, out) = (self.num_params(), self.output_dim());
        let mut jt = DenseMatrix::zeros(p, out);
        let mut e = alloc::vec![0.0; out];
        for c in 0..out {
            e[c] = 1.0;
            self.vjp_traced_acc(t, &e, 1.0, jt.col_mut(c))?;
            e[c] = 0.0;
        }
        Ok(jt)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Fraction of correctly classified points; `None` without class targets.
    pub fn accuracy(&self, data: &Dataset) -> Result<Option<f64>> {
        let Targets::Classes(labels) = data.targets() else { return Ok(None) };
        if labels.is_empty() {
            return Ok(None);
        }
        let mut correct = 0usize;
        for (i, &y) in labels.iter().enumerate() {
            correct += usize::from(self.predict_class(data.input(i))? == y);
        }
        Ok(Some(correct as f64 / labels.len() as f64))
    }
}

/// `z += W a` for column-major `W` with `z.len()` rows.
#[inline]
fn affine_acc(w: &[f64], a: &[f64], z: &mut [f64]) {
    let rows = z.len();
    for (j, &aj) in a.iter().enumerate() {
        if aj != 0.0 {
            crate::linalg::axpy(aj, &w[j * rows..(j + 1) * rows], z);
        }
    }
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| libm::exp(z - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `½‖y − f‖²`
    Mse,
    /// `−log softmax(f)_y`
    #[default]
    CrossEntropy,
}

impl LossKind {
    /// Loss value and its gradient with respect to the network output.
    pub fn value_and_grad(self, f: &[f64], target: Target<'_>) -> Result<(f64, Vec<f64>)> {
        match self {
            LossKind::Mse => {
                let y = target.dense(f.len())?;
                let r: Vec<f64> = f.iter().zip(&y).map(|(a, b)| a - b).collect();
                Ok((0.5 * dot(&r, &r), r))
            }
            LossKind::CrossEntropy => {
                let Target::Class(c) = target else {
                    return Err(Error::InvalidArgument("cross-entropy needs class targets".into()));
                };
                if c >= f.len() {
                    return Err(Error::InvalidArgument(format!("class {c} out of range for {} logits", f.len())));
                }
                let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + libm::log(f.iter().map(|&z| libm::exp(z - m)).sum::<f64>());
                let mut grad = softmax(f);
                grad[c] -= 1.0;
                Ok((lse - f[c], grad))
            }
        }
    }

    /// `y ← H(f) w` without forming `H`.
    pub fn apply_output_hessian(self, f: &[f64], w: &mut [f64]) {
        match self {
            LossKind::Mse => {}
            LossKind::CrossEntropy => {
                let pi = softmax(f);
                let pw = dot(&pi, w);
                for (wi, p) in w.iter_mut().zip(&pi) {
                    *wi = p * (*wi - pw);
                }
            }
        }
    }
}

/// Hessian of the loss with respect to the network output.
pub fn loss_output_hessian(loss: LossKind, f: &[f64]) -> DenseMatrix {
    match loss {
        LossKind::Mse => DenseMatrix::identity(f.len()),
        LossKind::CrossEntropy => {
            let pi = softmax(f);
            let t = f.len();
            let mut h = DenseMatrix::zeros(t, t);
            for j in 0..t {
                for i in 0..t {
                    let d = if i == j { pi[i] } else { 0.0 };
                    h.set(i, j, d - pi[i] * pi[j]);
                }
            }
            h
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target<'a> {
    Class(usize),
    Values(&'a [f64]),
}

impl Target<'_> {
    fn dense(self, t: usize) -> Result<Vec<f64>> {
        match self {
            Target::Class(c) => {
                if c >= t {
                    return Err(Error::InvalidArgument(format!("class {c} out of range for {t} outputs")));
                }
                let mut y = alloc::vec![0.0; t];
                y[c] = 1.0;
                Ok(y)
            }
            Target::Values(v) => {
                Error::check_len(t, v.len())?;
                Ok(v.to_vec())
            }
        }
    }
}

fn target_of(data: &Dataset, i: usize) -> Result<Target<'_>> {
    match data.targets() {
        Targets::Classes(c) => Ok(Target::Class(c[i])),
        Targets::Values(v) => Ok(Target::Values(v.col(i))),
        Targets::None => Err(Error::InvalidArgument(format!("dataset {} has no targets", data.name))),
    }
}

/// `v ↦ Σᵢ J(xᵢ)ᵀ H(xᵢ) J(xᵢ) v` over a fixed set of inputs.
///
/// Forward traces are computed once at construction; each product then costs
/// one jvp and one vjp per data point, accumulated in data order.
#[derive(Clone, Debug)]
pub struct GgnOperator {
    model: MlpModel,
    loss: LossKind,
    traces: Vec<Trace>,
    subsample: Option<Vec<usize>>,
}

impl GgnOperator {
    pub fn new(model: &MlpModel, data: &Dataset, loss: LossKind) -> Result<Self> {
        let mut traces = Vec::with_capacity(data.len());
        for i in 0..data.len() {
            traces.push(model.trace(data.input(i))?);
        }
        Ok(Self { model: model.clone(), loss, traces, subsample: None })
    }

    /// Operator over a seeded subsample of `m` points (all of them if
    /// `m >= n`). The indices used are kept for reporting.
    pub fn subsampled(model: &MlpModel, data: &Dataset, loss: LossKind, m: usize, seed: u64) -> Result<Self> {
        let (sub, idx) = data.subsample(m, seed)?;
        let mut op = Self::new(model, &sub, loss)?;
        op.subsample = Some(idx);
        Ok(op)
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn num_points(&self) -> usize {
        self.traces.len()
    }

    pub fn subsample_indices(&self) -> Option<&[usize]> {
        self.subsample.as_deref()
    }
}

impl LinearOperator for GgnOperator {
    fn dim(&self) -> usize {
        self.model.num_params()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for t in &self.traces {
            let mut jv = self.model.jvp_traced(t, x).expect("operator input has length p");
            self.loss.apply_output_hessian(t.output(), &mut jv);
            self.model.vjp_traced_acc(t, &jv, 1.0, y).expect("shapes fixed at construction");
        }
    }
}

/// `diag(Σᵢ J(xᵢ)ᵀ H(xᵢ) J(xᵢ))`, accumulated exactly in `p` floats.
pub fn ggn_diagonal(model: &MlpModel, data: &Dataset, loss: LossKind) -> Result<Vec<f64>> {
    let p = model.num_params();
    let mut diag = alloc::vec![0.0; p];
    for i in 0..data.len() {
        let t = model.trace(data.input(i))?;
        let jt = model.jacobian_t_traced(&t)?;
        match loss {
            LossKind::Mse => {
                for col in jt.columns() {
                    for (d, j) in diag.iter_mut().zip(col) {
                        *d += j * j;
                    }
                }
            }
            LossKind::CrossEntropy => {
                let pi = softmax(t.output());
                for (r, d) in diag.iter_mut().enumerate() {
                    let mut sq = 0.0;
                    let mut lin = 0.0;
                    for (c, &pc) in pi.iter().enumerate() {
                        let j = jt.get(r, c);
                        sq += pc * j * j;
                        lin += pc * j;
                    }
                    *d += sq - lin * lin;
                }
            }
        }
    }
    Ok(diag)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { epochs: 50, lr: 0.1, batch_size: 32, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches.
    pub loss: f64,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Mean loss over the whole dataset.
pub fn dataset_loss(model: &MlpModel, data: &Dataset, loss: LossKind) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    let mut total = 0.0;
    for i in 0..data.len() {
        let f = model.forward(data.input(i))?;
        total += loss.value_and_grad(&f, target_of(data, i)?)?.0;
    }
    Ok(total / data.len() as f64)
}

/// Plain mini-batch SGD on the mean loss. Batches come from a seeded
/// permutation redrawn every epoch.
pub fn train_sgd(model: &MlpModel, data: &Dataset, loss: LossKind, cfg: &SgdConfig) -> Result<(MlpModel, TrainingLog)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training data"));
    }
    if cfg.batch_size == 0 || !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "batch_size {} and lr {} must be positive",
            cfg.batch_size, cfg.lr
        )));
    }
    let n = data.len();
    let mut m = model.clone();
    let mut log = TrainingLog::default();
    let mut g = rng::stream(cfg.seed, rng::streams::SGD_SHUFFLE);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = alloc::vec![0.0; m.num_params()];
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        for i in (1..n).rev() {
            let j = g.random_range(0..=i as u64) as usize;
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let mut batch_loss = 0.0;
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                let t = m.trace(data.input(i))?;
                let (l, dl) = loss.value_and_grad(t.output(), target_of(data, i)?)?;
                batch_loss += l;
                m.vjp_traced_acc(&t, &dl, w, &mut grad)?;
            }
            batch_loss *= w;
            if !batch_loss.is_finite() || grad.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step, loss: batch_loss });
            }
            crate::linalg::axpy(-cfg.lr, &grad, &mut m.params);
            epoch_loss += batch_loss;
            batches += 1;
            step += 1;
        }
        let mean = epoch_loss / batches as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        log.epochs.push(EpochRecord { epoch, loss: mean, accuracy: None });
    }
    if let Some(last) = log.epochs.last_mut() {
        last.accuracy = m.accuracy(data)?;
    }
    Ok((m, log))
}

/// Human-readable architecture string such as `8-32-2/tanh`.
pub fn describe(model: &MlpModel) -> String {
    let dims: Vec<String> = model.layer_dims.iter().map(|d| format!("{d}")).collect();
    format!("{}/{:?}", dims.join("-"), model.activation).to_lowercase()
}
