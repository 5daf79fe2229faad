//! Autoregressive density model: one MLP per dimension maps the observed
//! prefix (with Fourier-feature augmentation) to unnormalized logits for the
//! conditional's masses and, depending on the head mode, widths.
//!
//! Dimension 1 has an empty prefix and is handled by a bias-only layer. All
//! gradients are computed by a hand-rolled backward pass; evaluation is
//! read-only and the batch reduction runs in a fixed order so results are
//! bitwise reproducible given a seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::ScaleMeta;
use crate::distribution::{AdaCatParams, SampleMode, SimplexVector};
use crate::error::{AdaCatError, Result};
use crate::smoothing::{
    smoothed_loglik_grad, smoothed_loglik_grad_fixed_w, unsmoothed_loglik_grad,
    unsmoothed_loglik_grad_fixed_w, LogitVector, SmoothedLossGrad, SmoothingKernel,
};

/// Number of `(sin, cos)` feature pairs appended to each prefix value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierConfig {
    pub b: usize,
}

impl FourierConfig {
    pub fn new(b: usize) -> Result<Self> {
        if b > 32 {
            return Err(AdaCatError::Domain(format!("fourier pairs {b} > 32")));
        }
        Ok(Self { b })
    }

    pub fn features_per_value(&self) -> usize {
        1 + 2 * self.b
    }
}

/// `(x, sin(2^0 x), cos(2^0 x), ..., sin(2^(b-1) x), cos(2^(b-1) x))`.
pub fn fourier_features(x: f64, b: usize, out: &mut Vec<f64>) {
    out.push(x);
    let mut freq = 1.0;
    for _ in 0..b {
        out.push((freq * x).sin());
        out.push((freq * x).cos());
        freq *= 2.0;
    }
}

/// Which parameters each conditional's network predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMode {
    /// Predicts both masses and widths (2k outputs).
    AdaCat,
    /// Predicts masses over equal-width bins (k outputs).
    Uniform,
    /// Predicts widths with equal mass per bin (k outputs).
    AdaptiveQuantile,
    /// Predicts masses over precomputed per-dimension widths (k outputs).
    FixedQuantile,
}

impl HeadMode {
    pub fn output_size(&self, k: usize) -> usize {
        match self {
            HeadMode::AdaCat => 2 * k,
            _ => k,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adacat" => Ok(HeadMode::AdaCat),
            "uniform" => Ok(HeadMode::Uniform),
            "adaptive-quantile" => Ok(HeadMode::AdaptiveQuantile),
            "fixed-quantile" => Ok(HeadMode::FixedQuantile),
            other => Err(AdaCatError::Domain(format!("unknown head mode {other:?}"))),
        }
    }
}

/// Dense layer, row-major `weights[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    fn glorot(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Self {
            in_dim,
            out_dim,
            weights: (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect(),
            biases: vec![0.0; out_dim],
        }
    }

    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// Per-dimension feed-forward network; hidden layers use ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

struct ForwardCache {
    /// Post-activation input of every layer, plus the final linear output.
    activations: Vec<Vec<f64>>,
    /// Pre-activation values of hidden layers (for the ReLU mask).
    pre_activations: Vec<Vec<f64>>,
}

impl Mlp {
    /// First-dimension net: a bias-only output layer.
    fn bias_only(out_dim: usize) -> Self {
        Self { layers: vec![Layer::zeros(0, out_dim)] }
    }

    fn new(in_dim: usize, hidden: &[usize], out_dim: usize, rng: &mut impl Rng) -> Self {
        assert!(!hidden.is_empty(), "at least one hidden layer");
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = in_dim;
        for &h in hidden {
            layers.push(Layer::glorot(prev, h, rng));
            prev = h;
        }
        // zero final layer: training starts from the exact uniform density
        layers.push(Layer::zeros(prev, out_dim));
        Self { layers }
    }

    fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input).0
    }

    fn forward_cached(&self, input: &[f64]) -> (Vec<f64>, ForwardCache) {
        let mut activations = vec![input.to_vec()];
        let mut pre_activations = Vec::new();
        let n_layers = self.layers.len();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.forward(activations.last().unwrap(), &mut out);
            if li + 1 < n_layers {
                pre_activations.push(out.clone());
                for v in &mut out {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(out);
        }
        let out = activations.last().unwrap().clone();
        (out, ForwardCache { activations, pre_activations })
    }

    /// Accumulates parameter gradients for `d_out` into `grad` (same shape as
    /// `self`); returns nothing since input gradients are never needed (the
    /// prefix is observed data).
    fn backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &mut Mlp) {
        let mut delta = d_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &cache.activations[li];
            let g = &mut grad.layers[li];
            for o in 0..layer.out_dim {
                g.biases[o] += delta[o];
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += delta[o] * x;
                }
            }
            if li > 0 {
                let mut next = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (nx, w) in next.iter_mut().zip(row) {
                        *nx += delta[o] * w;
                    }
                }
                // ReLU mask from the previous layer's pre-activations
                let pre = &cache.pre_activations[li - 1];
                for (nx, p) in next.iter_mut().zip(pre) {
                    if *p <= 0.0 {
                        *nx = 0.0;
                    }
                }
                delta = next;
            }
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }
}

/// Gradient accumulator shaped like the model's parameters.
pub type ModelGrad = Vec<Mlp>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArDensityModel {
    pub m: usize,
    pub k: usize,
    pub fourier: FourierConfig,
    pub head: HeadMode,
    /// Per-dimension precomputed widths; present exactly when the head mode
    /// is fixed-quantile.
    pub fixed_widths: Option<Vec<SimplexVector>>,
    pub hidden: Vec<usize>,
    pub nets: Vec<Mlp>,
}

impl ArDensityModel {
    pub fn new(
        m: usize,
        k: usize,
        fourier: FourierConfig,
        head: HeadMode,
        hidden: &[usize],
        fixed_widths: Option<Vec<SimplexVector>>,
        seed: u64,
    ) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(AdaCatError::Dimension("m and k must be positive".into()));
        }
        if hidden.is_empty() || hidden.iter().any(|&h| h == 0) {
            return Err(AdaCatError::Dimension("hidden widths must be positive".into()));
        }
        match (&fixed_widths, head) {
            (Some(fw), HeadMode::FixedQuantile) => {
                if fw.len() != m || fw.iter().any(|w| w.len() != k) {
                    return Err(AdaCatError::Dimension(
                        "fixed widths must be one simplex of length k per dimension".into(),
                    ));
                }
            }
            (None, HeadMode::FixedQuantile) => {
                return Err(AdaCatError::Dimension(
                    "fixed-quantile head requires precomputed widths".into(),
                ));
            }
            (Some(_), _) => {
                return Err(AdaCatError::Dimension(
                    "fixed widths only valid with the fixed-quantile head".into(),
                ));
            }
            (None, _) => {}
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out_dim = head.output_size(k);
        let fpv = fourier.features_per_value();
        let nets = (0..m)
            .map(|t| {
                if t == 0 {
                    Mlp::bias_only(out_dim)
                } else {
                    Mlp::new(t * fpv, hidden, out_dim, &mut rng)
                }
            })
            .collect();
        Ok(Self { m, k, fourier, head, fixed_widths, hidden: hidden.to_vec(), nets })
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(Mlp::param_count).sum()
    }

    fn prefix_features(&self, x_prefix: &[f64]) -> Vec<f64> {
        let mut feats = Vec::with_capacity(x_prefix.len() * self.fourier.features_per_value());
        for &v in x_prefix {
            fourier_features(v, self.fourier.b, &mut feats);
        }
        feats
    }

    fn logits_from_output(&self, t: usize, out: &[f64]) -> LogitVector {
        let k = self.k;
        match self.head {
            HeadMode::AdaCat => LogitVector::new(out[..k].to_vec(), out[k..].to_vec()),
            HeadMode::Uniform => LogitVector::new(out.to_vec(), vec![0.0; k]),
            HeadMode::AdaptiveQuantile => LogitVector::new(vec![0.0; k], out.to_vec()),
            HeadMode::FixedQuantile => {
                let w = &self.fixed_widths.as_ref().expect("validated")[t];
                LogitVector::new(out.to_vec(), w.values().iter().map(|v| v.ln()).collect())
            }
        }
    }

    /// Forward pass of dimension `t`'s network (0-based) on an observed
    /// prefix of `t` values.
    pub fn conditional_logits(&self, t: usize, x_prefix: &[f64]) -> Result<LogitVector> {
        if t >= self.m || x_prefix.len() != t {
            return Err(AdaCatError::Dimension(format!(
                "dimension {t} expects a prefix of length {t}, got {}",
                x_prefix.len()
            )));
        }
        let feats = self.prefix_features(x_prefix);
        let out = self.nets[t].forward(&feats);
        Ok(self.logits_from_output(t, out.as_slice()))
    }

    pub fn conditional_params(&self, t: usize, x_prefix: &[f64]) -> Result<AdaCatParams> {
        self.conditional_logits(t, x_prefix)?.to_params()
    }

    /// Sum over dimensions of the conditional log density at `x`.
    pub fn joint_log_likelihood(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.m {
            return Err(AdaCatError::Dimension(format!(
                "expected {} dimensions, got {}",
                self.m,
                x.len()
            )));
        }
        let mut total = 0.0;
        for t in 0..self.m {
            let params = self.conditional_params(t, &x[..t])?;
            total += params.log_pdf(x[t])?;
        }
        Ok(total)
    }

    pub fn zero_grad(&self) -> ModelGrad {
        self.nets.iter().map(Mlp::zeros_like).collect()
    }

    fn head_loss(
        &self,
        t: usize,
        logits: &LogitVector,
        kernel: Option<&SmoothingKernel>,
        x_t: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let grad: SmoothedLossGrad = match (self.head, kernel) {
            (HeadMode::FixedQuantile, Some(kern)) => {
                let w = &self.fixed_widths.as_ref().expect("validated")[t];
                smoothed_loglik_grad_fixed_w(w, &logits.phi, kern, x_t)
            }
            (HeadMode::FixedQuantile, None) => {
                let w = &self.fixed_widths.as_ref().expect("validated")[t];
                unsmoothed_loglik_grad_fixed_w(w, &logits.phi, x_t)?
            }
            (_, Some(kern)) => smoothed_loglik_grad(logits, kern, x_t),
            (_, None) => unsmoothed_loglik_grad(logits, x_t)?,
        };
        let d_out = match self.head {
            HeadMode::AdaCat => {
                let mut d = grad.d_phi.clone();
                d.extend_from_slice(&grad.d_psi);
                d
            }
            HeadMode::Uniform | HeadMode::FixedQuantile => grad.d_phi.clone(),
            HeadMode::AdaptiveQuantile => grad.d_psi.clone(),
        };
        Ok((grad.value, d_out))
    }

    /// Mean per-sample objective over a batch (smoothed when a kernel is
    /// given, otherwise the raw log-likelihood) with exact gradients for
    /// every network weight.
    pub fn batch_objective(
        &self,
        batch: &[Vec<f64>],
        kernel: Option<&SmoothingKernel>,
    ) -> Result<(f64, ModelGrad)> {
        if batch.is_empty() {
            return Err(AdaCatError::InsufficientData("empty batch".into()));
        }
        let mut grads = self.zero_grad();
        let mut total = 0.0;
        for (d, sample) in batch.iter().enumerate() {
            if sample.len() != self.m {
                return Err(AdaCatError::Dimension(format!(
                    "sample {d} has {} dimensions, expected {}",
                    sample.len(),
                    self.m
                )));
            }
            for t in 0..self.m {
                let feats = self.prefix_features(&sample[..t]);
                let (out, cache) = self.nets[t].forward_cached(&feats);
                let logits = self.logits_from_output(t, &out);
                let (value, d_out) = self.head_loss(t, &logits, kernel, sample[t])?;
                if !value.is_finite() {
                    return Err(AdaCatError::NonFiniteLoss { sample: d, dim: t });
                }
                total += value;
                self.nets[t].backward(&cache, &d_out, &mut grads[t]);
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for net in &mut grads {
            for layer in &mut net.layers {
                for w in &mut layer.weights {
                    *w *= scale;
                }
                for b in &mut layer.biases {
                    *b *= scale;
                }
            }
        }
        Ok((total * scale, grads))
    }

    /// Draws one joint sample dimension by dimension.
    pub fn ar_sample(&self, rng: &mut ChaCha8Rng, mode: SampleMode) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.m);
        for t in 0..self.m {
            let params = self.conditional_params(t, &x)?;
            let u: f64 = rng.gen_range(0.0..1.0);
            x.push(params.sample(u, mode)?);
        }
        Ok(x)
    }

    /// Flattens all parameters in a fixed order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for net in &self.nets {
            for layer in &net.layers {
                flat.extend_from_slice(&layer.weights);
                flat.extend_from_slice(&layer.biases);
            }
        }
        flat
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut idx = 0;
        for net in &mut self.nets {
            for layer in &mut net.layers {
                let nw = layer.weights.len();
                layer.weights.copy_from_slice(&flat[idx..idx + nw]);
                idx += nw;
                let nb = layer.biases.len();
                layer.biases.copy_from_slice(&flat[idx..idx + nb]);
                idx += nb;
            }
        }
        assert_eq!(idx, flat.len(), "flat parameter length mismatch");
    }

    pub fn flatten_grad(&self, grad: &ModelGrad) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for net in grad {
            for layer in &net.layers {
                flat.extend_from_slice(&layer.weights);
                flat.extend_from_slice(&layer.biases);
            }
        }
        flat
    }
}

/// Current checkpoint schema version.
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// On-disk model document: the model plus the dataset scaling needed to map
/// samples back to original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub model: ArDensityModel,
    pub scale_meta: Vec<ScaleMeta>,
}

impl Checkpoint {
    pub fn new(model: ArDensityModel, scale_meta: Vec<ScaleMeta>) -> Self {
        Self { schema_version: CHECKPOINT_SCHEMA_VERSION, model, scale_meta }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Checkpoint = serde_json::from_str(text)?;
        if doc.schema_version > CHECKPOINT_SCHEMA_VERSION {
            return Err(AdaCatError::Checkpoint(format!(
                "unsupported schema version {}",
                doc.schema_version
            )));
        }
        if doc.scale_meta.len() != doc.model.m {
            return Err(AdaCatError::Checkpoint(
                "scale metadata does not match model dimensionality".into(),
            ));
        }
        validate_model(&doc.model)?;
        Ok(doc)
    }
}

fn validate_model(model: &ArDensityModel) -> Result<()> {
    if model.m == 0 || model.k == 0 || model.nets.len() != model.m {
        return Err(AdaCatError::Checkpoint("inconsistent model shape".into()));
    }
    if model.fourier.b > 32 {
        return Err(AdaCatError::Checkpoint("fourier pairs out of range".into()));
    }
    let out_dim = model.head.output_size(model.k);
    let fpv = model.fourier.features_per_value();
    match (&model.fixed_widths, model.head) {
        (Some(fw), HeadMode::FixedQuantile) => {
            if fw.len() != model.m || fw.iter().any(|w| w.len() != model.k) {
                return Err(AdaCatError::Checkpoint("fixed widths shape mismatch".into()));
            }
        }
        (None, HeadMode::FixedQuantile) | (Some(_), _) => {
            return Err(AdaCatError::Checkpoint(
                "fixed widths present iff head is fixed-quantile".into(),
            ));
        }
        (None, _) => {}
    }
    for (t, net) in model.nets.iter().enumerate() {
        if net.layers.is_empty() {
            return Err(AdaCatError::Checkpoint(format!("net {t} has no layers")));
        }
        let mut prev = t * fpv;
        for layer in &net.layers {
            if layer.in_dim != prev
                || layer.weights.len() != layer.in_dim * layer.out_dim
                || layer.biases.len() != layer.out_dim
                || layer.weights.iter().chain(&layer.biases).any(|v| !v.is_finite())
            {
                return Err(AdaCatError::Checkpoint(format!("net {t} layer shape/value mismatch")));
            }
            prev = layer.out_dim;
        }
        if prev != out_dim {
            return Err(AdaCatError::Checkpoint(format!("net {t} output size mismatch")));
        }
    }
    Ok(())
}
