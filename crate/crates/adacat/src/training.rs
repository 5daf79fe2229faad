//! Adam-based maximum-likelihood training over the smoothed or raw
//! objective, with per-epoch metrics (validation NLL, bits per dimension,
//! minimum conditional bin width) that make bin collapse observable.
//!
//! Training is deterministic given the config seed: data shuffling uses a
//! dedicated ChaCha8 stream and the batch reduction runs in sample order.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::armodel::ArDensityModel;
use crate::datasets::Dataset;
use crate::error::{AdaCatError, Result};
use crate::smoothing::SmoothingKernel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs between learning-rate halvings; 0 keeps the rate constant.
    pub lr_halving_period: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub smoothing: Option<SmoothingKernel>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            lr: 3e-4,
            lr_halving_period: 100,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            smoothing: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(AdaCatError::Domain("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(AdaCatError::Domain("betas must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(AdaCatError::Domain("batch size must be at least 1".into()));
        }
        Ok(())
    }

    /// Effective learning rate for a 1-based epoch under the halving schedule.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        if self.lr_halving_period == 0 {
            self.lr
        } else {
            self.lr * 0.5f64.powi(((epoch - 1) / self.lr_halving_period) as i32)
        }
    }
}

/// First/second moment accumulators for Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self { step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }
}

/// One bias-corrected Adam ascent step (the objective is a log-likelihood,
/// so parameters move along the gradient). Decoupled weight decay shrinks
/// parameters toward zero independently of the moment estimates.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(AdaCatError::Dimension("parameter/gradient shape mismatch".into()));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(AdaCatError::Domain("non-finite gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] += lr * m_hat / (v_hat.sqrt() + config.adam_eps);
        params[i] -= lr * config.weight_decay * params[i];
    }
    Ok(())
}

/// One line of the JSONL training report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective_nats: f64,
    pub val_nll_nats: f64,
    pub val_bits_per_dim: f64,
    pub min_bin_width: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Validation NLL of the freshly initialized model, in model units.
    pub init_val_nll_nats: f64,
    pub records: Vec<EpochRecord>,
    /// Diagnostic set when training stopped early on a non-finite loss.
    pub abort_reason: Option<String>,
}

impl TrainReport {
    pub fn aborted(&self) -> bool {
        self.abort_reason.is_some()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Evaluation of a model on a scaled dataset. NLL in model units is over the
/// unit cube; the corrected figure adds the log of each dimension's original
/// range per the change of variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub nll_nats_model_units: f64,
    pub nll_nats: f64,
    pub bits_per_dim: f64,
    /// `(sample, dimension)` of the first zero-density point, when the NLL
    /// is infinite.
    pub offending: Option<(usize, usize)>,
}

pub fn evaluate_rows(model: &ArDensityModel, rows: &[Vec<f64>], log_range_sum: f64) -> Result<EvalResult> {
    if rows.is_empty() {
        return Err(AdaCatError::InsufficientData("no evaluation rows".into()));
    }
    let mut total = 0.0;
    let mut offending = None;
    for (i, row) in rows.iter().enumerate() {
        let ll = model.joint_log_likelihood(row)?;
        if ll == f64::NEG_INFINITY {
            if offending.is_none() {
                // find the dimension with zero mass
                for t in 0..model.m {
                    let params = model.conditional_params(t, &row[..t])?;
                    if params.log_pdf(row[t])? == f64::NEG_INFINITY {
                        offending = Some((i, t));
                        break;
                    }
                }
            }
            total = f64::INFINITY;
        } else if total.is_finite() {
            total -= ll;
        }
    }
    let nll_model = if total.is_finite() { total / rows.len() as f64 } else { f64::INFINITY };
    Ok(EvalResult {
        nll_nats_model_units: nll_model,
        nll_nats: nll_model + log_range_sum,
        bits_per_dim: nll_model / (model.m as f64 * std::f64::consts::LN_2),
        offending,
    })
}

pub fn evaluate(model: &ArDensityModel, dataset: &Dataset) -> Result<EvalResult> {
    evaluate_rows(model, &dataset.samples, dataset.log_range_sum())
}

/// Smallest conditional bin width produced anywhere over the given rows.
pub fn min_bin_width(model: &ArDensityModel, rows: &[Vec<f64>]) -> Result<f64> {
    let mut min = f64::INFINITY;
    for row in rows {
        for t in 0..model.m {
            let params = model.conditional_params(t, &row[..t])?;
            for &w in params.widths().values() {
                min = min.min(w);
            }
        }
    }
    Ok(min)
}

/// Shuffles the dataset once with the config seed and holds out the last 10%
/// (at least one row) for validation.
pub fn split_dataset(dataset: &Dataset, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rows = dataset.samples.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5111_75ee_d000_0000);
    rows.shuffle(&mut rng);
    let n_val = (rows.len() / 10).clamp(1, rows.len().saturating_sub(1).max(1));
    let val = rows.split_off(rows.len() - n_val);
    (rows, val)
}

/// Mini-batch gradient-ascent training loop. Deterministic given the seed;
/// stops early with a diagnostic (partial report, `abort_reason` set) if any
/// loss turns non-finite.
pub fn train(model: &mut ArDensityModel, dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if dataset.samples.len() < 2 {
        return Err(AdaCatError::InsufficientData(
            "need at least 2 samples for a train/validation split".into(),
        ));
    }
    let (train_rows, val_rows) = split_dataset(dataset, config.seed);
    let log_range_sum = dataset.log_range_sum();

    let init_eval = evaluate_rows(model, &val_rows, log_range_sum)?;
    let mut report = TrainReport {
        init_val_nll_nats: init_eval.nll_nats_model_units,
        records: Vec::with_capacity(config.epochs),
        abort_reason: None,
    };

    let mut params = model.to_flat();
    let mut adam = AdamState::new(params.len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut batch: Vec<Vec<f64>> = Vec::with_capacity(config.batch_size);

    'epochs: for epoch in 1..=config.epochs {
        let started = Instant::now();
        let lr = config.lr_at_epoch(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_objective = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_rows[i].clone()));
            let (value, grads) = match model.batch_objective(&batch, config.smoothing.as_ref()) {
                Ok(out) => out,
                Err(AdaCatError::NonFiniteLoss { sample, dim }) => {
                    report.abort_reason = Some(format!(
                        "non-finite loss at epoch {epoch}, batch sample {sample}, dimension {dim}"
                    ));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let flat_grads = model.flatten_grad(&grads);
            if let Err(e) = adam_step(&mut params, &flat_grads, &mut adam, lr, config) {
                report.abort_reason = Some(format!("epoch {epoch}: {e}"));
                break 'epochs;
            }
            model.set_from_flat(&params);
            epoch_objective += value;
            n_batches += 1;
        }
        let eval = evaluate_rows(model, &val_rows, log_range_sum)?;
        report.records.push(EpochRecord {
            epoch,
            objective_nats: epoch_objective / n_batches.max(1) as f64,
            val_nll_nats: eval.nll_nats,
            val_bits_per_dim: eval.bits_per_dim,
            min_bin_width: min_bin_width(model, &val_rows)?,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(report)
}
