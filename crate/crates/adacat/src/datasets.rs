//! Synthetic fixtures, CSV ingestion and scaling into the unit hypercube.
//!
//! All model-facing data lives in `[0, 1)^m`; per-dimension affine scaling
//! metadata is kept so log-likelihoods can be reported in the original units
//! via the change-of-variables correction `sum_t log(range_t)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::distribution::SimplexVector;
use crate::error::{AdaCatError, Result};
use crate::EPS_WIDTH;

/// Largest f64 strictly below 1; the clamp target for boundary stragglers.
pub fn max_unit_value() -> f64 {
    f64::from_bits(1.0f64.to_bits() - 1)
}

/// Per-dimension affine map: `scaled = (raw - offset) / range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMeta {
    pub offset: f64,
    pub range: f64,
}

impl ScaleMeta {
    pub fn scale(&self, raw: f64) -> f64 {
        ((raw - self.offset) / self.range).clamp(0.0, max_unit_value())
    }

    pub fn unscale(&self, scaled: f64) -> f64 {
        scaled * self.range + self.offset
    }
}

/// Samples scaled into `[0, 1)^m` plus the metadata to undo the scaling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Vec<f64>>,
    pub scale_meta: Vec<ScaleMeta>,
    pub name: String,
    /// Differential entropy of the generating density in scaled units, when
    /// known analytically (synthetic fixtures); the floor for any model NLL.
    pub true_nll: Option<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn m(&self) -> usize {
        self.scale_meta.len()
    }

    /// `sum_t log(range_t)` — the change-of-variables correction taking
    /// scaled-unit NLL to original-unit NLL.
    pub fn log_range_sum(&self) -> f64 {
        self.scale_meta.iter().map(|s| s.range.ln()).sum()
    }

    pub fn unscale_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.scale_meta)
            .map(|(&x, s)| s.unscale(x))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: Dataset = serde_json::from_str(text)?;
        if ds.samples.iter().any(|r| r.len() != ds.scale_meta.len()) {
            return Err(AdaCatError::Dimension(
                "snapshot row length does not match scale metadata".into(),
            ));
        }
        Ok(ds)
    }
}

/// One Gaussian component in original units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<MixtureComponent>,
}

impl MixtureSpec {
    /// The canonical two-scale fixture: a narrow and a wide Gaussian.
    pub fn two_scale_canonical() -> Self {
        Self {
            components: vec![
                MixtureComponent { weight: 0.5, mean: -1.0, stddev: 0.05 },
                MixtureComponent { weight: 0.5, mean: 1.0, stddev: 0.5 },
            ],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(AdaCatError::Domain("mixture needs components".into()));
        }
        let wsum: f64 = self.components.iter().map(|c| c.weight).sum();
        if (wsum - 1.0).abs() > 1e-9 || self.components.iter().any(|c| c.stddev <= 0.0 || c.weight < 0.0)
        {
            return Err(AdaCatError::Domain("degenerate mixture spec".into()));
        }
        Ok(())
    }

    /// Density in original units.
    pub fn pdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let z = (x - c.mean) / c.stddev;
                c.weight * (-0.5 * z * z).exp()
                    / (c.stddev * (2.0 * std::f64::consts::PI).sqrt())
            })
            .sum()
    }

    /// Affine map covering every component's `+-4 sigma` interval.
    pub fn scale_meta(&self) -> ScaleMeta {
        let lo = self
            .components
            .iter()
            .map(|c| c.mean - 4.0 * c.stddev)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .components
            .iter()
            .map(|c| c.mean + 4.0 * c.stddev)
            .fold(f64::NEG_INFINITY, f64::max);
        ScaleMeta { offset: lo, range: hi - lo }
    }
}

/// Differential entropy of the scaled mixture by composite-Simpson quadrature
/// over `[0, 1]`.
pub fn mixture_entropy_scaled(spec: &MixtureSpec) -> f64 {
    let meta = spec.scale_meta();
    // scaled density: p_s(y) = range * p(offset + y * range)
    let p = |y: f64| meta.range * spec.pdf(meta.offset + y * meta.range);
    let f = |y: f64| {
        let d = p(y);
        if d > 0.0 {
            -d * d.ln()
        } else {
            0.0
        }
    };
    let n = 200_000usize; // even
    let step = 1.0 / n as f64;
    let mut total = f(0.0) + f(1.0);
    for j in 1..n {
        total += f(j as f64 * step) * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    total * step / 3.0
}

/// Draws `n` samples from a 1-D Gaussian mixture, scaled into `[0, 1)`.
pub fn synth_mixture_1d(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(AdaCatError::InsufficientData("n must be >= 1".into()));
    }
    let meta = spec.scale_meta();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut u: f64 = rng.gen_range(0.0..1.0);
        let mut comp = &spec.components[spec.components.len() - 1];
        for c in &spec.components {
            if u < c.weight {
                comp = c;
                break;
            }
            u -= c.weight;
        }
        let normal = Normal::new(comp.mean, comp.stddev).expect("validated stddev");
        let raw = normal.sample(&mut rng);
        samples.push(vec![meta.scale(raw)]);
    }
    Ok(Dataset {
        samples,
        scale_meta: vec![meta],
        name: "mixture1d".into(),
        true_nll: Some(mixture_entropy_scaled(spec)),
    })
}

/// Radius multiplier of the canonical spiral fixture, in original units.
pub const SPIRAL_RADIUS_SCALE: f64 = 0.1;

/// Two-arm Archimedean spiral: angle uniform on `[0, 3*pi]`, radius
/// proportional to angle, second arm rotated by pi. Points are generated in
/// mirrored pairs, so with zero noise the raw point cloud is symmetric about
/// the origin.
pub fn synth_two_spirals(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(AdaCatError::InsufficientData(
            "two-spirals needs n >= 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_angle = 3.0 * std::f64::consts::PI;
    let extent = SPIRAL_RADIUS_SCALE * max_angle + 4.0 * noise_sd;
    let meta = ScaleMeta { offset: -extent, range: 2.0 * extent };
    let noise = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");
    let mut samples = Vec::with_capacity(n);
    let pairs = n / 2 + n % 2;
    for _ in 0..pairs {
        let angle: f64 = rng.gen_range(0.0..max_angle);
        let r = SPIRAL_RADIUS_SCALE * angle;
        let base = [r * angle.cos(), r * angle.sin()];
        for arm in 0..2 {
            if samples.len() == n {
                break;
            }
            let sign = if arm == 0 { 1.0 } else { -1.0 };
            let mut row = Vec::with_capacity(2);
            for &coord in &base {
                let jitter = if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                row.push(meta.scale(sign * coord + jitter));
            }
            samples.push(row);
        }
    }
    Ok(Dataset {
        samples,
        scale_meta: vec![meta, meta],
        name: "twospirals".into(),
        true_nll: None,
    })
}

/// Parses headerless (or single-header) comma-separated numeric text and
/// min-max scales each column into `[0, 1)`.
pub fn parse_csv_str(text: &str, declared_dims: usize, header: bool) -> Result<Dataset> {
    if declared_dims == 0 {
        return Err(AdaCatError::Dimension("declared_dims must be >= 1".into()));
    }
    let mut raw: Vec<Vec<f64>> = Vec::new();
    for (row_idx, line) in text.lines().enumerate() {
        if header && row_idx == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != declared_dims {
            return Err(AdaCatError::Parse {
                row: row_idx + 1,
                col: cells.len(),
                msg: format!("expected {declared_dims} columns, got {}", cells.len()),
            });
        }
        let mut row = Vec::with_capacity(declared_dims);
        for (col_idx, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| AdaCatError::Parse {
                row: row_idx + 1,
                col: col_idx + 1,
                msg: format!("not a number: {:?}", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(AdaCatError::Parse {
                    row: row_idx + 1,
                    col: col_idx + 1,
                    msg: "non-finite value".into(),
                });
            }
            row.push(v);
        }
        raw.push(row);
    }
    if raw.is_empty() {
        return Err(AdaCatError::InsufficientData("no data rows".into()));
    }
    let mut scale_meta = Vec::with_capacity(declared_dims);
    for col in 0..declared_dims {
        let lo = raw.iter().map(|r| r[col]).fold(f64::INFINITY, f64::min);
        let hi = raw.iter().map(|r| r[col]).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo == 0.0 {
            return Err(AdaCatError::ConstantColumn(col + 1));
        }
        // inflate the range so the column max stays strictly below 1
        scale_meta.push(ScaleMeta { offset: lo, range: (hi - lo) * (1.0 + 1e-9) + 1e-12 });
    }
    let samples = raw
        .into_iter()
        .map(|row| {
            row.into_iter()
                .zip(&scale_meta)
                .map(|(v, s)| s.scale(v))
                .collect()
        })
        .collect();
    Ok(Dataset {
        samples,
        scale_meta,
        name: "csv".into(),
        true_nll: None,
    })
}

pub fn load_csv(path: &Path, declared_dims: usize, header: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut ds = parse_csv_str(&text, declared_dims, header)?;
    ds.name = path.display().to_string();
    Ok(ds)
}

/// Per-dimension equal-mass bin widths from empirical marginal quantiles,
/// floored at the width minimum and renormalized.
pub fn marginal_quantiles(dataset: &Dataset, k: usize) -> Result<Vec<SimplexVector>> {
    if dataset.n() < k {
        return Err(AdaCatError::InsufficientData(format!(
            "need at least k = {k} samples, have {}",
            dataset.n()
        )));
    }
    let n = dataset.n();
    let mut out = Vec::with_capacity(dataset.m());
    for dim in 0..dataset.m() {
        let mut col: Vec<f64> = dataset.samples.iter().map(|r| r[dim]).collect();
        col.sort_by(f64::total_cmp);
        let mut edges = Vec::with_capacity(k + 1);
        edges.push(0.0);
        for i in 1..k {
            edges.push(col[i * n / k]);
        }
        edges.push(1.0);
        let mut widths: Vec<f64> = edges.windows(2).map(|e| (e[1] - e[0]).max(EPS_WIDTH)).collect();
        let sum: f64 = widths.iter().sum();
        for w in &mut widths {
            *w /= sum;
        }
        out.push(SimplexVector::new(widths)?);
    }
    Ok(out)
}
