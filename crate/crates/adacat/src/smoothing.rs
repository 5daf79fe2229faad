//! Target-smoothing kernels and the closed-form smoothed log-likelihood.
//!
//! Replacing the point log-likelihood at a target `x` with its expectation
//! under a narrow kernel centered at `x` turns the discontinuous
//! piecewise-uniform objective into a differentiable one. Because the model
//! density is constant on each bin, the expectation reduces to a sum of
//! kernel-CDF differences at the bin edges times the per-bin log density:
//!
//! ```text
//! L = sum_j (F(c_j + w_j) - F(c_j)) * (log h_j - log w_j)
//! ```
//!
//! Both the value and its exact gradients with respect to the unnormalized
//! logits (phi for masses, psi for widths) are computed here in closed form.
//! Kernels truncated at the support boundaries are renormalized to integrate
//! to 1 over `[0, 1)`, so the edge-CDF differences always sum to 1.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::distribution::{AdaCatParams, SimplexVector};
use crate::error::Result;
use crate::EPS_WIDTH;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// A smoothing density centered at a target value, truncated to `[0, 1)` and
/// renormalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SmoothingKernel {
    /// `Unif[x - lambda/2, x + lambda/2)` truncated to the support.
    Uniform { lambda: f64 },
    /// `N(x, lambda^2)` truncated to the support.
    TruncatedGaussian { lambda: f64 },
}

impl SmoothingKernel {
    pub fn lambda(&self) -> f64 {
        match *self {
            SmoothingKernel::Uniform { lambda } => lambda,
            SmoothingKernel::TruncatedGaussian { lambda } => lambda,
        }
    }

    /// Untruncated CDF of the kernel centered at `center`.
    fn base_cdf(&self, center: f64, t: f64) -> f64 {
        match *self {
            SmoothingKernel::Uniform { lambda } => {
                ((t - (center - lambda / 2.0)) / lambda).clamp(0.0, 1.0)
            }
            SmoothingKernel::TruncatedGaussian { lambda } => {
                std_normal_cdf((t - center) / lambda)
            }
        }
    }

    fn base_pdf(&self, center: f64, t: f64) -> f64 {
        match *self {
            SmoothingKernel::Uniform { lambda } => {
                // closed on both ends so quadrature segments clipped exactly
                // to the support see a constant integrand
                if t >= center - lambda / 2.0 && t <= center + lambda / 2.0 {
                    1.0 / lambda
                } else {
                    0.0
                }
            }
            SmoothingKernel::TruncatedGaussian { lambda } => {
                std_normal_pdf((t - center) / lambda) / lambda
            }
        }
    }

    /// Mass of the untruncated kernel inside `[0, 1)`; the renormalizer.
    fn support_mass(&self, center: f64) -> f64 {
        self.base_cdf(center, 1.0) - self.base_cdf(center, 0.0)
    }

    /// CDF of the truncated, renormalized kernel: 0 at `t <= 0`, 1 at `t >= 1`.
    pub fn cdf(&self, center: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let z = self.support_mass(center);
        ((self.base_cdf(center, t) - self.base_cdf(center, 0.0)) / z).clamp(0.0, 1.0)
    }

    /// Density of the truncated, renormalized kernel; zero outside the
    /// support. Evaluated on the closed interval so quadrature endpoints at
    /// the boundary see the interior value.
    pub fn pdf(&self, center: f64, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        self.base_pdf(center, t) / self.support_mass(center)
    }
}

/// Unnormalized log masses (`phi`) and log widths (`psi`) for one conditional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitVector {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl LogitVector {
    pub fn new(phi: Vec<f64>, psi: Vec<f64>) -> Self {
        assert_eq!(phi.len(), psi.len(), "phi and psi must have equal length");
        Self { phi, psi }
    }

    pub fn k(&self) -> usize {
        self.phi.len()
    }

    /// Materializes the distribution the logits parameterize.
    pub fn to_params(&self) -> Result<AdaCatParams> {
        let w = softmax_normalize(&self.psi);
        let h = SimplexVector::new(softmax(&self.phi))?;
        AdaCatParams::new(w, h)
    }
}

/// Objective value with exact gradients w.r.t. the unnormalized logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedLossGrad {
    pub value: f64,
    pub d_phi: Vec<f64>,
    pub d_psi: Vec<f64>,
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax with the width floor applied: entries clamped to `EPS_WIDTH` and
/// renormalized.
pub fn softmax_normalize(logits: &[f64]) -> SimplexVector {
    let mut p = softmax(logits);
    let mut clipped = false;
    for v in &mut p {
        if *v < EPS_WIDTH {
            *v = EPS_WIDTH;
            clipped = true;
        }
    }
    if clipped {
        let sum: f64 = p.iter().sum();
        for v in &mut p {
            *v /= sum;
        }
    }
    SimplexVector::new(p).expect("softmax output is a simplex")
}

/// Closed-form smoothed log-likelihood given already-normalized widths and
/// masses. Returns the value together with the edge-CDF differences, which
/// gradient computation reuses.
fn smoothed_value(w: &[f64], h: &[f64], kernel: &SmoothingKernel, x: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let k = w.len();
    let mut edges = Vec::with_capacity(k + 1);
    let mut acc = 0.0;
    edges.push(0.0);
    for &wi in w {
        acc += wi;
        edges.push(acc);
    }
    edges[k] = 1.0;
    let cdf_at: Vec<f64> = edges.iter().map(|&t| kernel.cdf(x, t)).collect();
    let mut value = 0.0;
    let mut delta_f = Vec::with_capacity(k);
    for j in 0..k {
        let df = cdf_at[j + 1] - cdf_at[j];
        delta_f.push(df);
        if df > 0.0 {
            value += df * (h[j].ln() - w[j].ln());
        }
    }
    (value, delta_f, edges)
}

/// Smoothed log-likelihood of a target `x` under the distribution defined by
/// `logits`, in nats.
pub fn smoothed_loglik(logits: &LogitVector, kernel: &SmoothingKernel, x: f64) -> f64 {
    let w = softmax(&logits.psi);
    let h = softmax(&logits.phi);
    smoothed_value(&w, &h, kernel, x).0
}

/// Smoothed log-likelihood with exact analytic gradients w.r.t. `phi` and
/// `psi`, including the dependence of the bin edges on `psi`.
pub fn smoothed_loglik_grad(
    logits: &LogitVector,
    kernel: &SmoothingKernel,
    x: f64,
) -> SmoothedLossGrad {
    let k = logits.k();
    let w = softmax(&logits.psi);
    let h = softmax(&logits.phi);
    let (value, delta_f, edges) = smoothed_value(&w, &h, kernel, x);

    // d/dphi_i: only through log h_j; softmax Jacobian collapses because the
    // truncated kernel's edge-CDF differences sum to 1.
    let sum_df: f64 = delta_f.iter().sum();
    let d_phi: Vec<f64> = (0..k).map(|i| delta_f[i] - h[i] * sum_df).collect();

    // d/dpsi: through both the log-width term and the edge positions. With
    // a_j = log h_j - log w_j, the derivative of the objective w.r.t. an
    // unconstrained width w_l is
    //   g_l = -delta_f[l] / w_l + sum_{j >= l, interior} pdf(t_j) (a_j - a_{j+1})
    // (the last edge is pinned at 1 under the softmax and cancels in the
    // simplex projection). The psi gradient is the softmax-projected g.
    let a: Vec<f64> = (0..k).map(|j| h[j].ln() - w[j].ln()).collect();
    let mut g = vec![0.0; k];
    let mut suffix = 0.0;
    for l in (0..k).rev() {
        // interior edge t_{l+1} separates bins l and l+1 (0-based)
        if l + 1 < k {
            suffix += kernel.pdf(x, edges[l + 1]) * (a[l] - a[l + 1]);
        }
        g[l] = -delta_f[l] / w[l] + suffix;
    }
    let dot: f64 = (0..k).map(|l| w[l] * g[l]).sum();
    let d_psi: Vec<f64> = (0..k).map(|i| w[i] * (g[i] - dot)).collect();

    SmoothedLossGrad { value, d_phi, d_psi }
}

/// Smoothed log-likelihood and mass-logit gradient for a head whose widths
/// are fixed (quantile baselines): `psi` plays no role.
pub fn smoothed_loglik_grad_fixed_w(
    w: &SimplexVector,
    phi: &[f64],
    kernel: &SmoothingKernel,
    x: f64,
) -> SmoothedLossGrad {
    let k = phi.len();
    let h = softmax(phi);
    let (value, delta_f, _) = smoothed_value(w.values(), &h, kernel, x);
    let sum_df: f64 = delta_f.iter().sum();
    let d_phi: Vec<f64> = (0..k).map(|i| delta_f[i] - h[i] * sum_df).collect();
    SmoothedLossGrad { value, d_phi, d_psi: vec![0.0; k] }
}

/// Non-smoothed per-sample objective `log h_i - log w_i` with the pointwise
/// gradients that hold the bin indicator fixed — the biased estimator whose
/// failure mode motivates smoothing.
pub fn unsmoothed_loglik_grad(logits: &LogitVector, x: f64) -> Result<SmoothedLossGrad> {
    let k = logits.k();
    let w = softmax(&logits.psi);
    let h = softmax(&logits.phi);
    let params = AdaCatParams::new(SimplexVector::new(w.clone())?, SimplexVector::new(h.clone())?)?;
    let hit = params.bin_index(x)?;
    let i = hit.index - 1;
    let value = h[i].ln() - w[i].ln();
    let d_phi: Vec<f64> = (0..k).map(|j| (j == i) as u8 as f64 - h[j]).collect();
    let d_psi: Vec<f64> = (0..k).map(|j| w[j] - (j == i) as u8 as f64).collect();
    Ok(SmoothedLossGrad { value, d_phi, d_psi })
}

/// Fixed-width variant of [`unsmoothed_loglik_grad`].
pub fn unsmoothed_loglik_grad_fixed_w(
    w: &SimplexVector,
    phi: &[f64],
    x: f64,
) -> Result<SmoothedLossGrad> {
    let k = phi.len();
    let h = softmax(phi);
    let params = AdaCatParams::new(w.clone(), SimplexVector::new(h.clone())?)?;
    let hit = params.bin_index(x)?;
    let i = hit.index - 1;
    let value = h[i].ln() - w[i].ln();
    let d_phi: Vec<f64> = (0..k).map(|j| (j == i) as u8 as f64 - h[j]).collect();
    Ok(SmoothedLossGrad { value, d_phi, d_psi: vec![0.0; k] })
}
