//! Brute-force verifiers kept independent of the closed-form implementation.
//!
//! Two quadrature routes evaluate the smoothed objective: an exact piecewise
//! one built from kernel-CDF differences over bin/kernel intersections, and an
//! adaptive-Simpson integration of the raw kernel-density-times-log-density
//! product. A shared bug between the analytic path and these routes would have
//! to survive three structurally different computations.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distribution::AdaCatParams;
use crate::error::{AdaCatError, Result};
use crate::smoothing::{softmax, unsmoothed_loglik_grad, LogitVector, SmoothingKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadMethod {
    /// Piecewise-exact integration: kernel mass per bin times the bin's
    /// constant log density.
    BinSplitExact,
    /// Recursive adaptive Simpson on the raw product, per bin.
    AdaptiveSimpson,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    pub method: QuadMethod,
    pub abs_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            method: QuadMethod::BinSplitExact,
            abs_tol: 1e-10,
            max_depth: 40,
        }
    }
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive_simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    if (left + right - whole).abs() <= 15.0 * tol || b - a < 1e-12 {
        return Ok(left + right + (left + right - whole) / 15.0);
    }
    if depth == 0 {
        return Err(AdaCatError::Domain(format!(
            "adaptive quadrature: max depth exceeded on [{a}, {b}]"
        )));
    }
    Ok(adaptive_simpson_rec(f, a, m, left, tol / 2.0, depth - 1)?
        + adaptive_simpson_rec(f, m, b, right, tol / 2.0, depth - 1)?)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    adaptive_simpson_rec(f, a, b, simpson(f, a, b), tol, depth)
}

/// Numeric evaluation of the smoothing integral
/// `int zeta(t | x) log f(t) dt` over the support.
pub fn quad_smoothed_loglik(
    params: &AdaCatParams,
    kernel: &SmoothingKernel,
    x: f64,
    config: &QuadratureConfig,
) -> Result<f64> {
    let edges = params.edges();
    let w = params.widths();
    let h = params.masses();
    match config.method {
        QuadMethod::BinSplitExact => {
            let mut total = 0.0;
            for j in 0..params.k() {
                let mass = kernel.cdf(x, edges[j + 1]) - kernel.cdf(x, edges[j]);
                if mass > 0.0 {
                    total += mass * (h[j].ln() - w[j].ln());
                }
            }
            Ok(total)
        }
        QuadMethod::AdaptiveSimpson => {
            // restrict to where the kernel has numerically relevant mass and
            // split at bin edges so each segment's integrand is smooth
            let lam = kernel.lambda();
            // clip to the kernel's (numerically) relevant support so segment
            // endpoints coincide with any density discontinuity
            let (klo, khi) = match kernel {
                SmoothingKernel::Uniform { .. } => (x - lam / 2.0, x + lam / 2.0),
                SmoothingKernel::TruncatedGaussian { .. } => (x - 12.0 * lam, x + 12.0 * lam),
            };
            let mut total = 0.0;
            for j in 0..params.k() {
                let a = edges[j].max(klo).max(0.0);
                let b = edges[j + 1].min(khi).min(1.0);
                if b <= a {
                    continue;
                }
                let log_density = h[j].ln() - w[j].ln();
                let f = |t: f64| kernel.pdf(x, t) * log_density;
                // split at the kernel center for a better initial estimate of
                // peaked integrands
                if a < x && x < b {
                    total += adaptive_simpson(&f, a, x, config.abs_tol / 2.0, config.max_depth)?;
                    total += adaptive_simpson(&f, x, b, config.abs_tol / 2.0, config.max_depth)?;
                } else {
                    total += adaptive_simpson(&f, a, b, config.abs_tol, config.max_depth)?;
                }
            }
            Ok(total)
        }
    }
}

/// Central finite differences of an arbitrary scalar objective.
pub fn finite_diff_grad(objective: impl Fn(&[f64]) -> f64, params: &[f64], step: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(params.len());
    let mut work = params.to_vec();
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + step;
        let plus = objective(&work);
        work[i] = orig - step;
        let minus = objective(&work);
        work[i] = orig;
        grad.push((plus - minus) / (2.0 * step));
    }
    grad
}

/// Single-sample (Monte-Carlo) estimate of the smoothed objective: average of
/// the non-smoothed log density at kernel perturbations of `x`. Converges to
/// the analytic integral but, used as a training objective, does not prevent
/// bin collapse.
pub fn mc_smoothed_loglik(
    logits: &LogitVector,
    kernel: &SmoothingKernel,
    x: f64,
    n_draws: usize,
    seed: u64,
) -> Result<f64> {
    let params = logits.to_params()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n_draws {
        let u: f64 = rng.gen_range(0.0..1.0);
        let draw = kernel_icdf(kernel, x, u);
        total += params.log_pdf(draw.min(next_below_one()))?;
    }
    Ok(total / n_draws as f64)
}

fn next_below_one() -> f64 {
    f64::from_bits(1.0f64.to_bits() - 1)
}

/// Inverse CDF of the truncated kernel by bisection; the CDF is monotone on
/// `[0, 1]`.
fn kernel_icdf(kernel: &SmoothingKernel, center: f64, u: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if kernel.cdf(center, mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One evaluation point of the gradient-bias demonstration.
#[derive(Debug, Clone, Serialize)]
pub struct BiasPoint {
    /// Parameter point, flat `[psi_1, psi_2, phi_1, phi_2]`.
    pub theta: Vec<f64>,
    /// Gradient of the exact expected log-likelihood (finite differences of
    /// the piecewise-exact integral).
    pub true_grad: Vec<f64>,
    /// Expectation of the per-sample non-smoothed gradient over the data
    /// distribution.
    pub mc_expected_grad: Vec<f64>,
    pub difference: Vec<f64>,
    /// The missing terms `sum_j log(h_j/w_j) grad w_j`, evaluated in closed
    /// form for comparison.
    pub symbolic_missing_terms: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasDemoReport {
    /// Symmetric point `w = h = (0.5, 0.5)`: the log-ratio terms vanish and
    /// the bias is zero.
    pub symmetric: BiasPoint,
    /// Asymmetric point `w = (0.5, 0.5), h = (0.25, 0.75)` where the bias is
    /// strictly non-zero in the psi components.
    pub asymmetric: BiasPoint,
    pub tolerance: f64,
    pub tolerance_met: bool,
}

/// Expected log-likelihood of uniform data under the logits' distribution,
/// integrated exactly bin by bin.
fn expected_loglik_uniform_data(theta: &[f64]) -> f64 {
    let k = theta.len() / 2;
    let w = softmax(&theta[..k]);
    let h = softmax(&theta[k..]);
    (0..k).map(|j| w[j] * (h[j].ln() - w[j].ln())).sum()
}

fn bias_point(psi: [f64; 2], phi: [f64; 2]) -> BiasPoint {
    let theta = vec![psi[0], psi[1], phi[0], phi[1]];
    let true_grad = finite_diff_grad(expected_loglik_uniform_data, &theta, 1e-6);

    // E_x[grad] over x ~ Unif[0,1): each bin is hit with probability w_j and
    // the per-sample gradient is constant on the bin
    let logits = LogitVector::new(phi.to_vec(), psi.to_vec());
    let params = logits.to_params().expect("valid fixture");
    let w = params.widths();
    let mut expected = vec![0.0; 4];
    for j in 0..2 {
        let mid = 0.5 * (params.edges()[j] + params.edges()[j + 1]);
        let g = unsmoothed_loglik_grad(&logits, mid).expect("interior point");
        for i in 0..2 {
            expected[i] += w[j] * g.d_psi[i];
            expected[2 + i] += w[j] * g.d_phi[i];
        }
    }

    let difference: Vec<f64> = true_grad
        .iter()
        .zip(&expected)
        .map(|(t, e)| t - e)
        .collect();

    // missing terms: sum_j a_j * d w_j / d theta, with a_j = log(h_j / w_j);
    // w depends only on psi, so the phi components are zero
    let h = params.masses();
    let a: Vec<f64> = (0..2).map(|j| h[j].ln() - w[j].ln()).collect();
    let mut symbolic = vec![0.0; 4];
    for i in 0..2 {
        for j in 0..2 {
            let dw = w[j] * (((j == i) as u8 as f64) - w[i]);
            symbolic[i] += a[j] * dw;
        }
    }

    BiasPoint {
        theta,
        true_grad,
        mc_expected_grad: expected,
        difference,
        symbolic_missing_terms: symbolic,
    }
}

/// Reproduces the biased-gradient construction: uniform data, two bins. The
/// exact gradient of the expected log-likelihood carries extra terms through
/// the bin widths that the expectation of the per-sample gradient misses.
pub fn gradient_bias_demo() -> BiasDemoReport {
    let symmetric = bias_point([0.0, 0.0], [0.0, 0.0]);
    let asymmetric = bias_point([0.0, 0.0], [0.25f64.ln(), 0.75f64.ln()]);
    let tolerance = 1e-6;
    let sym_ok = symmetric
        .difference
        .iter()
        .all(|d| d.abs() < tolerance);
    let asym_match = asymmetric
        .difference
        .iter()
        .zip(&asymmetric.symbolic_missing_terms)
        .all(|(d, s)| (d - s).abs() < tolerance);
    let asym_nonzero = asymmetric.difference[..2]
        .iter()
        .any(|d| d.abs() > 0.01);
    BiasDemoReport {
        symmetric,
        asymmetric,
        tolerance,
        tolerance_met: sym_ok && asym_match && asym_nonzero,
    }
}
