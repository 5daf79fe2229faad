//! Self-contained verification suite: cross-checks the analytic smoothed
//! objective and its gradients against the independent oracles and runs the
//! gradient-bias demonstration. The CLI's `verify` command prints one line
//! per check; any failure is a non-zero exit.
//!
//! A fault-injection hook lets the test suite confirm the checks have teeth:
//! with `Fault::FlipPsiGradSign` the analytic psi gradient is negated before
//! comparison, which must fail the gradient check.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distribution::{AdaCatParams, SimplexVector};
use crate::oracle::{
    finite_diff_grad, gradient_bias_demo, quad_smoothed_loglik, QuadMethod, QuadratureConfig,
};
use crate::smoothing::{smoothed_loglik, smoothed_loglik_grad, softmax, LogitVector, SmoothingKernel};

/// Deliberate defects for mutation-testing the suite itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negate the analytic psi gradient before the finite-difference check.
    FlipPsiGradSign,
}

impl Fault {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "flip-psi-grad-sign" => Some(Fault::FlipPsiGradSign),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest error observed, in the check's own units.
    pub max_error: f64,
    pub tolerance: f64,
    pub cases: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

fn random_case(rng: &mut ChaCha8Rng, max_k: usize) -> (LogitVector, SmoothingKernel, f64) {
    let k = rng.gen_range(2..=max_k);
    let phi: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let psi: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let lambda = 10f64.powf(rng.gen_range(-4.0..-0.5));
    let kernel = if rng.gen_bool(0.5) {
        SmoothingKernel::Uniform { lambda }
    } else {
        SmoothingKernel::TruncatedGaussian { lambda }
    };
    let x = rng.gen_range(0.0..1.0);
    (LogitVector::new(phi, psi), kernel, x)
}

/// Analytic smoothed objective vs both quadrature routes.
fn check_oracle_agreement(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    let tolerance = 1e-6;
    for _ in 0..cases {
        let (logits, kernel, x) = random_case(&mut rng, 16);
        let analytic = smoothed_loglik(&logits, &kernel, x);
        let params = logits.to_params().expect("random logits are valid");
        for method in [QuadMethod::BinSplitExact, QuadMethod::AdaptiveSimpson] {
            let config = QuadratureConfig { method, abs_tol: 1e-10, max_depth: 40 };
            let quad = quad_smoothed_loglik(&params, &kernel, x, &config)
                .expect("quadrature converges on random cases");
            let rel = (analytic - quad).abs() / analytic.abs().max(1.0);
            max_error = max_error.max(rel);
        }
    }
    CheckResult {
        name: "oracle-agreement".into(),
        passed: max_error < tolerance,
        max_error,
        tolerance,
        cases,
    }
}

/// Analytic head gradients vs central finite differences; the fault hook
/// perturbs the analytic side.
fn check_gradient_fd(cases: usize, seed: u64, fault: Option<Fault>) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    let tolerance = 1e-4;
    for _ in 0..cases {
        let (logits, kernel, x) = random_case(&mut rng, 8);
        let k = logits.k();
        let grad = smoothed_loglik_grad(&logits, &kernel, x);
        let mut analytic = grad.d_phi.clone();
        let mut d_psi = grad.d_psi.clone();
        if fault == Some(Fault::FlipPsiGradSign) {
            for g in &mut d_psi {
                *g = -*g;
            }
        }
        analytic.extend_from_slice(&d_psi);

        let mut theta = logits.phi.clone();
        theta.extend_from_slice(&logits.psi);
        let fd = finite_diff_grad(
            |t| {
                let l = LogitVector::new(t[..k].to_vec(), t[k..].to_vec());
                smoothed_loglik(&l, &kernel, x)
            },
            &theta,
            1e-6,
        );
        for (a, f) in analytic.iter().zip(&fd) {
            max_error = max_error.max((a - f).abs());
        }
    }
    CheckResult {
        name: "gradient-finite-difference".into(),
        passed: max_error < tolerance,
        max_error,
        tolerance,
        cases,
    }
}

/// cdf(1)=1 and discrete masses summing to 1 on random parameter draws.
fn check_normalization(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    let tolerance = 1e-9;
    for _ in 0..cases {
        let k = rng.gen_range(2..64);
        let psi: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let phi: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let params = AdaCatParams::new(
            SimplexVector::new(softmax(&psi)).expect("softmax output"),
            SimplexVector::new(softmax(&phi)).expect("softmax output"),
        )
        .expect("valid params");
        max_error = max_error.max((params.cdf(1.0) - 1.0).abs());
        let mass: f64 = params.masses().values().iter().sum();
        max_error = max_error.max((mass - 1.0).abs());
        let width: f64 = params.widths().values().iter().sum();
        max_error = max_error.max((width - 1.0).abs());
    }
    CheckResult {
        name: "normalization".into(),
        passed: max_error < tolerance,
        max_error,
        tolerance,
        cases,
    }
}

fn check_bias_demo() -> CheckResult {
    let report = gradient_bias_demo();
    let max_error = report
        .asymmetric
        .difference
        .iter()
        .zip(&report.asymmetric.symbolic_missing_terms)
        .map(|(d, s)| (d - s).abs())
        .fold(0.0f64, f64::max);
    CheckResult {
        name: "gradient-bias-demo".into(),
        passed: report.tolerance_met,
        max_error,
        tolerance: report.tolerance,
        cases: 2,
    }
}

/// Runs every check; `fault` injects a deliberate defect so tests can prove
/// the suite detects it.
pub fn run_all(fault: Option<Fault>) -> VerifyReport {
    let checks = vec![
        check_oracle_agreement(150, 101),
        check_gradient_fd(150, 202, fault),
        check_normalization(200, 303),
        check_bias_demo(),
    ];
    let all_passed = checks.iter().all(|c| c.passed);
    VerifyReport { checks, all_passed }
}
