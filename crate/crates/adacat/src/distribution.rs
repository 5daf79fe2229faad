//! The piecewise-uniform distribution on `[0, 1)` with learned bin widths and
//! masses, plus its degenerate uniform / quantile special cases.
//!
//! Bins are half-open `[c_i, c_i + w_i)`; the point `x = 1` is outside the
//! support for density queries while `cdf` clamps. Masses may be zero, in
//! which case log-density queries return a `-inf` sentinel instead of
//! panicking or producing NaN.

use serde::{Deserialize, Serialize};

use crate::error::{AdaCatError, Result};
use crate::{EPS_WIDTH, SIMPLEX_TOL};

/// A point in the probability simplex: non-negative entries summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(AdaCatError::InvalidSimplex("empty vector".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(AdaCatError::InvalidSimplex(
                "entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(AdaCatError::InvalidSimplex(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self(values))
    }

    /// Normalizes arbitrary non-negative weights into the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(AdaCatError::InvalidSimplex(format!(
                "weights sum to {sum}"
            )));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// The bin containing a query point: 1-based index and interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinHit {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Within-bin behaviour when drawing samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    /// Inverse-CDF draw, uniform inside the selected bin.
    WithinBinUniform,
    /// Select a bin by mass, return its midpoint.
    MidPoint,
}

/// A mixture of `k` non-overlapping uniforms tiling `[0, 1)`.
///
/// `w` are bin widths, `h` bin masses; the density on bin `i` is `h_i / w_i`.
/// Prefix sums of `w` are cached for O(log k) bin lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaCatParams {
    w: SimplexVector,
    h: SimplexVector,
    /// Bin edges: `edges[0] = 0`, `edges[i] = edges[i-1] + w_i`, `edges[k] = 1`.
    edges: Vec<f64>,
    /// Cumulative masses: `cum_h[i] = sum of h_1..h_i`, `cum_h[k] = 1`.
    cum_h: Vec<f64>,
}

/// Prefix sums of a width simplex: `k + 1` values from 0 to 1.
pub fn prefix_sums(w: &SimplexVector) -> Vec<f64> {
    let mut c = Vec::with_capacity(w.len() + 1);
    let mut acc = 0.0;
    c.push(0.0);
    for &wi in w.values() {
        acc += wi;
        c.push(acc);
    }
    // pin the last edge so cdf(1) = 1 exactly
    let last = c.len() - 1;
    c[last] = 1.0;
    c
}

impl AdaCatParams {
    pub fn new(w: SimplexVector, h: SimplexVector) -> Result<Self> {
        if w.len() != h.len() {
            return Err(AdaCatError::Dimension(format!(
                "widths ({}) and masses ({}) differ in length",
                w.len(),
                h.len()
            )));
        }
        // renormalizing after a clamp can leave a floored width a few ulps
        // under the floor; accept anything within rounding of it
        let floor = EPS_WIDTH * (1.0 - 1e-6);
        for (i, &wi) in w.values().iter().enumerate() {
            if wi < floor {
                return Err(AdaCatError::WidthFloor {
                    index: i,
                    width: wi,
                    floor: EPS_WIDTH,
                });
            }
        }
        let edges = prefix_sums(&w);
        let cum_h = prefix_sums(&h);
        Ok(Self { w, h, edges, cum_h })
    }

    /// Uniform-width reduction: a categorical over `k` equal bins.
    pub fn from_uniform_categorical(h: SimplexVector) -> Self {
        let k = h.len();
        Self::new(SimplexVector::uniform(k), h).expect("uniform widths are valid")
    }

    /// Equal-mass reduction: `w` interpreted as the `k`-quantile of the
    /// distribution.
    pub fn from_quantiles(w: SimplexVector) -> Result<Self> {
        let k = w.len();
        Self::new(w, SimplexVector::uniform(k))
    }

    pub fn k(&self) -> usize {
        self.w.len()
    }

    pub fn widths(&self) -> &SimplexVector {
        &self.w
    }

    pub fn masses(&self) -> &SimplexVector {
        &self.h
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn min_width(&self) -> f64 {
        self.w.values().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Locates the bin containing `x` by binary search over the cached edges.
    pub fn bin_index(&self, x: f64) -> Result<BinHit> {
        if !(0.0..1.0).contains(&x) {
            return Err(AdaCatError::Domain(format!(
                "x = {x} outside the support [0, 1)"
            )));
        }
        // partition_point: first edge strictly greater than x
        let hi_idx = self.edges.partition_point(|&e| e <= x).max(1);
        let i = hi_idx.min(self.k());
        Ok(BinHit {
            index: i,
            lo: self.edges[i - 1],
            hi: self.edges[i],
        })
    }

    /// Density `h_i / w_i` at `x`; zero outside `[0, 1)`.
    pub fn pdf(&self, x: f64) -> f64 {
        match self.bin_index(x) {
            Ok(hit) => self.h[hit.index - 1] / self.w[hit.index - 1],
            Err(_) => 0.0,
        }
    }

    /// `log h_i - log w_i` for the containing bin; `-inf` when `h_i = 0`.
    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        let hit = self.bin_index(x)?;
        let h = self.h[hit.index - 1];
        if h == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(h.ln() - self.w[hit.index - 1].ln())
    }

    /// Piecewise-linear CDF; clamps outside `[0, 1]`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let hit = self.bin_index(t).expect("t in (0, 1)");
        let i = hit.index - 1;
        self.cum_h[i] + (t - hit.lo) * self.h[i] / self.w[i]
    }

    /// Inverse CDF. For `u` on a zero-mass plateau, returns the plateau's
    /// left edge.
    pub fn icdf(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(AdaCatError::Domain(format!("u = {u} outside [0, 1)")));
        }
        // first bin whose cumulative upper mass reaches u; for u exactly on a
        // zero-mass plateau this selects the bin whose right edge is the
        // plateau's left edge
        let i = self.cum_h[1..].partition_point(|&c| c < u).min(self.k() - 1);
        let h = self.h[i];
        if h == 0.0 {
            return Ok(self.edges[i]);
        }
        let x = self.edges[i] + (u - self.cum_h[i]) * self.w[i] / h;
        Ok(x.min(self.edges[i + 1]).max(self.edges[i]))
    }

    /// Draws one value from the distribution given a uniform variate `u`.
    pub fn sample(&self, u: f64, mode: SampleMode) -> Result<f64> {
        match mode {
            SampleMode::WithinBinUniform => self.icdf(u),
            SampleMode::MidPoint => {
                if !(0.0..1.0).contains(&u) {
                    return Err(AdaCatError::Domain(format!("u = {u} outside [0, 1)")));
                }
                let mut i = self.cum_h[1..].partition_point(|&c| c <= u);
                i = i.min(self.k() - 1);
                Ok(self.edges[i] + self.w[i] / 2.0)
            }
        }
    }

    /// Log total mass of the interval `[i/K, (i+1)/K)`; `-inf` for zero mass.
    pub fn discrete_log_mass(&self, i: usize, big_k: usize) -> Result<f64> {
        if big_k == 0 || i >= big_k {
            return Err(AdaCatError::Domain(format!(
                "interval {i} out of range for K = {big_k}"
            )));
        }
        let lo = i as f64 / big_k as f64;
        let hi = (i + 1) as f64 / big_k as f64;
        let mass = self.cdf(hi) - self.cdf(lo);
        if mass <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(mass.ln())
    }
}
