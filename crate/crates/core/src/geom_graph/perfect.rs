//! Perfect sequences: vectors with norms near one whose projection onto the
//! span of the earlier vectors is short.
//!
//! A sequence `x_1, …, x_r` is perfect when every `‖x_i‖ ∈ (1-δ, 1+δ)` and
//! `‖π_{span(x_1..x_{i-1})}(x_i)‖ ≤ α √ℓ / √d`, with `α = 100 C ln(10/p)`
//! and `δ = α d^{-1/4}` unless a custom `α` is given.

use super::{dot, PointCloud, TriangularSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfectSpec {
    pub c: f64,
    pub p: f64,
    pub ell: usize,
    pub d: usize,
    pub alpha_proj: f64,
    pub delta: f64,
}

impl PerfectSpec {
    /// The standard constants `α = 100 C ln(10/p)`, `δ = α d^{-1/4}`.
    pub fn new(c: f64, ell: usize, d: usize, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) || !(c > 0.0) || !c.is_finite() {
            return Err(Error::domain("PerfectSpec", "need C > 0 and 0 < p < 1"));
        }
        Self::with_alpha(c, p, ell, d, 100.0 * c * (10.0 / p).ln())
    }

    /// Same predicate with a caller-chosen `α`, for dimensions where the
    /// standard constant makes both conditions vacuous.
    pub fn with_alpha(c: f64, p: f64, ell: usize, d: usize, alpha_proj: f64) -> Result<Self> {
        if !(alpha_proj > 0.0) || !alpha_proj.is_finite() || ell == 0 || d == 0 {
            return Err(Error::domain("PerfectSpec", "need alpha > 0, ell >= 1, d >= 1"));
        }
        Ok(PerfectSpec {
            c,
            p,
            ell,
            d,
            alpha_proj,
            delta: alpha_proj * (d as f64).powf(-0.25),
        })
    }

    /// `δ ≥ 1`: the lower end of the norm window is vacuous.
    pub fn is_degenerate(&self) -> bool {
        self.delta >= 1.0
    }

    pub fn projection_limit(&self) -> f64 {
        self.alpha_proj * (self.ell as f64).sqrt() / (self.d as f64).sqrt()
    }

    pub fn norm_ok(&self, norm: f64) -> bool {
        norm > 1.0 - self.delta && norm < 1.0 + self.delta
    }

    pub fn projection_ok(&self, proj: f64) -> bool {
        proj <= self.projection_limit()
    }

    fn check(&self, norm: f64, proj: f64) -> Option<Violation> {
        if !self.norm_ok(norm) {
            Some(Violation::Norm)
        } else if !self.projection_ok(proj) {
            Some(Violation::Projection)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Norm,
    Projection,
}

/// Row norms and prefix-span projection norms of a vector sequence.
pub trait SequenceGeometry {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(‖x_i‖, ‖π_{span(x_0..x_{i-1})}(x_i)‖)` for each index, computed up
    /// to and including the first index where `stop` returns true.
    fn geometry_until(&self, stop: &mut dyn FnMut(f64, f64) -> bool) -> Vec<(f64, f64)>;
}

impl SequenceGeometry for TriangularSample {
    fn len(&self) -> usize {
        self.r
    }

    /// The basis is aligned with the coordinates: the projection of row `i`
    /// onto the earlier rows is its first `i` entries.
    fn geometry_until(&self, stop: &mut dyn FnMut(f64, f64) -> bool) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.r);
        for i in 0..self.r {
            let row = self.row(i);
            let proj2 = dot(&row[..i], &row[..i]);
            let norm = (proj2 + row[i] * row[i]).sqrt();
            let proj = proj2.sqrt();
            out.push((norm, proj));
            if stop(norm, proj) {
                break;
            }
        }
        out
    }
}

impl SequenceGeometry for PointCloud {
    fn len(&self) -> usize {
        self.n
    }

    fn geometry_until(&self, stop: &mut dyn FnMut(f64, f64) -> bool) -> Vec<(f64, f64)> {
        let mut basis = Orthonormalizer::new(self.d);
        let mut out = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let v = self.row(i);
            let norm = dot(v, v).sqrt();
            let (proj, residual) = basis.split(v);
            out.push((norm, proj));
            if stop(norm, proj) {
                break;
            }
            basis.push(residual);
        }
        out
    }
}

/// Incremental classical Gram–Schmidt with one reorthogonalization pass.
#[derive(Debug, Clone)]
pub(crate) struct Orthonormalizer {
    d: usize,
    basis: Vec<Vec<f64>>,
}

impl Orthonormalizer {
    pub(crate) fn new(d: usize) -> Self {
        Orthonormalizer { d, basis: Vec::new() }
    }

    /// Projection norm of `v` onto the current span, and the residual.
    pub(crate) fn split(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let mut residual = v.to_vec();
        let mut coeffs = vec![0.0; self.basis.len()];
        for _ in 0..2 {
            let pass: Vec<f64> = self.basis.iter().map(|b| dot(b, &residual)).collect();
            for (b, &c) in self.basis.iter().zip(&pass) {
                residual.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            coeffs.iter_mut().zip(&pass).for_each(|(a, c)| *a += c);
        }
        (dot(&coeffs, &coeffs).sqrt(), residual)
    }

    /// Extend the basis by a residual returned from `split`. Residuals that
    /// vanish to rounding (vector already in the span) are skipped.
    pub(crate) fn push(&mut self, residual: Vec<f64>) {
        if self.basis.len() == self.d {
            return;
        }
        let norm = dot(&residual, &residual).sqrt();
        if norm > 1e-12 {
            self.basis.push(residual.into_iter().map(|x| x / norm).collect());
        }
    }

    #[cfg(test)]
    pub(crate) fn max_orthogonality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfectReport {
    pub perfect: bool,
    /// First failing index and the condition it breaks.
    pub first_violation: Option<(usize, Violation)>,
    /// `(norm, projection)` for every index checked.
    pub diagnostics: Vec<(f64, f64)>,
    pub degenerate_spec: bool,
}

pub fn is_perfect<S: SequenceGeometry + ?Sized>(seq: &S, spec: &PerfectSpec) -> PerfectReport {
    let diagnostics = seq.geometry_until(&mut |norm, proj| spec.check(norm, proj).is_some());
    let first_violation = diagnostics
        .iter()
        .enumerate()
        .find_map(|(i, &(n, p))| spec.check(n, p).map(|v| (i, v)));
    PerfectReport {
        perfect: first_violation.is_none(),
        first_violation,
        diagnostics,
        degenerate_spec: spec.is_degenerate(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub indices: Vec<usize>,
    pub subsequence: PointCloud,
}

/// Greedy extraction: keep `x_i` when its norm is in the window and its
/// projection onto the span of the vectors kept so far is short.
///
/// The kept subsequence is re-checked with [`is_perfect`]; a failure there
/// is a bug and panics.
pub fn extract_perfect(cloud: &PointCloud, spec: &PerfectSpec) -> Extraction {
    let mut basis = Orthonormalizer::new(cloud.d);
    let mut indices = Vec::new();
    for i in 0..cloud.n {
        let v = cloud.row(i);
        let norm = dot(v, v).sqrt();
        if !spec.norm_ok(norm) {
            continue;
        }
        let (proj, residual) = basis.split(v);
        if spec.projection_ok(proj) {
            indices.push(i);
            basis.push(residual);
        }
    }
    let coords = indices.iter().flat_map(|&i| cloud.row(i).iter().copied()).collect();
    let subsequence = PointCloud {
        n: indices.len(),
        d: cloud.d,
        coords,
    };
    let recheck = is_perfect(&subsequence, spec);
    assert!(
        recheck.perfect,
        "extracted subsequence is not perfect: {:?}",
        recheck.first_violation
    );
    Extraction { indices, subsequence }
}
