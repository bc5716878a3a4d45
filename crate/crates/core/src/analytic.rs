//! Closed-form scalar machinery: the standard normal law, the `p_C` and `c_p`
//! solvers, the Mills ratio, and main-term evaluators for the clique bounds
//! and the union-bound bookkeeping.
//!
//! Every bound here is a *main term*: constants hidden in `O(1/D)` or
//! `O(D^-2)` error factors are never invented, so outputs carry that label.

use std::f64::consts::{LN_2, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::{pairs, triples, Color};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Absolute tolerance of the scalar root finders.
pub const SOLVER_TOL: f64 = 1e-12;

pub fn std_normal_pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

/// `Φ(t)` through the complementary error function, which keeps relative
/// accuracy deep in the lower tail.
pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / SQRT_2)
}

/// Inverse of [`std_normal_cdf`] on `(0, 1)`; `0` and `1` map to `∓∞`.
pub fn std_normal_quantile(q: f64) -> f64 {
    if q <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if q >= 1.0 {
        return f64::INFINITY;
    }
    // erfc_inv is only good to ~1e-10 relative; polish with Newton steps
    // on the accurate cdf.
    let mut t = -SQRT_2 * erfc_inv(2.0 * q);
    for _ in 0..3 {
        let pdf = std_normal_pdf(t);
        if !(pdf > 0.0) {
            break;
        }
        t -= (std_normal_cdf(t) - q) / pdf;
    }
    t
}

/// Safeguarded Newton iteration for an increasing function on `[lo, hi]`
/// with `f(lo) < 0 < f(hi)`. Falls back to bisection whenever the Newton
/// step leaves the bracket.
fn newton_bracketed(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, start: f64) -> f64 {
    let mut x = if start > lo && start < hi {
        start
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = df(x);
        let mut next = x - fx / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        x = next;
    }
    x
}

/// The unique `p ∈ (0, 1/2)` with `(1 - p)^C = p`, i.e. `C = ln p / ln(1 - p)`.
pub fn solve_p_c(c: f64) -> Result<f64> {
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::domain("solve_p_c", format!("need C > 1, got {c}")));
    }
    // g is increasing on (0, 1/2): g(0+) = -inf, g(1/2) = (C - 1) ln 2 > 0.
    let g = |p: f64| p.ln() - c * (-p).ln_1p();
    let dg = |p: f64| 1.0 / p + c / (1.0 - p);
    // ln p ≈ -C p for small p gives a usable start for large C.
    let start = (c.ln() / c).min(0.25);
    let p = newton_bracketed(g, dg, f64::MIN_POSITIVE, 0.5, start);
    Ok(p)
}

/// The threshold `c_p ≥ 0` with `Φ(-c_p) = p`. The boundary `p = 1/2`
/// is accepted and returns `0`.
pub fn solve_c_p(p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 0.5) {
        return Err(Error::domain("solve_c_p", format!("need 0 < p <= 1/2, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // h(c) = p - Φ(-c) is increasing in c.
    let h = |c: f64| p - std_normal_cdf(-c);
    let dh = std_normal_pdf;
    let start = -std_normal_quantile(p);
    Ok(newton_bracketed(h, dh, 0.0, 40.0, start))
}

/// `R(x) = (1 - Φ(x)) / φ(x)` for large positive `x`, by backward evaluation
/// of Laplace's continued fraction.
fn upper_tail_ratio_cf(x: f64) -> f64 {
    let mut acc = x;
    for k in (1..=120).rev() {
        acc = x + k as f64 / acc;
    }
    1.0 / acc
}

/// `φ(t) / Φ(t)`. For `t < 0` the value lies in `[|t|, |t| + 1/|t|]`.
pub fn mills_ratio(t: f64) -> f64 {
    if t < -30.0 {
        // Φ underflows soon after -37; use the continued fraction instead.
        1.0 / upper_tail_ratio_cf(-t)
    } else {
        std_normal_pdf(t) / std_normal_cdf(t)
    }
}

/// `f(t) = (1-t)² log₂(1/(1-t)) − t² log₂(1/t)`. Positive on `(0, 1/2)`,
/// which is equivalent to the red gain exceeding the blue loss for every
/// `C > 1`. The right endpoint `1/2` is accepted (value `0`).
pub fn correction_balance(t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 0.5) {
        return Err(Error::domain(
            "correction_balance",
            format!("need 0 < t <= 1/2, got {t}"),
        ));
    }
    let s = 1.0 - t;
    Ok((s * s * (-s.ln()) - t * t * (-t.ln())) / LN_2)
}

/// Ramsey parameters: `k = ⌈Cℓ⌉` and dimension `d = ⌈D²ℓ²⌉`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamseyParams {
    pub c: f64,
    pub ell: usize,
    pub d_mult: f64,
    pub d: usize,
    pub k: usize,
}

impl RamseyParams {
    pub fn new(c: f64, ell: usize, d_mult: f64) -> Result<Self> {
        if !(c > 1.0) || !c.is_finite() {
            return Err(Error::domain("RamseyParams", format!("need C > 1, got {c}")));
        }
        if ell == 0 {
            return Err(Error::domain("RamseyParams", "need ell >= 1"));
        }
        if !(d_mult >= 1.0) || !d_mult.is_finite() {
            return Err(Error::domain("RamseyParams", format!("need D >= 1, got {d_mult}")));
        }
        let l = ell as f64;
        let d = (d_mult * d_mult * l * l).ceil() as usize;
        let k = (c * l - 1e-9).ceil() as usize;
        if d < k {
            return Err(Error::domain("RamseyParams", format!("dimension {d} < k = {k}")));
        }
        Ok(RamseyParams { c, ell, d_mult, d, k })
    }
}

/// Density-shift bookkeeping for a given `C` and dimension multiplier `D`.
///
/// `gain_red` and `loss_blue` are the infimum / supremum quantities of the
/// bookkeeping argument, evaluated at `p = p_C` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticBounds {
    pub c: f64,
    pub d_mult: f64,
    pub p_c: f64,
    pub c_p: f64,
    /// `φ(c_p)`.
    pub a: f64,
    /// `a³ / (3 p²)`.
    pub gain_red: f64,
    /// `a³ C / (3 (1-p)²)`.
    pub loss_blue: f64,
    /// `p_C + (gain_red + loss_blue) / (2D)`.
    pub p_shifted: f64,
    /// `p_C^{-1/2}`, the base of the binomial lower bound.
    pub erdos_base: f64,
    /// `ε₁ = (gain_red − loss_blue) / (4D)`.
    pub epsilon_margin: f64,
}

impl AnalyticBounds {
    pub fn compute(c: f64, d_mult: f64) -> Result<Self> {
        if !(d_mult >= 1.0) || !d_mult.is_finite() {
            return Err(Error::domain("AnalyticBounds", format!("need D >= 1, got {d_mult}")));
        }
        let p_c = solve_p_c(c)?;
        let c_p = solve_c_p(p_c)?;
        let a = std_normal_pdf(c_p);
        let a3 = a * a * a;
        let gain_red = a3 / (3.0 * p_c * p_c);
        let loss_blue = a3 * c / (3.0 * (1.0 - p_c) * (1.0 - p_c));
        Ok(AnalyticBounds {
            c,
            d_mult,
            p_c,
            c_p,
            a,
            gain_red,
            loss_blue,
            p_shifted: p_c + (gain_red + loss_blue) / (2.0 * d_mult),
            erdos_base: p_c.powf(-0.5),
            epsilon_margin: (gain_red - loss_blue) / (4.0 * d_mult),
        })
    }
}

/// Natural log of the main term of the clique-probability upper bound for
/// `r` vertices in dimension `d` at density parameter `p`:
///
/// * red: `C(r,2) ln p − a³/(p³√d) · C(r,3)`
/// * blue: `C(r,2) ln(1−p) + a³/((1−p)³√d) · C(r,3)`
pub fn clique_log_bound(r: usize, d: usize, p: f64, color: Color) -> Result<f64> {
    if r == 0 || d == 0 {
        return Err(Error::domain("clique_log_bound", "need r >= 1 and d >= 1"));
    }
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::domain("clique_log_bound", format!("need 0 < p < 1/2, got {p}")));
    }
    let a = std_normal_pdf(solve_c_p(p)?);
    let a3 = a * a * a;
    let sqrt_d = (d as f64).sqrt();
    Ok(match color {
        Color::Red => pairs(r) * p.ln() - a3 / (p.powi(3) * sqrt_d) * triples(r),
        Color::Blue => {
            let q = 1.0 - p;
            pairs(r) * q.ln() + a3 / (q.powi(3) * sqrt_d) * triples(r)
        }
    })
}

/// The two exponential bases of the union bound,
/// `(p_C^{-1/2}+ε)(p_C−ε₁)^{1/2}` and `(p_C^{-1/2}+ε)(1−p_C−ε₁)^{C/2}`.
///
/// Both are factored through `p_C^{1/2}` so that `ε = ε₁ = 0` gives a red
/// base of exactly one.
pub fn union_bound_bases(p_c: f64, c: f64, epsilon: f64, epsilon1: f64) -> (f64, f64) {
    let lift = 1.0 + epsilon * p_c.sqrt();
    let red = lift * ((p_c - epsilon1) / p_c).sqrt();
    let blue = lift * (0.5 * c * (1.0 - p_c - epsilon1).ln() - 0.5 * p_c.ln()).exp();
    (red, blue)
}

/// Numeric face of the union-bound argument for one `(C, ℓ, D)` setting.
#[derive(Debug, Clone, PartialEq)]
pub struct UnionBoundReport {
    pub params: RamseyParams,
    pub bounds: AnalyticBounds,
    pub epsilon: f64,
    pub epsilon1: f64,
    pub red_base: f64,
    pub blue_base: f64,
    /// `p_C^{-1/2} + ε`, the implied lower-bound base for `R(ℓ, Cℓ)`.
    pub improved_base: f64,
    /// Explicit second-order Taylor remainders of the red and blue
    /// per-pair factors; the margin is only claimed when `ε₁` dominates both.
    pub remainder_red: f64,
    pub remainder_blue: f64,
    pub margin_established: bool,
    pub bases_below_one: bool,
    /// `ℓ · ln(p_C^{-1/2} + ε)`, the log of the vertex count `n`.
    pub log_n: f64,
    /// Main-term log of `n^ℓ/ℓ! · (p_C−ε₁)^{C(ℓ,2)}`.
    pub log_red_union: f64,
    /// Main-term log of `n^k/k! · (1−p_C−ε₁)^{C(k,2)}`.
    pub log_blue_union: f64,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Evaluate both union-bound bases with `ε₁` from [`AnalyticBounds`] and the
/// user-chosen `ε` (default `ε₁ / 10`).
pub fn union_bound_report(params: RamseyParams, epsilon: Option<f64>) -> Result<UnionBoundReport> {
    let bounds = AnalyticBounds::compute(params.c, params.d_mult)?;
    let epsilon1 = bounds.epsilon_margin;
    let epsilon = epsilon.unwrap_or(epsilon1 / 10.0);
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::domain(
            "union_bound_report",
            format!("need epsilon >= 0, got {epsilon}"),
        ));
    }
    let p = bounds.p_c;
    let (red_base, blue_base) = union_bound_bases(p, params.c, epsilon, epsilon1);

    let d = params.d_mult;
    let t_red = bounds.gain_red / (p * d);
    let t_blue = bounds.loss_blue / ((1.0 - p) * d);
    // e^{-t} ≤ 1 − t + t²/2 and, for t ≤ 1, e^{t} ≤ 1 + t + (e − 2) t².
    let remainder_red = p * t_red * t_red / 2.0;
    let remainder_blue = (1.0 - p) * (std::f64::consts::E - 2.0) * t_blue * t_blue;
    let margin_established = t_red <= 1.0
        && t_blue <= 1.0
        && remainder_red < epsilon1
        && remainder_blue < epsilon1
        && bounds.p_shifted < 0.5
        && epsilon < epsilon1;

    let improved_base = bounds.erdos_base + epsilon;
    let ell = params.ell as f64;
    let k = params.k as f64;
    let log_n = ell * improved_base.ln();
    let log_red_union = ell * log_n - ln_factorial(params.ell) + pairs(params.ell) * (p - epsilon1).ln();
    let log_blue_union = k * log_n - ln_factorial(params.k) + pairs(params.k) * (1.0 - p - epsilon1).ln();

    Ok(UnionBoundReport {
        params,
        bounds,
        epsilon,
        epsilon1,
        red_base,
        blue_base,
        improved_base,
        remainder_red,
        remainder_blue,
        margin_established,
        bases_below_one: red_base < 1.0 && blue_base < 1.0,
        log_n,
        log_red_union,
        log_blue_union,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on `[t, 0]` for `t < 0`; independent of erfc.
    fn cdf_by_quadrature(t: f64) -> f64 {
        let n = 20_000;
        let h = -t / n as f64;
        let mut acc = std_normal_pdf(t) + std_normal_pdf(0.0);
        for i in 1..n {
            let x = t + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * std_normal_pdf(x);
        }
        0.5 - acc * h / 3.0
    }

    #[test]
    fn pdf_and_cdf_reference_values() {
        assert!((std_normal_pdf(0.0) - 0.398_942_3).abs() < 1e-7);
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        for &t in &[-0.3, -1.0, -2.5, -4.0, -6.0] {
            assert!((std_normal_cdf(t) - cdf_by_quadrature(t)).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn cdf_is_monotone_on_grid() {
        let mut prev = 0.0;
        for i in -1200..=1200 {
            let v = std_normal_cdf(i as f64 / 100.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &q in &[1e-300, 1e-20, 1e-5, 0.1, 0.381_966, 0.5, 0.9] {
            let t = std_normal_quantile(q);
            assert!(((std_normal_cdf(t) - q) / q).abs() < 1e-12, "q = {q}");
        }
    }

    #[test]
    fn p_c_reference_values() {
        let golden = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((solve_p_c(2.0).unwrap() - golden).abs() < 1e-14);
        assert!((solve_p_c(3.0).unwrap() - 0.317_672_196_171_980_7).abs() < 1e-13);
        assert!((solve_p_c(1.0 + 1e-9).unwrap() - 0.5).abs() < 1e-8);
        assert!(solve_p_c(1.0).is_err());
        assert!(solve_p_c(0.5).is_err());
        assert!(solve_p_c(f64::NAN).is_err());
    }

    #[test]
    fn p_c_identity_on_grid() {
        let mut prev = 0.5;
        for &c in &[1.1, 1.5, 2.0, 3.0, 5.0, 10.0, 100.0, 1e4] {
            let p = solve_p_c(c).unwrap();
            assert!((p.ln() - c * (1.0 - p).ln()).abs() <= 1e-12, "C = {c}");
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn c_p_reference_values() {
        assert_eq!(solve_c_p(0.5).unwrap(), 0.0);
        assert!((solve_c_p(0.158_655_3).unwrap() - 0.999_999_809_611_106_2).abs() < 1e-12);
        assert!((solve_c_p(0.381_966_0).unwrap() - 0.300_321_414_890_653_9).abs() < 1e-12);
        for &p in &[1e-200, 1e-8, 0.01, 0.2, 0.49999] {
            let c = solve_c_p(p).unwrap();
            assert!(c > 0.0);
            assert!(((std_normal_cdf(-c) - p) / p).abs() <= 1e-10, "p = {p}");
        }
        assert!(solve_c_p(0.0).is_err());
        assert!(solve_c_p(0.6).is_err());
    }

    #[test]
    fn mills_ratio_values_and_bounds() {
        assert!((mills_ratio(-1.0) - 1.525_135_276_160_981).abs() < 1e-12);
        assert!((mills_ratio(-10.0) - 10.098_093_233_962_512).abs() < 1e-10);
        assert!((mills_ratio(-20.0) - 20.049_753_068_527_85).abs() < 1e-9);
        for &t in &[-0.1, -0.5, -1.0, -2.0, -5.0, -10.0, -20.0, -35.0, -50.0, -1e3] {
            let m = mills_ratio(t);
            assert!(m >= -t && m <= -t + 1.0 / -t, "t = {t}, m = {m}");
        }
        // Both branches agree where they overlap.
        let direct = std_normal_pdf(-30.5) / std_normal_cdf(-30.5);
        assert!((direct / mills_ratio(-30.5) - 1.0).abs() < 1e-12);
        assert!((mills_ratio(-1e6) / 1e6 - 1.0).abs() < 1e-11);
    }

    #[test]
    fn log_concavity_tangent_bound() {
        for i in -50..=50 {
            let t = i as f64 / 10.0;
            for j in 0..=10 {
                let eps = j as f64 / 10.0;
                let lhs = std_normal_cdf(t + eps);
                let rhs = std_normal_cdf(t) * (eps * mills_ratio(t)).exp();
                assert!(lhs <= rhs * (1.0 + 1e-14), "t={t} eps={eps}");
            }
        }
    }

    #[test]
    fn correction_balance_values() {
        assert!((correction_balance(0.25).unwrap() - 0.108_458_593_344_349_65).abs() < 1e-15);
        assert_eq!(correction_balance(0.5).unwrap(), 0.0);
        assert!(correction_balance(1e-12).unwrap() < 1e-10);
        for i in 1..500 {
            assert!(correction_balance(i as f64 / 1000.0).unwrap() > 0.0);
        }
        assert!(correction_balance(0.0).is_err());
        assert!(correction_balance(0.7).is_err());
    }

    #[test]
    fn analytic_bounds_c2_d100() {
        let b = AnalyticBounds::compute(2.0, 100.0).unwrap();
        assert!((b.p_c - 0.381_966_011_250_105_2).abs() < 1e-14);
        assert!((b.c_p - 0.300_321_385_389_998_5).abs() < 1e-12);
        assert!((b.a - 0.381_351_025_797_007_1).abs() < 1e-12);
        assert!((b.gain_red - 0.126_708_007_924_596_5).abs() < 1e-12);
        assert!((b.loss_blue - 0.096_796_304_760_809_66).abs() < 1e-12);
        assert!((b.p_shifted - 0.383_083_532_813_532_2).abs() < 1e-12);
        assert!((b.erdos_base - 1.618_033_988_749_895).abs() < 1e-12);
        assert!((b.epsilon_margin - 7.477_925_790_946_704e-5).abs() < 1e-15);
    }

    #[test]
    fn gain_exceeds_loss_on_c_grid() {
        for &c in &[1.1, 1.5, 2.0, 3.0, 5.0, 10.0] {
            let b = AnalyticBounds::compute(c, 50.0).unwrap();
            assert!(b.gain_red > b.loss_blue, "C = {c}");
            assert!(b.erdos_base > 1.0);
            assert!(b.a > 0.0);
        }
    }

    #[test]
    fn clique_log_bound_values() {
        let p = 0.381_966;
        assert_eq!(clique_log_bound(1, 10, p, Color::Red).unwrap(), 0.0);
        assert_eq!(clique_log_bound(2, 10, p, Color::Red).unwrap(), p.ln());
        assert_eq!(clique_log_bound(2, 10, p, Color::Blue).unwrap(), (1.0 - p).ln());
        let v = clique_log_bound(3, 10_000, p, Color::Red).unwrap();
        assert!((v - (-2.897_222_815_473_722)).abs() < 1e-9);
        for r in 3..12 {
            for &d in &[16, 100, 10_000] {
                let red = clique_log_bound(r, d, 0.4, Color::Red).unwrap();
                let blue = clique_log_bound(r, d, 0.4, Color::Blue).unwrap();
                assert!(red < pairs(r) * 0.4f64.ln());
                assert!(blue > pairs(r) * 0.6f64.ln());
            }
        }
        assert!(clique_log_bound(0, 10, p, Color::Red).is_err());
        assert!(clique_log_bound(3, 10, 0.5, Color::Red).is_err());
    }

    #[test]
    fn union_bound_degenerate_and_margin() {
        let p = solve_p_c(2.0).unwrap();
        let (red, blue) = union_bound_bases(p, 2.0, 0.0, 0.0);
        assert_eq!(red, 1.0);
        assert!((blue - 1.0).abs() < 1e-12);

        let params = RamseyParams::new(2.0, 10, 100.0).unwrap();
        let report = union_bound_report(params, None).unwrap();
        assert!(report.margin_established);
        assert!(report.bases_below_one);
        assert!(report.red_base < 1.0 && report.blue_base < 1.0);
        assert!(report.improved_base > report.bounds.erdos_base);
        assert!((report.epsilon - report.epsilon1 / 10.0).abs() < 1e-18);

        let zero = union_bound_report(params, Some(0.0)).unwrap();
        assert_eq!(zero.improved_base, zero.bounds.erdos_base);
    }

    #[test]
    fn union_bound_flags_small_d() {
        let params = RamseyParams::new(2.0, 3, 1.0).unwrap();
        let report = union_bound_report(params, None).unwrap();
        assert!(!report.margin_established);
        // An epsilon above the margin is never called established.
        let params = RamseyParams::new(2.0, 3, 100.0).unwrap();
        let report = union_bound_report(params, Some(1.0)).unwrap();
        assert!(!report.margin_established);
    }

    #[test]
    fn ramsey_params_validation() {
        let p = RamseyParams::new(2.0, 4, 10.0).unwrap();
        assert_eq!(p.d, 1600);
        assert_eq!(p.k, 8);
        assert_eq!(RamseyParams::new(1.5, 3, 1.0).unwrap().k, 5);
        assert!(RamseyParams::new(1.0, 4, 10.0).is_err());
        assert!(RamseyParams::new(2.0, 0, 10.0).is_err());
        assert!(RamseyParams::new(2.0, 4, 0.5).is_err());
        // d = 1 < k = 10
        assert!(RamseyParams::new(10.0, 1, 1.0).is_err());
    }
}
