//! Monte-Carlo estimates of edge density and monochromatic clique
//! probabilities, with confidence intervals and log-domain reporting.
//!
//! Every estimator runs `trials` independent trials; trial `t` draws from
//! stream `(seed, t)`, and counts are folded in trial order, so results do
//! not depend on the number of threads.

use crate::analytic::{mills_ratio, solve_c_p, std_normal_cdf, std_normal_pdf};
use crate::error::{Error, Result};
use crate::gaussian_core::{sample_normal, RngStream};
use crate::geom_graph::{dot, gram, is_perfect, sample_bartlett, sample_cloud, PerfectSpec, Sampler, SequenceGeometry};
use crate::parallel::map_chunks;
use crate::stats::{binomial_ci, proportion_se};
use crate::{pairs, triples, Color};

/// Expected successes below which an estimate is reported as underpowered.
pub const MIN_EXPECTED_SUCCESSES: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The binomial reference predicts fewer than 100 successes.
    Underpowered,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Underpowered => "underpowered",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub point: f64,
    /// `ln(point)`, absent when there were no successes.
    pub log_point: Option<f64>,
    pub trials: u64,
    pub successes: u64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    /// Parameters of the run, in a fixed order.
    pub config: Vec<(String, String)>,
    pub status: Status,
}

impl EstimateResult {
    fn from_counts(successes: u64, trials: u64, seed: u64, config: Vec<(String, String)>) -> Self {
        let point = successes as f64 / trials as f64;
        let (ci_low, ci_high) = binomial_ci(successes, trials);
        EstimateResult {
            point,
            log_point: (successes > 0).then(|| point.ln()),
            trials,
            successes,
            ci_low,
            ci_high,
            seed,
            config,
            status: Status::Ok,
        }
    }

    pub fn std_error(&self) -> f64 {
        proportion_se(self.successes, self.trials)
    }

    /// Standard error of `log_point` by the delta method.
    pub fn log_std_error(&self) -> Option<f64> {
        (self.successes > 0).then(|| self.std_error() / self.point)
    }
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn check_p(op: &'static str, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 0.5) {
        return Err(Error::domain(op, format!("need 0 < p <= 1/2, got {p}")));
    }
    solve_c_p(p)
}

/// Fraction of blue pairs over `clouds` sampled `n`-point clouds. The
/// result counts pairs: `trials = clouds · C(n, 2)`.
pub fn estimate_edge_density(n: usize, d: usize, p: f64, clouds: usize, seed: u64) -> Result<EstimateResult> {
    let c_p = check_p("estimate_edge_density", p)?;
    if n < 2 || d == 0 || clouds == 0 {
        return Err(Error::domain(
            "estimate_edge_density",
            "need n >= 2, d >= 1, clouds >= 1",
        ));
    }
    let threshold = -c_p / (d as f64).sqrt();
    let blue: u64 = map_chunks(clouds, |range| {
        let mut count = 0u64;
        for t in range {
            let cloud = sample_cloud(n, d, &mut RngStream::new(seed, t as u64)).expect("dimensions checked");
            let g = gram(&cloud);
            for i in 0..n {
                for j in (i + 1)..n {
                    count += u64::from(g.get(i, j) >= threshold);
                }
            }
        }
        count
    })
    .into_iter()
    .sum();
    let total = clouds as u64 * (n * (n - 1) / 2) as u64;
    let config = vec![
        kv("estimator", "edge_density"),
        kv("n", n),
        kv("d", d),
        kv("p", p),
        kv("c_p", c_p),
        kv("clouds", clouds),
    ];
    Ok(EstimateResult::from_counts(blue, total, seed, config))
}

/// What to sample for clique estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CliqueQuery {
    pub r: usize,
    pub d: usize,
    pub p: f64,
    pub sampler: Sampler,
    /// When set, each trial also evaluates perfectness of the sampled
    /// sequence, giving the restricted counts on the same draws.
    pub perfect: Option<PerfectSpec>,
}

/// Per-predicate success counts on a shared set of trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CliqueCounts {
    pub trials: u64,
    pub red: u64,
    pub blue: u64,
    pub perfect: u64,
    pub red_perfect: u64,
    pub blue_perfect: u64,
}

impl CliqueCounts {
    fn merge(mut self, o: CliqueCounts) -> CliqueCounts {
        self.trials += o.trials;
        self.red += o.red;
        self.blue += o.blue;
        self.perfect += o.perfect;
        self.red_perfect += o.red_perfect;
        self.blue_perfect += o.blue_perfect;
        self
    }

    pub fn successes(&self, color: Color, restricted: bool) -> u64 {
        match (color, restricted) {
            (Color::Red, false) => self.red,
            (Color::Blue, false) => self.blue,
            (Color::Red, true) => self.red_perfect,
            (Color::Blue, true) => self.blue_perfect,
        }
    }
}

fn all_pairs(r: usize, inner: impl Fn(usize, usize) -> f64, pred: impl Fn(f64) -> bool) -> bool {
    (0..r).all(|i| ((i + 1)..r).all(|j| pred(inner(i, j))))
}

fn clique_trial(q: &CliqueQuery, threshold: f64, stream: &mut RngStream) -> CliqueCounts {
    let (red, blue, perfect) = match q.sampler {
        Sampler::Direct => {
            let cloud = sample_cloud(q.r, q.d, stream).expect("dimensions checked");
            let inner = |i: usize, j: usize| dot(cloud.row(i), cloud.row(j));
            let red = all_pairs(q.r, inner, |v| v < threshold);
            let blue = all_pairs(q.r, inner, |v| v >= threshold);
            (red, blue, perfect_flag(&cloud, q))
        }
        Sampler::Bartlett => {
            let ts = sample_bartlett(q.r, q.d, stream).expect("dimensions checked");
            let inner = |i: usize, j: usize| dot(ts.row(i), &ts.row(j)[..i + 1]);
            let red = all_pairs(q.r, inner, |v| v < threshold);
            let blue = all_pairs(q.r, inner, |v| v >= threshold);
            (red, blue, perfect_flag(&ts, q))
        }
    };
    CliqueCounts {
        trials: 1,
        red: red.into(),
        blue: blue.into(),
        perfect: perfect.into(),
        red_perfect: (red && perfect).into(),
        blue_perfect: (blue && perfect).into(),
    }
}

fn perfect_flag<S: SequenceGeometry>(seq: &S, q: &CliqueQuery) -> bool {
    q.perfect.as_ref().is_some_and(|spec| is_perfect(seq, spec).perfect)
}

fn validate_query(op: &'static str, q: &CliqueQuery, trials: usize) -> Result<f64> {
    let c_p = check_p(op, q.p)?;
    if q.r == 0 || q.d == 0 || trials == 0 {
        return Err(Error::domain(op, "need r >= 1, d >= 1, trials >= 1"));
    }
    if q.sampler == Sampler::Bartlett && q.r > q.d {
        return Err(Error::domain(op, "the triangular sampler needs r <= d"));
    }
    Ok(c_p)
}

/// Red, blue and perfect-restricted success counts over shared trials.
pub fn clique_counts(q: &CliqueQuery, trials: usize, seed: u64) -> Result<CliqueCounts> {
    let c_p = validate_query("clique_counts", q, trials)?;
    let threshold = -c_p / (q.d as f64).sqrt();
    Ok(map_chunks(trials, |range| {
        range.fold(CliqueCounts::default(), |acc, t| {
            acc.merge(clique_trial(q, threshold, &mut RngStream::new(seed, t as u64)))
        })
    })
    .into_iter()
    .fold(CliqueCounts::default(), CliqueCounts::merge))
}

/// `ln` of the binomial reference `p^{C(r,2)}` (red) or `(1-p)^{C(r,2)}` (blue).
pub fn log_binomial_reference(r: usize, p: f64, color: Color) -> f64 {
    let base = match color {
        Color::Red => p,
        Color::Blue => 1.0 - p,
    };
    pairs(r) * base.ln()
}

/// Build the estimate for one predicate from shared counts.
pub fn clique_estimate(
    q: &CliqueQuery,
    counts: &CliqueCounts,
    color: Color,
    restricted: bool,
    seed: u64,
) -> EstimateResult {
    let c_p = solve_c_p(q.p).unwrap_or(f64::NAN);
    let mut config = vec![
        kv("estimator", "clique_prob"),
        kv("r", q.r),
        kv("d", q.d),
        kv("p", q.p),
        kv("c_p", c_p),
        kv("color", color),
        kv("sampler", q.sampler.as_str()),
        kv("restrict_perfect", restricted),
    ];
    if let (true, Some(spec)) = (restricted, q.perfect.as_ref()) {
        config.push(kv("alpha_proj", spec.alpha_proj));
        config.push(kv("delta", spec.delta));
        config.push(kv("ell", spec.ell));
    }
    let mut est = EstimateResult::from_counts(counts.successes(color, restricted), counts.trials, seed, config);
    let log_expected = log_binomial_reference(q.r, q.p, color) + (counts.trials as f64).ln();
    if q.r >= 2 && log_expected < MIN_EXPECTED_SUCCESSES.ln() {
        est.status = Status::Underpowered;
    }
    est
}

/// `P[all C(r,2) pairs have the given color]`, optionally restricted to
/// perfect sequences (`q.perfect` must then be set).
pub fn estimate_clique_prob(
    q: &CliqueQuery,
    color: Color,
    restricted: bool,
    trials: usize,
    seed: u64,
) -> Result<EstimateResult> {
    if restricted && q.perfect.is_none() {
        return Err(Error::domain(
            "estimate_clique_prob",
            "restricted estimate needs a perfect-sequence spec",
        ));
    }
    let counts = clique_counts(q, trials, seed)?;
    Ok(clique_estimate(q, &counts, color, restricted, seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub d: usize,
    /// `d^{-1/2}`.
    pub x: f64,
    pub red: EstimateResult,
    pub blue: EstimateResult,
    /// `ln(P̂_red / p^{C(r,2)})`, absent without red successes.
    pub red_log_ratio: Option<f64>,
    /// `ln(P̂_blue / (1-p)^{C(r,2)})`.
    pub blue_log_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub r: usize,
    pub p: f64,
    pub rows: Vec<ScalingRow>,
    /// Least-squares coefficient of `d^{-1/2}` with no intercept (the log
    /// ratio vanishes as `d → ∞`).
    pub red_slope: f64,
    pub blue_slope: f64,
    /// Slope of the fit with a free intercept, for comparison.
    pub red_slope_free: f64,
    pub blue_slope_free: f64,
    /// Main-term predictions `∓ a³/p³ · C(r,3)` and `a³/(1-p)³ · C(r,3)`.
    pub red_predicted: f64,
    pub blue_predicted: f64,
    /// Dimensions whose estimates were underpowered or had no successes.
    pub flagged_dims: Vec<usize>,
}

fn fit_through_origin(pts: &[(f64, f64)]) -> f64 {
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    sxy / sxx
}

fn fit_free(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Log-ratios of clique probabilities to their binomial references across
/// dimensions, and the fitted `d^{-1/2}` coefficients. Every dimension uses
/// the same `(seed, trial)` streams.
pub fn correction_scaling(
    r: usize,
    p: f64,
    dims: &[usize],
    trials: usize,
    sampler: Sampler,
    seed: u64,
) -> Result<ScalingReport> {
    if !(r == 3 || r == 4) {
        return Err(Error::domain("correction_scaling", "r must be 3 or 4"));
    }
    if dims.is_empty() || dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain(
            "correction_scaling",
            "dims must be non-empty and strictly ascending",
        ));
    }
    let c_p = check_p("correction_scaling", p)?;
    let a = std_normal_pdf(c_p);
    let mut rows = Vec::new();
    let mut flagged = Vec::new();
    for &d in dims {
        let q = CliqueQuery {
            r,
            d,
            p,
            sampler,
            perfect: None,
        };
        let counts = clique_counts(&q, trials, seed)?;
        let red = clique_estimate(&q, &counts, Color::Red, false, seed);
        let blue = clique_estimate(&q, &counts, Color::Blue, false, seed);
        let red_log_ratio = red.log_point.map(|l| l - log_binomial_reference(r, p, Color::Red));
        let blue_log_ratio = blue.log_point.map(|l| l - log_binomial_reference(r, p, Color::Blue));
        if red.status != Status::Ok || blue.status != Status::Ok || red_log_ratio.is_none() || blue_log_ratio.is_none()
        {
            flagged.push(d);
        }
        rows.push(ScalingRow {
            d,
            x: 1.0 / (d as f64).sqrt(),
            red,
            blue,
            red_log_ratio,
            blue_log_ratio,
        });
    }
    let red_pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|row| row.red_log_ratio.map(|y| (row.x, y)))
        .collect();
    let blue_pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|row| row.blue_log_ratio.map(|y| (row.x, y)))
        .collect();
    let a3 = a * a * a;
    Ok(ScalingReport {
        r,
        p,
        red_slope: fit_through_origin(&red_pts),
        blue_slope: fit_through_origin(&blue_pts),
        red_slope_free: fit_free(&red_pts),
        blue_slope_free: fit_free(&blue_pts),
        red_predicted: -a3 / p.powi(3) * triples(r),
        blue_predicted: a3 / (1.0 - p).powi(3) * triples(r),
        rows,
        flagged_dims: flagged,
    })
}

/// Single-column edge probability given a revealed prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalEdgeCheck {
    pub p: f64,
    pub d: usize,
    pub inner: f64,
    pub diag: f64,
    /// `b = -(c_p/√d + inner) / diag`.
    pub cutoff: f64,
    /// `Φ(-√d · b)`.
    pub exact: f64,
    /// `Φ(c_p) · exp(m · (-√d·b - c_p))` with `m = φ(c_p)/Φ(c_p)`, the
    /// tangent line of `ln Φ` at `c_p`. For `diag = 1` this is
    /// `(1-p) · exp(a√d · inner / (1-p))`.
    pub bound: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub trials: u64,
    pub seed: u64,
    /// `empirical <= bound + 3 · std_error` and `exact <= bound`.
    pub pass: bool,
}

/// Checks `P[y ≥ b] ≤ bound` for `y ~ N(0, 1/d)`: the probability that a
/// new row is joined to row `i` given the inner product `inner` of their
/// revealed prefixes and the diagonal entry `diag` of row `i`.
pub fn conditional_edge_check(
    p: f64,
    d: usize,
    inner: f64,
    diag: f64,
    trials: usize,
    seed: u64,
) -> Result<ConditionalEdgeCheck> {
    let c_p = check_p("conditional_edge_check", p)?;
    if d == 0 || trials == 0 || !(diag > 0.0) || !inner.is_finite() {
        return Err(Error::domain(
            "conditional_edge_check",
            "need d >= 1, trials >= 1, diag > 0, finite inner",
        ));
    }
    let sd = (d as f64).sqrt();
    let cutoff = -(c_p / sd + inner) / diag;
    let z = -sd * cutoff;
    let exact = std_normal_cdf(z);
    let bound = std_normal_cdf(c_p) * (mills_ratio(c_p) * (z - c_p)).exp();
    let var = 1.0 / d as f64;
    let hits: u64 = map_chunks(trials, |range| {
        range
            .filter(|&t| sample_normal(&mut RngStream::new(seed, t as u64), var) >= cutoff)
            .count() as u64
    })
    .into_iter()
    .sum();
    let n = trials as u64;
    let empirical = hits as f64 / n as f64;
    let std_error = proportion_se(hits, n);
    Ok(ConditionalEdgeCheck {
        p,
        d,
        inner,
        diag,
        cutoff,
        exact,
        bound,
        empirical,
        std_error,
        trials: n,
        seed,
        pass: empirical <= bound + 3.0 * std_error && exact <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query(r: usize, d: usize, p: f64, sampler: Sampler) -> CliqueQuery {
        CliqueQuery {
            r,
            d,
            p,
            sampler,
            perfect: None,
        }
    }

    #[test]
    fn single_vertex_is_a_clique() {
        let e = estimate_clique_prob(&query(1, 10, 0.4, Sampler::Direct), Color::Red, false, 10, 1).unwrap();
        assert_eq!(e.point, 1.0);
        assert_eq!(e.log_point, Some(0.0));
        assert_eq!(e.status, Status::Ok);
        assert!(e.ci_low <= 1.0 && e.ci_high == 1.0);
    }

    #[test]
    fn half_density_pair() {
        let e = estimate_clique_prob(&query(2, 7, 0.5, Sampler::Bartlett), Color::Blue, false, 40_000, 2).unwrap();
        assert!((e.point - 0.5).abs() < 4.0 * e.std_error());
    }

    #[test]
    fn underpowered_is_flagged() {
        let e = estimate_clique_prob(&query(5, 64, 0.3, Sampler::Bartlett), Color::Red, false, 1000, 3).unwrap();
        assert_eq!(e.status, Status::Underpowered);
        assert!(estimate_clique_prob(&query(5, 64, 0.3, Sampler::Bartlett), Color::Red, true, 10, 3).is_err());
    }

    #[test]
    fn samplers_agree_on_triangles() {
        for &p in &[0.38, 0.45] {
            let a = clique_counts(&query(3, 64, p, Sampler::Direct), 30_000, 4).unwrap();
            let b = clique_counts(&query(3, 64, p, Sampler::Bartlett), 30_000, 5).unwrap();
            for (x, y) in [(a.red, b.red), (a.blue, b.blue)] {
                let (px, py) = (x as f64 / 3e4, y as f64 / 3e4);
                let se = (proportion_se(x, 30_000).powi(2) + proportion_se(y, 30_000).powi(2)).sqrt();
                assert!((px - py).abs() < 4.0 * se, "p = {p}: {px} vs {py}");
            }
        }
    }

    #[test]
    fn restricted_counts_never_exceed_unrestricted() {
        let d = 400;
        let spec = PerfectSpec::with_alpha(2.0, 0.4, 3, d, 0.2 * (d as f64).powf(0.25)).unwrap();
        for sampler in [Sampler::Direct, Sampler::Bartlett] {
            let q = CliqueQuery {
                perfect: Some(spec),
                ..query(3, d, 0.4, sampler)
            };
            let c = clique_counts(&q, 5000, 6).unwrap();
            assert!(c.red_perfect <= c.red && c.blue_perfect <= c.blue);
            assert!(c.perfect > 0 && c.perfect < c.trials, "{c:?}");
        }
    }

    #[test]
    fn red_probability_nonincreasing_in_r() {
        let mut prev = 1.0;
        for r in 1..=4 {
            let e = estimate_clique_prob(&query(r, 64, 0.45, Sampler::Bartlett), Color::Red, false, 20_000, 7).unwrap();
            assert!(e.point <= prev + 4.0 * e.std_error());
            prev = e.point;
        }
    }

    #[test]
    fn conditional_edge_zero_projection_is_tight() {
        let c = conditional_edge_check(0.38, 10_000, 0.0, 1.0, 1000, 8).unwrap();
        assert!((c.exact - 0.62).abs() < 1e-12);
        assert!((c.bound - c.exact).abs() < 1e-15);
        assert!(c.pass);
    }

    #[test]
    fn conditional_edge_bound_holds_both_signs() {
        for inner in [1e-3, -1e-3] {
            let c = conditional_edge_check(0.38, 10_000, inner, 1.0, 20_000, 9).unwrap();
            let a = std_normal_pdf(solve_c_p(0.38).unwrap());
            let closed = 0.62 * (a * 100.0 * inner / 0.62).exp();
            assert!((c.bound - closed).abs() < 1e-12);
            assert!(c.exact < c.bound);
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn fits() {
        let pts = [(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)];
        assert!((fit_through_origin(&pts) - 2.0).abs() < 1e-15);
        assert!((fit_free(&[(1.0, 3.0), (2.0, 5.0)]) - 2.0).abs() < 1e-15);
    }
}
