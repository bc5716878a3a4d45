//! Random sampling primitives and empirical checks of the Gaussian tail and
//! moment inequalities the clique bounds are built on.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::analytic::{mills_ratio, std_normal_cdf, std_normal_quantile};
use crate::error::{Error, Result};
use crate::parallel::map_chunks;
use crate::stats::{proportion_se, Moments};

/// A reproducible random stream keyed by `(master_seed, stream_id)`.
///
/// The stream is a ChaCha12 keystream: the master seed selects the key and
/// the stream id selects one of 2^64 independent nonces, so any trial can be
/// regenerated without replaying the trials before it.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        RngStream {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// One draw of `N(0, variance)`.
pub fn sample_normal(stream: &mut RngStream, variance: f64) -> f64 {
    debug_assert!(variance > 0.0);
    let z: f64 = StandardNormal.sample(stream);
    z * variance.sqrt()
}

/// One draw of `sqrt(χ²_freedom)`.
pub fn sample_chi(freedom: usize, stream: &mut RngStream) -> Result<f64> {
    if freedom == 0 {
        return Err(Error::domain("sample_chi", "freedom must be >= 1"));
    }
    let chi2 = ChiSquared::new(freedom as f64).map_err(|e| Error::domain("sample_chi", e.to_string()))?;
    Ok(chi2.sample(stream).sqrt())
}

/// Which side of the cutoff the truncated variable is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `X >= b / sqrt(d)`.
    Lower,
    /// `X <= b / sqrt(d)`.
    Upper,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Side::Lower),
            "upper" => Ok(Side::Upper),
            other => Err(Error::domain("side", format!("expected lower|upper, got {other:?}"))),
        }
    }
}

/// `X ~ N(0, 1/d)` conditioned on one side of `b / sqrt(d)`; the cutoff `b`
/// is in standard-deviation units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedSpec {
    pub cutoff: f64,
    pub side: Side,
    pub d: usize,
}

impl TruncatedSpec {
    pub fn new(cutoff: f64, side: Side, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("TruncatedSpec", "d must be >= 1"));
        }
        if !cutoff.is_finite() {
            return Err(Error::domain("TruncatedSpec", "cutoff must be finite"));
        }
        let spec = TruncatedSpec { cutoff, side, d };
        if !(spec.mass() > 0.0) {
            return Err(Error::domain(
                "TruncatedSpec",
                format!("conditioning event has zero probability at cutoff {cutoff}"),
            ));
        }
        Ok(spec)
    }

    /// Probability of the conditioning event.
    pub fn mass(&self) -> f64 {
        match self.side {
            Side::Lower => std_normal_cdf(-self.cutoff),
            Side::Upper => std_normal_cdf(self.cutoff),
        }
    }

    /// The cutoff on the `N(0, 1/d)` scale.
    pub fn threshold(&self) -> f64 {
        self.cutoff / (self.d as f64).sqrt()
    }

    pub fn admits(&self, x: f64) -> bool {
        match self.side {
            Side::Lower => x >= self.threshold(),
            Side::Upper => x <= self.threshold(),
        }
    }
}

/// Exact draw by inverting the cdf on the conditioned uniform range. The
/// lower side is sampled as the reflection of an upper truncation so that
/// the quantile is always evaluated in the accurate lower tail.
pub fn sample_truncated(spec: &TruncatedSpec, stream: &mut RngStream) -> f64 {
    let (cut, flip) = match spec.side {
        Side::Upper => (spec.cutoff, false),
        Side::Lower => (-spec.cutoff, true),
    };
    let mass = std_normal_cdf(cut);
    let v: f64 = stream.random();
    // u ∈ (0, mass]
    let u = mass * (1.0 - v);
    let mut z = std_normal_quantile(u).min(cut);
    if flip {
        z = -z;
    }
    z / (spec.d as f64).sqrt()
}

/// Closed-form mean of the truncated variable:
/// upper `-φ(b)/(Φ(b)√d)`, lower `φ(b)/((1-Φ(b))√d)`.
pub fn truncated_mean(spec: &TruncatedSpec) -> f64 {
    let sqrt_d = (spec.d as f64).sqrt();
    match spec.side {
        Side::Upper => -mills_ratio(spec.cutoff) / sqrt_d,
        Side::Lower => mills_ratio(-spec.cutoff) / sqrt_d,
    }
}

/// Tail side for the chi-square concentration check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailSide {
    /// `P[Y - k >= 2√(kt) + 2t] <= e^{-t}`
    Upper,
    /// `P[k - Y >= 2√(kt)] <= e^{-t}`
    Lower,
}

/// The empirical checks understood by [`validate_lemma`].
#[derive(Debug, Clone, PartialEq)]
pub enum LemmaCheck {
    /// Frequency of `‖x‖ ∉ (1-δ, 1+δ)` for `x ~ N(0, I/d)` against `2e^{-δ²d/10}`.
    NormConcentration { d: usize, delta: f64 },
    /// One-sided Laurent–Massart tail of `χ²_freedom` against `e^{-t}`.
    ChiSquareTail { freedom: usize, t: f64, side: TailSide },
    /// Frequency of `‖π_W(x)‖ >= α√ℓ/√d` for an `s`-dimensional `W`, against
    /// `(p/10)^{10Cℓ}` with `α = 100 C ln(10/p)`. Reported in log domain.
    ProjectionTail {
        d: usize,
        ell: usize,
        s: usize,
        p: f64,
        c: f64,
    },
    /// `E[e^{λX²}]` for centered `X` with variance proxy `σ²` against
    /// `1 + 4λσ²/(1-2λσ²)`. `X` is `N(0, σ²)`, or a centered truncation of
    /// it at `cutoff` standard deviations when given.
    ExpSquareMoment {
        sigma2: f64,
        lambda: f64,
        truncation: Option<(f64, Side)>,
    },
    /// `E[e^{λS}]` for `S = Σ_{i<j} X_i X_j` with independent `X_j ~ N(0, 1/d)`,
    /// each optionally truncated, against
    /// `exp(λE[S] + λ²k²/d Σ(E X_j)² + 4|λ|k/d)`.
    QuadraticMoment {
        d: usize,
        lambda: f64,
        cutoffs: Vec<Option<(f64, Side)>>,
    },
}

impl LemmaCheck {
    pub fn name(&self) -> &'static str {
        match self {
            LemmaCheck::NormConcentration { .. } => "norm_concentration",
            LemmaCheck::ChiSquareTail { .. } => "chi_square_tail",
            LemmaCheck::ProjectionTail { .. } => "projection_tail",
            LemmaCheck::ExpSquareMoment { .. } => "exp_square_moment",
            LemmaCheck::QuadraticMoment { .. } => "quadratic_moment",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRecord {
    pub lemma: &'static str,
    pub trials: u64,
    pub empirical: f64,
    pub bound: f64,
    /// Natural log of `bound`; the only faithful form when it underflows.
    pub log_bound: f64,
    pub std_error: f64,
    /// `empirical <= bound + 3 · std_error`.
    pub pass: bool,
    /// Set when the bound is below `1/trials`, so a pass carries no evidence.
    pub vacuous: bool,
}

impl ValidationRecord {
    fn frequency(lemma: &'static str, hits: u64, trials: u64, log_bound: f64) -> Self {
        let empirical = hits as f64 / trials as f64;
        let std_error = proportion_se(hits, trials);
        let bound = log_bound.exp();
        ValidationRecord {
            lemma,
            trials,
            empirical,
            bound,
            log_bound,
            std_error,
            pass: empirical <= bound + 3.0 * std_error,
            vacuous: log_bound < -(trials as f64).ln(),
        }
    }

    fn moment(lemma: &'static str, m: Moments, bound: f64) -> Self {
        let empirical = m.mean();
        let std_error = m.std_error();
        ValidationRecord {
            lemma,
            trials: m.n,
            empirical,
            bound,
            log_bound: bound.ln(),
            std_error,
            pass: empirical <= bound + 3.0 * std_error,
            vacuous: false,
        }
    }
}

fn count_hits(trials: usize, seed: u64, hit: impl Fn(&mut RngStream) -> bool + Sync + Send) -> u64 {
    map_chunks(trials, |range| {
        range.filter(|&t| hit(&mut RngStream::new(seed, t as u64))).count() as u64
    })
    .into_iter()
    .sum()
}

fn collect_moments(trials: usize, seed: u64, value: impl Fn(&mut RngStream) -> f64 + Sync + Send) -> Moments {
    map_chunks(trials, |range| {
        let mut m = Moments::default();
        for t in range {
            m.push(value(&mut RngStream::new(seed, t as u64)));
        }
        m
    })
    .into_iter()
    .fold(Moments::default(), Moments::merge)
}

fn truncated_or_plain(cutoff: Option<(f64, Side)>, d: usize) -> Result<Option<TruncatedSpec>> {
    cutoff.map(|(b, side)| TruncatedSpec::new(b, side, d)).transpose()
}

/// Run one empirical check with `trials` independent trials; trial `t` uses
/// stream `(seed, t)`.
pub fn validate_lemma(check: &LemmaCheck, trials: usize, seed: u64) -> Result<ValidationRecord> {
    if trials == 0 {
        return Err(Error::domain("validate_lemma", "trials must be >= 1"));
    }
    let name = check.name();
    let n = trials as u64;
    match *check {
        LemmaCheck::NormConcentration { d, delta } => {
            if d == 0 || !(delta > 0.0 && delta < 1.0) {
                return Err(Error::domain(name, "need d >= 1 and 0 < delta < 1"));
            }
            let var = 1.0 / d as f64;
            let hits = count_hits(trials, seed, |s| {
                let norm = (0..d).map(|_| sample_normal(s, var).powi(2)).sum::<f64>().sqrt();
                !(norm > 1.0 - delta && norm < 1.0 + delta)
            });
            let log_bound = std::f64::consts::LN_2 - delta * delta * d as f64 / 10.0;
            Ok(ValidationRecord::frequency(name, hits, n, log_bound))
        }
        LemmaCheck::ChiSquareTail { freedom, t, side } => {
            if freedom == 0 || !(t >= 0.0) {
                return Err(Error::domain(name, "need freedom >= 1 and t >= 0"));
            }
            let k = freedom as f64;
            let hits = count_hits(trials, seed, |s| {
                let y = sample_chi(freedom, s).expect("freedom checked").powi(2);
                match side {
                    TailSide::Upper => y - k >= 2.0 * (k * t).sqrt() + 2.0 * t,
                    TailSide::Lower => k - y >= 2.0 * (k * t).sqrt(),
                }
            });
            Ok(ValidationRecord::frequency(name, hits, n, -t))
        }
        LemmaCheck::ProjectionTail { d, ell, s, p, c } => {
            if d == 0 || ell == 0 || s == 0 || s > d {
                return Err(Error::domain(name, "need 1 <= s <= d and ell >= 1"));
            }
            if !(p > 0.0 && p < 1.0) || !(c > 0.0) {
                return Err(Error::domain(name, "need 0 < p < 1 and C > 0"));
            }
            if s as f64 > c * ell as f64 {
                return Err(Error::domain(name, format!("need s <= C·ell, got s = {s}")));
            }
            let alpha = 100.0 * c * (10.0 / p).ln();
            let threshold = alpha * (ell as f64).sqrt() / (d as f64).sqrt();
            let var = 1.0 / d as f64;
            // Rotational invariance lets W be the first s coordinates.
            let hits = count_hits(trials, seed, |st| {
                let sq: f64 = (0..s).map(|_| sample_normal(st, var).powi(2)).sum();
                sq.sqrt() >= threshold
            });
            let log_bound = 10.0 * c * ell as f64 * (p / 10.0).ln();
            Ok(ValidationRecord::frequency(name, hits, n, log_bound))
        }
        LemmaCheck::ExpSquareMoment {
            sigma2,
            lambda,
            truncation,
        } => {
            if !(sigma2 > 0.0) || !(lambda >= 0.0) {
                return Err(Error::domain(name, "need sigma2 > 0 and lambda >= 0"));
            }
            if lambda * sigma2 >= 0.5 {
                return Err(Error::domain(name, format!("need lambda < 1/(2 sigma2), got {lambda}")));
            }
            let sigma = sigma2.sqrt();
            let spec = truncated_or_plain(truncation, 1)?;
            let center = spec.as_ref().map_or(0.0, truncated_mean);
            let m = collect_moments(trials, seed, |s| {
                let z = match &spec {
                    Some(spec) => sample_truncated(spec, s) - center,
                    None => sample_normal(s, 1.0),
                };
                let x = sigma * z;
                (lambda * x * x).exp()
            });
            let bound = 1.0 + 4.0 * lambda * sigma2 / (1.0 - 2.0 * lambda * sigma2);
            Ok(ValidationRecord::moment(name, m, bound))
        }
        LemmaCheck::QuadraticMoment { d, lambda, ref cutoffs } => {
            let k = cutoffs.len();
            if d == 0 || k == 0 || !lambda.is_finite() {
                return Err(Error::domain(name, "need d >= 1, k >= 1 and finite lambda"));
            }
            if (d as f64) < 4.0 * lambda.abs() * k as f64 {
                return Err(Error::domain(name, format!("need d >= 4|lambda|k, got d = {d}")));
            }
            let specs = cutoffs
                .iter()
                .map(|&c| truncated_or_plain(c, d))
                .collect::<Result<Vec<_>>>()?;
            let means: Vec<f64> = specs.iter().map(|s| s.as_ref().map_or(0.0, truncated_mean)).collect();
            let sum_m: f64 = means.iter().sum();
            let sum_m2: f64 = means.iter().map(|m| m * m).sum();
            let expected_s = (sum_m * sum_m - sum_m2) / 2.0;
            let var = 1.0 / d as f64;
            let m = collect_moments(trials, seed, |s| {
                let (mut total, mut total_sq) = (0.0, 0.0);
                for spec in &specs {
                    let x = match spec {
                        Some(spec) => sample_truncated(spec, s),
                        None => sample_normal(s, var),
                    };
                    total += x;
                    total_sq += x * x;
                }
                (lambda * (total * total - total_sq) / 2.0).exp()
            });
            let kf = k as f64;
            let df = d as f64;
            let exponent = lambda * expected_s + lambda * lambda * kf * kf / df * sum_m2 + 4.0 * lambda.abs() * kf / df;
            Ok(ValidationRecord::moment(name, m, exponent.exp()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut s = RngStream::new(42, 0);
            (0..16).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = RngStream::new(42, 0);
            (0..16).map(|_| s.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut s = RngStream::new(42, 1);
            (0..16).map(|_| s.next_u64()).collect()
        };
        let d: Vec<u64> = {
            let mut s = RngStream::new(43, 0);
            (0..16).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        let mut s = RngStream::new(42, 0);
        let x = sample_normal(&mut s, 1.0);
        let mut s = RngStream::new(42, 0);
        assert_eq!(x.to_bits(), sample_normal(&mut s, 1.0).to_bits());
    }

    #[test]
    fn chi_rejects_zero_freedom() {
        let mut s = RngStream::new(1, 0);
        assert!(sample_chi(0, &mut s).is_err());
        assert!(sample_chi(1, &mut s).unwrap() >= 0.0);
    }

    #[test]
    fn truncated_mean_reference_values() {
        let spec = TruncatedSpec::new(0.0, Side::Lower, 1).unwrap();
        assert!((truncated_mean(&spec) - 0.797_884_560_802_865_4).abs() < 1e-14);
        let spec = TruncatedSpec::new(0.0, Side::Upper, 1).unwrap();
        assert!((truncated_mean(&spec) + 0.797_884_560_802_865_4).abs() < 1e-14);
        let spec = TruncatedSpec::new(-0.5244, Side::Upper, 100).unwrap();
        assert!((truncated_mean(&spec) - (-0.115_897_500_359_239_6)).abs() < 1e-12);
    }

    #[test]
    fn truncated_mean_is_lipschitz_in_cutoff() {
        for &d in &[1usize, 100, 10_000] {
            for i in -60..=60 {
                let b = i as f64 / 10.0;
                for &eps in &[1e-3, 0.05, 0.3] {
                    for side in [Side::Lower, Side::Upper] {
                        let m0 = truncated_mean(&TruncatedSpec::new(b, side, d).unwrap());
                        let m1 = truncated_mean(&TruncatedSpec::new(b + eps, side, d).unwrap());
                        assert!(
                            (m1 - m0).abs() <= 2.0 * eps / (d as f64).sqrt(),
                            "b={b} eps={eps} d={d}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn truncated_samples_respect_side_deep_tails() {
        for &(b, side) in &[
            (-30.0, Side::Upper),
            (30.0, Side::Lower),
            (8.0, Side::Lower),
            (-2.0, Side::Upper),
        ] {
            let spec = TruncatedSpec::new(b, side, 7).unwrap();
            for t in 0..2000 {
                let x = sample_truncated(&spec, &mut RngStream::new(5, t));
                assert!(spec.admits(x), "b={b} x={x}");
                assert!(x.is_finite());
            }
        }
        assert!(TruncatedSpec::new(-40.0, Side::Upper, 1).is_err());
        assert!(TruncatedSpec::new(0.0, Side::Upper, 0).is_err());
    }

    #[test]
    fn lemma_preconditions() {
        let bad = LemmaCheck::ExpSquareMoment {
            sigma2: 1.0,
            lambda: 0.5,
            truncation: None,
        };
        assert!(validate_lemma(&bad, 10, 0).is_err());
        let bad = LemmaCheck::QuadraticMoment {
            d: 10,
            lambda: 1.0,
            cutoffs: vec![None; 3],
        };
        assert!(validate_lemma(&bad, 10, 0).is_err());
        let bad = LemmaCheck::NormConcentration { d: 10, delta: 1.5 };
        assert!(validate_lemma(&bad, 10, 0).is_err());
    }

    #[test]
    fn lemma_degenerate_lambda_zero() {
        let r = validate_lemma(
            &LemmaCheck::ExpSquareMoment {
                sigma2: 1.0,
                lambda: 0.0,
                truncation: None,
            },
            100,
            3,
        )
        .unwrap();
        assert_eq!(r.empirical, 1.0);
        assert_eq!(r.bound, 1.0);
        assert!(r.pass);
        let r = validate_lemma(
            &LemmaCheck::QuadraticMoment {
                d: 50,
                lambda: 0.0,
                cutoffs: vec![None; 4],
            },
            100,
            3,
        )
        .unwrap();
        assert_eq!(r.empirical, 1.0);
        assert_eq!(r.bound, 1.0);
        assert!(r.pass);
    }
}
