//! Small statistics toolkit: binomial confidence intervals, running moments
//! and the two-sample Kolmogorov–Smirnov test.

use statrs::function::beta::beta_reg;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Below this many successes (or failures) the exact interval is used.
pub const EXACT_CI_THRESHOLD: u64 = 30;

/// 95% interval for a binomial proportion: Wald normal approximation, with
/// the Clopper–Pearson interval when successes or failures are scarce.
pub fn binomial_ci(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let failures = trials - successes;
    if successes < EXACT_CI_THRESHOLD || failures < EXACT_CI_THRESHOLD {
        return clopper_pearson(successes, trials, 0.05);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let half = Z95 * (p * (1.0 - p) / n).sqrt();
    ((p - half).max(0.0), (p + half).min(1.0))
}

/// Exact (Clopper–Pearson) two-sided interval at level `1 - alpha`.
pub fn clopper_pearson(successes: u64, trials: u64, alpha: f64) -> (f64, f64) {
    let k = successes as f64;
    let n = trials as f64;
    let lo = if successes == 0 {
        0.0
    } else {
        // Lower limit solves P[Bin(n, x) >= k] = alpha/2, i.e. I_x(k, n-k+1) = alpha/2.
        invert_increasing(|x| beta_reg(k, n - k + 1.0, x), alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        // Upper limit solves I_x(k+1, n-k) = 1 - alpha/2.
        invert_increasing(|x| beta_reg(k + 1.0, n - k, x), 1.0 - alpha / 2.0)
    };
    (lo, hi)
}

fn invert_increasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Standard error of a proportion estimate `successes / trials`.
pub fn proportion_se(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    (p * (1.0 - p) / n).sqrt()
}

/// Sum and sum of squares; merged in a fixed order they give reproducible
/// means and standard errors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(mut self, other: Moments) -> Moments {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsOutcome {
    pub fn rejected_at(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Kolmogorov limiting survival function `Q(λ) = 2 Σ (-1)^{j-1} e^{-2 j² λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-18 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction of the effective size).
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsOutcome {
    assert!(!xs.is_empty() && !ys.is_empty(), "KS test needs non-empty samples");
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut stat = 0.0f64;
    while i < n && j < m {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        stat = stat.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * stat;
    KsOutcome {
        statistic: stat,
        p_value: kolmogorov_q(lambda),
    }
}
