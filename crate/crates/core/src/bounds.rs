//! Upper bounds on the failure probability `Pr(S_n <= 0)` and what they imply
//! for benchmark design.
//!
//! Two families are offered. Hoeffding's inequality for variables in
//! `[-1, 1]` gives `exp(-n E[G]^2 / 2)`. The Chernoff/Cramér bound at zero
//! gives `exp(n * rate)` with `rate = -Λ*(0) = log(2 sqrt(xy) + z)` for a
//! ternary variable; it holds for every `n` and is exponentially tighter
//! whenever labels carry signal.
//!
//! A union bound over `k` comparisons turns either family into a benchmark
//! capacity (`floor(delta / bound)`) and a minimum sample size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::sum_distribution;
use crate::gap::{majority_prob, sigma, BudgetPlan, ComparisonParams, TernaryDist};

/// `exp(-n E^2 / 2)`, a bound on `Pr(S_n <= 0)` when `E > 0`.
pub fn hoeffding_failure_bound(expectation: f64, n: u64) -> Result<f64> {
    if !(expectation > 0.0) || !expectation.is_finite() {
        return Err(Error::domain(format!(
            "Hoeffding bound needs a positive expectation, got {expectation}"
        )));
    }
    Ok((-(n as f64) * expectation * expectation / 2.0).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqrtCondition {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `sqrt(m) > (2 M_m(q) - 1) / (2q - 1)`, under which the Hoeffding
/// bound favours `m n` single-labelled points over `n` majority-voted ones.
/// The ratio is evaluated as `1 + 2 sigma(m, q)`, which stays finite as
/// `q -> 0.5`.
pub fn hoeffding_sqrt_condition(m: u32, q: f64) -> Result<SqrtCondition> {
    if m < 3 || m.is_multiple_of(2) {
        return Err(Error::domain(format!("need an odd m >= 3, got {m}")));
    }
    if !(q > 0.5 && q <= 1.0) {
        return Err(Error::domain(format!("need q in (0.5, 1], got {q}")));
    }
    let lhs = (m as f64).sqrt();
    let rhs = 1.0 + 2.0 * sigma(m, q)?;
    Ok(SqrtCondition {
        lhs,
        rhs,
        holds: lhs > rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CramerRate {
    /// `log(2 sqrt(xy) + z)`, nats per sample, never positive.
    pub rate: f64,
    /// Set when `x` or `y` is zero: the optimizing tilt diverges and the
    /// value is the limit `log z`.
    pub degenerate: bool,
}

impl CramerRate {
    /// `exp(n * rate)`.
    pub fn failure_bound(&self, n: u64) -> f64 {
        (n as f64 * self.rate).exp()
    }
}

/// Closed-form `-Λ*(0)` for a ternary variable.
pub fn cramer_rate(dist: &TernaryDist) -> CramerRate {
    let affinity = 2.0 * (dist.x * dist.y).sqrt() + dist.z;
    CramerRate {
        rate: affinity.min(1.0).ln(),
        degenerate: dist.x == 0.0 || dist.y == 0.0,
    }
}

/// Failure bound from the Cramér rate, or `1` when the expectation is not
/// positive and the bound says nothing about `Pr(S_n <= 0)`.
pub fn cramer_failure_bound(dist: &TernaryDist, n: u64) -> f64 {
    if dist.expectation() > 0.0 {
        cramer_rate(dist).failure_bound(n)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendreResult {
    pub rate: f64,
    pub t_star: f64,
}

/// `min_t log(x e^t + y e^-t + z)` by bisection on the sign of the
/// derivative. The log-MGF is convex, so the minimizer is the unique root of
/// `x e^t - y e^-t`. The bracket grows outward from zero until the sign
/// changes.
pub fn legendre_numeric(dist: &TernaryDist) -> Result<LegendreResult> {
    if !(dist.x > 0.0 && dist.y > 0.0) {
        return Err(Error::domain(
            "numeric Legendre transform needs both x > 0 and y > 0",
        ));
    }
    let log_mgf = |t: f64| (dist.x * t.exp() + dist.y * (-t).exp() + dist.z).ln();
    let slope = |t: f64| dist.x * t.exp() - dist.y * (-t).exp();

    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    while slope(lo) > 0.0 {
        lo *= 2.0;
        if lo < -1e3 {
            return Err(Error::Numeric("no lower bracket for the minimizer".into()));
        }
    }
    while slope(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Numeric("no upper bracket for the minimizer".into()));
        }
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_star = 0.5 * (lo + hi);
    Ok(LegendreResult {
        rate: log_mgf(t_star),
        t_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub plan: BudgetPlan,
    pub n: u64,
    pub expectation: f64,
    pub hoeffding_failure_bound: f64,
    pub cramer_rate: f64,
    pub cramer_degenerate: bool,
    pub cramer_failure_bound: f64,
    pub exact_failure: Option<f64>,
}

/// Both bounds for the plan, and the exact failure probability when `exact`.
pub fn rate_report(
    params: &ComparisonParams,
    plan: &BudgetPlan,
    exact: bool,
) -> Result<RateReport> {
    let dist = params.aggregate(plan.m)?.gap_dist()?;
    let rate = cramer_rate(&dist);
    let expectation = dist.expectation();
    let exact_failure = if exact {
        Some(sum_distribution(&dist, plan.n)?.prob_nonpositive())
    } else {
        None
    };
    Ok(RateReport {
        plan: *plan,
        n: plan.n,
        expectation,
        hoeffding_failure_bound: hoeffding_failure_bound(expectation, plan.n).unwrap_or(1.0),
        cramer_rate: rate.rate,
        cramer_degenerate: rate.degenerate,
        cramer_failure_bound: cramer_failure_bound(&dist, plan.n),
        exact_failure,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub delta: f64,
    pub n: u64,
    pub hoeffding_failure_bound: f64,
    pub cramer_failure_bound: f64,
    pub max_comparisons_hoeffding: u64,
    pub max_comparisons_cramer: u64,
    /// Comparisons plus the best model itself.
    pub models_hoeffding: u64,
    pub models_cramer: u64,
}

fn comparisons_for(delta: f64, bound: f64) -> u64 {
    // `as` saturates, which is the right answer for astronomically small bounds.
    (delta / bound).floor() as u64
}

/// How many comparisons against the best model a test set of `n` points can
/// support with family-wise error at most `delta`.
pub fn capacity(dist: &TernaryDist, n: u64, delta: f64) -> Result<CapacityReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::validation(
            "delta",
            format!("{delta} must lie in (0, 1)"),
        ));
    }
    if n == 0 {
        return Err(Error::validation("n", "need at least one data point"));
    }
    let hoeffding = hoeffding_failure_bound(dist.expectation(), n).unwrap_or(1.0);
    let cramer = cramer_failure_bound(dist, n);
    let max_h = comparisons_for(delta, hoeffding);
    let max_c = comparisons_for(delta, cramer);
    Ok(CapacityReport {
        delta,
        n,
        hoeffding_failure_bound: hoeffding,
        cramer_failure_bound: cramer,
        max_comparisons_hoeffding: max_h,
        max_comparisons_cramer: max_c,
        models_hoeffding: max_h.saturating_add(1),
        models_cramer: max_c.saturating_add(1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Hoeffding,
    Cramer,
}

impl std::str::FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hoeffding" => Ok(BoundKind::Hoeffding),
            "cramer" => Ok(BoundKind::Cramer),
            other => Err(Error::validation(
                "bound",
                format!("unknown bound `{other}` (expected hoeffding or cramer)"),
            )),
        }
    }
}

/// Smallest `n` with `comparisons * bound(n) <= delta`.
pub fn min_sample_size(
    dist: &TernaryDist,
    delta: f64,
    comparisons: u64,
    bound: BoundKind,
) -> Result<u64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::validation(
            "delta",
            format!("{delta} must lie in (0, 1]"),
        ));
    }
    if comparisons == 0 {
        return Err(Error::validation(
            "comparisons",
            "need at least one comparison",
        ));
    }
    // per-sample decay of the chosen bound, in nats
    let decay = match bound {
        BoundKind::Hoeffding => {
            let e = dist.expectation();
            if !(e > 0.0) {
                return Err(Error::domain(
                    "Hoeffding sample size needs a positive expectation",
                ));
            }
            e * e / 2.0
        }
        BoundKind::Cramer => {
            if !(dist.expectation() > 0.0) {
                return Err(Error::domain(
                    "Cramér sample size needs a positive expectation",
                ));
            }
            -cramer_rate(dist).rate
        }
    };
    if !(decay > 0.0) {
        return Err(Error::domain("bound does not decay for this distribution"));
    }
    let fails = |n: u64| comparisons as f64 * (-(n as f64) * decay).exp() > delta;
    let target = (comparisons as f64 / delta).ln();
    let mut n = if target <= 0.0 {
        1
    } else {
        (target / decay).ceil().max(1.0) as u64
    };
    // the closed form can be off by one after rounding
    while fails(n) {
        n += 1;
    }
    while n > 1 && !fails(n - 1) {
        n -= 1;
    }
    Ok(n)
}

/// Whether `m * rate(single) <= rate(aggregated)`, i.e. `m n` single labels
/// decay at least as fast as `n` majority-voted points.
pub fn rate_gap(params: &ComparisonParams, m: u32) -> Result<f64> {
    let single = cramer_rate(&params.gap_dist()?).rate;
    let agg = cramer_rate(&params.aggregate(m)?.gap_dist()?).rate;
    Ok(agg - m as f64 * single)
}

/// Ratio of aggregated to single-label expectation, `(2 M_m(q) - 1)/(2q - 1)`,
/// evaluated directly. Only used to cross-check [`hoeffding_sqrt_condition`].
pub fn expectation_ratio(m: u32, q: f64) -> Result<f64> {
    Ok((2.0 * majority_prob(q, m)? - 1.0) / (2.0 * q - 1.0))
}
