//! Parameter types, majority-vote label accuracy, and the law of the gap
//! indicator `G` that records whether the better classifier wins (+1), loses
//! (-1) or ties (0) against the worse one on a single test point.
//!
//! Two parameterizations are supported:
//!
//! - [`IndependentParams`]: classifier errors and label errors are mutually
//!   independent. The worse classifier has accuracy `p`, the better one
//!   `p + epsilon`, and every label is correct with probability `q`.
//! - [`CorrelatedParams`]: the better classifier's accuracy is conditioned on
//!   whether the worse one is right (`p_b1`) or wrong (`p_b0`), and the label
//!   accuracy is conditioned on which classifier is right (`q_b`, `q_w`).
//!
//! Aggregating `m` labels per point by majority vote is modelled by replacing
//! each label accuracy `q` with `M_m(q)` (see [`majority_prob`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed drift of `x + y + z` away from one.
pub const PROB_SUM_TOLERANCE: f64 = 1e-12;

/// Slack used for range checks that are computed from other parameters
/// (`epsilon <= 1 - p`, the risk ordering), so that grid points landing on a
/// boundary up to rounding are classified consistently.
pub const RANGE_SLACK: f64 = 1e-12;

/// Negative round-off of this magnitude is clamped to zero.
const NEGATIVE_CLAMP: f64 = 1e-15;

fn check_unit(field: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(Error::validation(
            field,
            format!("{value} is not a probability"),
        ));
    }
    Ok(())
}

fn check_classifier_accuracy(field: &'static str, value: f64) -> Result<()> {
    check_unit(field, value)?;
    if value < 0.5 {
        return Err(Error::validation(
            field,
            format!("{value} must lie in [0.5, 1]"),
        ));
    }
    Ok(())
}

fn check_label_accuracy(field: &'static str, value: f64) -> Result<()> {
    check_unit(field, value)?;
    if value <= 0.5 {
        return Err(Error::validation(
            field,
            format!("{value} must lie in (0.5, 1]"),
        ));
    }
    Ok(())
}

fn check_odd(m: u32) -> Result<()> {
    if m == 0 || m.is_multiple_of(2) {
        return Err(Error::domain(format!(
            "labels per point must be a positive odd integer, got {m}"
        )));
    }
    Ok(())
}

/// Yields `C(2j-1, j) * (q(1-q))^j` for `j = 1, 2, ...`.
///
/// Consecutive terms differ by the factor `2(2j+1)/(j+1) * q(1-q)`, so no
/// binomial coefficient is ever materialized.
fn central_terms(q: f64) -> impl Iterator<Item = f64> {
    let pq = q * (1.0 - q);
    let mut term = pq;
    let mut j = 1.0_f64;
    std::iter::from_fn(move || {
        let out = term;
        term *= 2.0 * (2.0 * j + 1.0) / (j + 1.0) * pq;
        j += 1.0;
        Some(out)
    })
}

fn check_q(q: f64) -> Result<()> {
    if !q.is_finite() || !(0.0..=1.0).contains(&q) {
        return Err(Error::domain(format!("q = {q} is not a probability")));
    }
    Ok(())
}

/// `sigma(m, q) = sum over odd k <= m-2 of C(k, ceil(k/2)) (q(1-q))^ceil(k/2)`.
///
/// Satisfies `M_m(q) = q + (2q - 1) sigma(m, q)` for odd `m`.
pub fn sigma(m: u32, q: f64) -> Result<f64> {
    check_odd(m)?;
    check_q(q)?;
    Ok(central_terms(q).take(((m - 1) / 2) as usize).sum())
}

/// Probability that a strict majority of `m` independent voters, each correct
/// with probability `q`, is correct.
///
/// Odd `m` goes through the `sigma` identity. For even `m` the last vote can
/// only break an existing majority of one, so
/// `M_m(q) = M_{m-1}(q) - C(m-1, m/2) (q(1-q))^{m/2}`.
pub fn majority_prob(q: f64, m: u32) -> Result<f64> {
    if m == 0 {
        return Err(Error::domain("majority of zero voters is undefined"));
    }
    check_q(q)?;
    let half = (m / 2) as usize;
    if m % 2 == 1 {
        let s: f64 = central_terms(q).take(half).sum();
        Ok(q + (2.0 * q - 1.0) * s)
    } else {
        let mut s = 0.0;
        let mut last = 0.0;
        for (i, term) in central_terms(q).take(half).enumerate() {
            if i + 1 < half {
                s += term;
            } else {
                last = term;
            }
        }
        Ok(q + (2.0 * q - 1.0) * s - last)
    }
}

/// `d/dq M_m(q) = m C(m-1, (m-1)/2) (q(1-q))^{(m-1)/2}` for odd `m`.
pub fn majority_derivative(q: f64, m: u32) -> Result<f64> {
    check_odd(m)?;
    check_q(q)?;
    let half = (m - 1) / 2;
    let pq = q * (1.0 - q);
    let mut value = m as f64;
    for i in 1..=half {
        value *= (half + i) as f64 / i as f64 * pq;
    }
    Ok(value)
}

/// Upper bound on `1 + 2 sigma(m, q)` for odd `m >= 3`, obtained from a
/// Stirling-type bound on the central binomial coefficient.
pub fn sigma_cap(m: u32) -> Result<f64> {
    check_odd(m)?;
    if m < 3 {
        return Err(Error::domain("the sigma cap is stated for m >= 3"));
    }
    let half = (m - 1) as f64 / 2.0;
    Ok(1.0 + (2.0 * half.sqrt() - 1.0) / std::f64::consts::PI.sqrt())
}

/// Law of the gap indicator on `{+1, 0, -1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TernaryDist {
    /// `Pr(G = +1)`
    pub x: f64,
    /// `Pr(G = -1)`
    pub y: f64,
    /// `Pr(G = 0)`
    pub z: f64,
}

impl TernaryDist {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let fix = |field: &'static str, v: f64| -> Result<f64> {
            if !v.is_finite() {
                return Err(Error::validation(field, "not finite"));
            }
            if v < 0.0 {
                if v >= -NEGATIVE_CLAMP {
                    return Ok(0.0);
                }
                return Err(Error::validation(field, format!("{v} is negative")));
            }
            Ok(v)
        };
        let (x, y, z) = (fix("x", x)?, fix("y", y)?, fix("z", z)?);
        let total = x + y + z;
        if (total - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::validation(
                "z",
                format!("x + y + z = {total} is not one"),
            ));
        }
        Ok(Self { x, y, z })
    }

    pub fn expectation(&self) -> f64 {
        self.x - self.y
    }

    /// Laid out as `[Pr(-1), Pr(0), Pr(+1)]`.
    pub fn as_support(&self) -> [f64; 3] {
        [self.y, self.z, self.x]
    }
}

/// Independent classifier and label errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndependentParams {
    /// Accuracy of the worse classifier.
    pub p: f64,
    /// Accuracy margin of the better classifier.
    #[serde(alias = "eps")]
    pub epsilon: f64,
    /// Probability that a single label is correct.
    pub q: f64,
}

impl IndependentParams {
    pub fn new(p: f64, epsilon: f64, q: f64) -> Result<Self> {
        let params = Self { p, epsilon, q };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_classifier_accuracy("p", self.p)?;
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::validation("epsilon", "margin must be positive"));
        }
        if self.epsilon > 1.0 - self.p + RANGE_SLACK {
            return Err(Error::validation(
                "epsilon",
                format!("margin {} exceeds 1 - p = {}", self.epsilon, 1.0 - self.p),
            ));
        }
        check_label_accuracy("q", self.q)
    }

    /// Gap indicator law for a single label per point.
    pub fn gap_dist(&self) -> Result<TernaryDist> {
        self.validate()?;
        let Self { p, epsilon, q } = *self;
        let both_wrong_or_right = (1.0 - p - epsilon).max(0.0) * p;
        let x = q * epsilon + both_wrong_or_right;
        let y = (1.0 - q) * epsilon + both_wrong_or_right;
        let z = p * (p + epsilon) + (1.0 - p - epsilon).max(0.0) * (1.0 - p);
        TernaryDist::new(x, y, z)
    }

    /// Replaces `q` by the accuracy of an `m`-label majority vote.
    pub fn aggregate(&self, m: u32) -> Result<Self> {
        check_odd(m)?;
        self.validate()?;
        Ok(Self {
            q: majority_prob(self.q, m)?,
            ..*self
        })
    }

    /// The correlated parameterization that reproduces this model exactly.
    pub fn to_correlated(&self) -> CorrelatedParams {
        CorrelatedParams {
            p_w: self.p,
            p_b0: self.p + self.epsilon,
            p_b1: self.p + self.epsilon,
            q_b: self.q,
            q_w: self.q,
        }
    }
}

/// Classifier errors correlated with each other and with label errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatedParams {
    /// Accuracy of the worse classifier.
    pub p_w: f64,
    /// Accuracy of the better classifier where the worse one is wrong.
    pub p_b0: f64,
    /// Accuracy of the better classifier where the worse one is right.
    pub p_b1: f64,
    /// Label accuracy where only the better classifier is right.
    pub q_b: f64,
    /// Label accuracy where only the worse classifier is right.
    pub q_w: f64,
}

impl CorrelatedParams {
    pub fn new(p_w: f64, p_b0: f64, p_b1: f64, q_b: f64, q_w: f64) -> Result<Self> {
        let params = Self {
            p_w,
            p_b0,
            p_b1,
            q_b,
            q_w,
        };
        params.validate()?;
        Ok(params)
    }

    /// `Pr(E_b) - Pr(E_w)`: how much more often only the better classifier
    /// is right than only the worse one. Positive iff the better classifier
    /// has lower risk.
    pub fn risk_margin(&self) -> f64 {
        (1.0 - self.p_w) * self.p_b0 - self.p_w * (1.0 - self.p_b1)
    }

    pub fn validate(&self) -> Result<()> {
        check_classifier_accuracy("p_w", self.p_w)?;
        check_classifier_accuracy("p_b0", self.p_b0)?;
        check_classifier_accuracy("p_b1", self.p_b1)?;
        check_label_accuracy("q_b", self.q_b)?;
        check_label_accuracy("q_w", self.q_w)?;
        if self.risk_margin() <= RANGE_SLACK {
            return Err(Error::validation(
                "p_b0",
                format!(
                    "better classifier does not have lower risk: (1-p_w)p_b0 + p_w p_b1 = {} <= p_w = {}",
                    (1.0 - self.p_w) * self.p_b0 + self.p_w * self.p_b1,
                    self.p_w
                ),
            ));
        }
        Ok(())
    }

    /// Label accuracy is not biased towards the worse classifier (`q_b >= q_w`).
    /// Violations are legal input; they only void the single-label guarantee.
    pub fn assumption1_satisfied(&self) -> bool {
        self.q_b >= self.q_w
    }

    pub fn gap_dist(&self) -> Result<TernaryDist> {
        self.validate()?;
        let only_better = (1.0 - self.p_w) * self.p_b0;
        let only_worse = self.p_w * (1.0 - self.p_b1);
        let x = self.q_b * only_better + (1.0 - self.q_w) * only_worse;
        let y = (1.0 - self.q_b) * only_better + self.q_w * only_worse;
        let z = 1.0 - only_better - only_worse;
        TernaryDist::new(x, y, z)
    }

    /// Expectation of the gap indicator, evaluated directly from the
    /// parameters rather than from the law.
    pub fn expectation(&self) -> f64 {
        (2.0 * self.q_b - 1.0) * (1.0 - self.p_w) * self.p_b0
            - (2.0 * self.q_w - 1.0) * self.p_w * (1.0 - self.p_b1)
    }

    pub fn aggregate(&self, m: u32) -> Result<Self> {
        check_odd(m)?;
        self.validate()?;
        Ok(Self {
            q_b: majority_prob(self.q_b, m)?,
            q_w: majority_prob(self.q_w, m)?,
            ..*self
        })
    }
}

/// Either parameterization, tagged by `mode` on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "params", rename_all = "lowercase")]
pub enum ComparisonParams {
    Independent(IndependentParams),
    Correlated(CorrelatedParams),
}

impl ComparisonParams {
    pub fn validate(&self) -> Result<()> {
        match self {
            ComparisonParams::Independent(p) => p.validate(),
            ComparisonParams::Correlated(p) => p.validate(),
        }
    }

    pub fn gap_dist(&self) -> Result<TernaryDist> {
        match self {
            ComparisonParams::Independent(p) => p.gap_dist(),
            ComparisonParams::Correlated(p) => p.gap_dist(),
        }
    }

    pub fn aggregate(&self, m: u32) -> Result<Self> {
        Ok(match self {
            ComparisonParams::Independent(p) => ComparisonParams::Independent(p.aggregate(m)?),
            ComparisonParams::Correlated(p) => ComparisonParams::Correlated(p.aggregate(m)?),
        })
    }

    /// Always true in the independent model.
    pub fn assumption1_satisfied(&self) -> bool {
        match self {
            ComparisonParams::Independent(_) => true,
            ComparisonParams::Correlated(p) => p.assumption1_satisfied(),
        }
    }
}

impl From<IndependentParams> for ComparisonParams {
    fn from(p: IndependentParams) -> Self {
        ComparisonParams::Independent(p)
    }
}

impl From<CorrelatedParams> for ComparisonParams {
    fn from(p: CorrelatedParams) -> Self {
        ComparisonParams::Correlated(p)
    }
}

/// Split of a label budget `k` into `n` points with `m` labels each.
/// Leftover labels (`k - n m`) are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub k: u64,
    pub m: u32,
    pub n: u64,
}

impl BudgetPlan {
    pub fn new(k: u64, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::validation(
                "m",
                "labels per point must be at least one",
            ));
        }
        let n = k / u64::from(m);
        if n == 0 {
            return Err(Error::validation("budget", "budget below one data point"));
        }
        Ok(Self { k, m, n })
    }

    pub fn single(k: u64) -> Result<Self> {
        Self::new(k, 1)
    }

    pub fn leftover(&self) -> u64 {
        self.k - self.n * u64::from(self.m)
    }
}
