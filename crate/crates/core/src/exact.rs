//! Exact law of `S_n = G_1 + ... + G_n` and the probability that a test set
//! of `n` points ranks the better classifier first (`S_n > 0`).
//!
//! [`sum_distribution`] raises the three-point law of `G` to the `n`-th
//! convolution power by binary exponentiation. Each product is a schoolbook
//! convolution, so the cost is `O(n^2)` multiply-adds dominated by the final
//! squaring, and memory is `O(n)`. Supports are capped at
//! [`DEFAULT_SUPPORT_CAP`] entries unless a caller picks another cap.
//!
//! After every product, negative round-off is clamped, tails below
//! [`TRIM_THRESHOLD`] are dropped and the mass is renormalized. The largest
//! pre-renormalization drift is kept on the result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gap::{BudgetPlan, ComparisonParams, TernaryDist};

pub const DEFAULT_SUPPORT_CAP: u64 = 1_000_000;

/// Leading and trailing entries below this are dropped between products.
pub const TRIM_THRESHOLD: f64 = 1e-300;

const NEGATIVE_CLAMP: f64 = 1e-15;

/// Probabilities closer than this count as a tie when picking a winner.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Exact law of a sum of `n` independent gap indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumDist {
    pub n: u64,
    /// `probs[i] = Pr(S_n = i - n)` for `i` in `0..=2n`.
    pub probs: Vec<f64>,
    /// Largest `|sum - 1|` observed before any renormalization.
    pub drift: f64,
}

impl SumDist {
    pub fn prob_at(&self, s: i64) -> f64 {
        let idx = s + self.n as i64;
        if idx < 0 {
            return 0.0;
        }
        self.probs.get(idx as usize).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        let n = self.n as f64;
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i as f64 - n) * p)
            .sum()
    }

    /// `Pr(S_n > 0)`; ties count as failure.
    pub fn prob_positive(&self) -> f64 {
        self.probs[self.n as usize + 1..].iter().sum()
    }

    /// `Pr(S_n <= 0)`, summed directly so small failure probabilities keep
    /// their relative precision.
    pub fn prob_nonpositive(&self) -> f64 {
        self.probs[..=self.n as usize].iter().sum()
    }

    /// Law of the sum of the two underlying sums, tidied and renormalized
    /// like every product inside [`sum_distribution`].
    pub fn convolve(&self, other: &SumDist) -> Result<SumDist> {
        let mut drift = self.drift.max(other.drift);
        let w = self.window().product(&other.window(), &mut drift)?;
        Ok(w.into_sum_dist(self.n + other.n, drift))
    }

    fn window(&self) -> Window {
        let start = self
            .probs
            .iter()
            .position(|&p| p >= TRIM_THRESHOLD)
            .unwrap_or(0);
        let end = self
            .probs
            .iter()
            .rposition(|&p| p >= TRIM_THRESHOLD)
            .map_or(self.probs.len(), |i| i + 1);
        Window {
            lo: start as i64 - self.n as i64,
            probs: self.probs[start..end].to_vec(),
        }
    }
}

/// Schoolbook discrete convolution.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let (a, b) = if a.len() < b.len() { (a, b) } else { (b, a) };
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (o, &bj) in out[i..i + b.len()].iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
    out
}

/// A law on a contiguous window of the integers starting at `lo`.
#[derive(Debug, Clone)]
struct Window {
    lo: i64,
    probs: Vec<f64>,
}

impl Window {
    fn product(&self, other: &Window, drift: &mut f64) -> Result<Window> {
        let mut w = Window {
            lo: self.lo + other.lo,
            probs: convolve(&self.probs, &other.probs),
        };
        w.tidy(drift)?;
        Ok(w)
    }

    fn tidy(&mut self, drift: &mut f64) -> Result<()> {
        for p in self.probs.iter_mut() {
            if *p < 0.0 {
                if *p < -NEGATIVE_CLAMP {
                    return Err(Error::Numeric(format!(
                        "convolution produced probability {p}"
                    )));
                }
                *p = 0.0;
            }
        }
        let start = self
            .probs
            .iter()
            .position(|&p| p >= TRIM_THRESHOLD)
            .unwrap_or(0);
        let end = self
            .probs
            .iter()
            .rposition(|&p| p >= TRIM_THRESHOLD)
            .map_or(self.probs.len(), |i| i + 1);
        if start > 0 || end < self.probs.len() {
            self.probs = self.probs[start..end].to_vec();
            self.lo += start as i64;
        }
        let total: f64 = self.probs.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numeric(format!(
                "convolution lost all mass ({total})"
            )));
        }
        *drift = drift.max((total - 1.0).abs());
        if total != 1.0 {
            let scale = total.recip();
            self.probs.iter_mut().for_each(|p| *p *= scale);
        }
        Ok(())
    }

    fn into_sum_dist(self, n: u64, drift: f64) -> SumDist {
        let mut probs = vec![0.0; 2 * n as usize + 1];
        let offset = (self.lo + n as i64) as usize;
        probs[offset..offset + self.probs.len()].copy_from_slice(&self.probs);
        SumDist { n, probs, drift }
    }
}

fn check_support(n: u64, cap: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::validation("n", "need at least one data point"));
    }
    let entries = n.checked_mul(2).and_then(|v| v.checked_add(1));
    match entries {
        Some(e) if e <= cap => Ok(()),
        _ => Err(Error::resource(format!(
            "sum over {n} points needs more than {cap} support entries"
        ))),
    }
}

/// Exact law of the sum of `n` independent copies of `dist`.
pub fn sum_distribution(dist: &TernaryDist, n: u64) -> Result<SumDist> {
    sum_distribution_capped(dist, n, DEFAULT_SUPPORT_CAP)
}

pub fn sum_distribution_capped(dist: &TernaryDist, n: u64, cap: u64) -> Result<SumDist> {
    check_support(n, cap)?;
    let dist = TernaryDist::new(dist.x, dist.y, dist.z)?;
    let mut drift = 0.0_f64;
    let mut base = Window {
        lo: -1,
        probs: dist.as_support().to_vec(),
    };
    base.tidy(&mut drift)?;

    let mut acc: Option<Window> = None;
    let mut remaining = n;
    loop {
        if remaining & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => a.product(&base, &mut drift)?,
            });
        }
        remaining >>= 1;
        if remaining == 0 {
            break;
        }
        base = base.product(&base, &mut drift)?;
        log::trace!("squared to width {}, drift {:e}", base.probs.len(), drift);
    }
    if drift > 1e-9 {
        log::debug!("sum of {n} copies drifted by {drift:e} before renormalization");
    }
    Ok(acc.expect("n >= 1").into_sum_dist(n, drift))
}

/// Exact law by enumerating every composition `(a, b, c)` of `n` into wins,
/// losses and ties. Independent of the convolution path; use it as an
/// oracle for small `n`.
pub fn brute_force_sum(dist: &TernaryDist, n: u64) -> Result<SumDist> {
    const MAX_N: u64 = 12;
    if n > MAX_N {
        return Err(Error::resource(format!(
            "enumeration is limited to n <= {MAX_N}, got {n}"
        )));
    }
    if n == 0 {
        return Err(Error::validation("n", "need at least one data point"));
    }
    let factorial = |k: u64| (1..=k).product::<u64>() as f64;
    let mut probs = vec![0.0; 2 * n as usize + 1];
    for wins in 0..=n {
        for losses in 0..=(n - wins) {
            let ties = n - wins - losses;
            let ways = factorial(n) / (factorial(wins) * factorial(losses) * factorial(ties));
            let weight = ways
                * dist.x.powi(wins as i32)
                * dist.y.powi(losses as i32)
                * dist.z.powi(ties as i32);
            probs[(n + wins - losses) as usize] += weight;
        }
    }
    Ok(SumDist {
        n,
        probs,
        drift: 0.0,
    })
}

/// `Pr(S_n > 0)`.
pub fn prob_positive(s: &SumDist) -> f64 {
    s.prob_positive()
}

/// Probability that the better classifier strictly wins on a test set built
/// from budget `k` with `m` majority-voted labels per point.
pub fn success_probability(params: &ComparisonParams, k: u64, m: u32) -> Result<f64> {
    let plan = BudgetPlan::new(k, m)?;
    plan_success_probability(params, &plan)
}

pub fn plan_success_probability(params: &ComparisonParams, plan: &BudgetPlan) -> Result<f64> {
    let dist = params.aggregate(plan.m)?.gap_dist()?;
    Ok(sum_distribution(&dist, plan.n)?.prob_positive())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    Single,
    Aggregate,
    Tie,
}

impl Winner {
    pub fn from_probs(single: f64, aggregate: f64) -> Self {
        if (single - aggregate).abs() <= TIE_TOLERANCE {
            Winner::Tie
        } else if single > aggregate {
            Winner::Single
        } else {
            Winner::Aggregate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub plan_single: BudgetPlan,
    pub plan_agg: BudgetPlan,
    pub p_success_single: f64,
    pub p_success_agg: f64,
    pub winner: Winner,
}

/// One report per distinct `m` (ascending), each against the single-label
/// plan that spends the whole budget.
pub fn compare_strategies(
    params: &ComparisonParams,
    k: u64,
    m_list: &[u32],
) -> Result<Vec<ComparisonReport>> {
    params.validate()?;
    let mut ms = m_list.to_vec();
    ms.sort_unstable();
    ms.dedup();
    for &m in &ms {
        if m % 2 == 0 {
            return Err(Error::domain(format!(
                "labels per point must be a positive odd integer, got {m}"
            )));
        }
        BudgetPlan::new(k, m)?;
    }
    let plan_single = BudgetPlan::single(k)?;
    let p_single = plan_success_probability(params, &plan_single)?;
    ms.iter()
        .map(|&m| {
            let plan_agg = BudgetPlan::new(k, m)?;
            let p_agg = plan_success_probability(params, &plan_agg)?;
            Ok(ComparisonReport {
                plan_single,
                plan_agg,
                p_success_single: p_single,
                p_success_agg: p_agg,
                winner: Winner::from_probs(p_single, p_agg),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Monte-Carlo estimate of `Pr(S_n > 0)`.
///
/// Each trial draws the win/loss counts of `n` points as a multinomial
/// (a binomial for wins, then a binomial for losses among the rest), which
/// is an exact sample of `S_n` without touching the convolution code.
pub fn monte_carlo_success(
    dist: &TernaryDist,
    n: u64,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    monte_carlo_with_rng(dist, n, trials, &mut rng).map(|(estimate, std_error)| McEstimate {
        estimate,
        std_error,
        trials,
        seed,
    })
}

impl McEstimate {
    /// Whether `exact` lies within `k` standard errors of the estimate.
    pub fn agrees_with(&self, exact: f64, k: f64) -> bool {
        within_band(self.estimate, self.std_error, self.trials, exact, k)
    }
}

/// `|estimate - exact| <= k * se`, with `se` floored at one trial's worth of
/// probability so that an all-hit or all-miss sample is not held to zero width.
pub fn within_band(estimate: f64, std_error: f64, trials: u64, exact: f64, k: f64) -> bool {
    let se = std_error.max(1.0 / trials.max(1) as f64);
    (estimate - exact).abs() <= k * se
}

/// Seeded estimate on an independent ChaCha stream, so parallel callers can
/// share one seed and stay reproducible.
pub(crate) fn monte_carlo_stream(
    dist: &TernaryDist,
    n: u64,
    trials: u64,
    seed: u64,
    stream: u64,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    monte_carlo_with_rng(dist, n, trials, &mut rng)
}

fn monte_carlo_with_rng(
    dist: &TernaryDist,
    n: u64,
    trials: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::validation("trials", "need at least one trial"));
    }
    if n == 0 {
        return Err(Error::validation("n", "need at least one data point"));
    }
    let bad = |e: rand_distr::BinomialError| Error::Numeric(e.to_string());
    let wins_dist = Binomial::new(n, dist.x.clamp(0.0, 1.0)).map_err(bad)?;
    let rest = dist.y + dist.z;
    let loss_share = if rest > 0.0 {
        (dist.y / rest).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut hits = 0u64;
    for _ in 0..trials {
        let wins = wins_dist.sample(rng);
        let others = n - wins;
        let losses = if others == 0 || loss_share == 0.0 {
            0
        } else {
            Binomial::new(others, loss_share).map_err(bad)?.sample(rng)
        };
        if wins > losses {
            hits += 1;
        }
    }
    let estimate = hits as f64 / trials as f64;
    let std_error = (estimate * (1.0 - estimate) / trials as f64).sqrt();
    Ok((estimate, std_error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gap::IndependentParams;
    use proptest::prelude::*;

    fn dist(x: f64, y: f64, z: f64) -> TernaryDist {
        TernaryDist::new(x, y, z).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max)
    }

    /// `log Pr(S_n = s)` summed over trinomial terms in log space.
    fn log_space_prob_positive(d: &TernaryDist, n: u64) -> f64 {
        let mut log_fact = vec![0.0_f64; n as usize + 1];
        for i in 1..=n as usize {
            log_fact[i] = log_fact[i - 1] + (i as f64).ln();
        }
        let (lx, ly, lz) = (d.x.ln(), d.y.ln(), d.z.ln());
        let mut terms = Vec::new();
        for wins in 0..=n {
            for losses in 0..wins.min(n - wins + 1) {
                let ties = n - wins - losses;
                terms.push(
                    log_fact[n as usize]
                        - log_fact[wins as usize]
                        - log_fact[losses as usize]
                        - log_fact[ties as usize]
                        + wins as f64 * lx
                        + losses as f64 * ly
                        + ties as f64 * lz,
                );
            }
        }
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top.exp() * terms.iter().map(|t| (t - top).exp()).sum::<f64>()
    }

    #[test]
    fn single_copy_is_base_law() {
        let d = dist(0.16, 0.154, 0.686);
        let s = sum_distribution(&d, 1).unwrap();
        assert!(max_diff(&s.probs, &[0.154, 0.686, 0.16]) < 1e-15);
        assert_eq!(
            brute_force_sum(&d, 1).unwrap().probs,
            vec![0.154, 0.686, 0.16]
        );
        assert!((s.prob_positive() - 0.16).abs() < 1e-15);
    }

    #[test]
    fn symmetric_coin_by_hand() {
        let s = sum_distribution(&dist(0.5, 0.5, 0.0), 2).unwrap();
        assert!(max_diff(&s.probs, &[0.25, 0.0, 0.5, 0.0, 0.25]) < 1e-16);
    }

    #[test]
    fn matches_enumeration_at_eight() {
        let d = dist(0.16, 0.154, 0.686);
        let a = sum_distribution(&d, 8).unwrap();
        let b = brute_force_sum(&d, 8).unwrap();
        assert!(max_diff(&a.probs, &b.probs) <= 1e-12);
    }

    #[test]
    fn uniform_three_copies() {
        let third = 1.0 / 3.0;
        let d = TernaryDist {
            x: third,
            y: third,
            z: third,
        };
        let a = sum_distribution(&d, 3).unwrap();
        let b = brute_force_sum(&d, 3).unwrap();
        assert!(max_diff(&a.probs, &b.probs) <= 1e-14);
        // 3! orderings of (+1, 0, -1) plus the all-zero outcome
        assert!((b.prob_at(0) - 7.0 / 27.0).abs() < 1e-15);
    }

    #[test]
    fn brute_force_is_capped() {
        let d = dist(0.3, 0.3, 0.4);
        assert!(matches!(brute_force_sum(&d, 13), Err(Error::Resource(_))));
    }

    #[test]
    fn support_cap_is_enforced() {
        let d = dist(0.3, 0.3, 0.4);
        assert!(matches!(
            sum_distribution_capped(&d, 100, 150),
            Err(Error::Resource(_))
        ));
        assert!(matches!(
            sum_distribution(&d, DEFAULT_SUPPORT_CAP),
            Err(Error::Resource(_))
        ));
        assert!(sum_distribution(&d, 0).is_err());
    }

    #[test]
    fn ties_count_as_failure() {
        for n in [1, 2, 5, 40, 301] {
            let s = sum_distribution(&dist(0.2, 0.2, 0.6), n).unwrap();
            assert!(s.prob_positive() < 0.5);
            assert!((s.prob_positive() + s.prob_nonpositive() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_law_trims_to_a_point() {
        let s = sum_distribution(&dist(1.0, 0.0, 0.0), 37).unwrap();
        assert_eq!(s.prob_at(37), 1.0);
        assert_eq!(s.prob_positive(), 1.0);
    }

    #[test]
    fn log_space_recomputation_agrees() {
        let d = dist(0.1875, 0.1375, 0.675);
        let s = sum_distribution(&d, 1500).unwrap();
        let oracle = log_space_prob_positive(&d, 1500);
        assert!(
            (s.prob_positive() - oracle).abs() <= 1e-10,
            "{} vs {oracle}",
            s.prob_positive()
        );
        assert!(s.drift <= 1e-9);
    }

    #[test]
    fn budget_below_one_point() {
        let params: ComparisonParams = IndependentParams::new(0.8, 0.01, 0.8).unwrap().into();
        let err = success_probability(&params, 2, 3).unwrap_err();
        assert!(err.to_string().contains("budget below one data point"));
    }

    #[test]
    fn no_signal_stays_below_half() {
        let params: ComparisonParams = IndependentParams::new(0.7, 0.1, 0.5 + 1e-9).unwrap().into();
        for (k, m) in [(1, 1), (99, 3), (500, 5)] {
            assert!(success_probability(&params, k, m).unwrap() < 0.5);
        }
    }

    #[test]
    fn smallest_comparison() {
        let params: ComparisonParams = IndependentParams::new(0.8, 0.01, 0.8).unwrap().into();
        let reports = compare_strategies(&params, 3, &[3]).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!((reports[0].plan_single.m, reports[0].plan_single.n), (1, 3));
        assert_eq!((reports[0].plan_agg.m, reports[0].plan_agg.n), (3, 1));
        assert!(compare_strategies(&params, 3, &[5]).is_err());
        assert!(compare_strategies(&params, 30, &[4]).is_err());
    }

    #[test]
    fn monte_carlo_examples() {
        let sure = monte_carlo_success(&dist(1.0, 0.0, 0.0), 5, 100, 1).unwrap();
        assert_eq!((sure.estimate, sure.std_error), (1.0, 0.0));

        let coin = monte_carlo_success(&dist(0.5, 0.5, 0.0), 2, 1_000_000, 7).unwrap();
        assert!((coin.estimate - 0.25).abs() <= 4.0 * coin.std_error);

        let again = monte_carlo_success(&dist(0.5, 0.5, 0.0), 2, 1_000_000, 7).unwrap();
        assert_eq!(coin, again);
    }

    #[test]
    fn monte_carlo_rejects_zero_trials() {
        assert!(monte_carlo_success(&dist(0.5, 0.5, 0.0), 2, 0, 7).is_err());
    }

    fn ternary() -> impl Strategy<Value = TernaryDist> {
        (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0)
            .prop_filter("non-degenerate", |(a, b, c)| a + b + c > 1e-3)
            .prop_map(|(a, b, c)| {
                let t = a + b + c;
                let (x, y) = (a / t, b / t);
                TernaryDist::new(x, y, 1.0 - x - y).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn convolution_is_associative(d in ternary(), a in 1u64..=64, b in 1u64..=64) {
            let whole = sum_distribution(&d, a + b).unwrap();
            let parts = sum_distribution(&d, a).unwrap().convolve(&sum_distribution(&d, b).unwrap()).unwrap();
            prop_assert!(max_diff(&whole.probs, &parts.probs) <= 1e-11);
        }

        #[test]
        fn mass_and_mean_are_conserved(d in ternary(), n in 1u64..3000) {
            let s = sum_distribution(&d, n).unwrap();
            prop_assert!((s.total() - 1.0).abs() <= 1e-9);
            prop_assert!(s.drift <= 1e-9);
            let tol = 1e-9 * (n as f64).max(1.0);
            prop_assert!((s.mean() - n as f64 * d.expectation()).abs() <= tol);
        }

        #[test]
        fn larger_budgets_never_hurt(p in 0.5f64..0.9, q in 0.55f64..1.0, m in prop::sample::select(vec![1u32, 3, 5])) {
            let params: ComparisonParams = IndependentParams::new(p, 0.05, q).unwrap().into();
            let mut last = 0.0;
            for n in 1..40u64 {
                let v = success_probability(&params, n * u64::from(m), m).unwrap();
                prop_assert!(v >= last - 1e-12, "n={} {} < {}", n, v, last);
                last = v;
            }
        }
    }

    #[test]
    fn biased_labels_can_favor_aggregation() {
        // found by the desk sweep: labels far more reliable where the worse model is right
        let params: ComparisonParams = crate::gap::CorrelatedParams::new(0.65, 1.0, 0.5, 0.6, 0.9)
            .unwrap()
            .into();
        assert!(!params.assumption1_satisfied());
        let report = &compare_strategies(&params, 15, &[3]).unwrap()[0];
        assert_eq!(report.winner, Winner::Aggregate);
        let agg = params.aggregate(3).unwrap().gap_dist().unwrap();
        let oracle = brute_force_sum(&agg, 5).unwrap().prob_positive();
        assert!((report.p_success_agg - oracle).abs() < 1e-12);
        assert!(report.p_success_agg - report.p_success_single > 0.05);
    }
}
