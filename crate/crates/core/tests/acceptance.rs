//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Tolerances are pinned below.

use std::time::Instant;

use labelbudget::bounds::{
    capacity, cramer_rate, hoeffding_failure_bound, hoeffding_sqrt_condition, legendre_numeric,
};
use labelbudget::exact::{
    brute_force_sum, monte_carlo_success, success_probability, sum_distribution,
};
use labelbudget::gap::{majority_prob, sigma, ComparisonParams, IndependentParams, TernaryDist};
use labelbudget::sweep::{run_sweep, SweepConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_TOL: f64 = 1e-12;
const BOUND_SLACK: f64 = 1e-12;
const DOMINANCE_SLACK: f64 = 1e-9;
const TWO_PATH_TOL: f64 = 1e-9;
const SIGMA_TOL: f64 = 1e-12;
const SWEEP_TOL: f64 = 1e-9;
const WIN_FRACTION: (f64, f64) = (0.55, 0.80);
const MC_TRIALS: u64 = 100_000;
const MC_SE_BAND: f64 = 4.0;
const MC_REQUIRED: usize = 48;

type Check = fn() -> (bool, String);

fn random_dist(rng: &mut ChaCha8Rng) -> TernaryDist {
    let (a, b): (f64, f64) = (rng.random(), rng.random());
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    TernaryDist::new(lo, 1.0 - hi, hi - lo).unwrap()
}

fn random_positive_dist(rng: &mut ChaCha8Rng) -> TernaryDist {
    loop {
        let d = random_dist(rng);
        let (x, y) = if d.x >= d.y { (d.x, d.y) } else { (d.y, d.x) };
        if x - y > 1e-3 {
            return TernaryDist::new(x, y, d.z).unwrap();
        }
    }
}

/// `Pr(majority of m votes correct)` from the binomial tail directly.
fn majority_by_tail(q: f64, m: u32) -> f64 {
    let mut total = 0.0;
    let mut coef = 1.0f64;
    for k in 0..=m {
        if k > 0 {
            coef = coef * f64::from(m - k + 1) / f64::from(k);
        }
        if 2 * k > m {
            total += coef * q.powi(k as i32) * (1.0 - q).powi((m - k) as i32);
        }
    }
    total
}

fn fig1_capacity() -> (bool, String) {
    let d = TernaryDist::new(0.1875, 0.1375, 0.675).unwrap();
    let via_params = IndependentParams::new(0.75, 0.1, 0.75)
        .unwrap()
        .gap_dist()
        .unwrap();
    let same = (via_params.x - d.x).abs() < 1e-15 && (via_params.y - d.y).abs() < 1e-15;
    let c = capacity(&d, 1500, 0.05).unwrap();
    // independent route to the same count
    let direct = (0.05 / (1500.0 * (2.0 * (d.x * d.y).sqrt() + d.z).ln()).exp()).floor() as u64;
    let ok = same
        && (16..=18).contains(&c.max_comparisons_cramer)
        && c.max_comparisons_cramer == direct
        && c.models_cramer >= 17
        && c.max_comparisons_hoeffding == 0;
    (
        ok,
        format!(
            "cramer comparisons {} (models {}), hoeffding comparisons {}",
            c.max_comparisons_cramer, c.models_cramer, c.max_comparisons_hoeffding
        ),
    )
}

fn fig2_dominance() -> (bool, String) {
    let mut worst = f64::INFINITY;
    for i in 1..=50 {
        let q = 0.5 + 0.01 * f64::from(i);
        let params = ComparisonParams::from(IndependentParams::new(0.8, 0.01, q).unwrap());
        let single = success_probability(&params, 1500, 1).unwrap();
        for m in [3, 5] {
            let agg = success_probability(&params, 1500, m).unwrap();
            worst = worst.min(single - agg);
        }
    }
    (
        worst >= -DOMINANCE_SLACK,
        format!("min(single - aggregate) = {worst:.3e}"),
    )
}

fn oracle_equivalence() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let d = random_dist(&mut rng);
        for n in 1..=8 {
            let a = sum_distribution(&d, n).unwrap();
            let b = brute_force_sum(&d, n).unwrap();
            for (p, q) in a.probs.iter().zip(&b.probs) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    (
        worst <= ORACLE_TOL,
        format!("max-norm distance {worst:.3e}"),
    )
}

fn bound_validity() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let d = random_positive_dist(&mut rng);
        let rate = cramer_rate(&d).rate;
        let e = d.expectation();
        for n in 1..=200u64 {
            let fail = sum_distribution(&d, n).unwrap().prob_nonpositive();
            let cramer = (n as f64 * rate).exp();
            let hoeffding = hoeffding_failure_bound(e, n).unwrap();
            worst = worst.max(fail - cramer).max(fail - hoeffding);
        }
    }
    (
        worst <= BOUND_SLACK,
        format!("max(exact - bound) = {worst:.3e}"),
    )
}

fn two_path_cramer() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut n = 0;
    while n < 100 {
        let d = random_dist(&mut rng);
        if d.x == 0.0 || d.y == 0.0 {
            continue;
        }
        let numeric = legendre_numeric(&d).unwrap().rate;
        worst = worst.max((numeric - cramer_rate(&d).rate).abs());
        n += 1;
    }
    (
        worst <= TWO_PATH_TOL,
        format!("max |closed form - numeric| = {worst:.3e}"),
    )
}

fn sqrt_condition() -> (bool, String) {
    let mut failures = 0;
    let mut checked = 0;
    for m in (3..=99).step_by(2) {
        for i in 1..=100 {
            let q = 0.5 + 0.005 * f64::from(i);
            let c = hoeffding_sqrt_condition(m, q).unwrap();
            checked += 1;
            // recomputed from the majority accuracy, not from the report
            let ratio = (2.0 * majority_by_tail(q, m) - 1.0) / (2.0 * q - 1.0);
            if !(c.holds && f64::from(m).sqrt() >= ratio - 1e-12) {
                failures += 1;
            }
        }
    }
    (failures == 0, format!("{failures} failures of {checked}"))
}

fn sigma_identity_and_cap() -> (bool, String) {
    let mut worst = 0.0f64;
    let mut cap_failures = 0;
    for m in (3..=99).step_by(2) {
        let cap = 1.0 + (2.0 * (f64::from(m - 1) / 2.0).sqrt() - 1.0) / std::f64::consts::PI.sqrt();
        for i in 0..=100 {
            let q = 0.5 + 0.005 * f64::from(i);
            let s = sigma(m, q).unwrap();
            let identity = q + (2.0 * q - 1.0) * s;
            worst = worst
                .max((identity - majority_by_tail(q, m)).abs())
                .max((identity - majority_prob(q, m).unwrap()).abs());
            if 1.0 + 2.0 * s > cap {
                cap_failures += 1;
            }
        }
    }
    (
        worst <= SIGMA_TOL && cap_failures == 0,
        format!("identity error {worst:.3e}, cap failures {cap_failures}"),
    )
}

fn desk_sweep() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig {
        n_values: (1..=11).collect(),
        m_values: vec![3, 11],
        grid_resolution: 0.05,
        tolerance: SWEEP_TOL,
        output_path: dir.path().join("desk.csv"),
        ..SweepConfig::default()
    };
    let s = run_sweep(&cfg).unwrap();
    let frac = s.frac_single_wins_qw_gt_qb.unwrap_or(f64::NAN);
    let ok = s.violations_a1 == 0 && (WIN_FRACTION.0..=WIN_FRACTION.1).contains(&frac);
    (
        ok,
        format!(
            "{} records, {} substantive A1 violations ({} noise), q_w > q_b single-win fraction {frac:.4}",
            s.total, s.violations_a1, s.noise_violations
        ),
    )
}

fn monte_carlo() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut agree = 0;
    for i in 0..50u64 {
        let p: f64 = rng.random_range(0.55..0.95);
        let eps = rng.random_range(0.005..(1.0 - p).min(0.2));
        let q = rng.random_range(0.55..1.0);
        let n = rng.random_range(1..=300u64);
        let d = IndependentParams::new(p, eps, q)
            .unwrap()
            .gap_dist()
            .unwrap();
        let exact = sum_distribution(&d, n).unwrap().prob_positive();
        let mc = monte_carlo_success(&d, n, MC_TRIALS, 1000 + i).unwrap();
        if mc.agrees_with(exact, MC_SE_BAND) {
            agree += 1;
        }
    }
    (
        agree >= MC_REQUIRED,
        format!("{agree}/50 within {MC_SE_BAND} standard errors"),
    )
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("benchmark capacity at n=1500", fig1_capacity),
        ("single-label dominance at k=1500", fig2_dominance),
        ("exact sums match brute force", oracle_equivalence),
        ("exact failure below both bounds", bound_validity),
        ("closed-form rate matches numeric Legendre", two_path_cramer),
        ("sqrt(m) condition for odd m <= 99", sqrt_condition),
        ("sigma identity and cap", sigma_identity_and_cap),
        ("desk-scale correlated sweep", desk_sweep),
        ("Monte-Carlo agrees with exact", monte_carlo),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let (ok, detail) = check();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{} {name}: {detail} [{secs:.1}s]",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
