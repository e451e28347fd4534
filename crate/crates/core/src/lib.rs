//! Exact probabilities and large-deviation bounds for deciding how to spend
//! a budget of noisy labels when comparing two binary classifiers.
//!
//! - [`gap`]: parameter types, majority-vote accuracy and the law of the gap
//!   indicator.
//! - [`exact`]: exact law of the summed gap indicator, success
//!   probabilities, single-label vs majority-vote comparison, oracles.
//! - [`bounds`]: Hoeffding and Cramér failure bounds, benchmark capacity,
//!   minimum sample sizes.
//! - [`figures`]: tables behind the standard plots.
//! - [`sweep`]: resumable grid sweep over the correlated model.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod exact;
pub mod figures;
pub mod gap;
pub mod sweep;

pub use bounds::{
    capacity, cramer_failure_bound, cramer_rate, hoeffding_failure_bound, hoeffding_sqrt_condition,
    legendre_numeric, min_sample_size, rate_report, BoundKind, CapacityReport, CramerRate,
    LegendreResult, RateReport, SqrtCondition,
};
pub use error::{Error, Result};
pub use exact::{
    brute_force_sum, compare_strategies, monte_carlo_success, prob_positive, success_probability,
    sum_distribution, within_band, ComparisonReport, McEstimate, SumDist, Winner,
};
pub use figures::{figure_data, FigureId, FigureRequest, Table};
pub use gap::{
    majority_derivative, majority_prob, sigma, sigma_cap, BudgetPlan, ComparisonParams,
    CorrelatedParams, IndependentParams, TernaryDist,
};
pub use sweep::{run_sweep, run_sweep_with, SweepConfig, SweepControl, SweepSummary};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
