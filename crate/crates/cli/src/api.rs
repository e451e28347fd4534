//! Request envelope and the endpoint dispatcher shared by the CLI and the
//! HTTP service, so both produce the same JSON for the same input.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use labelbudget::bounds::{capacity, min_sample_size, rate_gap, rate_report, BoundKind};
use labelbudget::exact::{compare_strategies, monte_carlo_success, sum_distribution};
use labelbudget::figures::{figure_data, FigureId, FigureRequest};
use labelbudget::gap::{BudgetPlan, ComparisonParams, CorrelatedParams, IndependentParams};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_MC_TRIALS: u64 = 10_000;
pub const DEFAULT_COMPARE_M: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Independent,
    Correlated,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFields {
    /// Label budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    /// Labels per data point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    /// Data points; derived from `k` and `m` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_list: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparisons: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure: Option<FigureId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Include the full law of the sum in `exact` results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestEnvelope {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Value>,
    #[serde(default)]
    pub plan: PlanFields,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Dist,
    Exact,
    Compare,
    Bounds,
    Capacity,
    SampleSize,
    FigData,
    Mc,
}

impl Endpoint {
    pub const SERVED: [Endpoint; 7] = [
        Endpoint::Dist,
        Endpoint::Exact,
        Endpoint::Compare,
        Endpoint::Bounds,
        Endpoint::Capacity,
        Endpoint::SampleSize,
        Endpoint::FigData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Endpoint::Dist => "dist",
            Endpoint::Exact => "exact",
            Endpoint::Compare => "compare",
            Endpoint::Bounds => "bounds",
            Endpoint::Capacity => "capacity",
            Endpoint::SampleSize => "samplesize",
            Endpoint::FigData => "figdata",
            Endpoint::Mc => "mc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    /// The body is not a well-formed envelope.
    Malformed,
    Validation,
    Domain,
    Resource,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    pub kind: ErrorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl ApiError {
    fn new(kind: ErrorKind, field: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            kind,
            field: field.map(str::to_string),
            message: message.into(),
        }
    }

    pub fn malformed(field: Option<&str>, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Malformed, field, message)
    }

    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Validation, Some(field), message)
    }

    pub fn resource(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Resource, None, message)
    }

    pub fn status(&self) -> u16 {
        match self.kind {
            ErrorKind::Malformed => 400,
            ErrorKind::Validation | ErrorKind::Domain => 422,
            ErrorKind::Resource => 413,
            ErrorKind::Internal => 500,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Malformed | ErrorKind::Validation | ErrorKind::Domain => 2,
            ErrorKind::Resource => 3,
            ErrorKind::Internal => 1,
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{field}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl From<labelbudget::Error> for ApiError {
    fn from(err: labelbudget::Error) -> Self {
        use labelbudget::Error as E;
        match &err {
            E::Validation { field, message } => ApiError::validation(field, message.clone()),
            E::Domain(m) => ApiError::new(ErrorKind::Domain, None, m.clone()),
            E::Resource(m) => ApiError::resource(m.clone()),
            E::Numeric(_) | E::Io(_) => ApiError::new(ErrorKind::Internal, None, err.to_string()),
        }
    }
}

/// Per-request compute caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Largest sum length that may be convolved.
    pub max_n: u64,
    /// Largest number of figure cells.
    pub max_grid: usize,
}

impl Limits {
    pub const SERVICE_MAX_N: u64 = 100_000;
    pub const SERVICE_MAX_GRID: usize = 10_000;

    pub fn unbounded() -> Self {
        Self {
            max_n: u64::MAX,
            max_grid: usize::MAX,
        }
    }

    /// Service defaults, with `LABELBUDGET_MAX_N` overriding the `n` cap.
    pub fn service() -> Self {
        let max_n = std::env::var("LABELBUDGET_MAX_N")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(Self::SERVICE_MAX_N);
        Self {
            max_n,
            max_grid: Self::SERVICE_MAX_GRID,
        }
    }

    fn check_n(&self, n: u64) -> Result<(), ApiError> {
        if n > self.max_n {
            return Err(ApiError::resource(format!(
                "n = {n} exceeds the cap of {}",
                self.max_n
            )));
        }
        Ok(())
    }
}

/// Parses a JSON body, reporting the path of the first offending field.
pub fn parse_envelope(body: &[u8]) -> Result<RequestEnvelope, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        ApiError::malformed(field.as_deref(), e.into_inner().to_string())
    })
}

fn parse_params<T: serde::de::DeserializeOwned>(value: &Value) -> Result<T, ApiError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." {
            "params".to_string()
        } else {
            format!("params.{path}")
        };
        ApiError::malformed(Some(&field), e.into_inner().to_string())
    })
}

impl RequestEnvelope {
    pub fn comparison_params(&self) -> Result<ComparisonParams, ApiError> {
        let Some(params) = &self.params else {
            return Err(ApiError::malformed(
                Some("params"),
                "missing model parameters",
            ));
        };
        let parsed: ComparisonParams = match self.mode.unwrap_or(Mode::Independent) {
            Mode::Independent => parse_params::<IndependentParams>(params)?.into(),
            Mode::Correlated => parse_params::<CorrelatedParams>(params)?.into(),
        };
        parsed.validate()?;
        Ok(parsed)
    }

    /// Every requested `m`: the list option, else the plan's `m`.
    fn ms(&self) -> Vec<u32> {
        match (&self.options.m_list, self.plan.m) {
            (Some(list), _) => list.clone(),
            (None, Some(m)) => vec![m],
            (None, None) => Vec::new(),
        }
    }

    fn single_m(&self) -> Result<u32, ApiError> {
        let ms = self.ms();
        match ms.as_slice() {
            [] => Ok(1),
            [m] => Ok(*m),
            _ => Err(ApiError::validation(
                "options.m_list",
                "this endpoint takes a single labels-per-point value",
            )),
        }
    }

    pub fn budget_plan(&self) -> Result<BudgetPlan, ApiError> {
        let m = self.single_m()?;
        if m == 0 {
            return Err(ApiError::validation(
                "plan.m",
                "need at least one label per point",
            ));
        }
        match (self.plan.k, self.plan.n) {
            (Some(k), n) => {
                let plan = BudgetPlan::new(k, m)?;
                if n.is_some_and(|n| n != plan.n) {
                    return Err(ApiError::validation(
                        "plan.n",
                        format!("n disagrees with floor(k / m) = {}", plan.n),
                    ));
                }
                Ok(plan)
            }
            (None, Some(0)) => Err(ApiError::validation(
                "plan.n",
                "need at least one data point",
            )),
            (None, Some(n)) => Ok(BudgetPlan {
                k: n.saturating_mul(u64::from(m)),
                m,
                n,
            }),
            (None, None) => Err(ApiError::validation(
                "plan.k",
                "need a label budget k or a sample size n",
            )),
        }
    }

    fn delta(&self) -> f64 {
        self.options.delta.unwrap_or(DEFAULT_DELTA)
    }

    fn figure_request(&self) -> Result<FigureRequest, ApiError> {
        let Some(figure) = self.options.figure else {
            return Err(ApiError::validation("options.figure", "missing figure id"));
        };
        let mut req = FigureRequest::defaults(figure);
        if let Some(params) = &self.params {
            if self.mode == Some(Mode::Correlated) {
                return Err(ApiError::validation(
                    "mode",
                    "figure tables use the independent model",
                ));
            }
            let p: IndependentParams = parse_params(params)?;
            req.p = p.p;
            req.epsilon = p.epsilon;
            req.q = p.q;
        }
        if let Some(k) = self.plan.k {
            req.budget = k;
        }
        if let Some(ms) = &self.options.m_list {
            req.m_values = ms.clone();
        }
        let o = &self.options;
        req.delta = o.delta.unwrap_or(req.delta);
        req.start = o.start.unwrap_or(req.start);
        req.stop = o.stop.unwrap_or(req.stop);
        req.step = o.step.unwrap_or(req.step);
        Ok(req)
    }
}

/// Runs one endpoint and wraps the result with the version and input echo.
pub fn handle(
    endpoint: Endpoint,
    env: &RequestEnvelope,
    limits: &Limits,
) -> Result<Value, ApiError> {
    let result = match endpoint {
        Endpoint::Dist => dist(env)?,
        Endpoint::Exact => exact(env, limits)?,
        Endpoint::Compare => compare(env, limits)?,
        Endpoint::Bounds => bounds(env, limits)?,
        Endpoint::Capacity => capacity_report(env)?,
        Endpoint::SampleSize => sample_size(env)?,
        Endpoint::FigData => figdata(env, limits)?,
        Endpoint::Mc => mc(env, limits)?,
    };
    Ok(json!({
        "version": labelbudget::VERSION,
        "endpoint": endpoint.name(),
        "input": env,
        "result": result,
    }))
}

/// Error body with the same outer shape as a success.
pub fn error_body(endpoint: Option<Endpoint>, err: &ApiError) -> Value {
    json!({
        "version": labelbudget::VERSION,
        "endpoint": endpoint.map(Endpoint::name),
        "error": err,
    })
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, ApiError> {
    serde_json::to_value(v).map_err(|e| ApiError::new(ErrorKind::Internal, None, e.to_string()))
}

fn dist(env: &RequestEnvelope) -> Result<Value, ApiError> {
    let params = env.comparison_params()?;
    let d = params.gap_dist()?;
    let mut aggregates = Vec::new();
    for m in env.ms().into_iter().filter(|m| *m != 1) {
        let agg = params.aggregate(m)?;
        let ad = agg.gap_dist()?;
        aggregates.push(json!({
            "m": m,
            "params": agg,
            "dist": ad,
            "expectation": ad.expectation(),
        }));
    }
    Ok(json!({
        "dist": d,
        "expectation": d.expectation(),
        "assumption1_satisfied": params.assumption1_satisfied(),
        "aggregates": aggregates,
    }))
}

fn exact(env: &RequestEnvelope, limits: &Limits) -> Result<Value, ApiError> {
    let params = env.comparison_params()?;
    let plan = env.budget_plan()?;
    limits.check_n(plan.n)?;
    let d = params.aggregate(plan.m)?.gap_dist()?;
    let sum = sum_distribution(&d, plan.n)?;
    let mut out = json!({
        "plan": plan,
        "p_success": sum.prob_positive(),
        "p_tie": sum.prob_at(0),
        "p_failure": sum.prob_nonpositive(),
        "mean": sum.mean(),
        "drift": sum.drift,
    });
    if env.options.distribution == Some(true) {
        out["distribution"] = to_value(&sum.probs)?;
    }
    Ok(out)
}

fn compare(env: &RequestEnvelope, limits: &Limits) -> Result<Value, ApiError> {
    let params = env.comparison_params()?;
    let Some(k) = env.plan.k else {
        return Err(ApiError::validation("plan.k", "need a label budget"));
    };
    limits.check_n(k)?;
    let mut ms = env.ms();
    if ms.is_empty() {
        ms.push(DEFAULT_COMPARE_M);
    }
    let reports = compare_strategies(&params, k, &ms)?;
    Ok(json!({ "reports": reports }))
}

fn bounds(env: &RequestEnvelope, limits: &Limits) -> Result<Value, ApiError> {
    let params = env.comparison_params()?;
    let plan = env.budget_plan()?;
    // the bounds are closed form; only the exact column is capped
    let report = rate_report(&params, &plan, plan.n <= limits.max_n)?;
    let mut out = to_value(&report)?;
    out["assumption1_satisfied"] = json!(params.assumption1_satisfied());
    if plan.m > 1 {
        out["rate_gap"] = json!(rate_gap(&params, plan.m)?);
    }
    Ok(out)
}

fn capacity_report(env: &RequestEnvelope) -> Result<Value, ApiError> {
    let params = env.comparison_params()?;
    let plan = env.budget_plan()?;
    let d = params.aggregate(plan.m)?.gap_dist()?;
    let report = capacity(&d, plan.n, env.delta())?;
    let mut out = to_value(&report)?;
    out["plan"] = to_value(&plan)?;
    Ok(out)
}

fn sample_size(env: &RequestEnvelope) -> Result<Value, ApiError> {
    let params = env.comparison_params()?;
    let m = env.single_m()?;
    let d = params.aggregate(m)?.gap_dist()?;
    let delta = env.delta();
    let comparisons = env.options.comparisons.unwrap_or(1);
    let bound = env.options.bound.unwrap_or(BoundKind::Cramer);
    let n = min_sample_size(&d, delta, comparisons, bound)?;
    let other = match bound {
        BoundKind::Cramer => BoundKind::Hoeffding,
        BoundKind::Hoeffding => BoundKind::Cramer,
    };
    let n_other = min_sample_size(&d, delta, comparisons, other).ok();
    Ok(json!({
        "bound": bound,
        "n": n,
        "labels": n.saturating_mul(u64::from(m)),
        "m": m,
        "delta": delta,
        "comparisons": comparisons,
        "other_bound": other,
        "n_other_bound": n_other,
    }))
}

fn figdata(env: &RequestEnvelope, limits: &Limits) -> Result<Value, ApiError> {
    let req = env.figure_request()?;
    let cells = req.cost()?;
    if cells > limits.max_grid {
        return Err(ApiError::resource(format!(
            "figure has {cells} cells, above the cap of {}",
            limits.max_grid
        )));
    }
    let largest_n = match req.figure {
        FigureId::Fig2a => req.budget,
        FigureId::Fig2b | FigureId::Fig3a => req.stop.max(0.0) as u64,
        FigureId::Fig1 | FigureId::Fig3b => 0,
    };
    limits.check_n(largest_n)?;
    let table = figure_data(&req)?;
    Ok(json!({ "request": req, "table": table }))
}

fn mc(env: &RequestEnvelope, limits: &Limits) -> Result<Value, ApiError> {
    let params = env.comparison_params()?;
    let plan = env.budget_plan()?;
    limits.check_n(plan.n)?;
    let d = params.aggregate(plan.m)?.gap_dist()?;
    let trials = env.options.mc_trials.unwrap_or(DEFAULT_MC_TRIALS);
    let seed = env.options.seed.unwrap_or(0);
    let est = monte_carlo_success(&d, plan.n, trials, seed)?;
    let exact = sum_distribution(&d, plan.n)?.prob_positive();
    Ok(json!({
        "plan": plan,
        "monte_carlo": est,
        "exact": exact,
        "within_4se": est.agrees_with(exact, 4.0),
    }))
}
