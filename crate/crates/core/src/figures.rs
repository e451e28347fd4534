//! Tables behind the standard plots: benchmark capacity against test-set
//! size, success probability against label accuracy or budget, and the
//! convergence of normalized log failure rates to their Cramér limits.

use serde::{Deserialize, Serialize};

use crate::bounds::{capacity, cramer_rate};
use crate::error::{Error, Result};
use crate::exact::{plan_success_probability, sum_distribution};
use crate::gap::{BudgetPlan, ComparisonParams, IndependentParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    /// Testable comparisons vs `n` under both bounds.
    Fig1,
    /// Success probability vs `q` at a fixed budget.
    Fig2a,
    /// Success probability vs budget at a fixed `q`.
    Fig2b,
    /// Normalized exact log failure vs budget, with Cramér asymptotes.
    Fig3a,
    /// Normalized Hoeffding and Cramér log bounds vs `q`.
    Fig3b,
}

impl std::str::FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(FigureId::Fig1),
            "fig2a" => Ok(FigureId::Fig2a),
            "fig2b" => Ok(FigureId::Fig2b),
            "fig3a" => Ok(FigureId::Fig3a),
            "fig3b" => Ok(FigureId::Fig3b),
            other => Err(Error::validation(
                "figure",
                format!("unknown figure id `{other}`"),
            )),
        }
    }
}

/// Everything a figure table depends on. Fields that a figure does not use
/// are ignored; the x axis is `start..=stop` in increments of `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRequest {
    pub figure: FigureId,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub m_values: Vec<u32>,
    pub p: f64,
    pub epsilon: f64,
    pub q: f64,
    pub budget: u64,
    pub delta: f64,
}

impl FigureRequest {
    /// The parameter sets of the published plots.
    pub fn defaults(figure: FigureId) -> Self {
        let base = FigureRequest {
            figure,
            start: 0.0,
            stop: 0.0,
            step: 1.0,
            m_values: vec![1, 3],
            p: 0.8,
            epsilon: 0.01,
            q: 0.8,
            budget: 1500,
            delta: 0.05,
        };
        match figure {
            FigureId::Fig1 => FigureRequest {
                start: 1.0,
                stop: 1500.0,
                step: 1.0,
                m_values: vec![1],
                p: 0.75,
                epsilon: 0.1,
                q: 0.75,
                ..base
            },
            FigureId::Fig2a => FigureRequest {
                start: 0.51,
                stop: 1.0,
                step: 0.01,
                m_values: vec![1, 3, 5],
                ..base
            },
            FigureId::Fig2b => FigureRequest {
                start: 15.0,
                stop: 1500.0,
                step: 15.0,
                m_values: vec![1, 3, 5],
                ..base
            },
            FigureId::Fig3a => FigureRequest {
                start: 30.0,
                stop: 3000.0,
                step: 30.0,
                p: 0.7,
                epsilon: 0.1,
                q: 0.75,
                ..base
            },
            FigureId::Fig3b => FigureRequest {
                start: 0.5,
                stop: 1.0,
                step: 0.01,
                p: 0.7,
                epsilon: 0.1,
                budget: 2000,
                ..base
            },
        }
    }

    /// Points on the x axis, snapped to 1e-9 to absorb step round-off.
    pub fn axis(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::validation("step", "step must be positive"));
        }
        if !(self.stop >= self.start) {
            return Err(Error::validation("stop", "stop must not precede start"));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as u64 + 1;
        Ok((0..count)
            .map(|i| {
                let v = self.start + i as f64 * self.step;
                (v * 1e9).round() / 1e9
            })
            .collect())
    }

    /// Number of table cells the request will compute.
    pub fn cost(&self) -> Result<usize> {
        Ok(self.axis()?.len() * self.m_values.len().max(1))
    }

    fn params(&self, q: f64) -> Result<ComparisonParams> {
        Ok(IndependentParams::new(self.p, self.epsilon, q)?.into())
    }

    fn check_ms(&self) -> Result<()> {
        if self.m_values.is_empty() {
            return Err(Error::validation("m_values", "need at least one m"));
        }
        if let Some(m) = self.m_values.iter().find(|m| **m % 2 == 0) {
            return Err(Error::domain(format!(
                "labels per point must be a positive odd integer, got {m}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

fn as_count(field: &'static str, v: f64) -> Result<u64> {
    if v < 1.0 || v.fract() != 0.0 {
        return Err(Error::validation(
            field,
            format!("{v} is not a positive integer"),
        ));
    }
    Ok(v as u64)
}

pub fn figure_data(req: &FigureRequest) -> Result<Table> {
    let axis = req.axis()?;
    match req.figure {
        FigureId::Fig1 => {
            let dist = req.params(req.q)?.gap_dist()?;
            let columns = [
                "n",
                "hoeffding_comparisons",
                "hoeffding_models",
                "cramer_comparisons",
                "cramer_models",
            ];
            let rows = axis
                .iter()
                .map(|&n| {
                    let c = capacity(&dist, as_count("n", n)?, req.delta)?;
                    Ok(vec![
                        n,
                        c.max_comparisons_hoeffding as f64,
                        c.models_hoeffding as f64,
                        c.max_comparisons_cramer as f64,
                        c.models_cramer as f64,
                    ])
                })
                .collect::<Result<_>>()?;
            Ok(Table {
                columns: columns.iter().map(|s| s.to_string()).collect(),
                rows,
            })
        }
        FigureId::Fig2a | FigureId::Fig2b => {
            req.check_ms()?;
            let mut columns = vec![if req.figure == FigureId::Fig2a {
                "q"
            } else {
                "k"
            }
            .to_string()];
            columns.extend(req.m_values.iter().map(|m| format!("p_success_m{m}")));
            let rows = axis
                .iter()
                .map(|&v| {
                    let (params, k) = if req.figure == FigureId::Fig2a {
                        (req.params(v)?, req.budget)
                    } else {
                        (req.params(req.q)?, as_count("k", v)?)
                    };
                    let mut row = vec![v];
                    for &m in &req.m_values {
                        // budgets too small for one m-label point have no test set
                        let p = match BudgetPlan::new(k, m) {
                            Ok(plan) => plan_success_probability(&params, &plan)?,
                            Err(_) => f64::NAN,
                        };
                        row.push(p);
                    }
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            Ok(Table { columns, rows })
        }
        FigureId::Fig3a => {
            req.check_ms()?;
            let params = req.params(req.q)?;
            let mut columns = vec!["k".to_string()];
            for m in &req.m_values {
                columns.push(format!("log_failure_per_label_m{m}"));
                columns.push(format!("cramer_per_label_m{m}"));
            }
            let rates = req
                .m_values
                .iter()
                .map(|&m| Ok(cramer_rate(&params.aggregate(m)?.gap_dist()?).rate / m as f64))
                .collect::<Result<Vec<_>>>()?;
            let rows = axis
                .iter()
                .map(|&v| {
                    let k = as_count("k", v)?;
                    let mut row = vec![v];
                    for (&m, &rate) in req.m_values.iter().zip(&rates) {
                        let value = match BudgetPlan::new(k, m) {
                            Ok(plan) => {
                                let dist = params.aggregate(m)?.gap_dist()?;
                                let fail = sum_distribution(&dist, plan.n)?.prob_nonpositive();
                                fail.ln() / (plan.n * u64::from(m)) as f64
                            }
                            Err(_) => f64::NAN,
                        };
                        row.push(value);
                        row.push(rate);
                    }
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            Ok(Table { columns, rows })
        }
        FigureId::Fig3b => {
            req.check_ms()?;
            let mut columns = vec!["q".to_string()];
            for m in &req.m_values {
                columns.push(format!("hoeffding_per_label_m{m}"));
                columns.push(format!("cramer_per_label_m{m}"));
            }
            let rows = axis
                .iter()
                .map(|&q| {
                    let mut row = vec![q];
                    for &m in &req.m_values {
                        // q = 0.5 is outside the model, but its limit is the
                        // no-signal law shared by every m
                        let params = req.params(q.max(0.5 + 1e-15))?;
                        let dist = params.aggregate(m)?.gap_dist()?;
                        let e = dist.expectation().max(0.0);
                        row.push(-e * e / 2.0 / m as f64);
                        row.push(cramer_rate(&dist).rate / m as f64);
                    }
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            Ok(Table { columns, rows })
        }
    }
}
