//! Command-line front end. Computational subcommands build a
//! [`RequestEnvelope`] from flags and go through [`api::handle`].

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use labelbudget::bounds::BoundKind;
use labelbudget::figures::FigureId;
use labelbudget::sweep::{run_sweep, GridEndpoints, SweepConfig};

use crate::api::{self, ApiError, Endpoint, Limits, Mode, Options, PlanFields, RequestEnvelope};
use crate::service;

pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "labelbudget",
    version,
    about = "Single labels vs majority votes for comparing two classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Law of the gap indicator, optionally after m-label aggregation.
    Dist(Common),
    /// Exact success probability for one budget plan.
    Exact(Common),
    /// Single labels against majority votes at a fixed budget.
    Compare(Common),
    /// Hoeffding and Cramér failure bounds next to the exact value.
    Bounds(Common),
    /// How many comparisons a test set supports.
    Capacity(Common),
    /// Smallest test set for a number of comparisons.
    Samplesize(Common),
    /// Monte-Carlo estimate next to the exact success probability.
    Mc(Common),
    /// Table behind one of the standard plots.
    Figdata(FigArgs),
    /// Grid sweep over the correlated model.
    Sweep(SweepArgs),
    /// JSON service and static UI.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Accuracy of the worse classifier.
    #[arg(long)]
    pub p: Option<f64>,
    /// Accuracy margin of the better classifier.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Label accuracy.
    #[arg(long)]
    pub q: Option<f64>,
    /// Accuracy of the worse classifier (correlated model).
    #[arg(long)]
    pub pw: Option<f64>,
    /// Accuracy of the better classifier where the worse one is wrong.
    #[arg(long)]
    pub pb0: Option<f64>,
    /// Accuracy of the better classifier where the worse one is right.
    #[arg(long)]
    pub pb1: Option<f64>,
    /// Label accuracy where only the better classifier is right.
    #[arg(long)]
    pub qb: Option<f64>,
    /// Label accuracy where only the worse classifier is right.
    #[arg(long)]
    pub qw: Option<f64>,
}

impl ParamArgs {
    fn correlated(&self) -> bool {
        [self.pw, self.pb0, self.pb1, self.qb, self.qw]
            .iter()
            .any(Option::is_some)
    }

    fn independent(&self) -> bool {
        [self.p, self.eps, self.q].iter().any(Option::is_some)
    }

    fn envelope_part(&self) -> Result<(Option<Mode>, Option<Value>), ApiError> {
        fn put(obj: &mut serde_json::Map<String, Value>, key: &str, v: Option<f64>) {
            if let Some(v) = v {
                obj.insert(key.to_string(), json!(v));
            }
        }
        let mut obj = serde_json::Map::new();
        match (self.independent(), self.correlated()) {
            (true, true) => Err(ApiError::validation(
                "params",
                "give either --p/--eps/--q or --pw/--pb0/--pb1/--qb/--qw, not both",
            )),
            (false, false) => Ok((None, None)),
            (true, false) => {
                put(&mut obj, "p", self.p);
                put(&mut obj, "epsilon", self.eps);
                put(&mut obj, "q", self.q);
                Ok((Some(Mode::Independent), Some(Value::Object(obj))))
            }
            (false, true) => {
                put(&mut obj, "p_w", self.pw);
                put(&mut obj, "p_b0", self.pb0);
                put(&mut obj, "p_b1", self.pb1);
                put(&mut obj, "q_b", self.qb);
                put(&mut obj, "q_w", self.qw);
                Ok((Some(Mode::Correlated), Some(Value::Object(obj))))
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Label budget k.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Labels per data point; repeat to compare several.
    #[arg(long = "m")]
    pub m: Vec<u32>,
    /// Number of data points.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub comparisons: Option<u64>,
    #[arg(long, value_parser = parse_bound)]
    pub bound: Option<BoundKind>,
    /// Monte-Carlo trials.
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the full law of the sum (exact).
    #[arg(long)]
    pub distribution: bool,
    /// Read the request envelope from a JSON file (`-` for stdin) instead of flags.
    #[arg(long, conflicts_with_all = ["p", "eps", "q", "pw", "pb0", "pb1", "qb", "qw"])]
    pub request: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

fn parse_bound(s: &str) -> Result<BoundKind, String> {
    s.parse().map_err(|e: labelbudget::Error| e.to_string())
}

fn parse_figure(s: &str) -> Result<FigureId, String> {
    s.parse().map_err(|e: labelbudget::Error| e.to_string())
}

impl Common {
    fn envelope(&self) -> Result<RequestEnvelope, ApiError> {
        if let Some(path) = &self.request {
            let bytes = if path.as_os_str() == "-" {
                let mut buf = Vec::new();
                std::io::Read::read_to_end(&mut std::io::stdin(), &mut buf)
                    .map_err(|e| ApiError::malformed(None, e.to_string()))?;
                buf
            } else {
                std::fs::read(path)
                    .map_err(|e| ApiError::malformed(None, format!("{}: {e}", path.display())))?
            };
            return api::parse_envelope(&bytes);
        }
        let (mode, params) = self.params.envelope_part()?;
        let (m, m_list) = match self.m.as_slice() {
            [] => (None, None),
            [m] => (Some(*m), None),
            many => (None, Some(many.to_vec())),
        };
        Ok(RequestEnvelope {
            mode,
            params,
            plan: PlanFields {
                k: self.budget,
                m,
                n: self.n,
            },
            options: Options {
                delta: self.delta,
                m_list,
                mc_trials: self.trials,
                seed: self.seed,
                comparisons: self.comparisons,
                bound: self.bound,
                distribution: self.distribution.then_some(true),
                ..Options::default()
            },
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct FigArgs {
    /// fig1, fig2a, fig2b, fig3a or fig3b.
    #[arg(value_parser = parse_figure)]
    pub figure: FigureId,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long = "m")]
    pub m: Vec<u32>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub start: Option<f64>,
    #[arg(long)]
    pub stop: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

impl FigArgs {
    fn envelope(&self) -> Result<RequestEnvelope, ApiError> {
        let params = match (self.p, self.eps, self.q) {
            (None, None, None) => None,
            (Some(p), Some(e), Some(q)) => Some(json!({ "p": p, "epsilon": e, "q": q })),
            _ => {
                return Err(ApiError::validation(
                    "params",
                    "give all of --p, --eps and --q or none",
                ))
            }
        };
        Ok(RequestEnvelope {
            mode: params.as_ref().map(|_| Mode::Independent),
            params,
            plan: PlanFields {
                k: self.budget,
                ..PlanFields::default()
            },
            options: Options {
                figure: Some(self.figure),
                m_list: (!self.m.is_empty()).then(|| self.m.clone()),
                delta: self.delta,
                start: self.start,
                stop: self.stop,
                step: self.step,
                ..Options::default()
            },
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Records CSV; the summary and journal are written next to it.
    #[arg(long, default_value = "sweep.csv")]
    pub output: PathBuf,
    /// Grid step over [0.5, 1].
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Use exactly this many grid points from 0.5 instead of running up to 1.
    #[arg(long)]
    pub points: Option<usize>,
    /// Sample sizes; repeat for several.
    #[arg(long = "n")]
    pub n: Vec<u64>,
    /// Odd labels-per-point values; repeat for several.
    #[arg(long = "m")]
    pub m: Vec<u32>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Monte-Carlo trials per probability (0 disables).
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Cap on evaluated grid points.
    #[arg(long)]
    pub max_points: Option<u64>,
    /// Lift the grid-size cap.
    #[arg(long)]
    pub full_scale: bool,
    /// Start from the 50-point, step-0.01 grid with n up to 1001 (implies --full-scale).
    #[arg(long)]
    pub large_scale: bool,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

impl SweepArgs {
    pub fn config(&self) -> SweepConfig {
        let mut cfg = if self.large_scale {
            SweepConfig::large_scale()
        } else {
            SweepConfig::default()
        };
        cfg.output_path = self.output.clone();
        if let Some(r) = self.resolution {
            cfg.grid_resolution = r;
        }
        if let Some(points) = self.points {
            cfg.endpoints = GridEndpoints::Count(points);
        }
        if !self.n.is_empty() {
            cfg.n_values = self.n.clone();
        }
        if !self.m.is_empty() {
            cfg.m_values = self.m.clone();
        }
        if let Some(t) = self.tolerance {
            cfg.tolerance = t;
        }
        if let Some(t) = self.trials {
            cfg.mc_trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = self.max_points {
            cfg.max_grid_points = c;
        }
        cfg.threads = self.threads;
        cfg.full_scale |= self.full_scale;
        cfg
    }
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Directory with the built UI bundle, served at `/`.
    #[arg(long, default_value = "ui/dist")]
    pub static_dir: PathBuf,
    /// Override the per-request `n` cap.
    #[arg(long)]
    pub max_n: Option<u64>,
    /// Concurrent heavy computations.
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Parses `argv`, runs the command, and returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<(), ApiError> {
    let (endpoint, common) = match command {
        Command::Dist(c) => (Endpoint::Dist, c),
        Command::Exact(c) => (Endpoint::Exact, c),
        Command::Compare(c) => (Endpoint::Compare, c),
        Command::Bounds(c) => (Endpoint::Bounds, c),
        Command::Capacity(c) => (Endpoint::Capacity, c),
        Command::Samplesize(c) => (Endpoint::SampleSize, c),
        Command::Mc(c) => (Endpoint::Mc, c),
        Command::Figdata(f) => {
            let body = api::handle(Endpoint::FigData, &f.envelope()?, &Limits::unbounded())?;
            return emit(out, &body, f.format);
        }
        Command::Sweep(s) => {
            let summary = run_sweep(&s.config())?;
            let body = json!({
                "version": labelbudget::VERSION,
                "endpoint": "sweep",
                "input": s.config(),
                "result": summary,
            });
            return emit(out, &body, s.format);
        }
        Command::Serve(s) => return serve(s),
    };
    let body = api::handle(endpoint, &common.envelope()?, &Limits::unbounded())?;
    emit(out, &body, common.format)
}

fn serve(args: ServeArgs) -> Result<(), ApiError> {
    let mut limits = Limits::service();
    if let Some(n) = args.max_n {
        limits.max_n = n;
    }
    let state = service::AppState::new(limits, args.workers, Some(args.static_dir));
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| ApiError::resource(format!("cannot start runtime: {e}")))?;
    runtime
        .block_on(service::serve(args.bind, state))
        .map_err(|e| ApiError::resource(format!("cannot serve on {}: {e}", args.bind)))
}

fn emit(out: &mut dyn Write, body: &Value, format: Format) -> Result<(), ApiError> {
    let io = |e: std::io::Error| ApiError::resource(format!("cannot write output: {e}"));
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, body)
                .map_err(|e| ApiError::resource(e.to_string()))?;
            writeln!(out).map_err(io)
        }
        Format::Csv => write_csv(out, &body["result"]),
    }
}

/// Tables print as themselves, report lists as one row per report, and
/// anything else as a single row of dotted keys.
fn write_csv(out: &mut dyn Write, result: &Value) -> Result<(), ApiError> {
    let csv_err = |e: csv::Error| ApiError::resource(format!("cannot write output: {e}"));
    let mut w = csv::Writer::from_writer(out);
    if let Some(table) = result.get("table") {
        let columns: Vec<String> = serde_json::from_value(table["columns"].clone())
            .map_err(|e| ApiError::resource(e.to_string()))?;
        w.write_record(&columns).map_err(csv_err)?;
        for row in table["rows"].as_array().into_iter().flatten() {
            let cells: Vec<String> = row.as_array().into_iter().flatten().map(scalar).collect();
            w.write_record(&cells).map_err(csv_err)?;
        }
    } else {
        let rows: Vec<&Value> = match result.get("reports").and_then(Value::as_array) {
            Some(reports) => reports.iter().collect(),
            None => vec![result],
        };
        let mut header_written = false;
        for row in rows {
            let mut cells = Vec::new();
            flatten("", row, &mut cells);
            if !header_written {
                w.write_record(cells.iter().map(|(k, _)| k))
                    .map_err(csv_err)?;
                header_written = true;
            }
            w.write_record(cells.iter().map(|(_, v)| v))
                .map_err(csv_err)?;
        }
    }
    w.flush()
        .map_err(|e| ApiError::resource(format!("cannot write output: {e}")))
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(&key(k), child, out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), child, out);
            }
        }
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_uses_dotted_keys() {
        let mut cells = Vec::new();
        flatten(
            "",
            &json!({"a": {"b": 1, "c": [true, null]}, "d": "x"}),
            &mut cells,
        );
        let keys: Vec<_> = cells.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["a.b", "a.c.0", "a.c.1", "d"]);
        assert_eq!(cells[2].1, "");
    }

    #[test]
    fn flags_build_the_same_envelope_as_json() {
        let cli = Cli::try_parse_from([
            "labelbudget",
            "compare",
            "--p",
            "0.8",
            "--eps",
            "0.01",
            "--q",
            "0.8",
            "--budget",
            "1500",
            "--m",
            "3",
        ])
        .unwrap();
        let Command::Compare(c) = cli.command else {
            panic!()
        };
        let from_flags = c.envelope().unwrap();
        let from_json = api::parse_envelope(
            br#"{"mode":"independent","params":{"p":0.8,"epsilon":0.01,"q":0.8},"plan":{"k":1500,"m":3}}"#,
        )
        .unwrap();
        assert_eq!(from_flags, from_json);
    }

    #[test]
    fn mixed_parameter_families_are_rejected() {
        let cli =
            Cli::try_parse_from(["labelbudget", "dist", "--p", "0.8", "--pw", "0.2"]).unwrap();
        let Command::Dist(c) = cli.command else {
            panic!()
        };
        assert_eq!(c.envelope().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn sweep_flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "labelbudget",
            "sweep",
            "--resolution",
            "0.25",
            "--n",
            "1",
            "--n",
            "2",
            "--m",
            "3",
            "--points",
            "3",
        ])
        .unwrap();
        let Command::Sweep(s) = cli.command else {
            panic!()
        };
        let cfg = s.config();
        assert_eq!(cfg.n_values, vec![1, 2]);
        assert_eq!(cfg.m_values, vec![3]);
        assert_eq!(cfg.endpoints, GridEndpoints::Count(3));
        assert!(!cfg.full_scale);
    }
}
