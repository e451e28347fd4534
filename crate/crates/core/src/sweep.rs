//! Grid sweep comparing `Pr(S_{mn} > 0)` under single labels with
//! `Pr(S_n > 0)` under `m`-label majority votes, over the correlated
//! parameterization `(q_b, q_w, p_w, p_b0, p_b1)`.
//!
//! Records are streamed to a CSV file in lexicographic order of the parameter
//! tuple (then `n`, then `m`). Work is split into fixed chunks of tuples; each
//! chunk is evaluated in parallel, written in order, and committed to an
//! append-only journal next to the CSV. Restarting a sweep with the same
//! configuration skips every committed chunk, and the finished files are
//! byte-identical to an uninterrupted run.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exact::{monte_carlo_stream, sum_distribution, within_band, SumDist};
use crate::gap::{CorrelatedParams, TernaryDist, RANGE_SLACK};

/// Both probabilities above this make a violation numerical noise.
pub const NOISE_LEVEL: f64 = 1.0 - 1e-9;

pub const DEFAULT_MAX_GRID_POINTS: u64 = 10_000_000;

/// Tuples per journal commit.
pub const DEFAULT_CHUNK_TUPLES: usize = 4096;

/// How the grid over `[0.5, 1]` is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridEndpoints {
    /// `0.5, 0.5 + r, ...` up to and including `1.0`.
    Inclusive,
    /// Exactly this many points starting at `0.5`, wherever they end.
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub n_values: Vec<u64>,
    pub m_values: Vec<u32>,
    pub grid_resolution: f64,
    pub endpoints: GridEndpoints,
    /// `diff < -tolerance` is a violation.
    pub tolerance: f64,
    /// Monte-Carlo trials per probability; zero disables sampling.
    pub mc_trials: u64,
    pub seed: u64,
    pub output_path: PathBuf,
    pub max_grid_points: u64,
    /// Lifts `max_grid_points`.
    pub full_scale: bool,
    pub threads: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let mut n_values: Vec<u64> = (1..=11).collect();
        n_values.extend([100, 101]);
        Self {
            n_values,
            m_values: vec![3, 11],
            grid_resolution: 0.05,
            endpoints: GridEndpoints::Inclusive,
            tolerance: 1e-12,
            mc_trials: 0,
            seed: 0,
            output_path: PathBuf::from("sweep.csv"),
            max_grid_points: DEFAULT_MAX_GRID_POINTS,
            full_scale: false,
            threads: None,
        }
    }
}

impl SweepConfig {
    /// 50 points at step 0.01 per axis and `n` up to 1001: billions of records.
    pub fn large_scale() -> Self {
        Self {
            n_values: vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 100, 101, 1000, 1001],
            grid_resolution: 0.01,
            endpoints: GridEndpoints::Count(50),
            full_scale: true,
            ..Self::default()
        }
    }

    fn normalized(&self) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.n_values.sort_unstable();
        cfg.n_values.dedup();
        cfg.m_values.sort_unstable();
        cfg.m_values.dedup();
        if cfg.n_values.is_empty() || cfg.n_values[0] == 0 {
            return Err(Error::validation("n_values", "need positive sample sizes"));
        }
        if cfg.m_values.is_empty() || cfg.m_values.iter().any(|m| m % 2 == 0) {
            return Err(Error::validation(
                "m_values",
                "need odd labels-per-point values",
            ));
        }
        if !(cfg.grid_resolution > 0.0) || !cfg.grid_resolution.is_finite() {
            return Err(Error::validation(
                "grid_resolution",
                "resolution must be positive",
            ));
        }
        if !(cfg.tolerance >= 0.0) {
            return Err(Error::validation(
                "tolerance",
                "tolerance must be nonnegative",
            ));
        }
        Ok(cfg)
    }

    /// Grid over `[0.5, 1]`, snapped to 1e-12.
    pub fn axis(&self) -> Result<Vec<f64>> {
        let r = self.grid_resolution;
        if !(r > 0.0) {
            return Err(Error::validation(
                "grid_resolution",
                "resolution must be positive",
            ));
        }
        let point = |i: usize| ((0.5 + i as f64 * r) * 1e12).round() / 1e12;
        let axis: Vec<f64> = match self.endpoints {
            GridEndpoints::Inclusive => (0..).map(point).take_while(|v| *v <= 1.0).collect(),
            GridEndpoints::Count(count) => (0..count).map(point).collect(),
        };
        if axis.is_empty() || axis.iter().any(|v| *v > 1.0) {
            return Err(Error::validation(
                "grid_resolution",
                "grid leaves [0.5, 1]; lower the point count or the resolution",
            ));
        }
        Ok(axis)
    }

    /// Label accuracies must beat chance, so 0.5 is dropped from the `q` axes.
    pub fn label_axis(&self) -> Result<Vec<f64>> {
        Ok(self.axis()?.into_iter().filter(|v| *v > 0.5).collect())
    }

    /// Hash of every field that affects the records.
    pub fn config_hash(&self) -> Result<String> {
        let cfg = self.normalized()?;
        let key = serde_json::json!({
            "n_values": cfg.n_values,
            "m_values": cfg.m_values,
            "grid_resolution": cfg.grid_resolution,
            "endpoints": cfg.endpoints,
            "tolerance": cfg.tolerance,
            "mc_trials": cfg.mc_trials,
            "seed": cfg.seed,
        });
        let digest = Sha256::digest(serde_json::to_vec(&key)?);
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn summary_path(&self) -> PathBuf {
        self.output_path.with_extension("summary.json")
    }

    pub fn journal_path(&self) -> PathBuf {
        self.output_path.with_extension("journal")
    }
}

/// The five-dimensional parameter grid in lexicographic order.
#[derive(Debug, Clone)]
pub struct Grid {
    labels: Vec<f64>,
    accuracies: Vec<f64>,
}

impl Grid {
    pub fn new(config: &SweepConfig) -> Result<Self> {
        Ok(Self {
            labels: config.label_axis()?,
            accuracies: config.axis()?,
        })
    }

    pub fn len(&self) -> u64 {
        let l = self.labels.len() as u64;
        let a = self.accuracies.len() as u64;
        l * l * a * a * a
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(q_b, q_w, p_w, p_b0, p_b1)` of tuple `index`.
    pub fn tuple(&self, index: u64) -> [f64; 5] {
        let a = self.accuracies.len() as u64;
        let l = self.labels.len() as u64;
        let p_b1 = index % a;
        let rest = index / a;
        let p_b0 = rest % a;
        let rest = rest / a;
        let p_w = rest % a;
        let rest = rest / a;
        let q_w = rest % l;
        let q_b = rest / l;
        [
            self.labels[q_b as usize],
            self.labels[q_w as usize],
            self.accuracies[p_w as usize],
            self.accuracies[p_b0 as usize],
            self.accuracies[p_b1 as usize],
        ]
    }

    /// Feasible parameters for tuple `index`, or `None` when the better
    /// classifier does not actually have lower risk.
    pub fn params(&self, index: u64) -> Option<CorrelatedParams> {
        let [q_b, q_w, p_w, p_b0, p_b1] = self.tuple(index);
        let params = CorrelatedParams {
            p_w,
            p_b0,
            p_b1,
            q_b,
            q_w,
        };
        (params.risk_margin() > RANGE_SLACK).then_some(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub params: CorrelatedParams,
    pub n: u64,
    pub m: u32,
    pub p_single: f64,
    pub p_agg: f64,
    pub diff: f64,
    pub assumption1: bool,
    pub violation: bool,
    pub mc_single: Option<(f64, f64)>,
    pub mc_agg: Option<(f64, f64)>,
}

impl SweepRecord {
    /// Violation where both probabilities are within 1e-9 of one.
    pub fn is_noise(&self) -> bool {
        self.violation && self.p_single > NOISE_LEVEL && self.p_agg > NOISE_LEVEL
    }

    pub fn is_substantive_violation(&self) -> bool {
        self.violation && !self.is_noise()
    }

    fn csv_fields(&self, with_mc: bool) -> Vec<String> {
        let f = |v: f64| format!("{v:?}");
        let p = &self.params;
        let mut out = vec![
            f(p.q_b),
            f(p.q_w),
            f(p.p_w),
            f(p.p_b0),
            f(p.p_b1),
            self.n.to_string(),
            self.m.to_string(),
            f(self.p_single),
            f(self.p_agg),
            f(self.diff),
            self.assumption1.to_string(),
            self.violation.to_string(),
        ];
        if with_mc {
            for (est, se) in [self.mc_single, self.mc_agg].into_iter().flatten() {
                out.push(f(est));
                out.push(f(se));
            }
        }
        out
    }
}

pub const CSV_COLUMNS: [&str; 12] = [
    "q_b",
    "q_w",
    "p_w",
    "p_b0",
    "p_b1",
    "n",
    "m",
    "p_single",
    "p_agg",
    "diff",
    "assumption1",
    "violation",
];

pub const MC_COLUMNS: [&str; 4] = ["mc_single", "mc_se_single", "mc_agg", "mc_se_agg"];

/// `Pr(S_c > 0)` for each cumulative count `c` in `counts` (ascending), built
/// by convolving the previous sum with the law of the increment.
fn success_chain(dist: &TernaryDist, counts: &[u64]) -> Result<Vec<f64>> {
    let mut pieces: HashMap<u64, SumDist> = HashMap::new();
    let mut current: Option<SumDist> = None;
    let mut previous = 0;
    let mut out = Vec::with_capacity(counts.len());
    for &count in counts {
        let step = count - previous;
        if let std::collections::hash_map::Entry::Vacant(e) = pieces.entry(step) {
            e.insert(sum_distribution(dist, step)?);
        }
        let piece = &pieces[&step];
        current = Some(match current {
            None => piece.clone(),
            Some(c) => c.convolve(piece)?,
        });
        out.push(current.as_ref().map_or(0.0, SumDist::prob_positive));
        previous = count;
    }
    Ok(out)
}

/// Everything besides the parameters that one tuple's evaluation needs.
#[derive(Debug, Clone)]
pub struct TupleJob<'a> {
    pub n_values: &'a [u64],
    pub m_values: &'a [u32],
    pub tolerance: f64,
    pub mc_trials: u64,
    pub seed: u64,
    /// First Monte-Carlo stream owned by this tuple.
    pub stream_base: u64,
}

/// Records for every `(n, m)` at one feasible parameter tuple, ordered by
/// `n` then `m`. `n_values` must be ascending.
pub fn evaluate_tuple(params: &CorrelatedParams, job: &TupleJob<'_>) -> Result<Vec<SweepRecord>> {
    let single = params.gap_dist()?;
    let assumption1 = params.assumption1_satisfied();
    let mut per_m = Vec::with_capacity(job.m_values.len());
    for &m in job.m_values {
        let agg = params.aggregate(m)?.gap_dist()?;
        let single_counts: Vec<u64> = job.n_values.iter().map(|n| n * u64::from(m)).collect();
        let p_single = success_chain(&single, &single_counts)?;
        let p_agg = success_chain(&agg, job.n_values)?;
        per_m.push((m, agg, p_single, p_agg));
    }
    let mut records = Vec::with_capacity(job.n_values.len() * job.m_values.len());
    for (i, &n) in job.n_values.iter().enumerate() {
        for (j, (m, agg, p_single, p_agg)) in per_m.iter().enumerate() {
            let (p_single, p_agg) = (p_single[i], p_agg[i]);
            let diff = p_single - p_agg;
            let (mc_single, mc_agg) = if job.mc_trials > 0 {
                let stream = job.stream_base + 2 * (i * job.m_values.len() + j) as u64;
                let single_n = n * u64::from(*m);
                (
                    Some(monte_carlo_stream(
                        &single,
                        single_n,
                        job.mc_trials,
                        job.seed,
                        stream,
                    )?),
                    Some(monte_carlo_stream(
                        agg,
                        n,
                        job.mc_trials,
                        job.seed,
                        stream + 1,
                    )?),
                )
            } else {
                (None, None)
            };
            records.push(SweepRecord {
                params: *params,
                n,
                m: *m,
                p_single,
                p_agg,
                diff,
                assumption1,
                violation: diff < -job.tolerance,
                mc_single,
                mc_agg,
            });
        }
    }
    Ok(records)
}

/// Counters that can be merged chunk by chunk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepCounts {
    pub records: u64,
    pub tuples: u64,
    pub skipped_infeasible: u64,
    pub violations_a1: u64,
    pub violations_all: u64,
    pub noise_violations: u64,
    pub records_qw_gt_qb: u64,
    pub single_wins_qw_gt_qb: u64,
    /// Smallest `diff` among Assumption-1 records.
    pub worst_diff_a1: Option<f64>,
    pub mc_checked: u64,
    pub mc_within_4se: u64,
}

impl SweepCounts {
    fn add_record(&mut self, r: &SweepRecord, trials: u64) {
        self.records += 1;
        if r.is_substantive_violation() {
            self.violations_all += 1;
            if r.assumption1 {
                self.violations_a1 += 1;
            }
        } else if r.violation {
            self.noise_violations += 1;
        }
        if r.assumption1 {
            self.worst_diff_a1 = Some(self.worst_diff_a1.map_or(r.diff, |w| w.min(r.diff)));
        }
        if r.params.q_w > r.params.q_b {
            self.records_qw_gt_qb += 1;
            if !r.violation {
                self.single_wins_qw_gt_qb += 1;
            }
        }
        for (mc, exact) in [(r.mc_single, r.p_single), (r.mc_agg, r.p_agg)] {
            if let Some((est, se)) = mc {
                self.mc_checked += 1;
                if within_band(est, se, trials, exact, 4.0) {
                    self.mc_within_4se += 1;
                }
            }
        }
    }

    fn merge(&mut self, other: &SweepCounts) {
        self.records += other.records;
        self.tuples += other.tuples;
        self.skipped_infeasible += other.skipped_infeasible;
        self.violations_a1 += other.violations_a1;
        self.violations_all += other.violations_all;
        self.noise_violations += other.noise_violations;
        self.records_qw_gt_qb += other.records_qw_gt_qb;
        self.single_wins_qw_gt_qb += other.single_wins_qw_gt_qb;
        self.worst_diff_a1 = match (self.worst_diff_a1, other.worst_diff_a1) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.mc_checked += other.mc_checked;
        self.mc_within_4se += other.mc_within_4se;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    /// Records written.
    pub total: u64,
    pub skipped_infeasible: u64,
    /// Substantive violations among records satisfying `q_b >= q_w`.
    pub violations_a1: u64,
    /// Substantive violations among all records.
    pub violations_all: u64,
    /// Share of `q_w > q_b` records where the single label is not beaten.
    pub frac_single_wins_qw_gt_qb: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    pub tuples_evaluated: u64,
    pub noise_violations: u64,
    pub records_qw_gt_qb: u64,
    pub worst_diff_a1: Option<f64>,
    pub mc_checked: u64,
    pub mc_within_4se: u64,
}

impl SweepSummary {
    fn from_counts(c: &SweepCounts, seed: u64, config_hash: String) -> Self {
        Self {
            total: c.records,
            skipped_infeasible: c.skipped_infeasible,
            violations_a1: c.violations_a1,
            violations_all: c.violations_all,
            frac_single_wins_qw_gt_qb: (c.records_qw_gt_qb > 0)
                .then(|| c.single_wins_qw_gt_qb as f64 / c.records_qw_gt_qb as f64),
            seed,
            config_hash,
            tuples_evaluated: c.tuples,
            noise_violations: c.noise_violations,
            records_qw_gt_qb: c.records_qw_gt_qb,
            worst_diff_a1: c.worst_diff_a1,
            mc_checked: c.mc_checked,
            mc_within_4se: c.mc_within_4se,
        }
    }
}

/// Knobs for tests and for callers that want to interrupt a sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepControl {
    pub chunk_tuples: usize,
    /// Return after committing this many chunks in this call.
    pub stop_after_chunks: Option<usize>,
}

impl Default for SweepControl {
    fn default() -> Self {
        Self {
            chunk_tuples: DEFAULT_CHUNK_TUPLES,
            stop_after_chunks: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub summary: SweepSummary,
    pub complete: bool,
    pub resumed_chunks: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct JournalHeader {
    config_hash: String,
    chunk_tuples: usize,
    csv_bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct JournalEntry {
    chunk: u64,
    csv_bytes: u64,
    counts: SweepCounts,
}

struct ResumeState {
    next_chunk: u64,
    csv_bytes: u64,
    journal_bytes: u64,
    counts: SweepCounts,
}

fn read_journal(path: &Path, hash: &str, chunk_tuples: usize) -> Option<ResumeState> {
    let file = File::open(path).ok()?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut offset = 0u64;
    let read = reader.read_line(&mut line).ok()?;
    if !line.ends_with('\n') {
        return None;
    }
    let header: JournalHeader = serde_json::from_str(line.trim_end()).ok()?;
    if header.config_hash != hash || header.chunk_tuples != chunk_tuples {
        return None;
    }
    offset += read as u64;
    let mut state = ResumeState {
        next_chunk: 0,
        csv_bytes: header.csv_bytes,
        journal_bytes: offset,
        counts: SweepCounts::default(),
    };
    loop {
        line.clear();
        let read = match reader.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(r) => r,
        };
        // a torn final line was never committed
        if !line.ends_with('\n') {
            break;
        }
        let Ok(entry) = serde_json::from_str::<JournalEntry>(line.trim_end()) else {
            break;
        };
        if entry.chunk != state.next_chunk {
            break;
        }
        offset += read as u64;
        state.next_chunk += 1;
        state.csv_bytes = entry.csv_bytes;
        state.journal_bytes = offset;
        state.counts.merge(&entry.counts);
    }
    Some(state)
}

fn header_row(with_mc: bool) -> Vec<&'static str> {
    let mut header = CSV_COLUMNS.to_vec();
    if with_mc {
        header.extend(MC_COLUMNS);
    }
    header
}

/// Runs (or resumes) the sweep described by `config`.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepSummary> {
    Ok(run_sweep_with(config, SweepControl::default())?.summary)
}

pub fn run_sweep_with(config: &SweepConfig, control: SweepControl) -> Result<SweepOutcome> {
    let cfg = config.normalized()?;
    let grid = Grid::new(&cfg)?;
    let per_tuple = (cfg.n_values.len() * cfg.m_values.len()) as u64;
    let points = grid.len().saturating_mul(per_tuple);
    if points > cfg.max_grid_points && !cfg.full_scale {
        return Err(Error::resource(format!(
            "grid has {points} points, above the cap of {}; use a coarser resolution or enable full_scale",
            cfg.max_grid_points
        )));
    }
    let hash = cfg.config_hash()?;
    let chunk_tuples = control.chunk_tuples.max(1);
    let with_mc = cfg.mc_trials > 0;
    let journal_path = cfg.journal_path();

    let resume = read_journal(&journal_path, &hash, chunk_tuples);
    let resumed_chunks = resume.as_ref().map_or(0, |s| s.next_chunk);
    let (mut csv_file, mut journal, mut counts, first_chunk) = match resume {
        Some(state) => {
            let mut csv_file = OpenOptions::new().write(true).open(&cfg.output_path)?;
            csv_file.set_len(state.csv_bytes)?;
            csv_file.seek(SeekFrom::End(0))?;
            let mut journal = OpenOptions::new().write(true).open(&journal_path)?;
            journal.set_len(state.journal_bytes)?;
            journal.seek(SeekFrom::End(0))?;
            log::info!("resuming sweep {hash} at chunk {}", state.next_chunk);
            (csv_file, journal, state.counts, state.next_chunk)
        }
        None => {
            let mut csv_file = File::create(&cfg.output_path)?;
            {
                let mut w = csv::WriterBuilder::new().from_writer(&mut csv_file);
                w.write_record(header_row(with_mc))?;
                w.flush()?;
            }
            let csv_bytes = csv_file.stream_position()?;
            let mut journal = File::create(&journal_path)?;
            let header = JournalHeader {
                config_hash: hash.clone(),
                chunk_tuples,
                csv_bytes,
            };
            writeln!(journal, "{}", serde_json::to_string(&header)?)?;
            journal.sync_data()?;
            (csv_file, journal, SweepCounts::default(), 0)
        }
    };

    let pool = match cfg.threads {
        Some(t) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Io(e.to_string()))?,
        ),
        None => None,
    };

    let total_tuples = grid.len();
    let n_chunks = total_tuples.div_ceil(chunk_tuples as u64);
    for (committed_now, chunk) in (first_chunk..n_chunks).enumerate() {
        if control.stop_after_chunks == Some(committed_now) {
            let summary = SweepSummary::from_counts(&counts, cfg.seed, hash);
            return Ok(SweepOutcome {
                summary,
                complete: false,
                resumed_chunks,
            });
        }
        let start = chunk * chunk_tuples as u64;
        let end = (start + chunk_tuples as u64).min(total_tuples);
        let evaluate = |t: u64| -> Result<Option<Vec<SweepRecord>>> {
            let Some(params) = grid.params(t) else {
                return Ok(None);
            };
            let job = TupleJob {
                n_values: &cfg.n_values,
                m_values: &cfg.m_values,
                tolerance: cfg.tolerance,
                mc_trials: cfg.mc_trials,
                seed: cfg.seed,
                stream_base: t * 2 * per_tuple,
            };
            evaluate_tuple(&params, &job).map(Some)
        };
        let results: Vec<Option<Vec<SweepRecord>>> = match &pool {
            Some(pool) => pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(evaluate)
                    .collect::<Result<_>>()
            })?,
            None => (start..end)
                .into_par_iter()
                .map(evaluate)
                .collect::<Result<_>>()?,
        };

        let mut chunk_counts = SweepCounts::default();
        {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(&mut csv_file);
            for result in &results {
                match result {
                    None => chunk_counts.skipped_infeasible += 1,
                    Some(records) => {
                        chunk_counts.tuples += 1;
                        for r in records {
                            chunk_counts.add_record(r, cfg.mc_trials);
                            w.write_record(r.csv_fields(with_mc))?;
                        }
                    }
                }
            }
            w.flush()?;
        }
        csv_file.sync_data()?;
        let csv_bytes = csv_file.stream_position()?;
        let entry = JournalEntry {
            chunk,
            csv_bytes,
            counts: chunk_counts.clone(),
        };
        writeln!(journal, "{}", serde_json::to_string(&entry)?)?;
        journal.sync_data()?;
        counts.merge(&chunk_counts);
        log::debug!("sweep chunk {}/{} committed", chunk + 1, n_chunks);
    }

    let summary = SweepSummary::from_counts(&counts, cfg.seed, hash);
    let mut out = File::create(cfg.summary_path())?;
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out)?;
    Ok(SweepOutcome {
        summary,
        complete: true,
        resumed_chunks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inclusive_axis() {
        let cfg = SweepConfig {
            grid_resolution: 0.05,
            ..SweepConfig::default()
        };
        let axis = cfg.axis().unwrap();
        assert_eq!(axis.len(), 11);
        assert_eq!(axis[0], 0.5);
        assert_eq!(axis[3], 0.65);
        assert_eq!(*axis.last().unwrap(), 1.0);
        assert_eq!(cfg.label_axis().unwrap().len(), 10);
    }

    #[test]
    fn counted_axis_stops_short_of_one() {
        let cfg = SweepConfig::large_scale();
        let axis = cfg.axis().unwrap();
        assert_eq!(axis.len(), 50);
        assert_eq!(*axis.last().unwrap(), 0.99);

        let too_many = SweepConfig {
            endpoints: GridEndpoints::Count(60),
            ..cfg
        };
        assert!(too_many.axis().is_err());
    }

    #[test]
    fn tuples_are_lexicographic() {
        let cfg = SweepConfig {
            grid_resolution: 0.25,
            ..SweepConfig::default()
        };
        let grid = Grid::new(&cfg).unwrap();
        assert_eq!(grid.len(), 2 * 2 * 3 * 3 * 3);
        assert_eq!(grid.tuple(0), [0.75, 0.75, 0.5, 0.5, 0.5]);
        assert_eq!(grid.tuple(1), [0.75, 0.75, 0.5, 0.5, 0.75]);
        assert_eq!(grid.tuple(grid.len() - 1), [1.0, 1.0, 1.0, 1.0, 1.0]);
        let tuples: Vec<_> = (0..grid.len()).map(|i| grid.tuple(i)).collect();
        let mut sorted = tuples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(tuples, sorted);
    }

    #[test]
    fn feasibility_filter() {
        let cfg = SweepConfig {
            grid_resolution: 0.25,
            ..SweepConfig::default()
        };
        let grid = Grid::new(&cfg).unwrap();
        // p_w = p_b0 = p_b1: equal risks
        assert!(grid.params(0).is_none());
        // p_w = 1 can never be beaten
        let idx = (0..grid.len()).find(|&i| grid.tuple(i)[2] == 1.0).unwrap();
        assert!(grid.params(idx).is_none());
    }

    #[test]
    fn chain_matches_direct_sums() {
        let d = TernaryDist::new(0.3, 0.25, 0.45).unwrap();
        let counts = [3, 6, 9, 33, 303, 1001];
        let chained = success_chain(&d, &counts).unwrap();
        for (c, p) in counts.iter().zip(chained) {
            let direct = sum_distribution(&d, *c).unwrap().prob_positive();
            assert!((p - direct).abs() < 1e-12, "count {c}: {p} vs {direct}");
        }
    }

    #[test]
    fn tuple_records_order_and_flags() {
        let params = CorrelatedParams::new(0.7, 0.8, 0.9, 0.8, 0.7).unwrap();
        let job = TupleJob {
            n_values: &[1, 2, 5],
            m_values: &[3, 11],
            tolerance: 1e-12,
            mc_trials: 0,
            seed: 0,
            stream_base: 0,
        };
        let records = evaluate_tuple(&params, &job).unwrap();
        let keys: Vec<_> = records.iter().map(|r| (r.n, r.m)).collect();
        assert_eq!(
            keys,
            vec![(1, 3), (1, 11), (2, 3), (2, 11), (5, 3), (5, 11)]
        );
        for r in &records {
            assert!(r.assumption1);
            assert_eq!(r.violation, r.diff < -1e-12);
            assert!(r.diff >= -1e-12);
        }
    }

    #[test]
    fn noise_classification() {
        let params = CorrelatedParams::new(0.7, 0.8, 0.9, 0.8, 0.7).unwrap();
        let mut r = SweepRecord {
            params,
            n: 1,
            m: 3,
            p_single: 1.0 - 2e-10,
            p_agg: 1.0 - 1e-10,
            diff: -1e-10,
            assumption1: true,
            violation: true,
            mc_single: None,
            mc_agg: None,
        };
        assert!(r.is_noise() && !r.is_substantive_violation());
        r.p_single = 0.9;
        assert!(!r.is_noise() && r.is_substantive_violation());
    }

    #[test]
    fn oversized_grid_is_refused() {
        let cfg = SweepConfig {
            grid_resolution: 0.01,
            max_grid_points: 1000,
            ..SweepConfig::default()
        };
        let err = run_sweep(&cfg).unwrap_err();
        assert!(matches!(err, Error::Resource(ref m) if m.contains("coarser")));
    }

    #[test]
    fn hash_ignores_output_path_and_order() {
        let a = SweepConfig::default();
        let b = SweepConfig {
            output_path: "elsewhere.csv".into(),
            m_values: vec![11, 3],
            ..SweepConfig::default()
        };
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        let c = SweepConfig {
            seed: 9,
            ..SweepConfig::default()
        };
        assert_ne!(a.config_hash().unwrap(), c.config_hash().unwrap());
    }
}
