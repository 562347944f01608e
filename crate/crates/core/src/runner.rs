//! Runs a validated [`ExperimentConfig`]: replications in parallel, each on
//! its own stream, merged in stream order into `<model>.csv` next to a
//! `manifest.json` holding digests of everything written.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Gg1Mode, GgmExperiment, GgmParams, ModelParams};
use crate::diagnostics::ks_critical_value;
use crate::error::{invalid, Error, Result};
use crate::gg1::{coupling_time, forward_tail_fractions, CouplingOptions, CouplingTime};
use crate::ggm::{estimate_stationary_wait, whitt_tail_experiment, WhittOptions};
use crate::multiaccess::ergodicity_probe;
use crate::output::{Cell, CsvWriter};
use crate::polling::{polling_simulate, recurrence_scan, PollingState};
use crate::routing::{jsq_stationarity_probe, partial_access_experiment, JsqState, PartialAccessState};
use crate::spatial::{stability_scan, ScanCell, ScanModel};
use crate::stochastic::RngStream;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QUEUELAB_OUT_DIR";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StreamRecord {
    pub rep: u32,
    pub stream_id: u64,
    pub rows: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
    /// Data rows, excluding comments and the header.
    pub rows: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub model: String,
    pub seed: u64,
    pub replications: u32,
    pub stream_offset: u32,
    pub threads: usize,
    pub config: std::collections::BTreeMap<String, String>,
    pub streams: Vec<StreamRecord>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputDigest>,
}

/// CSV text and per-stream bookkeeping of one run, before anything is
/// written to disk.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub csv: Vec<u8>,
    pub rows: usize,
    pub streams: Vec<StreamRecord>,
    pub threads: usize,
}

impl RunOutput {
    pub fn failures(&self) -> Vec<&StreamRecord> {
        self.streams.iter().filter(|s| s.error.is_some()).collect()
    }
}

/// Caveat comment lines written after the header comments.
pub fn notes(params: &ModelParams) -> &'static [&'static str] {
    match params {
        ModelParams::Multiaccess(_) => {
            &["verdicts cover only the protocol listed; no statement about the protocol class"]
        }
        ModelParams::PollingScan(_) => &["class is a cycle-growth heuristic, not a recurrence determination"],
        ModelParams::Ggm(GgmParams {
            experiment: GgmExperiment::Whitt { .. },
            ..
        }) => &["reference is the conjectured asymptotic form, not a proven limit"],
        _ => &[],
    }
}

/// Column names per model; the first two are always `rep,stream_id`.
pub fn columns(params: &ModelParams) -> &'static [&'static str] {
    match params {
        ModelParams::Gg1(p) if p.mode == Gg1Mode::Coupling => &[
            "rep",
            "stream_id",
            "initial_delay",
            "customers",
            "nu",
            "coupled",
            "nu_exceeds_customers",
            "supremum",
            "steps",
        ],
        ModelParams::Gg1(_) => &["rep", "stream_id", "x", "p_hat", "mean_wait"],
        ModelParams::Ggm(p) => match p.experiment {
            GgmExperiment::Stationary => &[
                "rep",
                "stream_id",
                "x",
                "p_hat",
                "ci_lo",
                "ci_hi",
                "exceedances",
                "low_confidence",
                "mean_wait",
                "complete_cycles",
            ],
            GgmExperiment::Whitt { .. } => &[
                "rep",
                "stream_id",
                "x",
                "p_hat",
                "ci_lo",
                "ci_hi",
                "reference",
                "ratio",
                "flagged",
                "hill",
                "hill_ci_lo",
                "hill_ci_hi",
                "loglog_slope",
            ],
        },
        ModelParams::Jsq(_) => &[
            "rep",
            "stream_id",
            "initial_id",
            "w1",
            "w2",
            "terminal_mean",
            "ks_crn_vs_first",
            "ks_independent_vs_first",
            "ks_critical_1pct",
            "drift_verdict",
        ],
        ModelParams::Partial3(_) => &[
            "rep",
            "stream_id",
            "initial_id",
            "horizon",
            "final_time",
            "growth_rate",
            "verdict",
            "slope",
        ],
        ModelParams::GreedyCircle(_) | ModelParams::Annihilation(_) => &[
            "rep",
            "stream_id",
            "lambda",
            "L",
            "v_or_eps",
            "policy",
            "verdict",
            "slope",
            "slope_ci_lo",
            "slope_ci_hi",
            "final_mean_count",
        ],
        ModelParams::Polling(_) => &[
            "rep",
            "stream_id",
            "horizon",
            "mean_q1",
            "mean_q2",
            "final_q1",
            "final_q2",
            "station2_emptyings",
            "verdict",
            "slope",
        ],
        ModelParams::PollingScan(_) => &[
            "rep",
            "stream_id",
            "mu11",
            "mu12",
            "mu21",
            "mu22",
            "mean_log_factor",
            "ci_lo",
            "ci_hi",
            "class",
            "completed",
            "degenerate",
            "escaped",
        ],
        ModelParams::Multiaccess(_) => &[
            "rep",
            "stream_id",
            "lambda",
            "verdict",
            "slope",
            "slope_ci_lo",
            "slope_ci_hi",
            "throughput",
            "final_mean_backlog",
        ],
    }
}

/// Rows written per replication, fixed by the configuration.
pub fn rows_per_replication(params: &ModelParams) -> usize {
    match params {
        ModelParams::Gg1(p) if p.mode == Gg1Mode::Coupling => 1,
        ModelParams::Gg1(p) => p.levels.len(),
        ModelParams::Ggm(p) => match p.experiment {
            GgmExperiment::Whitt { auto_levels, .. } if p.levels.is_empty() => auto_levels,
            _ => p.levels.len(),
        },
        ModelParams::Jsq(p) => p.initials.len(),
        ModelParams::Partial3(p) => p.initials.len(),
        ModelParams::GreedyCircle(p) | ModelParams::Annihilation(p) => {
            p.lambdas.len() * p.circumferences.len() * p.third.len()
        }
        ModelParams::Polling(_) => 1,
        ModelParams::PollingScan(p) => p.resolution.pow(4),
        ModelParams::Multiaccess(p) => p.lambdas.len(),
    }
}

type Rows = CsvWriter<Vec<u8>>;

fn opt_f(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

/// All rows of one replication, each prefixed with `rep,stream_id`.
fn replicate(params: &ModelParams, rng: &mut RngStream, rep: u64, sid: u64, w: &mut Rows) -> Result<usize> {
    let mut n = 0;
    let mut row = |w: &mut Rows, cells: &[Cell<'_>]| -> Result<()> {
        let mut all = vec![Cell::U(rep), Cell::U(sid)];
        all.extend_from_slice(cells);
        w.row(&all)?;
        n += 1;
        Ok(())
    };
    match params {
        ModelParams::Gg1(p) => match p.mode {
            Gg1Mode::Forward => {
                let tf = forward_tail_fractions(&p.process, p.initial_delay, p.customers, &p.levels, rng)?;
                for (i, &x) in p.levels.iter().enumerate() {
                    row(w, &[Cell::F(x), Cell::F(tf.fraction(i)), Cell::F(tf.mean_wait())])?;
                }
            }
            Gg1Mode::Coupling => {
                let mut opts = CouplingOptions::for_process(&p.process);
                opts.iteration_cap = p.iteration_cap;
                let out = coupling_time(&p.process, p.initial_delay, &opts, rng)?;
                let nu = match out.nu {
                    CouplingTime::Observed(v) => v.to_string(),
                    CouplingTime::NotYet => String::new(),
                };
                row(
                    w,
                    &[
                        Cell::F(p.initial_delay),
                        Cell::U(p.customers as u64),
                        Cell::S(&nu),
                        Cell::B(matches!(out.nu, CouplingTime::Observed(_))),
                        Cell::B(out.nu.exceeds(p.customers)),
                        Cell::F(out.supremum),
                        Cell::U(out.steps as u64),
                    ],
                )?;
            }
        },
        ModelParams::Ggm(p) => match &p.experiment {
            GgmExperiment::Stationary => {
                let est = estimate_stationary_wait(&p.process, p.servers, p.customers, &p.levels, rng)?;
                for t in &est.tails {
                    row(
                        w,
                        &[
                            Cell::F(t.x),
                            Cell::F(t.estimate.point),
                            Cell::F(t.estimate.lower),
                            Cell::F(t.estimate.upper),
                            Cell::U(t.exceedances),
                            Cell::B(t.estimate.low_confidence),
                            Cell::F(est.mean.point),
                            Cell::U(est.complete_cycles as u64),
                        ],
                    )?;
                }
            }
            GgmExperiment::Whitt {
                eta,
                hill_k,
                auto_levels,
            } => {
                let opts = WhittOptions {
                    eta: *eta,
                    levels: p.levels.clone(),
                    auto_levels: *auto_levels,
                    customers: p.customers,
                    hill_k: *hill_k,
                };
                let res = whitt_tail_experiment(&p.process.service, &p.process, p.servers, &opts, rng)?;
                let hill = res.hill.as_ref();
                for l in &res.levels {
                    row(
                        w,
                        &[
                            Cell::F(l.x),
                            Cell::F(l.estimate.point),
                            Cell::F(l.estimate.lower),
                            Cell::F(l.estimate.upper),
                            Cell::F(l.reference),
                            Cell::F(l.ratio),
                            Cell::B(l.flagged),
                            Cell::F(opt_f(hill.map(|h| h.point))),
                            Cell::F(opt_f(hill.map(|h| h.lower))),
                            Cell::F(opt_f(hill.map(|h| h.upper))),
                            Cell::F(opt_f(res.loglog_slope)),
                        ],
                    )?;
                }
            }
        },
        ModelParams::Jsq(p) => {
            let initials: Vec<JsqState> = p
                .initials
                .iter()
                .map(|v| JsqState::new(v[0], v[1]))
                .collect::<Result<_>>()?;
            let probe = jsq_stationarity_probe(&p.process, &initials, p.customers, p.probe_reps, rng)?;
            let crit = ks_critical_value(p.probe_reps, p.probe_reps, 0.01);
            for (i, v) in p.initials.iter().enumerate() {
                row(
                    w,
                    &[
                        Cell::U(i as u64),
                        Cell::F(v[0]),
                        Cell::F(v[1]),
                        Cell::F(probe.terminal_mean[i]),
                        Cell::F(probe.crn[0][i]),
                        Cell::F(probe.independent[0][i]),
                        Cell::F(crit),
                        Cell::S(probe.drift.class.label()),
                    ],
                )?;
            }
        }
        ModelParams::Partial3(p) => {
            let initials: Vec<PartialAccessState> = p
                .initials
                .iter()
                .map(|v| PartialAccessState::new(*v))
                .collect::<Result<_>>()?;
            let summaries = partial_access_experiment(p.lambda, &p.f_left, &p.f_right, &initials, p.horizon, 1, rng)?;
            for s in &summaries {
                let r = &s.reps[0];
                row(
                    w,
                    &[
                        Cell::U(s.initial_id as u64),
                        Cell::U(r.horizon as u64),
                        Cell::F(r.final_time),
                        Cell::F(r.growth_rate),
                        Cell::S(r.verdict.class.label()),
                        Cell::F(r.verdict.slope),
                    ],
                )?;
            }
        }
        ModelParams::GreedyCircle(p) | ModelParams::Annihilation(p) => {
            let model = match params {
                ModelParams::GreedyCircle(_) => ScanModel::GreedyServer {
                    policy: p.policy,
                    topology: p.topology,
                },
                _ => ScanModel::Annihilation,
            };
            let mut cells = Vec::new();
            for &lambda in &p.lambdas {
                for &circumference in &p.circumferences {
                    for &v_or_eps in &p.third {
                        cells.push(ScanCell {
                            lambda,
                            circumference,
                            v_or_eps,
                        });
                    }
                }
            }
            for r in stability_scan(model, &cells, p.horizon, p.scan_reps, rng)? {
                row(
                    w,
                    &[
                        Cell::F(r.cell.lambda),
                        Cell::F(r.cell.circumference),
                        Cell::F(r.cell.v_or_eps),
                        Cell::S(&r.policy),
                        Cell::S(r.verdict.class.label()),
                        Cell::F(r.verdict.slope),
                        Cell::F(r.verdict.slope_ci.0),
                        Cell::F(r.verdict.slope_ci.1),
                        Cell::F(r.final_mean_count),
                    ],
                )?;
            }
        }
        ModelParams::Polling(p) => {
            let initial = PollingState::new(p.initial_q, p.assignment)?;
            let run = polling_simulate(&p.config, initial, p.horizon, rng)?;
            let verdict = run.verdict();
            row(
                w,
                &[
                    Cell::F(p.horizon),
                    Cell::F(run.time_average(0)),
                    Cell::F(run.time_average(1)),
                    Cell::U(run.final_state.q[0]),
                    Cell::U(run.final_state.q[1]),
                    Cell::U(run.cycles.len() as u64),
                    Cell::S(verdict.class.label()),
                    Cell::F(verdict.slope),
                ],
            )?;
        }
        ModelParams::PollingScan(p) => {
            let scan = recurrence_scan(p.resolution, p.cycles, p.mode, rng)?;
            for r in &scan.rows {
                let g = &r.growth;
                row(
                    w,
                    &[
                        Cell::F(r.coords[0]),
                        Cell::F(r.coords[1]),
                        Cell::F(r.coords[2]),
                        Cell::F(r.coords[3]),
                        Cell::F(g.mean_log_factor),
                        Cell::F(g.ci.0),
                        Cell::F(g.ci.1),
                        Cell::S(g.class.label()),
                        Cell::U(g.completed as u64),
                        Cell::U(g.degenerate as u64),
                        Cell::U(g.escaped as u64),
                    ],
                )?;
            }
        }
        ModelParams::Multiaccess(p) => {
            let probe = ergodicity_probe(&p.lambdas, &p.protocol, p.w0, p.slots, p.probe_reps, rng)?;
            for r in &probe.rows {
                row(
                    w,
                    &[
                        Cell::F(r.lambda),
                        Cell::S(r.verdict.class.label()),
                        Cell::F(r.verdict.slope),
                        Cell::F(r.verdict.slope_ci.0),
                        Cell::F(r.verdict.slope_ci.1),
                        Cell::F(r.throughput),
                        Cell::F(r.final_mean_backlog),
                    ],
                )?;
            }
        }
    }
    Ok(n)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic with a non-string payload".to_string()
    }
}

/// Runs every replication and assembles the CSV in memory. Replications
/// that fail or panic contribute no rows and are reported in `streams`.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| invalid("threads", e.to_string()))?;
    let threads = pool.current_num_threads();
    let results: Vec<(StreamRecord, Vec<u8>)> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let rep = cfg.stream_offset + r;
                let stream_id = cfg.stream_id(r);
                let mut rng = RngStream::new(cfg.seed, stream_id);
                let mut w = CsvWriter::new(Vec::new());
                let outcome = catch_unwind(AssertUnwindSafe(|| {
                    replicate(&cfg.params, &mut rng, u64::from(rep), stream_id, &mut w)
                }));
                let (rows, error) = match outcome {
                    Ok(Ok(n)) => (n, None),
                    Ok(Err(e)) => (0, Some(e.to_string())),
                    Err(payload) => (0, Some(format!("panicked: {}", panic_message(payload)))),
                };
                let bytes = if error.is_none() { w.into_inner() } else { Vec::new() };
                (
                    StreamRecord {
                        rep,
                        stream_id,
                        rows,
                        error,
                    },
                    bytes,
                )
            })
            .collect()
    });

    let mut w = CsvWriter::new(Vec::new());
    w.comment(&format!("model = {}", cfg.model))?;
    w.comment(&format!("seed = {}", cfg.seed))?;
    w.comment(&format!("queuelab {}", env!("CARGO_PKG_VERSION")))?;
    for note in notes(&cfg.params) {
        w.comment(note)?;
    }
    w.header(columns(&cfg.params))?;
    let mut csv = w.into_inner();
    let mut streams = Vec::with_capacity(results.len());
    let mut rows = 0;
    for (record, bytes) in results {
        csv.extend_from_slice(&bytes);
        rows += record.rows;
        streams.push(record);
    }
    Ok(RunOutput {
        csv,
        rows,
        streams,
        threads,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Data rows of a CSV produced by [`execute`].
pub fn count_rows(csv: &[u8]) -> usize {
    let text = String::from_utf8_lossy(csv);
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .count()
        .saturating_sub(1)
}

/// Runs the experiment and writes `<model>.csv` and the manifest into
/// `out_dir`. Both files are written even when some replications fail;
/// the failures are then returned as [`Error::Replication`].
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let output = execute(cfg)?;
    let wall_clock_seconds = start.elapsed().as_secs_f64();
    fs::create_dir_all(out_dir)?;
    let file = format!("{}.csv", cfg.model);
    fs::write(out_dir.join(&file), &output.csv)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        model: cfg.model.to_string(),
        seed: cfg.seed,
        replications: cfg.replications,
        stream_offset: cfg.stream_offset,
        threads: output.threads,
        config: cfg.echo.clone(),
        streams: output.streams.clone(),
        wall_clock_seconds,
        outputs: vec![OutputDigest {
            sha256: sha256_hex(&output.csv),
            rows: output.rows,
            file,
        }],
    };
    fs::write(
        out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    let failures = output.failures();
    if !failures.is_empty() {
        let msg = failures
            .iter()
            .map(|f| {
                format!(
                    "stream {} (rep {}): {}",
                    f.stream_id,
                    f.rep,
                    f.error.as_deref().unwrap_or("")
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Replication(msg));
    }
    Ok(manifest)
}

/// Recomputes the digest and row count of every output listed in the
/// manifest at `manifest_path`; files resolve relative to its directory.
pub fn verify(manifest_path: &Path) -> Result<RunManifest> {
    let manifest: RunManifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
    let dir = manifest_path
        .parent()
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let mut problems = Vec::new();
    for out in &manifest.outputs {
        let bytes = match fs::read(dir.join(&out.file)) {
            Ok(b) => b,
            Err(e) => {
                problems.push(format!("{}: {e}", out.file));
                continue;
            }
        };
        let digest = sha256_hex(&bytes);
        if digest != out.sha256 {
            problems.push(format!(
                "{}: sha256 {digest} differs from recorded {}",
                out.file, out.sha256
            ));
        }
        let rows = count_rows(&bytes);
        if rows != out.rows {
            problems.push(format!("{}: {rows} rows, manifest says {}", out.file, out.rows));
        }
    }
    if problems.is_empty() {
        Ok(manifest)
    } else {
        Err(Error::Manifest(problems.join("; ")))
    }
}
