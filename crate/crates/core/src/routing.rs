//! Workload-based routing: two servers under join-the-shortest-queue and
//! three servers each reachable by two of three customer classes.

use std::io::{self, Write};

use serde::Serialize;

use crate::diagnostics::{drift_classify, ks_distance, StabilityVerdict};
use crate::error::{invalid, Result};
use crate::output::{Cell, CsvWriter};
use crate::stochastic::{DistributionSpec, InputProcess, RngStream};

fn check_workloads(v: &[f64]) -> Result<()> {
    if v.iter().all(|&x| x.is_finite() && x >= 0.0) {
        Ok(())
    } else {
        Err(invalid("workload", "entries must be finite and ≥ 0"))
    }
}

/// Per-server residual workloads; server identity matters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JsqState {
    pub v: [f64; 2],
}

impl JsqState {
    pub fn new(v0: f64, v1: f64) -> Result<Self> {
        check_workloads(&[v0, v1])?;
        Ok(Self { v: [v0, v1] })
    }

    pub fn min_workload(&self) -> f64 {
        self.v[0].min(self.v[1])
    }
}

/// Server chosen by an arrival: the strictly smaller workload, a fair coin
/// from `ties` otherwise.
fn shorter(a: f64, b: f64, ties: &mut RngStream) -> bool {
    if a < b {
        true
    } else if b < a {
        false
    } else {
        ties.coin()
    }
}

/// Adds `σ` at the shorter workload and drains both by `t`. Returns the
/// index of the joined server.
pub fn jsq_step_in_place(s: &mut JsqState, sigma: f64, t: f64, ties: &mut RngStream) -> usize {
    let j = if shorter(s.v[0], s.v[1], ties) { 0 } else { 1 };
    s.v[j] += sigma;
    for x in &mut s.v {
        *x = (*x - t).max(0.0);
    }
    j
}

pub fn jsq_step(s: &JsqState, sigma: f64, t: f64, ties: &mut RngStream) -> JsqState {
    let mut next = *s;
    jsq_step_in_place(&mut next, sigma, t, ties);
    next
}

#[derive(Clone, Debug, Serialize)]
pub struct JsqProbe {
    /// Pairwise KS distances of terminal minimum workloads when every
    /// initial state sees the same driving sequences.
    pub crn: Vec<Vec<f64>>,
    /// The same with independent sequences per initial state.
    pub independent: Vec<Vec<f64>>,
    /// Mean terminal minimum workload per initial state (common numbers).
    pub terminal_mean: Vec<f64>,
    /// Drift verdict of the replication-averaged minimum workload started
    /// from the first initial state.
    pub drift: StabilityVerdict,
    pub diverging: bool,
}

/// Checkpoints per path fed to the drift classifier.
const PROBE_CHECKPOINTS: usize = 400;

fn jsq_run(
    process: &InputProcess,
    init: JsqState,
    customers: usize,
    driver_rng: &mut RngStream,
    ties: &mut RngStream,
    mut trace: Option<&mut [f64]>,
) -> f64 {
    let mut s = init;
    let mut driver = process.driver();
    let every = (customers / PROBE_CHECKPOINTS).max(1);
    for n in 0..customers {
        let (sigma, t) = driver.next_pair(driver_rng);
        jsq_step_in_place(&mut s, sigma, t, ties);
        if let Some(tr) = trace.as_deref_mut() {
            if (n + 1) % every == 0 && (n + 1) / every <= tr.len() {
                tr[(n + 1) / every - 1] += s.min_workload();
            }
        }
    }
    s.min_workload()
}

fn ks_matrix(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = samples.len();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let d = ks_distance(&samples[i], &samples[j]);
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    out
}

/// Runs every initial state `reps` times for `customers` arrivals and
/// compares the terminal laws of the minimum workload. Replication `r`
/// drives with `rng.substream(r)`; in common-number mode all initial states
/// share it, in independent mode each gets its own.
pub fn jsq_stationarity_probe(
    process: &InputProcess,
    initials: &[JsqState],
    customers: usize,
    reps: usize,
    rng: &RngStream,
) -> Result<JsqProbe> {
    if initials.is_empty() {
        return Err(invalid("initials", "need at least one initial state"));
    }
    if customers == 0 || reps == 0 {
        return Err(invalid("customers", "customers and replications must be ≥ 1"));
    }
    let k = initials.len();
    let mut crn = vec![Vec::with_capacity(reps); k];
    let mut ind = vec![Vec::with_capacity(reps); k];
    let points = PROBE_CHECKPOINTS.min(customers);
    let mut trace = vec![0.0; points];
    for r in 0..reps {
        let base = rng.substream(r as u64);
        for (i, init) in initials.iter().enumerate() {
            let tr = if i == 0 { Some(trace.as_mut_slice()) } else { None };
            crn[i].push(jsq_run(
                process,
                *init,
                customers,
                &mut base.substream(0),
                &mut base.substream(1),
                tr,
            ));
            let own = base.substream(2 + i as u64);
            ind[i].push(jsq_run(
                process,
                *init,
                customers,
                &mut own.substream(0),
                &mut own.substream(1),
                None,
            ));
        }
    }
    let every = (customers / PROBE_CHECKPOINTS).max(1);
    let path: Vec<(f64, f64)> = trace
        .iter()
        .enumerate()
        .map(|(j, &sum)| (((j + 1) * every) as f64, sum / reps as f64))
        .collect();
    let drift = drift_classify(&path, (points / 20).max(1));
    let terminal_mean = crn.iter().map(|c| c.iter().sum::<f64>() / reps as f64).collect();
    Ok(JsqProbe {
        crn: ks_matrix(&crn),
        independent: ks_matrix(&ind),
        terminal_mean,
        diverging: drift.class == crate::diagnostics::StabilityClass::Transient,
        drift,
    })
}

/// Workloads of servers 1..3 (stored at indices 0..2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PartialAccessState {
    pub workloads: [f64; 3],
}

impl PartialAccessState {
    pub fn new(w: [f64; 3]) -> Result<Self> {
        check_workloads(&w)?;
        Ok(Self { workloads: w })
    }

    pub fn total(&self) -> f64 {
        self.workloads.iter().sum()
    }
}

/// `(left, right)` servers of a class, 0-based: class 1 reaches servers 1
/// and 2, class 2 reaches 2 and 3, class 3 reaches 3 and 1.
pub fn accessible(class: usize) -> Result<(usize, usize)> {
    match class {
        1 => Ok((0, 1)),
        2 => Ok((1, 2)),
        3 => Ok((2, 0)),
        _ => Err(invalid("class", format!("must be 1, 2 or 3, got {class}"))),
    }
}

/// Where a class `class` customer went and what it brought.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Routed {
    pub server: usize,
    pub left: bool,
    pub service: f64,
}

/// Routes one arrival to the accessible server with the smaller workload
/// (coin from `ties` on equality), draws its service from `f_left` or
/// `f_right` after the choice, then drains every server by `t`.
pub fn partial_access_step(
    s: &mut PartialAccessState,
    class: usize,
    f_left: &DistributionSpec,
    f_right: &DistributionSpec,
    t: f64,
    rng: &mut RngStream,
    ties: &mut RngStream,
) -> Result<Routed> {
    let (l, r) = accessible(class)?;
    let left = shorter(s.workloads[l], s.workloads[r], ties);
    let server = if left { l } else { r };
    let service = if left { f_left.sample(rng) } else { f_right.sample(rng) };
    s.workloads[server] += service;
    for w in &mut s.workloads {
        *w = (*w - t).max(0.0);
    }
    Ok(Routed { server, left, service })
}

#[derive(Clone, Debug, Serialize)]
pub struct PartialAccessRep {
    pub rep: usize,
    pub initial_id: usize,
    pub horizon: usize,
    pub final_time: f64,
    /// `(total(T) − total(0)) / T`.
    pub growth_rate: f64,
    pub verdict: StabilityVerdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartialAccessSummary {
    pub initial_id: usize,
    pub initial: PartialAccessState,
    pub mean_growth_rate: f64,
    pub reps: Vec<PartialAccessRep>,
}

/// One path of `horizon` Poisson(λ) arrivals with uniformly chosen classes.
/// Per arrival the stream yields the interarrival time, the class, then
/// the service; tie coins come from a separate stream so that different
/// initial states stay on common random numbers.
pub fn partial_access_path(
    lambda: f64,
    f_left: &DistributionSpec,
    f_right: &DistributionSpec,
    initial: PartialAccessState,
    horizon: usize,
    rng: &mut RngStream,
    ties: &mut RngStream,
) -> Result<Vec<(f64, f64)>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    let mut s = initial;
    let mut now = 0.0;
    let mut path = Vec::with_capacity(horizon + 1);
    path.push((0.0, s.total()));
    for _ in 0..horizon {
        let t = rng.exponential(lambda);
        let class = 1 + (rng.uniform() * 3.0) as usize;
        // drain up to the arrival, then route
        for w in &mut s.workloads {
            *w = (*w - t).max(0.0);
        }
        now += t;
        partial_access_step(&mut s, class.min(3), f_left, f_right, 0.0, rng, ties)?;
        path.push((now, s.total()));
    }
    Ok(path)
}

pub fn partial_access_experiment(
    lambda: f64,
    f_left: &DistributionSpec,
    f_right: &DistributionSpec,
    initials: &[PartialAccessState],
    horizon: usize,
    reps: usize,
    rng: &RngStream,
) -> Result<Vec<PartialAccessSummary>> {
    if horizon < 60 {
        return Err(invalid(
            "horizon",
            format!("need ≥ 60 arrivals for a drift verdict, got {horizon}"),
        ));
    }
    let window = horizon / 40;
    let mut out = Vec::with_capacity(initials.len());
    for (id, init) in initials.iter().enumerate() {
        let mut reps_out = Vec::with_capacity(reps);
        for r in 0..reps {
            let base = rng.substream(r as u64);
            let path = partial_access_path(
                lambda,
                f_left,
                f_right,
                *init,
                horizon,
                &mut base.substream(0),
                &mut base.substream(1),
            )?;
            let (t_end, w_end) = path[path.len() - 1];
            reps_out.push(PartialAccessRep {
                rep: r,
                initial_id: id,
                horizon,
                final_time: t_end,
                growth_rate: (w_end - init.total()) / t_end,
                verdict: drift_classify(&path, window),
            });
        }
        let mean_growth_rate = reps_out.iter().map(|r| r.growth_rate).sum::<f64>() / reps.max(1) as f64;
        out.push(PartialAccessSummary {
            initial_id: id,
            initial: *init,
            mean_growth_rate,
            reps: reps_out,
        });
    }
    Ok(out)
}

/// CSV with columns `rep,initial_id,horizon,mean_growth_rate,verdict`.
pub fn write_partial_access_csv<W: Write>(summaries: &[PartialAccessSummary], out: W) -> io::Result<()> {
    let mut w = CsvWriter::new(out);
    w.header(&["rep", "initial_id", "horizon", "mean_growth_rate", "verdict"])?;
    for s in summaries {
        for r in &s.reps {
            w.row(&[
                Cell::U(r.rep as u64),
                Cell::U(r.initial_id as u64),
                Cell::U(r.horizon as u64),
                Cell::F(r.growth_rate),
                Cell::S(r.verdict.class.label()),
            ])?;
        }
    }
    Ok(())
}
