//! Two stations, two heterogeneous exhaustive servers, zero switchover:
//! exact continuous-time simulation, random piecewise-linear fluid paths,
//! and a cycle-growth scan over the four service parameters.

use std::fmt;
use std::io::{self, Write};

use serde::Serialize;

use crate::diagnostics::{drift_classify, normal_quantile, resample_on_grid, StabilityClass, StabilityVerdict};
use crate::error::{invalid, Result};
use crate::output::{Cell, CsvWriter};
use crate::stochastic::RngStream;

/// `mu[i][j]` is the service rate of server `j` at station `i`; both
/// stations receive Poisson(1) arrivals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PollingConfig {
    pub mu: [[f64; 2]; 2],
}

impl PollingConfig {
    pub fn new(mu: [[f64; 2]; 2]) -> Result<Self> {
        if mu.iter().flatten().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(invalid("mu", "every service rate must be positive and finite"));
        }
        Ok(Self { mu })
    }

    /// Reads the four parameters as mean service times.
    pub fn from_mean_service_times(means: [[f64; 2]; 2]) -> Result<Self> {
        if means.iter().flatten().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(invalid(
                "mean_service",
                "every mean service time must be positive and finite",
            ));
        }
        Self::new(means.map(|row| row.map(|m| 1.0 / m)))
    }

    /// Whether every rate is below one.
    pub fn all_below_one(&self) -> bool {
        self.mu.iter().flatten().all(|&m| m < 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Loc {
    Station(usize),
    Passive,
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::Station(i) => write!(f, "{}", i + 1),
            Loc::Passive => f.write_str("p"),
        }
    }
}

fn assignment_label(a: &[Loc; 2]) -> String {
    format!("{}{}", a[0], a[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PollingState {
    /// Customers at each station, including those in service.
    pub q: [u64; 2],
    pub loc: [Loc; 2],
    pub busy: [bool; 2],
}

impl PollingState {
    pub fn empty() -> Self {
        Self {
            q: [0, 0],
            loc: [Loc::Passive, Loc::Passive],
            busy: [false, false],
        }
    }

    /// Servers placed at stations; each starts serving if a customer is free.
    pub fn new(q: [u64; 2], loc: [Loc; 2]) -> Result<Self> {
        if loc.iter().any(|l| matches!(l, Loc::Station(i) if *i > 1)) {
            return Err(invalid("assignment", "stations are 0 and 1"));
        }
        let mut s = Self {
            q,
            loc,
            busy: [false, false],
        };
        for j in 0..2 {
            if let Loc::Station(i) = loc[j] {
                if s.unserved(i) > 0 {
                    s.busy[j] = true;
                } else {
                    s.loc[j] = Loc::Passive;
                }
            }
        }
        Ok(s)
    }

    fn in_service(&self, i: usize) -> u64 {
        (0..2)
            .filter(|&j| self.busy[j] && self.loc[j] == Loc::Station(i))
            .count() as u64
    }

    pub fn unserved(&self, i: usize) -> u64 {
        self.q[i] - self.in_service(i)
    }

    pub fn is_valid(&self) -> bool {
        (0..2).all(|j| match self.loc[j] {
            Loc::Passive => !self.busy[j],
            Loc::Station(_) => self.busy[j],
        }) && (0..2).all(|i| self.in_service(i) <= self.q[i])
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PollingRun {
    /// `(time, q1, q2)` after every event.
    pub trajectory: Vec<(f64, u64, u64)>,
    /// `(time, q1)` each time station 2 empties.
    pub cycles: Vec<(f64, u64)>,
    pub horizon: f64,
    pub final_state: PollingState,
}

impl PollingRun {
    pub fn time_average(&self, station: usize) -> f64 {
        let path: Vec<(f64, f64)> = self
            .trajectory
            .iter()
            .map(|&(t, a, b)| (t, [a, b][station] as f64))
            .collect();
        crate::diagnostics::time_average(&path[1..], path[0].1, 0.0, self.horizon)
    }

    /// Drift verdict of the total queue length on a regular grid.
    pub fn verdict(&self) -> StabilityVerdict {
        let path: Vec<(f64, f64)> = self.trajectory.iter().map(|&(t, a, b)| (t, (a + b) as f64)).collect();
        let grid = resample_on_grid(&path[1..], path[0].1, 0.0, self.horizon, 2000);
        drift_classify(&grid, 100)
    }
}

/// Exhaustive decision for server `j` after it completed a service or was
/// placed: serve here, else move to the other station if a customer waits
/// there, else become passive.
fn decide(s: &mut PollingState, j: usize, here: usize) {
    let other = 1 - here;
    s.busy[j] = false;
    if s.unserved(here) > 0 {
        s.loc[j] = Loc::Station(here);
        s.busy[j] = true;
    } else if s.unserved(other) > 0 {
        s.loc[j] = Loc::Station(other);
        s.busy[j] = true;
    } else {
        s.loc[j] = Loc::Passive;
    }
}

/// Continuous-time simulation up to `horizon`. Each event consumes an
/// exponential holding time and a uniform choosing among arrivals and
/// completions; a coin picks the server when both are passive at an
/// arrival. A passive server wakes at the next arrival and joins its station.
pub fn polling_simulate(
    cfg: &PollingConfig,
    initial: PollingState,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<PollingRun> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    if !initial.is_valid() {
        return Err(invalid(
            "state",
            "servers must be busy exactly when placed at a station",
        ));
    }
    let mut s = initial;
    let mut now = 0.0;
    let mut run = PollingRun {
        trajectory: vec![(0.0, s.q[0], s.q[1])],
        cycles: Vec::new(),
        horizon,
        final_state: s,
    };
    loop {
        let service_rate = |j: usize| match (s.busy[j], s.loc[j]) {
            (true, Loc::Station(i)) => cfg.mu[i][j],
            _ => 0.0,
        };
        let r = [1.0, 1.0, service_rate(0), service_rate(1)];
        let total: f64 = r.iter().sum();
        now += rng.exponential(total);
        if now > horizon {
            break;
        }
        let mut u = rng.uniform() * total;
        let mut ev = 3;
        for (k, &rate) in r.iter().enumerate() {
            if u < rate {
                ev = k;
                break;
            }
            u -= rate;
        }
        // rounding can leave u just past the last positive rate
        while r[ev] == 0.0 {
            ev -= 1;
        }
        if ev < 2 {
            let i = ev;
            s.q[i] += 1;
            let passive: Vec<usize> = (0..2).filter(|&j| s.loc[j] == Loc::Passive).collect();
            let wake = match passive.len() {
                0 => None,
                1 => Some(passive[0]),
                _ => Some(if rng.coin() { 0 } else { 1 }),
            };
            if let Some(j) = wake {
                s.loc[j] = Loc::Station(i);
                s.busy[j] = true;
            }
        } else {
            let j = ev - 2;
            let Loc::Station(i) = s.loc[j] else { unreachable!() };
            s.q[i] -= 1;
            decide(&mut s, j, i);
            if i == 1 && s.q[1] == 0 {
                run.cycles.push((now, s.q[0]));
            }
        }
        debug_assert!(s.is_valid());
        run.trajectory.push((now, s.q[0], s.q[1]));
    }
    run.final_state = s;
    Ok(run)
}

/// What happened at a fluid breakpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum FluidEvent {
    Start,
    /// `station` emptied; `first` left first (a race when two servers were
    /// there), `stayed` is a server that remained.
    Emptied {
        station: usize,
        first: Option<usize>,
        stayed: Option<usize>,
    },
    Horizon,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FluidState {
    pub t: f64,
    pub x: [f64; 2],
    pub assignment: [Loc; 2],
    pub event: FluidEvent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FluidEnd {
    Horizon,
    /// Both levels reached zero.
    Absorbed,
    /// No level can reach zero and some level grows.
    Escaped,
    /// No level can reach zero and nothing grows.
    Stalled,
}

#[derive(Clone, Debug, Serialize)]
pub struct FluidPath {
    pub breakpoints: Vec<FluidState>,
    pub end: FluidEnd,
    /// Some segment had a positive level with exactly zero net rate.
    pub degenerate: bool,
}

impl FluidPath {
    /// Levels at time `t` by linear interpolation between breakpoints.
    pub fn eval(&self, t: f64) -> [f64; 2] {
        let b = &self.breakpoints;
        let k = b.partition_point(|p| p.t <= t);
        if k == 0 {
            return b[0].x;
        }
        if k == b.len() {
            return b[k - 1].x;
        }
        let (p, q) = (&b[k - 1], &b[k]);
        let f = if q.t > p.t { (t - p.t) / (q.t - p.t) } else { 1.0 };
        [p.x[0] + f * (q.x[0] - p.x[0]), p.x[1] + f * (q.x[1] - p.x[1])]
    }

    /// CSV with columns `t,x1,x2,assignment`.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = CsvWriter::new(out);
        w.header(&["t", "x1", "x2", "assignment"])?;
        for b in &self.breakpoints {
            let a = assignment_label(&b.assignment);
            w.row(&[Cell::F(b.t), Cell::F(b.x[0]), Cell::F(b.x[1]), Cell::S(&a)])?;
        }
        Ok(())
    }
}

/// Net rate `1 − Σ μ` of the servers assigned to each station.
pub fn net_rates(cfg: &PollingConfig, assignment: &[Loc; 2]) -> [f64; 2] {
    let mut r = [1.0, 1.0];
    for (j, loc) in assignment.iter().enumerate() {
        if let Loc::Station(i) = loc {
            r[*i] -= cfg.mu[*i][j];
        }
    }
    r
}

/// Servers leaving a station whose level just hit zero. With two servers
/// the first to leave wins an exponential race; the other then leaves with
/// the probability `min(1, μ)` that its own birth–death queue ever empties.
/// A lone server leaves with that same probability. Always consumes one
/// uniform per server present.
fn empty_station(cfg: &PollingConfig, a: &mut [Loc; 2], station: usize, rng: &mut RngStream) -> FluidEvent {
    let other = 1 - station;
    let here: Vec<usize> = (0..2).filter(|&j| a[j] == Loc::Station(station)).collect();
    let mu = cfg.mu[station];
    let (first, stayed) = match here.len() {
        2 => {
            let first = if rng.uniform() < mu[0] / (mu[0] + mu[1]) { 0 } else { 1 };
            let rest = 1 - first;
            a[first] = Loc::Station(other);
            if rng.uniform() < mu[rest].min(1.0) {
                a[rest] = Loc::Station(other);
                (Some(first), None)
            } else {
                (Some(first), Some(rest))
            }
        }
        1 => {
            let j = here[0];
            if rng.uniform() < mu[j].min(1.0) {
                a[j] = Loc::Station(other);
                (Some(j), None)
            } else {
                (None, Some(j))
            }
        }
        _ => (None, None),
    };
    FluidEvent::Emptied { station, first, stayed }
}

/// Outcome of advancing a fluid state to its next breakpoint.
enum Step {
    Hit(FluidState),
    Reached(FluidState),
    End(FluidEnd),
}

fn next_breakpoint(
    cfg: &PollingConfig,
    s: &FluidState,
    t_max: f64,
    degenerate: &mut bool,
    rng: &mut RngStream,
) -> Step {
    let rates = net_rates(cfg, &s.assignment);
    let mut hit: Option<(usize, f64)> = None;
    for i in 0..2 {
        if s.x[i] > 0.0 && rates[i] < 0.0 {
            let dt = s.x[i] / -rates[i];
            if hit.is_none_or(|(_, h)| dt < h) {
                hit = Some((i, dt));
            }
        }
        if s.x[i] > 0.0 && rates[i] == 0.0 {
            *degenerate = true;
        }
    }
    let advance = |dt: f64| [(s.x[0] + rates[0] * dt).max(0.0), (s.x[1] + rates[1] * dt).max(0.0)];
    match hit {
        Some((i, dt)) if s.t + dt <= t_max => {
            let mut x = advance(dt);
            x[i] = 0.0;
            let mut assignment = s.assignment;
            if x[1 - i] == 0.0 {
                return Step::End(FluidEnd::Absorbed);
            }
            let event = empty_station(cfg, &mut assignment, i, rng);
            Step::Hit(FluidState {
                t: s.t + dt,
                x,
                assignment,
                event,
            })
        }
        Some(_) => Step::Reached(FluidState {
            t: t_max,
            x: advance(t_max - s.t),
            assignment: s.assignment,
            event: FluidEvent::Horizon,
        }),
        None if t_max.is_finite() => Step::Reached(FluidState {
            t: t_max,
            x: advance(t_max - s.t),
            assignment: s.assignment,
            event: FluidEvent::Horizon,
        }),
        None => Step::End(if rates.iter().any(|&r| r > 0.0) {
            FluidEnd::Escaped
        } else {
            FluidEnd::Stalled
        }),
    }
}

/// Settles an initial state: servers at an empty station leave by the same
/// rule as at a hitting time, provided the other station holds fluid.
fn settle(cfg: &PollingConfig, x: [f64; 2], mut a: [Loc; 2], rng: &mut RngStream) -> [Loc; 2] {
    for i in 0..2 {
        if x[i] == 0.0 && x[1 - i] > 0.0 {
            empty_station(cfg, &mut a, i, rng);
        }
    }
    a
}

/// A path whose total level falls below this fraction of the initial total
/// counts as absorbed; contracting paths otherwise reach zero only after
/// infinitely many breakpoints.
pub const ABSORB_FRACTION: f64 = 1e-12;

/// Piecewise-linear fluid path from `x0` over `[0, horizon]`. It stops
/// early when both levels vanish or when no level can reach zero any more.
pub fn fluid_trajectory(
    cfg: &PollingConfig,
    x0: [f64; 2],
    assignment0: [Loc; 2],
    horizon: f64,
    rng: &mut RngStream,
) -> Result<FluidPath> {
    if x0.iter().any(|&v| !(v >= 0.0 && v.is_finite())) || x0 == [0.0, 0.0] {
        return Err(invalid("x0", "levels must be ≥ 0 and not both zero"));
    }
    if !(horizon > 0.0) {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    if assignment0
        .iter()
        .any(|l| matches!(l, Loc::Passive | Loc::Station(2..)))
    {
        return Err(invalid("assignment", "each server must sit at station 0 or 1"));
    }
    let mut state = FluidState {
        t: 0.0,
        x: x0,
        assignment: settle(cfg, x0, assignment0, rng),
        event: FluidEvent::Start,
    };
    let mut path = FluidPath {
        breakpoints: vec![state],
        end: FluidEnd::Horizon,
        degenerate: false,
    };
    let floor = (x0[0] + x0[1]) * ABSORB_FRACTION;
    loop {
        match next_breakpoint(cfg, &state, horizon, &mut path.degenerate, rng) {
            Step::Hit(next) => {
                path.breakpoints.push(next);
                state = next;
                if state.x[0] + state.x[1] < floor {
                    path.end = FluidEnd::Absorbed;
                    break;
                }
            }
            Step::Reached(next) => {
                path.breakpoints.push(next);
                path.end = FluidEnd::Horizon;
                break;
            }
            Step::End(end) => {
                path.end = end;
                break;
            }
        }
    }
    Ok(path)
}

/// Result of one fluid cycle between successive emptyings of station 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CycleOutcome {
    Completed { end: FluidState, degenerate: bool },
    Failed(FluidEnd),
}

/// Breakpoints allowed inside one cycle before giving up.
const CYCLE_SEGMENT_CAP: usize = 10_000;

/// Runs from `start` until station 2 next empties.
pub fn fluid_cycle(cfg: &PollingConfig, start: FluidState, rng: &mut RngStream) -> CycleOutcome {
    let mut state = FluidState { t: 0.0, ..start };
    let mut degenerate = false;
    for _ in 0..CYCLE_SEGMENT_CAP {
        match next_breakpoint(cfg, &state, f64::INFINITY, &mut degenerate, rng) {
            Step::Hit(next) => {
                if matches!(next.event, FluidEvent::Emptied { station: 1, .. }) {
                    return CycleOutcome::Completed { end: next, degenerate };
                }
                state = next;
            }
            Step::Reached(_) => unreachable!("infinite horizon"),
            Step::End(end) => return CycleOutcome::Failed(if degenerate { FluidEnd::Stalled } else { end }),
        }
    }
    CycleOutcome::Failed(FluidEnd::Stalled)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CycleGrowth {
    pub mean_log_factor: f64,
    pub ci: (f64, f64),
    pub completed: usize,
    /// Cycles containing a zero-drift segment, left out of the mean.
    pub degenerate: usize,
    pub escaped: usize,
    pub absorbed: usize,
    pub class: StabilityClass,
}

/// Mean of `ln(|x_end| / |x_start|)` over fluid cycles, each started at the
/// section `{x2 = 0}` right after the servers at station 2 have moved on.
/// Every cycle is rescaled to `|x| = 1` first, which the fluid homogeneity
/// permits. After an escape or absorption the walk restarts from `x0`.
/// Class: any escape → transient; otherwise the 95% interval of the mean
/// log factor decides (below 0 stable, containing 0 null-boundary
/// candidate, above 0 transient). With fewer than two usable cycles the
/// class is stable if some cycle was absorbed, inconclusive otherwise.
pub fn cycle_growth_estimate(
    cfg: &PollingConfig,
    x0: [f64; 2],
    assignment0: [Loc; 2],
    cycles: usize,
    rng: &mut RngStream,
) -> Result<CycleGrowth> {
    if cycles < 100 {
        return Err(invalid("cycles", format!("must be ≥ 100, got {cycles}")));
    }
    let mut logs = Vec::with_capacity(cycles);
    let (mut degenerate, mut escaped, mut absorbed) = (0, 0, 0);
    let mut section: Option<FluidState> = None;
    let mut attempts = 0;
    while attempts < cycles {
        let start = match section {
            Some(s) => s,
            None => {
                // reach the section from x0
                let x = x0;
                let init = FluidState {
                    t: 0.0,
                    x,
                    assignment: settle(cfg, x, assignment0, rng),
                    event: FluidEvent::Start,
                };
                match fluid_cycle(cfg, init, rng) {
                    CycleOutcome::Completed { end, .. } => end,
                    CycleOutcome::Failed(e) => {
                        attempts += 1;
                        match e {
                            FluidEnd::Escaped => escaped += 1,
                            FluidEnd::Absorbed => absorbed += 1,
                            _ => degenerate += 1,
                        }
                        continue;
                    }
                }
            }
        };
        let norm = start.x[0] + start.x[1];
        let scaled = FluidState {
            x: [start.x[0] / norm, start.x[1] / norm],
            ..start
        };
        attempts += 1;
        match fluid_cycle(cfg, scaled, rng) {
            CycleOutcome::Completed { end, degenerate: d } => {
                if d {
                    degenerate += 1;
                } else {
                    logs.push((end.x[0] + end.x[1]).ln());
                }
                section = Some(end);
            }
            CycleOutcome::Failed(e) => {
                match e {
                    FluidEnd::Escaped => escaped += 1,
                    FluidEnd::Absorbed => absorbed += 1,
                    _ => degenerate += 1,
                }
                section = None;
            }
        }
    }
    let n = logs.len();
    let mean = if n > 0 {
        logs.iter().sum::<f64>() / n as f64
    } else {
        f64::NAN
    };
    let ci = if n >= 2 {
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let hw = normal_quantile(0.975) * (var / n as f64).sqrt();
        (mean - hw, mean + hw)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let class = if escaped > 0 {
        StabilityClass::Transient
    } else if n < 2 && absorbed > 0 {
        StabilityClass::Stable
    } else if n < 2 {
        StabilityClass::Inconclusive
    } else if ci.1 < 0.0 {
        StabilityClass::Stable
    } else if ci.0 > 0.0 {
        StabilityClass::Transient
    } else {
        StabilityClass::NullBoundaryCandidate
    };
    Ok(CycleGrowth {
        mean_log_factor: mean,
        ci,
        completed: n,
        degenerate,
        escaped,
        absorbed,
        class,
    })
}

/// How the four scan coordinates are read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ParamMode {
    Rate,
    MeanTime,
}

impl std::str::FromStr for ParamMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rate" => Ok(ParamMode::Rate),
            "mean_time" => Ok(ParamMode::MeanTime),
            other => Err(invalid(
                "param_mode",
                format!("expected rate or mean_time, got '{other}'"),
            )),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    /// Cell centre in scan coordinates, ordered `11, 12, 21, 22`.
    pub coords: [f64; 4],
    pub growth: CycleGrowth,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecurrenceScan {
    pub resolution: usize,
    pub mode: ParamMode,
    pub rows: Vec<ScanRow>,
    /// Fraction of cells whose interval contains 0.
    pub null_fraction: f64,
}

/// Fraction of rows whose interval widened by `widen` on each side
/// contains 0.
pub fn null_band_volume(rows: &[ScanRow], widen: f64) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let hits = rows
        .iter()
        .filter(|r| r.growth.completed >= 2 && r.growth.ci.0 - widen <= 0.0 && 0.0 <= r.growth.ci.1 + widen)
        .count();
    hits as f64 / rows.len() as f64
}

/// Cycle-growth classification at the centres `(i + 1/2)/r` of an `r⁴` grid
/// over the unit cube. Cell `c` uses `rng.substream(c)`; every cell starts
/// from `x = (1, 1/2)` with server 1 at station 1 and server 2 at station 2.
pub fn recurrence_scan(resolution: usize, cycles: usize, mode: ParamMode, rng: &RngStream) -> Result<RecurrenceScan> {
    if resolution < 2 {
        return Err(invalid("resolution", format!("must be ≥ 2, got {resolution}")));
    }
    let r = resolution;
    let centre = |i: usize| (i as f64 + 0.5) / r as f64;
    let mut rows = Vec::with_capacity(r.pow(4));
    for c in 0..r.pow(4) {
        let idx = [c / (r * r * r), (c / (r * r)) % r, (c / r) % r, c % r];
        let coords = idx.map(centre);
        let params = [[coords[0], coords[1]], [coords[2], coords[3]]];
        let cfg = match mode {
            ParamMode::Rate => PollingConfig::new(params)?,
            ParamMode::MeanTime => PollingConfig::from_mean_service_times(params)?,
        };
        let growth = cycle_growth_estimate(
            &cfg,
            [1.0, 0.5],
            [Loc::Station(0), Loc::Station(1)],
            cycles,
            &mut rng.substream(c as u64),
        )?;
        rows.push(ScanRow { coords, growth });
    }
    let null_fraction = null_band_volume(&rows, 0.0);
    Ok(RecurrenceScan {
        resolution,
        mode,
        rows,
        null_fraction,
    })
}

impl RecurrenceScan {
    /// CSV with columns `mu11,mu12,mu21,mu22,mean_log_factor,ci_lo,ci_hi,class`.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = CsvWriter::new(out);
        w.comment(&format!(
            "parameters read as {}; class from the fluid cycle log-growth criterion",
            match self.mode {
                ParamMode::Rate => "service rates",
                ParamMode::MeanTime => "mean service times",
            }
        ))?;
        w.header(&[
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
        ])?;
        for row in &self.rows {
            let g = &row.growth;
            w.row(&[
                Cell::F(row.coords[0]),
                Cell::F(row.coords[1]),
                Cell::F(row.coords[2]),
                Cell::F(row.coords[3]),
                Cell::F(g.mean_log_factor),
                Cell::F(g.ci.0),
                Cell::F(g.ci.1),
                Cell::S(g.class.label()),
                Cell::U(g.completed as u64),
                Cell::U(g.degenerate as u64),
                Cell::U(g.escaped as u64),
            ])?;
        }
        Ok(())
    }
}

/// Largest `|q(nt)/n − x(t)|` over the stochastic event times in `[0, t_end]`
/// of a run started from `n·x0`.
pub fn sup_tracking_error(run: &PollingRun, fluid: &FluidPath, n: f64, t_end: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for &(t, a, b) in &run.trajectory {
        let tf = t / n;
        if tf > t_end {
            break;
        }
        let x = fluid.eval(tf);
        worst = worst.max((a as f64 / n - x[0]).abs()).max((b as f64 / n - x[1]).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    const S1: Loc = Loc::Station(0);
    const S2: Loc = Loc::Station(1);

    fn cfg(mu: [[f64; 2]; 2]) -> PollingConfig {
        PollingConfig::new(mu).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(PollingConfig::new([[1.0, 0.0], [1.0, 1.0]]).is_err());
        let c = PollingConfig::from_mean_service_times([[0.5, 0.25], [2.0, 1.0]]).unwrap();
        assert_eq!(c.mu, [[2.0, 4.0], [0.5, 1.0]]);
        assert!(!c.all_below_one());
    }

    #[test]
    fn rate_arithmetic() {
        let c = cfg([[0.3, 0.4], [0.6, 0.7]]);
        assert_eq!(net_rates(&c, &[S1, S2]), [1.0 - 0.3, 1.0 - 0.7]);
        assert_eq!(net_rates(&c, &[S1, S1]), [1.0 - 0.3 - 0.4, 1.0]);
        let p = fluid_trajectory(&c, [1.0, 1.0], [S1, S2], 2.0, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(p.end, FluidEnd::Horizon);
        assert_eq!(p.breakpoints[1].x, [1.0 + 2.0 * 0.7, 1.0 + 2.0 * (1.0 - 0.7)]);
    }

    #[test]
    fn zero_drift_is_flagged() {
        let c = cfg([[0.5, 0.5], [1.0, 1.0]]);
        let p = fluid_trajectory(&c, [1.0, 0.0], [S1, S1], f64::INFINITY, &mut RngStream::new(0, 0)).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.end, FluidEnd::Escaped);
        assert_eq!(p.breakpoints.len(), 1);
    }

    #[test]
    fn levels_stay_non_negative_and_breakpoints_hit_zero() {
        let c = cfg([[1.5, 1.2], [1.4, 1.3]]);
        let p = fluid_trajectory(&c, [1.0, 0.5], [S1, S2], 50.0, &mut RngStream::new(3, 0)).unwrap();
        for b in &p.breakpoints {
            assert!(b.x[0] >= 0.0 && b.x[1] >= 0.0);
            if let FluidEvent::Emptied { station, .. } = b.event {
                assert_eq!(b.x[station], 0.0);
            }
        }
    }

    #[test]
    fn race_probability() {
        let c = cfg([[2.0, 1.0], [3.0, 3.0]]);
        let n = 10_000;
        let mut first0 = 0;
        for r in 0..n {
            let p = fluid_trajectory(&c, [1.0, 0.5], [S1, S1], f64::INFINITY, &mut RngStream::new(1, r)).unwrap();
            let ev = p.breakpoints.iter().find_map(|b| match b.event {
                FluidEvent::Emptied { station: 0, first, .. } => first,
                _ => None,
            });
            first0 += (ev == Some(0)) as usize;
        }
        assert!((first0 as f64 / n as f64 - 2.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn homogeneity_is_exact() {
        let c = cfg([[1.7, 0.6], [0.9, 1.9]]);
        for seed in 0..20 {
            let base = fluid_trajectory(&c, [0.7, 0.3], [S1, S2], 40.0, &mut RngStream::new(seed, 0)).unwrap();
            for scale in [2.0, 8.0, 0.25] {
                let p = fluid_trajectory(
                    &c,
                    [0.7 * scale, 0.3 * scale],
                    [S1, S2],
                    40.0 * scale,
                    &mut RngStream::new(seed, 0),
                )
                .unwrap();
                assert_eq!(p.breakpoints.len(), base.breakpoints.len());
                for (a, b) in base.breakpoints.iter().zip(&p.breakpoints) {
                    assert_eq!(a.t * scale, b.t);
                    assert_eq!([a.x[0] * scale, a.x[1] * scale], b.x);
                    assert_eq!(a.assignment, b.assignment);
                }
            }
        }
    }

    #[test]
    fn strong_servers_contract() {
        let c = cfg([[10.0; 2]; 2]);
        let g = cycle_growth_estimate(&c, [1.0, 0.5], [S1, S2], 200, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(g.class, StabilityClass::Stable);
        assert!(g.mean_log_factor < -1.0);
        assert!(cycle_growth_estimate(&c, [1.0, 1.0], [S1, S2], 99, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn scan_resolution_two() {
        let scan = recurrence_scan(2, 100, ParamMode::Rate, &RngStream::new(0, 0)).unwrap();
        assert_eq!(scan.rows.len(), 16);
        // with every rate below one each lone server falls behind
        assert!(scan.rows.iter().all(|r| r.growth.class == StabilityClass::Transient));
        let mut last = 0.0;
        for w in [0.0, 0.1, 1.0, 10.0, f64::INFINITY] {
            let v = null_band_volume(&scan.rows, w);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn light_traffic_queues_stay_small() {
        let c = cfg([[10.0; 2]; 2]);
        let run = polling_simulate(&c, PollingState::empty(), 20_000.0, &mut RngStream::new(0, 0)).unwrap();
        assert!(run.time_average(0) < 1.0);
    }

    #[test]
    fn state_construction() {
        let s = PollingState::new([5, 0], [S1, S2]).unwrap();
        assert_eq!(s.loc, [S1, Loc::Passive]);
        assert!(s.is_valid());
        assert_eq!(s.unserved(0), 4);
    }

    #[test]
    fn stochastic_path_tracks_fluid() {
        let c = cfg([[3.0, 2.0], [2.5, 3.5]]);
        let n = 100_000.0;
        let fluid = fluid_trajectory(&c, [1.0, 0.5], [S1, S2], f64::INFINITY, &mut RngStream::new(0, 0));
        let fluid = fluid.unwrap();
        let ends: Vec<f64> = fluid
            .breakpoints
            .iter()
            .filter(|b| matches!(b.event, FluidEvent::Emptied { station: 1, .. }))
            .map(|b| b.t)
            .collect();
        let t_end = ends[1];
        let init = PollingState::new([100_000, 50_000], [S1, S2]).unwrap();
        let run = polling_simulate(&c, init, t_end * n, &mut RngStream::new(1, 0)).unwrap();
        let err = sup_tracking_error(&run, &fluid, n, t_end);
        assert!(err < 0.03, "{err}");
    }
}
