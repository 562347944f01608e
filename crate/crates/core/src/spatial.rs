//! Continuous-space models on a circle: a greedy server travelling to a
//! Poisson rain of particles, and black/white particle annihilation.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use serde::Serialize;

use crate::diagnostics::{drift_classify, resample_on_grid, StabilityVerdict};
use crate::error::{invalid, Result};
use crate::output::{Cell, CsvWriter};
use crate::stochastic::RngStream;

/// Substream of the simulation stream that feeds direction coins.
const COIN_SUBSTREAM: u64 = 0x636f_696e;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Topology {
    Continuous,
    Lattice(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Policy {
    /// Closest particle, ties toward increasing position.
    Greedy,
    /// First particle met moving toward decreasing position.
    AlwaysLeft,
    /// First particle met in a direction chosen by a fair coin.
    RandomDirection,
}

impl Policy {
    pub fn label(self) -> &'static str {
        match self {
            Policy::Greedy => "greedy",
            Policy::AlwaysLeft => "always_left",
            Policy::RandomDirection => "random_direction",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Policy {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "greedy" => Ok(Policy::Greedy),
            "always_left" => Ok(Policy::AlwaysLeft),
            "random_direction" => Ok(Policy::RandomDirection),
            other => Err(invalid("policy", format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CircleConfig {
    pub circumference: f64,
    pub speed: f64,
    pub lambda: f64,
    pub topology: Topology,
    pub policy: Policy,
}

impl CircleConfig {
    /// `λ = 0` is accepted: the server then idles forever.
    pub fn new(circumference: f64, speed: f64, lambda: f64, topology: Topology, policy: Policy) -> Result<Self> {
        if !(circumference > 0.0 && circumference.is_finite()) {
            return Err(invalid(
                "circumference",
                format!("must be positive, got {circumference}"),
            ));
        }
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(invalid("speed", format!("must be positive, got {speed}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be ≥ 0, got {lambda}")));
        }
        if topology == Topology::Lattice(0) {
            return Err(invalid("sites", "lattice needs N ≥ 1"));
        }
        Ok(Self {
            circumference,
            speed,
            lambda,
            topology,
            policy,
        })
    }

    fn draw_position(&self, rng: &mut RngStream) -> f64 {
        let l = self.circumference;
        match self.topology {
            Topology::Continuous => {
                let p = rng.uniform() * l;
                if p >= l {
                    0.0
                } else {
                    p
                }
            }
            Topology::Lattice(n) => {
                let site = ((rng.uniform() * n as f64) as usize).min(n - 1);
                site as f64 * l / n as f64
            }
        }
    }
}

/// Offset travelled from `from` to `to` in the direction of increasing
/// position.
fn forward_offset(from: f64, to: f64, l: f64) -> f64 {
    if to >= from {
        to - from
    } else {
        to - from + l
    }
}

pub fn circular_distance(a: f64, b: f64, l: f64) -> f64 {
    let d = (a - b).abs();
    d.min(l - d)
}

/// Particle at minimal circular distance from `pos`; on a tie the one with
/// the smaller offset in the direction of increasing position wins.
pub fn nearest_particle(pos: f64, particles: &[f64], l: f64) -> Option<f64> {
    let mut best: Option<(f64, f64, f64)> = None;
    for &p in particles {
        let key = (circular_distance(pos, p, l), forward_offset(pos, p, l));
        match best {
            Some((d, o, _)) if (d, o) <= key => {}
            _ => best = Some((key.0, key.1, p)),
        }
    }
    best.map(|b| b.2)
}

/// Particles ordered by position; coincident particles by arrival order.
#[derive(Clone, Debug, Default)]
pub struct ParticleSet {
    map: BTreeMap<(u64, u64), f64>,
    next_seq: u64,
}

/// Handle of a particle in a [`ParticleSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParticleKey(u64, u64);

impl ParticleKey {
    pub fn position(self) -> f64 {
        f64::from_bits(self.0)
    }
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `pos` must be a non-negative position.
    pub fn insert(&mut self, pos: f64, arrival: f64) -> ParticleKey {
        let key = (pos.to_bits(), self.next_seq);
        self.next_seq += 1;
        self.map.insert(key, arrival);
        ParticleKey(key.0, key.1)
    }

    pub fn remove(&mut self, key: ParticleKey) -> Option<f64> {
        self.map.remove(&(key.0, key.1))
    }

    pub fn arrival(&self, key: ParticleKey) -> Option<f64> {
        self.map.get(&(key.0, key.1)).copied()
    }

    /// First particle met moving toward increasing position, including any
    /// at `pos` itself.
    pub fn clockwise(&self, pos: f64) -> Option<ParticleKey> {
        self.map
            .range((pos.to_bits(), 0)..)
            .next()
            .or_else(|| self.map.iter().next())
            .map(|(k, _)| ParticleKey(k.0, k.1))
    }

    /// First particle met moving toward decreasing position, including any
    /// at `pos` itself; the earliest arrival among coincident ones.
    pub fn counter_clockwise(&self, pos: f64) -> Option<ParticleKey> {
        let (k, _) = self
            .map
            .range(..=(pos.to_bits(), u64::MAX))
            .next_back()
            .or_else(|| self.map.iter().next_back())?;
        let (k, _) = self.map.range((k.0, 0)..).next()?;
        Some(ParticleKey(k.0, k.1))
    }

    /// Same rule as [`nearest_particle`].
    pub fn nearest(&self, pos: f64, l: f64) -> Option<ParticleKey> {
        let cw = self.clockwise(pos)?;
        let ccw = self.counter_clockwise(pos)?;
        let key = |k: ParticleKey| {
            (
                circular_distance(pos, k.position(), l),
                forward_offset(pos, k.position(), l),
            )
        };
        let (key_cw, key_ccw) = (key(cw), key(ccw));
        Some(if key_cw <= key_ccw { cw } else { ccw })
    }

    pub fn positions(&self) -> Vec<f64> {
        self.map.keys().map(|k| f64::from_bits(k.0)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase {
    Idle,
    Traveling { target: ParticleKey, arrive_at: f64 },
    Serving { particle: ParticleKey, done_at: f64 },
}

#[derive(Clone, Debug)]
pub struct SpatialState {
    pub server_pos: f64,
    pub particles: ParticleSet,
    pub phase: Phase,
    pub clock: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GreedyRun {
    /// `(time, particle count)` at every arrival and service completion.
    pub trajectory: Vec<(f64, f64)>,
    pub arrivals: u64,
    pub served: u64,
    /// Customers whose service started.
    pub started: u64,
    /// Sum of waits (arrival to start of service) over started customers.
    pub wait_sum: f64,
    pub horizon: f64,
}

impl GreedyRun {
    pub fn mean_wait(&self) -> f64 {
        if self.started == 0 {
            0.0
        } else {
            self.wait_sum / self.started as f64
        }
    }

    pub fn final_count(&self) -> u64 {
        self.arrivals - self.served
    }
}

fn select_target(cfg: &CircleConfig, s: &SpatialState, coins: &mut RngStream) -> Option<(ParticleKey, f64)> {
    let l = cfg.circumference;
    let pos = s.server_pos;
    let (key, dist) = match cfg.policy {
        Policy::Greedy => {
            let k = s.particles.nearest(pos, l)?;
            (k, circular_distance(pos, k.position(), l))
        }
        Policy::AlwaysLeft => {
            let k = s.particles.counter_clockwise(pos)?;
            (k, forward_offset(k.position(), pos, l))
        }
        Policy::RandomDirection => {
            if s.particles.is_empty() {
                return None;
            }
            if coins.coin() {
                let k = s.particles.clockwise(pos)?;
                (k, forward_offset(pos, k.position(), l))
            } else {
                let k = s.particles.counter_clockwise(pos)?;
                (k, forward_offset(k.position(), pos, l))
            }
        }
    };
    let dist = if dist >= l { 0.0 } else { dist };
    Some((key, dist / cfg.speed))
}

/// Event-driven run over `[0, horizon]` from an empty circle with the server
/// at position 0. Service lasts one time unit; the next target is chosen
/// only when the server becomes free, and an idle server heads for the
/// first arrival. Each arrival consumes an exponential gap and a position
/// from `rng`; direction coins come from a substream.
pub fn greedy_server_simulate(cfg: &CircleConfig, horizon: f64, rng: &mut RngStream) -> Result<GreedyRun> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    let mut coins = rng.substream(COIN_SUBSTREAM);
    let mut s = SpatialState {
        server_pos: 0.0,
        particles: ParticleSet::default(),
        phase: Phase::Idle,
        clock: 0.0,
    };
    let mut run = GreedyRun {
        trajectory: vec![(0.0, 0.0)],
        arrivals: 0,
        served: 0,
        started: 0,
        wait_sum: 0.0,
        horizon,
    };
    let mut next_arrival = if cfg.lambda > 0.0 {
        rng.exponential(cfg.lambda)
    } else {
        f64::INFINITY
    };
    loop {
        let phase_time = match s.phase {
            Phase::Idle => f64::INFINITY,
            Phase::Traveling { arrive_at, .. } => arrive_at,
            Phase::Serving { done_at, .. } => done_at,
        };
        // phase changes win ties so a completion is recorded before an arrival
        let now = phase_time.min(next_arrival);
        if now > horizon {
            break;
        }
        s.clock = now;
        if phase_time <= next_arrival {
            match s.phase {
                Phase::Traveling { target, .. } => {
                    s.server_pos = target.position();
                    let arrived = s.particles.arrival(target).expect("target particle present");
                    run.started += 1;
                    run.wait_sum += now - arrived;
                    s.phase = Phase::Serving {
                        particle: target,
                        done_at: now + 1.0,
                    };
                }
                Phase::Serving { particle, .. } => {
                    s.particles.remove(particle);
                    run.served += 1;
                    run.trajectory.push((now, s.particles.len() as f64));
                    s.phase = Phase::Idle;
                }
                Phase::Idle => unreachable!(),
            }
        } else {
            let pos = cfg.draw_position(rng);
            s.particles.insert(pos, now);
            run.arrivals += 1;
            run.trajectory.push((now, s.particles.len() as f64));
            next_arrival = now + rng.exponential(cfg.lambda);
        }
        if s.phase == Phase::Idle {
            if let Some((target, travel)) = select_target(cfg, &s, &mut coins) {
                s.phase = Phase::Traveling {
                    target,
                    arrive_at: now + travel,
                };
            }
        }
        debug_assert_eq!(run.arrivals - run.served, s.particles.len() as u64);
    }
    Ok(run)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnnihilationConfig {
    pub circumference: f64,
    pub lambda: f64,
    pub epsilon: f64,
}

impl AnnihilationConfig {
    pub fn new(circumference: f64, lambda: f64, epsilon: f64) -> Result<Self> {
        if !(circumference > 0.0 && circumference.is_finite()) {
            return Err(invalid(
                "circumference",
                format!("must be positive, got {circumference}"),
            ));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be ≥ 0, got {lambda}")));
        }
        if !(epsilon > 0.0) {
            return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        Ok(Self {
            circumference,
            lambda,
            epsilon,
        })
    }
}

/// Nearest black within circular distance `ε` of a white landing at `pos`.
pub fn annihilation_target(blacks: &ParticleSet, pos: f64, cfg: &AnnihilationConfig) -> Option<ParticleKey> {
    let k = blacks.nearest(pos, cfg.circumference)?;
    (circular_distance(pos, k.position(), cfg.circumference) <= cfg.epsilon).then_some(k)
}

#[derive(Clone, Debug, Serialize)]
pub struct AnnihilationRun {
    /// `(time, black count)` at every change.
    pub trajectory: Vec<(f64, f64)>,
    pub black_arrivals: u64,
    pub deletions: u64,
    pub horizon: f64,
}

/// Blacks (rate λ) and whites (rate 1) as one Poisson(λ + 1) stream; each
/// event consumes a gap, a type uniform and a position.
pub fn annihilation_simulate(cfg: &AnnihilationConfig, horizon: f64, rng: &mut RngStream) -> Result<AnnihilationRun> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    let l = cfg.circumference;
    let total = cfg.lambda + 1.0;
    let p_black = cfg.lambda / total;
    let mut blacks = ParticleSet::default();
    let mut run = AnnihilationRun {
        trajectory: vec![(0.0, 0.0)],
        black_arrivals: 0,
        deletions: 0,
        horizon,
    };
    let mut now = 0.0;
    loop {
        now += rng.exponential(total);
        if now > horizon {
            break;
        }
        let black = rng.uniform() < p_black;
        let pos = {
            let p = rng.uniform() * l;
            if p >= l {
                0.0
            } else {
                p
            }
        };
        if black {
            blacks.insert(pos, now);
            run.black_arrivals += 1;
        } else if let Some(k) = annihilation_target(&blacks, pos, cfg) {
            blacks.remove(k);
            run.deletions += 1;
        } else {
            continue;
        }
        run.trajectory.push((now, blacks.len() as f64));
        debug_assert_eq!(run.black_arrivals - run.deletions, blacks.len() as u64);
    }
    Ok(run)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ScanModel {
    GreedyServer { policy: Policy, topology: Topology },
    Annihilation,
}

/// One parameter cell; `v_or_eps` is the speed or the deletion radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanCell {
    pub lambda: f64,
    pub circumference: f64,
    pub v_or_eps: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub cell: ScanCell,
    pub policy: String,
    pub verdict: StabilityVerdict,
    /// Replication-averaged count at the horizon.
    pub final_mean_count: f64,
}

/// Grid points per trajectory handed to the drift classifier.
pub const SCAN_GRID_POINTS: usize = 2000;
pub const SCAN_WINDOW: usize = 100;

/// Runs `reps` paths per cell, averages their counts on a regular time grid
/// and classifies the averaged path. Cell `c`, replication `r` uses
/// `rng.substream(c).substream(r)`.
pub fn stability_scan(
    model: ScanModel,
    cells: &[ScanCell],
    horizon: f64,
    reps: usize,
    rng: &RngStream,
) -> Result<Vec<ScanRow>> {
    if cells.is_empty() {
        return Err(invalid("grid", "needs at least one cell"));
    }
    if reps == 0 {
        return Err(invalid("replications", "must be ≥ 1"));
    }
    let mut rows = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let cell_rng = rng.substream(c as u64);
        let mut avg = vec![0.0; SCAN_GRID_POINTS];
        for r in 0..reps {
            let mut stream = cell_rng.substream(r as u64);
            let path = match model {
                ScanModel::GreedyServer { policy, topology } => {
                    let cfg = CircleConfig::new(cell.circumference, cell.v_or_eps, cell.lambda, topology, policy)?;
                    greedy_server_simulate(&cfg, horizon, &mut stream)?.trajectory
                }
                ScanModel::Annihilation => {
                    let cfg = AnnihilationConfig::new(cell.circumference, cell.lambda, cell.v_or_eps)?;
                    annihilation_simulate(&cfg, horizon, &mut stream)?.trajectory
                }
            };
            for (a, (_, y)) in avg
                .iter_mut()
                .zip(resample_on_grid(&path, 0.0, 0.0, horizon, SCAN_GRID_POINTS))
            {
                *a += y / reps as f64;
            }
        }
        let grid: Vec<(f64, f64)> = avg
            .iter()
            .enumerate()
            .map(|(i, &y)| (horizon * i as f64 / (SCAN_GRID_POINTS - 1) as f64, y))
            .collect();
        let policy = match model {
            ScanModel::GreedyServer { policy, .. } => policy.label().to_string(),
            ScanModel::Annihilation => "annihilation".to_string(),
        };
        rows.push(ScanRow {
            cell: *cell,
            policy,
            verdict: drift_classify(&grid, SCAN_WINDOW),
            final_mean_count: avg[SCAN_GRID_POINTS - 1],
        });
    }
    Ok(rows)
}

/// CSV with columns `lambda,L,v_or_eps,policy,verdict,slope,slope_ci_lo,slope_ci_hi`.
pub fn write_scan_csv<W: Write>(rows: &[ScanRow], out: W) -> io::Result<()> {
    let mut w = CsvWriter::new(out);
    w.header(&[
        "lambda",
        "L",
        "v_or_eps",
        "policy",
        "verdict",
        "slope",
        "slope_ci_lo",
        "slope_ci_hi",
    ])?;
    for r in rows {
        w.row(&[
            Cell::F(r.cell.lambda),
            Cell::F(r.cell.circumference),
            Cell::F(r.cell.v_or_eps),
            Cell::S(&r.policy),
            Cell::S(r.verdict.class.label()),
            Cell::F(r.verdict.slope),
            Cell::F(r.verdict.slope_ci.0),
            Cell::F(r.verdict.slope_ci.1),
        ])?;
    }
    Ok(())
}

/// CSV with columns `t,count`.
pub fn write_trajectory_csv<W: Write>(path: &[(f64, f64)], out: W) -> io::Result<()> {
    let mut w = CsvWriter::new(out);
    w.header(&["t", "count"])?;
    for &(t, y) in path {
        w.row(&[Cell::F(t), Cell::U(y as u64)])?;
    }
    Ok(())
}
