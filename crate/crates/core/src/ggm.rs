//! Multi-server FCFS queue through the Kiefer–Wolfowitz workload vector,
//! stationary waiting-time estimation, the moment condition for the
//! stationary wait and heavy-tail experiments.

use std::fmt;
use std::io::{self, Write};

use serde::Serialize;

use crate::diagnostics::{
    batch_means_ci, default_hill_k, least_squares, tail_index_hill, EstimateWithCI, RegenerativeAccumulator,
};
use crate::error::{invalid, Result};
use crate::output::{Cell, CsvWriter};
use crate::stochastic::{traffic_intensity, DistributionKind, DistributionSpec, InputProcess, Rho, RngStream};

/// Below this many customers above a level the tail estimate is flagged.
pub const MIN_TAIL_HITS: u64 = 10;
/// Batches used when no regenerative structure is available.
pub const FALLBACK_BATCHES: usize = 20;

/// Residual workloads of the `m` servers, sorted ascending. `w[0]` is the
/// wait of the next arriving customer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorkloadVector(Vec<f64>);

impl WorkloadVector {
    pub fn zeros(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("servers", "must be ≥ 1"));
        }
        Ok(Self(vec![0.0; m]))
    }

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(invalid("servers", "must be ≥ 1"));
        }
        if w.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
            return Err(invalid("workload", "entries must be finite and ≥ 0"));
        }
        if w.windows(2).any(|p| p[0] > p[1]) {
            return Err(invalid("workload", "entries must be sorted ascending"));
        }
        Ok(Self(w))
    }

    pub fn servers(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn next_wait(&self) -> f64 {
        self.0[0]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|&x| x >= 0.0) && self.0.windows(2).all(|p| p[0] <= p[1])
    }

    /// Coordinate-wise `self ≤ other`.
    pub fn dominated_by(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn step(&mut self, sigma: f64, t: f64) {
        kw_step_in_place(&mut self.0, sigma, t);
    }
}

/// `R(w + e₁σ − 1t)^+` on a sorted slice, in place.
#[inline]
pub fn kw_step_in_place(w: &mut [f64], sigma: f64, t: f64) {
    // same operation order as lindley_step so m = 1 agrees bit for bit
    let head = (w[0] + sigma - t).max(0.0);
    let mut i = 1;
    while i < w.len() {
        let v = (w[i] - t).max(0.0);
        if v >= head {
            break;
        }
        w[i - 1] = v;
        i += 1;
    }
    w[i - 1] = head;
    for x in &mut w[i..] {
        *x = (*x - t).max(0.0);
    }
}

pub fn kw_step(w: &WorkloadVector, sigma: f64, t: f64) -> WorkloadVector {
    let mut next = w.clone();
    next.step(sigma, t);
    next
}

/// Positive waits of one run together with its regeneration epochs.
#[derive(Clone, Debug)]
struct KwRecord {
    customers: u64,
    /// Customer indices at which the vector was zero; starts with 0.
    regenerations: Vec<u64>,
    positive_index: Vec<u64>,
    positive_wait: Vec<f64>,
}

impl KwRecord {
    fn complete_cycles(&self) -> usize {
        self.regenerations.len() - 1
    }

    /// Estimate of `E f(D)` for `f` vanishing at 0.
    fn estimate(&self, f: impl Fn(f64) -> f64, level: f64) -> Result<EstimateWithCI> {
        if self.complete_cycles() >= 2 {
            let mut acc = RegenerativeAccumulator::default();
            let mut j = 0;
            for c in self.regenerations.windows(2) {
                let mut sum = 0.0;
                while j < self.positive_index.len() && self.positive_index[j] < c[1] {
                    sum += f(self.positive_wait[j]);
                    j += 1;
                }
                acc.push(sum, (c[1] - c[0]) as f64);
            }
            return acc.finish(level);
        }
        let warmup = self.customers / 10;
        let size = (self.customers - warmup) / FALLBACK_BATCHES as u64;
        if size == 0 {
            return Err(invalid("customers", "too few customers for batch means"));
        }
        let mut sums = [0.0; FALLBACK_BATCHES];
        for (&i, &w) in self.positive_index.iter().zip(&self.positive_wait) {
            if i >= warmup {
                let b = ((i - warmup) / size) as usize;
                if b < FALLBACK_BATCHES {
                    sums[b] += f(w);
                }
            }
        }
        let means: Vec<f64> = sums.iter().map(|s| s / size as f64).collect();
        let mut est = batch_means_ci(&means, FALLBACK_BATCHES, level)?;
        est.low_confidence = true;
        Ok(est)
    }

    fn exceedances(&self, x: f64) -> u64 {
        self.positive_wait.iter().filter(|&&w| w > x).count() as u64
    }
}

fn check_iid_stable(process: &InputProcess, m: usize) -> Result<f64> {
    if !process.is_iid() {
        return Err(invalid("dependence", "regenerative estimation needs i.i.d. input"));
    }
    let ti = traffic_intensity(process, m)?;
    match ti.rho {
        Rho::Finite(rho) if ti.stable => Ok(rho),
        Rho::Finite(rho) => Err(invalid("rho", format!("ρ = {rho} is not below m = {m}"))),
        Rho::Infinite => Err(invalid("rho", "infinite traffic intensity")),
    }
}

fn run_kw(process: &InputProcess, m: usize, customers: usize, rng: &mut RngStream) -> Result<KwRecord> {
    if customers == 0 {
        return Err(invalid("customers", "must be ≥ 1"));
    }
    let mut w = WorkloadVector::zeros(m)?;
    let mut driver = process.driver();
    let mut rec = KwRecord {
        customers: customers as u64,
        regenerations: Vec::new(),
        positive_index: Vec::new(),
        positive_wait: Vec::new(),
    };
    for n in 0..customers as u64 {
        if n > 0 {
            let (sigma, t) = driver.next_pair(rng);
            w.step(sigma, t);
        }
        let d = w.next_wait();
        if d > 0.0 {
            rec.positive_index.push(n);
            rec.positive_wait.push(d);
        } else if w.is_zero() {
            rec.regenerations.push(n);
        }
    }
    Ok(rec)
}

#[derive(Clone, Debug, Serialize)]
pub struct TailPoint {
    pub x: f64,
    pub estimate: EstimateWithCI,
    pub exceedances: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StationaryWaitEstimate {
    pub servers: usize,
    pub customers: u64,
    pub rho: f64,
    pub mean: EstimateWithCI,
    pub tails: Vec<TailPoint>,
    pub complete_cycles: usize,
}

/// Estimates `E D` and `P(D > x)` at the given levels from one run started
/// empty. Cycles are delimited by arrivals that find every server idle;
/// with fewer than two complete cycles the run falls back to flagged batch
/// means after a 10% burn-in.
pub fn estimate_stationary_wait(
    process: &InputProcess,
    m: usize,
    customers: usize,
    levels: &[f64],
    rng: &mut RngStream,
) -> Result<StationaryWaitEstimate> {
    let rho = check_iid_stable(process, m)?;
    let rec = run_kw(process, m, customers, rng)?;
    let mean = rec.estimate(|w| w, 0.95)?;
    let mut tails = Vec::with_capacity(levels.len());
    for &x in levels {
        let mut estimate = rec.estimate(|w| if w > x { 1.0 } else { 0.0 }, 0.95)?;
        let exceedances = rec.exceedances(x);
        estimate.low_confidence |= exceedances < MIN_TAIL_HITS;
        tails.push(TailPoint {
            x,
            estimate,
            exceedances,
        });
    }
    Ok(StationaryWaitEstimate {
        servers: m,
        customers: customers as u64,
        rho,
        mean,
        tails,
        complete_cycles: rec.complete_cycles(),
    })
}

/// Backward vectors `M_0, …, M_n` started from the zero vector: `M_j` is the
/// workload seen at time 0 when the empty system is started at time `−j`.
/// Quadratic in `n`; used only to check monotonicity.
pub fn loynes_backward_vectors(
    process: &InputProcess,
    m: usize,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<WorkloadVector>> {
    let zero = WorkloadVector::zeros(m)?;
    let mut driver = process.driver();
    // pairs[i] drives the step from time −(i+1) to −i
    let pairs: Vec<(f64, f64)> = (0..n).map(|_| driver.next_pair(rng)).collect();
    let mut out = Vec::with_capacity(n + 1);
    out.push(zero.clone());
    for j in 1..=n {
        let mut v = zero.clone();
        for &(sigma, t) in pairs[..j].iter().rev() {
            v.step(sigma, t);
        }
        out.push(v);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MomentVerdict {
    Finite,
    Infinite,
    IntegerRhoOpen,
    Unknown,
}

impl fmt::Display for MomentVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MomentVerdict::Finite => "finite",
            MomentVerdict::Infinite => "infinite",
            MomentVerdict::IntegerRhoOpen => "integer_rho_open",
            MomentVerdict::Unknown => "unknown",
        })
    }
}

/// Decides whether `E D^γ < ∞` through the moment of the minimum of
/// `m − ⌊ρ⌋` i.i.d. integrated-tail variables, whose tail is
/// `(B̄_I(x))^{m−⌊ρ⌋}`.
pub fn moment_condition_check(service: &DistributionSpec, rho: f64, m: usize, gamma: f64) -> Result<MomentVerdict> {
    if m == 0 {
        return Err(invalid("servers", "must be ≥ 1"));
    }
    if !(rho > 0.0 && rho < m as f64) {
        return Err(invalid("rho", format!("must lie in (0, {m}), got {rho}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    if rho.fract() == 0.0 {
        return Ok(MomentVerdict::IntegerRhoOpen);
    }
    let j = (m - rho.floor() as usize) as f64;
    Ok(match service.kind() {
        // B̄_I(x) ~ c·x^{1−α}, so the minimum has tail ~ x^{−j(α−1)}
        DistributionKind::Pareto { alpha, .. } => {
            if *alpha <= 1.0 || gamma >= j * (alpha - 1.0) {
                MomentVerdict::Infinite
            } else {
                MomentVerdict::Finite
            }
        }
        DistributionKind::Deterministic { .. }
        | DistributionKind::Uniform { .. }
        | DistributionKind::Exponential { .. }
        | DistributionKind::WeibullTail { .. } => MomentVerdict::Finite,
        // a finite sample stands in for an unknown law
        DistributionKind::Empirical { .. } => MomentVerdict::Unknown,
    })
}

#[derive(Clone, Debug)]
pub struct WhittOptions {
    pub eta: f64,
    /// Geometric levels from `E σ` up to the 20th largest wait when empty.
    pub levels: Vec<f64>,
    pub auto_levels: usize,
    pub customers: usize,
    /// Order statistics for the Hill estimator; `n^{2/3}` of the positive
    /// waits when `None`.
    pub hill_k: Option<usize>,
}

impl Default for WhittOptions {
    fn default() -> Self {
        Self {
            eta: 1.0,
            levels: Vec::new(),
            auto_levels: 12,
            customers: 1_000_000,
            hill_k: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WhittLevel {
    pub x: f64,
    pub estimate: EstimateWithCI,
    pub exceedances: u64,
    /// `(B̄_I(ηx))^{m−k}`.
    pub reference: f64,
    /// `P̂(D > x) / reference`.
    pub ratio: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailExperimentResult {
    pub servers: usize,
    pub rho: f64,
    pub k: usize,
    pub eta: f64,
    pub customers: u64,
    pub integer_rho: bool,
    pub levels: Vec<WhittLevel>,
    /// Least-squares slope of `ln P̂(D > x)` on `ln x` over unflagged levels.
    pub loglog_slope: Option<f64>,
    /// Hill estimate of the tail index of `D` from the positive waits.
    pub hill: Option<EstimateWithCI>,
    pub complete_cycles: usize,
}

fn geometric_levels(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 0 || !(hi > lo && lo > 0.0) {
        return vec![lo];
    }
    if count == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (r * i as f64).exp()).collect()
}

/// Estimates the tail of `D` and compares it with `(B̄_I(ηx))^{m−k}`,
/// `k = ⌊ρ⌋`, where `B̄_I` is the integrated tail of `service`. The ratio
/// series is reported raw; integer `ρ` runs without any assertion.
pub fn whitt_tail_experiment(
    service: &DistributionSpec,
    process: &InputProcess,
    m: usize,
    opts: &WhittOptions,
    rng: &mut RngStream,
) -> Result<TailExperimentResult> {
    if !(opts.eta > 0.0 && opts.eta.is_finite()) {
        return Err(invalid("eta", format!("must be positive, got {}", opts.eta)));
    }
    let rho = check_iid_stable(process, m)?;
    let k = rho.floor() as usize;
    let exponent = (m - k) as i32;
    let rec = run_kw(process, m, opts.customers, rng)?;

    let levels = if opts.levels.is_empty() {
        let mut top = rec.positive_wait.clone();
        let hi = if top.len() >= 20 {
            top.select_nth_unstable_by(19, |a, b| b.total_cmp(a));
            top[19]
        } else {
            0.0
        };
        geometric_levels(service.mean(), hi, opts.auto_levels)
    } else {
        let mut l = opts.levels.clone();
        l.sort_by(f64::total_cmp);
        l
    };

    let mut out = Vec::with_capacity(levels.len());
    for &x in &levels {
        let estimate = rec.estimate(|w| if w > x { 1.0 } else { 0.0 }, 0.95)?;
        let exceedances = rec.exceedances(x);
        let reference = service.integrated_tail(opts.eta * x).powi(exponent);
        let flagged = exceedances < MIN_TAIL_HITS || estimate.low_confidence;
        out.push(WhittLevel {
            x,
            estimate,
            exceedances,
            reference,
            ratio: estimate.point / reference,
            flagged,
        });
    }

    let pts: Vec<(f64, f64)> = out
        .iter()
        .filter(|l| !l.flagged && l.x > 0.0 && l.estimate.point > 0.0)
        .map(|l| (l.x.ln(), l.estimate.point.ln()))
        .collect();
    let loglog_slope = (pts.len() >= 2).then(|| least_squares(&pts).0);

    let n_pos = rec.positive_wait.len();
    let hill_k = opts.hill_k.unwrap_or_else(|| default_hill_k(n_pos));
    let hill = tail_index_hill(&rec.positive_wait, hill_k, 0.95).ok();

    Ok(TailExperimentResult {
        servers: m,
        rho,
        k,
        eta: opts.eta,
        customers: opts.customers as u64,
        integer_rho: rho.fract() == 0.0,
        levels: out,
        loglog_slope,
        hill,
        complete_cycles: rec.complete_cycles(),
    })
}

impl TailExperimentResult {
    /// CSV with columns `x,p_hat,ci_lo,ci_hi,reference,ratio`.
    pub fn write_csv<W: Write>(&self, out: W, metadata: &[String]) -> io::Result<()> {
        let mut w = CsvWriter::new(out);
        for line in metadata {
            w.comment(line)?;
        }
        w.header(&["x", "p_hat", "ci_lo", "ci_hi", "reference", "ratio", "flagged"])?;
        for l in &self.levels {
            w.row(&[
                Cell::F(l.x),
                Cell::F(l.estimate.point),
                Cell::F(l.estimate.lower),
                Cell::F(l.estimate.upper),
                Cell::F(l.reference),
                Cell::F(l.ratio),
                Cell::B(l.flagged),
            ])?;
        }
        Ok(())
    }
}
