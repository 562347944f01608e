//! Single-server FCFS queue: the forward Lindley recursion, the Loynes
//! backward scheme, coupling times and the coupling bound on the
//! total-variation distance to stationarity.
//!
//! Indexing: `W_1 = x` is the wait of the first customer and
//! `W_{k+1} = (W_k + σ_k − t_k)^+`. The backward maximum
//! `M_n^(x) = max(0, x + S̃_n, S̃_{n−1}, …, S̃_1)` is built from `n`
//! increments, so it has the law of `W_{n+1}` (and `M_0^(x) = x = W_1`).

use std::io::{self, Write};

use crate::diagnostics::{wilson_interval, EstimateWithCI};
use crate::error::{invalid, Result};
use crate::output::{Cell, CsvWriter};
use crate::stochastic::{InputProcess, RngStream};

/// Default iteration cap when running the backward walk until coupling.
pub const DEFAULT_ITERATION_CAP: usize = 100_000_000;

/// `(w + σ − t)^+`.
#[inline]
pub fn lindley_step(w: f64, sigma: f64, t: f64) -> f64 {
    (w + sigma - t).max(0.0)
}

fn check_delay(x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(invalid("initial_delay", format!("must be finite and ≥ 0, got {x}")))
    }
}

/// A realized forward path with its driving sequence.
#[derive(Clone, Debug)]
pub struct Gg1Path {
    pub initial_delay: f64,
    /// `W_1, …, W_n`.
    pub waits: Vec<f64>,
    /// `σ_1, …, σ_{n−1}`.
    pub services: Vec<f64>,
    /// `t_1, …, t_{n−1}`.
    pub interarrivals: Vec<f64>,
    /// `S_1, …, S_{n−1}` with `S_k = Σ_{i ≤ k} (σ_i − t_i)`.
    pub partial_sums: Vec<f64>,
}

impl Gg1Path {
    /// Re-checks `W_1 = x` and the Lindley recursion from the stored inputs.
    pub fn satisfies_recursion(&self) -> bool {
        if self.waits.first() != Some(&self.initial_delay) {
            return false;
        }
        self.waits
            .windows(2)
            .zip(self.services.iter().zip(&self.interarrivals))
            .all(|(w, (&s, &t))| w[1] == lindley_step(w[0], s, t))
    }

    /// `W_k = max(0, x + S_{k−1}, S_{k−1} − S_1, …, S_{k−1} − S_{k−2})`
    /// evaluated directly from the partial sums.
    pub fn wait_from_partial_sums(&self, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.waits.len());
        if k == 1 {
            return self.initial_delay;
        }
        let s = |j: usize| if j == 0 { 0.0 } else { self.partial_sums[j - 1] };
        let top = s(k - 1);
        let mut best = (self.initial_delay + top).max(0.0);
        for j in 1..k - 1 {
            best = best.max(top - s(j));
        }
        best
    }

    /// CSV with columns `n,W_n`.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = CsvWriter::new(out);
        w.header(&["n", "W_n"])?;
        for (i, &wait) in self.waits.iter().enumerate() {
            w.row(&[Cell::U(i as u64 + 1), Cell::F(wait)])?;
        }
        Ok(())
    }
}

/// Runs the Lindley recursion for `n` customers starting from `W_1 = x`.
pub fn simulate_forward(process: &InputProcess, x: f64, n: usize, rng: &mut RngStream) -> Result<Gg1Path> {
    check_delay(x)?;
    if n == 0 {
        return Err(invalid("customers", "must be ≥ 1"));
    }
    let mut driver = process.driver();
    let mut path = Gg1Path {
        initial_delay: x,
        waits: Vec::with_capacity(n),
        services: Vec::with_capacity(n - 1),
        interarrivals: Vec::with_capacity(n - 1),
        partial_sums: Vec::with_capacity(n - 1),
    };
    let mut w = x;
    let mut s = 0.0;
    path.waits.push(w);
    for _ in 1..n {
        let (sigma, t) = driver.next_pair(rng);
        w = lindley_step(w, sigma, t);
        s += sigma - t;
        path.waits.push(w);
        path.services.push(sigma);
        path.interarrivals.push(t);
        path.partial_sums.push(s);
    }
    Ok(path)
}

/// Time-averaged tail fractions of a forward path, accumulated without
/// storing the path. Consumes the stream exactly like [`simulate_forward`].
#[derive(Clone, Debug)]
pub struct TailFractions {
    pub levels: Vec<f64>,
    pub exceedances: Vec<u64>,
    pub customers: u64,
    pub wait_sum: f64,
}

impl TailFractions {
    pub fn fraction(&self, i: usize) -> f64 {
        self.exceedances[i] as f64 / self.customers as f64
    }

    pub fn mean_wait(&self) -> f64 {
        self.wait_sum / self.customers as f64
    }
}

pub fn forward_tail_fractions(
    process: &InputProcess,
    x: f64,
    n: usize,
    levels: &[f64],
    rng: &mut RngStream,
) -> Result<TailFractions> {
    check_delay(x)?;
    if n == 0 {
        return Err(invalid("customers", "must be ≥ 1"));
    }
    let mut driver = process.driver();
    let mut acc = TailFractions {
        levels: levels.to_vec(),
        exceedances: vec![0; levels.len()],
        customers: n as u64,
        wait_sum: 0.0,
    };
    let mut w = x;
    for k in 0..n {
        if k > 0 {
            let (sigma, t) = driver.next_pair(rng);
            w = lindley_step(w, sigma, t);
        }
        acc.wait_sum += w;
        for (count, &level) in acc.exceedances.iter_mut().zip(levels) {
            if w > level {
                *count += 1;
            }
        }
    }
    Ok(acc)
}

/// Coupling time `ν^(x) = max{n ≥ 0 : x + S̃_n ≥ 0}` as far as it is known.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingTime {
    /// Every index after `ν` within the realized horizon is negative.
    Observed(usize),
    /// The walk is still non-negative at the end of the horizon.
    NotYet,
}

impl CouplingTime {
    pub fn exceeds(&self, n: usize) -> bool {
        match self {
            CouplingTime::Observed(nu) => *nu > n,
            CouplingTime::NotYet => true,
        }
    }
}

/// Backward maxima over one realized sequence `ξ_{−1}, ξ_{−2}, …`.
#[derive(Clone, Debug)]
pub struct LoynesRecord {
    pub initial_delay: f64,
    /// `M_0^(x), …, M_n^(x)`.
    pub backward_maxima: Vec<f64>,
    /// `S̃_0 = 0, S̃_1, …, S̃_n`.
    pub partial_sums: Vec<f64>,
    pub coupling: CouplingTime,
    /// `sup_k S̃_k` over the horizon; reported once coupling is observed.
    pub supremum: Option<f64>,
}

impl LoynesRecord {
    pub fn horizon(&self) -> usize {
        self.backward_maxima.len() - 1
    }

    /// With zero initial delay the backward maxima never decrease.
    pub fn is_monotone(&self) -> bool {
        self.backward_maxima.windows(2).all(|w| w[0] <= w[1])
    }

    /// `M_n^(x)` equals the supremum for every `n > ν`.
    pub fn constant_after_coupling(&self) -> bool {
        match (self.coupling, self.supremum) {
            (CouplingTime::Observed(nu), Some(m)) => self.backward_maxima[nu + 1..].iter().all(|&v| v == m),
            _ => true,
        }
    }

    /// CSV with columns `n,M_n,coupled`.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = CsvWriter::new(out);
        w.header(&["n", "M_n", "coupled"])?;
        for (n, &m) in self.backward_maxima.iter().enumerate() {
            let coupled = matches!(self.coupling, CouplingTime::Observed(nu) if n > nu);
            w.row(&[Cell::U(n as u64), Cell::F(m), Cell::B(coupled)])?;
        }
        Ok(())
    }
}

/// Backward scheme over a fixed horizon of `n` increments. The increments
/// `ξ_{−1}, ξ_{−2}, …` are drawn forward from the stream and indexed
/// backward, which is legitimate for a stationary input.
pub fn loynes_backward(process: &InputProcess, x: f64, n: usize, rng: &mut RngStream) -> Result<LoynesRecord> {
    check_delay(x)?;
    let mut driver = process.driver();
    let mut maxima = Vec::with_capacity(n + 1);
    let mut sums = Vec::with_capacity(n + 1);
    maxima.push(x);
    sums.push(0.0);
    // running max(0, S̃_1, …, S̃_{k−1})
    let mut past_max: f64 = 0.0;
    let mut s = 0.0;
    let mut last_nonneg = 0;
    for k in 1..=n {
        s += driver.next_increment(rng);
        maxima.push(past_max.max(x + s));
        past_max = past_max.max(s);
        sums.push(s);
        if x + s >= 0.0 {
            last_nonneg = k;
        }
    }
    let coupled = x + s < 0.0;
    let (coupling, supremum) = if coupled {
        (CouplingTime::Observed(last_nonneg), Some(past_max))
    } else {
        (CouplingTime::NotYet, None)
    };
    Ok(LoynesRecord {
        initial_delay: x,
        backward_maxima: maxima,
        partial_sums: sums,
        coupling,
        supremum,
    })
}

/// Stopping rule for [`coupling_time`].
#[derive(Clone, Copy, Debug)]
pub struct CouplingOptions {
    /// Always walk at least this many steps.
    pub min_steps: usize,
    /// Stop once `x + S̃_k < −confirm_depth`; a later return above zero is
    /// then a rare event for a stable input.
    pub confirm_depth: f64,
    pub iteration_cap: usize,
}

impl CouplingOptions {
    /// Depth of ten mean cycle lengths `E σ + E t`.
    pub fn for_process(process: &InputProcess) -> Self {
        let (es, et) = process.means();
        Self {
            min_steps: 0,
            confirm_depth: 10.0 * (es + et),
            iteration_cap: DEFAULT_ITERATION_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingOutcome {
    pub nu: CouplingTime,
    /// `sup_k S̃_k` over the walked steps.
    pub supremum: f64,
    pub steps: usize,
}

/// Walks the backward sums without storing them until coupling is confirmed
/// or the iteration cap is hit (reported as [`CouplingTime::NotYet`]).
pub fn coupling_time(
    process: &InputProcess,
    x: f64,
    opts: &CouplingOptions,
    rng: &mut RngStream,
) -> Result<CouplingOutcome> {
    check_delay(x)?;
    let mut driver = process.driver();
    let mut s = 0.0;
    let mut sup: f64 = 0.0;
    let mut last_nonneg = 0;
    let mut k = 0;
    while k < opts.iteration_cap {
        if k >= opts.min_steps && x + s < -opts.confirm_depth {
            return Ok(CouplingOutcome {
                nu: CouplingTime::Observed(last_nonneg),
                supremum: sup,
                steps: k,
            });
        }
        k += 1;
        s += driver.next_increment(rng);
        sup = sup.max(s);
        if x + s >= 0.0 {
            last_nonneg = k;
        }
    }
    Ok(CouplingOutcome {
        nu: CouplingTime::NotYet,
        supremum: sup,
        steps: k,
    })
}

/// Estimates `P(ν^(x) > n)`, the coupling bound on the total-variation
/// distance between the law of the wait after `n` steps and stationarity.
/// Replication `r` uses `rng.substream(r)`; capped walks count as `ν > n`.
pub fn tv_bound_estimate(
    process: &InputProcess,
    x: f64,
    n: usize,
    reps: usize,
    opts: &CouplingOptions,
    rng: &RngStream,
) -> Result<EstimateWithCI> {
    if reps < 100 {
        return Err(invalid("replications", format!("must be ≥ 100, got {reps}")));
    }
    let mut exceed = 0;
    let mut capped = 0;
    for r in 0..reps {
        let mut stream = rng.substream(r as u64);
        let out = coupling_time(process, x, opts, &mut stream)?;
        if out.nu == CouplingTime::NotYet {
            capped += 1;
        }
        if out.nu.exceeds(n) {
            exceed += 1;
        }
    }
    let mut est = wilson_interval(exceed, reps, 0.95);
    est.low_confidence = capped > 0;
    Ok(est)
}
