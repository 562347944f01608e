//! Slotted multi-access channel: a shared transmission probability driven
//! by one bit of channel feedback per slot.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::diagnostics::{drift_classify, StabilityClass, StabilityVerdict};
use crate::error::{invalid, Error, Result};
use crate::output::{Cell, CsvWriter};
use crate::stochastic::RngStream;

pub const DEFAULT_P_MIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FeedbackKind {
    Success,
    Empty,
    Collision,
}

impl FeedbackKind {
    pub fn label(self) -> &'static str {
        match self {
            FeedbackKind::Success => "success",
            FeedbackKind::Empty => "empty",
            FeedbackKind::Collision => "collision",
        }
    }
}

impl std::str::FromStr for FeedbackKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "success" => Ok(FeedbackKind::Success),
            "empty" => Ok(FeedbackKind::Empty),
            "collision" => Ok(FeedbackKind::Collision),
            other => Err(invalid(
                "feedback",
                format!("expected success, empty or collision, got '{other}'"),
            )),
        }
    }
}

/// The one bit a protocol sees about a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Feedback {
    SuccessBinary(bool),
    EmptyBinary(bool),
    CollisionBinary(bool),
}

impl Feedback {
    /// Derived from the number of transmissions `k`.
    pub fn observe(kind: FeedbackKind, k: u64) -> Self {
        match kind {
            FeedbackKind::Success => Feedback::SuccessBinary(k == 1),
            FeedbackKind::Empty => Feedback::EmptyBinary(k == 0),
            FeedbackKind::Collision => Feedback::CollisionBinary(k >= 2),
        }
    }

    pub fn bit(self) -> bool {
        match self {
            Feedback::SuccessBinary(b) | Feedback::EmptyBinary(b) | Feedback::CollisionBinary(b) => b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum UpdateRule {
    /// `p·a` when the bit is 0, `p·b` when it is 1.
    Multiplicative { a: f64, b: f64 },
    /// `p + da` when the bit is 0, `p + db` when it is 1.
    Additive { da: f64, db: f64 },
    /// Rows `(p_upper, next0, next1)` sorted by `p_upper`; the first row
    /// with `p ≤ p_upper` applies, the last row beyond it.
    Table(Vec<(f64, f64, f64)>),
}

impl UpdateRule {
    /// Parses `mult(a,b)` or `add(da,db)`; tables come from [`UpdateRule::table_from_file`].
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let (name, args) = t
            .strip_suffix(')')
            .and_then(|s| s.split_once('('))
            .ok_or_else(|| invalid("rule", format!("expected name(args), got '{t}'")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| invalid("rule", format!("bad number in '{t}': {e}")))?;
        match (name.trim(), nums.as_slice()) {
            ("mult", &[a, b]) if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => {
                Ok(UpdateRule::Multiplicative { a, b })
            }
            ("add", &[da, db]) if da.is_finite() && db.is_finite() => Ok(UpdateRule::Additive { da, db }),
            _ => Err(invalid("rule", format!("unsupported rule '{t}'"))),
        }
    }

    /// Reads `p_upper,next0,next1` rows; `#` starts a comment.
    pub fn table_from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::table_from_str(&text)
    }

    pub fn table_from_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| invalid("table", format!("line {}: {e}", i + 1)))?;
            if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(
                    "table",
                    format!("line {}: expected p_upper,next0,next1", i + 1),
                ));
            }
            rows.push((v[0], v[1], v[2]));
        }
        if rows.is_empty() {
            return Err(invalid("table", "no rows"));
        }
        if rows.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(invalid("table", "p_upper must increase strictly"));
        }
        Ok(UpdateRule::Table(rows))
    }

    fn raw(&self, p: f64, bit: bool) -> f64 {
        match self {
            UpdateRule::Multiplicative { a, b } => p * if bit { *b } else { *a },
            UpdateRule::Additive { da, db } => p + if bit { *db } else { *da },
            UpdateRule::Table(rows) => {
                let row = rows.iter().find(|r| p <= r.0).unwrap_or(&rows[rows.len() - 1]);
                if bit {
                    row.2
                } else {
                    row.1
                }
            }
        }
    }
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateRule::Multiplicative { a, b } => write!(f, "mult({a:?},{b:?})"),
            UpdateRule::Additive { da, db } => write!(f, "add({da:?},{db:?})"),
            UpdateRule::Table(rows) => write!(f, "table({} rows)", rows.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Protocol {
    pub feedback: FeedbackKind,
    pub rule: UpdateRule,
    pub p0: f64,
    pub p_min: f64,
}

impl Protocol {
    pub fn new(feedback: FeedbackKind, rule: UpdateRule, p0: f64, p_min: f64) -> Result<Self> {
        if !(p_min > 0.0 && p_min <= 1.0) {
            return Err(invalid("p_min", format!("must lie in (0, 1], got {p_min}")));
        }
        if !(p0 >= p_min && p0 <= 1.0) {
            return Err(invalid("p0", format!("must lie in [p_min, 1], got {p0}")));
        }
        Ok(Self {
            feedback,
            rule,
            p0,
            p_min,
        })
    }

    /// Collision feedback, `p` times 1.1 after a slot without collision and
    /// times 0.9 after a collision, starting from 1.
    pub fn collision_baseline() -> Self {
        Self::new(
            FeedbackKind::Collision,
            UpdateRule::Multiplicative { a: 1.1, b: 0.9 },
            1.0,
            DEFAULT_P_MIN,
        )
        .expect("valid baseline")
    }

    /// Next probability, clamped to `[p_min, 1]`.
    pub fn update(&self, p: f64, bit: bool) -> f64 {
        let next = self.rule.raw(p, bit);
        if next.is_nan() {
            self.p_min
        } else {
            next.clamp(self.p_min, 1.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlotState {
    pub w: u64,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlotOutcome {
    pub state: SlotState,
    pub feedback: Feedback,
    pub departure: bool,
    /// Transmissions classified as 0, 1 or 2 (two or more).
    pub transmissions: u8,
    pub arrivals: u64,
}

/// `(P(K = 0), P(K = 1))` for `K ~ Binomial(w, p)`.
pub fn idle_success_probabilities(w: u64, p: f64) -> (f64, f64) {
    if w == 0 {
        return (1.0, 0.0);
    }
    if p >= 1.0 {
        return (0.0, if w == 1 { 1.0 } else { 0.0 });
    }
    let log_q = (-p).ln_1p();
    let p0 = (w as f64 * log_q).exp();
    let p1 = w as f64 * p * ((w - 1) as f64 * log_q).exp();
    (p0, p1)
}

/// Poisson sampler for a fixed rate, `None` when no packets arrive.
pub fn arrival_sampler(lambda: f64) -> Result<Option<Poisson<f64>>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be ≥ 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(None);
    }
    Poisson::new(lambda)
        .map(Some)
        .map_err(|e| invalid("lambda", e.to_string()))
}

/// One slot: a uniform classifies the transmissions as idle, success or
/// collision, then the slot's Poisson arrivals are drawn.
pub fn slot_step(
    s: SlotState,
    arrivals: Option<&Poisson<f64>>,
    protocol: &Protocol,
    rng: &mut RngStream,
) -> SlotOutcome {
    let (p0, p1) = idle_success_probabilities(s.w, s.p);
    let u = rng.uniform();
    let k: u8 = if u < p0 {
        0
    } else if u < p0 + p1 {
        1
    } else {
        2
    };
    // an empty backlog never transmits, whatever rounding says
    let k = if s.w == 0 { 0 } else { k };
    let departure = k == 1;
    let a = arrivals.map_or(0, |d| d.sample(rng) as u64);
    let feedback = Feedback::observe(protocol.feedback, k as u64);
    SlotOutcome {
        state: SlotState {
            w: s.w - departure as u64 + a,
            p: protocol.update(s.p, feedback.bit()),
        },
        feedback,
        departure,
        transmissions: k,
        arrivals: a,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChannelRun {
    /// `(n, W_n, p_n, feedback bit of slot n, departure in slot n)`;
    /// the last row carries the state after the final slot.
    pub rows: Vec<(u64, u64, f64, bool, bool)>,
    pub departures: u64,
    pub arrivals: u64,
    pub slots: u64,
    pub w0: u64,
}

impl ChannelRun {
    pub fn throughput(&self) -> f64 {
        self.departures as f64 / self.slots as f64
    }

    /// `(n, W_n)` thinned to at most `points` entries.
    pub fn backlog_path(&self, points: usize) -> Vec<(f64, f64)> {
        let every = (self.rows.len() / points.max(1)).max(1);
        self.rows
            .iter()
            .step_by(every)
            .map(|r| (r.0 as f64, r.1 as f64))
            .collect()
    }

    pub fn verdict(&self) -> StabilityVerdict {
        let path = self.backlog_path(PROBE_POINTS);
        drift_classify(&path, probe_window(path.len()))
    }

    /// CSV with columns `n,W,p,feedback_bit,departure`.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = CsvWriter::new(out);
        w.header(&["n", "W", "p", "feedback_bit", "departure"])?;
        for &(n, wn, p, bit, dep) in &self.rows {
            w.row(&[
                Cell::U(n),
                Cell::U(wn),
                Cell::F(p),
                Cell::U(bit as u64),
                Cell::U(dep as u64),
            ])?;
        }
        Ok(())
    }
}

/// Grid points of the backlog path handed to the drift classifier.
pub const PROBE_POINTS: usize = 4000;

/// Ten batches per half: backlog excursions near capacity are long, and
/// shorter batches let the running maximum of batch means creep up on
/// stationary paths.
fn probe_window(points: usize) -> usize {
    (points / 20).max(1)
}

pub fn run_protocol(lambda: f64, protocol: &Protocol, w0: u64, slots: u64, rng: &mut RngStream) -> Result<ChannelRun> {
    if slots == 0 {
        return Err(invalid("slots", "must be ≥ 1"));
    }
    let arrivals = arrival_sampler(lambda)?;
    let mut s = SlotState { w: w0, p: protocol.p0 };
    let mut run = ChannelRun {
        rows: Vec::with_capacity(slots as usize + 1),
        departures: 0,
        arrivals: 0,
        slots,
        w0,
    };
    for n in 0..slots {
        let out = slot_step(s, arrivals.as_ref(), protocol, rng);
        run.rows.push((n, s.w, s.p, out.feedback.bit(), out.departure));
        run.departures += out.departure as u64;
        run.arrivals += out.arrivals;
        s = out.state;
    }
    run.rows.push((slots, s.w, s.p, false, false));
    Ok(run)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeRow {
    pub lambda: f64,
    pub verdict: StabilityVerdict,
    pub throughput: f64,
    pub final_mean_backlog: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicityProbe {
    pub rows: Vec<ProbeRow>,
    /// Largest λ on the grid with a stable verdict.
    pub capacity: Option<f64>,
    pub feedback: FeedbackKind,
}

/// Replication-averaged backlog paths per λ, drift-classified. Cell `c`,
/// replication `r` uses `rng.substream(c).substream(r)`. A verdict only
/// speaks for the protocol tried, never for its feedback class.
pub fn ergodicity_probe(
    lambdas: &[f64],
    protocol: &Protocol,
    w0: u64,
    slots: u64,
    reps: usize,
    rng: &RngStream,
) -> Result<ErgodicityProbe> {
    if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return Err(invalid("lambda_grid", "needs at least one rate, all in (0, 1)"));
    }
    if reps == 0 {
        return Err(invalid("replications", "must be ≥ 1"));
    }
    let mut rows = Vec::with_capacity(lambdas.len());
    for (c, &lambda) in lambdas.iter().enumerate() {
        let cell = rng.substream(c as u64);
        let mut avg: Vec<(f64, f64)> = Vec::new();
        let mut throughput = 0.0;
        for r in 0..reps {
            let run = run_protocol(lambda, protocol, w0, slots, &mut cell.substream(r as u64))?;
            throughput += run.throughput() / reps as f64;
            let path = run.backlog_path(PROBE_POINTS);
            if avg.is_empty() {
                avg = path.iter().map(|&(n, _)| (n, 0.0)).collect();
            }
            for (a, (_, w)) in avg.iter_mut().zip(path) {
                a.1 += w / reps as f64;
            }
        }
        let verdict = drift_classify(&avg, probe_window(avg.len()));
        rows.push(ProbeRow {
            lambda,
            verdict,
            throughput,
            final_mean_backlog: avg.last().map_or(0.0, |p| p.1),
        });
    }
    let capacity = rows
        .iter()
        .filter(|r| r.verdict.class == StabilityClass::Stable)
        .map(|r| r.lambda)
        .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.max(l))));
    Ok(ErgodicityProbe {
        rows,
        capacity,
        feedback: protocol.feedback,
    })
}

impl ErgodicityProbe {
    /// CSV with columns `lambda,verdict,slope,slope_ci_lo,slope_ci_hi,throughput,final_mean_backlog`.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = CsvWriter::new(out);
        w.comment(&format!(
            "feedback={}; verdicts concern this protocol only, not its feedback class",
            self.feedback.label()
        ))?;
        w.header(&[
            "lambda",
            "verdict",
            "slope",
            "slope_ci_lo",
            "slope_ci_hi",
            "throughput",
            "final_mean_backlog",
        ])?;
        for r in &self.rows {
            w.row(&[
                Cell::F(r.lambda),
                Cell::S(r.verdict.class.label()),
                Cell::F(r.verdict.slope),
                Cell::F(r.verdict.slope_ci.0),
                Cell::F(r.verdict.slope_ci.1),
                Cell::F(r.throughput),
                Cell::F(r.final_mean_backlog),
            ])?;
        }
        Ok(())
    }
}
