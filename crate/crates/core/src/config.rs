//! Experiment configuration: a small `[section]` / `key = value` format.
//!
//! ```text
//! [experiment]
//! model = gg1
//! seed = 42
//! replications = 4
//!
//! [params]
//! service = exp(2.0)
//! interarrival = exp(1.0)
//! customers = 100000
//! ```
//!
//! Every problem found is reported with its line number; parsing never
//! stops at the first error.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{ConfigError, Error, Result};
use crate::multiaccess::{FeedbackKind, Protocol, UpdateRule, DEFAULT_P_MIN};
use crate::polling::{Loc, ParamMode, PollingConfig};
use crate::spatial::{Policy, Topology};
use crate::stochastic::{traffic_intensity, DistributionSpec, InputProcess, Modulation, Rho};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Gg1,
    Ggm,
    Jsq,
    Partial3,
    GreedyCircle,
    Annihilation,
    Polling,
    PollingScan,
    Multiaccess,
}

impl Model {
    pub const ALL: [Model; 9] = [
        Model::Gg1,
        Model::Ggm,
        Model::Jsq,
        Model::Partial3,
        Model::GreedyCircle,
        Model::Annihilation,
        Model::Polling,
        Model::PollingScan,
        Model::Multiaccess,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Model::Gg1 => "gg1",
            Model::Ggm => "ggm",
            Model::Jsq => "jsq",
            Model::Partial3 => "partial3",
            Model::GreedyCircle => "greedy_circle",
            Model::Annihilation => "annihilation",
            Model::Polling => "polling",
            Model::PollingScan => "polling_scan",
            Model::Multiaccess => "multiaccess",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Model::Gg1 => "single-server FCFS queue: forward waits or backward coupling",
            Model::Ggm => "multi-server FCFS queue: stationary wait or heavy-tail experiment",
            Model::Jsq => "two-server join-the-shortest-workload stationarity probe",
            Model::Partial3 => "three servers, three classes with two accessible servers each",
            Model::GreedyCircle => "greedy server on a circle: stability scan",
            Model::Annihilation => "black/white particle annihilation on a circle: stability scan",
            Model::Polling => "two-station two-server exhaustive polling simulation",
            Model::PollingScan => "fluid cycle-growth scan over the four service parameters",
            Model::Multiaccess => "slotted multi-access channel: ergodicity probe",
        }
    }

    /// High half of every stream id used by this model.
    pub fn tag(self) -> u32 {
        Model::ALL.iter().position(|&m| m == self).unwrap() as u32 + 1
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Model::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<_> = Model::ALL.iter().map(|m| m.name()).collect();
                format!("unknown model '{}' (expected one of {})", s.trim(), names.join(", "))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gg1Mode {
    Forward,
    Coupling,
}

#[derive(Clone, Debug)]
pub struct Gg1Params {
    pub process: InputProcess,
    pub customers: usize,
    pub initial_delay: f64,
    pub levels: Vec<f64>,
    pub mode: Gg1Mode,
    pub iteration_cap: usize,
}

#[derive(Clone, Debug)]
pub enum GgmExperiment {
    Stationary,
    Whitt {
        eta: f64,
        hill_k: Option<usize>,
        auto_levels: usize,
    },
}

#[derive(Clone, Debug)]
pub struct GgmParams {
    pub process: InputProcess,
    pub servers: usize,
    pub customers: usize,
    /// Empty for the heavy-tail experiment means geometric auto levels.
    pub levels: Vec<f64>,
    pub experiment: GgmExperiment,
}

#[derive(Clone, Debug)]
pub struct JsqParams {
    pub process: InputProcess,
    pub initials: Vec<[f64; 2]>,
    pub customers: usize,
    pub probe_reps: usize,
}

#[derive(Clone, Debug)]
pub struct Partial3Params {
    pub lambda: f64,
    pub f_left: DistributionSpec,
    pub f_right: DistributionSpec,
    pub initials: Vec<[f64; 3]>,
    pub horizon: usize,
}

#[derive(Clone, Debug)]
pub struct CircleScanParams {
    pub lambdas: Vec<f64>,
    pub circumferences: Vec<f64>,
    /// Speeds for the greedy server, deletion radii for annihilation.
    pub third: Vec<f64>,
    pub topology: Topology,
    pub policy: Policy,
    pub horizon: f64,
    pub scan_reps: usize,
}

#[derive(Clone, Debug)]
pub struct PollingParams {
    pub config: PollingConfig,
    pub initial_q: [u64; 2],
    pub assignment: [Loc; 2],
    pub horizon: f64,
}

#[derive(Clone, Debug)]
pub struct PollingScanParams {
    pub resolution: usize,
    pub cycles: usize,
    pub mode: ParamMode,
}

#[derive(Clone, Debug)]
pub struct MultiaccessParams {
    pub protocol: Protocol,
    pub lambdas: Vec<f64>,
    pub slots: u64,
    pub probe_reps: usize,
    pub w0: u64,
}

#[derive(Clone, Debug)]
pub enum ModelParams {
    Gg1(Gg1Params),
    Ggm(GgmParams),
    Jsq(JsqParams),
    Partial3(Partial3Params),
    GreedyCircle(CircleScanParams),
    Annihilation(CircleScanParams),
    Polling(PollingParams),
    PollingScan(PollingScanParams),
    Multiaccess(MultiaccessParams),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: Model,
    pub seed: u64,
    pub replications: u32,
    /// Replication `r` runs on stream `tag << 32 | (stream_offset + r)`.
    pub stream_offset: u32,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub params: ModelParams,
    /// Every `section.key = value` as written, for the manifest.
    pub echo: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn stream_id(&self, rep: u32) -> u64 {
        (u64::from(self.model.tag()) << 32) | u64::from(self.stream_offset + rep)
    }
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Key/value pairs of one section with the bookkeeping needed to report
/// unknown, missing and malformed keys.
struct Section {
    name: &'static str,
    entries: BTreeMap<String, Entry>,
}

struct Collector {
    errors: Vec<ConfigError>,
}

impl Collector {
    fn push(&mut self, line: usize, message: String) {
        self.errors.push(ConfigError { line, message });
    }
}

impl Section {
    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn get<T>(
        &mut self,
        c: &mut Collector,
        key: &str,
        parse: impl FnOnce(&str) -> std::result::Result<T, String>,
    ) -> Option<T> {
        let (value, line) = self.raw(key)?;
        match parse(&value) {
            Ok(v) => Some(v),
            Err(e) => {
                c.push(line, format!("{}.{key}: {e}", self.name));
                None
            }
        }
    }

    fn req<T>(
        &mut self,
        c: &mut Collector,
        key: &str,
        parse: impl FnOnce(&str) -> std::result::Result<T, String>,
    ) -> Option<T> {
        if !self.entries.contains_key(key) {
            c.push(0, format!("missing required key {}.{key}", self.name));
            return None;
        }
        self.get(c, key, parse)
    }

    fn opt<T>(
        &mut self,
        c: &mut Collector,
        key: &str,
        default: T,
        parse: impl FnOnce(&str) -> std::result::Result<T, String>,
    ) -> Option<T> {
        if self.entries.contains_key(key) {
            self.get(c, key, parse)
        } else {
            Some(default)
        }
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn report_unused(&self, c: &mut Collector) {
        for (k, e) in &self.entries {
            if !e.used {
                c.push(e.line, format!("unknown key {}.{k}", self.name));
            }
        }
    }
}

fn positive(v: f64) -> std::result::Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a positive finite number, got {v}"))
    }
}

fn non_negative(v: f64) -> std::result::Result<f64, String> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a finite number ≥ 0, got {v}"))
    }
}

fn real(s: &str) -> std::result::Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("expected a number, got '{}'", s.trim()))
}

fn count(min: u64) -> impl Fn(&str) -> std::result::Result<u64, String> {
    move |s: &str| {
        let t = s.trim().replace('_', "");
        let v = t
            .parse::<u64>()
            .or_else(|_| {
                // accept 1e6-style integers
                t.parse::<f64>()
                    .ok()
                    .filter(|f| f.fract() == 0.0 && *f >= 0.0 && *f < 1.8e19)
                    .map(|f| f as u64)
                    .ok_or(())
            })
            .map_err(|_| format!("expected a non-negative integer, got '{}'", s.trim()))?;
        if v < min {
            Err(format!("must be ≥ {min}, got {v}"))
        } else {
            Ok(v)
        }
    }
}

fn list<T>(s: &str, item: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    let out: Vec<T> = s
        .split(',')
        .filter(|x| !x.trim().is_empty())
        .map(item)
        .collect::<std::result::Result<_, _>>()?;
    if out.is_empty() {
        Err("expected a non-empty comma-separated list".into())
    } else {
        Ok(out)
    }
}

fn dist(s: &str) -> std::result::Result<DistributionSpec, String> {
    s.parse::<DistributionSpec>().map_err(|e| e.to_string())
}

/// `a:b; c:d` style list of fixed-size vectors.
fn vectors<const N: usize>(s: &str) -> std::result::Result<Vec<[f64; N]>, String> {
    let mut out = Vec::new();
    for part in s.split(';').filter(|p| !p.trim().is_empty()) {
        let v: Vec<f64> = part
            .split(':')
            .map(|x| real(x).and_then(non_negative))
            .collect::<std::result::Result<_, _>>()?;
        let arr: [f64; N] = v
            .try_into()
            .map_err(|_| format!("each entry needs {N} colon-separated values, got '{}'", part.trim()))?;
        out.push(arr);
    }
    if out.is_empty() {
        Err("expected at least one entry".into())
    } else {
        Ok(out)
    }
}

fn process(p: &mut Section, c: &mut Collector) -> Option<InputProcess> {
    let service = p.req(c, "service", dist);
    let interarrival = p.req(c, "interarrival", dist);
    let modulation = p.get(c, "modulation", |s| list(s, real));
    let alt_service = p.get(c, "alt_service", dist);
    let alt_interarrival = p.get(c, "alt_interarrival", dist);
    let (service, interarrival) = (service?, interarrival?);
    match (modulation, alt_service, alt_interarrival) {
        (None, None, None) => Some(InputProcess::iid(service, interarrival)),
        (Some(sw), Some(s2), Some(t2)) => {
            if sw.len() != 2 {
                c.push(p.line("modulation"), "params.modulation: expected p01,p10".into());
                return None;
            }
            match Modulation::new(sw[0], sw[1], s2, t2) {
                Ok(m) => Some(InputProcess::modulated(service, interarrival, m)),
                Err(e) => {
                    c.push(p.line("modulation"), format!("params.modulation: {e}"));
                    None
                }
            }
        }
        _ => {
            c.push(
                p.line("modulation"),
                "params.modulation, alt_service and alt_interarrival must be given together".into(),
            );
            None
        }
    }
}

fn require_stable(p: &Section, c: &mut Collector, proc: &InputProcess, servers: usize) {
    match traffic_intensity(proc, servers) {
        Ok(ti) if ti.stable => {}
        Ok(ti) => {
            let rho = match ti.rho {
                Rho::Finite(r) => format!("{r}"),
                Rho::Infinite => "infinite".into(),
            };
            c.push(
                p.line("service"),
                format!("params: traffic intensity ρ = {rho} must be below {servers}"),
            );
        }
        Err(e) => c.push(p.line("service"), format!("params: {e}")),
    }
}

fn circle_scan(p: &mut Section, c: &mut Collector, third_key: &str, greedy: bool) -> Option<CircleScanParams> {
    let lambdas = p.req(c, "lambda", |s| list(s, |x| real(x).and_then(non_negative)));
    let circumferences = p.opt(c, "circumference", vec![1.0], |s| {
        list(s, |x| real(x).and_then(positive))
    });
    let third = p.req(c, third_key, |s| list(s, |x| real(x).and_then(positive)));
    let (topology, policy) = if greedy {
        let sites = p.opt(c, "sites", 0, count(0));
        let policy = p.opt(c, "policy", Policy::Greedy, |s| {
            s.parse::<Policy>().map_err(|e| e.to_string())
        });
        let topology = sites.map(|n| {
            if n == 0 {
                Topology::Continuous
            } else {
                Topology::Lattice(n as usize)
            }
        });
        (topology, policy)
    } else {
        (Some(Topology::Continuous), Some(Policy::Greedy))
    };
    let horizon = p.req(c, "horizon", |s| real(s).and_then(positive));
    let scan_reps = p.opt(c, "scan_reps", 1, count(1));
    Some(CircleScanParams {
        lambdas: lambdas?,
        circumferences: circumferences?,
        third: third?,
        topology: topology?,
        policy: policy?,
        horizon: horizon?,
        scan_reps: scan_reps? as usize,
    })
}

fn parse_params(model: Model, p: &mut Section, c: &mut Collector, base: &Path) -> Option<ModelParams> {
    match model {
        Model::Gg1 => {
            let process = process(p, c);
            let customers = p.req(c, "customers", count(1));
            let initial_delay = p.opt(c, "initial_delay", 0.0, |s| real(s).and_then(non_negative));
            let levels = p.opt(c, "levels", vec![0.0, 1.0, 2.0], |s| {
                list(s, |x| real(x).and_then(non_negative))
            });
            let mode = p.opt(c, "mode", Gg1Mode::Forward, |s| match s.trim() {
                "forward" => Ok(Gg1Mode::Forward),
                "coupling" => Ok(Gg1Mode::Coupling),
                o => Err(format!("expected forward or coupling, got '{o}'")),
            });
            let iteration_cap = p.opt(c, "iteration_cap", crate::gg1::DEFAULT_ITERATION_CAP as u64, count(1));
            let process = process?;
            if mode == Some(Gg1Mode::Coupling) {
                require_stable(p, c, &process, 1);
            }
            Some(ModelParams::Gg1(Gg1Params {
                process,
                customers: customers? as usize,
                initial_delay: initial_delay?,
                levels: levels?,
                mode: mode?,
                iteration_cap: iteration_cap? as usize,
            }))
        }
        Model::Ggm => {
            let process = process(p, c);
            let servers = p.req(c, "servers", count(1));
            let customers = p.req(c, "customers", count(1));
            let levels = p.get(c, "levels", |s| list(s, |x| real(x).and_then(non_negative)));
            let kind = p.opt(c, "experiment", "stationary".to_string(), |s| match s.trim() {
                k @ ("stationary" | "whitt") => Ok(k.to_string()),
                o => Err(format!("expected stationary or whitt, got '{o}'")),
            });
            let eta = p.opt(c, "eta", 1.0, |s| real(s).and_then(positive));
            let hill_k = p.opt(c, "hill_k", 0, count(0));
            let auto_levels = p.opt(c, "auto_levels", 12, count(1));
            let (process, servers) = (process?, servers?);
            if !process.is_iid() {
                c.push(
                    p.line("modulation"),
                    "params.modulation: the multi-server estimators need i.i.d. input".into(),
                );
                return None;
            }
            require_stable(p, c, &process, servers as usize);
            let whitt = kind? == "whitt";
            let levels = match levels {
                Some(l) => l,
                None if whitt => Vec::new(),
                None => vec![0.0, 1.0],
            };
            let experiment = match whitt {
                true => GgmExperiment::Whitt {
                    eta: eta?,
                    hill_k: Some(hill_k? as usize).filter(|&k| k > 0),
                    auto_levels: auto_levels? as usize,
                },
                false => GgmExperiment::Stationary,
            };
            Some(ModelParams::Ggm(GgmParams {
                process,
                servers: servers as usize,
                customers: customers? as usize,
                levels,
                experiment,
            }))
        }
        Model::Jsq => {
            let process = process(p, c);
            let initials = p.opt(c, "initials", vec![[0.0, 0.0]], vectors::<2>);
            let customers = p.req(c, "customers", count(1));
            let probe_reps = p.opt(c, "probe_reps", 100, count(2));
            Some(ModelParams::Jsq(JsqParams {
                process: process?,
                initials: initials?,
                customers: customers? as usize,
                probe_reps: probe_reps? as usize,
            }))
        }
        Model::Partial3 => {
            let lambda = p.req(c, "lambda", |s| real(s).and_then(positive));
            let f_left = p.req(c, "f_left", dist);
            let f_right = p.req(c, "f_right", dist);
            let initials = p.opt(c, "initials", vec![[0.0; 3]], vectors::<3>);
            let horizon = p.req(c, "horizon", count(60));
            Some(ModelParams::Partial3(Partial3Params {
                lambda: lambda?,
                f_left: f_left?,
                f_right: f_right?,
                initials: initials?,
                horizon: horizon? as usize,
            }))
        }
        Model::GreedyCircle => circle_scan(p, c, "speed", true).map(ModelParams::GreedyCircle),
        Model::Annihilation => circle_scan(p, c, "epsilon", false).map(ModelParams::Annihilation),
        Model::Polling => {
            let mu = p.req(c, "mu", |s| {
                let v = list(s, |x| real(x).and_then(positive))?;
                <[f64; 4]>::try_from(v).map_err(|_| "expected mu11,mu12,mu21,mu22".to_string())
            });
            let mode = p.opt(c, "param_mode", ParamMode::Rate, |s| {
                s.parse::<ParamMode>().map_err(|e| e.to_string())
            });
            let initial_q = p.opt(c, "initial_q", [0, 0], |s| {
                let v = list(s, count(0))?;
                <[u64; 2]>::try_from(v).map_err(|_| "expected q1,q2".to_string())
            });
            let assignment = p.opt(c, "assignment", [Loc::Station(0), Loc::Station(1)], |s| {
                let v = list(s, |x| match x.trim() {
                    "1" => Ok(Loc::Station(0)),
                    "2" => Ok(Loc::Station(1)),
                    o => Err(format!("station must be 1 or 2, got '{o}'")),
                })?;
                <[Loc; 2]>::try_from(v).map_err(|_| "expected two stations".to_string())
            });
            let horizon = p.req(c, "horizon", |s| real(s).and_then(positive));
            let (mu, mode) = (mu?, mode?);
            let grid = [[mu[0], mu[1]], [mu[2], mu[3]]];
            let config = match mode {
                ParamMode::Rate => PollingConfig::new(grid),
                ParamMode::MeanTime => PollingConfig::from_mean_service_times(grid),
            };
            let config = match config {
                Ok(cfg) => cfg,
                Err(e) => {
                    c.push(p.line("mu"), format!("params.mu: {e}"));
                    return None;
                }
            };
            Some(ModelParams::Polling(PollingParams {
                config,
                initial_q: initial_q?,
                assignment: assignment?,
                horizon: horizon?,
            }))
        }
        Model::PollingScan => {
            let resolution = p.req(c, "resolution", count(2));
            let cycles = p.opt(c, "cycles", 200, count(100));
            let mode = p.opt(c, "param_mode", ParamMode::Rate, |s| {
                s.parse::<ParamMode>().map_err(|e| e.to_string())
            });
            Some(ModelParams::PollingScan(PollingScanParams {
                resolution: resolution? as usize,
                cycles: cycles? as usize,
                mode: mode?,
            }))
        }
        Model::Multiaccess => {
            let feedback = p.req(c, "feedback", |s| s.parse::<FeedbackKind>().map_err(|e| e.to_string()));
            let rule = p.req(c, "rule", |s| {
                let t = s.trim();
                if let Some(file) = t.strip_prefix("table(").and_then(|r| r.strip_suffix(')')) {
                    UpdateRule::table_from_file(&base.join(file.trim())).map_err(|e| e.to_string())
                } else {
                    UpdateRule::parse(t).map_err(|e| e.to_string())
                }
            });
            let p0 = p.opt(c, "p0", 1.0, real);
            let p_min = p.opt(c, "p_min", DEFAULT_P_MIN, real);
            let lambdas = p.req(c, "lambda", |s| {
                list(s, |x| {
                    let v = real(x)?;
                    if v > 0.0 && v < 1.0 {
                        Ok(v)
                    } else {
                        Err(format!("must lie in (0, 1), got {v}"))
                    }
                })
            });
            let slots = p.req(c, "slots", count(1));
            let probe_reps = p.opt(c, "probe_reps", 1, count(1));
            let w0 = p.opt(c, "w0", 0, count(0));
            let protocol = match (feedback, rule, p0, p_min) {
                (Some(f), Some(r), Some(p0), Some(pm)) => match Protocol::new(f, r, p0, pm) {
                    Ok(pr) => Some(pr),
                    Err(e) => {
                        c.push(p.line("p0").max(p.line("p_min")), format!("params: {e}"));
                        None
                    }
                },
                _ => None,
            };
            Some(ModelParams::Multiaccess(MultiaccessParams {
                protocol: protocol?,
                lambdas: lambdas?,
                slots: slots?,
                probe_reps: probe_reps? as usize,
                w0: w0?,
            }))
        }
    }
}

/// Parses a configuration; relative file references resolve against the
/// current directory.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_at(text, Path::new("."))
}

/// Parses a configuration whose relative file references resolve against `base`.
pub fn parse_config_at(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let mut c = Collector { errors: Vec::new() };
    let mut experiment = Section {
        name: "experiment",
        entries: BTreeMap::new(),
    };
    let mut params = Section {
        name: "params",
        entries: BTreeMap::new(),
    };
    let mut echo = BTreeMap::new();
    let mut current: Option<&'static str> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = match name.trim() {
                "experiment" => Some("experiment"),
                "params" => Some("params"),
                other => {
                    c.push(line, format!("unknown section [{other}]"));
                    None
                }
            };
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            c.push(line, format!("expected `key = value`, got '{content}'"));
            continue;
        };
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        let section = match current {
            Some("experiment") => &mut experiment,
            Some(_) => &mut params,
            None => {
                c.push(line, format!("key '{key}' outside a known section"));
                continue;
            }
        };
        if section.entries.contains_key(&key) {
            c.push(line, format!("duplicate key {}.{key}", section.name));
            continue;
        }
        echo.insert(format!("{}.{key}", section.name), value.clone());
        section.entries.insert(
            key,
            Entry {
                value,
                line,
                used: false,
            },
        );
    }

    let model = experiment.req(&mut c, "model", |s| s.parse::<Model>());
    let seed = experiment.req(&mut c, "seed", count(0));
    let replications = experiment.opt(&mut c, "replications", 1, count(1));
    let stream_offset = experiment.opt(&mut c, "stream_offset", 0, count(0));
    let output = experiment.get(&mut c, "output", |s| Ok(PathBuf::from(s.trim())));
    let threads = experiment.opt(&mut c, "threads", 0, count(0));
    experiment.report_unused(&mut c);

    let parsed = model.and_then(|m| parse_params(m, &mut params, &mut c, base));
    if model.is_some() {
        params.report_unused(&mut c);
    }
    let too_big = |v: u64| v > u64::from(u32::MAX);
    if replications.is_some_and(too_big) || stream_offset.is_some_and(too_big) {
        c.push(
            experiment.line("replications"),
            "experiment: replications and stream_offset must fit in 32 bits".into(),
        );
    }
    if let (Some(r), Some(o)) = (replications, stream_offset) {
        if r + o > u64::from(u32::MAX) {
            c.push(
                experiment.line("stream_offset"),
                "experiment: stream_offset + replications overflows 32 bits".into(),
            );
        }
    }

    if !c.errors.is_empty() {
        c.errors.sort_by_key(|e| e.line);
        return Err(Error::Config(c.errors));
    }
    Ok(ExperimentConfig {
        model: model.unwrap(),
        seed: seed.unwrap(),
        replications: replications.unwrap() as u32,
        stream_offset: stream_offset.unwrap() as u32,
        output,
        threads: Some(threads.unwrap() as usize).filter(|&t| t > 0),
        params: parsed.unwrap(),
        echo,
    })
}
