//! Statistical machinery shared by the models: confidence intervals,
//! distribution distances, tail-index estimation and the drift-based
//! stability classifier.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Regenerative estimates built from fewer cycles than this are flagged.
pub const MIN_CYCLES: usize = 30;
/// A Transient verdict needs the fitted second-half increase to cover at
/// least this fraction of the path range (rules out sublinear growth).
pub const LINEAR_GROWTH_FRACTION: f64 = 0.4;
/// A Stable verdict needs the running maximum of batch means to grow by
/// less than this fraction of the path range over the second half.
pub const MAX_GROWTH_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CiMethod {
    Regenerative,
    BatchMeans,
    Binomial,
    /// Large-sample normal approximation (Hill estimator).
    AsymptoticNormal,
}

/// Point estimate with a confidence interval. For symmetric methods
/// `lower = point - half_width` and `upper = point + half_width`; the
/// binomial (Wilson) interval is asymmetric and `half_width` is half its length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimateWithCI {
    pub point: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_eff: usize,
    pub method: CiMethod,
    pub low_confidence: bool,
}

impl EstimateWithCI {
    pub fn symmetric(point: f64, half_width: f64, level: f64, n_eff: usize, method: CiMethod) -> Self {
        Self {
            point,
            half_width,
            lower: point - half_width,
            upper: point + half_width,
            level,
            n_eff: n_eff.max(1),
            method,
            low_confidence: false,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    fn flagged(mut self, flag: bool) -> Self {
        self.low_confidence |= flag;
        self
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn student_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .map(|t| t.inverse_cdf(p))
        .unwrap_or(f64::INFINITY)
}

fn two_sided_z(level: f64) -> f64 {
    normal_quantile(0.5 + 0.5 * level)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, level: f64) -> EstimateWithCI {
    let n = trials.max(1) as f64;
    let p = successes as f64 / n;
    let z = two_sided_z(level);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let hw = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    EstimateWithCI {
        point: p,
        half_width: hw,
        lower: (center - hw).max(0.0),
        upper: (center + hw).min(1.0),
        level,
        n_eff: trials.max(1),
        method: CiMethod::Binomial,
        low_confidence: trials == 0,
    }
}

/// Ratio estimator `Σ sums / Σ lengths` over i.i.d. regenerative cycles with
/// a delta-method interval. Fewer than [`MIN_CYCLES`] cycles are flagged.
pub fn regenerative_ci(cycle_sums: &[f64], cycle_lengths: &[f64], level: f64) -> Result<EstimateWithCI> {
    if cycle_sums.len() != cycle_lengths.len() {
        return Err(Error::Degenerate("cycle sums and lengths differ in count".into()));
    }
    let n = cycle_sums.len();
    let total_len: f64 = cycle_lengths.iter().sum();
    if n == 0 || total_len <= 0.0 {
        return Err(Error::Degenerate("no complete regenerative cycle".into()));
    }
    let total: f64 = cycle_sums.iter().sum();
    let ratio = total / total_len;
    if n == 1 {
        let mut est = EstimateWithCI::symmetric(ratio, f64::INFINITY, level, 1, CiMethod::Regenerative);
        est.low_confidence = true;
        return Ok(est);
    }
    let nf = n as f64;
    let mean_len = total_len / nf;
    let var = cycle_sums
        .iter()
        .zip(cycle_lengths)
        .map(|(&s, &l)| {
            let z = s - ratio * l;
            z * z
        })
        .sum::<f64>()
        / (nf - 1.0);
    let se = (var / nf).sqrt() / mean_len;
    Ok(
        EstimateWithCI::symmetric(ratio, two_sided_z(level) * se, level, n, CiMethod::Regenerative)
            .flagged(n < MIN_CYCLES),
    )
}

/// Streaming form of [`regenerative_ci`] for runs too long to keep every
/// cycle in memory.
#[derive(Clone, Copy, Debug, Default)]
pub struct RegenerativeAccumulator {
    cycles: usize,
    sum: f64,
    len: f64,
    sum_sq: f64,
    len_sq: f64,
    cross: f64,
}

impl RegenerativeAccumulator {
    pub fn push(&mut self, cycle_sum: f64, cycle_len: f64) {
        self.cycles += 1;
        self.sum += cycle_sum;
        self.len += cycle_len;
        self.sum_sq += cycle_sum * cycle_sum;
        self.len_sq += cycle_len * cycle_len;
        self.cross += cycle_sum * cycle_len;
    }

    pub fn cycles(&self) -> usize {
        self.cycles
    }

    pub fn merge(&mut self, other: &Self) {
        self.cycles += other.cycles;
        self.sum += other.sum;
        self.len += other.len;
        self.sum_sq += other.sum_sq;
        self.len_sq += other.len_sq;
        self.cross += other.cross;
    }

    pub fn finish(&self, level: f64) -> Result<EstimateWithCI> {
        if self.cycles == 0 || self.len <= 0.0 {
            return Err(Error::Degenerate("no complete regenerative cycle".into()));
        }
        let ratio = self.sum / self.len;
        if self.cycles == 1 {
            let mut est = EstimateWithCI::symmetric(ratio, f64::INFINITY, level, 1, CiMethod::Regenerative);
            est.low_confidence = true;
            return Ok(est);
        }
        let nf = self.cycles as f64;
        let var = ((self.sum_sq - 2.0 * ratio * self.cross + ratio * ratio * self.len_sq) / (nf - 1.0)).max(0.0);
        let se = (var / nf).sqrt() / (self.len / nf);
        Ok(EstimateWithCI::symmetric(
            ratio,
            two_sided_z(level) * se,
            level,
            self.cycles,
            CiMethod::Regenerative,
        )
        .flagged(self.cycles < MIN_CYCLES))
    }
}

/// Classical batch-means interval for the mean of a correlated series.
pub fn batch_means_ci(values: &[f64], batches: usize, level: f64) -> Result<EstimateWithCI> {
    if batches < 2 || values.len() < batches {
        return Err(Error::Degenerate(format!(
            "batch means need ≥ 2 batches with ≥ 1 value each ({} values, {batches} batches)",
            values.len()
        )));
    }
    let size = values.len() / batches;
    let means: Vec<f64> = values
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let b = means.len() as f64;
    let grand = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1.0);
    let hw = student_quantile(0.5 + 0.5 * level, b - 1.0) * (var / b).sqrt();
    Ok(EstimateWithCI::symmetric(
        grand,
        hw,
        level,
        means.len(),
        CiMethod::BatchMeans,
    ))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) − F_b(x)|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "ks_distance needs non-empty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // advance past every copy of the smaller value in both samples
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_distance_to_cdf<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    assert!(!sample.is_empty(), "ks_distance_to_cdf needs a non-empty sample");
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic two-sample KS critical value at significance `alpha`.
pub fn ks_critical_value(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Default number of upper order statistics for the Hill estimator, `n^{2/3}`.
pub fn default_hill_k(n: usize) -> usize {
    ((n as f64).powf(2.0 / 3.0) as usize).clamp(10.min(n.saturating_sub(1)), n.saturating_sub(1))
}

/// Hill estimator of the tail index from the `k` largest observations,
/// with the asymptotic normal interval `α̂ ± z·α̂/√k`.
pub fn tail_index_hill(sample: &[f64], k: usize, level: f64) -> Result<EstimateWithCI> {
    if let Some(bad) = sample.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Degenerate(format!(
            "Hill estimator needs positive finite data, got {bad}"
        )));
    }
    if k < 10 || k >= sample.len() {
        return Err(Error::Degenerate(format!(
            "Hill needs 10 ≤ k < n, got k={k}, n={}",
            sample.len()
        )));
    }
    let mut s = sample.to_vec();
    // only the top k+1 order statistics matter
    s.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let threshold = s[k];
    let log_excess: f64 = s[..k].iter().map(|&x| (x / threshold).ln()).sum();
    if log_excess <= 0.0 {
        return Err(Error::Degenerate(
            "all log-excesses are zero; tail index undefined".into(),
        ));
    }
    let alpha = k as f64 / log_excess;
    let hw = two_sided_z(level) * alpha / (k as f64).sqrt();
    Ok(EstimateWithCI::symmetric(
        alpha,
        hw,
        level,
        k,
        CiMethod::AsymptoticNormal,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StabilityClass {
    Stable,
    NullBoundaryCandidate,
    Transient,
    Inconclusive,
}

impl StabilityClass {
    pub fn label(self) -> &'static str {
        match self {
            StabilityClass::Stable => "stable",
            StabilityClass::NullBoundaryCandidate => "null_boundary_candidate",
            StabilityClass::Transient => "transient",
            StabilityClass::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub class: StabilityClass,
    pub slope: f64,
    pub slope_ci: (f64, f64),
    /// Fitted second-half increase as a fraction of the path range.
    pub linear_growth: f64,
    /// Second-half growth of the running maximum of batch means, as a
    /// fraction of the path range.
    pub max_growth: f64,
}

impl StabilityVerdict {
    fn inconclusive() -> Self {
        Self {
            class: StabilityClass::Inconclusive,
            slope: f64::NAN,
            slope_ci: (f64::NEG_INFINITY, f64::INFINITY),
            linear_growth: f64::NAN,
            max_growth: f64::NAN,
        }
    }
}

/// Ordinary least squares `(slope, intercept)` of `y` on `t`.
pub fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let tm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sty, mut stt) = (0.0, 0.0);
    for &(t, y) in points {
        sty += (t - tm) * (y - ym);
        stt += (t - tm) * (t - tm);
    }
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    (slope, ym - slope * tm)
}

fn batch_points(points: &[(f64, f64)], window: usize) -> Vec<(f64, f64)> {
    points
        .chunks_exact(window)
        .map(|c| {
            let w = c.len() as f64;
            (
                c.iter().map(|p| p.0).sum::<f64>() / w,
                c.iter().map(|p| p.1).sum::<f64>() / w,
            )
        })
        .collect()
}

/// Classifies a `(time, level)` path by its drift.
///
/// The slope is the least-squares fit over the second half of the path; its
/// 95% interval comes from regressing batch means (batches of `window`
/// points) and using the residual spread with a Student quantile.
/// Transient: interval strictly above 0 and the fitted second-half increase
/// is at least [`LINEAR_GROWTH_FRACTION`] of the path range.
/// Stable: interval contains 0 and the running maximum of batch means grows
/// by less than [`MAX_GROWTH_FRACTION`] of the range over the second half.
/// A path still draining (interval below 0) is Inconclusive; everything
/// else is a NullBoundaryCandidate.
pub fn drift_classify(trajectory: &[(f64, f64)], window: usize) -> StabilityVerdict {
    let n = trajectory.len();
    if window == 0 || n < 2 * window {
        return StabilityVerdict::inconclusive();
    }
    let second = &trajectory[n / 2..];
    let batches = batch_points(second, window);
    if batches.len() < 3 {
        return StabilityVerdict::inconclusive();
    }
    let (lo_level, hi_level) = trajectory
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.1), hi.max(p.1))
        });
    let range = hi_level - lo_level;
    if range == 0.0 {
        return StabilityVerdict {
            class: StabilityClass::Stable,
            slope: 0.0,
            slope_ci: (0.0, 0.0),
            linear_growth: 0.0,
            max_growth: 0.0,
        };
    }

    let (slope, _) = least_squares(second);
    let (batch_slope, batch_icept) = least_squares(&batches);
    let b = batches.len() as f64;
    let tm = batches.iter().map(|p| p.0).sum::<f64>() / b;
    let stt: f64 = batches.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let rss: f64 = batches
        .iter()
        .map(|p| (p.1 - batch_icept - batch_slope * p.0).powi(2))
        .sum();
    let se = if stt > 0.0 {
        (rss / (b - 2.0) / stt).sqrt()
    } else {
        f64::INFINITY
    };
    let hw = student_quantile(0.975, b - 2.0) * se;
    let slope_ci = (slope - hw, slope + hw);

    let span = second[second.len() - 1].0 - second[0].0;
    let linear_growth = slope * span / range;

    let all_batches = batch_points(trajectory, window);
    let split = all_batches.len() / 2;
    let first_max = all_batches[..split.max(1)]
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let overall_max = all_batches.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let max_growth = (overall_max - first_max) / range;

    let class = if slope_ci.0 > 0.0 && linear_growth >= LINEAR_GROWTH_FRACTION {
        StabilityClass::Transient
    } else if slope_ci.0 <= 0.0 && slope_ci.1 >= 0.0 && max_growth < MAX_GROWTH_FRACTION {
        StabilityClass::Stable
    } else if slope_ci.1 < 0.0 {
        StabilityClass::Inconclusive
    } else {
        StabilityClass::NullBoundaryCandidate
    };
    StabilityVerdict {
        class,
        slope,
        slope_ci,
        linear_growth,
        max_growth,
    }
}

/// Samples a right-continuous step path at `points` equally spaced times in
/// `[t0, t1]`. The path must be sorted by time; before its first event the
/// level is `initial`.
pub fn resample_on_grid(path: &[(f64, f64)], initial: f64, t0: f64, t1: f64, points: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(points);
    let mut idx = 0;
    let mut level = initial;
    for g in 0..points {
        let t = if points == 1 {
            t1
        } else {
            t0 + (t1 - t0) * g as f64 / (points - 1) as f64
        };
        while idx < path.len() && path[idx].0 <= t {
            level = path[idx].1;
            idx += 1;
        }
        out.push((t, level));
    }
    out
}

/// Time average of a right-continuous step path over `[t0, t_end]`.
pub fn time_average(path: &[(f64, f64)], initial: f64, t0: f64, t_end: f64) -> f64 {
    if t_end <= t0 {
        return initial;
    }
    let mut area = 0.0;
    let mut last_t = t0;
    let mut level = initial;
    for &(t, y) in path {
        if t > t_end {
            break;
        }
        if t > last_t {
            area += level * (t - last_t);
            last_t = t;
        }
        level = y;
    }
    area += level * (t_end - last_t);
    area / (t_end - t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(f: impl Fn(f64) -> f64, n: usize) -> Vec<(f64, f64)> {
        (1..=n).map(|i| (i as f64, f(i as f64))).collect()
    }

    #[test]
    fn streaming_regenerative_matches_batch_form() {
        let sums = [3.0, 0.0, 7.5, 1.0, 2.0, 9.0, 0.5];
        let lens = [2.0, 1.0, 4.0, 1.0, 3.0, 5.0, 1.0];
        let direct = regenerative_ci(&sums, &lens, 0.95).unwrap();
        let mut acc = RegenerativeAccumulator::default();
        for (&s, &l) in sums.iter().zip(&lens) {
            acc.push(s, l);
        }
        let streamed = acc.finish(0.95).unwrap();
        assert!((direct.point - streamed.point).abs() < 1e-12);
        assert!((direct.half_width - streamed.half_width).abs() < 1e-9);
        assert_eq!(direct.low_confidence, streamed.low_confidence);
    }

    #[test]
    fn linear_path_is_transient() {
        let v = drift_classify(&path(|t| t, 2000), 100);
        assert_eq!(v.class, StabilityClass::Transient);
        assert!((v.slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_path_is_stable() {
        let v = drift_classify(&path(|_| 5.0, 2000), 100);
        assert_eq!(v.class, StabilityClass::Stable);
        assert_eq!(v.slope, 0.0);
    }

    #[test]
    fn square_root_path_is_null_candidate() {
        let v = drift_classify(&path(f64::sqrt, 10_000), 500);
        assert_eq!(v.class, StabilityClass::NullBoundaryCandidate, "{v:?}");
        assert!(v.slope.abs() < 0.01);
        assert!(v.max_growth >= MAX_GROWTH_FRACTION);
    }

    #[test]
    fn too_short_is_inconclusive() {
        assert_eq!(
            drift_classify(&path(|t| t, 150), 100).class,
            StabilityClass::Inconclusive
        );
        assert_eq!(drift_classify(&path(|t| t, 150), 0).class, StabilityClass::Inconclusive);
    }

    #[test]
    fn draining_path_is_inconclusive() {
        let v = drift_classify(&path(|t| 5000.0 - t, 2000), 100);
        assert_eq!(v.class, StabilityClass::Inconclusive);
    }

    #[test]
    fn ks_examples() {
        let a: Vec<f64> = (0..50).map(f64::from).collect();
        assert_eq!(ks_distance(&a, &a), 0.0);
        let b: Vec<f64> = (100..150).map(f64::from).collect();
        assert_eq!(ks_distance(&a, &b), 1.0);
        assert_eq!(ks_distance(&a, &b), ks_distance(&b, &a));
    }

    #[test]
    fn ks_handles_ties() {
        let a = [0.0, 0.0, 1.0, 1.0];
        let b = [0.0, 1.0, 1.0, 1.0];
        assert!((ks_distance(&a, &b) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ks_critical_value_matches_table() {
        // c(0.05) = 1.358
        let c = ks_critical_value(100, 100, 0.05);
        assert!((c - 1.358 * (0.02f64).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn hill_rejects_degenerate_inputs() {
        assert!(tail_index_hill(&[1.0; 100], 20, 0.95).is_err());
        assert!(tail_index_hill(&[1.0, -1.0, 2.0], 1, 0.95).is_err());
        let s: Vec<f64> = (1..100).map(f64::from).collect();
        assert!(tail_index_hill(&s, 5, 0.95).is_err());
        assert!(tail_index_hill(&s, 99, 0.95).is_err());
    }

    #[test]
    fn hill_on_exact_pareto_quantiles() {
        // deterministic Pareto(2) quantiles x_i = (n/i)^(1/2)
        let n = 100_000;
        let s: Vec<f64> = (1..=n).map(|i| (n as f64 / i as f64).sqrt()).collect();
        let est = tail_index_hill(&s, 1000, 0.95).unwrap();
        assert!((est.point - 2.0).abs() < 0.01, "{}", est.point);
    }

    #[test]
    fn regenerative_identical_cycles() {
        let est = regenerative_ci(&[3.0; 40], &[7.0; 40], 0.95).unwrap();
        assert_eq!(est.point, 3.0 / 7.0);
        assert!(est.half_width < 1e-12);
        assert!(!est.low_confidence);
    }

    #[test]
    fn regenerative_flags_few_cycles() {
        let est = regenerative_ci(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0], 0.95).unwrap();
        assert!(est.low_confidence);
        assert!(regenerative_ci(&[], &[], 0.95).is_err());
        assert!(regenerative_ci(&[1.0], &[2.0], 0.95).unwrap().half_width.is_infinite());
    }

    #[test]
    fn wilson_bounds() {
        let w = wilson_interval(0, 100, 0.95);
        assert_eq!(w.point, 0.0);
        assert_eq!(w.lower, 0.0);
        assert!(w.upper > 0.0 && w.upper < 0.05);
        let w = wilson_interval(50, 100, 0.95);
        assert!(w.contains(0.5));
    }

    #[test]
    fn grid_resampling_and_time_average() {
        let p = [(1.0, 2.0), (3.0, 0.0)];
        let g = resample_on_grid(&p, 0.0, 0.0, 4.0, 5);
        assert_eq!(g.iter().map(|x| x.1).collect::<Vec<_>>(), vec![0.0, 2.0, 2.0, 0.0, 0.0]);
        assert!((time_average(&p, 0.0, 0.0, 4.0) - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn hill_is_scale_equivariant(seed in 0u64..1000, c in 0.01f64..100.0) {
            let mut rng = crate::stochastic::RngStream::new(seed, 0);
            let s: Vec<f64> = (0..500).map(|_| rng.open_uniform().powf(-0.5)).collect();
            let scaled: Vec<f64> = s.iter().map(|x| x * c).collect();
            let a = tail_index_hill(&s, 50, 0.95).unwrap().point;
            let b = tail_index_hill(&scaled, 50, 0.95).unwrap().point;
            prop_assert!((a - b).abs() < 1e-9 * a);
        }

        #[test]
        fn ks_symmetric(xs in prop::collection::vec(0.0f64..10.0, 1..50), ys in prop::collection::vec(0.0f64..10.0, 1..50)) {
            prop_assert_eq!(ks_distance(&xs, &ys), ks_distance(&ys, &xs));
            prop_assert_eq!(ks_distance(&xs, &xs), 0.0);
        }

        #[test]
        fn drift_classify_shift_invariant(seed in 0u64..200, shift in -1000.0f64..1000.0) {
            let mut rng = crate::stochastic::RngStream::new(seed, 1);
            let slope = (seed % 3) as f64 * 0.5;
            let p: Vec<(f64, f64)> = (0..1000).map(|i| (i as f64, slope * i as f64 + 10.0 * rng.uniform())).collect();
            let q: Vec<(f64, f64)> = p.iter().map(|&(t, y)| (t, y + shift)).collect();
            let a = drift_classify(&p, 50);
            let b = drift_classify(&q, 50);
            prop_assert_eq!(a.class, b.class);
            prop_assert!((a.slope - b.slope).abs() < 1e-6);
        }
    }
}
