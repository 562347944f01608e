//! Parametric service and interarrival laws with their analytic functionals.

use std::fmt;
use std::str::FromStr;

use statrs::function::gamma::gamma;

use super::quadrature;
use super::rng::RngStream;
use crate::error::{invalid, Error, Result};

/// Relative tolerance for quadrature-backed integrated tails.
const QUAD_TOL: f64 = 1e-12;

/// The parametric family of a [`DistributionSpec`].
#[derive(Clone, Debug, PartialEq)]
pub enum DistributionKind {
    Deterministic {
        value: f64,
    },
    Exponential {
        rate: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// `P(σ > x) = (x_min / x)^alpha` for `x ≥ x_min`.
    Pareto {
        alpha: f64,
        x_min: f64,
    },
    /// Law on `[0, ∞)` with `P(σ > x) = exp(-x^beta)`, `0 < beta < 1`.
    WeibullTail {
        beta: f64,
    },
    /// Resampling from a fixed, ascending-sorted data set.
    Empirical {
        samples: Vec<f64>,
        mean: f64,
    },
}

/// A validated non-negative distribution. Parameters are checked when the
/// spec is built; sampling and the analytic functionals never fail.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionSpec {
    kind: DistributionKind,
}

fn finite_nonneg(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(invalid(name, format!("must be finite and ≥ 0, got {v}")))
    }
}

fn finite_pos(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

impl DistributionSpec {
    pub fn deterministic(value: f64) -> Result<Self> {
        let value = finite_nonneg("det.value", value)?;
        Ok(Self {
            kind: DistributionKind::Deterministic { value },
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        let rate = finite_pos("exp.rate", rate)?;
        Ok(Self {
            kind: DistributionKind::Exponential { rate },
        })
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        let low = finite_nonneg("uniform.low", low)?;
        let high = finite_nonneg("uniform.high", high)?;
        if high <= low {
            return Err(invalid("uniform.high", format!("must exceed low ({low}), got {high}")));
        }
        Ok(Self {
            kind: DistributionKind::Uniform { low, high },
        })
    }

    /// Pareto with `alpha ≤ 1` is accepted; its mean is reported as infinite.
    pub fn pareto(alpha: f64, x_min: f64) -> Result<Self> {
        let alpha = finite_pos("pareto.alpha", alpha)?;
        let x_min = finite_pos("pareto.x_min", x_min)?;
        Ok(Self {
            kind: DistributionKind::Pareto { alpha, x_min },
        })
    }

    pub fn weibull_tail(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid("weibull_tail.beta", format!("must lie in (0, 1), got {beta}")));
        }
        Ok(Self {
            kind: DistributionKind::WeibullTail { beta },
        })
    }

    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("empirical.samples", "must be non-empty"));
        }
        for &s in &samples {
            finite_nonneg("empirical.samples", s)?;
        }
        samples.sort_by(f64::total_cmp);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        Ok(Self {
            kind: DistributionKind::Empirical { samples, mean },
        })
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    /// Expected value; `f64::INFINITY` for Pareto with `alpha ≤ 1`.
    pub fn mean(&self) -> f64 {
        match self.kind {
            DistributionKind::Deterministic { value } => value,
            DistributionKind::Exponential { rate } => 1.0 / rate,
            DistributionKind::Uniform { low, high } => 0.5 * (low + high),
            DistributionKind::Pareto { alpha, x_min } => {
                if alpha > 1.0 {
                    alpha * x_min / (alpha - 1.0)
                } else {
                    f64::INFINITY
                }
            }
            DistributionKind::WeibullTail { beta } => gamma(1.0 + 1.0 / beta),
            DistributionKind::Empirical { mean, .. } => mean,
        }
    }

    /// `P(σ > x)`.
    pub fn tail(&self, x: f64) -> f64 {
        match &self.kind {
            DistributionKind::Deterministic { value } => {
                if x < *value {
                    1.0
                } else {
                    0.0
                }
            }
            DistributionKind::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            DistributionKind::Uniform { low, high } => {
                if x < *low {
                    1.0
                } else if x >= *high {
                    0.0
                } else {
                    (high - x) / (high - low)
                }
            }
            DistributionKind::Pareto { alpha, x_min } => {
                if x < *x_min {
                    1.0
                } else {
                    (x_min / x).powf(*alpha)
                }
            }
            DistributionKind::WeibullTail { beta } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-x.powf(*beta)).exp()
                }
            }
            DistributionKind::Empirical { samples, .. } => {
                let at_most = samples.partition_point(|&s| s <= x);
                (samples.len() - at_most) as f64 / samples.len() as f64
            }
        }
    }

    /// `∫_x^∞ P(σ > y) dy` without the clamp at 1 (infinite when the mean is).
    pub fn integrated_tail_unclamped(&self, x: f64) -> f64 {
        if x < 0.0 {
            // the law lives on [0, ∞), so the tail is 1 below zero
            return -x + self.integrated_tail_unclamped(0.0);
        }
        match &self.kind {
            DistributionKind::Deterministic { value } => (value - x).max(0.0),
            DistributionKind::Exponential { rate } => (-rate * x).exp() / rate,
            DistributionKind::Uniform { low, high } => {
                let width = high - low;
                if x < *low {
                    (low - x) + 0.5 * width
                } else if x < *high {
                    (high - x) * (high - x) / (2.0 * width)
                } else {
                    0.0
                }
            }
            DistributionKind::Pareto { alpha, x_min } => {
                if *alpha <= 1.0 {
                    f64::INFINITY
                } else if x < *x_min {
                    (x_min - x) + x_min / (alpha - 1.0)
                } else {
                    x_min / (alpha - 1.0) * (x_min / x).powf(alpha - 1.0)
                }
            }
            DistributionKind::WeibullTail { beta } => weibull_integrated_tail(*beta, x),
            DistributionKind::Empirical { samples, .. } => {
                let above = samples.partition_point(|&s| s <= x);
                samples[above..].iter().map(|s| s - x).sum::<f64>() / samples.len() as f64
            }
        }
    }

    /// Tail of the integrated distribution `B_I`: `min(1, ∫_x^∞ P(σ > y) dy)`.
    pub fn integrated_tail(&self, x: f64) -> f64 {
        self.integrated_tail_unclamped(x).min(1.0)
    }

    /// One draw by inversion. Every family consumes exactly one 64-bit word,
    /// so streams stay aligned when specs are swapped between runs.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match &self.kind {
            DistributionKind::Deterministic { value } => {
                rng.uniform();
                *value
            }
            DistributionKind::Exponential { rate } => -rng.open_uniform().ln() / rate,
            DistributionKind::Uniform { low, high } => low + (high - low) * rng.uniform(),
            DistributionKind::Pareto { alpha, x_min } => x_min * rng.open_uniform().powf(-1.0 / alpha),
            DistributionKind::WeibullTail { beta } => (-rng.open_uniform().ln()).powf(1.0 / beta),
            DistributionKind::Empirical { samples, .. } => {
                let idx = ((rng.uniform() * samples.len() as f64) as usize).min(samples.len() - 1);
                samples[idx]
            }
        }
    }

    /// Points where the tail has a kink or jump; quadrature should split there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            DistributionKind::Deterministic { value } => vec![*value],
            DistributionKind::Uniform { low, high } => vec![*low, *high],
            DistributionKind::Pareto { x_min, .. } => vec![*x_min],
            DistributionKind::Empirical { samples, .. } => samples.clone(),
            _ => Vec::new(),
        }
    }
}

/// `∫_x^∞ exp(-y^β) dy`, computed as `(1/β) ∫_{x^β}^∞ u^{1/β-1} e^{-u} du`.
fn weibull_integrated_tail(beta: f64, x: f64) -> f64 {
    let lower = x.powf(beta);
    let power = 1.0 / beta - 1.0;
    // factor e^{-lower} out so the integrand stays O(1) deep in the tail
    let scaled = quadrature::integrate_to_infinity(
        |u: f64| {
            if u <= 0.0 {
                0.0
            } else {
                u.powf(power) * (lower - u).exp()
            }
        },
        lower,
        QUAD_TOL,
    );
    scaled * (-lower).exp() / beta
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DistributionKind::Deterministic { value } => write!(f, "det({value:?})"),
            DistributionKind::Exponential { rate } => write!(f, "exp({rate:?})"),
            DistributionKind::Uniform { low, high } => write!(f, "uniform({low:?},{high:?})"),
            DistributionKind::Pareto { alpha, x_min } => write!(f, "pareto({alpha:?},{x_min:?})"),
            DistributionKind::WeibullTail { beta } => write!(f, "weibull_tail({beta:?})"),
            DistributionKind::Empirical { samples, .. } => {
                let parts: Vec<String> = samples.iter().map(|s| format!("{s:?}")).collect();
                write!(f, "empirical({})", parts.join(","))
            }
        }
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let syntax = |reason: &str| Error::DistributionSyntax {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let trimmed = text.trim();
        let open = trimmed.find('(').ok_or_else(|| syntax("expected `name(args)`"))?;
        if !trimmed.ends_with(')') {
            return Err(syntax("missing closing parenthesis"));
        }
        let name = trimmed[..open].trim().to_ascii_lowercase();
        let inner = &trimmed[open + 1..trimmed.len() - 1];
        let args = inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| syntax(&format!("`{s}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(syntax(&format!("`{name}` takes {n} argument(s), got {}", args.len())))
            }
        };
        match name.as_str() {
            "det" | "deterministic" => {
                arity(1)?;
                Self::deterministic(args[0])
            }
            "exp" | "exponential" => {
                arity(1)?;
                Self::exponential(args[0])
            }
            "uniform" => {
                arity(2)?;
                Self::uniform(args[0], args[1])
            }
            "pareto" => {
                arity(2)?;
                Self::pareto(args[0], args[1])
            }
            "weibull_tail" => {
                arity(1)?;
                Self::weibull_tail(args[0])
            }
            "empirical" => Self::empirical(args),
            _ => Err(syntax(&format!("unknown distribution `{name}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(s: &str) -> DistributionSpec {
        s.parse().unwrap()
    }

    #[test]
    fn deterministic_sample_is_point_mass() {
        let d = DistributionSpec::deterministic(3.0).unwrap();
        let mut rng = RngStream::new(1, 1);
        assert_eq!(d.sample(&mut rng), 3.0);
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = DistributionSpec::exponential(1.0).unwrap();
        let a = d.sample(&mut RngStream::new(99, 4));
        let b = d.sample(&mut RngStream::new(99, 4));
        assert_eq!(a, b);
    }

    #[test]
    fn one_word_per_draw_for_every_family() {
        for text in [
            "det(2)",
            "exp(1)",
            "uniform(0,1)",
            "pareto(2,1)",
            "weibull_tail(0.5)",
            "empirical(1,2,3)",
        ] {
            let d = spec(text);
            let mut a = RngStream::new(7, 0);
            d.sample(&mut a);
            let mut b = RngStream::new(7, 0);
            b.uniform();
            assert_eq!(a.uniform(), b.uniform(), "{text}");
        }
    }

    #[test]
    fn invalid_parameters_rejected_at_construction() {
        assert!(DistributionSpec::exponential(0.0).is_err());
        assert!(DistributionSpec::exponential(-1.0).is_err());
        assert!(DistributionSpec::uniform(2.0, 1.0).is_err());
        assert!(DistributionSpec::pareto(0.0, 1.0).is_err());
        assert!(DistributionSpec::weibull_tail(1.0).is_err());
        assert!(DistributionSpec::weibull_tail(0.0).is_err());
        assert!(DistributionSpec::deterministic(f64::NAN).is_err());
        assert!(DistributionSpec::empirical(vec![]).is_err());
        assert!(DistributionSpec::pareto(0.9, 1.0).is_ok());
    }

    #[test]
    fn pareto_mean_infinite_below_one() {
        assert!(spec("pareto(0.9,1)").mean().is_infinite());
        assert_eq!(spec("pareto(2,1)").mean(), 2.0);
    }

    #[test]
    fn integrated_tail_examples() {
        assert!((spec("exp(1)").integrated_tail(2.0) - (-2.0f64).exp()).abs() < 1e-15);
        assert!((spec("pareto(2,1)").integrated_tail(4.0) - 0.25).abs() < 1e-15);
        // mean ≥ 1 clamps at zero
        for text in ["exp(0.5)", "det(3)", "pareto(2,1)", "uniform(1,3)", "weibull_tail(0.5)"] {
            assert_eq!(spec(text).integrated_tail(0.0), 1.0, "{text}");
        }
    }

    #[test]
    fn weibull_integrated_tail_matches_incomplete_gamma() {
        use statrs::function::gamma::gamma_ur;
        for &beta in &[0.2, 0.35, 0.5, 0.75, 0.9] {
            let d = DistributionSpec::weibull_tail(beta).unwrap();
            for &x in &[0.0f64, 0.1, 1.0, 3.0, 10.0, 50.0] {
                let a = 1.0 / beta;
                let upper = if x == 0.0 { 1.0 } else { gamma_ur(a, x.powf(beta)) };
                let exact = gamma(1.0 + a) * upper;
                let got = d.integrated_tail_unclamped(x);
                assert!(
                    ((got - exact) / exact).abs() < 1e-8,
                    "beta={beta} x={x}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn weibull_mean_equals_integrated_tail_at_zero() {
        let d = spec("weibull_tail(0.5)");
        assert!((d.mean() - 2.0).abs() < 1e-12);
        assert!((d.integrated_tail_unclamped(0.0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        for text in [
            "det(1.5)",
            "exp(1)",
            "exp(3)",
            "uniform(0.5,2)",
            "pareto(2.5,1)",
            "pareto(3.5,0.5)",
        ] {
            let d = spec(text);
            for &x in &[0.0, 0.3, 1.0, 1.7, 4.0, 12.0] {
                let mut cuts: Vec<f64> = d.breakpoints().into_iter().filter(|&b| b > x).collect();
                cuts.insert(0, x);
                let mut total = 0.0;
                for w in cuts.windows(2) {
                    total += quadrature::integrate(|y| d.tail(y), w[0], w[1], 1e-13);
                }
                total += quadrature::integrate_to_infinity(|y| d.tail(y), *cuts.last().unwrap(), 1e-13);
                let closed = d.integrated_tail_unclamped(x);
                assert!(
                    (total - closed).abs() < 1e-6 * closed.max(1e-300) + 1e-12,
                    "{text} x={x}: {total} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn empirical_functionals() {
        let d = spec("empirical(3,1,2)");
        assert_eq!(d.mean(), 2.0);
        assert!((d.tail(1.5) - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.integrated_tail_unclamped(1.5) - (0.5 + 1.5) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn text_form_round_trips() {
        for text in [
            "det(3.0)",
            "exp(1.0)",
            "uniform(0.5,2.0)",
            "pareto(2.5,1.0)",
            "weibull_tail(0.5)",
            "empirical(1.0,2.0)",
        ] {
            let d = spec(text);
            assert_eq!(d.to_string(), text);
            assert_eq!(spec(&d.to_string()), d);
        }
        assert!("exp(1,2)".parse::<DistributionSpec>().is_err());
        assert!("gamma(2)".parse::<DistributionSpec>().is_err());
        assert!("exp 1".parse::<DistributionSpec>().is_err());
    }

    fn any_spec() -> impl Strategy<Value = DistributionSpec> {
        prop_oneof![
            (0.0f64..5.0).prop_map(|c| DistributionSpec::deterministic(c).unwrap()),
            (0.1f64..5.0).prop_map(|r| DistributionSpec::exponential(r).unwrap()),
            (0.0f64..3.0, 0.1f64..3.0).prop_map(|(a, w)| DistributionSpec::uniform(a, a + w).unwrap()),
            (0.5f64..5.0, 0.1f64..3.0).prop_map(|(a, m)| DistributionSpec::pareto(a, m).unwrap()),
            (0.1f64..0.95).prop_map(|b| DistributionSpec::weibull_tail(b).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn tails_are_monotone(d in any_spec(), y in 0.0f64..20.0, dx in 0.0f64..20.0) {
            let x = y + dx;
            prop_assert!(d.tail(x) <= d.tail(y));
            prop_assert!(d.integrated_tail(x) <= d.integrated_tail(y) + 1e-12);
            prop_assert!(d.tail(-1e-9) == 1.0);
        }
    }
}
