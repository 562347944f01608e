//! Driving sequences `{(σ_n, t_n)}` and the traffic intensity they induce.

use super::distribution::DistributionSpec;
use super::rng::RngStream;
use crate::error::{invalid, Result};

/// Second regime of a Markov-modulated input. Regime 0 uses the process's
/// own `service`/`interarrival`; regime 1 uses the specs stored here.
#[derive(Clone, Debug, PartialEq)]
pub struct Modulation {
    /// Probability of leaving regime 0, resp. regime 1, after each customer.
    switch: [f64; 2],
    pub alt_service: DistributionSpec,
    pub alt_interarrival: DistributionSpec,
}

impl Modulation {
    pub fn new(
        leave0: f64,
        leave1: f64,
        alt_service: DistributionSpec,
        alt_interarrival: DistributionSpec,
    ) -> Result<Self> {
        for (name, p) in [("modulation.p01", leave0), ("modulation.p10", leave1)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(invalid(name, format!("switch probability must lie in (0, 1], got {p}")));
            }
        }
        Ok(Self {
            switch: [leave0, leave1],
            alt_service,
            alt_interarrival,
        })
    }

    /// Row-stochastic 2×2 switch matrix.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [
            [1.0 - self.switch[0], self.switch[0]],
            [self.switch[1], 1.0 - self.switch[1]],
        ]
    }

    /// Stationary probability of regime 0.
    pub fn stationary_regime0(&self) -> f64 {
        self.switch[1] / (self.switch[0] + self.switch[1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dependence {
    Iid,
    MarkovModulated(Box<Modulation>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InputProcess {
    pub service: DistributionSpec,
    pub interarrival: DistributionSpec,
    pub dependence: Dependence,
}

impl InputProcess {
    pub fn iid(service: DistributionSpec, interarrival: DistributionSpec) -> Self {
        Self {
            service,
            interarrival,
            dependence: Dependence::Iid,
        }
    }

    pub fn modulated(service: DistributionSpec, interarrival: DistributionSpec, modulation: Modulation) -> Self {
        Self {
            service,
            interarrival,
            dependence: Dependence::MarkovModulated(Box::new(modulation)),
        }
    }

    pub fn is_iid(&self) -> bool {
        matches!(self.dependence, Dependence::Iid)
    }

    /// Stationary means `(E σ, E t)`.
    pub fn means(&self) -> (f64, f64) {
        match &self.dependence {
            Dependence::Iid => (self.service.mean(), self.interarrival.mean()),
            Dependence::MarkovModulated(m) => {
                let p0 = m.stationary_regime0();
                let p1 = 1.0 - p0;
                (
                    p0 * self.service.mean() + p1 * m.alt_service.mean(),
                    p0 * self.interarrival.mean() + p1 * m.alt_interarrival.mean(),
                )
            }
        }
    }

    pub fn driver(&self) -> InputDriver<'_> {
        InputDriver {
            process: self,
            regime: None,
        }
    }
}

/// Draws the pair sequence. In modulated mode the first call samples the
/// starting regime from the stationary law, so the output is stationary.
#[derive(Debug)]
pub struct InputDriver<'a> {
    process: &'a InputProcess,
    regime: Option<usize>,
}

impl InputDriver<'_> {
    /// Next `(σ_n, t_n)`.
    pub fn next_pair(&mut self, rng: &mut RngStream) -> (f64, f64) {
        match &self.process.dependence {
            Dependence::Iid => {
                let sigma = self.process.service.sample(rng);
                let t = self.process.interarrival.sample(rng);
                (sigma, t)
            }
            Dependence::MarkovModulated(m) => {
                let regime = match self.regime {
                    Some(r) => r,
                    None => usize::from(rng.uniform() >= m.stationary_regime0()),
                };
                let (sigma, t) = if regime == 0 {
                    (self.process.service.sample(rng), self.process.interarrival.sample(rng))
                } else {
                    (m.alt_service.sample(rng), m.alt_interarrival.sample(rng))
                };
                let leave = rng.uniform() < m.switch[regime];
                self.regime = Some(if leave { 1 - regime } else { regime });
                (sigma, t)
            }
        }
    }

    /// Next `ξ_n = σ_n − t_n`.
    pub fn next_increment(&mut self, rng: &mut RngStream) -> f64 {
        let (sigma, t) = self.next_pair(rng);
        sigma - t
    }
}

/// Traffic intensity `ρ = E σ / E t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rho {
    Finite(f64),
    Infinite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrafficIntensity {
    pub rho: Rho,
    /// `ρ < m`; the boundary `ρ = m` counts as unstable.
    pub stable: bool,
}

impl TrafficIntensity {
    pub fn value(&self) -> Option<f64> {
        match self.rho {
            Rho::Finite(r) => Some(r),
            Rho::Infinite => None,
        }
    }
}

pub fn traffic_intensity(process: &InputProcess, servers: usize) -> Result<TrafficIntensity> {
    if servers == 0 {
        return Err(invalid("servers", "must be ≥ 1"));
    }
    let (es, et) = process.means();
    if !es.is_finite() || et == 0.0 {
        return Ok(TrafficIntensity {
            rho: Rho::Infinite,
            stable: false,
        });
    }
    if !et.is_finite() {
        return Err(invalid("interarrival", "mean interarrival time must be finite"));
    }
    let rho = es / et;
    Ok(TrafficIntensity {
        rho: Rho::Finite(rho),
        stable: rho < servers as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: &str) -> DistributionSpec {
        s.parse().unwrap()
    }

    #[test]
    fn intensity_examples() {
        let p = InputProcess::iid(spec("exp(1)"), spec("exp(0.5)"));
        let ti = traffic_intensity(&p, 2).unwrap();
        assert_eq!(ti.rho, Rho::Finite(0.5));
        assert!(ti.stable);

        let p = InputProcess::iid(spec("det(2)"), spec("det(1)"));
        let ti = traffic_intensity(&p, 2).unwrap();
        assert_eq!(ti.rho, Rho::Finite(2.0));
        assert!(!ti.stable);

        let p = InputProcess::iid(spec("pareto(0.9,1)"), spec("exp(1)"));
        let ti = traffic_intensity(&p, 2).unwrap();
        assert_eq!(ti.rho, Rho::Infinite);
        assert!(!ti.stable);

        assert!(traffic_intensity(&p, 0).is_err());
    }

    #[test]
    fn modulated_intensity_uses_stationary_mix() {
        let m = Modulation::new(0.1, 0.3, spec("det(3)"), spec("det(1)")).unwrap();
        let p = InputProcess::modulated(spec("det(1)"), spec("det(1)"), m);
        // π0 = 0.3 / 0.4 = 0.75
        let ti = traffic_intensity(&p, 2).unwrap();
        let rho = ti.value().unwrap();
        assert!((rho - (0.75 * 1.0 + 0.25 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn modulation_rejects_bad_switch() {
        assert!(Modulation::new(0.0, 0.5, spec("det(1)"), spec("det(1)")).is_err());
        assert!(Modulation::new(0.5, 1.5, spec("det(1)"), spec("det(1)")).is_err());
    }

    #[test]
    fn modulated_driver_visits_both_regimes_in_stationary_proportion() {
        let m = Modulation::new(0.2, 0.2, spec("det(5)"), spec("det(1)")).unwrap();
        let p = InputProcess::modulated(spec("det(1)"), spec("det(1)"), m);
        let mut rng = RngStream::new(8, 0);
        let mut d = p.driver();
        let n = 100_000;
        let high = (0..n).filter(|_| d.next_pair(&mut rng).0 > 2.0).count();
        let frac = high as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }
}
