//! Distributions, random streams and driving input processes shared by every model.

pub mod distribution;
pub mod input;
pub mod quadrature;
pub mod rng;

pub use distribution::{DistributionKind, DistributionSpec};
pub use input::{traffic_intensity, Dependence, InputDriver, InputProcess, Modulation, Rho, TrafficIntensity};
pub use rng::RngStream;
