//! queuelab: Monte-Carlo experiments for stability and rare-event problems in
//! queueing. Single- and multi-server FCFS queues, workload routing, greedy
//! servers on a circle, two-server polling with fluid limits and slotted
//! multi-access channels.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod gg1;
pub mod ggm;
pub mod multiaccess;
pub mod output;
pub mod polling;
pub mod routing;
pub mod runner;
pub mod spatial;
pub mod stochastic;

pub use error::{Error, Result};
