//! Limit order book market simulator with a learned spoofing detector and
//! normatively guided Q-learning traders.

pub mod agents;
pub mod book;
pub mod dataset;
pub mod detector;
pub mod experiment;
pub mod fundamental;
pub mod guidance;
pub mod kernel;
pub mod market;
pub mod policy;
pub mod qlearn;
pub mod report;
pub mod scenario;
pub mod spoof;
pub mod trader;
