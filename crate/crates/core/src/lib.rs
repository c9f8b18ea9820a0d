//! Simulator and analysis toolkit for trust-based resilient consensus under
//! intermittent malicious attacks.
//!
//! Legitimate agents observe a stochastic trust value on every link, aggregate
//! it, and keep only neighbors whose aggregate trust stays close to the most
//! trusted one under a threshold that grows like `xi (t + 1)^gamma`. The
//! crate runs that protocol, the two attack models, the closed-form bounds on
//! misclassification and deviation, and a seeded Monte Carlo harness.

pub mod attack;
pub mod bounds;
pub mod cli;
pub mod consensus;
pub mod detection;
pub mod format;
pub mod graph;
pub mod harness;
pub mod trust;
