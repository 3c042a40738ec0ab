//! Modeling toolkit for blockchain-assisted radio access networks (B-RAN).
//!
//! A B-RAN front-ends radio access with a blockchain: service requests queue
//! for inclusion in a mined block, wait for a configurable number of
//! confirmations, and are then served by a pool of parallel access links.
//! This crate models that pipeline four ways and lets the routes check each
//! other:
//!
//! * [`model`] — the domain types and the continuous-time transition kernel
//!   of the two-queue Markov chain.
//! * [`analytic`] — closed-form latency components and bounds, plus the
//!   alternate-history attack success series.
//! * [`ctmc`] — exact steady-state solution of the chain on a truncated
//!   state space, with Little's-law latency.
//! * [`des`] — discrete-event simulation of the full pipeline with
//!   per-request records and confidence intervals.
//! * [`attack`] — Monte Carlo simulation of the attack race, including
//!   finite give-up thresholds the closed form cannot express.

pub mod analytic;
pub mod attack;
pub mod ctmc;
pub mod des;
pub mod model;

pub use analytic::LatencyReport;
pub use attack::AttackEstimate;
pub use des::{SimConfig, SimStats};
pub use model::{AttackParams, SystemParams, SystemState};
