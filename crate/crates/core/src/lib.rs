//! Natural Disasters Index (NDI) toolkit.
//!
//! Builds a loss index from storm-event property damage records and
//! evaluates it by GARCH-NIG Monte Carlo option pricing under an Esscher
//! risk-neutral measure, Euler risk budgets across disaster types, and
//! CoVaR-family stress tests against climate factors.

pub mod dist;
pub mod garch;
pub mod index;
pub mod ingest;
pub mod optim;
pub mod pricing;
pub mod riskbudget;
pub mod rng;
pub mod stats;
pub mod stress;
pub mod synth;
