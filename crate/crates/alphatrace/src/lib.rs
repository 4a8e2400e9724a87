//! Deterministic, auditable factor-discovery engine.
//!
//! Candidates expressed in a constrained point-in-time factor DSL are
//! evaluated on a fixed training window, gated, logged to an append-only
//! hash-chained trace, curated into pools, combined by ridge regression, and
//! validated via quintile long-short backtests with transaction costs.

pub mod combine;
pub mod config;
pub mod dsl;
pub mod error;
pub mod eval;
pub mod grid;
pub mod panel;
pub mod portfolio;
pub mod search;
pub mod serde_f64;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
