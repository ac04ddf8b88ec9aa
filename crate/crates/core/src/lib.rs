//! Credit analysis of small firms from non-financial evidence, either as a
//! single-pass report ([`nas`]) or as a ten-turn debate between two agent
//! teams ([`debate`]) condensed into a summary ([`report`]).
//!
//! [`orchestrator`] wires configuration, the evidence [`pool`], a model
//! backend and search into reproducible runs. [`metrics`] and [`stats`]
//! score the outputs.
//!
//! ```
//! use kpdebate::guideline::{classify_signal, FactorId, Observation, SignalPolarity};
//!
//! let s = classify_signal(FactorId::SearchVolumeTrend, Observation::Increasing).unwrap();
//! assert_eq!(s, SignalPolarity::Favorable);
//! ```

pub mod clock;
pub mod debate;
pub mod guideline;
pub mod pool;
pub mod runtime;
pub mod violation;
pub mod artifact;
pub mod nas;
pub mod report;
pub mod metrics;
pub mod stats;
pub mod config;
pub mod orchestrator;
pub mod schema;
