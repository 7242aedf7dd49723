//! Panel-data fixed-effects and instrumental-variables estimation with
//! weak-instrument diagnostics, a spatial exposure-instrument builder, a
//! Monte Carlo validation harness, and journal-style table rendering.
//!
//! The estimators are pure functions of immutable inputs: a [`panel::PanelDataset`]
//! never mutates after load, so concurrent estimations on shared data are
//! safe. Results are deterministic for fixed inputs and seeds.
//!
//! Known limitation: including a lagged dependent variable under entity
//! fixed effects induces Nickell bias in short panels. The estimators run
//! exactly that regression when asked to; no dynamic-panel correction is
//! applied.

pub mod diagnostics;
pub mod error;
pub mod instrument;
pub mod panel;
pub mod regression;
pub mod reporting;
pub mod simulation;

pub use error::{Error, Result};
