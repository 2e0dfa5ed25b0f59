//! Core of the stress-study platform.
//!
//! * [`mat`] generates, evaluates and scores mental arithmetic questions.
//! * [`session`] is the protocol phase machine with its event log.
//! * [`ecg`] turns raw ECG into R-peaks, heart rate and per-phase statistics.
//! * [`store`] owns the on-disk session layout.
//! * [`analysis`] and [`simulate`] build reports and synthetic sessions.
//!
//! Batch entry points take a [`Strategy`]; with the `parallel` feature
//! (default) they fan out over rayon, otherwise they run sequentially.

pub mod analysis;
pub mod ecg;
pub mod mat;
pub mod session;
pub mod simulate;
pub mod store;
mod strategy;

pub use strategy::Strategy;
