//! Dataset condensation for time-series forecasting.
//!
//! A full training series is distilled into a short synthetic series by
//! trajectory matching against a buffer of expert forecasters, interleaved
//! with an additive label update that pulls the synthetic targets towards
//! expert predictions. Synthetic series are judged by training fresh
//! forecasters on them and measuring MAE/MSE on the held-out split.

pub mod buffer;
pub mod cli;
pub mod condense;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod forecaster;
pub mod seed;
pub mod unroll;

pub use error::{Error, Result};
