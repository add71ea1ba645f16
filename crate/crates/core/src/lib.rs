//! Continuous double auction simulator with classic trading agents and an
//! LSTM-driven trader.
//!
//! The pipeline runs in four stages: [`datagen`] runs sessions of legacy
//! traders and records a feature snapshot per trade; [`neural`] trains the
//! network on that corpus; [`experiments`] pits strategies against each other;
//! [`analysis`] compares the resulting profits.

pub mod analysis;
pub mod datagen;
pub mod dtx;
pub mod error;
pub mod exchange;
pub mod experiments;
pub mod features;
pub mod neural;
pub mod pool;
pub mod selfcheck;
pub mod session;
pub mod traders;

pub use error::{Error, Result};
