//! Stochastic capacity estimation for freeway sections.
//!
//! Detector events are aggregated into flow intervals, breakdowns are
//! detected, and a Weibull capacity distribution is estimated either by the
//! product-limit method or by fitting the cumulative frequency of breakdowns.

pub mod capacity;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod svg;
pub mod synthetic;
pub mod traffic;

pub use error::{Error, Result};
