//! HTTP experiment service: anonymous viewing sessions with cache-aware
//! recommendations, rating capture and trace export.
//!
//! [`engine::Experiment`] holds the session logic, [`api::router`] exposes it over
//! HTTP, and [`store::EventLog`] persists every change as an append-only log.

pub mod api;
pub mod config;
pub mod engine;
pub mod store;

pub use api::router;
pub use config::{ExperimentConfig, Region};
pub use engine::{Experiment, ServiceError, ServiceOptions, StepAck, StepSubmission};
