//! Offline analytics for multimodal bicyclist/pedestrian simulator recordings.
//!
//! The pipeline ingests pose, gaze, smartwatch and annotation logs, aligns
//! them on a common session clock, computes rolling gaze entropies and
//! Bayesian change points, places change points on the road corridor, and
//! correlates them with annotated events. [`synthgen`] produces sessions
//! with known ground truth for end-to-end checks.

pub mod bcp;
pub mod error;
pub mod events;
pub mod gaze;
pub mod ingest;
pub mod kv;
pub mod model;
pub mod spatial;
pub mod synthgen;

pub use error::{Error, Result};
