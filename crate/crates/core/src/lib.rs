//! Coreset selection for multi-object detection datasets.
//!
//! Features are ingested per object (one row per annotation). The main method
//! averages object features per (image, class), then picks images one class
//! at a time with a greedy score that trades off similarity to the unselected
//! pool against similarity to what is already selected. Baselines, analysis
//! metrics, a synthetic generator and a timing harness live alongside it.

pub mod baselines;
pub mod bench;
pub mod csod;
pub mod error;
pub mod metrics;
pub mod model;
pub mod prototypes;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
pub use model::{cosine, BoundingBox, Dataset, DatasetManifest, FeatureStore, ImageRecord, ObjectRecord};
pub use prototypes::{CandidateMode, Prototype, PrototypeIndex};
pub use selection::{
    default_lambda, run, AnnotationRange, Lambda, Method, SelectionConfig, SelectionResult, SelectionStatus,
};
