//! Early prediction of student outcomes from virtual learning environment
//! (VLE) logs.
//!
//! The crate ingests the seven-table OULAD-style CSV layout, engineers a
//! fixed 15-column feature frame, trains a small 1-D convolutional network
//! (or a dense baseline) with hand-written backpropagation, and scores how
//! well outcomes can be predicted when only the first N% of a course's
//! activity is visible.
//!
//! Modules, in rough dataflow order:
//!
//! * [`synth`] — deterministic generator for a labeled test dataset;
//! * [`ingest`] — CSV loading, schema and referential validation;
//! * [`pipeline`] — feature engineering, temporal cutoffs, splits, scaling;
//! * [`tensor`] / [`nn`] — dense row-major tensors and the network layers;
//! * [`train`](mod@train) — weighted cross-entropy, Adam, checkpoints;
//! * [`eval`] — confusion matrices, per-class metrics, ROC/AUC;
//! * [`report`] / [`plot`] — CSV/JSON reports and SVG charts;
//! * [`config`] / [`manifest`] / [`cli`] — run configuration and the
//!   `vle-forecast` command-line tool.
//!
//! The `examples/` directory walks through each stage on synthetic data.

pub mod cli;
pub mod config;
pub mod eval;
pub mod ingest;
pub mod manifest;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod synth;
pub mod tensor;
pub mod train;

pub use ingest::{load_bundle, validate_bundle, Outcome, RawBundle};
pub use nn::{build_network, Arch, ModelConfig, Network};
pub use pipeline::{build_features, FeatureFrame, FeatureSet, PipelineConfig};
pub use synth::{generate_bundle, oracle_accuracy, SynthConfig};
pub use train::{load_checkpoint, save_checkpoint, train, TrainConfig};
