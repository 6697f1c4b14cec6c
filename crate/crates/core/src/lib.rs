//! Maritime traffic-lane extraction and uncertainty-driven anomaly detection
//! for AIS trajectories.
//!
//! The pipeline runs in stages:
//!
//! 1. [`ais`] parses and cleans AIS reports, splits them into per-vessel
//!    tracks and resamples them to a fixed cadence.
//! 2. [`graph`] extracts a traffic-lane graph from historical tracks
//!    (waypoints, density clustering, Mahalanobis gating, edge-visit
//!    thresholding) and associates track points to lanes.
//! 3. [`features`] turns labelled tracks into normalized model samples.
//! 4. [`neural`] trains an LSTM encoder-decoder with an evidential
//!    (Normal-Inverse-Gamma) head, an MC-dropout baseline and Dirichlet
//!    evidential classifiers. The closed-form evidential maths lives in
//!    [`evidential`].
//! 5. [`detectors`] flags anomalous trajectories, unusual turns and AIS
//!    on-off switching; [`similarity`] provides the LCS route-similarity
//!    baseline.
//!
//! [`synth`] generates seeded synthetic lane traffic with injected anomalies.

// `!(x >= 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod ais;
pub mod config;
pub mod detectors;
pub mod error;
pub mod evidential;
pub mod features;
pub mod geometry;
pub mod graph;
pub mod neural;
pub mod pipeline;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
