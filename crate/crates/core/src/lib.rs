//! Streaming estimation of Tukey depth contours.
//!
//! Each of `n_u` unit directions carries a set of incremental quantile
//! estimators of the projected stream. The halfspaces above those quantiles
//! intersect to envelopes approximating the depth regions. The crate is
//! `no_std` with `alloc`.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;


pub mod detect;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod normal;
pub mod oracle;
pub mod quantile;
pub mod seed;
pub mod synth;



pub use detect::{score_detections, ChangeEvent, Detector, DetectorParams, ScoreReport};
pub use engine::{estimate_depth, offline_snapshot, DepthTracker, DirectionMode, OffsetRule, TrackerConfig};
pub use error::{Error, Result};
pub use geometry::{DepthSnapshot, DirectionSet, Envelope, Intercept};
pub use metrics::{compute_ed, compute_made, ErrorReport, MetricRays, RayAverage};
pub use oracle::{DepthOracle, GaussianModel, MonteCarloModel, TangentScale};
pub use quantile::{JointQuantileState, QuantileState, ScheduleMode, StepSchedule};
