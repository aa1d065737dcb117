//! Two-stage clock synchronization for wearable recordings that carry a
//! barometer and an accelerometer.
//!
//! Absolute pressure decides whether two recordings overlap in time at all
//! and gives a coarse constant lag. Acceleration magnitudes then refine it
//! into a linear clock model (offset plus skew).

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ingest;
pub mod kernels;
pub mod model;
mod par;
pub mod pipeline;
pub mod regression;
pub mod stage1;
pub mod stage2;
pub mod synth;
pub mod truth;

pub use error::{Error, Result};
pub use model::{
    compose_time_axes, AccelSensor, ClockModel, FifoReadout, LagEstimate, Recording, Samples, ScanMethod, SensorTrace,
    TraceKind,
};
