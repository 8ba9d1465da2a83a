//! Pulsed active thermography: feature maps (PCT, TSR, PPT), per-modality
//! anomaly masks, consensus fusion, metrics and structured reporting.
//!
//! Data flows `cube_io` → `preprocess` → {`pct`, `tsr`, `ppt`} → `detect` →
//! `fusion` → `report`; [`pipeline`] wires the stages together.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cube_io;
pub mod detect;
pub mod error;
pub mod exec;
pub mod fusion;
pub mod pct;
pub mod pipeline;
pub mod ppt;
pub mod preprocess;
pub mod report;
pub mod savgol;
pub mod synth;
pub mod tsr;

pub use error::{Error, Result};
