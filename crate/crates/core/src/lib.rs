//! Dichoptic ("one eye only") popout workbench.
//!
//! The crate covers the full experimental pipeline for monocular-target
//! visual search:
//!
//! - [`scene`]: discs, per-eye visibility and the monocular-target transform
//! - [`stimgen`]: jittered grid layouts and balanced trial plans
//! - [`geometry`] and [`render`]: visual-angle geometry, per-eye rasters,
//!   anaglyph / side-by-side composites
//! - [`protocol`] and [`session`]: the clock-driven trial state machine and
//!   session logs
//! - [`observer`]: simulated parallel and serial-search observers
//! - [`stats`]: the repeated-measures analysis pipeline and reports
//! - [`chart`]: monocular highlighting of line charts and comparison images

pub mod chart;
pub mod config;
pub mod error;
pub mod geometry;
pub mod observer;
pub mod protocol;
pub mod render;
pub mod scene;
pub mod schema;
pub mod session;
pub mod stats;
pub mod stimgen;

pub use error::{Error, Result};
