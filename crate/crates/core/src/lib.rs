//! Online multi-object tracking with adaptive motion/appearance fusion.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`] boxes and IoU
//! * [`motion`] constant-velocity Kalman filter with observation-centric re-update
//! * [`assignment`] gated maximum-score linear assignment
//! * [`appearance`] cosine similarity, appearance uniformity and adaptive weights
//! * [`tracker`] the per-frame association loop
//! * [`qgm`] query-guided filtering of grounded detection proposals
//! * [`mot_io`] MOT-Challenge style files and sidecars
//! * [`metrics`] CLEAR, identity and HOTA evaluation
//! * [`synth`] deterministic synthetic scenarios

pub mod appearance;
pub mod assignment;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod mot_io;
pub mod motion;
pub mod qgm;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::BBox;
