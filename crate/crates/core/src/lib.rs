//! Language-guided segmentation refinement.
//!
//! Expert-style commands such as *"expand the boundary at the top-right
//! corner and remove the fragments at the bottom"* are compiled into small
//! programs and executed against a predicted mask inside a region of interest.
//! Around that core sit an active-learning harness (acquisition, simulated
//! expert feedback, a trainable pixel classifier) and an annotation-effort
//! model comparing language feedback with polygon delineation.

pub mod acquisition;
pub mod adapt;
pub mod classifier;
pub mod cluster;
pub mod command;
pub mod direction;
pub mod effort;
pub mod exec;
pub mod expert;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod morphology;
pub mod refine;
pub mod region;
pub mod service;
pub mod session;
pub mod synth;

pub use direction::Direction;
pub use grid::{BinaryMask, GridError, GridImage, LabelMask, Pixel, ProbMap, Roi};
