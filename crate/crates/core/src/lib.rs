//! Promptable video object segmentation engine.
//!
//! The engine tracks one user-specified target per video stream. Visual
//! prompts activate tracking directly; linguistic prompts flow through a
//! detection stage whose outputs are presence-gated and temporally verified
//! before tracking starts, with periodic detector consensus checks that can
//! force a fallback and re-initialization. Supporting modules provide the
//! mask geometry, loss kernels, tracking memory, a deterministic scenario
//! simulator with scripted oracle detectors/trackers, dataset I/O in a
//! masklet manifest format, and J&F evaluation.

pub mod ast;
pub mod dataset;
pub mod eval;
pub mod feature;
pub mod loss;
pub mod mask;
pub mod masklet;
pub mod memory;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod runner;
pub mod scenario;

pub use mask::{BinaryMask, BoundaryMap};
pub use masklet::Masklet;
