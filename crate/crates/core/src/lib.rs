//! Geometry engine for offset-map scene text detection.
//!
//! The crate covers the non-neural side of a single-shot arbitrary-shape
//! text detector that predicts four aligned maps at 1/4 input resolution:
//!
//! * **TCL** (1 channel): shrunk text center region,
//! * **TCO** (2 channels): offset from a TCL pixel to its instance's quad center,
//! * **TVO** (8 channels): offsets from a TCL pixel to the four quad vertices,
//! * **TBO** (4 channels): offsets to the paired upper/lower border points.
//!
//! [`labels`] turns polygon annotations into those maps, [`postprocess`]
//! decodes them back into polygons (quad restoration, NMS, point-to-quad
//! assignment, border reconstruction), [`eval`] scores detections,
//! [`cab`] and [`losses`] carry the training-side numerics with hand-written
//! backward passes, and [`synth`] produces seeded scenes that close the
//! round trip without a trained network.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cab;
pub mod checks;
pub mod cli;
pub mod error;
pub mod eval;
pub mod geom;
pub mod labels;
pub mod losses;
pub mod par;
pub mod postprocess;
pub mod smap;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use geom::{Annotation, Point, Polygon, Quad};
pub use labels::MapBundle;
pub use par::Execution;
pub use tensor::Tensor;

/// Map pixels per input pixel denominator: maps are predicted at 1/4 scale.
pub const DEFAULT_STRIDE: usize = 4;
