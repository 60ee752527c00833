//! Grid-centric table structure recognition.
//!
//! An image is encoded into a feature map, summarised globally by a small
//! recursive refinement module and along each axis by tiny sequence encoders.
//! Heads predict row/column counts, header rows and interval lengths, which
//! decode into a monotone grid; per-cell pooled features then classify
//! rowspan/colspan at anchor positions. The result is emitted as HTML and
//! scored with tree-edit, grid-topology and adjacency metrics.

pub mod axial;
pub mod curved;
pub mod data;
pub mod encoder;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod structure;
pub mod training;
pub mod trm;
pub mod weights;

pub use axial::{GridSpec, HeadVariant};
pub use error::{Error, Result};
pub use grid::{CellRect, SpanGrid};
pub use model::{Caps, FastTab, ModelConfig};
pub use numerics::{Rng, Tape, Tensor, Var};
pub use structure::{HtmlTree, TableStructure};
