//! Batch processing for photographs of pinned-beetle trays.
//!
//! Three stages share one run manifest:
//!
//! 1. [`detect`]: open-vocabulary detection repeated on a progressively
//!    white-masked copy of the tray until a round finds nothing, followed by
//!    a yes/no check from a vision-language verifier.
//! 2. [`crop`]: reading-order sort, one crop per specimen, and a per-tray CSV
//!    joined positionally to the tray's metadata rows.
//! 3. [`segment`]: part segmentation of each crop with colourised masks,
//!    overlays and a completeness check for defective specimens.
//!
//! [`eval`] scores detection counts and segmentation masks. The models sit
//! behind the traits in [`backends`]; scripted replays keep every stage
//! testable without model weights.

pub mod backends;
pub mod config;
pub mod crop;
pub mod detect;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod manifest;
pub mod maskfile;
pub mod palette;
pub mod pipeline;
pub mod records;
pub mod segment;
pub mod taxonomy;

pub use error::{Error, Result};
pub use geometry::{box_area, box_iou, BBox};
pub use taxonomy::{ClassId, LabelMask, Taxonomy, TaxonomyName};
