//! Dense depth from sparse visual features.
//!
//! The crate turns a handful of depth-annotated point and line features into a
//! full depth image in three stages:
//!
//! 1. **Mesh** ([`cdt`], [`meshdepth`]): features become sites of a constrained
//!    Delaunay triangulation in image space; rasterizing the facets with planar
//!    or barycentric interpolation yields a rough depth map and its validity
//!    mask.
//! 2. **Refine** ([`mdr`]): a small convolutional network with separate image
//!    and depth branches fuses the rough depth with appearance cues and emits a
//!    strictly positive refined depth. Forward, hand-written reverse-mode
//!    gradients, and a finite-difference checker are included.
//! 3. **Densify** ([`pipeline`]): a pluggable estimator produces the final
//!    dense map (the default passes the refined depth through unchanged).
//!
//! Supporting modules: [`losses`] (photometric / sparse-consistency /
//! smoothness objectives used for evaluation and toy training), [`metrics`]
//! (MAE / RMSE / threshold accuracies), [`synth`] (ray-cast plane-and-box
//! scenes with exact ground truth for end-to-end tests), and [`io`] (PNG depth
//! maps, feature JSON, parameter blobs, dataset manifests).
//!
//! All randomness is seeded explicitly and every operation is deterministic:
//! identical inputs produce bit-identical outputs.

pub mod camera;
pub mod cdt;
mod error;
pub mod features;
pub mod image;
pub mod io;
pub mod losses;
pub mod mdr;
pub mod meshdepth;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use camera::{Intrinsics, Pose};
pub use error::Error;
pub use features::{FeatureSet, LineFeature, PointFeature};
pub use image::{DepthMap, ImageBuffer, ValidMask};

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
