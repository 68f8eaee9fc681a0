//! Volumetric reconstruction of deployed stents from intravascular image stacks.
//!
//! The crate is organised as a pipeline of plain-value stages:
//!
//! * [`raster`]: grayscale/binary rasters, Otsu thresholding, gamma mapping,
//!   dilation and 8-connected region labeling.
//! * [`detection`]: per-frame strut detection with iterative gamma passes,
//!   the false-positive filters and manual patches.
//! * [`topology`]: lifting detections to 3D, unrolling the cloud onto the
//!   `(r·θ, z)` plane and classifying points against ring/beam polylines.
//! * [`registration`]: rotation-minimizing frames along the catheter wire and
//!   per-frame rigid placement of the strut cloud.
//! * [`skeleton`]: centripetal cubic splines for rings and beams plus
//!   ring–beam junction resolution.
//! * [`surface`]: rectangular cross-section sweeps, junction stitching and
//!   binary STL.
//! * [`phantom`]: a parametric, twisted and bent synthetic stent with exact
//!   ground truth and a sliced image stack.
//! * [`validation`]: mesh volume, voxel overlap and the VA/PA indexes.
//! * [`pipeline`]: project manifest, staged execution and the annotation
//!   session backing the HTTP service.

pub mod detection;
pub mod phantom;
pub mod pipeline;
pub mod raster;
pub mod registration;
pub mod skeleton;
pub mod surface;
pub mod topology;
pub mod validation;

pub(crate) mod fsutil;

/// 3D vector in millimetres.
pub type Vec3 = nalgebra::Vector3<f64>;
