//! Differentiable semantic rendering toolkit.
//!
//! The crate is organised around the data flow of a semantic fit:
//!
//! * [`body`] turns pose/shape/camera parameters into a posed triangle mesh
//!   (linear blend skinning with shape blendshapes) and projects it with a
//!   weak-perspective camera.
//! * [`prior`] learns a per-vertex clothing-label distribution by counting
//!   segmentation labels seen under the visible faces of registered meshes.
//! * [`raster`] renders per-vertex attribute channels with a soft
//!   (sigmoid-coverage, depth-softmax) rasterizer and its exact VJP, plus a
//!   classic z-buffer used for visibility.
//! * [`losses`] holds the joint losses, soft-DistM, soft-IoU and the
//!   four-class clothing NLL together with the Euclidean distance transform.
//! * [`masks`] cleans 20-class segmentation maps into per-sample targets.
//! * [`fit`] optimises body parameters against all of the above and scores
//!   the result with MPJPE / PA-MPJPE / PVE.
//!
//! Parallelism lives behind the `parallel` cargo feature (rayon). Every
//! parallel path has a sequential twin selected through [`Exec`], and both
//! produce bit-identical results.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod body;
pub mod error;
pub mod exec;
pub mod fit;
pub mod fixtures;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod masks;
pub mod prior;
pub mod raster;

pub use error::{Error, Result};
pub use exec::Exec;
