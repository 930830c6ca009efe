//! Anatomy-guided volumetric operations for lesion segmentation pipelines.
//!
//! The crate turns multi-organ label maps into organ-of-interest (OOI) masks,
//! builds probabilistic patch-sampling maps from truncated-Gaussian gain
//! fields, extracts bowel-wall bands for masked-reconstruction pretraining,
//! evaluates OOI-focalized segmentation losses and computes surface-based
//! segmentation metrics on top of an exact anisotropic distance transform.
//!
//! All operations are deterministic functions of their inputs (and an explicit
//! seed where randomness is involved). Volumes move through [`io`] as NIfTI-1
//! or raw+JSON files. See the `examples/` directory of this crate for one
//! runnable program per capability, and the `anatomy-guide` binary for the
//! batch command line.

pub mod cli;
pub mod error;
pub mod grid;
pub mod io;
pub mod loss;
pub mod maskgen;
pub mod metrics;
pub mod morphology;
pub mod numeric;
pub mod phantom;
pub mod sampling;
pub mod ssl;

pub use error::{Error, Result};
pub use grid::{
    binary_combine, extract_patch, make_grid, BoolOp, Coord, Dims, LabelGrid, Mask, ScalarGrid, Spacing, Voxel,
    VoxelGrid,
};
