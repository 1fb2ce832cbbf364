//! Non-neural core of a cell-migration video analysis workflow.
//!
//! The crate is organised by pipeline stage:
//!
//! 1. [`registration`] – translation-only drift correction and border cropping.
//! 2. [`raster`] – frame containers, percentile normalization, component labeling.
//! 3. [`sampler`] – foreground-weighted patch sampling after augmentation.
//! 4. [`morphology`] – distance transforms, thinning and protrusion-tip detection.
//! 5. [`metrics`] – Jaccard, SEG, AOGM/TRA plus reference loss/optimizer numerics.
//! 6. [`dataio`] – TIFF/PGM codecs, CTC track files and directory layout.
//!
//! Batch operations take an [`Execution`] policy. With the default `parallel`
//! feature the parallel policy runs on rayon; without it every policy runs
//! sequentially.

pub mod dataio;
pub mod error;
pub mod metrics;
pub mod morphology;
pub mod par;
pub mod raster;
pub mod registration;
pub mod sampler;
pub mod synth;
pub mod tracking;

pub use error::{Error, Result};
pub use par::Execution;
pub use raster::{BinaryMask, BitDepth, GrayFrame, Grid, LabelMask, NormalizedFrame, Pixel};

/// Physical pixel size of the reference microscope, in µm per pixel.
pub const DEFAULT_PIXEL_SIZE_UM: f64 = 0.802;
