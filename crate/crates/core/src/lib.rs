//! Hybrid EMD-CWT scalogram features and a lightweight CNN for lung
//! auscultation classification.
//!
//! The pipeline mirrors a wearable-grade respiratory screening stack:
//!
//! 1. [`ingest`] loads an ICBHI-style corpus (WAV recordings, per-cycle
//!    annotations, patient diagnosis table).
//! 2. [`preprocess`] bandpass-filters (50-2500 Hz Butterworth, order 6),
//!    resamples to 22050 Hz, normalizes to [-1, 1] and cuts fixed 6 s
//!    respiratory-cycle segments.
//! 3. [`emd`] decomposes each segment into intrinsic mode functions and picks
//!    the one most correlated with the segment.
//! 4. [`scalogram`] computes the Morse-wavelet CWT power of either the raw
//!    segment (conventional) or the selected IMF (hybrid).
//! 5. [`render`] turns power matrices into 224x224 RGB images under four
//!    colormaps, rebalancing classes in the process.
//! 6. [`dataset`] maps labels, splits by patient and serves balanced batches.
//! 7. [`nn`] is a small dense-tensor engine (forward/backward/Adam) hosting
//!    the lightweight CNN, with a parameter/MAdd auditor.
//! 8. [`metrics`] derives accuracy/precision/recall/F1/sensitivity/
//!    specificity/ICBHI score from confusion matrices.
//!
//! All numeric kernels are generic over the [`Real`] scalar (`f32` or `f64`).
//! The CLI and every oracle test run at `f64`; `f32` is a speed/memory option.

pub mod config;
pub mod dataset;
pub mod emd;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod render;
pub mod scalar;
pub mod scalogram;
pub mod synth;
pub mod wav;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default scalar for the full-precision pipeline and all oracle tests.
pub type F = f64;

/// Reduced-precision scalar (documented speed option, excluded from oracles).
pub type F32 = f32;

/// A sampled waveform at the default precision.
pub type Signal = preprocess::Signal<F>;
/// EMD output set at the default precision.
pub type ImfSet = emd::ImfSet<F>;
/// Morse CWT filter bank at the default precision.
pub type FilterBank = scalogram::FilterBank<F>;
/// Scale-by-time power matrix at the default precision.
pub type Scalogram = scalogram::Scalogram<F>;
/// Dense numeric array at the default precision.
pub type Tensor = nn::Tensor<F>;
