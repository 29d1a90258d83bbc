//! Dysarthric speech enhancement pipeline: corpus ingestion, signal
//! preprocessing, DTW alignment, phase-vocoder time stretching, CycleGAN
//! voice conversion with ablation toggles, and phoneme-error-rate scoring.
//!
//! Batch operations (per-file preprocessing, per-pair alignment, corpus
//! scoring) are data-parallel via rayon under the default `parallel`
//! feature and fall back to sequential iteration without it; outputs are
//! identical either way.

pub mod align;
pub mod audio;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod nn;
pub mod par;
pub mod preprocess;

pub use audio::Waveform;
pub use error::{Error, Result};
