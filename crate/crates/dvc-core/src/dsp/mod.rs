//! Time-frequency analysis and synthesis: STFT, Griffin-Lim, mel features,
//! phase-vocoder time stretching, and F0 estimation/conversion.

mod f0;
mod griffin_lim;
mod mel;
mod stft;
mod stretch;

pub use f0::{estimate_f0, convert_f0, f0_stats_from_tracks, F0Stats, F0Track};
pub use griffin_lim::{griffin_lim, griffin_lim_with_trace};
pub use mel::{mel_spectrogram, mel_to_linear, MelConfig, MelFilterBank, MelSpectrogram};
pub use stft::{hann_window, istft, stft, MagSpectrogram, Spectrogram, WindowKind};
pub use stretch::time_stretch;

/// Default analysis sample rate assumed by the pipeline.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
/// Default FFT size.
pub const DEFAULT_FFT_SIZE: usize = 1024;
/// Default hop length.
pub const DEFAULT_HOP: usize = 256;
