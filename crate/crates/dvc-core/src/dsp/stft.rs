//! Forward and inverse short-time Fourier transform.
//!
//! Analysis is centered: the signal is zero-padded by `fft_size / 2` on both
//! sides so every original sample is covered by a full window stack, and the
//! inverse transform slices the padding back off. Synthesis uses weighted
//! overlap-add with an exact per-sample window-square normalization.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WindowKind {
    #[default]
    Hann,
    Rect,
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

fn make_window(kind: WindowKind, n: usize) -> Vec<f64> {
    match kind {
        WindowKind::Hann => hann_window(n),
        WindowKind::Rect => vec![1.0; n],
    }
}

/// Complex STFT, `frames[t][f]` with `f` in `0..=fft_size/2`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub frames: Vec<Vec<Complex<f64>>>,
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub sample_rate: u32,
    /// Original signal length; `istft` trims to it when present.
    pub len_hint: Option<usize>,
}

/// Magnitude-only spectrogram (same geometry as [`Spectrogram`]).
#[derive(Debug, Clone)]
pub struct MagSpectrogram {
    pub frames: Vec<Vec<f64>>,
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub sample_rate: u32,
    pub len_hint: Option<usize>,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn magnitude(&self) -> MagSpectrogram {
        MagSpectrogram {
            frames: self
                .frames
                .iter()
                .map(|fr| fr.iter().map(|c| c.norm()).collect())
                .collect(),
            fft_size: self.fft_size,
            hop: self.hop,
            window: self.window,
            sample_rate: self.sample_rate,
            len_hint: self.len_hint,
        }
    }
}

impl MagSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

fn validate_params(fft_size: usize, hop: usize) -> Result<()> {
    if fft_size == 0 || !fft_size.is_power_of_two() {
        return Err(Error::Audio(format!(
            "fft_size must be a power of two, got {fft_size}"
        )));
    }
    if hop == 0 || hop > fft_size {
        return Err(Error::Audio(format!(
            "hop must satisfy 0 < hop <= fft_size, got {hop}"
        )));
    }
    Ok(())
}

/// Forward STFT with centered frames and the given window.
pub fn stft(w: &Waveform, fft_size: usize, hop: usize, window: WindowKind) -> Result<Spectrogram> {
    validate_params(fft_size, hop)?;
    if w.samples.is_empty() {
        return Ok(Spectrogram {
            frames: Vec::new(),
            fft_size,
            hop,
            window,
            sample_rate: w.sample_rate,
            len_hint: Some(0),
        });
    }
    let pad = fft_size / 2;
    let mut padded = vec![0.0f64; w.samples.len() + fft_size];
    for (i, &s) in w.samples.iter().enumerate() {
        padded[pad + i] = s as f64;
    }
    let win = make_window(window, fft_size);
    let n_frames = 1 + (padded.len() - fft_size) / hop;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let n_bins = fft_size / 2 + 1;
    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    for t in 0..n_frames {
        let start = t * hop;
        for i in 0..fft_size {
            buf[i] = Complex::new(padded[start + i] * win[i], 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf[..n_bins].to_vec());
    }
    Ok(Spectrogram {
        frames,
        fft_size,
        hop,
        window,
        sample_rate: w.sample_rate,
        len_hint: Some(w.samples.len()),
    })
}

/// Inverse STFT via least-squares overlap-add.
pub fn istft(s: &Spectrogram) -> Result<Waveform> {
    validate_params(s.fft_size, s.hop)?;
    let n_bins = s.fft_size / 2 + 1;
    if s.frames.is_empty() {
        return Waveform::new(Vec::new(), s.sample_rate);
    }
    for (t, fr) in s.frames.iter().enumerate() {
        if fr.len() != n_bins {
            return Err(Error::shape(
                "istft",
                format!("frame {t} has {} bins, expected {n_bins}", fr.len()),
            ));
        }
    }
    let win = make_window(s.window, s.fft_size);
    // COLA sanity: interior coverage must not have gaps.
    let mut interior = vec![0.0f64; s.fft_size];
    let mut p = 0usize;
    while p < 2 * s.fft_size {
        for i in 0..s.fft_size {
            let q = p + i;
            if q >= s.fft_size && q < 2 * s.fft_size {
                interior[q - s.fft_size] += win[i] * win[i];
            }
        }
        p += s.hop;
    }
    if interior.iter().any(|&v| v <= 1e-8) {
        return Err(Error::Audio(
            "window/hop violate constant-overlap-add (coverage gap)".into(),
        ));
    }

    let total = (s.frames.len() - 1) * s.hop + s.fft_size;
    let mut acc = vec![0.0f64; total];
    let mut den = vec![0.0f64; total];
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(s.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); s.fft_size];
    for (t, fr) in s.frames.iter().enumerate() {
        buf[..n_bins].copy_from_slice(fr);
        // Hermitian extension for a real output frame.
        for f in n_bins..s.fft_size {
            buf[f] = fr[s.fft_size - f].conj();
        }
        ifft.process(&mut buf);
        let start = t * s.hop;
        let scale = 1.0 / s.fft_size as f64;
        for i in 0..s.fft_size {
            let v = buf[i].re * scale;
            acc[start + i] += v * win[i];
            den[start + i] += win[i] * win[i];
        }
    }
    for i in 0..total {
        acc[i] /= den[i].max(1e-12);
    }
    let pad = s.fft_size / 2;
    let out: Vec<f32> = match s.len_hint {
        Some(len) => {
            let mut v = vec![0.0f32; len];
            for i in 0..len {
                if pad + i < total {
                    v[i] = acc[pad + i] as f32;
                }
            }
            v
        }
        None => acc.iter().map(|&v| v as f32).collect(),
    };
    Waveform::new(out, s.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn tone(freq: f64, dur_s: f64, sr: u32, amp: f32) -> Waveform {
        let n = (dur_s * sr as f64).round() as usize;
        Waveform::new(
            (0..n)
                .map(|i| {
                    (amp as f64 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
                        as f32
                })
                .collect(),
            sr,
        )
        .unwrap()
    }

    #[test]
    fn dc_concentrates_in_bin_zero() {
        let w = Waveform::new(vec![1.0; 4096], 16000).unwrap();
        let s = stft(&w, 1024, 256, WindowKind::Hann).unwrap();
        for fr in &s.frames {
            let mags: Vec<f64> = fr.iter().map(|c| c.norm()).collect();
            let peak = mags
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(peak, 0);
        }
    }

    #[test]
    fn tone_peaks_at_expected_bin() {
        // 1 kHz at 16 kHz with fft 1024: bin = 1000 * 1024 / 16000 = 64 exactly.
        let w = tone(1000.0, 0.5, 16000, 0.8);
        let s = stft(&w, 1024, 256, WindowKind::Hann).unwrap();
        // Interior frame, away from edge taper.
        let fr = &s.frames[s.n_frames() / 2];
        let peak = fr
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 64);
    }

    #[test]
    fn empty_waveform_gives_zero_frames() {
        let w = Waveform::new(Vec::new(), 16000).unwrap();
        let s = stft(&w, 1024, 256, WindowKind::Hann).unwrap();
        assert_eq!(s.n_frames(), 0);
        let back = istft(&s).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn round_trip_snr_above_60db() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &len in &[400usize, 4096, 16001] {
            let w = Waveform::new(
                (0..len).map(|_| rng.gen_range(-0.9f32..0.9)).collect(),
                16000,
            )
            .unwrap();
            let s = stft(&w, 1024, 256, WindowKind::Hann).unwrap();
            let back = istft(&s).unwrap();
            assert_eq!(back.len(), w.len());
            let sig: f64 = w.samples.iter().map(|&v| (v as f64).powi(2)).sum();
            let err: f64 = w
                .samples
                .iter()
                .zip(&back.samples)
                .map(|(&a, &b)| ((a - b) as f64).powi(2))
                .sum();
            let snr = 10.0 * (sig / err.max(1e-300)).log10();
            assert!(snr >= 60.0, "len {len}: snr {snr:.1} dB");
        }
    }

    #[test]
    fn single_frame_recovers_windowed_content() {
        // A one-frame spectrogram built from fft(w .* x) reconstructs x where
        // the window-square sum is meaningfully nonzero.
        let fft_size = 256;
        let win = hann_window(fft_size);
        let x: Vec<f64> = (0..fft_size).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
        let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
        let mut buf: Vec<Complex<f64>> = (0..fft_size)
            .map(|i| Complex::new(win[i] * x[i], 0.0))
            .collect();
        fft.process(&mut buf);
        let s = Spectrogram {
            frames: vec![buf[..fft_size / 2 + 1].to_vec()],
            fft_size,
            hop: 64,
            window: WindowKind::Hann,
            sample_rate: 16000,
            len_hint: None,
        };
        let out = istft(&s).unwrap();
        assert_eq!(out.len(), fft_size);
        for i in 0..fft_size {
            if win[i] * win[i] > 1e-3 {
                assert!(
                    (out.samples[i] as f64 - x[i]).abs() < 1e-5,
                    "sample {i}: {} vs {}",
                    out.samples[i],
                    x[i]
                );
            }
        }
    }

    #[test]
    fn zero_spectrogram_gives_zero_waveform() {
        let s = Spectrogram {
            frames: vec![vec![Complex::new(0.0, 0.0); 513]; 10],
            fft_size: 1024,
            hop: 256,
            window: WindowKind::Hann,
            sample_rate: 16000,
            len_hint: None,
        };
        let w = istft(&s).unwrap();
        assert!(w.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cola_gap_rejected() {
        let s = Spectrogram {
            frames: vec![vec![Complex::new(0.0, 0.0); 513]; 4],
            fft_size: 1024,
            hop: 1024,
            window: WindowKind::Hann,
            sample_rate: 16000,
            len_hint: None,
        };
        // Hann at hop == fft_size leaves near-zero coverage at frame joins.
        assert!(istft(&s).is_err());
    }

    #[test]
    fn parseval_energy_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let w = Waveform::new(
            (0..8000).map(|_| rng.gen_range(-0.9f32..0.9)).collect(),
            16000,
        )
        .unwrap();
        let fft_size = 1024;
        let hop = 256;
        let s = stft(&w, fft_size, hop, WindowKind::Hann).unwrap();
        // One-sided spectral energy per frame equals windowed-frame energy.
        let mut spectral = 0.0f64;
        for fr in &s.frames {
            for (f, c) in fr.iter().enumerate() {
                let weight = if f == 0 || f == fft_size / 2 { 1.0 } else { 2.0 };
                spectral += weight * c.norm_sqr();
            }
        }
        spectral /= fft_size as f64;
        // Exact per-sample window-square accumulation over the padded signal.
        let win = hann_window(fft_size);
        let pad = fft_size / 2;
        let mut time = 0.0f64;
        for (i, &x) in w.samples.iter().enumerate() {
            let q = pad + i;
            let mut d = 0.0f64;
            let mut t = 0usize;
            while t < s.n_frames() {
                let start = t * hop;
                if start <= q && q < start + fft_size {
                    d += win[q - start] * win[q - start];
                }
                if start > q {
                    break;
                }
                t += 1;
            }
            time += (x as f64) * (x as f64) * d;
        }
        let rel = (spectral - time).abs() / time;
        assert!(rel < 1e-6, "relative energy mismatch {rel}");
    }
}
