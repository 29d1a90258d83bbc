//! Griffin-Lim phase reconstruction from a magnitude spectrogram.

use rustfft::num_complex::Complex;

use crate::audio::Waveform;
use crate::error::Result;

use super::stft::{istft, stft, MagSpectrogram, Spectrogram};

/// Iterative phase estimation. `n_iter = 0` returns the zero-phase
/// reconstruction.
pub fn griffin_lim(mag: &MagSpectrogram, n_iter: usize) -> Result<Waveform> {
    Ok(griffin_lim_with_trace(mag, n_iter)?.0)
}

/// Griffin-Lim that also returns the spectral-convergence metric
/// `||mag - |STFT(x_k)||_F / ||mag||_F` per iteration.
pub fn griffin_lim_with_trace(
    mag: &MagSpectrogram,
    n_iter: usize,
) -> Result<(Waveform, Vec<f64>)> {
    let mut spec = Spectrogram {
        frames: mag
            .frames
            .iter()
            .map(|fr| fr.iter().map(|&m| Complex::new(m, 0.0)).collect())
            .collect(),
        fft_size: mag.fft_size,
        hop: mag.hop,
        window: mag.window,
        sample_rate: mag.sample_rate,
        len_hint: mag.len_hint.or_else(|| {
            Some(mag.frames.len().saturating_sub(1) * mag.hop)
        }),
    };
    if mag.frames.is_empty() {
        return Ok((istft(&spec)?, Vec::new()));
    }
    let mag_norm: f64 = mag
        .frames
        .iter()
        .flat_map(|fr| fr.iter())
        .map(|&m| m * m)
        .sum::<f64>()
        .sqrt();
    let mut trace = Vec::with_capacity(n_iter);
    let mut wave = istft(&spec)?;
    for _ in 0..n_iter {
        let est = stft(&wave, mag.fft_size, mag.hop, mag.window)?;
        let mut err = 0.0f64;
        for (t, fr) in spec.frames.iter_mut().enumerate() {
            let est_fr = &est.frames[t];
            for (f, c) in fr.iter_mut().enumerate() {
                let e = est_fr[f];
                let target = mag.frames[t][f];
                let d = e.norm() - target;
                err += d * d;
                // Keep estimated phase, impose the target magnitude.
                let n = e.norm();
                *c = if n > 1e-300 {
                    e * (target / n)
                } else {
                    Complex::new(target, 0.0)
                };
            }
        }
        trace.push(err.sqrt() / mag_norm.max(1e-300));
        wave = istft(&spec)?;
    }
    Ok((wave, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::stft::WindowKind;
    use crate::dsp::{stft as fwd, DEFAULT_FFT_SIZE, DEFAULT_HOP};
    use rustfft::FftPlanner;

    fn tone(freq: f64, dur_s: f64, sr: u32) -> Waveform {
        let n = (dur_s * sr as f64).round() as usize;
        Waveform::new(
            (0..n)
                .map(|i| {
                    (0.6 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin()) as f32
                })
                .collect(),
            sr,
        )
        .unwrap()
    }

    // Peak bin at the analysis FFT resolution, over an interior chunk.
    fn dominant_bin(w: &Waveform) -> usize {
        let n = DEFAULT_FFT_SIZE;
        let start = (w.len() / 2).saturating_sub(n / 2);
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|i| {
                Complex::new(
                    w.samples.get(start + i).copied().unwrap_or(0.0) as f64,
                    0.0,
                )
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        (0..n / 2)
            .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
            .unwrap()
    }

    #[test]
    fn tone_magnitude_reconstructs_tone() {
        let sr = 16000;
        let w = tone(440.0, 1.0, sr);
        let mag = fwd::stft(&w, DEFAULT_FFT_SIZE, DEFAULT_HOP, WindowKind::Hann)
            .unwrap()
            .magnitude();
        let rec = griffin_lim(&mag, 60).unwrap();
        assert_eq!(rec.len(), w.len());
        let expected = dominant_bin(&w);
        let got = dominant_bin(&rec);
        assert_eq!(got, expected);
    }

    #[test]
    fn zero_magnitude_gives_zero_waveform() {
        let mag = MagSpectrogram {
            frames: vec![vec![0.0; 513]; 8],
            fft_size: 1024,
            hop: 256,
            window: WindowKind::Hann,
            sample_rate: 16000,
            len_hint: None,
        };
        let w = griffin_lim(&mag, 10).unwrap();
        assert!(w.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_iterations_is_zero_phase_baseline() {
        let w = tone(300.0, 0.3, 16000);
        let mag = fwd::stft(&w, 1024, 256, WindowKind::Hann).unwrap().magnitude();
        let a = griffin_lim(&mag, 0).unwrap();
        let b = griffin_lim(&mag, 0).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn spectral_convergence_non_increasing() {
        let w = tone(500.0, 0.5, 16000);
        let mag = fwd::stft(&w, 1024, 256, WindowKind::Hann).unwrap().magnitude();
        let (_, trace) = griffin_lim_with_trace(&mag, 30).unwrap();
        for pair in trace.windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-9),
                "convergence increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }
}
