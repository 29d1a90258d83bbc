//! Phase-vocoder time stretching: magnitude frames are resampled by linear
//! interpolation while phases advance by accumulated instantaneous-frequency
//! estimates, so duration changes and pitch does not.

use rustfft::num_complex::Complex;

use crate::audio::Waveform;
use crate::error::{Error, Result};

use super::stft::{istft, stft, Spectrogram, WindowKind};
use super::{DEFAULT_FFT_SIZE, DEFAULT_HOP};

fn princarg(phase: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    phase - two_pi * (phase / two_pi).round()
}

/// Stretch `w` so the output duration is about `input / rate`.
/// `rate > 1` speeds the signal up, `rate < 1` slows it down.
pub fn time_stretch(w: &Waveform, rate: f64) -> Result<Waveform> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::Audio(format!("stretch rate must be > 0, got {rate}")));
    }
    let fft_size = DEFAULT_FFT_SIZE;
    let hop = DEFAULT_HOP;
    let out_len = (w.len() as f64 / rate).round() as usize;
    if w.len() < fft_size {
        // Too short for analysis: resample by sample repetition/drop.
        let mut out = Vec::with_capacity(out_len);
        for i in 0..out_len {
            let src = ((i as f64 * rate) as usize).min(w.len().saturating_sub(1));
            out.push(if w.is_empty() { 0.0 } else { w.samples[src] });
        }
        return Waveform::new(out, w.sample_rate);
    }
    let analysis = stft(w, fft_size, hop, WindowKind::Hann)?;
    let t_in = analysis.n_frames();
    let n_bins = analysis.n_bins();

    // Per-bin expected phase advance per hop.
    let omega: Vec<f64> = (0..n_bins)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 * hop as f64 / fft_size as f64)
        .collect();

    let mut phase_acc: Vec<f64> = analysis.frames[0].iter().map(|c| c.arg()).collect();
    let mut out_frames: Vec<Vec<Complex<f64>>> = Vec::new();
    let mut t = 0.0f64;
    while t < t_in as f64 {
        let i = t.floor() as usize;
        let frac = t - i as f64;
        let cur = &analysis.frames[i.min(t_in - 1)];
        let next = &analysis.frames[(i + 1).min(t_in - 1)];
        let mut frame = Vec::with_capacity(n_bins);
        for k in 0..n_bins {
            let mag = (1.0 - frac) * cur[k].norm() + frac * next[k].norm();
            frame.push(Complex::from_polar(mag, phase_acc[k]));
        }
        out_frames.push(frame);
        for k in 0..n_bins {
            let dphase = princarg(next[k].arg() - cur[k].arg() - omega[k]);
            phase_acc[k] += omega[k] + dphase;
        }
        t += rate;
    }
    let synth = Spectrogram {
        frames: out_frames,
        fft_size,
        hop,
        window: WindowKind::Hann,
        sample_rate: w.sample_rate,
        len_hint: Some(out_len),
    };
    istft(&synth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
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

    fn dominant_freq(w: &Waveform) -> f64 {
        let n = w.len().next_power_of_two();
        let mut buf: Vec<Complex<f64>> = w
            .samples
            .iter()
            .map(|&s| Complex::new(s as f64, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(n)
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let bin = (0..n / 2)
            .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
            .unwrap();
        bin as f64 * w.sample_rate as f64 / n as f64
    }

    #[test]
    fn identity_rate_preserves_length() {
        let w = tone(250.0, 0.7, 16000);
        let out = time_stretch(&w, 1.0).unwrap();
        assert!((out.len() as i64 - w.len() as i64).unsigned_abs() as usize <= DEFAULT_HOP);
    }

    #[test]
    fn half_rate_doubles_duration() {
        let w = tone(220.0, 1.0, 16000);
        let out = time_stretch(&w, 0.5).unwrap();
        let expected = 2.0 * w.len() as f64;
        assert!(
            (out.len() as f64 - expected).abs() <= DEFAULT_HOP as f64,
            "got {} expected {expected}",
            out.len()
        );
    }

    #[test]
    fn pitch_preserved_under_stretch() {
        let w = tone(440.0, 1.0, 16000);
        let out = time_stretch(&w, 0.5).unwrap();
        let f = dominant_freq(&out);
        assert!((f - 440.0).abs() < 16.0, "dominant frequency {f}");
    }

    #[test]
    fn duration_error_within_one_hop_across_rates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let dur = rng.gen_range(0.3..1.2);
            let rate = rng.gen_range(0.25..4.0);
            let w = tone(rng.gen_range(100.0..600.0), dur, 16000);
            let out = time_stretch(&w, rate).unwrap();
            let expected = w.len() as f64 / rate;
            assert!(
                (out.len() as f64 - expected).abs() <= DEFAULT_HOP as f64,
                "rate {rate}: got {} expected {expected}",
                out.len()
            );
        }
    }

    #[test]
    fn invalid_rate_rejected() {
        let w = tone(220.0, 0.2, 16000);
        assert!(time_stretch(&w, 0.0).is_err());
        assert!(time_stretch(&w, -1.0).is_err());
        assert!(time_stretch(&w, f64::NAN).is_err());
    }
}
