//! Mel filterbank features and the pseudo-inverse back to linear magnitude.

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

use super::stft::{stft, MagSpectrogram, WindowKind};

pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_mels: usize,
    pub fmin: f64,
    /// Upper edge; defaults to Nyquist when `None`.
    pub fmax: Option<f64>,
    pub fft_size: usize,
    pub hop: usize,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            n_mels: 80,
            fmin: 0.0,
            fmax: None,
            fft_size: super::DEFAULT_FFT_SIZE,
            hop: super::DEFAULT_HOP,
        }
    }
}

/// Log-compressed mel spectrogram, `frames[t][m]`.
#[derive(Debug, Clone)]
pub struct MelSpectrogram {
    pub frames: Vec<Vec<f32>>,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub len_hint: Option<usize>,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Energy-weighted mean mel-band index, averaged over frames.
    pub fn centroid(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0f64;
        let mut n = 0usize;
        for fr in &self.frames {
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for (m, &v) in fr.iter().enumerate() {
                let p = (v as f64).exp();
                num += m as f64 * p;
                den += p;
            }
            if den > 0.0 {
                acc += num / den;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            acc / n as f64
        }
    }
}

// Slaney mel scale: linear below 1 kHz, logarithmic above.
const MEL_F_STEP: f64 = 200.0 / 3.0;
const MEL_LOG_STEP: f64 = 0.068751777420949_f64;
const MEL_LOG_THRESHOLD: f64 = 15.0;
const MEL_HZ_THRESHOLD: f64 = 1000.0;

pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MEL_HZ_THRESHOLD {
        MEL_LOG_THRESHOLD + (hz / MEL_HZ_THRESHOLD).ln() / MEL_LOG_STEP
    } else {
        hz / MEL_F_STEP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= MEL_LOG_THRESHOLD {
        MEL_HZ_THRESHOLD * ((mel - MEL_LOG_THRESHOLD) * MEL_LOG_STEP).exp()
    } else {
        MEL_F_STEP * mel
    }
}

/// Triangular mel filterbank with Slaney area normalization.
#[derive(Debug, Clone)]
pub struct MelFilterBank {
    /// `weights[m][f]`, `n_mels x (fft_size/2 + 1)`.
    pub weights: Vec<Vec<f64>>,
    pub n_mels: usize,
    pub n_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Center frequencies of the bands, in Hz.
    pub centers_hz: Vec<f64>,
}

impl MelFilterBank {
    pub fn new(sample_rate: u32, fft_size: usize, n_mels: usize, fmin: f64, fmax: f64) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_mels == 0 {
            return Err(Error::Config("n_mels must be >= 1".into()));
        }
        if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
            return Err(Error::Config(format!(
                "invalid mel range [{fmin}, {fmax}] for Nyquist {nyquist}"
            )));
        }
        let n_bins = fft_size / 2 + 1;
        let mel_min = hz_to_mel(fmin);
        let mel_max = hz_to_mel(fmax);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_min + (mel_max - mel_min) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz: Vec<f64> = (0..n_bins)
            .map(|f| f as f64 * sample_rate as f64 / fft_size as f64)
            .collect();
        let mut weights = vec![vec![0.0f64; n_bins]; n_mels];
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (hi - lo);
            for f in 0..n_bins {
                let up = (bin_hz[f] - lo) / (mid - lo);
                let down = (hi - bin_hz[f]) / (hi - mid);
                weights[m][f] = up.min(down).max(0.0) * norm;
            }
        }
        Ok(MelFilterBank {
            weights,
            n_mels,
            n_bins,
            fmin,
            fmax,
            centers_hz: edges[1..=n_mels].to_vec(),
        })
    }

    /// Apply to a power-spectrum frame.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }

    /// Band index whose center is closest to `hz`.
    pub fn band_of(&self, hz: f64) -> usize {
        self.centers_hz
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - hz).abs().partial_cmp(&(b.1 - hz).abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Ridge-regularized pseudo-inverse mapping mel power back to linear
    /// power, clipped at zero.
    pub fn pseudo_inverse(&self) -> MelPseudoInverse {
        let m = self.n_mels;
        // G = W * W^T, m x m.
        let mut g = vec![vec![0.0f64; m]; m];
        for i in 0..m {
            for j in 0..m {
                g[i][j] = self.weights[i]
                    .iter()
                    .zip(&self.weights[j])
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
        let ridge = 1e-8 * (0..m).map(|i| g[i][i]).sum::<f64>() / m as f64;
        for (i, row) in g.iter_mut().enumerate() {
            row[i] += ridge.max(1e-12);
        }
        let ginv = invert(&g);
        MelPseudoInverse {
            bank: self.clone(),
            ginv,
        }
    }
}

/// Precomputed `W^T (W W^T + ridge I)^{-1}` applier.
#[derive(Debug, Clone)]
pub struct MelPseudoInverse {
    bank: MelFilterBank,
    ginv: Vec<Vec<f64>>,
}

impl MelPseudoInverse {
    /// Solve for non-negative linear power from a mel power frame.
    pub fn apply(&self, mel_power: &[f64]) -> Vec<f64> {
        let m = self.bank.n_mels;
        let mut z = vec![0.0f64; m];
        for i in 0..m {
            z[i] = self.ginv[i].iter().zip(mel_power).map(|(a, b)| a * b).sum();
        }
        let mut out = vec![0.0f64; self.bank.n_bins];
        for f in 0..self.bank.n_bins {
            let mut v = 0.0;
            for i in 0..m {
                v += self.bank.weights[i][f] * z[i];
            }
            out[f] = v.max(0.0);
        }
        out
    }
}

/// Gauss-Jordan inverse; panics on a singular matrix (the ridge prevents it).
fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p.abs() > 1e-300, "singular mel Gram matrix");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let factor = aug[row][col];
                if factor != 0.0 {
                    for k in 0..2 * n {
                        aug[row][k] -= factor * aug[col][k];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Log-mel spectrogram of a waveform.
pub fn mel_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    let fmax = cfg.fmax.unwrap_or(w.sample_rate as f64 / 2.0);
    let bank = MelFilterBank::new(w.sample_rate, cfg.fft_size, cfg.n_mels, cfg.fmin, fmax)?;
    let s = stft(w, cfg.fft_size, cfg.hop, WindowKind::Hann)?;
    let frames = s
        .frames
        .iter()
        .map(|fr| {
            let power: Vec<f64> = fr.iter().map(|c| c.norm_sqr()).collect();
            bank.apply(&power)
                .into_iter()
                .map(|p| p.max(LOG_FLOOR).ln() as f32)
                .collect()
        })
        .collect();
    Ok(MelSpectrogram {
        frames,
        n_mels: cfg.n_mels,
        fmin: cfg.fmin,
        fmax,
        sample_rate: w.sample_rate,
        fft_size: cfg.fft_size,
        hop: cfg.hop,
        len_hint: s.len_hint,
    })
}

/// Invert a log-mel spectrogram to a linear magnitude spectrogram via the
/// clipped pseudo-inverse of the filterbank.
pub fn mel_to_linear(m: &MelSpectrogram) -> Result<MagSpectrogram> {
    let bank = MelFilterBank::new(m.sample_rate, m.fft_size, m.n_mels, m.fmin, m.fmax)?;
    let pinv = bank.pseudo_inverse();
    let frames = m
        .frames
        .iter()
        .map(|fr| {
            let mel_power: Vec<f64> = fr.iter().map(|&v| (v as f64).exp()).collect();
            pinv.apply(&mel_power).into_iter().map(f64::sqrt).collect()
        })
        .collect();
    Ok(MagSpectrogram {
        frames,
        fft_size: m.fft_size,
        hop: m.hop,
        window: WindowKind::Hann,
        sample_rate: m.sample_rate,
        len_hint: m.len_hint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn white_noise_lights_all_bands() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = Waveform::new(
            (0..16000).map(|_| rng.gen_range(-0.5f32..0.5)).collect(),
            16000,
        )
        .unwrap();
        let mel = mel_spectrogram(&w, &MelConfig::default()).unwrap();
        assert_eq!(mel.frames[0].len(), 80);
        let mid = &mel.frames[mel.n_frames() / 2];
        for (m, &v) in mid.iter().enumerate() {
            assert!(
                (v as f64) > LOG_FLOOR.ln(),
                "band {m} at floor for white noise"
            );
        }
    }

    #[test]
    fn frame_dimension_is_n_mels() {
        let w = Waveform::new(vec![0.1; 4000], 16000).unwrap();
        let cfg = MelConfig {
            n_mels: 80,
            ..Default::default()
        };
        let mel = mel_spectrogram(&w, &cfg).unwrap();
        assert!(mel.frames.iter().all(|f| f.len() == 80));
    }

    #[test]
    fn invalid_range_rejected() {
        let w = Waveform::new(vec![0.1; 4000], 16000).unwrap();
        let cfg = MelConfig {
            fmin: 5000.0,
            fmax: Some(4000.0),
            ..Default::default()
        };
        assert!(mel_spectrogram(&w, &cfg).is_err());
        let cfg = MelConfig {
            fmax: Some(9000.0),
            ..Default::default()
        };
        assert!(mel_spectrogram(&w, &cfg).is_err());
    }

    #[test]
    fn pseudo_inverse_recovers_band_location() {
        // A narrowband mel frame maps back to linear power concentrated
        // near the band's center frequency.
        let bank = MelFilterBank::new(16000, 1024, 80, 0.0, 8000.0).unwrap();
        let pinv = bank.pseudo_inverse();
        let band = bank.band_of(440.0);
        let mut mel_power = vec![0.0f64; 80];
        mel_power[band] = 1.0;
        let linear = pinv.apply(&mel_power);
        let peak = linear
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let peak_hz = peak as f64 * 16000.0 / 1024.0;
        assert!(
            (peak_hz - bank.centers_hz[band]).abs() < 100.0,
            "peak {peak_hz} Hz vs center {}",
            bank.centers_hz[band]
        );
    }
}
