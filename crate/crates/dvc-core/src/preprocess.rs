//! Signal cleanup: stationary spectral-gating noise removal profiled on the
//! first 0.5 s, energy-based silence trimming at 30 dB, and removal of the
//! leading/trailing 0.2 s click region.
//!
//! Stage order in the pipeline is click removal, then denoise, then trim,
//! so the noise-profile window is not consumed by trimming.

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::dsp::{istft, stft, WindowKind, DEFAULT_FFT_SIZE, DEFAULT_HOP};
use crate::error::{Error, Result};

/// Per-bin magnitude statistics of the noise head segment.
#[derive(Debug, Clone)]
pub struct NoiseProfile {
    pub mean_mag: Vec<f64>,
    pub std_mag: Vec<f64>,
    pub n_frames: usize,
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
}

/// Spectral gate parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateParams {
    pub n_std_thresh: f64,
    pub attenuation_db: f64,
    pub smoothing_bins: usize,
    pub smoothing_frames: usize,
}

impl Default for GateParams {
    fn default() -> Self {
        GateParams {
            n_std_thresh: 1.5,
            attenuation_db: 30.0,
            smoothing_bins: 4,
            smoothing_frames: 4,
        }
    }
}

impl GateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_std_thresh > 0.0) {
            return Err(Error::Config(format!(
                "n_std_thresh must be > 0, got {}",
                self.n_std_thresh
            )));
        }
        if self.attenuation_db < 0.0 {
            return Err(Error::Config(format!(
                "attenuation_db must be >= 0, got {}",
                self.attenuation_db
            )));
        }
        Ok(())
    }
}

/// Per-file trim/click report entry emitted by the batch preprocessor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub utterance_id: String,
    pub input_samples: usize,
    pub output_samples: usize,
    pub click_removed_s: f64,
    pub trimmed_s: f64,
    pub warnings: Vec<String>,
}

/// Mean/std of STFT magnitudes over the first `head_s` seconds.
/// A head shorter than `head_s` uses the whole signal (with a warning flag).
pub fn estimate_noise_profile(w: &Waveform, head_s: f64) -> Result<NoiseProfile> {
    let fft_size = DEFAULT_FFT_SIZE;
    let hop = DEFAULT_HOP;
    let head_len = ((head_s * w.sample_rate as f64).round() as usize).min(w.len());
    let head = Waveform::new(w.samples[..head_len].to_vec(), w.sample_rate)?;
    let s = stft(&head, fft_size, hop, WindowKind::Hann)?;
    let n_bins = fft_size / 2 + 1;
    let mut mean = vec![0.0f64; n_bins];
    let mut m2 = vec![0.0f64; n_bins];
    let n = s.frames.len().max(1) as f64;
    for fr in &s.frames {
        for (f, c) in fr.iter().enumerate() {
            mean[f] += c.norm();
        }
    }
    for v in mean.iter_mut() {
        *v /= n;
    }
    for fr in &s.frames {
        for (f, c) in fr.iter().enumerate() {
            let d = c.norm() - mean[f];
            m2[f] += d * d;
        }
    }
    let std = m2.iter().map(|&v| (v / n).sqrt()).collect();
    Ok(NoiseProfile {
        mean_mag: mean,
        std_mag: std,
        n_frames: s.frames.len(),
        sample_rate: w.sample_rate,
        fft_size,
        hop,
    })
}

/// Attenuate STFT bins whose (smoothed) magnitude falls below
/// `mean + n_std_thresh * std` by `attenuation_db`. The mask is a sigmoid of
/// the threshold distance computed on magnitudes box-smoothed over
/// `smoothing_bins x smoothing_frames`; output length equals input length.
pub fn spectral_gate(w: &Waveform, profile: &NoiseProfile, params: &GateParams) -> Result<Waveform> {
    params.validate()?;
    if profile.sample_rate != w.sample_rate {
        return Err(Error::Audio(format!(
            "noise profile sample rate {} != waveform {}",
            profile.sample_rate, w.sample_rate
        )));
    }
    if w.is_empty() {
        return Ok(w.clone());
    }
    let mut s = stft(w, profile.fft_size, profile.hop, WindowKind::Hann)?;
    let n_bins = profile.fft_size / 2 + 1;
    let n_frames = s.frames.len();

    let mags: Vec<Vec<f64>> = s
        .frames
        .iter()
        .map(|fr| fr.iter().map(|c| c.norm()).collect())
        .collect();
    let smoothed = box_smooth(&mags, params.smoothing_bins, params.smoothing_frames);

    let atten = 10f64.powf(-params.attenuation_db / 20.0);
    for t in 0..n_frames {
        for f in 0..n_bins {
            let thresh = profile.mean_mag[f] + params.n_std_thresh * profile.std_mag[f];
            // Transition band sits just above the threshold so bins at or
            // below it get the full attenuation depth.
            let scale = (profile.std_mag[f] / 8.0).max(1e-12);
            let z = (smoothed[t][f] - thresh - 0.5 * profile.std_mag[f]) / scale;
            let mask = sigmoid(z);
            let gain = atten + (1.0 - atten) * mask;
            s.frames[t][f] *= gain;
        }
    }
    istft(&s)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Box filter over time x frequency, normalized by the in-range tap count.
fn box_smooth(mags: &[Vec<f64>], bins: usize, frames: usize) -> Vec<Vec<f64>> {
    let t_n = mags.len();
    if t_n == 0 {
        return Vec::new();
    }
    let f_n = mags[0].len();
    let bh = (bins / 2) as isize;
    let fh = (frames / 2) as isize;
    let mut out = vec![vec![0.0f64; f_n]; t_n];
    for t in 0..t_n as isize {
        for f in 0..f_n as isize {
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for dt in -fh..=fh {
                for df in -bh..=bh {
                    let (tt, ff) = (t + dt, f + df);
                    if tt >= 0 && tt < t_n as isize && ff >= 0 && ff < f_n as isize {
                        acc += mags[tt as usize][ff as usize];
                        cnt += 1;
                    }
                }
            }
            out[t as usize][f as usize] = acc / cnt.max(1) as f64;
        }
    }
    out
}

/// Trim frame parameters follow the feature STFT for consistency.
pub const TRIM_FRAME: usize = 2048;
pub const TRIM_HOP: usize = 512;

/// Remove leading/trailing frames more than `top_db` below the loudest
/// frame's RMS. The output is a contiguous sample-exact slice of the input;
/// interior silence is retained. Entirely silent input yields an empty
/// waveform.
pub fn trim_silence(w: &Waveform, top_db: f64) -> Result<Waveform> {
    if w.is_empty() {
        return Ok(w.clone());
    }
    // Centered frames at TRIM_HOP spacing.
    let n = w.len();
    let mut rms = Vec::new();
    let mut center = 0usize;
    while center < n {
        let lo = center.saturating_sub(TRIM_FRAME / 2);
        let hi = (center + TRIM_FRAME / 2).min(n);
        let seg = &w.samples[lo..hi];
        let e: f64 = seg.iter().map(|&v| (v as f64) * (v as f64)).sum();
        rms.push((e / seg.len().max(1) as f64).sqrt());
        center += TRIM_HOP;
    }
    let max_rms = rms.iter().cloned().fold(0.0f64, f64::max);
    if max_rms <= 0.0 {
        return Waveform::new(Vec::new(), w.sample_rate);
    }
    let floor = max_rms * 10f64.powf(-top_db / 20.0);
    let kept: Vec<usize> = (0..rms.len()).filter(|&i| rms[i] >= floor).collect();
    if kept.is_empty() {
        return Waveform::new(Vec::new(), w.sample_rate);
    }
    let first = kept[0];
    let last = *kept.last().unwrap();
    let start = if first == 0 {
        0
    } else {
        (first * TRIM_HOP).saturating_sub(TRIM_HOP / 2).min(n)
    };
    let end = if last == rms.len() - 1 {
        n
    } else {
        (last * TRIM_HOP + TRIM_HOP / 2).min(n)
    };
    Waveform::new(w.samples[start..end.max(start)].to_vec(), w.sample_rate)
}

/// Drop the first and last `margin_s` seconds. Signals no longer than
/// `2 * margin_s` are returned unchanged.
pub fn remove_clicks(w: &Waveform, margin_s: f64) -> Result<Waveform> {
    let margin = (margin_s * w.sample_rate as f64).round() as usize;
    if margin == 0 {
        return Ok(w.clone());
    }
    if w.len() <= 2 * margin {
        return Ok(w.clone());
    }
    Waveform::new(
        w.samples[margin..w.len() - margin].to_vec(),
        w.sample_rate,
    )
}

/// Full defaults for the preprocessing stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub gate: GateParams,
    pub top_db: f64,
    pub noise_head_s: f64,
    pub click_margin_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            gate: GateParams::default(),
            top_db: 30.0,
            noise_head_s: 0.5,
            click_margin_s: 0.2,
        }
    }
}

/// Click removal, then spectral gating profiled on the head, then trimming.
pub fn preprocess_pipeline(w: &Waveform, cfg: &PreprocessConfig) -> Result<(Waveform, Vec<String>)> {
    let mut warnings = Vec::new();
    let clicked = remove_clicks(w, cfg.click_margin_s)?;
    if clicked.len() == w.len() && w.len() <= (2.0 * cfg.click_margin_s * w.sample_rate as f64) as usize
    {
        warnings.push(format!(
            "signal shorter than 2 x {} s; click margins not removed",
            cfg.click_margin_s
        ));
    }
    if clicked.is_empty() {
        warnings.push("empty after click removal".into());
        return Ok((clicked, warnings));
    }
    if (clicked.len() as f64) < cfg.noise_head_s * clicked.sample_rate as f64 {
        warnings.push(format!(
            "signal shorter than the {} s noise head; profiling on the whole signal",
            cfg.noise_head_s
        ));
    }
    let profile = estimate_noise_profile(&clicked, cfg.noise_head_s)?;
    let gated = spectral_gate(&clicked, &profile, &cfg.gate)?;
    let trimmed = trim_silence(&gated, cfg.top_db)?;
    if trimmed.is_empty() {
        warnings.push("entirely silent after trim".into());
    }
    Ok((trimmed, warnings))
}
