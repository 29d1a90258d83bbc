//! Autocorrelation F0 tracking and log-Gaussian speaker normalization.

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Per-frame fundamental frequency in Hz, 0 encoding unvoiced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct F0Track {
    pub values: Vec<f32>,
    pub hop: usize,
}

/// Log-F0 statistics over a speaker's voiced frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct F0Stats {
    pub mu: f64,
    pub sigma: f64,
    pub speaker_id: String,
}

const FRAME_SIZE: usize = 1024;
const ENERGY_FLOOR: f64 = 1e-4;
const VOICING_NCC: f64 = 0.5;

/// Estimate F0 per frame via the normalized autocorrelation peak within
/// the lag range implied by `[fmin, fmax]`.
pub fn estimate_f0(w: &Waveform, fmin: f64, fmax: f64, hop: usize) -> Result<F0Track> {
    if !(fmin > 0.0 && fmin < fmax) {
        return Err(Error::Audio(format!("invalid F0 range [{fmin}, {fmax}]")));
    }
    if hop == 0 {
        return Err(Error::Audio("hop must be positive".into()));
    }
    let sr = w.sample_rate as f64;
    let lag_min = (sr / fmax).floor().max(2.0) as usize;
    let lag_max = ((sr / fmin).ceil() as usize).min(FRAME_SIZE / 2);
    if lag_min >= lag_max {
        return Err(Error::Audio(format!(
            "F0 range [{fmin}, {fmax}] unusable at sample rate {sr}"
        )));
    }
    let mut values = Vec::new();
    let n = w.len();
    let mut start = 0usize;
    while start + FRAME_SIZE <= n.max(FRAME_SIZE) && start < n {
        let end = (start + FRAME_SIZE).min(n);
        let frame = &w.samples[start..end];
        values.push(frame_f0(frame, sr, lag_min, lag_max));
        start += hop;
    }
    Ok(F0Track { values, hop })
}

fn frame_f0(frame: &[f32], sr: f64, lag_min: usize, lag_max: usize) -> f32 {
    if frame.len() < 2 * lag_min {
        return 0.0;
    }
    let mean = frame.iter().map(|&v| v as f64).sum::<f64>() / frame.len() as f64;
    let x: Vec<f64> = frame.iter().map(|&v| v as f64 - mean).collect();
    let energy = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    if energy.sqrt() < ENERGY_FLOOR {
        return 0.0;
    }
    let lag_max = lag_max.min(x.len() / 2);
    let mut best_lag = 0usize;
    let mut best_ncc = 0.0f64;
    let mut ncc_at = vec![0.0f64; lag_max + 2];
    for lag in lag_min..=lag_max {
        let m = x.len() - lag;
        let mut dot = 0.0f64;
        let mut e0 = 0.0f64;
        let mut e1 = 0.0f64;
        for i in 0..m {
            dot += x[i] * x[i + lag];
            e0 += x[i] * x[i];
            e1 += x[i + lag] * x[i + lag];
        }
        let denom = (e0 * e1).sqrt();
        let ncc = if denom > 0.0 { dot / denom } else { 0.0 };
        ncc_at[lag] = ncc;
        if ncc > best_ncc {
            best_ncc = ncc;
            best_lag = lag;
        }
    }
    if best_ncc < VOICING_NCC || best_lag == 0 {
        return 0.0;
    }
    // Parabolic refinement around the peak.
    let lag = best_lag as f64
        + if best_lag > lag_min && best_lag < lag_max {
            let a = ncc_at[best_lag - 1];
            let b = ncc_at[best_lag];
            let c = ncc_at[best_lag + 1];
            let denom = a - 2.0 * b + c;
            if denom.abs() > 1e-12 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        } else {
            0.0
        };
    (sr / lag) as f32
}

/// Pool voiced frames of several tracks into per-speaker log-F0 statistics.
pub fn f0_stats_from_tracks(speaker_id: &str, tracks: &[F0Track]) -> Option<F0Stats> {
    let voiced: Vec<f64> = tracks
        .iter()
        .flat_map(|t| t.values.iter())
        .filter(|&&v| v > 0.0)
        .map(|&v| (v as f64).ln())
        .collect();
    if voiced.is_empty() {
        return None;
    }
    let mu = voiced.iter().sum::<f64>() / voiced.len() as f64;
    let var = voiced.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / voiced.len() as f64;
    Some(F0Stats {
        mu,
        sigma: var.sqrt(),
        speaker_id: speaker_id.to_string(),
    })
}

/// Map voiced frames through the log-Gaussian transform
/// `f' = exp((ln f - mu_s) / sigma_s * sigma_t + mu_t)`; unvoiced stays 0.
pub fn convert_f0(f: &F0Track, src: &F0Stats, tgt: &F0Stats) -> Result<F0Track> {
    if !(src.sigma > 0.0) {
        return Err(Error::Audio(format!(
            "source F0 sigma must be > 0 (speaker {})",
            src.speaker_id
        )));
    }
    let values = f
        .values
        .iter()
        .map(|&v| {
            if v > 0.0 {
                let z = ((v as f64).ln() - src.mu) / src.sigma;
                (z * tgt.sigma + tgt.mu).exp() as f32
            } else {
                0.0
            }
        })
        .collect();
    Ok(F0Track {
        values,
        hop: f.hop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn tone(freq: f64, dur_s: f64, sr: u32) -> Waveform {
        let n = (dur_s * sr as f64).round() as usize;
        Waveform::new(
            (0..n)
                .map(|i| {
                    (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin()) as f32
                })
                .collect(),
            sr,
        )
        .unwrap()
    }

    #[test]
    fn tracks_a_200hz_tone() {
        let w = tone(200.0, 1.0, 16000);
        let t = estimate_f0(&w, 60.0, 400.0, 256).unwrap();
        let mut voiced: Vec<f32> = t.values.iter().copied().filter(|&v| v > 0.0).collect();
        assert!(!voiced.is_empty());
        voiced.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = voiced[voiced.len() / 2];
        assert!((median - 200.0).abs() <= 3.0, "median {median}");
    }

    #[test]
    fn silence_is_unvoiced() {
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let t = estimate_f0(&w, 60.0, 400.0, 256).unwrap();
        assert!(t.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_noise_mostly_unvoiced() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let w = Waveform::new(
            (0..16000).map(|_| rng.gen_range(-0.5f32..0.5)).collect(),
            16000,
        )
        .unwrap();
        let t = estimate_f0(&w, 60.0, 400.0, 256).unwrap();
        let unvoiced = t.values.iter().filter(|&&v| v == 0.0).count();
        assert!(
            unvoiced as f64 >= 0.9 * t.values.len() as f64,
            "{unvoiced}/{} unvoiced",
            t.values.len()
        );
    }

    #[test]
    fn conversion_maps_mean_to_mean() {
        let src = F0Stats {
            mu: (100.0f64).ln(),
            sigma: 0.1,
            speaker_id: "s".into(),
        };
        let tgt = F0Stats {
            mu: (200.0f64).ln(),
            sigma: 0.2,
            speaker_id: "t".into(),
        };
        let track = F0Track {
            values: vec![100.0, 0.0, 110.0],
            hop: 256,
        };
        let out = convert_f0(&track, &src, &tgt).unwrap();
        assert!((out.values[0] - 200.0).abs() < 1e-2);
        assert_eq!(out.values[1], 0.0);
        // Closed form: exp((ln 110 - ln 100)/0.1 * 0.2 + ln 200)
        //            = 200 * 1.1^2 = 242.0 exactly.
        assert!((out.values[2] - 242.0).abs() < 0.01, "{}", out.values[2]);
    }

    #[test]
    fn identity_stats_are_identity_on_voiced() {
        let st = F0Stats {
            mu: (150.0f64).ln(),
            sigma: 0.25,
            speaker_id: "s".into(),
        };
        let track = F0Track {
            values: vec![95.0, 150.0, 0.0, 310.5],
            hop: 256,
        };
        let out = convert_f0(&track, &st, &st).unwrap();
        for (a, b) in track.values.iter().zip(&out.values) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_sigma_rejected() {
        let src = F0Stats {
            mu: 0.0,
            sigma: 0.0,
            speaker_id: "s".into(),
        };
        let tgt = src.clone();
        let track = F0Track {
            values: vec![100.0],
            hop: 256,
        };
        assert!(convert_f0(&track, &src, &tgt).is_err());
    }
}
