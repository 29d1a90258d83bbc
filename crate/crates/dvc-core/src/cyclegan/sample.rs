//! Segment sampling and fill-in-the-frame masking.

use rand::Rng;

use crate::error::{Error, Result};

/// Binary per-frame keep mask; the zero (filled) region is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMask {
    /// 1 = keep, 0 = filled.
    pub values: Vec<u8>,
    pub masked_region: (usize, usize),
}

impl FrameMask {
    pub fn all_ones(len: usize) -> Self {
        FrameMask {
            values: vec![1; len],
            masked_region: (0, 0),
        }
    }
}

/// Contiguous `segment_len`-frame slice with a uniformly random start.
/// Shorter utterances are reflection-padded to exactly `segment_len`.
pub fn sample_segment(
    features: &[Vec<f32>],
    segment_len: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f32>>> {
    if features.is_empty() {
        return Err(Error::Config("cannot sample from an empty sequence".into()));
    }
    if segment_len == 0 {
        return Err(Error::Config("segment_len must be >= 1".into()));
    }
    let t = features.len();
    if t >= segment_len {
        let start = if t == segment_len {
            0
        } else {
            rng.gen_range(0..=t - segment_len)
        };
        return Ok(features[start..start + segment_len].to_vec());
    }
    // Reflection pad: indices bounce off both edges without repeating them.
    let mut out = Vec::with_capacity(segment_len);
    for i in 0..segment_len {
        out.push(features[reflect_index(i, t)].clone());
    }
    Ok(out)
}

fn reflect_index(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let j = i % period;
    if j < len {
        j
    } else {
        period - j
    }
}

/// Zero a random contiguous temporal region: width uniform over
/// `{0, ..., L/2}` inclusive, start uniform over valid positions. Returns
/// the masked segment and the keep mask.
pub fn fif_mask(
    segment: &[Vec<f32>],
    rng: &mut impl Rng,
) -> (Vec<Vec<f32>>, FrameMask) {
    let len = segment.len();
    let max_width = len / 2;
    let width = rng.gen_range(0..=max_width);
    let start = if width >= len {
        0
    } else {
        rng.gen_range(0..=len - width)
    };
    let mut out = segment.to_vec();
    let mut mask = vec![1u8; len];
    for i in start..start + width {
        for v in out[i].iter_mut() {
            *v = 0.0;
        }
        mask[i] = 0;
    }
    (
        out,
        FrameMask {
            values: mask,
            masked_region: (start, width),
        },
    )
}

/// Analytic mean masked fraction of the FIF sampling rule for segment
/// length `len`: `E[width] / len` with width uniform on `{0..len/2}`.
pub fn fif_mean_masked_fraction(len: usize) -> f64 {
    let max_width = len / 2;
    let mean_width = max_width as f64 / 2.0;
    mean_width / len as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frames(t: usize, d: usize) -> Vec<Vec<f32>> {
        (0..t)
            .map(|i| (0..d).map(|j| (i * d + j) as f32).collect())
            .collect()
    }

    #[test]
    fn exact_length_is_deterministic() {
        let feats = frames(16, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seg = sample_segment(&feats, 16, &mut rng).unwrap();
        assert_eq!(seg, feats);
    }

    #[test]
    fn start_positions_are_uniform() {
        // T = 200, L = 128: start in [0, 72]; chi-square over 1e4 draws.
        let feats = frames(200, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n_draws = 10_000;
        let n_bins = 73;
        let mut counts = vec![0usize; n_bins];
        for _ in 0..n_draws {
            let seg = sample_segment(&feats, 128, &mut rng).unwrap();
            let start = seg[0][0] as usize;
            counts[start] += 1;
        }
        let expected = n_draws as f64 / n_bins as f64;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // chi-square 0.99 quantile at 72 degrees of freedom.
        assert!(stat < 102.8, "chi-square statistic {stat:.1}");
    }

    #[test]
    fn short_input_reflection_pads() {
        let feats = frames(50, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seg = sample_segment(&feats, 128, &mut rng).unwrap();
        assert_eq!(seg.len(), 128);
        // First 50 frames are the original, then the reflection bounces.
        assert_eq!(&seg[..50], &feats[..]);
        assert_eq!(seg[50], feats[48]);
        assert_eq!(seg[51], feats[47]);
        // Single-frame input repeats.
        let one = frames(1, 2);
        let seg = sample_segment(&one, 8, &mut rng).unwrap();
        assert!(seg.iter().all(|f| *f == one[0]));
    }

    #[test]
    fn empty_input_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(sample_segment(&[], 8, &mut rng).is_err());
    }

    #[test]
    fn mask_zeroes_exactly_the_region() {
        let seg = frames(64, 5)
            .into_iter()
            .map(|f| f.into_iter().map(|v| v + 1.0).collect())
            .collect::<Vec<Vec<f32>>>();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (masked, mask) = fif_mask(&seg, &mut rng);
            let (start, width) = mask.masked_region;
            assert!(width <= 32);
            for (i, frame) in masked.iter().enumerate() {
                if mask.values[i] == 0 {
                    assert!(i >= start && i < start + width);
                    assert!(frame.iter().all(|&v| v == 0.0));
                } else {
                    assert_eq!(frame, &seg[i]);
                }
            }
            // Zeros form one contiguous region.
            let zero_idx: Vec<usize> = mask
                .values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 0)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(zero_idx.len(), width);
            for w in zero_idx.windows(2) {
                assert_eq!(w[1], w[0] + 1);
            }
        }
    }

    #[test]
    fn width_zero_masks_nothing() {
        let seg = frames(8, 2);
        // Scan seeds until a width-0 draw to pin the degenerate case.
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (masked, mask) = fif_mask(&seg, &mut rng);
            if mask.masked_region.1 == 0 {
                assert_eq!(masked, seg);
                assert!(mask.values.iter().all(|&v| v == 1));
                return;
            }
        }
        panic!("no width-0 draw in 100 seeds");
    }

    #[test]
    fn empirical_masked_fraction_matches_rule() {
        let seg = frames(64, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n_draws = 10_000;
        let mut acc = 0.0f64;
        for _ in 0..n_draws {
            let (_, mask) = fif_mask(&seg, &mut rng);
            acc += mask.masked_region.1 as f64 / 64.0;
        }
        let mean = acc / n_draws as f64;
        let analytic = fif_mean_masked_fraction(64);
        assert!((analytic - 0.25).abs() < 1e-12);
        assert!(
            (mean - analytic).abs() <= 0.01,
            "mean fraction {mean:.4} vs analytic {analytic}"
        );
    }
}
