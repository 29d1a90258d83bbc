//! L2-cost dynamic time warping between feature sequences, path application,
//! and the duration-ratio rule used to stretch dysarthric speech onto the
//! healthy target's timeline.

use crate::error::{Error, Result};

/// Monotonic alignment between two feature sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPath {
    /// Ordered (i, j) index pairs from (0, 0) to (T_x-1, T_y-1).
    pub steps: Vec<(usize, usize)>,
    /// Accumulated Euclidean frame distance along the path.
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpAxis {
    /// Warp the given sequence (the DTW "X" side) onto the other's length.
    Source,
    /// Warp the given sequence (the DTW "Y" side) onto the other's length.
    Target,
}

fn frame_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Globally optimal monotonic path under Euclidean frame distance with
/// steps {(1,0),(0,1),(1,1)}; ties break toward the diagonal.
pub fn dtw(x: &[Vec<f32>], y: &[Vec<f32>]) -> Result<WarpPath> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Align("empty feature sequence".into()));
    }
    let dim = x[0].len();
    if x.iter().chain(y.iter()).any(|f| f.len() != dim) {
        return Err(Error::Align(format!(
            "feature dimension mismatch (expected {dim})"
        )));
    }
    let (tx, ty) = (x.len(), y.len());
    let mut acc = vec![f64::INFINITY; tx * ty];
    // Predecessor move: 0 = diagonal, 1 = from (i-1, j), 2 = from (i, j-1).
    let mut mv = vec![0u8; tx * ty];
    for i in 0..tx {
        for j in 0..ty {
            let d = frame_dist(&x[i], &y[j]);
            let idx = i * ty + j;
            if i == 0 && j == 0 {
                acc[idx] = d;
                continue;
            }
            let diag = if i > 0 && j > 0 {
                acc[(i - 1) * ty + (j - 1)]
            } else {
                f64::INFINITY
            };
            let up = if i > 0 { acc[(i - 1) * ty + j] } else { f64::INFINITY };
            let left = if j > 0 { acc[i * ty + (j - 1)] } else { f64::INFINITY };
            // Prefer the diagonal on ties: shortest path, deterministic.
            let (best, m) = if diag <= up && diag <= left {
                (diag, 0u8)
            } else if up <= left {
                (up, 1u8)
            } else {
                (left, 2u8)
            };
            acc[idx] = best + d;
            mv[idx] = m;
        }
    }
    let mut steps = Vec::with_capacity(tx + ty);
    let (mut i, mut j) = (tx - 1, ty - 1);
    loop {
        steps.push((i, j));
        if i == 0 && j == 0 {
            break;
        }
        match mv[i * ty + j] {
            0 if i > 0 && j > 0 => {
                i -= 1;
                j -= 1;
            }
            1 if i > 0 => i -= 1,
            2 if j > 0 => j -= 1,
            _ => {
                // First row/column: only one direction remains.
                if i > 0 {
                    i -= 1;
                } else {
                    j -= 1;
                }
            }
        }
    }
    steps.reverse();
    Ok(WarpPath {
        steps,
        cost: acc[(tx - 1) * ty + (ty - 1)],
    })
}

/// Expand/merge frames along the path so the output has the counterpart's
/// length; many-to-one merges are averaged.
pub fn apply_warp(seq: &[Vec<f32>], path: &WarpPath, axis: WarpAxis) -> Result<Vec<Vec<f32>>> {
    if seq.is_empty() || path.steps.is_empty() {
        return Err(Error::Align("empty sequence or path".into()));
    }
    let (own_len, other_len) = match axis {
        WarpAxis::Source => (
            path.steps.last().unwrap().0 + 1,
            path.steps.last().unwrap().1 + 1,
        ),
        WarpAxis::Target => (
            path.steps.last().unwrap().1 + 1,
            path.steps.last().unwrap().0 + 1,
        ),
    };
    if seq.len() != own_len {
        return Err(Error::Align(format!(
            "path expects length {own_len}, sequence has {}",
            seq.len()
        )));
    }
    let dim = seq[0].len();
    let mut sums = vec![vec![0.0f64; dim]; other_len];
    let mut counts = vec![0usize; other_len];
    for &(i, j) in &path.steps {
        let (own, other) = match axis {
            WarpAxis::Source => (i, j),
            WarpAxis::Target => (j, i),
        };
        for d in 0..dim {
            sums[other][d] += seq[own][d] as f64;
        }
        counts[other] += 1;
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(row, c)| {
            debug_assert!(c > 0, "warp path must touch every counterpart frame");
            row.into_iter().map(|v| (v / c as f64) as f32).collect()
        })
        .collect())
}

/// Rate that makes `time_stretch(src, rate)` land on the target duration.
pub fn stretch_rate_for_target(src_dur_s: f64, tgt_dur_s: f64) -> Result<f64> {
    if !(src_dur_s > 0.0) || !(tgt_dur_s > 0.0) {
        return Err(Error::Align(format!(
            "durations must be positive: src {src_dur_s}, tgt {tgt_dur_s}"
        )));
    }
    Ok(src_dur_s / tgt_dur_s)
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Exhaustive monotonic-path search, kept independent of the DP code.

    use super::frame_dist;

    pub fn best_path(x: &[Vec<f32>], y: &[Vec<f32>]) -> (Vec<(usize, usize)>, f64) {
        let mut best: Option<(Vec<(usize, usize)>, f64)> = None;
        let mut current = vec![(0usize, 0usize)];
        let d0 = frame_dist(&x[0], &y[0]);
        explore(x, y, 0, 0, d0, &mut current, &mut best);
        best.expect("at least one monotonic path exists")
    }

    fn explore(
        x: &[Vec<f32>],
        y: &[Vec<f32>],
        i: usize,
        j: usize,
        cost: f64,
        current: &mut Vec<(usize, usize)>,
        best: &mut Option<(Vec<(usize, usize)>, f64)>,
    ) {
        if i == x.len() - 1 && j == y.len() - 1 {
            if best.as_ref().map_or(true, |(_, c)| cost < *c) {
                *best = Some((current.clone(), cost));
            }
            return;
        }
        let moves = [(i + 1, j + 1), (i + 1, j), (i, j + 1)];
        for (ni, nj) in moves {
            if ni < x.len() && nj < y.len() {
                current.push((ni, nj));
                explore(x, y, ni, nj, cost + frame_dist(&x[ni], &y[nj]), current, best);
                current.pop();
            }
        }
    }
}
