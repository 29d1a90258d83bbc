//! Central finite-difference verification harness for tape gradients.

use super::tape::{Tape, TensorId};

pub const DEFAULT_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

/// Build the loss with `build` over inputs of the given shapes, compare the
/// tape's gradients against central differences with step [`DEFAULT_STEP`].
pub fn check<F>(shapes: &[Vec<usize>], inputs: &[Vec<f64>], build: F) -> GradCheckReport
where
    F: Fn(&mut Tape<f64>, &[TensorId]) -> TensorId,
{
    let eval = |vals: &[Vec<f64>]| -> f64 {
        let mut tape: Tape<f64> = Tape::new();
        let ids: Vec<TensorId> = shapes
            .iter()
            .zip(vals)
            .map(|(s, v)| tape.input(s, v.clone()).expect("valid input"))
            .collect();
        let loss = build(&mut tape, &ids);
        tape.values(loss)[0]
    };

    // Analytic pass.
    let mut tape: Tape<f64> = Tape::new();
    let ids: Vec<TensorId> = shapes
        .iter()
        .zip(inputs)
        .map(|(s, v)| tape.input(s, v.clone()).expect("valid input"))
        .collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).expect("backward");
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| tape.grad(id).expect("grad").to_vec())
        .collect();

    // Central differences.
    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work: Vec<Vec<f64>> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        let mut grads = vec![0.0f64; input.len()];
        for j in 0..input.len() {
            let orig = work[ti][j];
            work[ti][j] = orig + DEFAULT_STEP;
            let up = eval(&work);
            work[ti][j] = orig - DEFAULT_STEP;
            let down = eval(&work);
            work[ti][j] = orig;
            grads[j] = (up - down) / (2.0 * DEFAULT_STEP);
        }
        numeric.push(grads);
    }

    let mut max_rel = 0.0f64;
    for (a, n) in analytic.iter().zip(&numeric) {
        for (&ga, &gn) in a.iter().zip(n) {
            let denom = ga.abs().max(gn.abs()).max(1e-3);
            max_rel = max_rel.max((ga - gn).abs() / denom);
        }
    }
    GradCheckReport {
        max_rel_error: max_rel,
        analytic,
        numeric,
    }
}
