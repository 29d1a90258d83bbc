//! The objective: least-squares adversarial terms, cycle-consistency in L1
//! or L2, the identity term, and the second adversarial loss on cycled
//! features.

use crate::error::{Error, Result};
use crate::nn::{Real, Tape, TensorId};

use super::config::{CycleNorm, GanConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanSide {
    Generator,
    Discriminator,
}

fn const_like<T: Real>(tape: &mut Tape<T>, like: TensorId, value: f64) -> Result<TensorId> {
    let shape = tape.shape(like).to_vec();
    let n: usize = shape.iter().product();
    tape.input(&shape, vec![T::from_f64(value); n])
}

/// Least-squares adversarial loss. Discriminator side:
/// `mean((D(real) - 1)^2) + mean(D(fake)^2)`; generator side:
/// `mean((D(fake) - 1)^2)`.
pub fn adversarial_loss<T: Real, D>(
    tape: &mut Tape<T>,
    d: D,
    real: TensorId,
    fake: TensorId,
    side: GanSide,
) -> Result<TensorId>
where
    D: Fn(&mut Tape<T>, TensorId) -> Result<TensorId>,
{
    match side {
        GanSide::Discriminator => {
            let d_real = d(tape, real)?;
            let d_fake = d(tape, fake)?;
            let ones = const_like(tape, d_real, 1.0)?;
            let zeros = const_like(tape, d_fake, 0.0)?;
            let real_term = tape.l2(d_real, ones)?;
            let fake_term = tape.l2(d_fake, zeros)?;
            tape.add(real_term, fake_term)
        }
        GanSide::Generator => {
            let d_fake = d(tape, fake)?;
            let ones = const_like(tape, d_fake, 1.0)?;
            tape.l2(d_fake, ones)
        }
    }
}

/// Cycle-consistency: `mean |x - F(G(x))| + mean |y - G(F(y))|` for L1, the
/// squared means for L2.
pub fn cycle_loss<T: Real>(
    tape: &mut Tape<T>,
    x: TensorId,
    x_cyc: TensorId,
    y: TensorId,
    y_cyc: TensorId,
    norm: CycleNorm,
) -> Result<TensorId> {
    let (a, b) = match norm {
        CycleNorm::L1 => (tape.l1(x, x_cyc)?, tape.l1(y, y_cyc)?),
        CycleNorm::L2 => (tape.l2(x, x_cyc)?, tape.l2(y, y_cyc)?),
    };
    tape.add(a, b)
}

/// Identity-mapping loss `mean |G(y) - y| + mean |F(x) - x|`.
pub fn identity_loss<T: Real>(
    tape: &mut Tape<T>,
    x: TensorId,
    f_x: TensorId,
    y: TensorId,
    g_y: TensorId,
) -> Result<TensorId> {
    let a = tape.l1(g_y, y)?;
    let b = tape.l1(f_x, x)?;
    tape.add(a, b)
}

/// Second adversarial loss on bidirectionally converted features: "real" is
/// the original sample, "fake" is its cycle reconstruction, judged by the
/// extra discriminator. Errors when two-step is disabled in `cfg`.
pub fn second_adversarial_loss<T: Real, D>(
    tape: &mut Tape<T>,
    cfg: &GanConfig,
    d2: D,
    x: TensorId,
    x_cyc: TensorId,
    side: GanSide,
) -> Result<TensorId>
where
    D: Fn(&mut Tape<T>, TensorId) -> Result<TensorId>,
{
    if !cfg.two_step {
        return Err(Error::Config(
            "second adversarial loss requires two_step".into(),
        ));
    }
    adversarial_loss(tape, d2, x, x_cyc, side)
}

/// Generator-side component scalars already on the tape.
#[derive(Debug, Clone, Copy)]
pub struct TotalLossParts {
    pub adv_g_xy: TensorId,
    pub adv_g_yx: TensorId,
    pub cycle: TensorId,
    /// Present only while the identity term is active.
    pub identity: Option<TensorId>,
    /// Present only with two-step enabled: (x side, y side).
    pub second: Option<(TensorId, TensorId)>,
}

/// Complete generator objective:
/// `L_GAN(G,D_Y) + L_GAN(F,D_X) + lambda_cycle * L_cycle
///  + lambda_id * L_id * [iter < id_zero_after] + two-step terms`.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    parts: &TotalLossParts,
    cfg: &GanConfig,
    iter: usize,
) -> Result<TensorId> {
    let mut total = tape.add(parts.adv_g_xy, parts.adv_g_yx)?;
    let cycle = tape.affine(parts.cycle, cfg.lambda_cycle, 0.0);
    total = tape.add(total, cycle)?;
    if let Some(id) = parts.identity {
        if iter < cfg.id_zero_after {
            let idw = tape.affine(id, cfg.lambda_id, 0.0);
            total = tape.add(total, idw)?;
        }
    }
    if let Some((sx, sy)) = parts.second {
        if !cfg.two_step {
            return Err(Error::Config(
                "second-adversarial parts supplied with two_step disabled".into(),
            ));
        }
        total = tape.add(total, sx)?;
        total = tape.add(total, sy)?;
    }
    Ok(total)
}
