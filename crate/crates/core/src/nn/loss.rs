//! Output heads and training losses.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::dist::{CensoredNormal, LogNormalMV, PredictiveDistribution, TruncNormal, SCALE_FLOOR};
use crate::{Error, Result};

/// Floor applied to raw outputs read as `e^μ`, `e^σ`, `m` or `v`.
pub const HEAD_FLOOR: f64 = 1e-6;
const CBRT_SQ_FLOOR: f64 = 1e-8;

/// How the raw network outputs are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case")]
pub enum OutputHead {
    /// Outputs are `e^μ` and `e^σ` of a truncated normal.
    TnExpExp,
    /// Outputs are `μ³` and `e^σ` of a censored normal.
    Cn0CubeExp,
    /// Outputs are the mean and variance of a log-normal.
    LnMoments,
    /// `outputs` point forecasts.
    Point { outputs: usize },
}

impl OutputHead {
    pub fn n_outputs(&self) -> usize {
        match self {
            OutputHead::Point { outputs } => *outputs,
            _ => 2,
        }
    }

    /// The loss a distributional head is trained with.
    pub fn crps_loss(&self) -> Option<Loss> {
        match self {
            OutputHead::TnExpExp => Some(Loss::CrpsTn),
            OutputHead::Cn0CubeExp => Some(Loss::CrpsCn0),
            OutputHead::LnMoments => Some(Loss::CrpsLn),
            OutputHead::Point { .. } => None,
        }
    }

    /// Distribution for one sample's raw outputs; `None` for point heads.
    pub fn distribution(&self, raw: &[f64]) -> Option<PredictiveDistribution> {
        match self {
            OutputHead::TnExpExp => {
                let (mu, sigma) = exp_exp(raw);
                Some(PredictiveDistribution::Tn(TruncNormal::new(
                    mu,
                    sigma.max(SCALE_FLOOR),
                )))
            }
            OutputHead::Cn0CubeExp => {
                let mu = raw[0].cbrt();
                let sigma = raw[1].max(HEAD_FLOOR).ln();
                Some(PredictiveDistribution::Cn0(CensoredNormal::new(
                    mu,
                    sigma.max(SCALE_FLOOR),
                )))
            }
            OutputHead::LnMoments => {
                let m = raw[0].max(HEAD_FLOOR);
                let v = raw[1].max(HEAD_FLOOR);
                LogNormalMV::from_moments(m, v)
                    .ok()
                    .map(PredictiveDistribution::Ln)
            }
            OutputHead::Point { .. } => None,
        }
    }
}

fn exp_exp(raw: &[f64]) -> (f64, f64) {
    (raw[0].max(HEAD_FLOOR).ln(), raw[1].max(HEAD_FLOOR).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrpsTn,
    CrpsCn0,
    CrpsLn,
    Mae,
    Mse,
}

impl Loss {
    /// Target values per sample for a head with `n_outputs` outputs.
    pub fn target_dim(&self, n_outputs: usize) -> usize {
        match self {
            Loss::Mae | Loss::Mse => n_outputs,
            _ => 1,
        }
    }

    pub fn compatible_with(&self, head: &OutputHead) -> bool {
        match head {
            OutputHead::Point { .. } => matches!(self, Loss::Mae | Loss::Mse),
            h => h.crps_loss() == Some(*self),
        }
    }
}

/// Mean loss over the batch and its gradient wrt the raw outputs.
///
/// `raw` holds `n_out` values per sample and `targets` holds
/// `loss.target_dim(n_out)` values per sample. Point losses average over
/// every output element.
pub fn loss_and_grad(
    loss: Loss,
    raw: &[f64],
    targets: &[f64],
    n_out: usize,
) -> Result<(f64, Vec<f64>)> {
    let tdim = loss.target_dim(n_out);
    if n_out == 0 || raw.len() % n_out != 0 || targets.len() * n_out != raw.len() * tdim {
        return Err(Error::Validation(format!(
            "loss shapes: {} outputs of width {n_out} vs {} targets",
            raw.len(),
            targets.len()
        )));
    }
    let batch = raw.len() / n_out;
    if batch == 0 {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    if matches!(loss, Loss::CrpsTn | Loss::CrpsCn0 | Loss::CrpsLn) && n_out != 2 {
        return Err(Error::Validation(format!(
            "CRPS losses need 2 outputs, got {n_out}"
        )));
    }
    let mut grad = vec![0.0; raw.len()];
    let mut total = 0.0;
    match loss {
        Loss::Mae | Loss::Mse => {
            let scale = 1.0 / raw.len() as f64;
            for ((o, t), g) in raw.iter().zip(targets).zip(grad.iter_mut()) {
                let r = o - t;
                if loss == Loss::Mae {
                    total += r.abs();
                    *g = if r > 0.0 {
                        scale
                    } else if r < 0.0 {
                        -scale
                    } else {
                        0.0
                    };
                } else {
                    total += r * r;
                    *g = 2.0 * r * scale;
                }
            }
            total *= scale;
        }
        _ => {
            let scale = 1.0 / batch as f64;
            for b in 0..batch {
                let o = &raw[2 * b..2 * b + 2];
                let (c, g0, g1) = crps_head_grad(loss, o, targets[b]);
                total += c;
                grad[2 * b] = g0 * scale;
                grad[2 * b + 1] = g1 * scale;
            }
            total *= scale;
        }
    }
    if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{loss:?} loss evaluated to {total}"
        )));
    }
    Ok((total, grad))
}

/// CRPS of one sample and its derivatives wrt the two raw outputs.
fn crps_head_grad(loss: Loss, o: &[f64], y: f64) -> (f64, f64, f64) {
    match loss {
        Loss::CrpsTn => {
            let (mu, sigma) = exp_exp(o);
            let (c, [dmu, dsig]) = TruncNormal::new(mu, sigma).crps_with_grad(y);
            let g0 = if o[0] > HEAD_FLOOR { dmu / o[0] } else { 0.0 };
            let g1 = if o[1] > HEAD_FLOOR { dsig / o[1] } else { 0.0 };
            (c, g0, g1)
        }
        Loss::CrpsCn0 => {
            let r = o[0].cbrt();
            let sigma = o[1].max(HEAD_FLOOR).ln();
            let (c, [dmu, dsig]) = CensoredNormal::new(r, sigma).crps_with_grad(y);
            let g0 = dmu / (3.0 * (r * r).max(CBRT_SQ_FLOOR));
            let g1 = if o[1] > HEAD_FLOOR { dsig / o[1] } else { 0.0 };
            (c, g0, g1)
        }
        Loss::CrpsLn => {
            let m = o[0].max(HEAD_FLOOR);
            let v = o[1].max(HEAD_FLOOR);
            let d = LogNormalMV::from_moments(m, v).expect("floored moments are positive");
            let (c, [dm, dv]) = d.crps_with_grad(y);
            let g0 = if o[0] > HEAD_FLOOR { dm } else { 0.0 };
            let g1 = if o[1] > HEAD_FLOOR { dv } else { 0.0 };
            (c, g0, g1)
        }
        Loss::Mae | Loss::Mse => unreachable!("point losses are handled by the caller"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_at_targets_is_zero() {
        let (l, g) = loss_and_grad(Loss::Mse, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mae_subgradient() {
        let (l, g) =
            loss_and_grad(Loss::Mae, &[2.0, 0.0, 5.0, 1.0], &[1.0, 1.0, 5.0, 1.0], 1).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g, vec![0.25, -0.25, 0.0, 0.0]);
    }

    #[test]
    fn crps_losses_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-5;
        for loss in [Loss::CrpsTn, Loss::CrpsCn0, Loss::CrpsLn] {
            for _ in 0..50 {
                let batch = rng.random_range(1..6);
                let mut raw = Vec::new();
                let mut y = Vec::new();
                for _ in 0..batch {
                    match loss {
                        Loss::CrpsTn => {
                            raw.push(rng.random_range(0.5..20.0));
                            raw.push(rng.random_range(1.2..6.0));
                        }
                        Loss::CrpsCn0 => {
                            raw.push(rng.random_range(-30.0..200.0));
                            raw.push(rng.random_range(1.2..6.0));
                        }
                        _ => {
                            raw.push(rng.random_range(0.5..10.0));
                            raw.push(rng.random_range(0.1..8.0));
                        }
                    }
                    y.push(rng.random_range(0.0..10.0));
                }
                let (_, g) = loss_and_grad(loss, &raw, &y, 2).unwrap();
                for k in 0..raw.len() {
                    let mut rp = raw.clone();
                    let mut rm = raw.clone();
                    let step = h * raw[k].abs().max(1.0);
                    rp[k] += step;
                    rm[k] -= step;
                    let fd = (loss_and_grad(loss, &rp, &y, 2).unwrap().0
                        - loss_and_grad(loss, &rm, &y, 2).unwrap().0)
                        / (2.0 * step);
                    let err = (fd - g[k]).abs() / fd.abs().max(1e-3);
                    assert!(err < 1e-5, "{loss:?}: analytic {} vs fd {fd}", g[k]);
                }
            }
        }
    }

    #[test]
    fn floored_head_has_zero_gradient() {
        let (_, g) = loss_and_grad(Loss::CrpsTn, &[-1.0, 0.0], &[1.0], 2).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn head_reads() {
        let d = OutputHead::Cn0CubeExp
            .distribution(&[-8.0, core::f64::consts::E])
            .unwrap();
        assert_eq!(d.params(), [-2.0, 1.0]);
        assert!(OutputHead::Point { outputs: 1 }
            .distribution(&[1.0])
            .is_none());
    }
}
