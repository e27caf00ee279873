//! Ensemble model output statistics: link functions from ensemble summaries
//! to predictive-distribution parameters, fitted by minimizing the mean CRPS
//! over a training set.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Unused when std is linked elsewhere in the build graph, which supplies
// inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ForecastCase;
use crate::dist::{
    CensoredLogistic, CensoredNormal, Family, LogNormalMV, PredictiveDistribution, TruncNormal,
};
use crate::optim::{minimize, BfgsOptions};
use crate::stats::{summarize, EnsembleSummary};
use crate::{Error, Result};

/// Floor applied to `S²` inside the log-scale link of the censored models.
pub const S2_FLOOR: f64 = 1e-6;
/// Smallest log-normal mean issued at prediction time.
pub const PREDICT_M_FLOOR: f64 = 1e-6;
/// Floor applied to the log-normal variance link.
pub const LN_VARIANCE_FLOOR: f64 = 1e-12;
/// Per-case loss contributed by a non-positive log-normal mean.
pub const LN_PENALTY: f64 = 1e6;

/// TN EMOS: `μ = a0 + a_ctrl² f_ctrl + a_ens² f̄_ens`, `σ² = b0² + b1² MD`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TnEmosParams {
    pub a0: f64,
    pub a_ctrl: f64,
    pub a_ens: f64,
    pub b0: f64,
    pub b1: f64,
}

/// LN EMOS: `m = α0 + α_ctrl² f_ctrl + α_ens² f̄_ens`, `v = β0² + β1² S²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LnEmosParams {
    pub alpha0: f64,
    pub alpha_ctrl: f64,
    pub alpha_ens: f64,
    pub beta0: f64,
    pub beta1: f64,
}

/// CL0/CN0 EMOS: `μ = γ0 + γ_ctrl f_ctrl + γ_ens f̄_ens + ν p0`,
/// `σ = exp(δ0 + δ1 ln S²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredEmosParams {
    pub gamma0: f64,
    pub gamma_ctrl: f64,
    pub gamma_ens: f64,
    pub nu: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub family: Family,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum EmosParams {
    Tn(TnEmosParams),
    Ln(LnEmosParams),
    Censored(CensoredEmosParams),
}

impl EmosParams {
    pub fn family(&self) -> Family {
        match self {
            EmosParams::Tn(_) => Family::Tn,
            EmosParams::Ln(_) => Family::Ln,
            EmosParams::Censored(p) => p.family,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            EmosParams::Tn(p) => vec![p.a0, p.a_ctrl, p.a_ens, p.b0, p.b1],
            EmosParams::Ln(p) => vec![p.alpha0, p.alpha_ctrl, p.alpha_ens, p.beta0, p.beta1],
            EmosParams::Censored(p) => {
                vec![
                    p.gamma0,
                    p.gamma_ctrl,
                    p.gamma_ens,
                    p.nu,
                    p.delta0,
                    p.delta1,
                ]
            }
        }
    }

    pub fn from_slice(family: Family, v: &[f64]) -> Result<Self> {
        let want = n_params(family);
        if v.len() != want {
            return Err(Error::Config(format!(
                "{} EMOS expects {want} parameters, got {}",
                family.as_str(),
                v.len()
            )));
        }
        Ok(match family {
            Family::Tn => EmosParams::Tn(TnEmosParams {
                a0: v[0],
                a_ctrl: v[1],
                a_ens: v[2],
                b0: v[3],
                b1: v[4],
            }),
            Family::Ln => EmosParams::Ln(LnEmosParams {
                alpha0: v[0],
                alpha_ctrl: v[1],
                alpha_ens: v[2],
                beta0: v[3],
                beta1: v[4],
            }),
            Family::Cl0 | Family::Cn0 => EmosParams::Censored(CensoredEmosParams {
                gamma0: v[0],
                gamma_ctrl: v[1],
                gamma_ens: v[2],
                nu: v[3],
                delta0: v[4],
                delta1: v[5],
                family,
            }),
        })
    }

    /// Predictive distribution for one ensemble.
    pub fn link(&self, summary: &EnsembleSummary, f_ctrl: f64) -> Result<PredictiveDistribution> {
        match self {
            EmosParams::Tn(p) => Ok(PredictiveDistribution::Tn(tn_link(p, summary, f_ctrl))),
            EmosParams::Ln(p) => Ok(PredictiveDistribution::Ln(ln_link(p, summary, f_ctrl)?)),
            EmosParams::Censored(p) => Ok(censored_link(p, summary, f_ctrl)),
        }
    }

    /// Total variant of [`EmosParams::link`] for prediction: a log-normal
    /// mean link that leaves the positive axis is floored at `PREDICT_M_FLOOR`.
    pub fn link_total(
        &self,
        summary: &EnsembleSummary,
        f_ctrl: f64,
    ) -> Result<PredictiveDistribution> {
        match self {
            EmosParams::Ln(p) => {
                let m = ln_mean(p, summary, f_ctrl);
                if m.is_nan() {
                    return Err(Error::NonFinite("log-normal mean link gave NaN".into()));
                }
                let v = ln_variance(p, summary);
                Ok(PredictiveDistribution::Ln(LogNormalMV::from_moments(
                    m.max(PREDICT_M_FLOOR),
                    v.max(LN_VARIANCE_FLOOR),
                )?))
            }
            _ => self.link(summary, f_ctrl),
        }
    }

    /// Replaces coefficients that enter the links squared by their absolute
    /// values; the predictive distributions are unchanged.
    pub fn canonical(&self) -> Self {
        match *self {
            EmosParams::Tn(p) => EmosParams::Tn(TnEmosParams {
                a_ctrl: p.a_ctrl.abs(),
                a_ens: p.a_ens.abs(),
                b0: p.b0.abs(),
                b1: p.b1.abs(),
                ..p
            }),
            EmosParams::Ln(p) => EmosParams::Ln(LnEmosParams {
                alpha_ctrl: p.alpha_ctrl.abs(),
                alpha_ens: p.alpha_ens.abs(),
                beta0: p.beta0.abs(),
                beta1: p.beta1.abs(),
                ..p
            }),
            c => c,
        }
    }
}

fn n_params(family: Family) -> usize {
    match family {
        Family::Tn | Family::Ln => 5,
        Family::Cl0 | Family::Cn0 => 6,
    }
}

pub fn tn_link(p: &TnEmosParams, s: &EnsembleSummary, f_ctrl: f64) -> TruncNormal {
    TruncNormal::new(
        p.a0 + p.a_ctrl * p.a_ctrl * f_ctrl + p.a_ens * p.a_ens * s.mean_exch,
        (p.b0 * p.b0 + p.b1 * p.b1 * s.mean_abs_diff).sqrt(),
    )
}

fn ln_mean(p: &LnEmosParams, s: &EnsembleSummary, f_ctrl: f64) -> f64 {
    p.alpha0 + p.alpha_ctrl * p.alpha_ctrl * f_ctrl + p.alpha_ens * p.alpha_ens * s.mean_exch
}

fn ln_variance(p: &LnEmosParams, s: &EnsembleSummary) -> f64 {
    p.beta0 * p.beta0 + p.beta1 * p.beta1 * s.variance
}

pub fn ln_link(p: &LnEmosParams, s: &EnsembleSummary, f_ctrl: f64) -> Result<LogNormalMV> {
    let m = ln_mean(p, s, f_ctrl);
    let v = ln_variance(p, s);
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::NonFinite(format!(
            "log-normal mean link gave m = {m}"
        )));
    }
    LogNormalMV::from_moments(m, v.max(LN_VARIANCE_FLOOR))
}

/// Whether the censored scale link had to floor `S²` for this ensemble.
pub fn spread_floored(s: &EnsembleSummary) -> bool {
    s.variance < S2_FLOOR
}

pub fn censored_link(
    p: &CensoredEmosParams,
    s: &EnsembleSummary,
    f_ctrl: f64,
) -> PredictiveDistribution {
    let mu = p.gamma0 + p.gamma_ctrl * f_ctrl + p.gamma_ens * s.mean_exch + p.nu * s.zero_prop;
    let sigma = (p.delta0 + p.delta1 * s.variance.max(S2_FLOOR).ln()).exp();
    match p.family {
        Family::Cn0 => PredictiveDistribution::Cn0(CensoredNormal::new(mu, sigma)),
        _ => PredictiveDistribution::Cl0(CensoredLogistic::new(mu, sigma)),
    }
}

/// One complete training case reduced to what the links need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmosSample {
    pub f_ctrl: f64,
    pub summary: EnsembleSummary,
    pub obs: f64,
}

impl EmosSample {
    /// `None` when the case has no observation.
    pub fn from_case(case: &ForecastCase) -> Option<Self> {
        case.obs().map(|obs| EmosSample {
            f_ctrl: case.forecast.control,
            summary: summarize(&case.forecast),
            obs,
        })
    }
}

/// Mean CRPS of `params` over `samples` and its gradient over the parameter
/// vector.
pub fn mean_crps_and_grad(
    family: Family,
    theta: &[f64],
    samples: &[EmosSample],
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for s in samples {
        total += case_loss(family, theta, s, grad);
    }
    let n = samples.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    total / n
}

fn case_loss(family: Family, t: &[f64], s: &EmosSample, grad: &mut [f64]) -> f64 {
    let sm = &s.summary;
    match family {
        Family::Tn => {
            let mu = t[0] + t[1] * t[1] * s.f_ctrl + t[2] * t[2] * sm.mean_exch;
            let var = t[3] * t[3] + t[4] * t[4] * sm.mean_abs_diff;
            let sigma = var.sqrt();
            let (c, [dmu, dsig]) = TruncNormal::new(mu, sigma).crps_with_grad(s.obs);
            grad[0] += dmu;
            grad[1] += dmu * 2.0 * t[1] * s.f_ctrl;
            grad[2] += dmu * 2.0 * t[2] * sm.mean_exch;
            if sigma > 0.0 {
                grad[3] += dsig * t[3] / sigma;
                grad[4] += dsig * t[4] * sm.mean_abs_diff / sigma;
            }
            c
        }
        Family::Ln => {
            let m = t[0] + t[1] * t[1] * s.f_ctrl + t[2] * t[2] * sm.mean_exch;
            if !(m > 0.0) {
                return LN_PENALTY;
            }
            let raw_v = t[3] * t[3] + t[4] * t[4] * sm.variance;
            let v = raw_v.max(LN_VARIANCE_FLOOR);
            let d = match LogNormalMV::from_moments(m, v) {
                Ok(d) => d,
                Err(_) => return LN_PENALTY,
            };
            let (c, [dm, dv]) = d.crps_with_grad(s.obs);
            grad[0] += dm;
            grad[1] += dm * 2.0 * t[1] * s.f_ctrl;
            grad[2] += dm * 2.0 * t[2] * sm.mean_exch;
            if raw_v > LN_VARIANCE_FLOOR {
                grad[3] += dv * 2.0 * t[3];
                grad[4] += dv * 2.0 * t[4] * sm.variance;
            }
            c
        }
        Family::Cl0 | Family::Cn0 => {
            let mu = t[0] + t[1] * s.f_ctrl + t[2] * sm.mean_exch + t[3] * sm.zero_prop;
            let log_s2 = sm.variance.max(S2_FLOOR).ln();
            let sigma = (t[4] + t[5] * log_s2).exp();
            let (c, [dmu, dsig]) = if family == Family::Cn0 {
                CensoredNormal::new(mu, sigma).crps_with_grad(s.obs)
            } else {
                CensoredLogistic::new(mu, sigma).crps_with_grad(s.obs)
            };
            grad[0] += dmu;
            grad[1] += dmu * s.f_ctrl;
            grad[2] += dmu * sm.mean_exch;
            grad[3] += dmu * sm.zero_prop;
            grad[4] += dsig * sigma;
            grad[5] += dsig * sigma * log_s2;
            c
        }
    }
}

pub fn mean_crps(params: &EmosParams, samples: &[EmosSample]) -> f64 {
    let theta = params.to_vec();
    let mut g = vec![0.0; theta.len()];
    mean_crps_and_grad(params.family(), &theta, samples, &mut g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosFit {
    pub params: EmosParams,
    pub mean_crps: f64,
    /// Mean CRPS of the first starting point.
    pub initial_mean_crps: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Training data carried no spread information (constant data).
    pub degenerate: bool,
    /// Cases whose `S²` was floored in the censored scale link.
    pub floored_spread_cases: usize,
}

impl EmosFit {
    /// Set when the optimizer did not report convergence; the parameters
    /// are still the best found.
    pub fn warning(&self) -> bool {
        !self.converged
    }
}

struct Moments {
    obs_mean: f64,
    obs_sd: f64,
}

fn moments(samples: &[EmosSample]) -> Moments {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.obs).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.obs - mean).powi(2)).sum::<f64>() / n;
    Moments {
        obs_mean: mean,
        obs_sd: var.sqrt(),
    }
}

/// Starting values when no previous fit is available.
pub fn default_init(family: Family, samples: &[EmosSample]) -> EmosParams {
    let m = moments(samples);
    let sd = m.obs_sd.max(1e-3);
    let v = match family {
        Family::Tn => vec![0.0, 1.0, 0.1, sd, 0.5],
        Family::Ln => vec![0.0, 1.0, 0.1, sd, 0.5],
        Family::Cl0 | Family::Cn0 => vec![0.0, 1.0, 0.0, 0.0, sd.ln(), 0.0],
    };
    let _ = m.obs_mean;
    EmosParams::from_slice(family, &v).expect("length matches family")
}

/// Ordinary least squares of the observations on (1, f_ctrl, f̄_ens), mapped
/// to each family's links.
pub fn least_squares_init(family: Family, samples: &[EmosSample]) -> EmosParams {
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for s in samples {
        let row = [1.0, s.f_ctrl, s.summary.mean_exch];
        for i in 0..3 {
            xty[i] += row[i] * s.obs;
            for j in 0..3 {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    // Small ridge keeps collinear control/mean designs solvable.
    for (i, row) in xtx.iter_mut().enumerate() {
        row[i] += 1e-8 * (1.0 + row[i]);
    }
    let coef = solve3(xtx, xty).unwrap_or([moments(samples).obs_mean, 0.0, 0.0]);
    let n = samples.len() as f64;
    let resid_var = samples
        .iter()
        .map(|s| {
            let fit = coef[0] + coef[1] * s.f_ctrl + coef[2] * s.summary.mean_exch;
            (s.obs - fit).powi(2)
        })
        .sum::<f64>()
        / n;
    let resid_sd = resid_var.sqrt().max(1e-3);
    let root = |c: f64| c.max(0.0025).sqrt();
    let v = match family {
        Family::Tn | Family::Ln => vec![coef[0], root(coef[1]), root(coef[2]), resid_sd, 0.3],
        Family::Cl0 | Family::Cn0 => {
            let scale = if family == Family::Cl0 {
                resid_sd * 3f64.sqrt() / core::f64::consts::PI
            } else {
                resid_sd
            };
            vec![coef[0], coef[1], coef[2], 0.0, scale.ln(), 0.0]
        }
    };
    EmosParams::from_slice(family, &v).expect("length matches family")
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn random_init(family: Family, samples: &[EmosSample], rng: &mut ChaCha8Rng) -> EmosParams {
    let base = default_init(family, samples).to_vec();
    let v: Vec<f64> = base
        .iter()
        .map(|b| b + rng.random_range(-0.3..0.3) * b.abs().max(0.3))
        .collect();
    EmosParams::from_slice(family, &v).expect("length matches family")
}

fn is_constant(samples: &[EmosSample]) -> Option<f64> {
    let c = samples[0].obs;
    samples
        .iter()
        .all(|s| {
            s.obs == c && s.f_ctrl == c && s.summary.variance == 0.0 && s.summary.mean_exch == c
        })
        .then_some(c)
}

/// Optimum-score estimation of EMOS coefficients.
///
/// Starts from `init` (or [`default_init`]), the least-squares warm start and
/// a seeded random perturbation; returns the best local minimum found.
pub fn fit_emos(
    samples: &[EmosSample],
    family: Family,
    init: Option<&EmosParams>,
    seed: u64,
) -> Result<EmosFit> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "EMOS needs at least 2 complete cases, got {}",
            samples.len()
        )));
    }
    if let Some(init) = init {
        if init.family() != family {
            return Err(Error::Config(format!(
                "initial parameters are {} but family is {}",
                init.family().as_str(),
                family.as_str()
            )));
        }
    }
    let floored_spread_cases = if matches!(family, Family::Cl0 | Family::Cn0) {
        samples
            .iter()
            .filter(|s| spread_floored(&s.summary))
            .count()
    } else {
        0
    };

    if let Some(c) = is_constant(samples) {
        let v = match family {
            Family::Tn => vec![c, 0.0, 0.0, 0.0, 0.0],
            Family::Ln => vec![c.max(1e-6), 0.0, 0.0, 0.0, 0.0],
            Family::Cl0 | Family::Cn0 => vec![c, 0.0, 0.0, 0.0, -40.0, 0.0],
        };
        let params = EmosParams::from_slice(family, &v)?;
        let value = mean_crps(&params, samples);
        return Ok(EmosFit {
            params,
            mean_crps: value,
            initial_mean_crps: value,
            iterations: 0,
            converged: true,
            degenerate: true,
            floored_spread_cases,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = init
        .copied()
        .unwrap_or_else(|| default_init(family, samples));
    let starts = [
        first,
        least_squares_init(family, samples),
        random_init(family, samples, &mut rng),
    ];
    let opts = BfgsOptions::default();
    let objective = |x: &[f64], g: &mut [f64]| mean_crps_and_grad(family, x, samples, g);

    let initial_mean_crps = mean_crps(&first, samples);
    let mut best: Option<(Vec<f64>, f64, usize, bool)> = None;
    let mut iterations = 0;
    for start in starts.iter() {
        let r = minimize(objective, &start.to_vec(), &opts);
        iterations += r.iterations;
        if !r.value.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, v, _, _)) => r.value < *v - 1e-9 * v.abs(),
        };
        if better {
            best = Some((r.x, r.value, r.iterations, r.converged));
        }
    }
    let (x, value, _, converged) = best.ok_or_else(|| {
        Error::NonFinite(format!(
            "{} EMOS objective is not finite at any start",
            family.as_str()
        ))
    })?;
    let params = EmosParams::from_slice(family, &x)?.canonical();
    Ok(EmosFit {
        params,
        mean_crps: value,
        initial_mean_crps,
        iterations,
        converged,
        degenerate: false,
        floored_spread_cases,
    })
}
