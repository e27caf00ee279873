//! Zero-bounded predictive families: truncated normal, log-normal (moment
//! parameterized), logistic censored at zero and normal censored at zero.
//!
//! Every family exposes its CDF, quantile function, mean, closed-form CRPS and
//! the analytic gradient of the CRPS with respect to its natural parameters.

use alloc::format;

// Unused when std is linked elsewhere in the build graph, which supplies
// inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::special::{
    log_norm_cdf, log_norm_pdf, logistic_cdf, norm_cdf, norm_pdf, norm_quantile, softplus,
    FRAC_1_SQRT_PI, SQRT_2,
};
use crate::{Error, Result};

/// Lower bound applied to scale parameters inside CDF/CRPS evaluations.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Below this standardized location the truncated normal is evaluated through
/// its exponential limit.
const TN_EXP_LIMIT: f64 = -1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Normal truncated at zero.
    Tn,
    /// Log-normal with mean/variance links.
    Ln,
    /// Logistic left-censored at zero.
    Cl0,
    /// Normal left-censored at zero.
    Cn0,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Tn => "tn",
            Family::Ln => "ln",
            Family::Cl0 => "cl0",
            Family::Cn0 => "cn0",
        }
    }
}

impl core::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tn" => Ok(Family::Tn),
            "ln" => Ok(Family::Ln),
            "cl0" => Ok(Family::Cl0),
            "cn0" => Ok(Family::Cn0),
            other => Err(Error::Config(format!(
                "unknown distribution family '{other}'"
            ))),
        }
    }
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability {p} is outside (0, 1)")))
    }
}

/// Nudges an analytic quantile up until `cdf(q) >= p`, absorbing rounding.
fn settle_quantile(mut q: f64, p: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut step = q.abs().max(1e-300) * 4.0 * f64::EPSILON;
    for _ in 0..200 {
        if cdf(q) >= p {
            break;
        }
        q += step;
        step *= 2.0;
    }
    q
}

// ---------------------------------------------------------------------------
// Truncated normal

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncNormal {
    pub location: f64,
    pub scale: f64,
}

/// Ratios of normal tail quantities to `p = Φ(a)`, computed in log space
/// when `p` is small.
struct TnRatios {
    /// Φ(-z) / p
    tail: f64,
    /// φ(z) / p
    dens: f64,
    /// Φ(√2 a) / p²
    pair: f64,
    /// φ(a) / p
    mills: f64,
}

fn tn_ratios(a: f64, z: f64) -> TnRatios {
    if a > -5.0 {
        let p = norm_cdf(a);
        TnRatios {
            tail: norm_cdf(-z) / p,
            dens: norm_pdf(z) / p,
            pair: norm_cdf(SQRT_2 * a) / (p * p),
            mills: norm_pdf(a) / p,
        }
    } else {
        let lp = log_norm_cdf(a);
        TnRatios {
            tail: (log_norm_cdf(-z) - lp).exp(),
            dens: (log_norm_pdf(z) - lp).exp(),
            pair: (log_norm_cdf(SQRT_2 * a) - 2.0 * lp).exp(),
            mills: (log_norm_pdf(a) - lp).exp(),
        }
    }
}

/// CRPS of an exponential law with the given rate, and its rate derivative.
fn exp_crps(rate: f64, x: f64) -> (f64, f64) {
    let e = (-rate * x).exp();
    let crps = x + 2.0 / rate * e - 1.5 / rate;
    let d_rate = -2.0 / (rate * rate) * e - 2.0 * x / rate * e + 1.5 / (rate * rate);
    (crps, d_rate)
}

impl TruncNormal {
    pub fn new(location: f64, scale: f64) -> Self {
        TruncNormal { location, scale }
    }

    fn sigma(&self) -> f64 {
        self.scale.max(SCALE_FLOOR)
    }

    fn a(&self) -> f64 {
        self.location / self.sigma()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let s = self.sigma();
        let a = self.a();
        if a < TN_EXP_LIMIT {
            let rate = -self.location / (s * s);
            return 1.0 - (-rate * x).exp();
        }
        let z = (x - self.location) / s;
        if z > 0.0 || a <= -5.0 {
            (1.0 - tn_ratios(a, z).tail).clamp(0.0, 1.0)
        } else {
            ((norm_cdf(z) - norm_cdf(-a)) / norm_cdf(a)).clamp(0.0, 1.0)
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        let s = self.sigma();
        let a = self.a();
        let guess = if a < -30.0 {
            let rate = -self.location / (s * s);
            -(-p).ln_1p() / rate
        } else {
            let mass = norm_cdf(a);
            let z = -norm_quantile((1.0 - p) * mass);
            (self.location + s * z).max(0.0)
        };
        let q = if a < -30.0 {
            bisect_quantile(|x| self.cdf(x), p, guess)
        } else {
            guess
        };
        Ok(settle_quantile(q, p, |x| self.cdf(x)))
    }

    pub fn mean(&self) -> f64 {
        let s = self.sigma();
        let a = self.a();
        if a < TN_EXP_LIMIT {
            return s * s / -self.location;
        }
        self.location + s * tn_ratios(a, 0.0).mills
    }

    pub fn crps(&self, x: f64) -> f64 {
        self.crps_with_grad(x).0
    }

    /// Gradient of the CRPS with respect to (location, scale).
    pub fn crps_grad(&self, x: f64) -> [f64; 2] {
        self.crps_with_grad(x).1
    }

    pub fn crps_with_grad(&self, x: f64) -> (f64, [f64; 2]) {
        if x < 0.0 {
            let (c, g) = self.crps_with_grad(0.0);
            return (c - x, g);
        }
        let floored = self.scale < SCALE_FLOOR;
        let s = self.sigma();
        let a = self.a();
        if a < TN_EXP_LIMIT {
            let rate = -self.location / (s * s);
            let (c, dr) = exp_crps(rate, x);
            let dmu = dr * (-1.0 / (s * s));
            let dsig = if floored {
                0.0
            } else {
                dr * 2.0 * self.location / (s * s * s)
            };
            return (c, [dmu, dsig]);
        }
        let z = (x - self.location) / s;
        let r = tn_ratios(a, z);
        let h = z * (1.0 - 2.0 * r.tail) + 2.0 * r.dens - FRAC_1_SQRT_PI * r.pair;
        let h_z = 1.0 - 2.0 * r.tail;
        let h_a = r.mills * (z * h_z + z + 2.0 * r.dens - 2.0 * r.mills - 2.0 * h);
        let crps = (s * h).max(0.0);
        let dmu = h_a - h_z;
        let dsig = if floored { 0.0 } else { h - a * h_a - z * h_z };
        (crps, [dmu, dsig])
    }
}

/// Bisection for the smallest `x >= 0` with `cdf(x) >= p`, bracketing
/// upward from `guess`.
fn bisect_quantile(cdf: impl Fn(f64) -> f64, p: f64, guess: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = guess.max(f64::MIN_POSITIVE);
    let mut n = 0;
    while cdf(hi) < p && n < 2000 {
        lo = hi;
        hi *= 2.0;
        n += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

// ---------------------------------------------------------------------------
// Log-normal, parameterized by mean and variance

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalMV {
    pub mean: f64,
    pub variance: f64,
    pub mu_log: f64,
    pub sigma_log: f64,
}

/// Maps (mean, variance) to the log-scale location and scale.
pub fn ln_from_moments(m: f64, v: f64) -> Result<LogNormalMV> {
    LogNormalMV::from_moments(m, v)
}

impl LogNormalMV {
    pub fn from_moments(m: f64, v: f64) -> Result<Self> {
        if !(m > 0.0) || !(v > 0.0) || !m.is_finite() || !v.is_finite() {
            return Err(Error::Domain(format!(
                "log-normal moments need m > 0 and v > 0, got m={m}, v={v}"
            )));
        }
        let ratio = v / (m * m);
        let sigma2 = ratio.ln_1p();
        Ok(LogNormalMV {
            mean: m,
            variance: v,
            mu_log: m.ln() - 0.5 * sigma2,
            sigma_log: sigma2.sqrt(),
        })
    }

    pub fn from_log_params(mu_log: f64, sigma_log: f64) -> Self {
        let s2 = sigma_log * sigma_log;
        LogNormalMV {
            mean: (mu_log + 0.5 * s2).exp(),
            variance: s2.exp_m1() * (2.0 * mu_log + s2).exp(),
            mu_log,
            sigma_log,
        }
    }

    fn sigma(&self) -> f64 {
        self.sigma_log.max(SCALE_FLOOR)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        norm_cdf((x.ln() - self.mu_log) / self.sigma())
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        let q = (self.mu_log + self.sigma() * norm_quantile(p)).exp();
        Ok(settle_quantile(q, p, |x| self.cdf(x)))
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// CRPS and its gradient with respect to (mu_log, sigma_log).
    pub fn crps_with_log_grad(&self, x: f64) -> (f64, [f64; 2]) {
        if x < 0.0 {
            let (c, g) = self.crps_with_log_grad(0.0);
            return (c - x, g);
        }
        let s = self.sigma();
        let big_m = (self.mu_log + 0.5 * s * s).exp();
        let half = norm_cdf(s / SQRT_2);
        let (term_x, cdf_ws, pdf_ws) = if x > 0.0 {
            let w = (x.ln() - self.mu_log) / s;
            (
                x * (2.0 * norm_cdf(w) - 1.0),
                norm_cdf(w - s),
                norm_pdf(w - s),
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        let bracket = cdf_ws + half - 1.0;
        let crps = (term_x - 2.0 * big_m * bracket).max(0.0);
        let dmu = -2.0 * big_m * bracket;
        let dsig = if self.sigma_log < SCALE_FLOOR {
            0.0
        } else {
            2.0 * big_m * pdf_ws - 2.0 * big_m * s * bracket - SQRT_2 * big_m * norm_pdf(s / SQRT_2)
        };
        (crps, [dmu, dsig])
    }

    pub fn crps(&self, x: f64) -> f64 {
        self.crps_with_log_grad(x).0
    }

    /// Gradient of the CRPS with respect to (mean, variance).
    pub fn crps_grad(&self, x: f64) -> [f64; 2] {
        self.crps_with_grad(x).1
    }

    pub fn crps_with_grad(&self, x: f64) -> (f64, [f64; 2]) {
        let (c, [dmu, dsig]) = self.crps_with_log_grad(x);
        let m = self.mean;
        let v = self.variance;
        let total = m * m + v;
        let dmu_dm = 2.0 / m - m / total;
        let dmu_dv = -0.5 / total;
        let s = self.sigma_log.max(SCALE_FLOOR);
        let dsig_dm = -v / (m * total * s);
        let dsig_dv = 0.5 / (total * s);
        (
            c,
            [dmu * dmu_dm + dsig * dsig_dm, dmu * dmu_dv + dsig * dsig_dv],
        )
    }
}

// ---------------------------------------------------------------------------
// Logistic censored at zero

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredLogistic {
    pub location: f64,
    pub scale: f64,
}

impl CensoredLogistic {
    pub fn new(location: f64, scale: f64) -> Self {
        CensoredLogistic { location, scale }
    }

    fn sigma(&self) -> f64 {
        self.scale.max(SCALE_FLOOR)
    }

    /// Probability of exactly zero, `(1 + e^{μ/σ})⁻¹`.
    pub fn mass_at_zero(&self) -> f64 {
        logistic_cdf(-self.location / self.sigma())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            logistic_cdf((x - self.location) / self.sigma())
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        if p <= self.mass_at_zero() {
            return Ok(0.0);
        }
        let q = (self.location + self.sigma() * (p / (1.0 - p)).ln()).max(0.0);
        Ok(settle_quantile(q, p, |x| self.cdf(x)))
    }

    pub fn mean(&self) -> f64 {
        let s = self.sigma();
        s * softplus(self.location / s)
    }

    pub fn crps(&self, x: f64) -> f64 {
        self.crps_with_grad(x).0
    }

    pub fn crps_grad(&self, x: f64) -> [f64; 2] {
        self.crps_with_grad(x).1
    }

    pub fn crps_with_grad(&self, x: f64) -> (f64, [f64; 2]) {
        if x < 0.0 {
            let (c, g) = self.crps_with_grad(0.0);
            return (c - x, g);
        }
        let s = self.sigma();
        let z = (x - self.location) / s;
        let b = -self.location / s;
        let gb = logistic_cdf(b);
        let h = z + 2.0 * softplus(-z) - 1.0 - softplus(b) + gb;
        let h_z = 2.0 * logistic_cdf(z) - 1.0;
        let h_b = -gb * gb;
        let dmu = -h_z - h_b;
        let dsig = if self.scale < SCALE_FLOOR {
            0.0
        } else {
            h - z * h_z - b * h_b
        };
        ((s * h).max(0.0), [dmu, dsig])
    }
}

// ---------------------------------------------------------------------------
// Normal censored at zero

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredNormal {
    pub location: f64,
    pub scale: f64,
}

impl CensoredNormal {
    pub fn new(location: f64, scale: f64) -> Self {
        CensoredNormal { location, scale }
    }

    fn sigma(&self) -> f64 {
        self.scale.max(SCALE_FLOOR)
    }

    /// Probability of exactly zero, `Φ(-μ/σ)`.
    pub fn mass_at_zero(&self) -> f64 {
        norm_cdf(-self.location / self.sigma())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            norm_cdf((x - self.location) / self.sigma())
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        if p <= self.mass_at_zero() {
            return Ok(0.0);
        }
        let q = (self.location + self.sigma() * norm_quantile(p)).max(0.0);
        Ok(settle_quantile(q, p, |x| self.cdf(x)))
    }

    pub fn mean(&self) -> f64 {
        let s = self.sigma();
        let a = self.location / s;
        self.location * norm_cdf(a) + s * norm_pdf(a)
    }

    pub fn crps(&self, x: f64) -> f64 {
        self.crps_with_grad(x).0
    }

    pub fn crps_grad(&self, x: f64) -> [f64; 2] {
        self.crps_with_grad(x).1
    }

    pub fn crps_with_grad(&self, x: f64) -> (f64, [f64; 2]) {
        if x < 0.0 {
            let (c, g) = self.crps_with_grad(0.0);
            return (c - x, g);
        }
        let s = self.sigma();
        let z = (x - self.location) / s;
        let b = -self.location / s;
        let pz = norm_cdf(z);
        let pb = norm_cdf(b);
        let h = z * (2.0 * pz - 1.0) + 2.0 * norm_pdf(z)
            - FRAC_1_SQRT_PI
            - b * pb * pb
            - 2.0 * norm_pdf(b) * pb
            + FRAC_1_SQRT_PI * norm_cdf(SQRT_2 * b);
        let h_z = 2.0 * pz - 1.0;
        let h_b = -pb * pb;
        let dmu = -h_z - h_b;
        let dsig = if self.scale < SCALE_FLOOR {
            0.0
        } else {
            h - z * h_z - b * h_b
        };
        ((s * h).max(0.0), [dmu, dsig])
    }
}

// ---------------------------------------------------------------------------

/// A predictive law with support on `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum PredictiveDistribution {
    Tn(TruncNormal),
    Ln(LogNormalMV),
    Cl0(CensoredLogistic),
    Cn0(CensoredNormal),
}

impl PredictiveDistribution {
    /// Builds a distribution from its two natural parameters: (location,
    /// scale) for TN/CL0/CN0 and (mean, variance) for LN.
    pub fn from_params(family: Family, p1: f64, p2: f64) -> Result<Self> {
        if !p1.is_finite() || !p2.is_finite() {
            return Err(Error::NonFinite(format!(
                "{} parameters ({p1}, {p2})",
                family.as_str()
            )));
        }
        Ok(match family {
            Family::Tn => PredictiveDistribution::Tn(TruncNormal::new(p1, p2)),
            Family::Ln => PredictiveDistribution::Ln(LogNormalMV::from_moments(p1, p2)?),
            Family::Cl0 => PredictiveDistribution::Cl0(CensoredLogistic::new(p1, p2)),
            Family::Cn0 => PredictiveDistribution::Cn0(CensoredNormal::new(p1, p2)),
        })
    }

    pub fn family(&self) -> Family {
        match self {
            PredictiveDistribution::Tn(_) => Family::Tn,
            PredictiveDistribution::Ln(_) => Family::Ln,
            PredictiveDistribution::Cl0(_) => Family::Cl0,
            PredictiveDistribution::Cn0(_) => Family::Cn0,
        }
    }

    /// The natural parameters accepted by [`Self::from_params`].
    pub fn params(&self) -> [f64; 2] {
        match self {
            PredictiveDistribution::Tn(d) => [d.location, d.scale],
            PredictiveDistribution::Ln(d) => [d.mean, d.variance],
            PredictiveDistribution::Cl0(d) => [d.location, d.scale],
            PredictiveDistribution::Cn0(d) => [d.location, d.scale],
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            PredictiveDistribution::Tn(d) => d.cdf(x),
            PredictiveDistribution::Ln(d) => d.cdf(x),
            PredictiveDistribution::Cl0(d) => d.cdf(x),
            PredictiveDistribution::Cn0(d) => d.cdf(x),
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        match self {
            PredictiveDistribution::Tn(d) => d.quantile(p),
            PredictiveDistribution::Ln(d) => d.quantile(p),
            PredictiveDistribution::Cl0(d) => d.quantile(p),
            PredictiveDistribution::Cn0(d) => d.quantile(p),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            PredictiveDistribution::Tn(d) => d.mean(),
            PredictiveDistribution::Ln(d) => d.mean(),
            PredictiveDistribution::Cl0(d) => d.mean(),
            PredictiveDistribution::Cn0(d) => d.mean(),
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5).unwrap_or(0.0)
    }

    /// Point mass at zero (zero for the continuous families).
    pub fn mass_at_zero(&self) -> f64 {
        match self {
            PredictiveDistribution::Cl0(d) => d.mass_at_zero(),
            PredictiveDistribution::Cn0(d) => d.mass_at_zero(),
            _ => 0.0,
        }
    }

    pub fn crps(&self, x: f64) -> f64 {
        match self {
            PredictiveDistribution::Tn(d) => d.crps(x),
            PredictiveDistribution::Ln(d) => d.crps(x),
            PredictiveDistribution::Cl0(d) => d.crps(x),
            PredictiveDistribution::Cn0(d) => d.crps(x),
        }
    }

    /// Gradient of the CRPS over the natural parameters (see [`Self::params`]).
    pub fn crps_grad(&self, x: f64) -> [f64; 2] {
        self.crps_with_grad(x).1
    }

    pub fn crps_with_grad(&self, x: f64) -> (f64, [f64; 2]) {
        match self {
            PredictiveDistribution::Tn(d) => d.crps_with_grad(x),
            PredictiveDistribution::Ln(d) => d.crps_with_grad(x),
            PredictiveDistribution::Cl0(d) => d.crps_with_grad(x),
            PredictiveDistribution::Cn0(d) => d.crps_with_grad(x),
        }
    }

    /// Draws one value by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let u = u.clamp(1e-300, 1.0 - 1e-16);
        if u <= self.mass_at_zero() {
            return 0.0;
        }
        match self {
            PredictiveDistribution::Cn0(d) => (d.location + d.sigma() * norm_quantile(u)).max(0.0),
            PredictiveDistribution::Cl0(d) => {
                (d.location + d.sigma() * (u / (1.0 - u)).ln()).max(0.0)
            }
            PredictiveDistribution::Ln(d) => (d.mu_log + d.sigma() * norm_quantile(u)).exp(),
            PredictiveDistribution::Tn(d) => d.quantile(u).unwrap_or(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_grad(f: impl Fn(f64, f64) -> f64, p1: f64, p2: f64) -> [f64; 2] {
        let h = 1e-5;
        [
            (f(p1 + h, p2) - f(p1 - h, p2)) / (2.0 * h),
            (f(p1, p2 + h) - f(p1, p2 - h)) / (2.0 * h),
        ]
    }

    #[test]
    fn cdf_examples() {
        assert!((CensoredLogistic::new(0.0, 1.0).cdf(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(TruncNormal::new(0.0, 1.0).cdf(0.0), 0.0);
        assert!((CensoredNormal::new(1.0, 1.0).cdf(0.0) - 0.158_655_253_931_457).abs() < 1e-12);
        assert_eq!(CensoredNormal::new(1.0, 1.0).cdf(-1e-12), 0.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(CensoredLogistic::new(0.0, 1.0).quantile(0.25).unwrap(), 0.0);
        assert!((TruncNormal::new(5.0, 1.0).quantile(0.5).unwrap() - 5.0).abs() < 1e-4);
        assert!(TruncNormal::new(5.0, 1.0).quantile(1.0).is_err());
        assert!(CensoredNormal::new(5.0, 1.0).quantile(0.0).is_err());
    }

    #[test]
    fn quantile_cdf_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let mu: f64 = rng.random_range(-5.0..10.0);
            let sd: f64 = rng.random_range(0.05..4.0);
            let p: f64 = rng.random_range(0.001..0.999);
            let dists = [
                PredictiveDistribution::Tn(TruncNormal::new(mu, sd)),
                PredictiveDistribution::Cl0(CensoredLogistic::new(mu, sd)),
                PredictiveDistribution::Cn0(CensoredNormal::new(mu, sd)),
                PredictiveDistribution::Ln(LogNormalMV::from_log_params(mu / 5.0, sd / 4.0)),
            ];
            for d in dists {
                let q = d.quantile(p).unwrap();
                assert!(d.cdf(q) >= p, "{d:?} p={p} q={q} cdf={}", d.cdf(q));
                if q > 0.0 {
                    assert!(d.cdf(q - 1e-9) < p, "{d:?} p={p} q={q}");
                }
            }
        }
    }

    #[test]
    fn tn_deep_negative_location_stays_finite() {
        let d = TruncNormal::new(-30.0, 1.0);
        let q = d.quantile(0.5).unwrap();
        assert!(q > 0.0 && q.is_finite());
        assert!((d.cdf(q) - 0.5).abs() < 1e-9);
        assert!(d.crps(0.1).is_finite());
        // Exponential limit: rate ~ 30, median ~ ln 2 / 30.
        assert!((q - core::f64::consts::LN_2 / 30.0).abs() < 1e-3);
    }

    #[test]
    fn degenerate_limits() {
        assert!((TruncNormal::new(3.0, 1e-8).crps(5.0) - 2.0).abs() < 1e-6);
        assert!(CensoredNormal::new(-10.0, 0.01).crps(0.0).abs() < 1e-6);
        assert!((TruncNormal::new(-3.0, 1e-8).crps(2.0) - 2.0).abs() < 1e-6);
        assert!((CensoredLogistic::new(-3.0, 1e-8).crps(2.0) - 2.0).abs() < 1e-6);
        let ln = LogNormalMV::from_log_params(1.0, 1e-8);
        assert!((ln.crps(1.0) - (core::f64::consts::E - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn tn_center_value() {
        // Near-untruncated normal at its centre: σ(2φ(0) - 1/√π) = 0.23370.
        assert!((TruncNormal::new(5.0, 1.0).crps(5.0) - 0.233_695).abs() < 1e-3);
    }

    #[test]
    fn ln_from_moments_examples() {
        let e = core::f64::consts::E;
        let d = ln_from_moments(e.sqrt(), (e - 1.0) * e).unwrap();
        assert!(d.mu_log.abs() < 1e-12);
        assert!((d.sigma_log - 1.0).abs() < 1e-12);
        let tiny = ln_from_moments(1.0, 1e-14).unwrap();
        assert!(tiny.sigma_log < 1e-6 && tiny.mu_log.abs() < 1e-12);
        assert!(ln_from_moments(0.0, 1.0).is_err());
        assert!(ln_from_moments(1.0, -1.0).is_err());
        for &(m, v) in &[(0.3, 0.01), (5.0, 2.0), (12.0, 40.0)] {
            let d = ln_from_moments(m, v).unwrap();
            let back = LogNormalMV::from_log_params(d.mu_log, d.sigma_log);
            assert!((back.mean - m).abs() < 1e-10 * m);
            assert!((back.variance - v).abs() < 1e-10 * v.max(1.0));
        }
    }

    #[test]
    fn tn_gradient_vanishes_at_symmetric_centre() {
        let g = TruncNormal::new(5.0, 1.0).crps_grad(5.0);
        let fd = fd_grad(|m, s| TruncNormal::new(m, s).crps(5.0), 5.0, 1.0);
        assert!(g[0].abs() < 1e-3 && fd[0].abs() < 1e-3);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..400 {
            let mu: f64 = rng.random_range(-3.0..8.0);
            let sd: f64 = rng.random_range(0.3..3.0);
            let x: f64 = if rng.random_bool(0.1) {
                0.0
            } else {
                rng.random_range(0.0..12.0)
            };
            let checks: Vec<([f64; 2], [f64; 2])> = alloc::vec![
                (
                    TruncNormal::new(mu, sd).crps_grad(x),
                    fd_grad(|a, b| TruncNormal::new(a, b).crps(x), mu, sd)
                ),
                (
                    CensoredLogistic::new(mu, sd).crps_grad(x),
                    fd_grad(|a, b| CensoredLogistic::new(a, b).crps(x), mu, sd)
                ),
                (
                    CensoredNormal::new(mu, sd).crps_grad(x),
                    fd_grad(|a, b| CensoredNormal::new(a, b).crps(x), mu, sd)
                ),
            ];
            let m = mu.abs() + 0.5;
            let v = sd * sd;
            let ln = LogNormalMV::from_moments(m, v).unwrap();
            let ln_fd = fd_grad(
                |a, b| LogNormalMV::from_moments(a, b).unwrap().crps(x),
                m,
                v,
            );
            for (g, f) in checks
                .into_iter()
                .chain(core::iter::once((ln.crps_grad(x), ln_fd)))
            {
                for k in 0..2 {
                    let err = (g[k] - f[k]).abs() / f[k].abs().max(1e-2);
                    worst = worst.max(err);
                    assert!(
                        err < 1e-5,
                        "analytic {g:?} vs fd {f:?} (mu={mu}, sd={sd}, x={x})"
                    );
                }
            }
        }
        assert!(worst < 1e-5);
    }

    #[test]
    fn means() {
        assert!((TruncNormal::new(5.0, 1.0).mean() - 5.0).abs() < 1e-5);
        let d = PredictiveDistribution::from_params(Family::Ln, 3.0, 2.0).unwrap();
        assert_eq!(d.mean(), 3.0);
        // Censored normal mean equals E[max(0, Y)].
        let c = CensoredNormal::new(0.0, 1.0);
        assert!((c.mean() - crate::special::FRAC_1_SQRT_2PI).abs() < 1e-15);
    }
}
