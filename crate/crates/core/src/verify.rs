//! Forecast verification: ensemble and parametric CRPS, skill scores, PIT
//! and rank histograms, central-interval coverage, point scores and a
//! Kolmogorov–Smirnov uniformity test.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::{CaseKey, ForecastCase};
use crate::dist::PredictiveDistribution;
use crate::{Error, Result, N_MEMBERS};

/// Nominal coverage of the 11-member ensemble range, (K − 1)/(K + 1).
pub const DEFAULT_NOMINAL: f64 = (N_MEMBERS as f64 - 1.0) / (N_MEMBERS as f64 + 1.0);
/// Bins of the rank and PIT histograms.
pub const N_BINS: usize = N_MEMBERS + 1;
/// Method label of the unprocessed ensemble.
pub const RAW: &str = "raw";

/// CRPS of the empirical distribution of `members`, `E|X − x| − ½E|X − X′|`.
pub fn crps_ensemble(members: &[f64], x: f64) -> f64 {
    let k = members.len() as f64;
    let mut sorted = members.to_vec();
    sorted.sort_by(f64::total_cmp);
    let abs_err = sorted.iter().map(|f| (f - x).abs()).sum::<f64>() / k;
    // Σ_k Σ_l |f_k − f_l| = 2 Σ_i (2i − K + 1) f_(i), 0-based.
    let pair = sorted
        .iter()
        .enumerate()
        .map(|(i, f)| (2.0 * i as f64 - k + 1.0) * f)
        .sum::<f64>()
        * 2.0;
    abs_err - pair / (2.0 * k * k)
}

/// PIT value; at a censoring point the value is spread over `[0, F(0)]`
/// by the uniform variate `u`.
pub fn pit(dist: &PredictiveDistribution, x: f64, u: f64) -> f64 {
    let mass = dist.mass_at_zero();
    if x <= 0.0 && mass > 0.0 {
        u * mass
    } else {
        dist.cdf(x)
    }
}

/// Rank of `x` among `members` (1 = below all). Ties are resolved by the
/// uniform variate `u` among the admissible ranks.
pub fn verification_rank(members: &[f64], x: f64, u: f64) -> usize {
    let below = members.iter().filter(|&&f| f < x).count();
    let ties = members.iter().filter(|&&f| f == x).count();
    let offset = ((u * (ties + 1) as f64) as usize).min(ties);
    1 + below + offset
}

pub fn crpss(mean_crps_f: f64, mean_crps_ref: f64) -> Result<f64> {
    if !(mean_crps_ref > 0.0) {
        return Err(Error::Domain(format!(
            "reference CRPS must be positive, got {mean_crps_ref}"
        )));
    }
    Ok(1.0 - mean_crps_f / mean_crps_ref)
}

/// Quantiles at `α/2` and `1 − α/2` with `α = 1 − nominal`.
pub fn central_interval(dist: &PredictiveDistribution, nominal: f64) -> Result<(f64, f64)> {
    if !(nominal > 0.0 && nominal < 1.0) {
        return Err(Error::Domain(format!(
            "nominal coverage must lie in (0, 1), got {nominal}"
        )));
    }
    let alpha = 1.0 - nominal;
    Ok((
        dist.quantile(alpha / 2.0)?,
        dist.quantile(1.0 - alpha / 2.0)?,
    ))
}

/// Percentage of observations inside the closed intervals, and the mean
/// interval width.
pub fn coverage_and_width(intervals: &[(f64, f64)], obs: &[f64]) -> Result<(f64, f64)> {
    check_len(intervals.len(), obs.len())?;
    let n = obs.len() as f64;
    let inside = intervals
        .iter()
        .zip(obs)
        .filter(|((lo, hi), x)| lo <= x && *x <= hi)
        .count();
    let width = intervals.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / n;
    Ok((100.0 * inside as f64 / n, width))
}

/// MAE of the medians and RMSE of the means.
pub fn point_scores(medians: &[f64], means: &[f64], obs: &[f64]) -> Result<(f64, f64)> {
    check_len(medians.len(), obs.len())?;
    check_len(means.len(), obs.len())?;
    let n = obs.len() as f64;
    let mae = medians
        .iter()
        .zip(obs)
        .map(|(m, x)| (m - x).abs())
        .sum::<f64>()
        / n;
    let mse = means
        .iter()
        .zip(obs)
        .map(|(m, x)| (m - x).powi(2))
        .sum::<f64>()
        / n;
    Ok((mae, mse.sqrt()))
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Validation(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::InsufficientData("no cases to score".into()));
    }
    Ok(())
}

/// Median of the ensemble (the middle order statistic for odd sizes).
pub fn ensemble_median(members: &[f64]) -> f64 {
    let mut s = members.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityTest {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against the standard uniform law.
pub fn ks_uniformity(sample: &[f64]) -> Result<UniformityTest> {
    let n = sample.len();
    if n < 20 {
        return Err(Error::InsufficientData(format!(
            "uniformity test needs n >= 20, got {n}"
        )));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let u = u.clamp(0.0, 1.0);
            ((i + 1) as f64 / nf - u).max(u - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    Ok(UniformityTest {
        test: "kolmogorov-smirnov".into(),
        statistic: d,
        p_value: ks_p_value(n, d),
        n,
    })
}

/// Asymptotic KS p-value with the small-sample correction of the scaling
/// constant.
pub fn ks_p_value(n: usize, d: f64) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    kolmogorov_q(lambda)
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let pi = core::f64::consts::PI;
    if lambda < 1.18 {
        let c = -pi * pi / (8.0 * lambda * lambda);
        let sum: f64 = (1..=40)
            .map(|k| ((2 * k - 1) as f64).powi(2))
            .map(|m| (c * m).exp())
            .sum();
        (1.0 - (2.0 * pi).sqrt() / lambda * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Counts of values in `bins` equal-width bins over `[0, 1]`; 1.0 falls in
/// the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &v in values {
        let b = ((v * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_str(mut h: u64, s: &str) -> u64 {
    for b in s.bytes() {
        h = splitmix(h ^ b as u64);
    }
    splitmix(h ^ s.len() as u64)
}

/// Uniform variate in `[0, 1)` determined by the case, a stream label and
/// the seed, so that results do not depend on case order.
pub fn case_uniform(key: &CaseKey, stream: &str, seed: u64) -> f64 {
    let mut h = splitmix(seed);
    h = hash_str(h, &key.station);
    h = splitmix(h ^ key.init_time as u64);
    h = splitmix(h ^ key.lead_minutes as u64);
    h = hash_str(h, stream);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub nominal: f64,
    /// Keep only cases whose observation is at least this value.
    pub min_obs: Option<f64>,
    /// Method the skill score is computed against.
    pub reference: String,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            nominal: DEFAULT_NOMINAL,
            min_obs: None,
            reference: RAW.to_string(),
            seed: 0,
        }
    }
}

/// Scores of one method over a group of cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    /// `None` for the all-leads summary.
    pub lead_minutes: Option<u32>,
    pub method: String,
    pub n_cases: usize,
    pub mean_crps: f64,
    pub mean_crps_ref: f64,
    pub crpss: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub mae_median: f64,
    pub rmse_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodDiagnostics {
    pub method: String,
    /// PIT values of the method (randomized ranks for the raw ensemble), in
    /// case-key order.
    pub pit: Vec<f64>,
    pub pit_histogram: Vec<usize>,
    pub uniformity: UniformityTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// One row per (lead time, method), leads ascending, raw first.
    pub rows: Vec<ScoreRow>,
    /// One all-leads row per method.
    pub overall: Vec<ScoreRow>,
    /// Verification-rank counts of the raw ensemble.
    pub rank_counts: Vec<usize>,
    pub diagnostics: Vec<MethodDiagnostics>,
    pub n_cases: usize,
}

struct Scored {
    lead: u32,
    crps: f64,
    covered: bool,
    width: f64,
    abs_err: f64,
    sq_err: f64,
}

fn aggregate(
    lead: Option<u32>,
    method: &str,
    items: &[&Scored],
    ref_crps: f64,
) -> Result<ScoreRow> {
    let n = items.len() as f64;
    let mean = |f: &dyn Fn(&Scored) -> f64| items.iter().map(|s| f(s)).sum::<f64>() / n;
    let mean_crps = mean(&|s| s.crps);
    Ok(ScoreRow {
        lead_minutes: lead,
        method: method.to_string(),
        n_cases: items.len(),
        mean_crps,
        mean_crps_ref: ref_crps,
        crpss: if ref_crps > 0.0 {
            crpss(mean_crps, ref_crps)?
        } else {
            0.0
        },
        coverage: 100.0 * items.iter().filter(|s| s.covered).count() as f64 / n,
        mean_width: mean(&|s| s.width),
        mae_median: mean(&|s| s.abs_err),
        rmse_mean: mean(&|s| s.sq_err).sqrt(),
    })
}

/// Scores the raw ensemble and every named prediction set on the cases
/// that have an observation, pass the `min_obs` filter and are predicted by
/// every method.
pub fn verify(
    cases: &[ForecastCase],
    predictions: &[(String, BTreeMap<CaseKey, PredictiveDistribution>)],
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    if !(opts.nominal > 0.0 && opts.nominal < 1.0) {
        return Err(Error::Config(format!(
            "nominal coverage {} outside (0, 1)",
            opts.nominal
        )));
    }
    let mut names: Vec<&str> = vec![RAW];
    for (name, _) in predictions {
        if names.contains(&name.as_str()) {
            return Err(Error::Config(format!("method name {name} used twice")));
        }
        names.push(name);
    }
    if !names.contains(&opts.reference.as_str()) {
        return Err(Error::Config(format!(
            "reference method {} is not among the scored methods",
            opts.reference
        )));
    }
    let by_key: BTreeMap<CaseKey, &ForecastCase> =
        cases.iter().map(|c| (c.forecast.key(), c)).collect();
    for (name, preds) in predictions {
        if let Some(k) = preds.keys().find(|k| !by_key.contains_key(*k)) {
            return Err(Error::Validation(format!(
                "{name} predicts {} at {} + {} min, which has no forecast case",
                k.station, k.init_time, k.lead_minutes
            )));
        }
    }
    let selected: Vec<(&CaseKey, &ForecastCase, f64)> = by_key
        .iter()
        .filter_map(|(k, c)| c.obs().map(|x| (k, *c, x)))
        .filter(|(_, _, x)| opts.min_obs.is_none_or(|m| *x >= m))
        .filter(|(k, _, _)| predictions.iter().all(|(_, p)| p.contains_key(*k)))
        .collect();
    if selected.is_empty() {
        return Err(Error::InsufficientData(
            "no case has an observation and a prediction from every method".into(),
        ));
    }

    let mut scored: Vec<Vec<Scored>> = Vec::with_capacity(names.len());
    let mut pits: Vec<Vec<f64>> = Vec::with_capacity(names.len());
    let mut rank_counts = vec![0usize; N_BINS];

    let mut raw = Vec::with_capacity(selected.len());
    let mut raw_pit = Vec::with_capacity(selected.len());
    for (k, c, x) in &selected {
        let m = c.forecast.members();
        let u = case_uniform(k, "rank", opts.seed);
        let r = verification_rank(&m, *x, u);
        rank_counts[r - 1] += 1;
        raw_pit.push((r as f64 - 1.0 + case_uniform(k, "rank-pit", opts.seed)) / N_BINS as f64);
        let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        raw.push(Scored {
            lead: k.lead_minutes,
            crps: crps_ensemble(&m, *x),
            covered: lo <= *x && *x <= hi,
            width: hi - lo,
            abs_err: (ensemble_median(&m) - x).abs(),
            sq_err: (mean - x).powi(2),
        });
    }
    scored.push(raw);
    pits.push(raw_pit);

    for (name, preds) in predictions {
        let mut rows = Vec::with_capacity(selected.len());
        let mut pit_values = Vec::with_capacity(selected.len());
        for (k, _, x) in &selected {
            let d = &preds[*k];
            let (lo, hi) = central_interval(d, opts.nominal)?;
            let crps = d.crps(*x);
            if !crps.is_finite() {
                return Err(Error::NonFinite(format!(
                    "{name} CRPS at {}/{}/{}",
                    k.station, k.init_time, k.lead_minutes
                )));
            }
            pit_values.push(pit(d, *x, case_uniform(k, name, opts.seed)));
            rows.push(Scored {
                lead: k.lead_minutes,
                crps,
                covered: lo <= *x && *x <= hi,
                width: hi - lo,
                abs_err: (d.median() - x).abs(),
                sq_err: (d.mean() - x).powi(2),
            });
        }
        scored.push(rows);
        pits.push(pit_values);
    }

    let ref_idx = names
        .iter()
        .position(|n| *n == opts.reference)
        .expect("checked above");
    let mut leads: Vec<u32> = selected.iter().map(|(k, _, _)| k.lead_minutes).collect();
    leads.sort_unstable();
    leads.dedup();

    let mut rows = Vec::with_capacity(leads.len() * names.len());
    for &lead in &leads {
        let group =
            |i: usize| -> Vec<&Scored> { scored[i].iter().filter(|s| s.lead == lead).collect() };
        let ref_items = group(ref_idx);
        let ref_crps = ref_items.iter().map(|s| s.crps).sum::<f64>() / ref_items.len() as f64;
        for (i, name) in names.iter().enumerate() {
            rows.push(aggregate(Some(lead), name, &group(i), ref_crps)?);
        }
    }
    let ref_all: Vec<&Scored> = scored[ref_idx].iter().collect();
    let ref_crps = ref_all.iter().map(|s| s.crps).sum::<f64>() / ref_all.len() as f64;
    let overall = names
        .iter()
        .enumerate()
        .map(|(i, name)| aggregate(None, name, &scored[i].iter().collect::<Vec<_>>(), ref_crps))
        .collect::<Result<Vec<_>>>()?;

    let diagnostics = names
        .iter()
        .zip(pits)
        .map(|(name, pit)| {
            let mut uniformity = ks_uniformity(&pit).unwrap_or(UniformityTest {
                test: "kolmogorov-smirnov".into(),
                statistic: f64::NAN,
                p_value: f64::NAN,
                n: pit.len(),
            });
            if *name == RAW {
                uniformity.test = "kolmogorov-smirnov (randomized rank)".into();
            }
            MethodDiagnostics {
                method: name.to_string(),
                pit_histogram: histogram(&pit, N_BINS),
                pit,
                uniformity,
            }
        })
        .collect();

    Ok(VerificationReport {
        rows,
        overall,
        rank_counts,
        diagnostics,
        n_cases: selected.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EnsembleForecast, Observation, Variable};
    use crate::dist::{CensoredNormal, LogNormalMV, TruncNormal};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn crps_ensemble_examples() {
        assert_eq!(crps_ensemble(&[4.0; 11], 4.0), 0.0);
        assert!((crps_ensemble(&[4.0; 11], 1.5) - 2.5).abs() < 1e-12);
        let m: Vec<f64> = (1..=11).map(|i| i as f64).collect();
        assert!((crps_ensemble(&m, 6.0) - 10.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn crps_ensemble_matches_pairwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let m: Vec<f64> = (0..11).map(|_| rng.random_range(0.0..10.0)).collect();
            let x = rng.random_range(-1.0..11.0);
            let mut pair = 0.0;
            for a in &m {
                for b in &m {
                    pair += (a - b).abs();
                }
            }
            let direct = m.iter().map(|f| (f - x).abs()).sum::<f64>() / 11.0 - pair / (2.0 * 121.0);
            assert!((crps_ensemble(&m, x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn pit_examples() {
        let cn = PredictiveDistribution::Cn0(CensoredNormal::new(0.0, 1.0));
        assert_eq!(pit(&cn, 0.0, 0.0), 0.0);
        assert!((pit(&cn, 0.0, 0.999_999) - 0.5).abs() < 1e-6);
        assert!((pit(&cn, 0.0, 0.5) - 0.25).abs() < 1e-12);
        let tn = PredictiveDistribution::Tn(TruncNormal::new(2.0, 1.0));
        assert!(pit(&tn, 100.0, 0.3) > 1.0 - 1e-12);
    }

    #[test]
    fn rank_examples() {
        let m: Vec<f64> = (1..=11).map(|i| i as f64).collect();
        assert_eq!(verification_rank(&m, 0.0, 0.5), 1);
        assert_eq!(verification_rank(&m, 20.0, 0.5), 12);
        let zeros = [0.0; 11];
        assert_eq!(verification_rank(&zeros, 0.0, 0.0), 1);
        assert_eq!(verification_rank(&zeros, 0.0, 0.999_999), 12);
    }

    #[test]
    fn skill_scores() {
        assert_eq!(crpss(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(crpss(0.5, 1.0).unwrap(), 0.5);
        assert_eq!(crpss(2.0, 1.0).unwrap(), -1.0);
        assert!(crpss(1.0, 0.0).is_err());
    }

    #[test]
    fn interval_examples() {
        assert!((DEFAULT_NOMINAL - 0.833_333_333_333_333_4).abs() < 1e-15);
        let tn = PredictiveDistribution::Tn(TruncNormal::new(10.0, 1.0));
        let (lo, hi) = central_interval(&tn, DEFAULT_NOMINAL).unwrap();
        assert!(
            (lo - (10.0 - 1.382_994_127)).abs() < 1e-3
                && (hi - (10.0 + 1.382_994_127)).abs() < 1e-3
        );
        let cn = PredictiveDistribution::Cn0(CensoredNormal::new(-1.0, 1.0));
        assert_eq!(central_interval(&cn, DEFAULT_NOMINAL).unwrap().0, 0.0);
        assert_eq!(
            coverage_and_width(&[(1.0, 1.0), (2.0, 2.0)], &[1.0, 2.0]).unwrap(),
            (100.0, 0.0)
        );
        assert!(coverage_and_width(&[(1.0, 1.0)], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn point_score_examples() {
        assert_eq!(
            point_scores(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]).unwrap(),
            (0.0, 0.0)
        );
        let tn = PredictiveDistribution::Tn(TruncNormal::new(5.0, 1.0));
        // Truncation lifts the mean by φ(5)/Φ(5) ≈ 1.49e-6.
        let lift = crate::special::norm_pdf(5.0) / crate::special::norm_cdf(5.0);
        assert!((tn.mean() - (5.0 + lift)).abs() < 1e-12);
        assert!((tn.mean() - 5.0).abs() < 2e-6);
        let ln = LogNormalMV::from_moments(3.0, 2.0).unwrap();
        assert!((ln.mean() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ks_examples() {
        let grid: Vec<f64> = (1..=100).map(|i| (i as f64 - 0.5) / 100.0).collect();
        let t = ks_uniformity(&grid).unwrap();
        assert!((t.statistic - 0.005).abs() < 1e-12);
        assert!(t.p_value > 0.5);
        assert!(ks_uniformity(&[0.99; 100]).unwrap().p_value < 1e-6);
        assert!(ks_uniformity(&[0.5; 10]).is_err());
        // Both series agree where they meet.
        let a = kolmogorov_q(1.18 - 1e-12);
        let b = kolmogorov_q(1.18);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn ks_rejection_rate_is_nominal() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let reps = 1000;
        let mut rejections = 0;
        for _ in 0..reps {
            let s: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
            if ks_uniformity(&s).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / reps as f64;
        assert!((0.04..=0.06).contains(&rate), "rejection rate {rate}");
    }

    fn toy_cases(n: usize) -> Vec<ForecastCase> {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        (0..n)
            .map(|i| {
                let lead = (i % 4) as u32 * 15;
                let init = (i / 4) as i64 * 1440;
                let ex: [f64; 10] = core::array::from_fn(|_| rng.random_range(0.0..5.0));
                let f = EnsembleForecast::new(
                    "s1",
                    init,
                    lead,
                    rng.random_range(0.0..5.0),
                    ex,
                    Variable::WindSpeed,
                )
                .unwrap();
                let o = Observation::new(
                    "s1",
                    init + lead as i64,
                    Some(rng.random_range(0.0..5.0)),
                    Variable::WindSpeed,
                )
                .unwrap();
                ForecastCase::new(f, o).unwrap()
            })
            .collect()
    }

    fn toy_predictions(cases: &[ForecastCase]) -> BTreeMap<CaseKey, PredictiveDistribution> {
        cases
            .iter()
            .map(|c| {
                (
                    c.forecast.key(),
                    PredictiveDistribution::Tn(TruncNormal::new(c.forecast.control, 1.0)),
                )
            })
            .collect()
    }

    #[test]
    fn report_shape_and_reference() {
        let cases = toy_cases(200);
        let preds = vec![(String::from("emos"), toy_predictions(&cases))];
        let rep = verify(&cases, &preds, &VerifyOptions::default()).unwrap();
        assert_eq!(rep.rows.len(), 4 * 2);
        assert!(rep
            .rows
            .iter()
            .filter(|r| r.method == RAW)
            .all(|r| r.crpss == 0.0));
        assert_eq!(rep.rank_counts.iter().sum::<usize>(), rep.n_cases);
        assert!(rep.rows.iter().all(|r| (0.0..=100.0).contains(&r.coverage)));
    }

    #[test]
    fn report_is_permutation_invariant() {
        let cases = toy_cases(120);
        let preds = vec![(String::from("emos"), toy_predictions(&cases))];
        let a = verify(&cases, &preds, &VerifyOptions::default()).unwrap();
        let mut shuffled = cases.clone();
        shuffled.reverse();
        shuffled.swap(3, 77);
        let b = verify(&shuffled, &preds, &VerifyOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_prediction_keys_are_rejected() {
        let cases = toy_cases(8);
        let mut p = toy_predictions(&cases);
        p.insert(
            CaseKey {
                station: "ghost".into(),
                init_time: 0,
                lead_minutes: 0,
            },
            PredictiveDistribution::Tn(TruncNormal::new(1.0, 1.0)),
        );
        assert!(verify(&cases, &[(String::from("m"), p)], &VerifyOptions::default()).is_err());
    }

    #[test]
    fn min_obs_filter() {
        let cases = toy_cases(200);
        let opts = VerifyOptions {
            min_obs: Some(2.5),
            ..VerifyOptions::default()
        };
        let rep = verify(&cases, &[], &opts).unwrap();
        let expected = cases.iter().filter(|c| c.obs().unwrap() >= 2.5).count();
        assert_eq!(rep.n_cases, expected);
    }
}
