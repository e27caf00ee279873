//! Summary statistics of the 11-member ensemble and feature extraction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

// Unused when std is linked elsewhere in the build graph, which supplies
// inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::EnsembleForecast;
use crate::{Error, Result, N_EXCHANGEABLE, N_MEMBERS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    /// Mean of all 11 members.
    pub mean_all: f64,
    /// Mean of the 10 exchangeable members.
    pub mean_exch: f64,
    /// Sum of squared deviations over all 11 members divided by 10.
    pub variance: f64,
    /// Mean absolute difference over all ordered member pairs (divisor 11²).
    pub mean_abs_diff: f64,
    /// Proportion of members exactly equal to zero.
    pub zero_prop: f64,
    pub std_dev: f64,
}

pub fn summarize(forecast: &EnsembleForecast) -> EnsembleSummary {
    summarize_members(forecast.control, &forecast.exchangeable)
}

pub fn summarize_members(control: f64, exchangeable: &[f64; N_EXCHANGEABLE]) -> EnsembleSummary {
    let k = N_MEMBERS as f64;
    let mean_exch = exchangeable.iter().sum::<f64>() / N_EXCHANGEABLE as f64;
    let mean_all = (control + exchangeable.iter().sum::<f64>()) / k;
    let members = core::iter::once(&control).chain(exchangeable.iter());
    let ss: f64 = members.clone().map(|f| (f - mean_all).powi(2)).sum();
    let variance = ss / (k - 1.0);

    // Σ_k Σ_l |f_k - f_l| = 2 Σ_i (2i - n + 1) f_(i) over the sorted members.
    let mut sorted = [0.0; N_MEMBERS];
    for (slot, f) in sorted.iter_mut().zip(members) {
        *slot = *f;
    }
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = N_MEMBERS as f64;
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, f)| (2.0 * i as f64 - n + 1.0) * f)
        .sum::<f64>()
        * 2.0;
    let mean_abs_diff = (pair_sum / (n * n)).max(0.0);
    let zeros = sorted.iter().filter(|f| **f == 0.0).count();
    if sorted[0] == sorted[N_MEMBERS - 1] {
        let c = sorted[0];
        return EnsembleSummary {
            mean_all: c,
            mean_exch: c,
            variance: 0.0,
            mean_abs_diff: 0.0,
            zero_prop: zeros as f64 / n,
            std_dev: 0.0,
        };
    }

    EnsembleSummary {
        mean_all,
        mean_exch,
        variance,
        mean_abs_diff,
        zero_prop: zeros as f64 / n,
        std_dev: variance.sqrt(),
    }
}

/// Named input features available to the links and networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// Control member.
    Ctrl,
    /// Mean of the exchangeable members.
    EnsMean,
    /// Mean of all members.
    Mean,
    /// Ensemble standard deviation `S`.
    Std,
    /// Ensemble variance `S²`.
    Var,
    /// Mean absolute difference.
    Md,
    /// Proportion of zero members.
    P0,
    /// Forecast hour `floor(lead / 60)`, 0..=47.
    LeadSlot,
}

impl Feature {
    pub fn name(self) -> &'static str {
        match self {
            Feature::Ctrl => "f_ctrl",
            Feature::EnsMean => "f_ens_mean",
            Feature::Mean => "f_mean",
            Feature::Std => "s",
            Feature::Var => "s2",
            Feature::Md => "md",
            Feature::P0 => "p0",
            Feature::LeadSlot => "lead_slot",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let f = match name {
            "f_ctrl" | "ctrl" => Feature::Ctrl,
            "f_ens_mean" | "f_ens" => Feature::EnsMean,
            "f_mean" | "mean" => Feature::Mean,
            "s" | "std" => Feature::Std,
            "s2" | "var" => Feature::Var,
            "md" => Feature::Md,
            "p0" => Feature::P0,
            "lead_slot" => Feature::LeadSlot,
            other => return Err(Error::Config(format!("unknown feature '{other}'"))),
        };
        Ok(f)
    }

    pub fn parse_list<S: AsRef<str>>(names: &[S]) -> Result<Vec<Feature>> {
        names.iter().map(|n| Feature::parse(n.as_ref())).collect()
    }

    pub fn value(self, forecast: &EnsembleForecast, summary: &EnsembleSummary) -> f64 {
        match self {
            Feature::Ctrl => forecast.control,
            Feature::EnsMean => summary.mean_exch,
            Feature::Mean => summary.mean_all,
            Feature::Std => summary.std_dev,
            Feature::Var => summary.variance,
            Feature::Md => summary.mean_abs_diff,
            Feature::P0 => summary.zero_prop,
            Feature::LeadSlot => lead_slot(forecast.lead_minutes) as f64,
        }
    }
}

pub fn lead_slot(lead_minutes: u32) -> u32 {
    lead_minutes / 60
}

/// Feature values in `spec` order.
pub fn feature_vector(
    forecast: &EnsembleForecast,
    summary: &EnsembleSummary,
    spec: &[Feature],
) -> Vec<f64> {
    spec.iter().map(|f| f.value(forecast, summary)).collect()
}

/// Like [`feature_vector`], but takes feature names and rejects unknown ones.
pub fn feature_vector_named<S: AsRef<str>>(
    forecast: &EnsembleForecast,
    summary: &EnsembleSummary,
    names: &[S],
) -> Result<Vec<f64>> {
    let spec = Feature::parse_list(names)?;
    Ok(feature_vector(forecast, summary, &spec))
}

pub fn feature_names(spec: &[Feature]) -> Vec<String> {
    spec.iter().map(|f| String::from(f.name())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Variable;
    use proptest::prelude::*;

    fn forecast(members: [f64; 11]) -> EnsembleForecast {
        let mut ex = [0.0; 10];
        ex.copy_from_slice(&members[1..]);
        EnsembleForecast::new("s", 0, 90, members[0], ex, Variable::WindSpeed).unwrap()
    }

    #[test]
    fn identical_members() {
        let s = summarize(&forecast([4.2; 11]));
        assert!((s.mean_all - 4.2).abs() < 1e-15);
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.mean_abs_diff, 0.0);
        assert_eq!(s.zero_prop, 0.0);
    }

    #[test]
    fn one_to_eleven() {
        let m: [f64; 11] = core::array::from_fn(|i| (i + 1) as f64);
        let s = summarize(&forecast(m));
        assert!((s.mean_all - 6.0).abs() < 1e-14);
        assert!((s.variance - 11.0).abs() < 1e-13);
        // Brute-force double sum.
        let brute: f64 = m
            .iter()
            .flat_map(|a| m.iter().map(move |b| (a - b).abs()))
            .sum::<f64>()
            / 121.0;
        assert!((brute - 440.0 / 121.0).abs() < 1e-14);
        assert!((s.mean_abs_diff - 440.0 / 121.0).abs() < 1e-13);
    }

    #[test]
    fn two_zeros() {
        let mut m = [3.0; 11];
        m[0] = 0.0;
        m[7] = 0.0;
        assert!((summarize(&forecast(m)).zero_prop - 2.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn features_in_spec_order() {
        let f = forecast([4.2; 11]);
        let s = summarize(&f);
        let v = feature_vector_named(&f, &s, &["f_ctrl", "f_ens_mean", "s"]).unwrap();
        assert_eq!(v.len(), 3);
        assert!((v[0] - 4.2).abs() < 1e-15 && (v[1] - 4.2).abs() < 1e-15 && v[2] == 0.0);
        assert_eq!(lead_slot(90), 1);
        assert_eq!(Feature::LeadSlot.value(&f, &s), 1.0);
        assert!(matches!(
            feature_vector_named(&f, &s, &["f_ctrl", "humidity"]),
            Err(Error::Config(_))
        ));
    }

    fn members_strategy() -> impl Strategy<Value = [f64; 11]> {
        proptest::array::uniform11(0.0f64..50.0)
    }

    proptest! {
        #[test]
        fn permutation_invariant(m in members_strategy(), rot in 0usize..10) {
            let mut ex = [0.0; 10];
            ex.copy_from_slice(&m[1..]);
            let a = summarize_members(m[0], &ex);
            ex.rotate_left(rot);
            ex.swap(0, 9);
            let b = summarize_members(m[0], &ex);
            prop_assert!((a.mean_all - b.mean_all).abs() < 1e-12);
            prop_assert!((a.mean_exch - b.mean_exch).abs() < 1e-12);
            prop_assert!((a.variance - b.variance).abs() < 1e-10);
            prop_assert!((a.mean_abs_diff - b.mean_abs_diff).abs() < 1e-12);
            prop_assert_eq!(a.zero_prop, b.zero_prop);
        }

        #[test]
        fn shift_and_scale(m in members_strategy(), c in 0.0f64..20.0, k in 0.1f64..10.0) {
            let mut ex = [0.0; 10];
            ex.copy_from_slice(&m[1..]);
            let a = summarize_members(m[0], &ex);
            let shifted = summarize_members(m[0] + c, &ex.map(|x| x + c));
            prop_assert!((shifted.mean_all - a.mean_all - c).abs() < 1e-10);
            prop_assert!((shifted.variance - a.variance).abs() < 1e-8 * (1.0 + a.variance));
            prop_assert!((shifted.mean_abs_diff - a.mean_abs_diff).abs() < 1e-10 * (1.0 + a.mean_abs_diff));
            let scaled = summarize_members(m[0] * k, &ex.map(|x| x * k));
            prop_assert!((scaled.mean_abs_diff - k * a.mean_abs_diff).abs() < 1e-10 * (1.0 + k * a.mean_abs_diff));
            prop_assert!((scaled.variance - k * k * a.variance).abs() < 1e-9 * (1.0 + k * k * a.variance));
        }

        #[test]
        fn md_bounded_by_twice_std(m in members_strategy()) {
            let mut ex = [0.0; 10];
            ex.copy_from_slice(&m[1..]);
            let s = summarize_members(m[0], &ex);
            prop_assert!(s.mean_abs_diff <= 2.0 * s.std_dev + 1e-12);
            prop_assert_eq!(s.variance == 0.0, s.mean_abs_diff == 0.0);
        }
    }
}
