use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ForecastCase};
use crate::{Error, Result, MINUTES_PER_DAY};

use super::config::Pooling;

/// Stations a model is trained for.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Station(String),
    Regional,
}

impl Scope {
    pub fn name(&self) -> &str {
        match self {
            Scope::Station(id) => id,
            Scope::Regional => "regional",
        }
    }

    pub fn contains(&self, station: &str) -> bool {
        match self {
            Scope::Station(id) => id == station,
            Scope::Regional => true,
        }
    }
}

fn check_window(dataset: &Dataset, valid_day: i64, train_days: u32) -> Result<(i64, i64)> {
    if train_days == 0 {
        return Err(Error::Config(
            "training window must span at least one day".into(),
        ));
    }
    let first = dataset
        .cases
        .iter()
        .map(|c| c.forecast.init_day())
        .min()
        .ok_or_else(|| Error::InsufficientData("empty archive".into()))?;
    if valid_day <= first {
        return Err(Error::InsufficientData(format!(
            "no forecast runs before day {valid_day} (archive starts on day {first})"
        )));
    }
    Ok((valid_day - train_days as i64, valid_day - 1))
}

/// All cases of the scope, complete or not, whose run started in the
/// `train_days` days before `valid_day`; ordered by station, init time and
/// lead time.
pub fn window_cases<'a>(
    dataset: &'a Dataset,
    valid_day: i64,
    train_days: u32,
    scope: &Scope,
) -> Result<Vec<&'a ForecastCase>> {
    let (lo, hi) = check_window(dataset, valid_day, train_days)?;
    let mut out: Vec<&ForecastCase> = dataset
        .cases
        .iter()
        .filter(|c| {
            let d = c.forecast.init_day();
            lo <= d && d <= hi && scope.contains(&c.forecast.station)
        })
        .collect();
    out.sort_by(|a, b| a.forecast.key().cmp(&b.forecast.key()));
    assert!(
        out.iter().all(|c| c.forecast.init_day() < valid_day),
        "training window leaks the validation day"
    );
    Ok(out)
}

/// Complete training cases for `valid_day`: runs initialized on the
/// preceding `train_days` days, restricted to the scope.
pub fn rolling_window<'a>(
    dataset: &'a Dataset,
    valid_day: i64,
    train_days: u32,
    scope: &Scope,
) -> Result<Vec<&'a ForecastCase>> {
    let cases: Vec<&ForecastCase> = window_cases(dataset, valid_day, train_days, scope)?
        .into_iter()
        .filter(|c| c.is_complete())
        .collect();
    if cases.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no complete cases for {} in the {train_days} days before day {valid_day}",
            scope.name()
        )));
    }
    Ok(cases)
}

/// Lead-time pool key: the lead itself, or the start of its half-day.
pub fn pool_of(lead_minutes: u32, pooling: Pooling) -> u32 {
    match pooling {
        Pooling::PerLeadTime => lead_minutes,
        Pooling::HalfDayPooled => {
            if (lead_minutes as i64) < MINUTES_PER_DAY {
                0
            } else {
                MINUTES_PER_DAY as u32
            }
        }
    }
}

/// File stem of a pool, such as `h00-24` or `lead0135`.
pub fn pool_name(pool: u32, pooling: Pooling) -> String {
    match pooling {
        Pooling::PerLeadTime => format!("lead{pool:04}"),
        Pooling::HalfDayPooled => {
            if pool == 0 {
                "h00-24".into()
            } else {
                "h24-48".into()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceConfig {
    /// Slice length `ℓ_tw`.
    pub window_len: usize,
    /// Shift between consecutive training slices `w`.
    pub shift: usize,
}

impl SliceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.shift == 0 || self.shift > self.window_len {
            return Err(Error::Config(format!(
                "slices need 0 < shift <= window length, got shift {} and length {}",
                self.shift, self.window_len
            )));
        }
        Ok(())
    }

    /// Start offsets of the overlapping training slices of a series of
    /// length `n`.
    pub fn overlapping_starts(&self, n: usize) -> Result<Vec<usize>> {
        self.validate()?;
        if n < self.window_len {
            return Err(Error::InsufficientData(format!(
                "series of length {n} is shorter than the slice length {}",
                self.window_len
            )));
        }
        Ok((0..=(n - self.window_len) / self.shift)
            .map(|i| i * self.shift)
            .collect())
    }
}

/// Start offsets of the disjoint prediction slices. A remainder is covered
/// by one extra slice aligned to the end of the series.
pub fn disjoint_starts(n: usize, window_len: usize) -> Vec<usize> {
    if window_len == 0 || n < window_len {
        return Vec::new();
    }
    let mut starts: Vec<usize> = (0..n / window_len).map(|i| i * window_len).collect();
    if n % window_len != 0 {
        starts.push(n - window_len);
    }
    starts
}

pub fn make_overlapping_slices<T: Clone>(series: &[T], cfg: &SliceConfig) -> Result<Vec<Vec<T>>> {
    Ok(cfg
        .overlapping_starts(series.len())?
        .into_iter()
        .map(|s| series[s..s + cfg.window_len].to_vec())
        .collect())
}

pub fn make_disjoint_slices<T: Clone>(series: &[T], window_len: usize) -> Vec<Vec<T>> {
    disjoint_starts(series.len(), window_len)
        .into_iter()
        .map(|s| series[s..s + window_len].to_vec())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let cfg = SliceConfig {
            window_len: 12,
            shift: 4,
        };
        let series: Vec<usize> = (1..=16).collect();
        let slices = make_overlapping_slices(&series, &cfg).unwrap();
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0], (1..=12).collect::<Vec<_>>());
        assert_eq!(slices[1], (5..=16).collect::<Vec<_>>());
        let cfg16 = SliceConfig {
            window_len: 16,
            shift: 4,
        };
        assert_eq!(cfg16.overlapping_starts(48).unwrap().len(), 9);
        assert_eq!(cfg16.overlapping_starts(16).unwrap(), vec![0]);
        assert!(cfg16.overlapping_starts(15).is_err());
    }

    #[test]
    fn disjoint_examples() {
        assert_eq!(disjoint_starts(192, 16).len(), 12);
        assert_eq!(disjoint_starts(96, 12).len(), 8);
        let series: Vec<usize> = (1..=10).collect();
        let s = make_disjoint_slices(&series, 4);
        assert_eq!(
            s,
            vec![vec![1, 2, 3, 4], vec![5, 6, 7, 8], vec![7, 8, 9, 10]]
        );
    }

    #[test]
    fn pools() {
        assert_eq!(pool_of(1425, Pooling::HalfDayPooled), 0);
        assert_eq!(pool_of(1440, Pooling::HalfDayPooled), 1440);
        assert_eq!(pool_of(1800, Pooling::HalfDayPooled), 1440);
        assert_eq!(pool_name(1440, Pooling::HalfDayPooled), "h24-48");
        assert_eq!(pool_name(135, Pooling::PerLeadTime), "lead0135");
    }

    proptest! {
        #[test]
        fn slice_count_formula(n in 1usize..400, len in 1usize..40, shift_frac in 0.0f64..1.0) {
            let shift = 1 + ((len - 1) as f64 * shift_frac) as usize;
            let cfg = SliceConfig { window_len: len, shift };
            match cfg.overlapping_starts(n) {
                Ok(starts) => {
                    prop_assert!(n >= len);
                    prop_assert_eq!(starts.len(), (n - len) / shift + 1);
                    prop_assert!(starts.iter().all(|s| s + len <= n));
                }
                Err(_) => prop_assert!(n < len),
            }
            let d = disjoint_starts(n, len);
            if n >= len {
                prop_assert_eq!(d.len(), n.div_ceil(len));
                prop_assert_eq!(*d.last().unwrap() + len, n);
            }
        }
    }
}
