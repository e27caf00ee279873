//! Forecast/observation data model and the forecast-observation join.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, HORIZON_MINUTES, MINUTES_PER_DAY, N_EXCHANGEABLE, N_MEMBERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    #[serde(rename = "wind_speed_mps")]
    WindSpeed,
    #[serde(rename = "ghi_wm2")]
    Ghi,
}

impl Variable {
    pub fn as_str(self) -> &'static str {
        match self {
            Variable::WindSpeed => "wind_speed_mps",
            Variable::Ghi => "ghi_wm2",
        }
    }

    /// Default time step between consecutive lead times.
    pub fn default_cadence_minutes(self) -> u32 {
        match self {
            Variable::WindSpeed => 15,
            Variable::Ghi => 30,
        }
    }

    /// Forecast cases per 48 h run at the default cadence (192 or 96).
    pub fn default_cases_per_run(self) -> usize {
        (HORIZON_MINUTES / self.default_cadence_minutes()) as usize
    }
}

impl core::str::FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wind" | "wind_speed" | "wind_speed_mps" => Ok(Variable::WindSpeed),
            "ghi" | "ghi_wm2" => Ok(Variable::Ghi),
            other => Err(Error::Config(format!("unknown variable '{other}'"))),
        }
    }
}

/// Epoch minutes (UTC).
pub type Minutes = i64;

/// Day number since 1970-01-01 of an epoch-minute timestamp.
pub fn day_of(t: Minutes) -> i64 {
    t.div_euclid(MINUTES_PER_DAY)
}

/// One 11-member run for one station and lead time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleForecast {
    pub station: String,
    pub init_time: Minutes,
    pub lead_minutes: u32,
    pub control: f64,
    pub exchangeable: [f64; N_EXCHANGEABLE],
    pub variable: Variable,
}

impl EnsembleForecast {
    pub fn new(
        station: impl Into<String>,
        init_time: Minutes,
        lead_minutes: u32,
        control: f64,
        exchangeable: [f64; N_EXCHANGEABLE],
        variable: Variable,
    ) -> Result<Self> {
        let f = EnsembleForecast {
            station: station.into(),
            init_time,
            lead_minutes,
            control,
            exchangeable,
            variable,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in self.members().iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "member {k} of {} @ {}+{} is not finite",
                    self.station, self.init_time, self.lead_minutes
                )));
            }
            if *v < 0.0 {
                return Err(Error::Validation(format!(
                    "negative member {k} ({v}) for {} at {}+{}",
                    self.variable.as_str(),
                    self.init_time,
                    self.lead_minutes
                )));
            }
        }
        Ok(())
    }

    /// Control first, then the exchangeable members.
    pub fn members(&self) -> [f64; N_MEMBERS] {
        let mut m = [0.0; N_MEMBERS];
        m[0] = self.control;
        m[1..].copy_from_slice(&self.exchangeable);
        m
    }

    pub fn valid_time(&self) -> Minutes {
        self.init_time + self.lead_minutes as i64
    }

    pub fn init_day(&self) -> i64 {
        day_of(self.init_time)
    }

    pub fn key(&self) -> CaseKey {
        CaseKey {
            station: self.station.clone(),
            init_time: self.init_time,
            lead_minutes: self.lead_minutes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CaseKey {
    pub station: String,
    pub init_time: Minutes,
    pub lead_minutes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub station: String,
    pub valid_time: Minutes,
    /// `None` marks a missing observation.
    pub value: Option<f64>,
    pub variable: Variable,
}

impl Observation {
    pub fn new(
        station: impl Into<String>,
        valid_time: Minutes,
        value: Option<f64>,
        variable: Variable,
    ) -> Result<Self> {
        if let Some(v) = value {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "observation {v} for {} is not a non-negative number",
                    variable.as_str()
                )));
            }
        }
        Ok(Observation {
            station: station.into(),
            valid_time,
            value,
            variable,
        })
    }

    pub fn missing(station: impl Into<String>, valid_time: Minutes, variable: Variable) -> Self {
        Observation {
            station: station.into(),
            valid_time,
            value: None,
            variable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastCase {
    pub forecast: EnsembleForecast,
    pub observation: Observation,
}

impl ForecastCase {
    pub fn new(forecast: EnsembleForecast, observation: Observation) -> Result<Self> {
        if forecast.station != observation.station
            || forecast.valid_time() != observation.valid_time
        {
            return Err(Error::Validation(format!(
                "observation {}@{} does not validate forecast {}@{}",
                observation.station,
                observation.valid_time,
                forecast.station,
                forecast.valid_time()
            )));
        }
        Ok(ForecastCase {
            forecast,
            observation,
        })
    }

    pub fn obs(&self) -> Option<f64> {
        self.observation.value
    }

    pub fn is_complete(&self) -> bool {
        self.observation.value.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub name: String,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
}

impl Station {
    pub fn bare(id: &str) -> Self {
        Station {
            id: id.to_string(),
            name: id.to_string(),
            latitude: None,
            longitude: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Cases ordered by (station, init time, lead time).
    pub cases: Vec<ForecastCase>,
    pub stations: Vec<Station>,
    pub cadence_minutes: u32,
    /// Forecast cases per 48 h run (`L`).
    pub cases_per_run: usize,
}

impl Dataset {
    pub fn variable(&self) -> Option<Variable> {
        self.cases.first().map(|c| c.forecast.variable)
    }

    pub fn complete_cases(&self) -> impl Iterator<Item = &ForecastCase> {
        self.cases.iter().filter(|c| c.is_complete())
    }

    /// Distinct initialization days, ascending.
    pub fn init_days(&self) -> Vec<i64> {
        let days: BTreeSet<i64> = self.cases.iter().map(|c| c.forecast.init_day()).collect();
        days.into_iter().collect()
    }

    pub fn station_ids(&self) -> Vec<&str> {
        self.stations.iter().map(|s| s.id.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JoinStats {
    pub forecasts: usize,
    pub observations: usize,
    pub complete: usize,
    pub missing_observation: usize,
    /// Observations that validate no forecast.
    pub unused_observations: usize,
}

/// Joins forecasts to observations on (station, valid time).
///
/// Forecasts without a matching observation become cases with a missing
/// observation. The cadence is taken from the smallest positive gap between
/// distinct lead times (falling back to the variable default).
pub fn join_cases(
    forecasts: Vec<EnsembleForecast>,
    observations: &[Observation],
) -> Result<(Dataset, JoinStats)> {
    let mut seen = BTreeSet::new();
    for f in &forecasts {
        if !seen.insert(f.key()) {
            return Err(Error::DuplicateKey {
                station: f.station.clone(),
                init_time: f.init_time,
                lead_minutes: f.lead_minutes,
            });
        }
    }

    let mut by_valid: BTreeMap<(&str, Minutes), &Observation> = BTreeMap::new();
    for o in observations {
        // A present value wins over a missing marker for the same key.
        let slot = by_valid
            .entry((o.station.as_str(), o.valid_time))
            .or_insert(o);
        if slot.value.is_none() && o.value.is_some() {
            *slot = o;
        }
    }

    let variable = forecasts.first().map(|f| f.variable);
    let mut used = BTreeSet::new();
    let mut stats = JoinStats {
        forecasts: forecasts.len(),
        observations: observations.len(),
        ..JoinStats::default()
    };
    let mut station_ids = BTreeSet::new();
    let mut leads = BTreeSet::new();
    let mut cases = Vec::with_capacity(forecasts.len());
    for f in forecasts {
        station_ids.insert(f.station.clone());
        leads.insert(f.lead_minutes);
        let key = (f.station.as_str(), f.valid_time());
        let obs = match by_valid.get(&key) {
            Some(o) if o.value.is_some() => {
                used.insert((o.station.clone(), o.valid_time));
                stats.complete += 1;
                (*o).clone()
            }
            _ => {
                stats.missing_observation += 1;
                Observation::missing(f.station.clone(), f.valid_time(), f.variable)
            }
        };
        cases.push(ForecastCase {
            forecast: f,
            observation: obs,
        });
    }
    stats.unused_observations = observations
        .iter()
        .filter(|o| o.value.is_some() && !used.contains(&(o.station.clone(), o.valid_time)))
        .count();

    let leads: Vec<u32> = leads.into_iter().collect();
    let cadence = leads
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0)
        .min()
        .or_else(|| variable.map(|v| v.default_cadence_minutes()))
        .unwrap_or(HORIZON_MINUTES);
    let dataset = Dataset {
        cases,
        stations: station_ids.iter().map(|s| Station::bare(s)).collect(),
        cadence_minutes: cadence,
        cases_per_run: (HORIZON_MINUTES / cadence) as usize,
    };
    Ok((dataset, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn fc(station: &str, init: i64, lead: u32, v: f64) -> EnsembleForecast {
        EnsembleForecast::new(station, init, lead, v, [v; 10], Variable::WindSpeed).unwrap()
    }

    #[test]
    fn negative_member_is_rejected() {
        let mut ex = [1.0; 10];
        ex[3] = -0.1;
        let err = EnsembleForecast::new("a", 0, 0, 1.0, ex, Variable::Ghi).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn negative_observation_is_rejected() {
        assert!(Observation::new("a", 0, Some(-1.0), Variable::Ghi).is_err());
        assert_eq!(
            Observation::new("a", 0, Some(7.5), Variable::Ghi)
                .unwrap()
                .value,
            Some(7.5)
        );
    }

    #[test]
    fn join_all_matching() {
        let f: Vec<_> = (0..10).map(|i| fc("s", 0, i * 15, 3.0)).collect();
        let o: Vec<_> = (0..10)
            .map(|i| {
                Observation::new("s", (i * 15) as i64, Some(2.0), Variable::WindSpeed).unwrap()
            })
            .collect();
        let (d, stats) = join_cases(f, &o).unwrap();
        assert_eq!(stats.complete, 10);
        assert_eq!(d.complete_cases().count(), 10);
        assert_eq!(d.cadence_minutes, 15);
        assert_eq!(d.cases_per_run, 192);
    }

    #[test]
    fn join_one_missing() {
        let f: Vec<_> = (0..10).map(|i| fc("s", 0, i * 15, 3.0)).collect();
        let o: Vec<_> = (0..9)
            .map(|i| {
                Observation::new("s", (i * 15) as i64, Some(2.0), Variable::WindSpeed).unwrap()
            })
            .collect();
        let (d, stats) = join_cases(f, &o).unwrap();
        assert_eq!(stats.complete, 9);
        assert_eq!(stats.missing_observation, 1);
        assert_eq!(d.cases.len(), 10);
        assert!(d.cases[9].obs().is_none());
    }

    #[test]
    fn join_duplicate_key() {
        let f = vec![fc("s", 0, 15, 3.0), fc("s", 0, 15, 4.0)];
        match join_cases(f, &[]) {
            Err(Error::DuplicateKey {
                station,
                init_time,
                lead_minutes,
            }) => {
                assert_eq!((station.as_str(), init_time, lead_minutes), ("s", 0, 15));
            }
            other => panic!("expected duplicate key error, got {other:?}"),
        }
    }

    #[test]
    fn join_never_fabricates() {
        let f: Vec<_> = (0..5).map(|i| fc("s", 0, i * 30, 1.0)).collect();
        let o = vec![
            Observation::new("s", 30, Some(1.0), Variable::WindSpeed).unwrap(),
            Observation::new("t", 30, Some(1.0), Variable::WindSpeed).unwrap(),
            Observation::missing("s", 60, Variable::WindSpeed),
        ];
        let (d, stats) = join_cases(f, &o).unwrap();
        assert_eq!(stats.complete, 1);
        assert_eq!(stats.unused_observations, 1);
        assert!(d.complete_cases().count() <= 3.min(5));
    }
}
