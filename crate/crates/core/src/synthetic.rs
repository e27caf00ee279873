//! Seeded scenario generator with a known true predictive law per
//! (station, valid time).
//!
//! A smooth AR(1) latent `x` drives the truth; the ensemble is centred on a
//! linear proxy of the truth plus bias `b` and a lead-dependent error shared
//! by all members, with member noise deflated by `d`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

// Unused when std is linked elsewhere in the build graph, which supplies
// inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{
    join_cases, Dataset, EnsembleForecast, ForecastCase, Minutes, Observation, Station, Variable,
};
use crate::dist::{CensoredNormal, PredictiveDistribution, TruncNormal};
use crate::pipeline::derive_seed;
use crate::{Error, Result, HORIZON_MINUTES, MINUTES_PER_DAY, N_EXCHANGEABLE};

/// 2020-07-01 as a day number.
pub const DEFAULT_START_DAY: i64 = 18444;

const SUNRISE_HOUR: f64 = 4.0;
const SUNSET_HOUR: f64 = 18.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthConfig {
    /// Mean level; for GHI in W/m² at clear-sky peak.
    pub level: f64,
    /// Response to the standardized latent.
    pub amplitude: f64,
    /// Weight of the `x² − 1` term in the true location.
    pub quadratic: f64,
    /// True scale at `x₂ = 0`.
    pub sigma: f64,
    /// The true scale is `sigma · exp(sigma_variability · x₂)` with a second
    /// independent latent `x₂`.
    pub sigma_variability: f64,
    /// AR(1) coefficient of the latents per time step.
    pub ar_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Additive bias `b` of the ensemble centre.
    pub bias: f64,
    /// Spread deflation `d ∈ (0, 1]`; 1 gives members exchangeable with the
    /// truth when there is no centre error.
    pub deflation: f64,
    /// Standard deviation of the common centre error at the 48 h horizon;
    /// it grows linearly from a quarter of this at lead 0 and is drawn
    /// independently per forecast case.
    pub lead_error: f64,
    /// Control-member noise relative to the other members.
    pub control_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub variable: Variable,
    pub n_stations: usize,
    pub n_days: usize,
    pub start_day: i64,
    pub cadence_minutes: u32,
    /// Forecast cases per run `L`.
    pub cases_per_run: usize,
    pub truth: TruthConfig,
    pub ensemble: EnsembleConfig,
    /// Probability that an observation is missing.
    pub missing_rate: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn wind(seed: u64) -> Self {
        ScenarioConfig {
            variable: Variable::WindSpeed,
            n_stations: 2,
            n_days: 90,
            start_day: DEFAULT_START_DAY,
            cadence_minutes: 15,
            cases_per_run: 192,
            truth: TruthConfig {
                level: 8.0,
                amplitude: 2.5,
                quadratic: 0.3,
                sigma: 1.2,
                sigma_variability: 0.3,
                ar_rho: 0.99,
            },
            ensemble: EnsembleConfig {
                bias: 0.5,
                deflation: 0.5,
                lead_error: 0.8,
                control_noise: 0.8,
            },
            missing_rate: 0.03,
            seed,
        }
    }

    pub fn ghi(seed: u64) -> Self {
        ScenarioConfig {
            variable: Variable::Ghi,
            n_stations: 2,
            n_days: 90,
            start_day: DEFAULT_START_DAY,
            cadence_minutes: 30,
            cases_per_run: 96,
            truth: TruthConfig {
                level: 600.0,
                amplitude: 180.0,
                quadratic: 0.3,
                sigma: 60.0,
                sigma_variability: 0.3,
                ar_rho: 0.98,
            },
            ensemble: EnsembleConfig {
                bias: 40.0,
                deflation: 0.5,
                lead_error: 60.0,
                control_noise: 0.8,
            },
            missing_rate: 0.0,
            seed,
        }
    }

    pub fn for_variable(variable: Variable, seed: u64) -> Self {
        match variable {
            Variable::WindSpeed => Self::wind(seed),
            Variable::Ghi => Self::ghi(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.ensemble;
        let t = &self.truth;
        let bad = |m: String| Err(Error::Config(m));
        if self.n_stations == 0
            || self.n_days == 0
            || self.cases_per_run == 0
            || self.cadence_minutes == 0
        {
            return bad("stations, days, cadence and cases per run must be positive".into());
        }
        if (self.cases_per_run as u64 - 1) * self.cadence_minutes as u64 >= HORIZON_MINUTES as u64 {
            return bad(format!(
                "{} cases at {} min exceed the {HORIZON_MINUTES} min horizon",
                self.cases_per_run, self.cadence_minutes
            ));
        }
        if MINUTES_PER_DAY % self.cadence_minutes as i64 != 0 {
            return bad(format!(
                "cadence {} min does not divide a day",
                self.cadence_minutes
            ));
        }
        if !(e.deflation > 0.0 && e.deflation <= 1.0) {
            return bad(format!(
                "spread deflation must lie in (0, 1], got {}",
                e.deflation
            ));
        }
        if !(t.ar_rho >= 0.0 && t.ar_rho < 1.0) {
            return bad(format!(
                "AR coefficient must lie in [0, 1), got {}",
                t.ar_rho
            ));
        }
        if !(t.sigma > 0.0) || e.lead_error < 0.0 || e.control_noise < 0.0 {
            return bad("scales must be non-negative and sigma positive".into());
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!(
                "missing rate must lie in [0, 1), got {}",
                self.missing_rate
            ));
        }
        let finite = [
            t.level,
            t.amplitude,
            t.quadratic,
            t.sigma_variability,
            e.bias,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("non-finite scenario coefficient".into());
        }
        Ok(())
    }

    pub fn station_id(index: usize) -> String {
        format!("S{:02}", index + 1)
    }
}

/// Clear-sky fraction of the peak at a UTC time of day; exactly zero at night.
pub fn clear_sky_fraction(t: Minutes) -> f64 {
    let h = t.rem_euclid(MINUTES_PER_DAY) as f64 / 60.0;
    if h <= SUNRISE_HOUR || h >= SUNSET_HOUR {
        return 0.0;
    }
    (core::f64::consts::PI * (h - SUNRISE_HOUR) / (SUNSET_HOUR - SUNRISE_HOUR))
        .sin()
        .powf(1.3)
}

/// True predictive laws keyed by (station, valid time).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub laws: BTreeMap<(String, Minutes), PredictiveDistribution>,
}

impl Truth {
    pub fn get(&self, station: &str, valid_time: Minutes) -> Option<&PredictiveDistribution> {
        self.laws.get(&(String::from(station), valid_time))
    }

    pub fn len(&self) -> usize {
        self.laws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laws.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dataset: Dataset,
    pub forecasts: Vec<EnsembleForecast>,
    pub observations: Vec<Observation>,
    pub truth: Truth,
}

/// Forecasts, observations and truth of one station.
#[derive(Debug, Clone, PartialEq)]
pub struct StationArchive {
    pub forecasts: Vec<EnsembleForecast>,
    pub observations: Vec<Observation>,
    pub truth: Vec<((String, Minutes), PredictiveDistribution)>,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Generates one station from its derived seed; stations are independent.
pub fn generate_station(cfg: &ScenarioConfig, index: usize) -> Result<StationArchive> {
    cfg.validate()?;
    let station = ScenarioConfig::station_id(index);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "station", &[index as i64]));
    let cadence = cfg.cadence_minutes as i64;
    let t0 = cfg.start_day * MINUTES_PER_DAY;
    let last_lead = (cfg.cases_per_run as i64 - 1) * cadence;
    let n_steps = ((cfg.n_days as i64 - 1) * MINUTES_PER_DAY + last_lead) / cadence + 1;
    let t = &cfg.truth;
    let e = &cfg.ensemble;

    // Stationary AR(1) latents on the valid-time grid.
    let innov = (1.0 - t.ar_rho * t.ar_rho).sqrt();
    let mut x = normal(&mut rng);
    let mut x2 = normal(&mut rng);
    let mut truth = Vec::with_capacity(n_steps as usize);
    let mut centre = Vec::with_capacity(n_steps as usize);
    let mut observations = Vec::with_capacity(n_steps as usize);
    for step in 0..n_steps {
        if step > 0 {
            x = t.ar_rho * x + innov * normal(&mut rng);
            x2 = t.ar_rho * x2 + innov * normal(&mut rng);
        }
        let valid = t0 + step * cadence;
        let base = match cfg.variable {
            Variable::WindSpeed => 1.0,
            Variable::Ghi => clear_sky_fraction(valid),
        };
        let sigma = base * t.sigma * (t.sigma_variability * x2).exp();
        let location = base * (t.level + t.amplitude * (x + t.quadratic * (x * x - 1.0)));
        let law = match cfg.variable {
            Variable::WindSpeed => PredictiveDistribution::Tn(TruncNormal::new(location, sigma)),
            Variable::Ghi if base == 0.0 => {
                PredictiveDistribution::Cn0(CensoredNormal::new(-1.0, 0.1))
            }
            Variable::Ghi => PredictiveDistribution::Cn0(CensoredNormal::new(location, sigma)),
        };
        let value = law.sample(&mut rng);
        let missing = cfg.missing_rate > 0.0 && rng.random::<f64>() < cfg.missing_rate;
        observations.push(if missing {
            Observation::missing(station.clone(), valid, cfg.variable)
        } else {
            Observation::new(station.clone(), valid, Some(value), cfg.variable)?
        });
        centre.push((base, base * (t.level + t.amplitude * x + e.bias), sigma));
        truth.push(((station.clone(), valid), law));
    }

    let mut forecasts = Vec::with_capacity(cfg.n_days * cfg.cases_per_run);
    for day in 0..cfg.n_days as i64 {
        let init = t0 + day * MINUTES_PER_DAY;
        for k in 0..cfg.cases_per_run as i64 {
            let lead = k * cadence;
            let (base, c, sigma) = centre[((init - t0 + lead) / cadence) as usize];
            let err_sd = e.lead_error * (0.25 + 0.75 * lead as f64 / HORIZON_MINUTES as f64);
            let c = c + base * err_sd * normal(&mut rng);
            let spread = e.deflation * sigma;
            let control = (c + e.control_noise * spread * normal(&mut rng)).max(0.0);
            let mut ex = [0.0; N_EXCHANGEABLE];
            for m in ex.iter_mut() {
                *m = (c + spread * normal(&mut rng)).max(0.0);
            }
            forecasts.push(EnsembleForecast::new(
                station.clone(),
                init,
                lead as u32,
                control,
                ex,
                cfg.variable,
            )?);
        }
    }
    Ok(StationArchive {
        forecasts,
        observations,
        truth,
    })
}

/// Assembles per-station archives into a scenario.
pub fn assemble(cfg: &ScenarioConfig, archives: Vec<StationArchive>) -> Result<Scenario> {
    let mut forecasts = Vec::new();
    let mut observations = Vec::new();
    let mut truth = Truth::default();
    for a in archives {
        forecasts.extend(a.forecasts);
        observations.extend(a.observations);
        truth.laws.extend(a.truth);
    }
    let (mut dataset, _) = join_cases(forecasts.clone(), &observations)?;
    dataset.stations = (0..cfg.n_stations)
        .map(|i| Station::bare(&ScenarioConfig::station_id(i)))
        .collect();
    dataset.cadence_minutes = cfg.cadence_minutes;
    dataset.cases_per_run = cfg.cases_per_run;
    Ok(Scenario {
        dataset,
        forecasts,
        observations,
        truth,
    })
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    let archives = (0..cfg.n_stations)
        .map(|i| generate_station(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    assemble(cfg, archives)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleScore {
    pub mean_crps: f64,
    pub std_error: f64,
    pub n: usize,
}

fn mean_and_se(values: &[f64]) -> OracleScore {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    OracleScore {
        mean_crps: mean,
        std_error: (var / n.max(1) as f64).sqrt(),
        n,
    }
}

/// Mean CRPS of the true law over the non-missing observations.
pub fn oracle_scores(truth: &Truth, observations: &[Observation]) -> Result<OracleScore> {
    let mut scores = Vec::with_capacity(observations.len());
    for o in observations {
        let Some(v) = o.value else { continue };
        let law = truth.get(&o.station, o.valid_time).ok_or_else(|| {
            Error::Validation(format!("no true law for {} at {}", o.station, o.valid_time))
        })?;
        scores.push(law.crps(v));
    }
    if scores.is_empty() {
        return Err(Error::InsufficientData("no observations to score".into()));
    }
    Ok(mean_and_se(&scores))
}

/// Mean CRPS of the true law over complete forecast cases, so that a
/// valid time verified by two runs counts twice like any method's score.
pub fn oracle_case_scores<'a>(
    truth: &Truth,
    cases: impl IntoIterator<Item = &'a ForecastCase>,
) -> Result<OracleScore> {
    let observations: Vec<Observation> = cases
        .into_iter()
        .filter(|c| c.is_complete())
        .map(|c| c.observation.clone())
        .collect();
    oracle_scores(truth, &observations)
}
