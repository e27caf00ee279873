//! Rolling-window training and batch prediction over many dates and scopes.
//!
//! Work is spread over a bounded rayon pool; results are collected in a
//! fixed order and every task draws its seed from (method, scope, date), so
//! outputs do not depend on the worker count.

use std::collections::BTreeMap;

use anyhow::{anyhow, Context};
use enspost_core::data::Dataset;
use enspost_core::pipeline::{
    derive_seed, emos_samples_by_pool, fit_emos_pool, predict_run, train_aux_nets, train_method,
    train_mlpex_with, window_cases, AuxNets, CalibratedForecast, EmosArtifact, MethodArtifact,
    MethodKind, MethodSpec, PipelineConfig, Pooling, Scope, Spatial,
};
use enspost_core::{EnsembleForecast, ForecastCase};
use log::{info, warn};
use rayon::prelude::*;

use crate::io::format_date;
use crate::store::{Manifest, ModelStore};

pub fn thread_pool(workers: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let n = workers.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))
}

/// Training scopes of a dataset: every station, or one regional scope.
pub fn scopes(spatial: Spatial, stations: &[&str]) -> Vec<Scope> {
    match spatial {
        Spatial::Local => stations
            .iter()
            .map(|s| Scope::Station(s.to_string()))
            .collect(),
        Spatial::Regional => vec![Scope::Regional],
    }
}

pub fn scope_of(spatial: Spatial, station: &str) -> Scope {
    match spatial {
        Spatial::Local => Scope::Station(station.to_string()),
        Spatial::Regional => Scope::Regional,
    }
}

/// Valid dates with a full training window, optionally clipped to a range.
pub fn default_days(
    dataset: &Dataset,
    train_days: u32,
    from: Option<i64>,
    to: Option<i64>,
) -> Vec<i64> {
    let days = dataset.init_days();
    let (Some(&first), Some(&last)) = (days.first(), days.last()) else {
        return Vec::new();
    };
    let lo = from.unwrap_or(first + train_days as i64);
    let hi = to.unwrap_or(last);
    (lo..=hi).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub scope: String,
    pub day: i64,
    pub reason: String,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Trained artifacts ordered by (scope, day).
    pub models: Vec<(Scope, i64, MethodArtifact)>,
    pub skipped: Vec<Skipped>,
}

fn task_seed(seed: u64, method: &MethodSpec, scope: &Scope, day: i64) -> u64 {
    derive_seed(seed, &format!("{}/{}", method.name(), scope.name()), &[day])
}

fn history_gap(dataset: &Dataset, day: i64, train_days: u32) -> Option<String> {
    let first = *dataset.init_days().first()?;
    (day - (train_days as i64) < first).then(|| {
        format!(
            "insufficient history: {} needs {train_days} days of runs from {}, archive starts {}",
            format_date(day),
            format_date(day - train_days as i64),
            format_date(first)
        )
    })
}

fn train_emos_scope(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    spec: &MethodSpec,
    scope: &Scope,
    days: &[i64],
    seed: u64,
) -> (Vec<(Scope, i64, MethodArtifact)>, Vec<Skipped>) {
    let mut models = Vec::new();
    let mut skipped = Vec::new();
    let mut previous: Option<EmosArtifact> = None;
    for &day in days {
        let fit = || -> anyhow::Result<EmosArtifact> {
            let cases: Vec<&ForecastCase> =
                window_cases(dataset, day, cfg.window.train_days, scope)?
                    .into_iter()
                    .filter(|c| c.is_complete())
                    .collect();
            let pools = emos_samples_by_pool(&cases, Pooling::PerLeadTime);
            if pools.is_empty() {
                return Err(anyhow!("no complete cases in the training window"));
            }
            let s = task_seed(seed, spec, scope, day);
            let fits = pools
                .par_iter()
                .map(|(pool, samples)| {
                    let prev = previous
                        .as_ref()
                        .and_then(|p| p.pools.get(pool))
                        .map(|f| &f.params);
                    fit_emos_pool(
                        samples,
                        spec.family,
                        prev,
                        derive_seed(s, "emos", &[*pool as i64]),
                    )
                    .map(|f| (*pool, f))
                    .map_err(|e| anyhow!("lead {pool} min: {e}"))
                })
                .collect::<anyhow::Result<BTreeMap<_, _>>>()?;
            Ok(EmosArtifact {
                family: spec.family,
                pooling: Pooling::PerLeadTime,
                pools: fits,
            })
        };
        if let Some(reason) = history_gap(dataset, day, cfg.window.train_days) {
            skipped.push(Skipped {
                scope: scope.name().into(),
                day,
                reason,
            });
            continue;
        }
        match fit() {
            Ok(a) => {
                previous = Some(a.clone());
                models.push((scope.clone(), day, MethodArtifact::Emos(a)));
            }
            Err(e) => skipped.push(Skipped {
                scope: scope.name().into(),
                day,
                reason: e.to_string(),
            }),
        }
    }
    (models, skipped)
}

/// MLPex auxiliaries per (scope name, day), or the reason they are missing.
pub type AuxMap = BTreeMap<(String, i64), Result<AuxNets, String>>;

/// Trains the MLPex auxiliaries for every (scope, day). Their seed does not
/// involve the family, so all MLPex variants of a run share them.
pub fn train_aux_all(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    days: &[i64],
    seed: u64,
    pool: &rayon::ThreadPool,
) -> AuxMap {
    let tasks: Vec<(Scope, i64)> = scopes(cfg.window.spatial, &dataset.station_ids())
        .into_iter()
        .flat_map(|s| days.iter().map(move |d| (s.clone(), *d)))
        .collect();
    pool.install(|| {
        let results: Vec<_> = tasks
            .par_iter()
            .map(|(scope, day)| {
                if let Some(reason) = history_gap(dataset, *day, cfg.window.train_days) {
                    return Err(reason);
                }
                let cases = window_cases(dataset, *day, cfg.window.train_days, scope)
                    .map_err(|e| e.to_string())?;
                let s = derive_seed(seed, &format!("aux/{}", scope.name()), &[*day]);
                train_aux_nets(&cases, cfg, s).map_err(|e| e.to_string())
            })
            .collect();
        tasks
            .into_iter()
            .map(|(scope, day)| (scope.name().to_string(), day))
            .zip(results)
            .collect()
    })
}

/// Trains `spec` for every (scope, day). EMOS warm-starts each date from the
/// previous date of the same scope. MLPex reuses `aux` when given.
pub fn train_all(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    spec: &MethodSpec,
    days: &[i64],
    seed: u64,
    aux: Option<&AuxMap>,
    pool: &rayon::ThreadPool,
) -> TrainOutcome {
    let scopes = scopes(cfg.window.spatial, &dataset.station_ids());
    pool.install(|| {
        if spec.kind == MethodKind::Emos {
            let parts: Vec<_> = scopes
                .par_iter()
                .map(|scope| train_emos_scope(dataset, cfg, spec, scope, days, seed))
                .collect();
            let mut out = TrainOutcome {
                models: Vec::new(),
                skipped: Vec::new(),
            };
            for (m, s) in parts {
                out.models.extend(m);
                out.skipped.extend(s);
            }
            return out;
        }
        let tasks: Vec<(Scope, i64)> = scopes
            .iter()
            .flat_map(|s| days.iter().map(move |d| (s.clone(), *d)))
            .collect();
        let results: Vec<_> = tasks
            .par_iter()
            .map(|(scope, day)| {
                if let Some(reason) = history_gap(dataset, *day, cfg.window.train_days) {
                    return Err(reason);
                }
                let cases = window_cases(dataset, *day, cfg.window.train_days, scope)
                    .map_err(|e| e.to_string())?;
                let s = task_seed(seed, spec, scope, *day);
                match (spec.kind, aux) {
                    (MethodKind::Mlpex, Some(aux)) => {
                        let nets = aux
                            .get(&(scope.name().to_string(), *day))
                            .ok_or_else(|| "auxiliary networks were not trained".to_string())?
                            .as_ref()
                            .map_err(|e| e.clone())?;
                        spec.validate_for(cfg.variable).map_err(|e| e.to_string())?;
                        train_mlpex_with(&cases, cfg, spec.family, nets, s)
                            .map(MethodArtifact::Mlpex)
                            .map_err(|e| e.to_string())
                    }
                    _ => train_method(&cases, cfg, spec, None, s).map_err(|e| e.to_string()),
                }
            })
            .collect();
        let mut out = TrainOutcome {
            models: Vec::new(),
            skipped: Vec::new(),
        };
        for ((scope, day), r) in tasks.into_iter().zip(results) {
            match r {
                Ok(a) => out.models.push((scope, day, a)),
                Err(reason) => out.skipped.push(Skipped {
                    scope: scope.name().into(),
                    day,
                    reason,
                }),
            }
        }
        out
    })
}

/// Writes the trained artifacts and merges them into the method manifest.
pub fn save_models(
    store: &ModelStore,
    cfg: &PipelineConfig,
    spec: &MethodSpec,
    seed: u64,
    outcome: &TrainOutcome,
) -> anyhow::Result<Manifest> {
    let method = spec.name();
    let fresh = Manifest::new(cfg, spec, seed);
    let mut manifest = match store.read_manifest(&method)? {
        Some(m) if m.config_hash == fresh.config_hash => m,
        Some(_) => {
            warn!("configuration of {method} changed; previous manifest entries are dropped");
            fresh
        }
        None => fresh,
    };
    for (scope, day, artifact) in &outcome.models {
        let entry = store.save(&method, scope.name(), *day, artifact, &manifest.config_hash)?;
        manifest.upsert(entry);
    }
    store.write_manifest(&manifest)?;
    info!(
        "{method}: {} artifacts written, {} skipped",
        outcome.models.len(),
        outcome.skipped.len()
    );
    Ok(manifest)
}

/// Calibrates every forecast run initialized on one of `days` (all days if
/// empty) with the model stored for its (scope, date).
pub fn predict_all(
    forecasts: &[EnsembleForecast],
    store: &ModelStore,
    method: &str,
    spatial: Spatial,
    days: &[i64],
    pool: &rayon::ThreadPool,
) -> anyhow::Result<Vec<CalibratedForecast>> {
    let mut runs: BTreeMap<(i64, String), Vec<&EnsembleForecast>> = BTreeMap::new();
    for f in forecasts {
        if days.is_empty() || days.contains(&f.init_day()) {
            runs.entry((f.init_day(), f.station.clone()))
                .or_default()
                .push(f);
        }
    }
    let mut needed: BTreeMap<(String, i64), ()> = BTreeMap::new();
    for (day, station) in runs.keys() {
        needed.insert((scope_of(spatial, station).name().to_string(), *day), ());
    }
    let keys: Vec<(String, i64)> = needed.into_keys().collect();
    pool.install(|| {
        let artifacts: BTreeMap<(String, i64), MethodArtifact> = keys
            .par_iter()
            .map(|(scope, day)| {
                store
                    .load(method, scope, *day)
                    .map(|a| ((scope.clone(), *day), a))
            })
            .collect::<anyhow::Result<_>>()?;
        let run_list: Vec<(&(i64, String), &Vec<&EnsembleForecast>)> = runs.iter().collect();
        let parts = run_list
            .par_iter()
            .map(|((day, station), run)| {
                let scope = scope_of(spatial, station);
                let artifact = &artifacts[&(scope.name().to_string(), *day)];
                predict_run(artifact, method, run)
                    .with_context(|| format!("{method} for {station} on {}", format_date(*day)))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let mut out: Vec<CalibratedForecast> = parts.into_iter().flatten().collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(out)
    })
}
