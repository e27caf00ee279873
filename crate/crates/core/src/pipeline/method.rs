//! Training and prediction for each calibration method.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{CaseKey, EnsembleForecast, ForecastCase};
use crate::dist::{Family, PredictiveDistribution};
use crate::emos::{fit_emos, EmosFit, EmosParams, EmosSample};
use crate::nn::Loss;
use crate::stats::{feature_names, feature_vector, summarize, Feature};
use crate::{Error, Result, MINUTES_PER_DAY};

use super::config::{C1dConfig, MethodKind, MethodSpec, NetConfig, PipelineConfig, Pooling};
use super::derive_seed;
use super::model::{PointNet, ScaledNet, SequenceNet};
use super::window::{pool_of, SliceConfig};

/// Feature names of the two auxiliary forecasts appended for MLPex.
pub const AUX_FEATURES: [&str; 2] = ["aux_mlp", "aux_c1d"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosPoolFit {
    pub params: EmosParams,
    pub mean_crps: f64,
    pub n_cases: usize,
    pub converged: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosArtifact {
    pub family: Family,
    pub pooling: Pooling,
    /// Fit per lead-time pool.
    pub pools: BTreeMap<u32, EmosPoolFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArtifact {
    pub family: Family,
    /// One network per half-day pool.
    pub nets: BTreeMap<u32, ScaledNet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpExArtifact {
    pub family: Family,
    pub nets: BTreeMap<u32, ScaledNet>,
    pub aux_mlp: PointNet,
    pub aux_c1d: SequenceNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodArtifact {
    Emos(EmosArtifact),
    MlpS(MlpArtifact),
    Mlpex(MlpExArtifact),
}

impl MethodArtifact {
    pub fn family(&self) -> Family {
        match self {
            MethodArtifact::Emos(a) => a.family,
            MethodArtifact::MlpS(a) => a.family,
            MethodArtifact::Mlpex(a) => a.family,
        }
    }

    pub fn kind(&self) -> MethodKind {
        match self {
            MethodArtifact::Emos(_) => MethodKind::Emos,
            MethodArtifact::MlpS(_) => MethodKind::MlpS,
            MethodArtifact::Mlpex(_) => MethodKind::Mlpex,
        }
    }
}

/// A calibrated predictive distribution for one forecast case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedForecast {
    pub key: CaseKey,
    pub method: String,
    pub distribution: PredictiveDistribution,
    pub aux_mlp: Option<f64>,
    pub aux_c1d: Option<f64>,
}

/// Auxiliary point forecasts of one case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aux {
    pub mlp: f64,
    pub c1d: f64,
}

// ---------------------------------------------------------------------------
// EMOS

/// Complete cases grouped into EMOS training samples per pool.
pub fn emos_samples_by_pool(
    cases: &[&ForecastCase],
    pooling: Pooling,
) -> BTreeMap<u32, Vec<EmosSample>> {
    let mut pools: BTreeMap<u32, Vec<EmosSample>> = BTreeMap::new();
    for c in cases {
        if let Some(s) = EmosSample::from_case(c) {
            pools
                .entry(pool_of(c.forecast.lead_minutes, pooling))
                .or_default()
                .push(s);
        }
    }
    pools
}

/// Fits one pool, warm-started from `previous` when given.
pub fn fit_emos_pool(
    samples: &[EmosSample],
    family: Family,
    previous: Option<&EmosParams>,
    seed: u64,
) -> Result<EmosPoolFit> {
    let previous = previous.filter(|p| p.family() == family);
    let fit: EmosFit = fit_emos(samples, family, previous, seed)?;
    Ok(EmosPoolFit {
        params: fit.params,
        mean_crps: fit.mean_crps,
        n_cases: samples.len(),
        converged: fit.converged,
        degenerate: fit.degenerate,
    })
}

/// Fits EMOS for every pool present in the training cases.
pub fn train_emos(
    cases: &[&ForecastCase],
    family: Family,
    pooling: Pooling,
    previous: Option<&EmosArtifact>,
    seed: u64,
) -> Result<EmosArtifact> {
    let mut pools = BTreeMap::new();
    for (pool, samples) in emos_samples_by_pool(cases, pooling) {
        let prev = previous.and_then(|a| a.pools.get(&pool)).map(|f| &f.params);
        let fit = fit_emos_pool(
            &samples,
            family,
            prev,
            derive_seed(seed, "emos", &[pool as i64]),
        )
        .map_err(|e| Error::InsufficientData(format!("lead pool {pool}: {e}")))?;
        pools.insert(pool, fit);
    }
    if pools.is_empty() {
        return Err(Error::InsufficientData("no complete cases for EMOS".into()));
    }
    Ok(EmosArtifact {
        family,
        pooling,
        pools,
    })
}

// ---------------------------------------------------------------------------
// Networks

fn feature_rows(
    cases: &[&ForecastCase],
    features: &[Feature],
    aux: Option<&BTreeMap<CaseKey, Aux>>,
) -> Result<Vec<f64>> {
    let mut rows = Vec::with_capacity(cases.len() * (features.len() + 2));
    for c in cases {
        let s = summarize(&c.forecast);
        rows.extend(feature_vector(&c.forecast, &s, features));
        if let Some(aux) = aux {
            let a = aux.get(&c.forecast.key()).ok_or_else(|| {
                Error::Validation(format!(
                    "no auxiliary forecast for {} at {}",
                    c.forecast.station, c.forecast.init_time
                ))
            })?;
            rows.push(a.mlp);
            rows.push(a.c1d);
        }
    }
    Ok(rows)
}

/// Trains one distributional network per half-day pool. With `aux`, the
/// auxiliary forecasts are appended to the features.
pub fn train_pooled_nets(
    cases: &[&ForecastCase],
    cfg: &NetConfig,
    family: Family,
    aux: Option<&BTreeMap<CaseKey, Aux>>,
    seed: u64,
) -> Result<BTreeMap<u32, ScaledNet>> {
    let mut names = feature_names(&cfg.features);
    if aux.is_some() {
        names.extend(AUX_FEATURES.iter().map(|s| s.to_string()));
    }
    let mut nets = BTreeMap::new();
    for pool in [0u32, MINUTES_PER_DAY as u32] {
        let subset: Vec<&ForecastCase> = cases
            .iter()
            .copied()
            .filter(|c| {
                c.is_complete() && pool_of(c.forecast.lead_minutes, Pooling::HalfDayPooled) == pool
            })
            .collect();
        if subset.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no complete cases in lead pool starting at {pool} min"
            )));
        }
        if pool == 0 {
            assert!(subset
                .iter()
                .all(|c| (c.forecast.lead_minutes as i64) < MINUTES_PER_DAY));
        }
        let rows = feature_rows(&subset, &cfg.features, aux)?;
        let targets: Vec<f64> = subset.iter().map(|c| c.obs().expect("complete")).collect();
        let net = ScaledNet::fit(
            names.clone(),
            &rows,
            &targets,
            &cfg.hidden,
            &cfg.optimizer,
            family,
            derive_seed(seed, "mlp", &[pool as i64]),
        )?;
        nets.insert(pool, net);
    }
    Ok(nets)
}

pub fn train_mlp_s(
    cases: &[&ForecastCase],
    cfg: &NetConfig,
    family: Family,
    seed: u64,
) -> Result<MlpArtifact> {
    Ok(MlpArtifact {
        family,
        nets: train_pooled_nets(cases, cfg, family, None, seed)?,
    })
}

/// Point forecaster over single cases, trained on the complete cases.
pub fn train_mlpaux(cases: &[&ForecastCase], cfg: &NetConfig, seed: u64) -> Result<PointNet> {
    let complete: Vec<&ForecastCase> = cases.iter().copied().filter(|c| c.is_complete()).collect();
    let rows = feature_rows(&complete, &cfg.features, None)?;
    let targets: Vec<f64> = complete
        .iter()
        .map(|c| c.obs().expect("complete"))
        .collect();
    PointNet::fit(
        feature_names(&cfg.features),
        1,
        &rows,
        &targets,
        &cfg.hidden,
        &cfg.optimizer,
        cfg.loss.unwrap_or(Loss::Mae),
        derive_seed(seed, "aux_mlp", &[]),
    )
}

/// Per-station series in time order (cases are sorted by key).
fn station_series<'a>(cases: &[&'a ForecastCase]) -> BTreeMap<&'a str, Vec<&'a ForecastCase>> {
    let mut series: BTreeMap<&str, Vec<&ForecastCase>> = BTreeMap::new();
    for c in cases {
        series
            .entry(c.forecast.station.as_str())
            .or_default()
            .push(c);
    }
    for s in series.values_mut() {
        s.sort_by(|a, b| a.forecast.key().cmp(&b.forecast.key()));
    }
    series
}

/// Sequence-to-sequence point forecaster trained on overlapping slices of
/// every station's series; slices with a missing observation are dropped.
pub fn train_c1daux(cases: &[&ForecastCase], cfg: &C1dConfig, seed: u64) -> Result<SequenceNet> {
    let SliceConfig { window_len, .. } = cfg.slices;
    cfg.slices.validate()?;
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for series in station_series(cases).values() {
        if series.len() < window_len {
            continue;
        }
        let feats = feature_rows(series, &cfg.net.features, None)?;
        let width = cfg.net.features.len();
        for s in cfg.slices.overlapping_starts(series.len())? {
            let slice = &series[s..s + window_len];
            if slice.iter().all(|c| c.is_complete()) {
                rows.extend_from_slice(&feats[s * width..(s + window_len) * width]);
                targets.extend(slice.iter().map(|c| c.obs().expect("complete")));
            }
        }
    }
    if targets.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no complete slice of length {window_len}"
        )));
    }
    PointNet::fit(
        feature_names(&cfg.net.features),
        window_len,
        &rows,
        &targets,
        &cfg.net.hidden,
        &cfg.net.optimizer,
        cfg.net.loss.unwrap_or(Loss::Mae),
        derive_seed(seed, "aux_c1d", &[]),
    )
}

fn parse_features(names: &[String]) -> Result<Vec<Feature>> {
    Feature::parse_list(
        &names
            .iter()
            .filter(|n| !AUX_FEATURES.contains(&n.as_str()))
            .collect::<Vec<_>>(),
    )
}

/// Auxiliary forecasts for every given case: MLPaux case by case, C1Daux
/// over disjoint slices of each station's series.
pub fn aux_forecasts(
    cases: &[&ForecastCase],
    aux_mlp: &PointNet,
    aux_c1d: &SequenceNet,
) -> Result<BTreeMap<CaseKey, Aux>> {
    let forecasts: Vec<&EnsembleForecast> = cases.iter().map(|c| &c.forecast).collect();
    aux_for_forecasts(&forecasts, aux_mlp, aux_c1d)
}

fn aux_for_forecasts(
    forecasts: &[&EnsembleForecast],
    aux_mlp: &PointNet,
    aux_c1d: &SequenceNet,
) -> Result<BTreeMap<CaseKey, Aux>> {
    let mlp_features = parse_features(&aux_mlp.features)?;
    let c1d_features = parse_features(&aux_c1d.features)?;
    let mut by_station: BTreeMap<&str, Vec<&EnsembleForecast>> = BTreeMap::new();
    for f in forecasts {
        by_station.entry(f.station.as_str()).or_default().push(f);
    }
    let mut out = BTreeMap::new();
    for series in by_station.values_mut() {
        series.sort_by(|a, b| a.key().cmp(&b.key()));
        let summaries: Vec<_> = series.iter().map(|f| summarize(f)).collect();
        let mut mlp_rows = Vec::with_capacity(series.len() * mlp_features.len());
        let mut c1d_rows = Vec::with_capacity(series.len() * c1d_features.len());
        for (f, s) in series.iter().zip(&summaries) {
            mlp_rows.extend(feature_vector(f, s, &mlp_features));
            c1d_rows.extend(feature_vector(f, s, &c1d_features));
        }
        let mlp = aux_mlp.predict(&mlp_rows)?;
        let c1d = aux_c1d.predict_series(&c1d_rows)?;
        for (i, f) in series.iter().enumerate() {
            out.insert(
                f.key(),
                Aux {
                    mlp: mlp[i],
                    c1d: c1d[i],
                },
            );
        }
    }
    Ok(out)
}

/// Two-step method: trains MLPaux and C1Daux on the window, then the pooled
/// networks on the MLP-S features extended by in-sample auxiliary forecasts.
pub fn train_mlpex(
    cases: &[&ForecastCase],
    cfg: &PipelineConfig,
    family: Family,
    seed: u64,
) -> Result<MlpExArtifact> {
    let aux = train_aux_nets(cases, cfg, seed)?;
    train_mlpex_with(cases, cfg, family, &aux, seed)
}

/// The two point-forecast auxiliaries of MLPex. They do not depend on the
/// distribution family, so one pair can serve several MLPex variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxNets {
    pub mlp: PointNet,
    pub c1d: SequenceNet,
}

pub fn train_aux_nets(cases: &[&ForecastCase], cfg: &PipelineConfig, seed: u64) -> Result<AuxNets> {
    Ok(AuxNets {
        mlp: train_mlpaux(cases, &cfg.aux_mlp, seed)?,
        c1d: train_c1daux(cases, &cfg.aux_c1d, seed)?,
    })
}

/// MLPex on top of already trained auxiliaries.
pub fn train_mlpex_with(
    cases: &[&ForecastCase],
    cfg: &PipelineConfig,
    family: Family,
    aux: &AuxNets,
    seed: u64,
) -> Result<MlpExArtifact> {
    let feats = aux_forecasts(cases, &aux.mlp, &aux.c1d)?;
    let nets = train_pooled_nets(cases, &cfg.mlp, family, Some(&feats), seed)?;
    Ok(MlpExArtifact {
        family,
        nets,
        aux_mlp: aux.mlp.clone(),
        aux_c1d: aux.c1d.clone(),
    })
}

/// Trains `spec` on the window's cases (complete or not; incomplete ones
/// only feed the C1Daux feature series).
pub fn train_method(
    cases: &[&ForecastCase],
    cfg: &PipelineConfig,
    spec: &MethodSpec,
    previous: Option<&MethodArtifact>,
    seed: u64,
) -> Result<MethodArtifact> {
    spec.validate_for(cfg.variable)?;
    match spec.kind {
        MethodKind::Emos => {
            let prev = match previous {
                Some(MethodArtifact::Emos(a)) => Some(a),
                _ => None,
            };
            let complete: Vec<&ForecastCase> =
                cases.iter().copied().filter(|c| c.is_complete()).collect();
            Ok(MethodArtifact::Emos(train_emos(
                &complete,
                spec.family,
                Pooling::PerLeadTime,
                prev,
                seed,
            )?))
        }
        MethodKind::MlpS => Ok(MethodArtifact::MlpS(train_mlp_s(
            cases,
            &cfg.mlp,
            spec.family,
            seed,
        )?)),
        MethodKind::Mlpex => Ok(MethodArtifact::Mlpex(train_mlpex(
            cases,
            cfg,
            spec.family,
            seed,
        )?)),
    }
}

// ---------------------------------------------------------------------------
// Prediction

fn net_for(nets: &BTreeMap<u32, ScaledNet>, lead: u32) -> Result<&ScaledNet> {
    let pool = pool_of(lead, Pooling::HalfDayPooled);
    nets.get(&pool).ok_or_else(|| {
        Error::MissingArtifact(format!(
            "no network for the lead pool starting at {pool} min"
        ))
    })
}

/// Calibrates every forecast of a run (or any set of forecasts; C1Daux
/// needs each station's forecasts as a contiguous series).
pub fn predict_run(
    artifact: &MethodArtifact,
    method: &str,
    run: &[&EnsembleForecast],
) -> Result<Vec<CalibratedForecast>> {
    let mut run: Vec<&EnsembleForecast> = run.to_vec();
    run.sort_by(|a, b| a.key().cmp(&b.key()));
    let mut out = Vec::with_capacity(run.len());
    match artifact {
        MethodArtifact::Emos(a) => {
            for f in run {
                let pool = pool_of(f.lead_minutes, a.pooling);
                let fit = a.pools.get(&pool).ok_or_else(|| {
                    Error::MissingArtifact(format!(
                        "no EMOS parameters for lead {} min",
                        f.lead_minutes
                    ))
                })?;
                out.push(CalibratedForecast {
                    key: f.key(),
                    method: method.to_string(),
                    distribution: fit.params.link_total(&summarize(f), f.control)?,
                    aux_mlp: None,
                    aux_c1d: None,
                });
            }
        }
        MethodArtifact::MlpS(a) => {
            for f in run {
                let net = net_for(&a.nets, f.lead_minutes)?;
                let features = parse_features(&net.features)?;
                let row = feature_vector(f, &summarize(f), &features);
                let d = net.predict(&row)?.pop().expect("one row");
                out.push(CalibratedForecast {
                    key: f.key(),
                    method: method.to_string(),
                    distribution: d,
                    aux_mlp: None,
                    aux_c1d: None,
                });
            }
        }
        MethodArtifact::Mlpex(a) => {
            let aux = aux_for_forecasts(&run, &a.aux_mlp, &a.aux_c1d)?;
            for f in run {
                let net = net_for(&a.nets, f.lead_minutes)?;
                let features = parse_features(&net.features)?;
                let mut row = feature_vector(f, &summarize(f), &features);
                let x = aux[&f.key()];
                row.push(x.mlp);
                row.push(x.c1d);
                let d = net.predict(&row)?.pop().expect("one row");
                out.push(CalibratedForecast {
                    key: f.key(),
                    method: method.to_string(),
                    distribution: d,
                    aux_mlp: Some(x.mlp),
                    aux_c1d: Some(x.c1d),
                });
            }
        }
    }
    Ok(out)
}

/// Calibrates a single forecast. MLPex needs the whole run and is rejected.
pub fn predict(
    artifact: &MethodArtifact,
    method: &str,
    forecast: &EnsembleForecast,
) -> Result<CalibratedForecast> {
    if matches!(artifact, MethodArtifact::Mlpex(_)) {
        return Err(Error::Config(
            "MLPex predictions need the whole run; use predict_run".into(),
        ));
    }
    Ok(predict_run(artifact, method, &[forecast])?
        .pop()
        .expect("one forecast"))
}
