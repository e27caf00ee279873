//! CSV archives: forecasts, observations, predictions and synthetic truth.
//!
//! Timestamps are ISO-8601 UTC in files and epoch minutes in memory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use enspost_core::data::{CaseKey, Minutes};
use enspost_core::pipeline::CalibratedForecast;
use enspost_core::synthetic::Truth;
use enspost_core::{EnsembleForecast, Family, Observation, PredictiveDistribution, Variable};

use crate::IoError;

pub const N_MEMBER_COLUMNS: usize = 10;

/// Formats epoch minutes as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_time(t: Minutes) -> String {
    let dt = DateTime::<Utc>::from_timestamp(t * 60, 0).expect("timestamp in range");
    dt.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parses an RFC 3339 timestamp (any offset) or a naive `YYYY-MM-DD[ T]HH:MM[:SS]`
/// taken as UTC. Seconds must be zero.
pub fn parse_time(s: &str) -> Result<Minutes, IoError> {
    let s = s.trim();
    let secs = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.timestamp()
    } else {
        [
            "%Y-%m-%dT%H:%M:%S",
            "%Y-%m-%d %H:%M:%S",
            "%Y-%m-%dT%H:%M",
            "%Y-%m-%d %H:%M",
        ]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|dt| dt.and_utc().timestamp())
        .ok_or_else(|| IoError::Parse(format!("'{s}' is not an ISO-8601 timestamp")))?
    };
    if secs % 60 != 0 {
        return Err(IoError::Parse(format!("'{s}' is not on a whole minute")));
    }
    Ok(secs / 60)
}

pub fn format_date(day: i64) -> String {
    format_time(day * 1440)[..10].to_string()
}

pub fn parse_date(s: &str) -> Result<i64, IoError> {
    let d = NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| IoError::Parse(format!("'{s}' is not a YYYY-MM-DD date: {e}")))?;
    Ok(d.and_hms_opt(0, 0, 0)
        .expect("midnight")
        .and_utc()
        .timestamp()
        / 86_400)
}

/// Column names of the forecast archive.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSchema {
    pub station: String,
    pub init_time: String,
    pub lead_minutes: String,
    pub control: String,
    /// Accepted names per exchangeable member, first one preferred.
    pub members: Vec<Vec<String>>,
}

impl Default for ForecastSchema {
    fn default() -> Self {
        ForecastSchema {
            station: "station".into(),
            init_time: "init_time".into(),
            lead_minutes: "lead_minutes".into(),
            control: "control".into(),
            members: (1..=N_MEMBER_COLUMNS)
                .map(|k| vec![format!("m{k}"), format!("member_{k}")])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSchema {
    pub station: String,
    pub valid_time: String,
    pub value: String,
}

impl Default for ObservationSchema {
    fn default() -> Self {
        ObservationSchema {
            station: "station".into(),
            valid_time: "valid_time".into(),
            value: "value".into(),
        }
    }
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Result<usize, IoError> {
    names
        .iter()
        .find_map(|n| headers.iter().position(|h| h.trim() == *n))
        .ok_or_else(|| IoError::Schema(format!("missing column {}", names.join(" / "))))
}

fn number(record: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<f64, IoError> {
    let cell = record.get(idx).unwrap_or("").trim();
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| IoError::Row {
            row,
            message: format!("{name} '{cell}' is not a finite number"),
        })
}

/// Reads a forecast archive in file order. Rows are numbered from 1 after
/// the header.
pub fn read_forecasts<R: Read>(
    reader: R,
    schema: &ForecastSchema,
    variable: Variable,
) -> Result<Vec<EnsembleForecast>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IoError::Schema(e.to_string()))?
        .clone();
    let station = column(&headers, &[&schema.station])?;
    let init = column(&headers, &[&schema.init_time])?;
    let lead = column(&headers, &[&schema.lead_minutes])?;
    let control = column(&headers, &[&schema.control])?;
    let members = schema
        .members
        .iter()
        .map(|names| {
            column(
                &headers,
                &names.iter().map(String::as_str).collect::<Vec<_>>(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    if members.len() != N_MEMBER_COLUMNS {
        return Err(IoError::Schema(format!(
            "schema lists {} member columns, need {N_MEMBER_COLUMNS}",
            members.len()
        )));
    }
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| IoError::Row {
            row,
            message: e.to_string(),
        })?;
        let init_time = parse_time(record.get(init).unwrap_or("")).map_err(|e| IoError::Row {
            row,
            message: e.to_string(),
        })?;
        let lead_cell = record.get(lead).unwrap_or("").trim();
        let lead_minutes: u32 = lead_cell.parse().map_err(|_| IoError::Row {
            row,
            message: format!("lead '{lead_cell}' is not a non-negative integer"),
        })?;
        let mut ex = [0.0; N_MEMBER_COLUMNS];
        for (k, idx) in members.iter().enumerate() {
            ex[k] = number(&record, *idx, row, &schema.members[k][0])?;
        }
        let f = EnsembleForecast::new(
            record.get(station).unwrap_or("").to_string(),
            init_time,
            lead_minutes,
            number(&record, control, row, &schema.control)?,
            ex,
            variable,
        )
        .map_err(|e| IoError::Row {
            row,
            message: e.to_string(),
        })?;
        out.push(f);
    }
    Ok(out)
}

/// Reads observations; an empty value cell is a missing observation.
pub fn read_observations<R: Read>(
    reader: R,
    schema: &ObservationSchema,
    variable: Variable,
) -> Result<Vec<Observation>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IoError::Schema(e.to_string()))?
        .clone();
    let station = column(&headers, &[&schema.station])?;
    let valid = column(&headers, &[&schema.valid_time])?;
    let value = column(&headers, &[&schema.value])?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| IoError::Row {
            row,
            message: e.to_string(),
        })?;
        let t = parse_time(record.get(valid).unwrap_or("")).map_err(|e| IoError::Row {
            row,
            message: e.to_string(),
        })?;
        let v = if record.get(value).unwrap_or("").trim().is_empty() {
            None
        } else {
            Some(number(&record, value, row, &schema.value)?)
        };
        let o = Observation::new(
            record.get(station).unwrap_or("").to_string(),
            t,
            v,
            variable,
        )
        .map_err(|e| IoError::Row {
            row,
            message: e.to_string(),
        })?;
        out.push(o);
    }
    Ok(out)
}

pub fn write_forecasts<W: Write>(writer: W, forecasts: &[EnsembleForecast]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "station".to_string(),
        "init_time".into(),
        "lead_minutes".into(),
        "control".into(),
    ];
    header.extend((1..=N_MEMBER_COLUMNS).map(|k| format!("m{k}")));
    w.write_record(&header)?;
    for f in forecasts {
        let mut row = vec![
            f.station.clone(),
            format_time(f.init_time),
            f.lead_minutes.to_string(),
            f.control.to_string(),
        ];
        row.extend(f.exchangeable.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_observations<W: Write>(writer: W, observations: &[Observation]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["station", "valid_time", "value"])?;
    for o in observations {
        let v = o.value.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([o.station.as_str(), &format_time(o.valid_time), &v])?;
    }
    w.flush()?;
    Ok(())
}

pub const PREDICTION_HEADER: [&str; 8] = [
    "station",
    "init_time",
    "lead_minutes",
    "family",
    "param1",
    "param2",
    "aux_mlp",
    "aux_c1d",
];

pub fn write_predictions<W: Write>(
    writer: W,
    predictions: &[CalibratedForecast],
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PREDICTION_HEADER)?;
    for p in predictions {
        let [p1, p2] = p.distribution.params();
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            p.key.station.clone(),
            format_time(p.key.init_time),
            p.key.lead_minutes.to_string(),
            p.distribution.family().as_str().to_string(),
            p1.to_string(),
            p2.to_string(),
            opt(p.aux_mlp),
            opt(p.aux_c1d),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a prediction file into distributions keyed by case.
pub fn read_predictions<R: Read>(
    reader: R,
) -> anyhow::Result<BTreeMap<CaseKey, PredictiveDistribution>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx = PREDICTION_HEADER[..6]
        .iter()
        .map(|n| column(&headers, &[n]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let get = |k: usize| record.get(idx[k]).unwrap_or("");
        let family: Family = get(3).parse().map_err(|e| anyhow!("row {row}: {e}"))?;
        let key = CaseKey {
            station: get(0).to_string(),
            init_time: parse_time(get(1)).with_context(|| format!("row {row}"))?,
            lead_minutes: get(2).parse().with_context(|| format!("row {row}: lead"))?,
        };
        let p1 = number(&record, idx[4], row, "param1")?;
        let p2 = number(&record, idx[5], row, "param2")?;
        let d = PredictiveDistribution::from_params(family, p1, p2)
            .map_err(|e| anyhow!("row {row}: {e}"))?;
        if out.insert(key.clone(), d).is_some() {
            bail!(
                "row {row}: duplicate prediction for {} at {} + {} min",
                key.station,
                format_time(key.init_time),
                key.lead_minutes
            );
        }
    }
    Ok(out)
}

pub fn write_truth<W: Write>(writer: W, truth: &Truth) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["station", "valid_time", "family", "param1", "param2"])?;
    for ((station, t), d) in &truth.laws {
        let [p1, p2] = d.params();
        w.write_record([
            station.as_str(),
            &format_time(*t),
            d.family().as_str(),
            &p1.to_string(),
            &p2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(reader: R) -> anyhow::Result<Truth> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut truth = Truth::default();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let f = |k: usize| record.get(k).unwrap_or("");
        let family: Family = f(2).parse().map_err(|e| anyhow!("row {}: {e}", i + 1))?;
        let d = PredictiveDistribution::from_params(family, f(3).parse()?, f(4).parse()?)?;
        truth.laws.insert((f(0).to_string(), parse_time(f(1))?), d);
    }
    Ok(truth)
}

pub fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

pub fn create(path: &Path) -> anyhow::Result<std::io::BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(std::io::BufWriter::new(File::create(path).with_context(
        || format!("cannot create {}", path.display()),
    )?))
}
