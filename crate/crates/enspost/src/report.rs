//! Verification report files: score tables plus plot-ready histograms.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use enspost_core::verify::{ScoreRow, VerificationReport};

use crate::io::create;

pub const SCORES_BY_LEAD: &str = "scores_by_lead.csv";
pub const SCORES_OVERALL: &str = "scores_overall.csv";
pub const PIT_HISTOGRAM: &str = "pit_histogram.csv";
pub const RANK_HISTOGRAM: &str = "rank_histogram.csv";
pub const UNIFORMITY: &str = "uniformity.csv";
pub const SUMMARY: &str = "summary.md";

const SCORE_HEADER: [&str; 10] = [
    "lead_minutes",
    "method",
    "n_cases",
    "mean_crps",
    "mean_crps_ref",
    "crpss",
    "coverage",
    "mean_width",
    "mae_median",
    "rmse_mean",
];

fn score_record(r: &ScoreRow) -> Vec<String> {
    vec![
        r.lead_minutes
            .map(|l| l.to_string())
            .unwrap_or_else(|| "all".into()),
        r.method.clone(),
        r.n_cases.to_string(),
        r.mean_crps.to_string(),
        r.mean_crps_ref.to_string(),
        r.crpss.to_string(),
        r.coverage.to_string(),
        r.mean_width.to_string(),
        r.mae_median.to_string(),
        r.rmse_mean.to_string(),
    ]
}

fn write_scores(path: &Path, rows: &[ScoreRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(SCORE_HEADER)?;
    for r in rows {
        w.write_record(score_record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every report file into `dir`.
pub fn write_report(dir: &Path, report: &VerificationReport) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_scores(&dir.join(SCORES_BY_LEAD), &report.rows)?;
    write_scores(&dir.join(SCORES_OVERALL), &report.overall)?;

    let mut w = csv::Writer::from_writer(create(&dir.join(PIT_HISTOGRAM))?);
    w.write_record(["method", "bin", "lower", "upper", "count"])?;
    for d in &report.diagnostics {
        let bins = d.pit_histogram.len();
        for (i, c) in d.pit_histogram.iter().enumerate() {
            w.write_record([
                d.method.clone(),
                (i + 1).to_string(),
                (i as f64 / bins as f64).to_string(),
                ((i + 1) as f64 / bins as f64).to_string(),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(&dir.join(RANK_HISTOGRAM))?);
    w.write_record(["rank", "lower", "upper", "count"])?;
    for (i, c) in report.rank_counts.iter().enumerate() {
        let r = i + 1;
        w.write_record([
            r.to_string(),
            (r as f64 - 0.5).to_string(),
            (r as f64 + 0.5).to_string(),
            c.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(&dir.join(UNIFORMITY))?);
    w.write_record(["method", "test", "statistic", "p_value", "n"])?;
    for d in &report.diagnostics {
        let u = &d.uniformity;
        w.write_record([
            d.method.clone(),
            u.test.clone(),
            u.statistic.to_string(),
            u.p_value.to_string(),
            u.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverallLine {
    pub method: String,
    pub n_cases: usize,
    pub mean_crps: f64,
    pub crpss: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub mae_median: f64,
    pub rmse_mean: f64,
    pub ks_p_value: Option<f64>,
}

/// Reads the overall scores and uniformity p-values of a report directory.
pub fn read_overall(dir: &Path) -> anyhow::Result<Vec<OverallLine>> {
    let path = dir.join(SCORES_OVERALL);
    let mut rdr =
        csv::Reader::from_path(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut p_values = std::collections::BTreeMap::new();
    let upath = dir.join(UNIFORMITY);
    if upath.exists() {
        let mut u = csv::Reader::from_path(&upath)?;
        for r in u.records() {
            let r = r?;
            p_values.insert(r[0].to_string(), r[3].parse::<f64>().ok());
        }
    }
    let mut out = Vec::new();
    for r in rdr.records() {
        let r = r?;
        let f = |i: usize| -> anyhow::Result<f64> {
            r[i].parse::<f64>().with_context(|| {
                format!(
                    "{}: column {} is not a number",
                    path.display(),
                    SCORE_HEADER[i]
                )
            })
        };
        out.push(OverallLine {
            method: r[1].to_string(),
            n_cases: r[2].parse()?,
            mean_crps: f(3)?,
            crpss: f(5)?,
            coverage: f(6)?,
            mean_width: f(7)?,
            mae_median: f(8)?,
            rmse_mean: f(9)?,
            ks_p_value: p_values.get(&r[1]).copied().flatten(),
        });
    }
    Ok(out)
}

/// Markdown table of the overall scores.
pub fn summary_table(lines: &[OverallLine]) -> String {
    let mut s = String::new();
    s.push_str("| method | cases | mean CRPS | CRPSS | coverage % | width | MAE | RMSE | KS p |\n");
    s.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for l in lines {
        let p = l
            .ks_p_value
            .map(|p| format!("{p:.3}"))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} | {:.4} | {:.2} | {:.3} | {:.4} | {:.4} | {} |",
            l.method,
            l.n_cases,
            l.mean_crps,
            l.crpss,
            l.coverage,
            l.mean_width,
            l.mae_median,
            l.rmse_mean,
            p
        );
    }
    s
}
