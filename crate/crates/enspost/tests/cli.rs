use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn enspost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enspost"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = enspost(args);
    assert!(
        out.status.success(),
        "enspost {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> String {
    p.to_string_lossy().to_string()
}

struct Archive {
    _dir: TempDir,
    root: PathBuf,
}

impl Archive {
    fn simulate(variable: &str, days: u32, stations: u32) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&[
            "simulate",
            "--variable",
            variable,
            "--days",
            &days.to_string(),
            "--stations",
            &stations.to_string(),
            "--seed",
            "3",
            "--out",
            &s(&root.join("data")),
        ]);
        Archive { _dir: dir, root }
    }

    fn path(&self, rel: &str) -> String {
        s(&self.root.join(rel))
    }

    fn train(&self, variable: &str, methods: &str, seed: &str) {
        ok(&[
            "train",
            "--variable",
            variable,
            "--forecasts",
            &self.path("data/forecasts.csv"),
            "--observations",
            &self.path("data/observations.csv"),
            "--models",
            &self.path("models"),
            "--method",
            methods,
            "--train-days",
            "3",
            "--max-epochs",
            "2",
            "--seed",
            seed,
        ]);
    }
}

fn records(path: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn unknown_variable_is_a_usage_error() {
    let out = enspost(&[
        "simulate",
        "--variable",
        "humidity",
        "--out",
        "/tmp/never-written",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("humidity"));
}

#[test]
fn wrong_family_for_the_variable_is_a_configuration_error() {
    let a = Archive::simulate("wind", 4, 1);
    let out = enspost(&[
        "train",
        "--variable",
        "wind",
        "--forecasts",
        &a.path("data/forecasts.csv"),
        "--observations",
        &a.path("data/observations.csv"),
        "--models",
        &a.path("models"),
        "--method",
        "emos-cn0",
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn wind_pipeline_end_to_end() {
    let a = Archive::simulate("wind", 6, 1);
    a.train("wind", "emos-tn,mlps-tn,mlpex-tn", "1");
    let mut verify = vec![
        "verify".to_string(),
        "--variable".into(),
        "wind".into(),
        "--forecasts".into(),
        a.path("data/forecasts.csv"),
        "--observations".into(),
        a.path("data/observations.csv"),
        "--out".into(),
        a.path("report"),
    ];
    for m in ["emos-tn", "mlps-tn", "mlpex-tn"] {
        let out = a.path(&format!("pred/{m}.csv"));
        ok(&[
            "predict",
            "--variable",
            "wind",
            "--models",
            &a.path("models"),
            "--method",
            m,
            "--forecasts",
            &a.path("data/forecasts.csv"),
            "--out",
            &out,
        ]);
        // Three trained dates of one station.
        assert_eq!(records(&out).len(), 3 * 192, "{m}");
        verify.extend(["--predictions".to_string(), out]);
    }
    ok(&verify.iter().map(|s| s.as_str()).collect::<Vec<_>>());

    let by_lead = records(&a.path("report/scores_by_lead.csv"));
    assert_eq!(by_lead.len(), 192 * 4);
    let overall = records(&a.path("report/scores_overall.csv"));
    let raw = overall.iter().find(|r| &r[1] == "raw").unwrap();
    assert_eq!(raw[5].parse::<f64>().unwrap(), 0.0);
    assert_eq!(overall.len(), 4);

    let out = enspost(&["report", "--input", &a.path("report")]);
    assert!(out.status.success());
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("mlpex-tn") && table.contains("| raw |"));
    assert!(a.root.join("report/summary.md").exists());
}

#[test]
fn predicting_a_date_without_models_names_it() {
    let a = Archive::simulate("wind", 5, 1);
    a.train("wind", "emos-tn", "1");
    let out = enspost(&[
        "predict",
        "--variable",
        "wind",
        "--models",
        &a.path("models"),
        "--method",
        "emos-tn",
        "--forecasts",
        &a.path("data/forecasts.csv"),
        "--from",
        "2020-07-01",
        "--out",
        &a.path("p.csv"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("2020-07-01"), "{err}");

    let out = enspost(&[
        "predict",
        "--variable",
        "wind",
        "--models",
        &a.path("models"),
        "--method",
        "mlps-tn",
        "--forecasts",
        &a.path("data/forecasts.csv"),
        "--out",
        &a.path("p.csv"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no mlps-tn models"));
}

#[test]
fn manifests_are_reproducible_and_track_the_seed() {
    let a = Archive::simulate("wind", 4, 1);
    let manifest = || std::fs::read_to_string(a.root.join("models/emos-tn/manifest.json")).unwrap();
    let hash = |text: &str| {
        serde_json::from_str::<serde_json::Value>(text).unwrap()["config_hash"].clone()
    };
    a.train("wind", "emos-tn", "1");
    let first = manifest();
    a.train("wind", "emos-tn", "1");
    assert_eq!(manifest(), first);
    a.train("wind", "emos-tn", "2");
    assert_ne!(hash(&manifest()), hash(&first));
}

#[test]
fn irradiance_threshold_drops_night_cases() {
    let a = Archive::simulate("ghi", 3, 1);
    ok(&[
        "verify",
        "--variable",
        "ghi",
        "--forecasts",
        &a.path("data/forecasts.csv"),
        "--observations",
        &a.path("data/observations.csv"),
        "--min-obs",
        "7.5",
        "--out",
        &a.path("report"),
    ]);
    let observed: Vec<f64> = records(&a.path("data/observations.csv"))
        .iter()
        .filter_map(|r| r[2].parse::<f64>().ok())
        .collect();
    let day_obs = observed.iter().filter(|&&v| v >= 7.5).count();
    assert!(day_obs < observed.len());
    // Every valid time is verified by the runs covering it (1 or 2 runs).
    let overall = records(&a.path("report/scores_overall.csv"));
    let n: usize = overall[0][2].parse().unwrap();
    assert!(
        n > 0 && n <= 2 * day_obs,
        "{n} cases for {day_obs} daytime observations"
    );
    let by_lead = records(&a.path("report/scores_by_lead.csv"));
    // Leads that always verify at night are absent.
    assert!(by_lead.len() < 96);
}

#[test]
fn regional_irradiance_models_extrapolate_to_unseen_stations() {
    let a = Archive::simulate("ghi", 5, 3);
    let keep = |src: &str, dst: &str| {
        let mut rdr = csv::Reader::from_path(a.path(src)).unwrap();
        let mut w = csv::Writer::from_path(a.path(dst)).unwrap();
        w.write_record(rdr.headers().unwrap()).unwrap();
        for r in rdr.records() {
            let r = r.unwrap();
            if &r[0] != "S03" {
                w.write_record(&r).unwrap();
            }
        }
        w.flush().unwrap();
    };
    keep("data/forecasts.csv", "train_forecasts.csv");
    keep("data/observations.csv", "train_observations.csv");
    ok(&[
        "train",
        "--variable",
        "ghi",
        "--forecasts",
        &a.path("train_forecasts.csv"),
        "--observations",
        &a.path("train_observations.csv"),
        "--models",
        &a.path("models"),
        "--method",
        "emos-cn0",
        "--train-days",
        "3",
    ]);
    ok(&[
        "predict",
        "--variable",
        "ghi",
        "--models",
        &a.path("models"),
        "--method",
        "emos-cn0",
        "--forecasts",
        &a.path("data/forecasts.csv"),
        "--out",
        &a.path("p.csv"),
    ]);
    let rows = records(&a.path("p.csv"));
    let unseen = rows.iter().filter(|r| &r[0] == "S03").count();
    assert_eq!(unseen, 2 * 96);
}
