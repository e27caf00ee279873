//! On-disk model artifacts: `models/<method>/<scope>/<valid_date>/<pool>.json`
//! plus one manifest per method.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use enspost_core::pipeline::{
    pool_name, EmosArtifact, EmosPoolFit, MethodArtifact, MethodSpec, MlpArtifact, MlpExArtifact,
    PipelineConfig, PointNet, Pooling, ScaledNet,
};
use enspost_core::Family;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::{format_date, parse_date};

pub const MANIFEST: &str = "manifest.json";
pub const DESCRIPTOR: &str = "artifact.json";
pub const STORE_FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct HashInput<'a> {
    config: &'a PipelineConfig,
    method: String,
    seed: u64,
}

/// Hash of every setting that influences training.
pub fn config_hash(config: &PipelineConfig, method: &MethodSpec, seed: u64) -> String {
    let input = HashInput {
        config,
        method: method.name(),
        seed,
    };
    sha256_hex(&serde_json::to_vec(&input).expect("config serializes"))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("artifact serializes");
    s.push(b'\n');
    s
}

/// Lists the pool files of one artifact directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Descriptor {
    method: String,
    family: Family,
    pooling: Pooling,
    files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scope: String,
    pub valid_date: String,
    pub config_hash: String,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub method: String,
    pub config: PipelineConfig,
    pub seed: u64,
    pub config_hash: String,
    /// Sorted by (scope, valid date).
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(config: &PipelineConfig, method: &MethodSpec, seed: u64) -> Self {
        Manifest {
            format_version: STORE_FORMAT_VERSION,
            method: method.name(),
            config: config.clone(),
            seed,
            config_hash: config_hash(config, method, seed),
            entries: Vec::new(),
        }
    }

    /// Adds or replaces the entry of (scope, date).
    pub fn upsert(&mut self, entry: ManifestEntry) {
        self.entries
            .retain(|e| !(e.scope == entry.scope && e.valid_date == entry.valid_date));
        self.entries.push(entry);
        self.entries
            .sort_by(|a, b| (&a.scope, &a.valid_date).cmp(&(&b.scope, &b.valid_date)));
    }
}

#[derive(Debug, Clone)]
pub struct ModelStore {
    root: PathBuf,
}

impl ModelStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ModelStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn method_dir(&self, method: &str) -> PathBuf {
        self.root.join(method)
    }

    pub fn artifact_dir(&self, method: &str, scope: &str, day: i64) -> PathBuf {
        self.method_dir(method).join(scope).join(format_date(day))
    }

    pub fn manifest_path(&self, method: &str) -> PathBuf {
        self.method_dir(method).join(MANIFEST)
    }

    pub fn read_manifest(&self, method: &str) -> anyhow::Result<Option<Manifest>> {
        let path = self.manifest_path(method);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        Ok(Some(serde_json::from_slice(&text).with_context(|| {
            format!("malformed manifest {}", path.display())
        })?))
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> anyhow::Result<()> {
        let path = self.manifest_path(&manifest.method);
        fs::create_dir_all(path.parent().expect("method dir"))?;
        fs::write(&path, to_json(manifest))
            .with_context(|| format!("cannot write {}", path.display()))
    }

    /// Writes one artifact and returns its manifest entry.
    pub fn save(
        &self,
        method: &str,
        scope: &str,
        day: i64,
        artifact: &MethodArtifact,
        config_hash: &str,
    ) -> anyhow::Result<ManifestEntry> {
        let dir = self.artifact_dir(method, scope, day);
        if dir.exists() {
            fs::remove_dir_all(&dir)
                .with_context(|| format!("cannot replace {}", dir.display()))?;
        }
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        let half = |nets: &BTreeMap<u32, ScaledNet>, files: &mut Vec<(String, Vec<u8>)>| {
            for (pool, net) in nets {
                files.push((
                    format!("{}.json", pool_name(*pool, Pooling::HalfDayPooled)),
                    to_json(net),
                ));
            }
        };
        let pooling = match artifact {
            MethodArtifact::Emos(a) => {
                for (pool, fit) in &a.pools {
                    files.push((
                        format!("{}.json", pool_name(*pool, a.pooling)),
                        to_json(fit),
                    ));
                }
                a.pooling
            }
            MethodArtifact::MlpS(a) => {
                half(&a.nets, &mut files);
                Pooling::HalfDayPooled
            }
            MethodArtifact::Mlpex(a) => {
                half(&a.nets, &mut files);
                files.push(("aux_mlp.json".into(), to_json(&a.aux_mlp)));
                files.push(("aux_c1d.json".into(), to_json(&a.aux_c1d)));
                Pooling::HalfDayPooled
            }
        };
        let descriptor = Descriptor {
            method: artifact.kind().as_str().to_string(),
            family: artifact.family(),
            pooling,
            files: files.iter().map(|(n, _)| n.clone()).collect(),
        };
        files.push((DESCRIPTOR.into(), to_json(&descriptor)));
        let mut entries = Vec::with_capacity(files.len());
        for (name, bytes) in &files {
            let path = dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
            let rel = path.strip_prefix(&self.root).unwrap_or(&path);
            entries.push(FileEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_hex(bytes),
            });
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(ManifestEntry {
            scope: scope.to_string(),
            valid_date: format_date(day),
            config_hash: config_hash.to_string(),
            files: entries,
        })
    }

    fn read<T: DeserializeOwned>(dir: &Path, name: &str) -> anyhow::Result<T> {
        let path = dir.join(name);
        let bytes = fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_slice(&bytes)
            .with_context(|| format!("malformed artifact {}", path.display()))
    }

    pub fn exists(&self, method: &str, scope: &str, day: i64) -> bool {
        self.artifact_dir(method, scope, day)
            .join(DESCRIPTOR)
            .exists()
    }

    pub fn load(&self, method: &str, scope: &str, day: i64) -> anyhow::Result<MethodArtifact> {
        let dir = self.artifact_dir(method, scope, day);
        if !self.exists(method, scope, day) {
            bail!(
                "no {method} model for scope {scope} and date {} (expected {})",
                format_date(day),
                dir.display()
            );
        }
        let d: Descriptor = Self::read(&dir, DESCRIPTOR)?;
        let pool_of_file = |name: &str| -> anyhow::Result<u32> {
            let stem = name.trim_end_matches(".json");
            match (d.pooling, stem) {
                (Pooling::HalfDayPooled, "h00-24") => Ok(0),
                (Pooling::HalfDayPooled, "h24-48") => Ok(1440),
                (Pooling::PerLeadTime, s) if s.starts_with("lead") => Ok(s[4..].parse()?),
                _ => bail!("unexpected artifact file {name} in {}", dir.display()),
            }
        };
        let pool_files = d.files.iter().filter(|f| !f.starts_with("aux_"));
        Ok(match d.method.as_str() {
            "emos" => {
                let mut pools = BTreeMap::new();
                for f in pool_files {
                    pools.insert(pool_of_file(f)?, Self::read::<EmosPoolFit>(&dir, f)?);
                }
                MethodArtifact::Emos(EmosArtifact {
                    family: d.family,
                    pooling: d.pooling,
                    pools,
                })
            }
            "mlps" | "mlpex" => {
                let mut nets = BTreeMap::new();
                for f in pool_files {
                    nets.insert(pool_of_file(f)?, Self::read::<ScaledNet>(&dir, f)?);
                }
                if d.method == "mlps" {
                    MethodArtifact::MlpS(MlpArtifact {
                        family: d.family,
                        nets,
                    })
                } else {
                    MethodArtifact::Mlpex(MlpExArtifact {
                        family: d.family,
                        nets,
                        aux_mlp: Self::read::<PointNet>(&dir, "aux_mlp.json")?,
                        aux_c1d: Self::read::<PointNet>(&dir, "aux_c1d.json")?,
                    })
                }
            }
            other => bail!(
                "unknown method '{other}' in {}",
                dir.join(DESCRIPTOR).display()
            ),
        })
    }

    /// Valid dates with a stored artifact for (method, scope), ascending.
    pub fn dates(&self, method: &str, scope: &str) -> anyhow::Result<Vec<i64>> {
        let dir = self.method_dir(method).join(scope);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut days = Vec::new();
        for e in fs::read_dir(&dir)? {
            let name = e?.file_name().to_string_lossy().to_string();
            if let Ok(d) = parse_date(&name) {
                days.push(d);
            }
        }
        days.sort_unstable();
        Ok(days)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use enspost_core::emos::{EmosParams, TnEmosParams};

    #[test]
    fn hash_tracks_every_setting() {
        let cfg = PipelineConfig::wind_paper();
        let m = MethodSpec::parse("mlpex-tn").unwrap();
        let h = config_hash(&cfg, &m, 1);
        assert_eq!(h, config_hash(&cfg, &m, 1));
        assert_eq!(h.len(), 64);
        let mut other = cfg.clone();
        other.aux_c1d.slices.shift = 3;
        assert_ne!(h, config_hash(&other, &m, 1));
        let mut other = cfg.clone();
        other.mlp.optimizer.initial_lr = 0.011;
        assert_ne!(h, config_hash(&other, &m, 1));
        assert_ne!(h, config_hash(&cfg, &m, 2));
        assert_ne!(
            h,
            config_hash(&cfg, &MethodSpec::parse("mlps-tn").unwrap(), 1)
        );
    }

    #[test]
    fn emos_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = ModelStore::new(dir.path());
        let fit = |a0: f64| EmosPoolFit {
            params: EmosParams::Tn(TnEmosParams {
                a0,
                a_ctrl: 0.3,
                a_ens: 0.9,
                b0: 1.0,
                b1: 0.2,
            }),
            mean_crps: 0.5,
            n_cases: 50,
            converged: true,
            degenerate: false,
        };
        let art = MethodArtifact::Emos(EmosArtifact {
            family: Family::Tn,
            pooling: Pooling::PerLeadTime,
            pools: [(0, fit(0.1)), (15, fit(0.2))].into_iter().collect(),
        });
        let entry = store.save("emos-tn", "S01", 18444, &art, "abc").unwrap();
        assert_eq!(entry.files.len(), 3);
        assert!(entry
            .files
            .iter()
            .any(|f| f.path == "emos-tn/S01/2020-07-01/lead0015.json"));
        assert_eq!(store.load("emos-tn", "S01", 18444).unwrap(), art);
        assert_eq!(store.dates("emos-tn", "S01").unwrap(), vec![18444]);
        let err = store.load("emos-tn", "S01", 18445).unwrap_err().to_string();
        assert!(err.contains("2020-07-02"), "{err}");
    }
}
