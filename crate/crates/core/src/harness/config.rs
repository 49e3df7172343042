use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::TsKMeansConfig;
use crate::error::{Error, Result};
use crate::forecasters::ForecasterConfig;
use crate::fp_scgan::FpScGanConfig;
use crate::ingest::{ScenarioSpec, SplitMode, SplitPlan, DEFAULT_T_OBS, DEFAULT_T_PRED};
use crate::ranking::RankerConfig;
use crate::trajectory::DEFAULT_DT;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSource {
    pub scenario: ScenarioSpec,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// TrajNet text files, one dataset each.
    pub paths: Vec<PathBuf>,
    /// Synthetic corpus used when no paths are given.
    pub synth: Option<SynthSource>,
    pub dt: f64,
    pub t_obs: usize,
    pub t_pred: usize,
    pub overlap: bool,
    pub split: SplitPlan,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            paths: Vec::new(),
            synth: None,
            dt: DEFAULT_DT,
            t_obs: DEFAULT_T_OBS,
            t_pred: DEFAULT_T_PRED,
            overlap: false,
            split: SplitPlan {
                mode: SplitMode::TrainTestSplit {
                    fractions: [0.7, 0.1, 0.2],
                },
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClustererKind {
    #[default]
    Kmeans,
    TsKmeans,
    FpScgan,
}

impl ClustererKind {
    pub fn name(self) -> &'static str {
        match self {
            ClustererKind::Kmeans => "kmeans",
            ClustererKind::TsKmeans => "ts-kmeans",
            ClustererKind::FpScgan => "fp-scgan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub method: ClustererKind,
    /// Fixed K; when absent K is chosen from `k_grid` by the lowest mean DBI.
    pub k: Option<usize>,
    pub k_grid: Vec<usize>,
    /// Seeded clusterings per candidate K.
    pub runs: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub ts_kmeans: TsKMeansConfig,
    pub fp_scgan: FpScGanConfig,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            method: ClustererKind::Kmeans,
            k: None,
            k_grid: (2..=8).collect(),
            runs: 3,
            kmeans_max_iter: 100,
            kmeans_tol: 1e-6,
            ts_kmeans: TsKMeansConfig::default(),
            fp_scgan: FpScGanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub top_k: usize,
    /// Samples drawn per test case for context-free generative models.
    pub samples: usize,
    /// Proposal draws averaged per cluster (1 = one shared noise draw).
    pub n_z: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            top_k: 3,
            samples: 3,
            n_z: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub data: DataConfig,
    pub clustering: ClusteringConfig,
    pub forecaster: ForecasterConfig,
    pub ranking: RankerConfig,
    pub metrics: MetricsConfig,
    /// Seeded runs for trained models; deterministic baselines use one.
    pub runs: usize,
    /// Excluded from the config hash.
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "experiment".into(),
            data: DataConfig::default(),
            clustering: ClusteringConfig::default(),
            forecaster: ForecasterConfig::default(),
            ranking: RankerConfig::default(),
            metrics: MetricsConfig::default(),
            runs: 5,
            output: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn digest(value: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every section; all failures are reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let d = &self.data;
        if d.paths.is_empty() && d.synth.is_none() {
            return Err(Error::Config("data needs input paths or a synth source".into()));
        }
        for p in &d.paths {
            if !p.is_file() {
                return Err(Error::Config(format!("data path {} does not exist", p.display())));
            }
        }
        if let Some(s) = &d.synth {
            s.scenario.validate().map_err(cfg)?;
            if s.n == 0 {
                return Err(Error::Config("synth n must be positive".into()));
            }
            if s.scenario.t_obs != d.t_obs || s.scenario.t_pred != d.t_pred {
                return Err(Error::Config("synth scenario window differs from data t_obs / t_pred".into()));
            }
        }
        if d.t_obs == 0 || d.t_pred == 0 || !(d.dt > 0.0) {
            return Err(Error::Config("t_obs, t_pred and dt must be positive".into()));
        }
        d.split.validate().map_err(cfg)?;
        let c = &self.clustering;
        match c.k {
            Some(k) if k == 0 => return Err(Error::Config("clustering k must be positive".into())),
            None if c.k_grid.is_empty() => return Err(Error::Config("clustering needs k or a k_grid".into())),
            _ => {}
        }
        if c.k_grid.contains(&0) || c.runs == 0 {
            return Err(Error::Config("k_grid entries and runs must be positive".into()));
        }
        if c.method == ClustererKind::FpScgan && (c.k == Some(1) || c.k.is_none() && c.k_grid.contains(&1)) {
            return Err(Error::Config("fp-scgan needs k >= 2".into()));
        }
        if !(c.ts_kmeans.gamma > 0.0) {
            return Err(Error::Config("soft-DTW gamma must be positive".into()));
        }
        c.fp_scgan.validate()?;
        self.forecaster.validate()?;
        if self.forecaster.t_obs != d.t_obs || self.forecaster.t_pred != d.t_pred {
            return Err(Error::Config("forecaster t_obs / t_pred differ from data".into()));
        }
        self.ranking.validate()?;
        let m = &self.metrics;
        if m.top_k == 0 || m.samples < m.top_k || m.n_z == 0 {
            return Err(Error::Config("metrics need top_k >= 1, samples >= top_k and n_z >= 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be positive".into()));
        }
        Ok(())
    }

    /// Hash of the data section and seed.
    pub fn data_hash(&self) -> String {
        digest(&(&self.data, self.seed))
    }

    /// Hash of everything the clustering stage depends on.
    pub fn cluster_hash(&self) -> String {
        digest(&(&self.data, &self.clustering, self.seed))
    }

    /// Hash of everything the training stage depends on.
    pub fn model_hash(&self) -> String {
        digest(&(&self.data, &self.clustering, &self.forecaster, &self.ranking, self.seed))
    }

    /// Hash over the canonical serialization, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        digest(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth() -> ExperimentConfig {
        ExperimentConfig {
            data: DataConfig {
                synth: Some(SynthSource {
                    scenario: ScenarioSpec::two_regime(),
                    n: 50,
                    seed: 1,
                }),
                ..DataConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_synth_config_validates() {
        synth().validate().unwrap();
    }

    #[test]
    fn missing_path_is_a_config_error() {
        let mut c = synth();
        c.data.paths = vec![PathBuf::from("/definitely/not/here.txt")];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn hash_ignores_output_only() {
        let a = synth();
        let mut b = a.clone();
        b.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 9;
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.cluster_hash(), b.cluster_hash());
    }

    #[test]
    fn round_trips_through_json() {
        let a = synth();
        let b: ExperimentConfig = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
    }
}
