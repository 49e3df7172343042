use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{ClusterArtifact, Evaluation, ModelArtifact, RankedSample};
use super::plot;
use crate::error::{Error, Result};

/// Test samples drawn per run in the Top-3 overlay plots.
pub const PLOTS_PER_RUN: usize = 6;

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    write_text(path, std::str::from_utf8(&out).expect("json is utf-8"))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line)?);
        }
    }
    Ok(rows)
}

/// Layout of an output directory.
#[derive(Debug, Clone)]
pub struct OutDir {
    pub root: PathBuf,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn cluster(&self) -> PathBuf {
        self.root.join("cluster.json")
    }

    pub fn dbi(&self) -> PathBuf {
        self.root.join("dbi.csv")
    }

    pub fn model(&self, run: usize) -> PathBuf {
        self.root.join(format!("model-run{run}.json"))
    }

    pub fn proposals(&self, run: usize) -> PathBuf {
        self.root.join("proposals").join(format!("proposals-run{run}.jsonl"))
    }

    pub fn ranked(&self, run: usize) -> PathBuf {
        self.root.join("proposals").join(format!("ranked-run{run}.jsonl"))
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn plots(&self, run: usize) -> PathBuf {
        self.root.join("plots").join(format!("run{run}"))
    }

    /// Wall-clock timings; kept apart so the other artifacts stay reproducible.
    pub fn timing(&self) -> PathBuf {
        self.root.join("timing.json")
    }

    pub fn load_cluster(&self, cfg: &ExperimentConfig) -> Result<ClusterArtifact> {
        let c: ClusterArtifact = read_json(&self.cluster())?;
        c.check(cfg)?;
        Ok(c)
    }

    pub fn load_model(&self, cfg: &ExperimentConfig, run: usize, cluster: Option<&ClusterArtifact>) -> Result<ModelArtifact> {
        let m: ModelArtifact = read_json(&self.model(run))?;
        m.check(cfg, cluster)?;
        if m.run != run {
            return Err(Error::Lineage {
                expected: format!("run {run}"),
                found: format!("run {}", m.run),
            });
        }
        Ok(m)
    }

    pub fn save_cluster(&self, c: &ClusterArtifact) -> Result<()> {
        write_json(&self.cluster(), c)?;
        write_text(&self.dbi(), &c.dbi.to_csv())
    }

    pub fn save_ranked(&self, run: usize, ranked: &[RankedSample]) -> Result<()> {
        write_jsonl(&self.ranked(run), ranked)?;
        let dir = self.plots(run);
        for r in ranked.iter().take(PLOTS_PER_RUN) {
            let name: String = r
                .id
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                .collect();
            write_text(&dir.join(format!("{name}.svg")), &plot::top_k_svg(r, 3))?;
        }
        Ok(())
    }

    /// Writes every artifact of a finished evaluation.
    pub fn save_evaluation(&self, cfg: &ExperimentConfig, ev: &Evaluation) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        write_text(&self.config(), &cfg.to_json())?;
        if let Some(c) = &ev.cluster {
            self.save_cluster(c)?;
        }
        for (m, r) in ev.models.iter().zip(&ev.ranked) {
            write_json(&self.model(m.run), m)?;
            self.save_ranked(m.run, r)?;
        }
        write_json(&self.report_json(), &ev.report)?;
        write_text(&self.report_csv(), &ev.report.to_csv())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timing {
    pub stages: Vec<(String, f64)>,
}

impl Timing {
    pub fn record(&mut self, stage: &str, start: std::time::Instant) {
        self.stages.push((stage.to_string(), start.elapsed().as_secs_f64()));
    }
}
