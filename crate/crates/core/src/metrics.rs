//! Position-space errors and the Top-k protocols.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecasters::ProposalSet;
use crate::trajectory::{integrate_steps, Point};

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn check(pred: &[Point], truth: &[Point]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "prediction",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid("cannot score an empty trajectory"));
    }
    Ok(())
}

/// Mean Euclidean distance between matching positions.
pub fn ade(pred: &[Point], truth: &[Point]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(&p, &t)| dist(p, t)).sum::<f64>() / truth.len() as f64)
}

/// Distance between the final positions.
pub fn fde(pred: &[Point], truth: &[Point]) -> Result<f64> {
    check(pred, truth)?;
    Ok(dist(pred[pred.len() - 1], truth[truth.len() - 1]))
}

/// ADE and FDE of future displacements integrated from a shared origin.
pub fn displacement_errors(origin: Point, pred: &[Point], truth: &[Point]) -> Result<(f64, f64)> {
    let p = integrate_steps(pred, origin);
    let t = integrate_steps(truth, origin);
    Ok((ade(&p, &t)?, fde(&p, &t)?))
}

fn best_of(origin: Point, candidates: &[&[Point]], truth: &[Point]) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for c in candidates {
        let e = displacement_errors(origin, c, truth)?;
        if best.is_none_or(|b| e.0 < b.0) {
            best = Some(e);
        }
    }
    best.ok_or_else(|| Error::invalid("no candidates to score"))
}

/// Indices of proposals by descending probability, ties to the smaller cluster id.
pub fn likelihood_order(set: &ProposalSet) -> Result<Vec<usize>> {
    let p = set
        .probabilities
        .as_ref()
        .ok_or_else(|| Error::invalid("proposal set has no probabilities"))?;
    let key = |i: usize| set.proposals[i].cluster.unwrap_or(i);
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(key(a).cmp(&key(b))));
    Ok(idx)
}

/// Best (ADE, FDE) among the `k` most probable proposals; the FDE comes from
/// the proposal with the lowest ADE.
pub fn topk_by_likelihood(set: &ProposalSet, truth: &[Point], k: usize) -> Result<(f64, f64)> {
    if k == 0 || k > set.len() {
        return Err(Error::invalid(format!("top-{k} over {} proposals", set.len())));
    }
    let order = likelihood_order(set)?;
    let picked: Vec<&[Point]> = order[..k].iter().map(|&i| set.proposals[i].deltas.as_slice()).collect();
    best_of(set.origin, &picked, truth)
}

/// Best (ADE, FDE) among the first `k` samples in generation order.
pub fn topk_by_sampling(set: &ProposalSet, truth: &[Point], k: usize) -> Result<(f64, f64)> {
    if k == 0 || k > set.len() {
        return Err(Error::invalid(format!("top-{k} over {} samples", set.len())));
    }
    let picked: Vec<&[Point]> = set.proposals[..k].iter().map(|p| p.deltas.as_slice()).collect();
    best_of(set.origin, &picked, truth)
}

/// Mean and sample standard deviation (zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Per-run test-set means for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub top1_ade: f64,
    pub top1_fde: f64,
    pub top3_ade: f64,
    pub top3_fde: f64,
    pub ranking_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub dataset: String,
    pub model: String,
    pub ranking: String,
    pub clustering: String,
    pub k: usize,
    pub top1_ade: MeanStd,
    pub top1_fde: MeanStd,
    pub top3_ade: MeanStd,
    pub top3_fde: MeanStd,
    pub ranking_accuracy: Option<MeanStd>,
    pub runs: Vec<RunMetrics>,
}

impl EvalRow {
    pub fn from_runs(
        dataset: impl Into<String>,
        model: impl Into<String>,
        ranking: impl Into<String>,
        clustering: impl Into<String>,
        k: usize,
        runs: Vec<RunMetrics>,
    ) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::invalid("evaluation row needs at least one run"));
        }
        let col = |f: fn(&RunMetrics) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        let acc: Option<Vec<f64>> = runs.iter().map(|r| r.ranking_accuracy).collect();
        let row = Self {
            dataset: dataset.into(),
            model: model.into(),
            ranking: ranking.into(),
            clustering: clustering.into(),
            k,
            top1_ade: col(|r| r.top1_ade),
            top1_fde: col(|r| r.top1_fde),
            top3_ade: col(|r| r.top3_ade),
            top3_fde: col(|r| r.top3_fde),
            ranking_accuracy: acc.map(|a| MeanStd::of(&a)),
            runs,
        };
        row.validate()?;
        Ok(row)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("top1_ade", self.top1_ade),
            ("top1_fde", self.top1_fde),
            ("top3_ade", self.top3_ade),
            ("top3_fde", self.top3_fde),
        ] {
            if !(v.mean.is_finite() && v.mean >= 0.0 && v.std.is_finite()) {
                return Err(Error::invalid(format!("{name} is not a finite non-negative value")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub seed: u64,
    pub lambda: f64,
    pub beta: f64,
    pub tau: f64,
    pub rows: Vec<EvalRow>,
}

pub const CSV_HEADER: &str = "dataset,model,ranking,clustering,k,top1_ade,top1_ade_std,top1_fde,top1_fde_std,top3_ade,top3_ade_std,top3_fde,top3_fde_std,ranking_accuracy,ranking_accuracy_std,runs,seeds,config_hash";

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let (acc, acc_std) = match r.ranking_accuracy {
                Some(a) => (format!("{:.4}", a.mean), format!("{:.4}", a.std)),
                None => (String::new(), String::new()),
            };
            let seeds: Vec<String> = r.runs.iter().map(|x| x.seed.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}\n",
                r.dataset,
                r.model,
                r.ranking,
                r.clustering,
                r.k,
                r.top1_ade.mean,
                r.top1_ade.std,
                r.top1_fde.mean,
                r.top1_fde.std,
                r.top3_ade.mean,
                r.top3_ade.std,
                r.top3_fde.mean,
                r.top3_fde.std,
                acc,
                acc_std,
                r.runs.len(),
                seeds.join(";"),
                self.config_hash
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
