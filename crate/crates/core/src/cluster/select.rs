use serde::{Deserialize, Serialize};

use super::{dbi, kmeans, ts_kmeans_with_history, ClusterSpace, TsKMeansConfig};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::trajectory::{flatten, flatten_steps, DisplacementSeries, FlatDisplacement};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbiRow {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DbiTable {
    pub rows: Vec<DbiRow>,
}

impl DbiTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,dbi_mean,dbi_std,runs\n");
        for r in &self.rows {
            let runs: Vec<String> = r.runs.iter().map(|v| format!("{v:.12}")).collect();
            s.push_str(&format!("{},{:.12},{:.12},{}\n", r.k, r.mean, r.std, runs.join(";")));
        }
        s
    }
}

/// Picks the candidate with the lowest mean DBI over `runs` seeded runs.
///
/// `score(k, seed)` clusters once and returns its DBI. Ties go to the
/// smallest k; a single candidate is returned without being scored.
pub fn select_k_with(
    candidates: &[usize],
    runs: usize,
    seed: u64,
    mut score: impl FnMut(usize, u64) -> Result<f64>,
) -> Result<(usize, DbiTable)> {
    if runs == 0 {
        return Err(Error::invalid("select_k needs at least one run"));
    }
    let mut cands = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    match cands.as_slice() {
        [] => return Err(Error::invalid("no k candidates")),
        [only] => return Ok((*only, DbiTable::default())),
        _ => {}
    }
    let mut table = DbiTable::default();
    for &k in &cands {
        let mut vals = Vec::with_capacity(runs);
        for run in 0..runs {
            vals.push(score(k, derive_seed(seed, &format!("select-k/{k}"), run as u64))?);
        }
        let mean = vals.iter().sum::<f64>() / runs as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / runs as f64;
        table.rows.push(DbiRow {
            k,
            mean,
            std: var.sqrt(),
            runs: vals,
        });
    }
    let mut best = &table.rows[0];
    for row in &table.rows[1..] {
        if row.mean < best.mean {
            best = row;
        }
    }
    Ok((best.k, table))
}

/// Built-in clusterers over full displacement series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ClusterMethod {
    Kmeans { max_iter: usize, tol: f64 },
    TsKmeans(TsKMeansConfig),
}

impl Default for ClusterMethod {
    fn default() -> Self {
        ClusterMethod::Kmeans {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

impl ClusterMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ClusterMethod::Kmeans { .. } => "kmeans",
            ClusterMethod::TsKmeans(_) => "ts-kmeans",
        }
    }

    pub fn run(&self, data: &[DisplacementSeries], k: usize, seed: u64) -> Result<ClusterSpace> {
        match self {
            ClusterMethod::Kmeans { max_iter, tol } => {
                let flat: Vec<FlatDisplacement> = data.iter().map(flatten).collect();
                let (t_obs, t_pred) = data.first().map_or((0, 0), |d| (d.t_obs, d.t_pred));
                Ok(kmeans(&flat, k, seed, *max_iter, *tol)?.with_shape(t_obs, t_pred))
            }
            ClusterMethod::TsKmeans(cfg) => Ok(ts_kmeans_with_history(data, k, cfg, seed)?.0),
        }
    }
}

/// [`select_k_with`] for the built-in displacement clusterers.
pub fn select_k(
    data: &[DisplacementSeries],
    method: &ClusterMethod,
    candidates: &[usize],
    runs: usize,
    seed: u64,
) -> Result<(usize, DbiTable)> {
    let reps: Vec<Vec<f64>> = data.iter().map(|d| flatten_steps(&d.deltas)).collect();
    select_k_with(candidates, runs, seed, |k, s| {
        let space = method.run(data, k, s)?;
        dbi(&space, &reps)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate_unconditional() {
        let (k, t) = select_k_with(&[7], 3, 0, |_, _| panic!("not scored")).unwrap();
        assert_eq!(k, 7);
        assert!(t.rows.is_empty());
    }

    #[test]
    fn ties_pick_smallest() {
        let (k, t) = select_k_with(&[4, 2, 3], 2, 0, |_, _| Ok(0.5)).unwrap();
        assert_eq!(k, 2);
        assert_eq!(t.rows.len(), 3);
    }

    #[test]
    fn argmin_of_means() {
        let (k, _) = select_k_with(&[2, 3, 4], 5, 0, |k, _| Ok((k as f64 - 3.0).abs())).unwrap();
        assert_eq!(k, 3);
    }
}
