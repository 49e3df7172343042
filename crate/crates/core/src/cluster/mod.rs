//! Clustering of displacement series: Euclidean k-Means on flattened series,
//! soft-DTW time-series k-Means, Davies–Bouldin model selection and the
//! shared [`ClusterSpace`] consumed by the forecasters and rankers.

mod align;
mod dbi;
mod kmeans;
mod select;
mod softdtw;
mod tskmeans;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::trajectory::{flatten_steps, DisplacementSeries, FlatDisplacement, Standardizer};

pub use align::{align_labels, brute_force_alignment, hungarian_max, overlap};
pub use dbi::dbi;
pub use kmeans::{kmeans, kmeans_with_history, lloyd, LloydFit};
pub use select::{select_k, select_k_with, ClusterMethod, DbiRow, DbiTable};
pub use softdtw::{dtw, soft_dtw, soft_dtw_divergence, soft_dtw_grad, soft_dtw_steps};
pub use tskmeans::{soft_dtw_barycenter, ts_kmeans, ts_kmeans_with_history, TsKMeansConfig};

pub const SPACE_FORMAT_VERSION: u32 = 1;

/// Distance under which a [`ClusterSpace`] was built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Metric {
    /// Squared Euclidean distance on interleaved flat displacement vectors.
    EuclideanFlat,
    /// Soft-DTW between 2D step sequences.
    SoftDtw { gamma: f64 },
    /// Euclidean distance between learned feature vectors.
    FeatureL2,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::EuclideanFlat => "euclidean-flat",
            Metric::SoftDtw { .. } => "soft-dtw",
            Metric::FeatureL2 => "feature-l2",
        }
    }
}

/// A sample offered to [`assign`]; must match the space's metric.
#[derive(Debug, Clone, Copy)]
pub enum Sample<'a> {
    Series(&'a DisplacementSeries),
    Flat(&'a FlatDisplacement),
    Feature(&'a [f64]),
}

/// K-partition of a sample set plus the centroids that define it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpace {
    pub format_version: u32,
    /// Content hash, set by [`ClusterSpace::seal`].
    pub id: String,
    pub method: String,
    pub k: usize,
    pub metric: Metric,
    /// Flat centroids: interleaved steps for displacement metrics, raw vectors for features.
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub member_index: Vec<Vec<usize>>,
    pub empirical_weights: Vec<f64>,
    pub t_obs: usize,
    pub t_pred: usize,
    pub standardizer: Option<Standardizer>,
}

impl ClusterSpace {
    pub fn from_assignments(
        method: impl Into<String>,
        metric: Metric,
        centroids: Vec<Vec<f64>>,
        assignments: Vec<usize>,
        t_obs: usize,
        t_pred: usize,
    ) -> Result<Self> {
        let k = centroids.len();
        if k == 0 {
            return Err(Error::invalid("cluster space needs at least one centroid"));
        }
        let mut member_index = vec![Vec::new(); k];
        for (i, &c) in assignments.iter().enumerate() {
            if c >= k {
                return Err(Error::ClusterOutOfRange { id: c, k });
            }
            member_index[c].push(i);
        }
        let n = assignments.len().max(1) as f64;
        let empirical_weights = member_index.iter().map(|m| m.len() as f64 / n).collect();
        let mut space = Self {
            format_version: SPACE_FORMAT_VERSION,
            id: String::new(),
            method: method.into(),
            k,
            metric,
            centroids,
            assignments,
            member_index,
            empirical_weights,
            t_obs,
            t_pred,
            standardizer: None,
        };
        space.seal();
        Ok(space)
    }

    /// Records the observed/future split of the clustered series and reseals.
    pub fn with_shape(mut self, t_obs: usize, t_pred: usize) -> Self {
        self.t_obs = t_obs;
        self.t_pred = t_pred;
        self.seal();
        self
    }

    /// Recomputes the content id. Call after any mutation.
    pub fn seal(&mut self) {
        self.id.clear();
        let bytes = serde_json::to_vec(self).expect("cluster space serializes");
        self.id = hex::encode(&Sha256::digest(&bytes)[..8]);
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    /// Checks the partition invariants.
    pub fn validate(&self) -> Result<()> {
        if self.centroids.len() != self.k || self.member_index.len() != self.k {
            return Err(Error::invalid("centroid count differs from k"));
        }
        let mut seen = vec![false; self.n()];
        for (c, members) in self.member_index.iter().enumerate() {
            for &i in members {
                if i >= seen.len() || seen[i] || self.assignments[i] != c {
                    return Err(Error::invalid(format!("sample {i} breaks the partition")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("a sample belongs to no cluster"));
        }
        if self.n() > 0 {
            let total: f64 = self.empirical_weights.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("cluster weights sum to {total}")));
            }
        }
        Ok(())
    }

    /// Centroid restricted to the future segment (last `t_pred` steps).
    /// Only meaningful for displacement metrics.
    pub fn future_centroid(&self, c: usize) -> Result<&[f64]> {
        if matches!(self.metric, Metric::FeatureL2) {
            return Err(Error::RepresentationMismatch("feature-l2"));
        }
        let cen = self
            .centroids
            .get(c)
            .ok_or(Error::ClusterOutOfRange { id: c, k: self.k })?;
        let start = 2 * self.t_obs;
        if cen.len() != 2 * (self.t_obs + self.t_pred) {
            return Err(Error::LengthMismatch {
                what: "centroid",
                expected: 2 * (self.t_obs + self.t_pred),
                actual: cen.len(),
            });
        }
        Ok(&cen[start..])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let space: Self = serde_json::from_str(s)?;
        if space.format_version != SPACE_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported cluster space format version {}",
                space.format_version
            )));
        }
        space.validate()?;
        Ok(space)
    }
}

/// Squared Euclidean distance.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance.
pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

fn nearest(centroids: &[Vec<f64>], mut dist: impl FnMut(&[f64]) -> f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, cen) in centroids.iter().enumerate() {
        let d = dist(cen);
        // strict comparison keeps the smallest id on ties
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Nearest centroid under the space's metric, ties to the smallest id.
pub fn assign(space: &ClusterSpace, sample: Sample<'_>) -> Result<usize> {
    let expect_len = |len: usize| -> Result<()> {
        let want = space.centroids[0].len();
        if len != want {
            return Err(Error::LengthMismatch {
                what: "sample",
                expected: want,
                actual: len,
            });
        }
        Ok(())
    };
    match (space.metric, sample) {
        (Metric::EuclideanFlat, Sample::Series(s)) => {
            let flat = flatten_steps(&s.deltas);
            expect_len(flat.len())?;
            Ok(nearest(&space.centroids, |c| sq_dist(&flat, c)))
        }
        (Metric::EuclideanFlat, Sample::Flat(f)) => {
            expect_len(f.0.len())?;
            Ok(nearest(&space.centroids, |c| sq_dist(&f.0, c)))
        }
        (Metric::SoftDtw { gamma }, Sample::Series(s)) => {
            let flat = flatten_steps(&s.deltas);
            let mut err = None;
            let c = nearest(&space.centroids, |c| match soft_dtw(&flat, c, gamma) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    f64::INFINITY
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok(c),
            }
        }
        (Metric::FeatureL2, Sample::Feature(f)) => {
            expect_len(f.len())?;
            Ok(nearest(&space.centroids, |c| sq_dist(f, c)))
        }
        (m, _) => Err(Error::RepresentationMismatch(m.name())),
    }
}

/// Adjusted Rand index between two labelings of the same samples.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let comb2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&v| comb2(v)).sum();
    let rows: f64 = table.iter().map(|r| comb2(r.iter().sum())).sum();
    let cols: f64 = (0..kb)
        .map(|j| comb2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = comb2(n as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
