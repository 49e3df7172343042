use super::softdtw::soft_dtw_divergence;
use super::{l2, ClusterSpace, Metric};
use crate::error::{Error, Result};

fn distance(metric: Metric, a: &[f64], b: &[f64]) -> Result<f64> {
    match metric {
        Metric::EuclideanFlat | Metric::FeatureL2 => Ok(l2(a, b)),
        // square root keeps the divergence on the same footing as an L2 distance
        Metric::SoftDtw { gamma } => Ok(soft_dtw_divergence(a, b, gamma)?.max(0.0).sqrt()),
    }
}

/// Davies–Bouldin index of `space` over `data` (flat vectors in the space's
/// representation, indexed like `space.assignments`). Lower is better.
pub fn dbi(space: &ClusterSpace, data: &[Vec<f64>]) -> Result<f64> {
    if space.k < 2 {
        return Err(Error::invalid("Davies-Bouldin index is undefined for k = 1"));
    }
    if data.len() != space.assignments.len() {
        return Err(Error::LengthMismatch {
            what: "dbi data",
            expected: space.assignments.len(),
            actual: data.len(),
        });
    }
    let mut scatter = Vec::with_capacity(space.k);
    for (c, members) in space.member_index.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyCluster(c));
        }
        let mut total = 0.0;
        for &i in members {
            total += distance(space.metric, &data[i], &space.centroids[c])?;
        }
        scatter.push(total / members.len() as f64);
    }
    let mut sum = 0.0;
    for i in 0..space.k {
        let mut worst = 0.0f64;
        for j in 0..space.k {
            if i == j {
                continue;
            }
            let sep = distance(space.metric, &space.centroids[i], &space.centroids[j])?;
            let ratio = if sep > 0.0 {
                (scatter[i] + scatter[j]) / sep
            } else {
                f64::INFINITY
            };
            worst = worst.max(ratio);
        }
        sum += worst;
    }
    Ok(sum / space.k as f64)
}
