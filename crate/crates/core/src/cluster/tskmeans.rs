use serde::{Deserialize, Serialize};

use super::kmeans::kmeans_pp_with;
use super::softdtw::{dtw, soft_dtw, soft_dtw_grad};
use super::{ClusterSpace, Metric};
use crate::error::{Error, Result};
use crate::seed;
use crate::trajectory::{flatten_steps, DisplacementSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsKMeansConfig {
    pub gamma: f64,
    pub max_iter: usize,
    /// Gradient steps per barycenter update.
    pub barycenter_steps: usize,
    pub barycenter_lr: f64,
}

impl Default for TsKMeansConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            max_iter: 30,
            barycenter_steps: 30,
            barycenter_lr: 0.1,
        }
    }
}

/// Gradient descent on the mean soft-DTW from `init` to every member.
pub fn soft_dtw_barycenter(
    members: &[&[f64]],
    init: &[f64],
    gamma: f64,
    steps: usize,
    lr: f64,
) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Err(Error::invalid("barycenter of an empty set"));
    }
    let mut z = init.to_vec();
    let scale = 1.0 / members.len() as f64;
    for _ in 0..steps {
        let mut grad = vec![0.0; z.len()];
        for m in members {
            let (_, g) = soft_dtw_grad(&z, m, gamma)?;
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v * scale;
            }
        }
        for (zi, gi) in z.iter_mut().zip(&grad) {
            *zi -= lr * gi;
        }
    }
    Ok(z)
}

fn assign_soft(points: &[Vec<f64>], centroids: &[Vec<f64>], gamma: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut labels = Vec::with_capacity(points.len());
    let mut values = Vec::with_capacity(points.len());
    for p in points {
        let mut best = 0;
        let mut best_v = f64::INFINITY;
        for (c, cen) in centroids.iter().enumerate() {
            let v = soft_dtw(p, cen, gamma)?;
            if v < best_v {
                best_v = v;
                best = c;
            }
        }
        labels.push(best);
        values.push(best_v);
    }
    Ok((labels, values))
}

/// Soft-DTW k-Means; returns the space and the objective after every assignment pass.
pub fn ts_kmeans_with_history(
    data: &[DisplacementSeries],
    k: usize,
    cfg: &TsKMeansConfig,
    seed: u64,
) -> Result<(ClusterSpace, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::invalid("cannot cluster an empty data set"));
    }
    if k == 0 || k > data.len() {
        return Err(Error::invalid(format!("k = {k} invalid for {} samples", data.len())));
    }
    let len = data[0].len();
    if data.iter().any(|d| d.len() != len) {
        return Err(Error::invalid("ts_kmeans needs equal-length series"));
    }
    if !(cfg.gamma > 0.0) {
        return Err(Error::invalid("soft-DTW gamma must be positive"));
    }
    let points: Vec<Vec<f64>> = data.iter().map(|d| flatten_steps(&d.deltas)).collect();
    let mut rng = seed::rng(seed);
    let init = kmeans_pp_with(points.len(), k, &mut rng, |i, j| {
        dtw(&points[i], &points[j]).unwrap_or(0.0)
    });
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|&i| points[i].clone()).collect();
    let (mut labels, mut values) = assign_soft(&points, &centroids, cfg.gamma)?;
    let mut history = vec![values.iter().sum()];

    for _ in 0..cfg.max_iter {
        let mut taken = Vec::new();
        for c in 0..k {
            let members: Vec<&[f64]> = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p.as_slice())
                .collect();
            if members.is_empty() {
                let far = (0..points.len())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| values[a].total_cmp(&values[b]).then(b.cmp(&a)))
                    .expect("k <= n leaves a free point");
                taken.push(far);
                centroids[c] = points[far].clone();
            } else {
                centroids[c] = soft_dtw_barycenter(
                    &members,
                    &centroids[c],
                    cfg.gamma,
                    cfg.barycenter_steps,
                    cfg.barycenter_lr,
                )?;
            }
        }
        let (l, v) = assign_soft(&points, &centroids, cfg.gamma)?;
        let changed = l != labels;
        labels = l;
        values = v;
        history.push(values.iter().sum());
        if !changed {
            break;
        }
    }
    let mut space = ClusterSpace::from_assignments(
        "ts-kmeans",
        Metric::SoftDtw { gamma: cfg.gamma },
        centroids,
        labels,
        data[0].t_obs,
        data[0].t_pred,
    )?;
    space.seal();
    Ok((space, history))
}

pub fn ts_kmeans(data: &[DisplacementSeries], k: usize, gamma: f64, seed: u64, max_iter: usize) -> Result<ClusterSpace> {
    let cfg = TsKMeansConfig {
        gamma,
        max_iter,
        ..TsKMeansConfig::default()
    };
    ts_kmeans_with_history(data, k, &cfg, seed).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{adjusted_rand_index, kmeans};
    use crate::trajectory::{flatten, Point};

    fn series(deltas: Vec<Point>) -> DisplacementSeries {
        let n = deltas.len();
        DisplacementSeries::new(deltas, n - 4, 4, [0.0, 0.0]).unwrap()
    }

    /// A short eastward burst at different offsets vs a steady northward walk.
    fn shift_fixture() -> (Vec<DisplacementSeries>, Vec<usize>) {
        let n = 12;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for shift in 0..6 {
            let mut d = vec![[0.0, 0.0]; n];
            for t in 0..3 {
                d[2 + shift + t] = [3.0, 0.0];
            }
            data.push(series(d));
            labels.push(0);
        }
        for i in 0..6 {
            let v = 0.4 + 0.02 * i as f64;
            data.push(series(vec![[0.0, v]; n]));
            labels.push(1);
        }
        (data, labels)
    }

    #[test]
    fn shifted_copies_cluster_together() {
        let (data, labels) = shift_fixture();
        let s = ts_kmeans(&data, 2, 0.1, 3, 30).unwrap();
        assert_eq!(adjusted_rand_index(&s.assignments, &labels), 1.0);
        // flat Euclidean k-Means splits the shifted bursts instead
        let flat: Vec<_> = data.iter().map(flatten).collect();
        let worst = (0..5)
            .map(|seed| adjusted_rand_index(&kmeans(&flat, 2, seed, 100, 1e-9).unwrap().assignments, &labels))
            .fold(f64::INFINITY, f64::min);
        assert!(worst < 1.0);
    }

    #[test]
    fn k_one_is_a_barycenter() {
        let (data, _) = shift_fixture();
        let gamma = 1.0;
        let s = ts_kmeans(&data, 1, gamma, 0, 5).unwrap();
        let pts: Vec<Vec<f64>> = data.iter().map(|d| flatten_steps(&d.deltas)).collect();
        let objective = |z: &[f64]| -> f64 { pts.iter().map(|p| soft_dtw(z, p, gamma).unwrap()).sum() };
        let at_centroid = objective(&s.centroids[0]);
        for p in &pts {
            assert!(at_centroid <= objective(p) + 1e-9);
        }
    }

    #[test]
    fn identical_series_have_zero_objective() {
        let d = series(vec![[0.3, -0.1]; 8]);
        let data = vec![d; 6];
        for k in 1..=3 {
            let cfg = TsKMeansConfig {
                gamma: 1e-4,
                ..TsKMeansConfig::default()
            };
            let (_, hist) = ts_kmeans_with_history(&data, k, &cfg, 1).unwrap();
            assert!(hist.last().unwrap().abs() < 1e-2);
        }
    }

    #[test]
    fn objective_non_increasing() {
        let mut rng = seed::rng(8);
        let data: Vec<_> = (0..40)
            .map(|i| {
                let base = if i % 2 == 0 { [0.5, 0.0] } else { [0.0, 0.5] };
                series(
                    (0..10)
                        .map(|_| [base[0] + 0.1 * seed::normal(&mut rng), base[1] + 0.1 * seed::normal(&mut rng)])
                        .collect(),
                )
            })
            .collect();
        let (space, hist) = ts_kmeans_with_history(&data, 3, &TsKMeansConfig::default(), 2).unwrap();
        space.validate().unwrap();
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] + 1e-3 * w[0].abs().max(1.0), "objective rose {} -> {}", w[0], w[1]);
        }
    }
}
