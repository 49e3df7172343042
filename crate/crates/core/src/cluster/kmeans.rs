use rand::Rng as _;

use super::{sq_dist, ClusterSpace, Metric};
use crate::error::{Error, Result};
use crate::seed;
use crate::trajectory::FlatDisplacement;

/// Output of [`lloyd`]; `assignments` are always consistent with `centroids`.
#[derive(Debug, Clone)]
pub struct LloydFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Inertia after every assignment pass, starting with the seeding.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl LloydFit {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

fn check_inputs(n: usize, k: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("cannot cluster an empty data set"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the {n} samples")));
    }
    Ok(())
}

pub(crate) fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut seed::Rng) -> Vec<usize> {
    kmeans_pp_with(points.len(), k, rng, |i, j| sq_dist(&points[i], &points[j]))
}

/// k-means++ seeding over an arbitrary non-negative dissimilarity.
pub(crate) fn kmeans_pp_with(
    n: usize,
    k: usize,
    rng: &mut seed::Rng,
    mut dist: impl FnMut(usize, usize) -> f64,
) -> Vec<usize> {
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| dist(i, chosen[0])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    if u < w {
                        pick = Some(i);
                        break;
                    }
                    u -= w;
                }
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every remaining point coincides with a chosen one
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, slot) in d2.iter_mut().enumerate() {
            let d = dist(i, next);
            if d < *slot {
                *slot = d;
            }
        }
    }
    chosen
}

fn assign_all(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                let d = sq_dist(p, cen);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            (best, best_d)
        })
        .unzip()
}

/// Lloyd iterations with k-means++ seeding on plain vectors.
///
/// Stops once the largest centroid move drops below `tol` or after
/// `max_iter` updates. An empty cluster is reseeded at the point farthest
/// from its current centroid.
pub fn lloyd(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<LloydFit> {
    check_inputs(points.len(), k)?;
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("all points must share one dimensionality"));
    }
    let mut rng = seed::rng(seed);
    let init = kmeans_pp(points, k, &mut rng);
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|&i| points[i].clone()).collect();
    let (mut labels, mut dists) = assign_all(points, &centroids);
    let mut history = vec![dists.iter().sum()];
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut next = centroids.clone();
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                next[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                let far = (0..points.len())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("k <= n leaves a free point");
                taken.push(far);
                next[c] = points[far].clone();
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        let (l, d) = assign_all(points, &centroids);
        labels = l;
        dists = d;
        history.push(dists.iter().sum());
        if shift < tol {
            break;
        }
    }
    Ok(LloydFit {
        centroids,
        assignments: labels,
        inertia_history: history,
        iterations,
    })
}

/// k-Means over flattened displacement series.
pub fn kmeans_with_history(
    data: &[FlatDisplacement],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(ClusterSpace, LloydFit)> {
    let points: Vec<Vec<f64>> = data.iter().map(|d| d.0.clone()).collect();
    let fit = lloyd(&points, k, seed, max_iter, tol)?;
    let steps = points[0].len() / 2;
    let space = ClusterSpace::from_assignments(
        "kmeans",
        Metric::EuclideanFlat,
        fit.centroids.clone(),
        fit.assignments.clone(),
        steps,
        0,
    )?;
    Ok((space, fit))
}

/// k-Means over flattened displacement series. The returned space records
/// every step as observed; callers that know the (t_obs, t_pred) split set it.
pub fn kmeans(data: &[FlatDisplacement], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ClusterSpace> {
    kmeans_with_history(data, k, seed, max_iter, tol).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{adjusted_rand_index, assign, Sample};

    fn blobs() -> (Vec<FlatDisplacement>, Vec<usize>) {
        let mut rng = seed::rng(5);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let c = i % 2;
            let center = if c == 0 { [0.0, 0.0] } else { [10.0, 10.0] };
            data.push(FlatDisplacement(vec![
                center[0] + 0.1 * seed::normal(&mut rng),
                center[1] + 0.1 * seed::normal(&mut rng),
            ]));
            labels.push(c);
        }
        (data, labels)
    }

    #[test]
    fn two_blobs_recovered() {
        let (data, labels) = blobs();
        let s = kmeans(&data, 2, 1, 100, 1e-9).unwrap();
        assert_eq!(adjusted_rand_index(&s.assignments, &labels), 1.0);
        s.validate().unwrap();
    }

    #[test]
    fn k_one_is_mean() {
        let (data, _) = blobs();
        let s = kmeans(&data, 1, 1, 100, 1e-12).unwrap();
        let n = data.len() as f64;
        let mean_x: f64 = data.iter().map(|d| d.0[0]).sum::<f64>() / n;
        let mean_y: f64 = data.iter().map(|d| d.0[1]).sum::<f64>() / n;
        assert!((s.centroids[0][0] - mean_x).abs() < 1e-12);
        assert!((s.centroids[0][1] - mean_y).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let data: Vec<FlatDisplacement> = (0..7).map(|i| FlatDisplacement(vec![i as f64, (i * i) as f64])).collect();
        let (s, fit) = kmeans_with_history(&data, 7, 3, 50, 1e-12).unwrap();
        assert_eq!(fit.inertia(), 0.0);
        let mut a = s.assignments.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 7);
    }

    #[test]
    fn errors() {
        assert!(kmeans(&[], 1, 0, 10, 1e-6).is_err());
        assert!(kmeans(&[FlatDisplacement(vec![0.0, 0.0])], 2, 0, 10, 1e-6).is_err());
    }

    #[test]
    fn inertia_non_increasing_and_fixed_point() {
        let mut rng = seed::rng(17);
        let data: Vec<FlatDisplacement> = (0..200)
            .map(|_| FlatDisplacement((0..6).map(|_| seed::normal(&mut rng)).collect()))
            .collect();
        for seed in 0..5 {
            let (s, fit) = kmeans_with_history(&data, 5, seed, 100, 1e-10).unwrap();
            for w in fit.inertia_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "inertia rose {} -> {}", w[0], w[1]);
            }
            for (i, d) in data.iter().enumerate() {
                assert_eq!(assign(&s, Sample::Flat(d)).unwrap(), s.assignments[i]);
            }
        }
    }

    #[test]
    fn duplicates_do_not_break_seeding() {
        let data = vec![FlatDisplacement(vec![1.0, 1.0]); 4];
        let s = kmeans(&data, 3, 0, 10, 1e-9).unwrap();
        s.validate().unwrap();
    }
}
