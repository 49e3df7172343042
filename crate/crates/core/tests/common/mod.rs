//! Independent oracles and fixtures shared by the oracle tests and the acceptance target.
#![allow(dead_code)]

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajrank::cluster::{ClusterSpace, Metric};
use trajrank::forecasters::{Proposal, ProposalSet};
use trajrank::ingest::Corpus;
use trajrank::nn::Tensor;
use trajrank::ranking::{NeighborBank, Operand};
use trajrank::trajectory::{DisplacementSeries, Point};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Top-down memoized soft-DTW with the plain log-sum-exp.
pub fn soft_dtw_naive(a: &[[f64; 2]], b: &[[f64; 2]], gamma: f64) -> f64 {
    fn go(i: usize, j: usize, a: &[[f64; 2]], b: &[[f64; 2]], g: f64, memo: &mut Vec<Vec<Option<f64>>>) -> f64 {
        if i == 0 && j == 0 {
            return 0.0;
        }
        if i == 0 || j == 0 {
            return f64::INFINITY;
        }
        if let Some(v) = memo[i][j] {
            return v;
        }
        let cost = (a[i - 1][0] - b[j - 1][0]).powi(2) + (a[i - 1][1] - b[j - 1][1]).powi(2);
        let prev = [go(i - 1, j - 1, a, b, g, memo), go(i - 1, j, a, b, g, memo), go(i, j - 1, a, b, g, memo)];
        let s: f64 = prev.iter().map(|&x| (-x / g).exp()).sum();
        let v = cost - g * s.ln();
        memo[i][j] = Some(v);
        v
    }
    let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
    go(a.len(), b.len(), a, b, gamma, &mut memo)
}

pub fn random_steps(r: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
    (0..n).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect()
}

pub fn flat(s: &[[f64; 2]]) -> Vec<f64> {
    s.iter().flat_map(|p| [p[0], p[1]]).collect()
}

/// Fixture: a k-cluster bank over random members plus a conditioned proposal set.
pub fn neighbor_fixture(r: &mut ChaCha8Rng) -> (NeighborBank, ProposalSet, usize) {
    let k = r.random_range(1..=6);
    let t_pred = r.random_range(1..=6);
    let t_obs = r.random_range(1..=4);
    let n = r.random_range(k..=k * 12);
    let mut assignments: Vec<usize> = (0..k).collect();
    assignments.extend((k..n).map(|_| r.random_range(0..k)));
    let mut corpus = Corpus::empty("fixture", t_obs, t_pred);
    for i in 0..n {
        let d = random_steps(r, t_obs + t_pred);
        corpus.samples.push(DisplacementSeries::new(d, t_obs, t_pred, [0.0, 0.0]).unwrap());
        corpus.ids.push(format!("s{i}"));
    }
    let centroids = (0..k).map(|_| flat(&random_steps(r, t_obs + t_pred))).collect();
    let space = ClusterSpace::from_assignments("fixture", Metric::EuclideanFlat, centroids, assignments, t_obs, t_pred).unwrap();
    let bank = NeighborBank::displacement(&corpus, &space, Operand::Future).unwrap();
    let proposals = (0..k)
        .map(|c| Proposal {
            cluster: Some(c),
            deltas: random_steps(r, t_pred),
        })
        .collect();
    let set = ProposalSet::new("fixture", proposals, Some(random_steps(r, t_obs)), [0.0, 0.0]);
    (bank, set, r.random_range(1..=25))
}

/// Sorts every member distance and averages the first `n_neig`.
pub fn neighbor_oracle(bank: &NeighborBank, set: &ProposalSet, n_neig: usize) -> Vec<f64> {
    set.proposals
        .iter()
        .map(|p| {
            let x = flat(&p.deltas);
            let mut d: Vec<f64> = bank.members[p.cluster.unwrap()]
                .iter()
                .map(|m| x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = n_neig.min(d.len());
            d[..n].iter().sum::<f64>() / n as f64
        })
        .collect()
}

/// Per-row minimum over candidates of the row MSE, averaged over rows, and
/// the winning candidate of each row.
pub fn k_variety_oracle(preds: &[Tensor], target: &Tensor) -> (f64, Vec<usize>) {
    let (rows, cols) = target.shape();
    let mut total = 0.0;
    let mut winners = Vec::new();
    for row in 0..rows {
        let mut best = (f64::INFINITY, 0);
        for (c, p) in preds.iter().enumerate() {
            let e = (0..cols).map(|j| (p.at(row, j) - target.at(row, j)).powi(2)).sum::<f64>() / cols as f64;
            if e < best.0 {
                best = (e, c);
            }
        }
        total += best.0;
        winners.push(best.1);
    }
    (total / rows as f64, winners)
}

/// Random `rows x cols` tensor with entries in [-2, 2).
pub fn random_tensor(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-2.0..2.0)).collect())
}

pub fn positions(origin: Point, deltas: &[Point]) -> Vec<Point> {
    let mut p = origin;
    deltas
        .iter()
        .map(|d| {
            p = [p[0] + d[0], p[1] + d[1]];
            p
        })
        .collect()
}

