//! Trajectories, their displacement-space representation and the exact
//! transforms between the two.
//!
//! A trajectory of `n + 1` positions becomes `n` per-step displacements
//! `points[i + 1] - points[i]`. The displacement series remembers the first
//! position (`origin`) so that integrating it reproduces the positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2D point or step, `[x, y]` in meters.
pub type Point = [f64; 2];

/// Seconds per step used by the ETH/UCY style corpora.
pub const DEFAULT_DT: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub agent_id: String,
    pub points: Vec<Point>,
    /// Metadata only; every computation works in step units.
    pub dt: f64,
    pub source_dataset: String,
}

impl Trajectory {
    pub fn new(
        agent_id: impl Into<String>,
        points: Vec<Point>,
        dt: f64,
        source_dataset: impl Into<String>,
    ) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::LengthMismatch {
                what: "trajectory points (minimum)",
                expected: 2,
                actual: points.len(),
            });
        }
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            agent_id: agent_id.into(),
            points,
            dt,
            source_dataset: source_dataset.into(),
        })
    }

    /// Convenience constructor for anonymous test trajectories.
    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        Self::new("0", points, DEFAULT_DT, "")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-step displacements split into `t_obs` observed and `t_pred` future steps.
///
/// Three shapes occur in practice: a full series (`t_obs >= 1`, `t_pred >= 1`),
/// an observation-only series (`t_pred == 0`) and a future-only segment
/// (`t_obs == 0`, produced by [`DisplacementSeries::split`]). In every case
/// `deltas.len() == t_obs + t_pred`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementSeries {
    pub deltas: Vec<Point>,
    pub t_obs: usize,
    pub t_pred: usize,
    /// Position the first delta starts from.
    pub origin: Point,
}

impl DisplacementSeries {
    pub fn new(deltas: Vec<Point>, t_obs: usize, t_pred: usize, origin: Point) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::invalid("displacement series must hold at least one step"));
        }
        if deltas.len() != t_obs + t_pred {
            return Err(Error::LengthMismatch {
                what: "displacement series",
                expected: t_obs + t_pred,
                actual: deltas.len(),
            });
        }
        Ok(Self {
            deltas,
            t_obs,
            t_pred,
            origin,
        })
    }

    /// Observation-only series.
    pub fn observed(deltas: Vec<Point>, origin: Point) -> Result<Self> {
        let n = deltas.len();
        Self::new(deltas, n, 0, origin)
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.t_obs >= 1 && self.t_pred >= 1
    }

    pub fn observed_deltas(&self) -> &[Point] {
        &self.deltas[..self.t_obs]
    }

    pub fn future_deltas(&self) -> &[Point] {
        &self.deltas[self.t_obs..]
    }

    /// Position reached after the observed steps, i.e. where the future starts.
    pub fn last_observed_position(&self) -> Point {
        let mut p = self.origin;
        for d in self.observed_deltas() {
            p[0] += d[0];
            p[1] += d[1];
        }
        p
    }

    /// Splits a full series into its observed and future segments.
    pub fn split(&self) -> Result<(DisplacementSeries, DisplacementSeries)> {
        if !self.is_full() {
            return Err(Error::invalid(format!(
                "split requires a full series (t_obs >= 1, t_pred >= 1), got t_obs={} t_pred={}",
                self.t_obs, self.t_pred
            )));
        }
        let observed = DisplacementSeries {
            deltas: self.observed_deltas().to_vec(),
            t_obs: self.t_obs,
            t_pred: 0,
            origin: self.origin,
        };
        let future = DisplacementSeries {
            deltas: self.future_deltas().to_vec(),
            t_obs: 0,
            t_pred: self.t_pred,
            origin: self.last_observed_position(),
        };
        Ok((observed, future))
    }

    /// Inverse of [`split`](Self::split).
    pub fn concat(observed: &DisplacementSeries, future: &DisplacementSeries) -> Result<Self> {
        let mut deltas = observed.deltas.clone();
        deltas.extend_from_slice(&future.deltas);
        Self::new(deltas, observed.len(), future.len(), observed.origin)
    }

    /// Builds a full series from observed deltas and a future segment.
    pub fn from_parts(observed: &[Point], future: &[Point], origin: Point) -> Result<Self> {
        let mut deltas = observed.to_vec();
        deltas.extend_from_slice(future);
        Self::new(deltas, observed.len(), future.len(), origin)
    }
}

/// Interleaved `dx1, dy1, dx2, dy2, ...` representation consumed by k-Means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatDisplacement(pub Vec<f64>);

impl FlatDisplacement {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn steps(&self) -> usize {
        self.0.len() / 2
    }
}

/// Finite differences of `traj`; requires exactly `t_obs + t_pred + 1` points.
pub fn to_displacements(traj: &Trajectory, t_obs: usize, t_pred: usize) -> Result<DisplacementSeries> {
    if t_obs < 1 {
        return Err(Error::invalid("t_obs must be at least 1"));
    }
    let expected = t_obs + t_pred + 1;
    if traj.points.len() != expected {
        return Err(Error::LengthMismatch {
            what: "trajectory points",
            expected,
            actual: traj.points.len(),
        });
    }
    let deltas = traj
        .points
        .windows(2)
        .map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
        .collect();
    DisplacementSeries::new(deltas, t_obs, t_pred, traj.points[0])
}

/// Positions visited when walking `deltas` from `from`; `from` itself is excluded.
pub fn integrate_steps(deltas: &[Point], from: Point) -> Vec<Point> {
    let mut p = from;
    deltas
        .iter()
        .map(|d| {
            p[0] += d[0];
            p[1] += d[1];
            p
        })
        .collect()
}

/// Rebuilds the trajectory of a displacement series, including the start point.
pub fn integrate(disp: &DisplacementSeries, from: Point) -> Trajectory {
    let mut points = Vec::with_capacity(disp.len() + 1);
    points.push(from);
    points.extend(integrate_steps(&disp.deltas, from));
    Trajectory {
        agent_id: String::new(),
        points,
        dt: DEFAULT_DT,
        source_dataset: String::new(),
    }
}

pub fn flatten_steps(deltas: &[Point]) -> Vec<f64> {
    deltas.iter().flat_map(|d| [d[0], d[1]]).collect()
}

pub fn unflatten_steps(values: &[f64]) -> Result<Vec<Point>> {
    if values.len() % 2 != 0 {
        return Err(Error::invalid(format!(
            "flat displacement length {} is not even",
            values.len()
        )));
    }
    Ok(values.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}

pub fn flatten(disp: &DisplacementSeries) -> FlatDisplacement {
    FlatDisplacement(flatten_steps(&disp.deltas))
}

pub fn unflatten(flat: &FlatDisplacement, t_obs: usize, t_pred: usize, origin: Point) -> Result<DisplacementSeries> {
    let deltas = unflatten_steps(&flat.0)?;
    DisplacementSeries::new(deltas, t_obs, t_pred, origin)
}

/// Optional per-axis standardization of displacements, fitted on training data
/// and stored next to every model so predictions can be mapped back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Point,
    pub std: Point,
}

impl Standardizer {
    pub fn identity() -> Self {
        Self {
            mean: [0.0, 0.0],
            std: [1.0, 1.0],
        }
    }

    pub fn fit<'a>(series: impl IntoIterator<Item = &'a DisplacementSeries>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for s in series {
            for d in &s.deltas {
                n += 1;
                for a in 0..2 {
                    sum[a] += d[a];
                    sq[a] += d[a] * d[a];
                }
            }
        }
        if n == 0 {
            return Err(Error::invalid("cannot fit standardizer on empty data"));
        }
        let nf = n as f64;
        let mut mean = [0.0; 2];
        let mut std = [1.0; 2];
        for a in 0..2 {
            mean[a] = sum[a] / nf;
            let var = (sq[a] / nf - mean[a] * mean[a]).max(0.0);
            // constant axes are left unscaled
            std[a] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
        Ok(Self { mean, std })
    }

    pub fn apply_step(&self, d: Point) -> Point {
        [(d[0] - self.mean[0]) / self.std[0], (d[1] - self.mean[1]) / self.std[1]]
    }

    pub fn invert_step(&self, d: Point) -> Point {
        [d[0] * self.std[0] + self.mean[0], d[1] * self.std[1] + self.mean[1]]
    }

    pub fn apply(&self, s: &DisplacementSeries) -> DisplacementSeries {
        DisplacementSeries {
            deltas: s.deltas.iter().map(|&d| self.apply_step(d)).collect(),
            ..s.clone()
        }
    }

    pub fn invert_steps(&self, deltas: &[Point]) -> Vec<Point> {
        deltas.iter().map(|&d| self.invert_step(d)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(points: Vec<Point>) -> Trajectory {
        Trajectory::from_points(points).unwrap()
    }

    #[test]
    fn constant_velocity_deltas() {
        let d = to_displacements(&traj(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), 1, 1).unwrap();
        assert_eq!(d.deltas, vec![[1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(d.origin, [0.0, 0.0]);
    }

    #[test]
    fn static_agent_has_zero_deltas() {
        let d = to_displacements(&traj(vec![[3.0, 3.0]; 3]), 1, 1).unwrap();
        assert_eq!(d.deltas, vec![[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn direct_subtraction() {
        let d = to_displacements(&traj(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 3.0]]), 1, 1).unwrap();
        assert_eq!(d.deltas, vec![[1.0, 1.0], [0.0, 2.0]]);
    }

    #[test]
    fn length_mismatch_names_lengths() {
        let err = to_displacements(&traj(vec![[0.0, 0.0], [1.0, 0.0]]), 8, 12).unwrap_err();
        match err {
            Error::LengthMismatch { expected, actual, .. } => {
                assert_eq!(expected, 21);
                assert_eq!(actual, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn integrate_examples() {
        let d = DisplacementSeries::new(vec![[1.0, 0.0], [1.0, 0.0]], 1, 1, [0.0, 0.0]).unwrap();
        assert_eq!(integrate_steps(&d.deltas, [0.0, 0.0]), vec![[1.0, 0.0], [2.0, 0.0]]);
        assert_eq!(integrate_steps(&[[0.0, 0.0]], [5.0, -2.0]), vec![[5.0, -2.0]]);
        let t = integrate(&d, [0.0, 0.0]);
        assert_eq!(t.points, vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
    }

    #[test]
    fn flatten_examples() {
        let d = DisplacementSeries::new(vec![[1.0, 2.0], [3.0, 4.0]], 1, 1, [0.0, 0.0]).unwrap();
        assert_eq!(flatten(&d).0, vec![1.0, 2.0, 3.0, 4.0]);
        let z = DisplacementSeries::observed(vec![[0.0, 0.0]], [0.0, 0.0]).unwrap();
        assert_eq!(flatten(&z).0, vec![0.0, 0.0]);
    }

    #[test]
    fn split_eight_twelve() {
        let deltas: Vec<Point> = (0..20).map(|i| [i as f64, -(i as f64)]).collect();
        let d = DisplacementSeries::new(deltas, 8, 12, [1.0, 1.0]).unwrap();
        let (o, f) = d.split().unwrap();
        assert_eq!(o.len(), 8);
        assert_eq!(f.len(), 12);
        assert_eq!(f.origin, d.last_observed_position());
        assert_eq!(DisplacementSeries::concat(&o, &f).unwrap(), d);
    }

    #[test]
    fn split_rejects_observation_only() {
        let d = DisplacementSeries::new(vec![[1.0, 0.0]; 20], 20, 0, [0.0, 0.0]).unwrap();
        assert!(d.split().is_err());
    }

    #[test]
    fn standardizer_roundtrip() {
        let d = DisplacementSeries::new(vec![[1.0, 2.0], [3.0, 6.0], [5.0, 1.0]], 2, 1, [0.0, 0.0]).unwrap();
        let st = Standardizer::fit([&d]).unwrap();
        let z = st.apply(&d);
        let back = st.invert_steps(&z.deltas);
        for (a, b) in back.iter().zip(&d.deltas) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn points(n: usize) -> impl Strategy<Value = Vec<Point>> {
            prop::collection::vec(prop::array::uniform2(-100.0f64..100.0), n)
        }

        proptest! {
            #[test]
            fn roundtrip_integrate(pts in (2usize..30).prop_flat_map(points)) {
                let t = traj(pts.clone());
                let n = pts.len() - 1;
                let d = to_displacements(&t, n, 0).unwrap();
                let back = integrate(&d, t.points[0]);
                for (a, b) in back.points.iter().zip(&pts) {
                    prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
                }
            }

            #[test]
            fn translation_invariant(pts in (2usize..30).prop_flat_map(points), shift in prop::array::uniform2(-50.0f64..50.0)) {
                let n = pts.len() - 1;
                let moved: Vec<Point> = pts.iter().map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
                let a = to_displacements(&traj(pts), n, 0).unwrap();
                let b = to_displacements(&traj(moved), n, 0).unwrap();
                for (x, y) in a.deltas.iter().zip(&b.deltas) {
                    prop_assert!((x[0] - y[0]).abs() < 1e-9 && (x[1] - y[1]).abs() < 1e-9);
                }
            }

            #[test]
            fn flatten_bijection(deltas in (1usize..30).prop_flat_map(points), t_obs in 0usize..30) {
                let t_obs = t_obs.min(deltas.len());
                let t_pred = deltas.len() - t_obs;
                let d = DisplacementSeries::new(deltas, t_obs, t_pred, [0.0, 0.0]).unwrap();
                let back = unflatten(&flatten(&d), t_obs, t_pred, d.origin).unwrap();
                prop_assert_eq!(back, d);
            }
        }
    }
}
