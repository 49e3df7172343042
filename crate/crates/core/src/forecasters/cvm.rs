use crate::error::{Error, Result};
use crate::trajectory::{DisplacementSeries, Point};

pub const DEFAULT_SIGMA: f64 = 1.0;

/// Normalized Gaussian weights over `t_obs` steps, centred on the last one.
/// `sigma = 0` puts all weight on the last step.
pub fn cvm_weights(t_obs: usize, sigma: f64) -> Vec<f64> {
    if t_obs == 0 {
        return Vec::new();
    }
    if sigma <= 0.0 {
        let mut w = vec![0.0; t_obs];
        w[t_obs - 1] = 1.0;
        return w;
    }
    let raw: Vec<f64> = (0..t_obs)
        .map(|t| {
            let d = (t_obs - 1 - t) as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

/// Constant-velocity forecast: a kernel-weighted mean of the observed
/// displacements, repeated for `t_pred` steps.
pub fn cvm_predict(obs: &DisplacementSeries, t_pred: usize, sigma: f64) -> Result<DisplacementSeries> {
    let deltas = obs.observed_deltas();
    if deltas.is_empty() {
        return Err(Error::invalid("CVM needs at least one observed displacement"));
    }
    if t_pred == 0 {
        return Err(Error::invalid("t_pred must be at least 1"));
    }
    let w = cvm_weights(deltas.len(), sigma);
    let mut v: Point = [0.0, 0.0];
    for (wt, d) in w.iter().zip(deltas) {
        v[0] += wt * d[0];
        v[1] += wt * d[1];
    }
    DisplacementSeries::new(vec![v; t_pred], 0, t_pred, obs.last_observed_position())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(deltas: Vec<Point>) -> DisplacementSeries {
        DisplacementSeries::observed(deltas, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn constant_deltas_repeat() {
        for sigma in [0.0, 0.3, 1.0, 5.0] {
            let p = cvm_predict(&obs(vec![[1.0, 0.0]; 8]), 12, sigma).unwrap();
            for d in &p.deltas {
                assert!((d[0] - 1.0).abs() < 1e-12 && d[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_sigma_uses_last_step() {
        let o = obs(vec![[0.0, 0.0], [1.0, 1.0], [2.0, -3.0]]);
        let p = cvm_predict(&o, 2, 0.0).unwrap();
        assert_eq!(p.deltas, vec![[2.0, -3.0]; 2]);
        let tiny = cvm_predict(&o, 2, 1e-3).unwrap();
        assert!((tiny.deltas[0][0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn static_observation_predicts_static() {
        let p = cvm_predict(&obs(vec![[0.0, 0.0]; 8]), 12, 1.0).unwrap();
        assert!(p.deltas.iter().all(|d| *d == [0.0, 0.0]));
    }

    #[test]
    fn weights_normalized() {
        let w = cvm_weights(8, 1.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.windows(2).all(|p| p[0] < p[1]));
    }
}
