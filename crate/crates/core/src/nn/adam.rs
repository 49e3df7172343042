use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// A non-finite gradient aborts before any parameter changes.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for p in store.iter() {
            if !p.grad.is_finite() {
                return Err(Error::NonFiniteGradient(p.name.clone()));
            }
        }
        if self.m.len() != store.len() {
            self.m = store.iter().map(|p| Tensor::zeros(p.value.rows, p.value.cols)).collect();
            self.v = self.m.clone();
        }
        let scale = match self.cfg.clip_norm {
            Some(max) => {
                let norm = store
                    .iter()
                    .flat_map(|p| p.grad.data.iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.data.len() {
                let g = p.grad.data[i] * scale;
                m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * g;
                v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * g * g;
                let mh = m.data[i] / bc1;
                let vh = v.data[i] / bc2;
                p.value.data[i] -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
        store.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{losses, Graph};

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::from_vec(1, 3, vec![1.0, -2.0, 3.0]));
        let before = store.clone();
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut store).unwrap();
        assert_eq!(store.get(crate::nn::ParamId(0)).value, before.get(crate::nn::ParamId(0)).value);
    }

    #[test]
    fn non_finite_gradient_names_param() {
        let mut store = ParamStore::new();
        let id = store.add("enc.wx", Tensor::zeros(1, 1));
        store.get_mut(id).grad.data[0] = f64::NAN;
        match Adam::new(AdamConfig::default()).step(&mut store) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "enc.wx"),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn quadratic_run() -> (Vec<f64>, ParamStore) {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::from_vec(1, 2, vec![1.0, -1.0]));
        let target = Tensor::from_vec(1, 2, vec![0.1, 0.05]);
        let mut opt = Adam::new(AdamConfig {
            lr: 0.02,
            ..AdamConfig::default()
        });
        let mut losses_seen = Vec::new();
        for _ in 0..200 {
            let mut g = Graph::new();
            let w = g.param(&store, id);
            let t = g.constant(target.clone());
            let l = losses::mse(&mut g, w, t);
            losses_seen.push(g.value(l).item());
            g.backward(l);
            g.accumulate(&mut store);
            opt.step(&mut store).unwrap();
        }
        (losses_seen, store)
    }

    #[test]
    fn converges_on_quadratic() {
        let (l, _) = quadratic_run();
        assert!(*l.last().unwrap() < 1e-6, "final loss {}", l.last().unwrap());
        assert!(l[20..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        assert_eq!(quadratic_run().1, quadratic_run().1);
    }
}
