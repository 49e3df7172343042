use serde::{Deserialize, Serialize};

use super::{check_loss, minibatches, EpochLog, ForecasterConfig};
use crate::error::{Error, Result};
use crate::ingest::Corpus;
use crate::nn::{integration_matrix, losses, step_inputs, Adam, Graph, Mlp, ParamStore, StepEncoder, Tensor, Var};
use crate::seed;
use crate::trajectory::{flatten_steps, unflatten_steps, DisplacementSeries, Point, Standardizer};

/// RED predictor: embedding, LSTM, then an MLP emitting every future step at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Red {
    pub t_obs: usize,
    pub t_pred: usize,
    pub standardizer: Standardizer,
    pub store: ParamStore,
    pub encoder: StepEncoder,
    pub head: Mlp,
    pub trained: bool,
    pub log: Vec<EpochLog>,
}

impl Red {
    pub fn new(cfg: &ForecasterConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seed::child_rng(cfg.seed, "red/init", 0);
        let mut store = ParamStore::new();
        let encoder = StepEncoder::new(&mut store, "red.enc", cfg.embed_dim, 0, cfg.lstm_dim, &mut rng);
        let mut dims = vec![cfg.lstm_dim];
        dims.extend(&cfg.red_hidden);
        dims.push(2 * cfg.t_pred);
        let head = Mlp::new(&mut store, "red.head", &dims, &mut rng);
        Ok(Self {
            t_obs: cfg.t_obs,
            t_pred: cfg.t_pred,
            standardizer: Standardizer::identity(),
            store,
            encoder,
            head,
            trained: false,
            log: Vec::new(),
        })
    }

    /// Standardized flat future displacements, `batch x 2 t_pred`.
    fn forward(&self, g: &mut Graph, obs: &[Vec<Point>]) -> Result<Var> {
        let rows: Vec<&[Point]> = obs.iter().map(Vec::as_slice).collect();
        let steps = step_inputs(g, &rows, self.t_obs);
        let h = self.encoder.forward(g, &self.store, &steps, None)?.h;
        self.head.forward(g, &self.store, h)
    }

    fn prepare(&self, obs: &DisplacementSeries) -> Result<Vec<Point>> {
        let d = obs.observed_deltas();
        if d.len() != self.t_obs {
            return Err(Error::LengthMismatch {
                what: "observation",
                expected: self.t_obs,
                actual: d.len(),
            });
        }
        Ok(d.iter().map(|&p| self.standardizer.apply_step(p)).collect())
    }

    pub fn predict_batch(&self, obs: &[&DisplacementSeries]) -> Result<Vec<DisplacementSeries>> {
        if !self.trained {
            return Err(Error::Untrained("red"));
        }
        if obs.is_empty() {
            return Ok(Vec::new());
        }
        let inputs = obs.iter().map(|o| self.prepare(o)).collect::<Result<Vec<_>>>()?;
        let mut g = Graph::new();
        let out = self.forward(&mut g, &inputs)?;
        let vals = g.value(out);
        obs.iter()
            .enumerate()
            .map(|(r, o)| {
                let steps = self.standardizer.invert_steps(&unflatten_steps(vals.row(r))?);
                DisplacementSeries::new(steps, 0, self.t_pred, o.last_observed_position())
            })
            .collect()
    }
}

/// Trains RED with MSE on integrated future positions.
pub fn red_train(corpus: &Corpus, cfg: &ForecasterConfig) -> Result<Red> {
    let mut model = Red::new(cfg)?;
    if corpus.is_empty() {
        return Err(Error::invalid("cannot train on an empty corpus"));
    }
    if corpus.t_obs != cfg.t_obs || corpus.t_pred != cfg.t_pred {
        return Err(Error::Config(format!(
            "corpus shape ({}, {}) differs from config ({}, {})",
            corpus.t_obs, corpus.t_pred, cfg.t_obs, cfg.t_pred
        )));
    }
    if cfg.standardize {
        model.standardizer = Standardizer::fit(&corpus.samples)?;
    }
    let st = model.standardizer;
    let obs: Vec<Vec<Point>> = corpus
        .samples
        .iter()
        .map(|s| s.observed_deltas().iter().map(|&p| st.apply_step(p)).collect())
        .collect();
    let fut: Vec<Vec<f64>> = corpus
        .samples
        .iter()
        .map(|s| flatten_steps(&s.future_deltas().iter().map(|&p| st.apply_step(p)).collect::<Vec<_>>()))
        .collect();
    let integ = integration_matrix(cfg.t_pred);
    let mut opt = Adam::new(cfg.adam);
    let mut rng = seed::child_rng(cfg.seed, "red/batches", 0);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let mut count = 0;
        for batch in minibatches(corpus.len(), cfg.batch, &mut rng) {
            let mut g = Graph::new();
            let o: Vec<Vec<Point>> = batch.iter().map(|&i| obs[i].clone()).collect();
            let pred = model.forward(&mut g, &o)?;
            let target = Tensor::from_rows(&batch.iter().map(|&i| fut[i].clone()).collect::<Vec<_>>());
            let m = g.constant(integ.clone());
            let pp = g.matmul(pred, m);
            let tp = g.constant(target.matmul(&integ));
            let loss = losses::mse(&mut g, pp, tp);
            let lv = g.value(loss).item();
            check_loss(lv, "red loss", epoch, step)?;
            g.backward(loss);
            g.accumulate(&mut model.store);
            opt.step(&mut model.store)?;
            total += lv;
            count += 1;
            step += 1;
        }
        let mean = total / count.max(1) as f64;
        model.log.push(EpochLog {
            epoch,
            loss: mean,
            recon: mean,
            aux: 0.0,
        });
    }
    model.trained = true;
    Ok(model)
}

pub fn red_predict(model: &Red, obs: &DisplacementSeries) -> Result<DisplacementSeries> {
    Ok(model.predict_batch(&[obs])?.remove(0))
}
