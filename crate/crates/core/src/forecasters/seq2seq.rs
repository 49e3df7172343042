//! Shared encoder / autoregressive-decoder generator behind CF-GAN, CF-VAE,
//! GAN-OURS and VAE-OURS.

use serde::{Deserialize, Serialize};

use super::{check_loss, minibatches, EpochLog, ForecasterConfig, ForecasterKind, Proposal, ProposalSet};
use crate::cluster::ClusterSpace;
use crate::error::{Error, Result};
use crate::ingest::Corpus;
use crate::nn::losses::AdversarialTerm;
use crate::nn::{
    integration_matrix, losses, one_hot, split_steps, step_inputs, Adam, Discriminator, EncoderKind, Graph, Linear, Mlp,
    ParamStore, StepEncoder, Tensor, Var,
};
use crate::seed::{self, Rng};
use crate::trajectory::{flatten_steps, unflatten_steps, DisplacementSeries, Point, Standardizer};

/// Recognition network of the VAE kinds: LSTM over the future plus mean / log-variance heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recognition {
    pub encoder: StepEncoder,
    pub mu: Linear,
    pub logvar: Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2Seq {
    pub kind: ForecasterKind,
    /// Number of conditioning classes; 0 for context-free kinds.
    pub k: usize,
    pub t_obs: usize,
    pub t_pred: usize,
    pub z_dim: usize,
    pub lambda: f64,
    pub adversarial: AdversarialTerm,
    pub beta: f64,
    pub k_variety: usize,
    pub standardizer: Standardizer,
    /// Id of the cluster space the conditioning refers to.
    pub space_id: Option<String>,
    pub store: ParamStore,
    pub encoder: StepEncoder,
    pub init: Linear,
    pub decoder: StepEncoder,
    pub head: Mlp,
    pub recognition: Option<Recognition>,
    pub disc: Option<Discriminator>,
    pub trained: bool,
    pub log: Vec<EpochLog>,
}

struct Batch {
    obs: Vec<Vec<Point>>,
    future: Vec<Vec<Point>>,
    classes: Option<Vec<usize>>,
}

impl Seq2Seq {
    pub fn new(cfg: &ForecasterConfig, k: usize) -> Result<Self> {
        cfg.validate()?;
        if !cfg.kind.is_generative() {
            return Err(Error::Config(format!("{} is not a generative kind", cfg.kind.name())));
        }
        let cond = if cfg.kind.is_conditioned() { k } else { 0 };
        if cfg.kind.is_conditioned() && k == 0 {
            return Err(Error::Config("conditioned model needs at least one cluster".into()));
        }
        let mut rng = seed::child_rng(cfg.seed, "seq2seq/init", 0);
        let mut store = ParamStore::new();
        let h = cfg.lstm_dim;
        let encoder = StepEncoder::new(&mut store, "gen.enc", cfg.embed_dim, cond, h, &mut rng);
        let init = Linear::new(&mut store, "gen.init", h + cfg.z_dim, h, &mut rng);
        let decoder = StepEncoder::new(&mut store, "gen.dec", cfg.embed_dim, cond, h, &mut rng);
        let head = Mlp::new(&mut store, "gen.head", &[h, cfg.decode_dim, 2], &mut rng);
        let recognition = cfg.kind.is_vae().then(|| Recognition {
            encoder: StepEncoder::new(&mut store, "gen.recog", cfg.embed_dim, cond, h, &mut rng),
            mu: Linear::new(&mut store, "gen.recog.mu", h, cfg.z_dim, &mut rng),
            logvar: Linear::new(&mut store, "gen.recog.logvar", h, cfg.z_dim, &mut rng),
        });
        let disc = cfg.kind.is_gan().then(|| {
            Discriminator::new(EncoderKind::Lstm, cfg.t_pred, cfg.embed_dim, h, cfg.disc_hidden, &mut rng)
        });
        Ok(Self {
            kind: cfg.kind,
            k: cond,
            t_obs: cfg.t_obs,
            t_pred: cfg.t_pred,
            z_dim: cfg.z_dim,
            lambda: cfg.lambda,
            adversarial: cfg.adversarial,
            beta: cfg.beta,
            k_variety: cfg.k_variety,
            standardizer: Standardizer::identity(),
            space_id: None,
            store,
            encoder,
            init,
            decoder,
            head,
            recognition,
            disc,
            trained: false,
            log: Vec::new(),
        })
    }

    fn cond_var(&self, g: &mut Graph, classes: Option<&[usize]>) -> Result<Option<Var>> {
        match (self.k, classes) {
            (0, _) => Ok(None),
            (k, Some(c)) => {
                if let Some(&bad) = c.iter().find(|&&c| c >= k) {
                    return Err(Error::ClusterOutOfRange { id: bad, k });
                }
                Ok(Some(g.constant(one_hot(c, k))))
            }
            (_, None) => Err(Error::invalid("conditioned model needs cluster ids")),
        }
    }

    /// Standardized flat futures `batch x 2 t_pred` for standardized observations.
    fn decode(&self, g: &mut Graph, obs_steps: &[Var], h_enc: Var, z: Var, cond: Option<Var>) -> Result<Var> {
        let hz = g.concat_cols(&[h_enc, z]);
        let h0 = self.init.forward(g, &self.store, hz)?;
        let batch = g.shape(h0).0;
        let c0 = g.constant(Tensor::zeros(batch, self.decoder.hidden()));
        let mut state = crate::nn::LstmState { h: h0, c: c0 };
        let mut prev = *obs_steps.last().expect("t_obs >= 1");
        let mut outs = Vec::with_capacity(self.t_pred);
        for _ in 0..self.t_pred {
            let inp = self.decoder.input(g, &self.store, prev, cond)?;
            state = self.decoder.lstm.step(g, &self.store, inp, state)?;
            let out = self.head.forward(g, &self.store, state.h)?;
            outs.push(out);
            prev = out;
        }
        Ok(g.concat_cols(&outs))
    }

    fn std_obs(&self, obs: &DisplacementSeries) -> Result<Vec<Point>> {
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

    /// Raw futures for each observation / class / noise row.
    pub fn generate(&self, obs: &[&DisplacementSeries], classes: Option<&[usize]>, z: &Tensor) -> Result<Vec<Vec<Point>>> {
        if !self.trained {
            return Err(Error::Untrained("generative forecaster"));
        }
        if obs.is_empty() {
            return Ok(Vec::new());
        }
        if z.shape() != (obs.len(), self.z_dim) {
            return Err(Error::Shape {
                layer: "noise".into(),
                expected: format!("({}, {})", obs.len(), self.z_dim),
                actual: format!("{:?}", z.shape()),
            });
        }
        let rows = obs.iter().map(|o| self.std_obs(o)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[Point]> = rows.iter().map(Vec::as_slice).collect();
        let mut g = Graph::new();
        let cond = self.cond_var(&mut g, classes)?;
        let steps = step_inputs(&mut g, &refs, self.t_obs);
        let h = self.encoder.forward(&mut g, &self.store, &steps, cond)?.h;
        let zv = g.constant(z.clone());
        let out = self.decode(&mut g, &steps, h, zv, cond)?;
        let vals = g.value(out);
        (0..obs.len())
            .map(|r| Ok(self.standardizer.invert_steps(&unflatten_steps(vals.row(r))?)))
            .collect()
    }

    pub fn noise(&self, rows: usize, rng: &mut Rng) -> Tensor {
        Tensor::from_vec(rows, self.z_dim, seed::normals(rng, rows * self.z_dim))
    }

    fn train_batch(&mut self, b: &Batch, rng: &mut Rng, opt_g: &mut Adam, opt_d: Option<&mut Adam>, integ: &Tensor) -> Result<(f64, f64, f64)> {
        let n = b.obs.len();
        let mut g = Graph::new();
        let obs_refs: Vec<&[Point]> = b.obs.iter().map(Vec::as_slice).collect();
        let fut_refs: Vec<&[Point]> = b.future.iter().map(Vec::as_slice).collect();
        let cond = self.cond_var(&mut g, b.classes.as_deref())?;
        let steps = step_inputs(&mut g, &obs_refs, self.t_obs);
        let h = self.encoder.forward(&mut g, &self.store, &steps, cond)?.h;
        let samples = if self.kind.is_conditioned() { 1 } else { self.k_variety };
        let target_flat = Tensor::from_rows(&b.future.iter().map(|f| flatten_steps(f)).collect::<Vec<_>>());
        let target = g.constant(target_flat.matmul(integ));
        let m = g.constant(integ.clone());

        let mut kl = None;
        let mut zs = Vec::with_capacity(samples);
        if let Some(rec) = &self.recognition {
            let fsteps = step_inputs(&mut g, &fut_refs, self.t_pred);
            let hq = rec.encoder.forward(&mut g, &self.store, &fsteps, cond)?.h;
            let mu = rec.mu.forward(&mut g, &self.store, hq)?;
            let lv = rec.logvar.forward(&mut g, &self.store, hq)?;
            let half = g.scale(lv, 0.5);
            let sd = g.exp(half);
            for _ in 0..samples {
                let eps = g.constant(self.noise(n, rng));
                let s = g.mul(sd, eps);
                zs.push(g.add(mu, s));
            }
            kl = Some(losses::kl_gaussian(&mut g, mu, lv));
        } else {
            for _ in 0..samples {
                let z = self.noise(n, rng);
                zs.push(g.constant(z));
            }
        }
        let mut preds = Vec::with_capacity(samples);
        let mut positions = Vec::with_capacity(samples);
        for &z in &zs {
            let p = self.decode(&mut g, &steps, h, z, cond)?;
            preds.push(p);
            positions.push(g.matmul(p, m));
        }
        let recon = if positions.len() == 1 {
            losses::mse(&mut g, positions[0], target)
        } else {
            losses::k_variety(&mut g, &positions, target)
        };
        let recon_w = g.scale(recon, self.lambda);
        let (loss, aux_var) = match (&self.disc, kl) {
            (Some(d), _) => {
                let fake_steps = split_steps(&mut g, preds[0], self.t_pred);
                let real_steps = step_inputs(&mut g, &fut_refs, self.t_pred);
                let s_fake = d.score(&mut g, &fake_steps)?;
                let s_real = d.score(&mut g, &real_steps)?;
                let adv = losses::generator_adversarial(&mut g, s_real, s_fake, self.adversarial);
                let adv_w = g.scale(adv, 1.0 - self.lambda);
                (g.add(recon_w, adv_w), adv)
            }
            (None, Some(kl)) => {
                let kl_w = g.scale(kl, (1.0 - self.lambda) * self.beta);
                (g.add(recon_w, kl_w), kl)
            }
            (None, None) => (recon_w, recon),
        };
        let loss_v = g.value(loss).item();
        let recon_v = g.value(recon).item();
        let mut aux_v = g.value(aux_var).item();
        check_loss(loss_v, "generator loss", 0, 0)?;
        g.backward(loss);
        g.accumulate(&mut self.store);
        opt_g.step(&mut self.store)?;

        if let (Some(d), Some(opt_d)) = (&mut self.disc, opt_d) {
            let fake: Vec<Vec<Point>> = (0..n)
                .map(|r| unflatten_steps(g.value(preds[0]).row(r)))
                .collect::<Result<_>>()?;
            let fake_refs: Vec<&[Point]> = fake.iter().map(Vec::as_slice).collect();
            let mut gd = Graph::new();
            let rs = step_inputs(&mut gd, &fut_refs, self.t_pred);
            let fs = step_inputs(&mut gd, &fake_refs, self.t_pred);
            let sr = d.score(&mut gd, &rs)?;
            let sf = d.score(&mut gd, &fs)?;
            let lr = losses::bce(&mut gd, sr, &vec![1.0; n]);
            let lf = losses::bce(&mut gd, sf, &vec![0.0; n]);
            let dl = gd.add(lr, lf);
            aux_v = gd.value(dl).item();
            check_loss(aux_v, "discriminator loss", 0, 0)?;
            gd.backward(dl);
            gd.accumulate(&mut d.store);
            opt_d.step(&mut d.store)?;
        }
        Ok((loss_v, recon_v, aux_v))
    }

    fn fit(&mut self, corpus: &Corpus, classes: Option<&[usize]>, cfg: &ForecasterConfig) -> Result<()> {
        if corpus.is_empty() {
            return Err(Error::invalid("cannot train on an empty corpus"));
        }
        if corpus.t_obs != self.t_obs || corpus.t_pred != self.t_pred {
            return Err(Error::Config(format!(
                "corpus shape ({}, {}) differs from config ({}, {})",
                corpus.t_obs, corpus.t_pred, self.t_obs, self.t_pred
            )));
        }
        if cfg.standardize {
            self.standardizer = Standardizer::fit(&corpus.samples)?;
        }
        let st = self.standardizer;
        let obs: Vec<Vec<Point>> = corpus
            .samples
            .iter()
            .map(|s| s.observed_deltas().iter().map(|&p| st.apply_step(p)).collect())
            .collect();
        let fut: Vec<Vec<Point>> = corpus
            .samples
            .iter()
            .map(|s| s.future_deltas().iter().map(|&p| st.apply_step(p)).collect())
            .collect();
        let integ = integration_matrix(self.t_pred);
        let mut opt_g = Adam::new(cfg.adam);
        let mut opt_d = self.disc.is_some().then(|| Adam::new(cfg.adam));
        let mut batch_rng = seed::child_rng(cfg.seed, "seq2seq/batches", 0);
        let mut noise_rng = seed::child_rng(cfg.seed, "seq2seq/noise", 0);
        let mut step = 0;
        for epoch in 0..cfg.epochs {
            let mut sums = (0.0, 0.0, 0.0);
            let batches = minibatches(corpus.len(), cfg.batch, &mut batch_rng);
            let count = batches.len();
            for idx in batches {
                let b = Batch {
                    obs: idx.iter().map(|&i| obs[i].clone()).collect(),
                    future: idx.iter().map(|&i| fut[i].clone()).collect(),
                    classes: classes.map(|c| idx.iter().map(|&i| c[i]).collect()),
                };
                let (l, r, a) = self
                    .train_batch(&b, &mut noise_rng, &mut opt_g, opt_d.as_mut(), &integ)
                    .map_err(|e| match e {
                        Error::Divergence(msg) => Error::Divergence(format!("{msg} (epoch {epoch}, step {step})")),
                        other => other,
                    })?;
                sums.0 += l;
                sums.1 += r;
                sums.2 += a;
                step += 1;
            }
            let c = count.max(1) as f64;
            self.log.push(EpochLog {
                epoch,
                loss: sums.0 / c,
                recon: sums.1 / c,
                aux: sums.2 / c,
            });
        }
        self.trained = true;
        Ok(())
    }
}

/// Trains CF-GAN or CF-VAE.
pub fn cf_generative_train(corpus: &Corpus, cfg: &ForecasterConfig) -> Result<Seq2Seq> {
    if !matches!(cfg.kind, ForecasterKind::CfGan | ForecasterKind::CfVae) {
        return Err(Error::Config(format!("{} is not a context-free generative kind", cfg.kind.name())));
    }
    let mut model = Seq2Seq::new(cfg, 0)?;
    model.fit(corpus, None, cfg)?;
    Ok(model)
}

/// `n` futures with fresh noise per sample, in generation order.
pub fn cf_sample(model: &Seq2Seq, obs: &DisplacementSeries, n: usize, seed: u64) -> Result<Vec<DisplacementSeries>> {
    if n == 0 {
        return Err(Error::invalid("cf_sample needs n >= 1"));
    }
    let mut rng = seed::rng(seed);
    let z = model.noise(n, &mut rng);
    let rows = vec![obs; n];
    let classes: Option<Vec<usize>> = (model.k > 0).then(|| vec![0; n]);
    let futures = model.generate(&rows, classes.as_deref(), &z)?;
    let origin = obs.last_observed_position();
    futures
        .into_iter()
        .map(|f| DisplacementSeries::new(f, 0, model.t_pred, origin))
        .collect()
}

/// Trains GAN-OURS or VAE-OURS conditioned on `space`'s assignments.
pub fn ours_train(corpus: &Corpus, space: &ClusterSpace, cfg: &ForecasterConfig) -> Result<Seq2Seq> {
    if !cfg.kind.is_conditioned() {
        return Err(Error::Config(format!("{} is not a conditioned kind", cfg.kind.name())));
    }
    if space.n() != corpus.len() {
        return Err(Error::LengthMismatch {
            what: "cluster assignments",
            expected: corpus.len(),
            actual: space.n(),
        });
    }
    let mut model = Seq2Seq::new(cfg, space.k)?;
    model.space_id = Some(space.id.clone());
    model.fit(corpus, Some(&space.assignments), cfg)?;
    Ok(model)
}

/// One proposal per cluster. With `n_z == 1` a single noise draw is shared
/// by every cluster; larger `n_z` averages that many shared draws.
pub fn ours_propose(model: &Seq2Seq, obs: &DisplacementSeries, space: &ClusterSpace, n_z: usize, seed: u64) -> Result<ProposalSet> {
    let expected = model.space_id.as_deref().unwrap_or_default();
    if expected != space.id {
        return Err(Error::Lineage {
            expected: expected.to_string(),
            found: space.id.clone(),
        });
    }
    if n_z == 0 {
        return Err(Error::invalid("n_z must be at least 1"));
    }
    let k = model.k;
    let mut rng = seed::rng(seed);
    let mut acc = vec![vec![[0.0; 2]; model.t_pred]; k];
    let classes: Vec<usize> = (0..k).collect();
    let rows = vec![obs; k];
    for _ in 0..n_z {
        let z1 = model.noise(1, &mut rng);
        let mut z = Tensor::zeros(k, model.z_dim);
        for r in 0..k {
            z.data[r * model.z_dim..(r + 1) * model.z_dim].copy_from_slice(&z1.data);
        }
        let out = model.generate(&rows, Some(&classes), &z)?;
        for (a, o) in acc.iter_mut().zip(&out) {
            for (s, p) in a.iter_mut().zip(o) {
                s[0] += p[0] / n_z as f64;
                s[1] += p[1] / n_z as f64;
            }
        }
    }
    let proposals = acc
        .into_iter()
        .enumerate()
        .map(|(c, deltas)| Proposal { cluster: Some(c), deltas })
        .collect();
    Ok(ProposalSet::new(
        model.kind.name(),
        proposals,
        Some(obs.observed_deltas().to_vec()),
        obs.last_observed_position(),
    ))
}
