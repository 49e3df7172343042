//! Full-path self-conditioned GAN: a class-conditional generator of whole
//! displacement series and a discriminator whose encoder features are
//! periodically reclustered to define the cluster space.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::cluster::{align_labels, kmeans, lloyd, ClusterSpace, Metric};
use crate::error::{Error, Result};
use crate::forecasters::{check_loss, minibatches, EpochLog};
use crate::ingest::Corpus;
use crate::nn::losses::AdversarialTerm;
use crate::nn::{
    integration_matrix, losses, one_hot, split_steps, step_inputs, Adam, AdamConfig, Discriminator, EncoderKind, Graph,
    Mlp, ParamStore, Tensor,
};
use crate::seed::{self, Rng};
use crate::trajectory::{flatten, flatten_steps, unflatten_steps, DisplacementSeries, Point, Standardizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpScGanConfig {
    pub embed_dim: usize,
    /// Discriminator encoder width; also the feature dimensionality.
    pub hidden: usize,
    pub classifier_hidden: usize,
    pub generator_hidden: Vec<usize>,
    pub encoder: EncoderKind,
    pub z_dim: usize,
    pub lambda: f64,
    pub adversarial: AdversarialTerm,
    pub epochs: usize,
    pub batch: usize,
    /// Optimizer steps between reclusters; `None` reclusters once per epoch.
    pub recluster_period: Option<usize>,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub adam: AdamConfig,
    pub standardize: bool,
}

impl Default for FpScGanConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            hidden: 64,
            classifier_hidden: 32,
            generator_hidden: vec![64, 64],
            encoder: EncoderKind::Lstm,
            z_dim: 8,
            lambda: 0.5,
            adversarial: AdversarialTerm::AsWritten,
            epochs: 30,
            batch: 64,
            recluster_period: None,
            kmeans_max_iter: 100,
            kmeans_tol: 1e-6,
            adam: AdamConfig {
                clip_norm: Some(10.0),
                ..AdamConfig::default()
            },
            standardize: false,
        }
    }
}

impl FpScGanConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("classifier_hidden", self.classifier_hidden),
            ("z_dim", self.z_dim),
            ("batch", self.batch),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("fp-scgan {name} must be positive")));
            }
        }
        if self.generator_hidden.contains(&0) {
            return Err(Error::Config("generator hidden sizes must be positive".into()));
        }
        if self.recluster_period == Some(0) {
            return Err(Error::Config("recluster period must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpScGanModel {
    pub k: usize,
    pub t_obs: usize,
    pub t_pred: usize,
    pub z_dim: usize,
    pub lambda: f64,
    pub recluster_period: usize,
    pub standardizer: Standardizer,
    pub store: ParamStore,
    pub generator: Mlp,
    pub disc: Discriminator,
    /// Current partition; flat k-Means until the first recluster, feature space afterwards.
    pub feature_space: ClusterSpace,
    pub reclusters: usize,
    pub log: Vec<EpochLog>,
}

impl FpScGanModel {
    pub fn steps(&self) -> usize {
        self.t_obs + self.t_pred
    }

    fn std_rows(&self, series: &[&[Point]]) -> Result<Vec<Vec<Point>>> {
        series
            .iter()
            .map(|s| {
                if s.len() != self.steps() {
                    return Err(Error::LengthMismatch {
                        what: "full series",
                        expected: self.steps(),
                        actual: s.len(),
                    });
                }
                Ok(s.iter().map(|&p| self.standardizer.apply_step(p)).collect())
            })
            .collect()
    }

    /// Encoder features of full displacement series, one row each.
    pub fn embed_steps(&self, series: &[&[Point]]) -> Result<Vec<Vec<f64>>> {
        if series.is_empty() {
            return Ok(Vec::new());
        }
        let rows = self.std_rows(series)?;
        let refs: Vec<&[Point]> = rows.iter().map(Vec::as_slice).collect();
        let mut g = Graph::new();
        let steps = step_inputs(&mut g, &refs, self.steps());
        let f = self.disc.features(&mut g, &steps)?;
        let v = g.value(f);
        Ok((0..series.len()).map(|r| v.row(r).to_vec()).collect())
    }

    fn generate(&self, classes: &[usize], z: &Tensor) -> Result<Vec<Vec<Point>>> {
        let mut g = Graph::new();
        let inp = g.constant(concat_noise(z, classes, self.k));
        let out = self.generator.forward(&mut g, &self.store, inp)?;
        let v = g.value(out);
        (0..classes.len())
            .map(|r| Ok(self.standardizer.invert_steps(&unflatten_steps(v.row(r))?)))
            .collect()
    }
}

fn concat_noise(z: &Tensor, classes: &[usize], k: usize) -> Tensor {
    let oh = one_hot(classes, k);
    let cols = z.cols + k;
    let mut data = Vec::with_capacity(z.rows * cols);
    for r in 0..z.rows {
        data.extend_from_slice(z.row(r));
        data.extend_from_slice(oh.row(r));
    }
    Tensor::from_vec(z.rows, cols, data)
}

/// Feature vector of a full series at the encoder output.
pub fn embed(model: &FpScGanModel, sample: &DisplacementSeries) -> Result<Vec<f64>> {
    Ok(model.embed_steps(&[&sample.deltas])?.remove(0))
}

/// Features of an observation continued by a predicted future.
pub fn embed_parts(model: &FpScGanModel, observed: &[Point], future: &[Point]) -> Result<Vec<f64>> {
    let full: Vec<Point> = observed.iter().chain(future).copied().collect();
    Ok(model.embed_steps(&[&full])?.remove(0))
}

/// `n` class draws following the space's empirical cluster weights.
pub fn draw_classes(weights: &[f64], n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(weights).map_err(|e| Error::invalid(format!("cluster weights: {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// `n` full series generated for cluster `c`, origin at zero.
pub fn sample_displacements(model: &FpScGanModel, c: usize, n: usize, seed: u64) -> Result<Vec<DisplacementSeries>> {
    if c >= model.k {
        return Err(Error::ClusterOutOfRange { id: c, k: model.k });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = seed::rng(seed);
    let z = Tensor::from_vec(n, model.z_dim, seed::normals(&mut rng, n * model.z_dim));
    model
        .generate(&vec![c; n], &z)?
        .into_iter()
        .map(|d| DisplacementSeries::new(d, model.t_obs, model.t_pred, [0.0, 0.0]))
        .collect()
}

fn recluster(model: &FpScGanModel, cfg: &FpScGanConfig, real: &[Vec<Point>], prev: &[usize], seed: u64) -> Result<ClusterSpace> {
    let refs: Vec<&[Point]> = real.iter().map(Vec::as_slice).collect();
    let feats = model.embed_steps(&refs)?;
    let fit = lloyd(&feats, model.k, seed, cfg.kmeans_max_iter, cfg.kmeans_tol)?;
    let mapping = align_labels(prev, &fit.assignments, model.k);
    let mut centroids = vec![Vec::new(); model.k];
    for (new, &old) in mapping.iter().enumerate() {
        centroids[old] = fit.centroids[new].clone();
    }
    let assignments = fit.assignments.iter().map(|&a| mapping[a]).collect();
    ClusterSpace::from_assignments("fp-scgan", Metric::FeatureL2, centroids, assignments, model.t_obs, model.t_pred)
}

/// Trains the self-conditioned GAN and returns it with its final cluster space.
pub fn train_fp_scgan(corpus: &Corpus, k: usize, cfg: &FpScGanConfig, seed: u64) -> Result<(FpScGanModel, ClusterSpace)> {
    cfg.validate()?;
    if k < 2 {
        return Err(Error::Config("fp-scgan needs k >= 2".into()));
    }
    if corpus.len() < k {
        return Err(Error::invalid(format!("{} samples cannot form {k} clusters", corpus.len())));
    }
    let t_obs = corpus.t_obs;
    let t_pred = corpus.t_pred;
    let steps = t_obs + t_pred;
    if let Some(s) = corpus.samples.iter().find(|s| s.deltas.len() != steps) {
        return Err(Error::LengthMismatch {
            what: "full series",
            expected: steps,
            actual: s.deltas.len(),
        });
    }
    let standardizer = if cfg.standardize {
        Standardizer::fit(&corpus.samples)?
    } else {
        Standardizer::identity()
    };
    let flat: Vec<_> = corpus.samples.iter().map(flatten).collect();
    let initial = kmeans(&flat, k, seed::derive_seed(seed, "fp-scgan/init-kmeans", 0), cfg.kmeans_max_iter, cfg.kmeans_tol)?
        .with_shape(t_obs, t_pred);

    let mut rng = seed::child_rng(seed, "fp-scgan/init", 0);
    let mut store = ParamStore::new();
    let mut dims = vec![cfg.z_dim + k];
    dims.extend(&cfg.generator_hidden);
    dims.push(2 * steps);
    let generator = Mlp::new(&mut store, "fpgan.gen", &dims, &mut rng);
    let disc = Discriminator::new(cfg.encoder, steps, cfg.embed_dim, cfg.hidden, cfg.classifier_hidden, &mut rng);
    let per_epoch = corpus.len().div_ceil(cfg.batch);
    let mut model = FpScGanModel {
        k,
        t_obs,
        t_pred,
        z_dim: cfg.z_dim,
        lambda: cfg.lambda,
        recluster_period: cfg.recluster_period.unwrap_or(per_epoch),
        standardizer,
        store,
        generator,
        disc,
        feature_space: initial,
        reclusters: 0,
        log: Vec::new(),
    };

    let real: Vec<Vec<Point>> = corpus
        .samples
        .iter()
        .map(|s| s.deltas.iter().map(|&p| standardizer.apply_step(p)).collect())
        .collect();
    let integ = integration_matrix(steps);
    let mut opt_g = Adam::new(cfg.adam);
    let mut opt_d = Adam::new(cfg.adam);
    let mut batch_rng = seed::child_rng(seed, "fp-scgan/batches", 0);
    let mut noise_rng = seed::child_rng(seed, "fp-scgan/noise", 0);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut sums = (0.0, 0.0, 0.0);
        let batches = minibatches(corpus.len(), cfg.batch, &mut batch_rng);
        let count = batches.len();
        for idx in batches {
            let n = idx.len();
            let classes: Vec<usize> = idx.iter().map(|&i| model.feature_space.assignments[i]).collect();
            let real_rows: Vec<&[Point]> = idx.iter().map(|&i| real[i].as_slice()).collect();
            let z = Tensor::from_vec(n, cfg.z_dim, seed::normals(&mut noise_rng, n * cfg.z_dim));

            // generator step
            let mut g = Graph::new();
            let inp = g.constant(concat_noise(&z, &classes, k));
            let fake = model.generator.forward(&mut g, &model.store, inp)?;
            let m = g.constant(integ.clone());
            let fake_pos = g.matmul(fake, m);
            let target = Tensor::from_rows(&real_rows.iter().map(|r| flatten_steps(r)).collect::<Vec<_>>());
            let real_pos = g.constant(target.matmul(&integ));
            let recon = losses::mse(&mut g, fake_pos, real_pos);
            let fake_steps = split_steps(&mut g, fake, steps);
            let real_steps = step_inputs(&mut g, &real_rows, steps);
            let s_fake = model.disc.score(&mut g, &fake_steps)?;
            let s_real = model.disc.score(&mut g, &real_steps)?;
            let adv = losses::generator_adversarial(&mut g, s_real, s_fake, cfg.adversarial);
            let a = g.scale(recon, cfg.lambda);
            let b = g.scale(adv, 1.0 - cfg.lambda);
            let loss = g.add(a, b);
            let g_loss = g.value(loss).item();
            let recon_v = g.value(recon).item();
            check_loss(g_loss, "fp-scgan generator loss", epoch, step)?;
            g.backward(loss);
            g.accumulate(&mut model.store);
            opt_g.step(&mut model.store)?;

            // discriminator step on the same fakes
            let fake_rows: Vec<Vec<Point>> = (0..n).map(|r| unflatten_steps(g.value(fake).row(r))).collect::<Result<_>>()?;
            let fake_refs: Vec<&[Point]> = fake_rows.iter().map(Vec::as_slice).collect();
            let mut gd = Graph::new();
            let rs = step_inputs(&mut gd, &real_rows, steps);
            let fs = step_inputs(&mut gd, &fake_refs, steps);
            let sr = model.disc.score(&mut gd, &rs)?;
            let sf = model.disc.score(&mut gd, &fs)?;
            let br = losses::bce(&mut gd, sr, &vec![1.0; n]);
            let bf = losses::bce(&mut gd, sf, &vec![0.0; n]);
            let dl = gd.add(br, bf);
            let d_loss = gd.value(dl).item();
            check_loss(d_loss, "fp-scgan discriminator loss", epoch, step)?;
            gd.backward(dl);
            gd.accumulate(&mut model.disc.store);
            opt_d.step(&mut model.disc.store)?;

            sums.0 += g_loss;
            sums.1 += recon_v;
            sums.2 += d_loss;
            step += 1;
            if step % model.recluster_period == 0 {
                let prev = model.feature_space.assignments.clone();
                let s = seed::derive_seed(seed, "fp-scgan/recluster", model.reclusters as u64);
                model.feature_space = recluster(&model, cfg, &real, &prev, s)?;
                model.reclusters += 1;
            }
        }
        let c = count.max(1) as f64;
        model.log.push(EpochLog {
            epoch,
            loss: sums.0 / c,
            recon: sums.1 / c,
            aux: sums.2 / c,
        });
    }
    let space = model.feature_space.clone();
    Ok((model, space))
}
