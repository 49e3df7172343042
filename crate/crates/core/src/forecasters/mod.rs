//! Predictors of future displacements: the constant-velocity and RED
//! baselines, the context-free generative baselines and the
//! cluster-conditioned proposal generators.

mod cvm;
mod red;
mod seq2seq;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::losses::AdversarialTerm;
use crate::nn::AdamConfig;
use crate::seed::Rng;
use crate::trajectory::{DisplacementSeries, Point};

pub use cvm::{cvm_predict, cvm_weights, DEFAULT_SIGMA};
pub use red::{red_predict, red_train, Red};
pub use seq2seq::{cf_generative_train, cf_sample, ours_propose, ours_train, Recognition, Seq2Seq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ForecasterKind {
    #[default]
    Cvm,
    Red,
    CfGan,
    CfVae,
    GanOurs,
    VaeOurs,
}

impl ForecasterKind {
    pub fn name(self) -> &'static str {
        match self {
            ForecasterKind::Cvm => "cvm",
            ForecasterKind::Red => "red",
            ForecasterKind::CfGan => "cf-gan",
            ForecasterKind::CfVae => "cf-vae",
            ForecasterKind::GanOurs => "gan-ours",
            ForecasterKind::VaeOurs => "vae-ours",
        }
    }

    pub fn is_conditioned(self) -> bool {
        matches!(self, ForecasterKind::GanOurs | ForecasterKind::VaeOurs)
    }

    pub fn is_gan(self) -> bool {
        matches!(self, ForecasterKind::CfGan | ForecasterKind::GanOurs)
    }

    pub fn is_vae(self) -> bool {
        matches!(self, ForecasterKind::CfVae | ForecasterKind::VaeOurs)
    }

    pub fn is_generative(self) -> bool {
        self.is_gan() || self.is_vae()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecasterConfig {
    pub kind: ForecasterKind,
    pub embed_dim: usize,
    pub lstm_dim: usize,
    pub decode_dim: usize,
    /// RED's MLP hidden sizes.
    pub red_hidden: Vec<usize>,
    /// Discriminator classifier hidden size.
    pub disc_hidden: usize,
    pub t_obs: usize,
    pub t_pred: usize,
    /// Weight of the reconstruction term.
    pub lambda: f64,
    /// Generator-side adversarial term (GAN kinds).
    pub adversarial: AdversarialTerm,
    /// Weight of the KL term (VAE kinds).
    pub beta: f64,
    pub z_dim: usize,
    /// Samples per example in the k-variety loss (context-free kinds).
    pub k_variety: usize,
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// CVM kernel width in steps.
    pub cvm_sigma: f64,
    /// Fit a per-axis standardizer on the training displacements.
    pub standardize: bool,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            kind: ForecasterKind::Cvm,
            embed_dim: 16,
            lstm_dim: 64,
            decode_dim: 32,
            red_hidden: vec![32, 16],
            disc_hidden: 32,
            t_obs: 8,
            t_pred: 12,
            lambda: 0.5,
            adversarial: AdversarialTerm::AsWritten,
            beta: 1.0,
            z_dim: 8,
            k_variety: 3,
            epochs: 50,
            batch: 64,
            adam: AdamConfig {
                clip_norm: Some(10.0),
                ..AdamConfig::default()
            },
            seed: 0,
            cvm_sigma: DEFAULT_SIGMA,
            standardize: false,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("embed_dim", self.embed_dim),
            ("lstm_dim", self.lstm_dim),
            ("decode_dim", self.decode_dim),
            ("disc_hidden", self.disc_hidden),
            ("t_obs", self.t_obs),
            ("t_pred", self.t_pred),
            ("z_dim", self.z_dim),
            ("k_variety", self.k_variety),
            ("batch", self.batch),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("forecaster {name} must be positive")));
            }
        }
        if self.red_hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("RED hidden sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config("beta must be non-negative".into()));
        }
        if !(self.cvm_sigma >= 0.0) {
            return Err(Error::Config("cvm_sigma must be non-negative".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One predicted future, optionally tagged with the cluster it was conditioned on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub cluster: Option<usize>,
    /// Future displacements, `t_pred` steps.
    pub deltas: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub source: String,
    pub proposals: Vec<Proposal>,
    pub probabilities: Option<Vec<f64>>,
    /// Observed displacements the proposals continue; needed by full-series ranking operands.
    pub observed: Option<Vec<Point>>,
    /// Last observed position, the integration start for position metrics.
    pub origin: Point,
}

impl ProposalSet {
    pub fn new(source: impl Into<String>, proposals: Vec<Proposal>, observed: Option<Vec<Point>>, origin: Point) -> Self {
        Self {
            source: source.into(),
            proposals,
            probabilities: None,
            observed,
            origin,
        }
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    /// Builds an unconditioned set from samples in generation order.
    pub fn from_samples(source: impl Into<String>, obs: &DisplacementSeries, samples: Vec<Vec<Point>>) -> Self {
        let proposals = samples
            .into_iter()
            .map(|deltas| Proposal { cluster: None, deltas })
            .collect();
        Self::new(source, proposals, Some(obs.observed_deltas().to_vec()), obs.last_observed_position())
    }

    /// Checks the cardinality and probability invariants.
    pub fn validate(&self) -> Result<()> {
        if self.proposals.iter().any(|p| p.cluster.is_some()) {
            let mut ids: Vec<usize> = self.proposals.iter().filter_map(|p| p.cluster).collect();
            if ids.len() != self.proposals.len() {
                return Err(Error::invalid("mixed conditioned and unconditioned proposals"));
            }
            ids.sort_unstable();
            if ids != (0..self.proposals.len()).collect::<Vec<_>>() {
                return Err(Error::invalid("conditioned proposals must cover each cluster exactly once"));
            }
        }
        if let Some(p) = &self.probabilities {
            if p.len() != self.proposals.len() {
                return Err(Error::LengthMismatch {
                    what: "probabilities",
                    expected: self.proposals.len(),
                    actual: p.len(),
                });
            }
            if p.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::invalid("negative or NaN probability"));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("probabilities sum to {total}")));
            }
        }
        Ok(())
    }
}

/// Shuffled mini-batches of sample indices for one epoch.
pub fn minibatches(n: usize, batch: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

pub fn check_loss(value: f64, what: &str, epoch: usize, step: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence(format!("{what} became {value} at epoch {epoch}, step {step}")))
    }
}

/// Per-epoch mean training losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub recon: f64,
    /// Discriminator loss (GAN kinds) or KL (VAE kinds).
    pub aux: f64,
}

/// A trained predictor as persisted by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Forecaster {
    Cvm { sigma: f64, t_pred: usize },
    Red(Box<Red>),
    Generative(Box<Seq2Seq>),
}

impl Forecaster {
    pub fn kind(&self) -> ForecasterKind {
        match self {
            Forecaster::Cvm { .. } => ForecasterKind::Cvm,
            Forecaster::Red(_) => ForecasterKind::Red,
            Forecaster::Generative(m) => m.kind,
        }
    }

    /// Cluster space the model was trained against, for conditioned kinds.
    pub fn space_id(&self) -> Option<&str> {
        match self {
            Forecaster::Generative(m) => m.space_id.as_deref(),
            _ => None,
        }
    }
}
