use serde::{Deserialize, Serialize};

use super::{Graph, Linear, LstmCell, LstmState, Mlp, ParamStore, Prelu, Tensor, Var};
use crate::error::Result;
use crate::seed::Rng;
use crate::trajectory::Point;

/// One `batch x 2` constant per step; every row must have `steps` points.
pub fn step_inputs(g: &mut Graph, rows: &[&[Point]], steps: usize) -> Vec<Var> {
    (0..steps)
        .map(|t| {
            let data = rows.iter().flat_map(|r| r[t]).collect();
            g.constant(Tensor::from_vec(rows.len(), 2, data))
        })
        .collect()
}

/// `batch x k` one-hot rows.
pub fn one_hot(classes: &[usize], k: usize) -> Tensor {
    let mut t = Tensor::zeros(classes.len(), k);
    for (r, &c) in classes.iter().enumerate() {
        t.data[r * k + c] = 1.0;
    }
    t
}

/// Per-step linear embedding with PReLU, optional per-step conditioning
/// concatenated after the embedding, then an LSTM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEncoder {
    pub embed: Linear,
    pub act: Prelu,
    pub lstm: LstmCell,
    pub cond_dim: usize,
}

impl StepEncoder {
    pub fn new(store: &mut ParamStore, name: &str, embed: usize, cond_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            embed: Linear::new(store, &format!("{name}.embed"), 2, embed, rng),
            act: Prelu::new(store, &format!("{name}.embed.act"), embed),
            lstm: LstmCell::new(store, &format!("{name}.lstm"), embed + cond_dim, hidden, rng),
            cond_dim,
        }
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden
    }

    /// Embeds one step and appends the conditioning columns.
    pub fn input(&self, g: &mut Graph, store: &ParamStore, x: Var, cond: Option<Var>) -> Result<Var> {
        let e = self.embed.forward(g, store, x)?;
        let e = self.act.forward(g, store, e)?;
        Ok(match cond {
            Some(c) => g.concat_cols(&[e, c]),
            None => e,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, steps: &[Var], cond: Option<Var>) -> Result<LstmState> {
        let batch = g.shape(steps[0]).0;
        let mut s = self.lstm.zero_state(g, batch);
        for &x in steps {
            let inp = self.input(g, store, x, cond)?;
            s = self.lstm.step(g, store, inp, s)?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    #[default]
    Lstm,
    Mlp,
}

/// Feature extractor of a discriminator: LSTM over steps or MLP over the flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Encoder {
    Lstm(StepEncoder),
    Mlp(Mlp),
}

impl Encoder {
    pub fn features(&self, g: &mut Graph, store: &ParamStore, steps: &[Var]) -> Result<Var> {
        match self {
            Encoder::Lstm(enc) => Ok(enc.forward(g, store, steps, None)?.h),
            Encoder::Mlp(mlp) => {
                let flat = g.concat_cols(steps);
                mlp.forward(g, store, flat)
            }
        }
    }
}

/// Encoder plus classifier MLP ending in a sigmoid score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub classifier: Mlp,
    pub steps: usize,
}

pub const DISC_TAG: u8 = 1;

impl Discriminator {
    pub fn new(
        kind: EncoderKind,
        steps: usize,
        embed: usize,
        hidden: usize,
        classifier_hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        let mut store = ParamStore::with_tag(DISC_TAG);
        let encoder = match kind {
            EncoderKind::Lstm => Encoder::Lstm(StepEncoder::new(&mut store, "disc.enc", embed, 0, hidden, rng)),
            EncoderKind::Mlp => Encoder::Mlp(Mlp::new(&mut store, "disc.enc", &[2 * steps, hidden, hidden], rng)),
        };
        let classifier = Mlp::new(&mut store, "disc.cls", &[hidden, classifier_hidden, 1], rng);
        Self {
            store,
            encoder,
            classifier,
            steps,
        }
    }

    pub fn features(&self, g: &mut Graph, steps: &[Var]) -> Result<Var> {
        self.encoder.features(g, &self.store, steps)
    }

    /// Sigmoid probability that each row is real, `batch x 1`.
    pub fn score(&self, g: &mut Graph, steps: &[Var]) -> Result<Var> {
        let f = self.features(g, steps)?;
        let logit = self.classifier.forward(g, &self.store, f)?;
        Ok(g.sigmoid(logit))
    }
}

/// Splits a `batch x 2T` tensor node into `T` step nodes.
pub fn split_steps(g: &mut Graph, flat: Var, steps: usize) -> Vec<Var> {
    (0..steps).map(|t| g.slice_cols(flat, 2 * t, 2)).collect()
}
