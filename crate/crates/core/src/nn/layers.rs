use serde::{Deserialize, Serialize};

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed::Rng;

pub const PRELU_INIT: f64 = 0.25;
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Linear,
    Prelu,
    LstmCell,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub init: String,
}

fn check_cols(g: &Graph, x: Var, layer: &str, want: usize) -> Result<()> {
    let (r, c) = g.shape(x);
    if c != want {
        return Err(Error::Shape {
            layer: layer.to_string(),
            expected: format!("(batch, {want})"),
            actual: format!("({r}, {c})"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        assert!(in_dim >= 1 && out_dim >= 1, "layer dims must be positive");
        let w = store.add_uniform(format!("{name}.w"), in_dim, out_dim, in_dim, rng);
        let b = store.add(format!("{name}.b"), Tensor::zeros(1, out_dim));
        Self {
            name: name.to_string(),
            in_dim,
            out_dim,
            w,
            b,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        check_cols(g, x, &self.name, self.in_dim)?;
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w);
        Ok(g.add_row_bias(y, b))
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> ParamId {
        self.b
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Linear,
            name: self.name.clone(),
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            init: "uniform-fan-in".into(),
        }
    }
}

/// PReLU with one learnable slope shared by all units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prelu {
    pub name: String,
    pub dim: usize,
    slope: ParamId,
}

impl Prelu {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let slope = store.add(format!("{name}.slope"), Tensor::scalar(PRELU_INIT));
        Self {
            name: name.to_string(),
            dim,
            slope,
        }
    }

    pub fn slope(&self) -> ParamId {
        self.slope
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        check_cols(g, x, &self.name, self.dim)?;
        let s = g.param(store, self.slope);
        Ok(g.prelu(x, s))
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Prelu,
            name: self.name.clone(),
            in_dim: self.dim,
            out_dim: self.dim,
            init: format!("slope-{PRELU_INIT}"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub name: String,
    pub in_dim: usize,
    pub hidden: usize,
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        assert!(in_dim >= 1 && hidden >= 1, "layer dims must be positive");
        let wx = store.add_uniform(format!("{name}.wx"), in_dim, 4 * hidden, hidden, rng);
        let wh = store.add_uniform(format!("{name}.wh"), hidden, 4 * hidden, hidden, rng);
        let mut bias = Tensor::zeros(1, 4 * hidden);
        bias.data[hidden..2 * hidden].iter_mut().for_each(|v| *v = FORGET_BIAS);
        let b = store.add(format!("{name}.b"), bias);
        Self {
            name: name.to_string(),
            in_dim,
            hidden,
            wx,
            wh,
            b,
        }
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> LstmState {
        let h = g.constant(Tensor::zeros(batch, self.hidden));
        let c = g.constant(Tensor::zeros(batch, self.hidden));
        LstmState { h, c }
    }

    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, s: LstmState) -> Result<LstmState> {
        check_cols(g, x, &self.name, self.in_dim)?;
        check_cols(g, s.h, &self.name, self.hidden)?;
        let wx = g.param(store, self.wx);
        let wh = g.param(store, self.wh);
        let b = g.param(store, self.b);
        let hc = g.lstm(x, s.h, s.c, wx, wh, b);
        let h = g.slice_cols(hc, 0, self.hidden);
        let c = g.slice_cols(hc, self.hidden, self.hidden);
        Ok(LstmState { h, c })
    }

    /// Runs the cell over `xs` from a zero state; returns the final state.
    pub fn run(&self, g: &mut Graph, store: &ParamStore, xs: &[Var]) -> Result<LstmState> {
        let batch = xs.first().map_or(1, |&x| g.shape(x).0);
        let mut s = self.zero_state(g, batch);
        for &x in xs {
            s = self.step(g, store, x, s)?;
        }
        Ok(s)
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::LstmCell,
            name: self.name.clone(),
            in_dim: self.in_dim,
            out_dim: self.hidden,
            init: format!("uniform-fan-in, forget-bias-{FORGET_BIAS}"),
        }
    }
}

/// Linear layers with PReLU after every hidden layer; the output layer is affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub linears: Vec<Linear>,
    pub acts: Vec<Prelu>,
}

impl Mlp {
    /// `dims = [in, hidden..., out]`.
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output dims");
        let mut linears = Vec::new();
        let mut acts = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            linears.push(Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng));
            if i + 2 < dims.len() {
                acts.push(Prelu::new(store, &format!("{name}.{i}.act"), w[1]));
            }
        }
        Self { linears, acts }
    }

    pub fn in_dim(&self) -> usize {
        self.linears[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.linears.last().expect("non-empty").out_dim
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, mut x: Var) -> Result<Var> {
        for (i, lin) in self.linears.iter().enumerate() {
            x = lin.forward(g, store, x)?;
            if let Some(act) = self.acts.get(i) {
                x = act.forward(g, store, x)?;
            }
        }
        Ok(x)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        for (i, lin) in self.linears.iter().enumerate() {
            out.push(lin.spec());
            if let Some(act) = self.acts.get(i) {
                out.push(act.spec());
            }
        }
        out
    }
}
