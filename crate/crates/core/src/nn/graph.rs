//! Reverse-mode tape over [`Tensor`] values, rebuilt for every training step.

use std::collections::HashMap;

use super::{ParamId, ParamStore, Tensor};

/// Log arguments are clamped here.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Prelu(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    RowMean(Var),
    Mean(Var),
    Sum(Var),
    MinOf(Vec<Var>, Vec<usize>),
    Lstm {
        x: Var,
        h: Var,
        c: Var,
        wx: Var,
        wh: Var,
        b: Var,
        gates: Tensor,
        tanh_c: Tensor,
    },
    Bce(Var, Vec<f64>),
    Xent(Var, Vec<usize>, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<(u8, ParamId), Var>,
    grads: Vec<Option<Tensor>>,
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Brings a parameter onto the tape; repeated calls reuse one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let key = (store.tag(), id);
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let v = self.push(store.get(id).value.clone(), Op::Leaf);
        self.params.insert(key, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// Adds a `1 x cols` bias to every row.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (self.value(a), self.value(bias));
        assert_eq!((1, x.cols), b.shape(), "bias shape");
        let mut out = x.clone();
        for r in 0..out.rows {
            for (o, bv) in out.data[r * x.cols..(r + 1) * x.cols].iter_mut().zip(&b.data) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRowBias(a, bias))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shapes");
        let data = x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect();
        let out = Tensor::from_vec(x.rows, x.cols, data);
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p - q, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p * q, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    /// `x` where positive, `slope * x` otherwise; `slope` is `1 x 1`.
    pub fn prelu(&mut self, a: Var, slope: Var) -> Var {
        let s = self.value(slope).item();
        let out = self.value(a).map(|v| if v > 0.0 { v } else { s * v });
        self.push(out, Op::Prelu(a, slope))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows, rows, "concat rows");
            for r in 0..rows {
                out.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(t.row(r));
            }
            off += t.cols;
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let t = self.value(a);
        assert!(start + width <= t.cols, "slice out of range");
        let mut out = Tensor::zeros(t.rows, width);
        for r in 0..t.rows {
            out.data[r * width..(r + 1) * width].copy_from_slice(&t.row(r)[start..start + width]);
        }
        self.push(out, Op::Slice(a, start))
    }

    /// Per-row mean, `rows x 1`.
    pub fn row_mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows).map(|r| t.row(r).iter().sum::<f64>() / t.cols as f64).collect();
        let out = Tensor::from_vec(t.rows, 1, data);
        self.push(out, Op::RowMean(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::scalar(t.data.iter().sum::<f64>() / t.len() as f64);
        self.push(out, Op::Mean(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data.iter().sum());
        self.push(out, Op::Sum(a))
    }

    /// Elementwise minimum across equally shaped inputs; ties go to the first.
    pub fn min_of(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "min of nothing");
        let first = self.value(parts[0]);
        let mut out = first.clone();
        let mut arg = vec![0; out.len()];
        for (k, &p) in parts.iter().enumerate().skip(1) {
            let t = self.value(p);
            assert_eq!(t.shape(), out.shape(), "min_of shapes");
            for (i, &v) in t.data.iter().enumerate() {
                if v < out.data[i] {
                    out.data[i] = v;
                    arg[i] = k;
                }
            }
        }
        self.push(out, Op::MinOf(parts.to_vec(), arg))
    }

    /// One LSTM step. Gate order i, f, g, o. Returns `[h' | c']`.
    pub fn lstm(&mut self, x: Var, h: Var, c: Var, wx: Var, wh: Var, b: Var) -> Var {
        let hid = self.value(h).cols;
        let mut pre = self.value(x).matmul(self.value(wx));
        pre.add_assign(&self.value(h).matmul(self.value(wh)));
        let bias = self.value(b);
        let rows = pre.rows;
        let w = 4 * hid;
        let cprev = self.value(c);
        let mut out = Tensor::zeros(rows, 2 * hid);
        let mut tanh_c = Tensor::zeros(rows, hid);
        for r in 0..rows {
            let g = &mut pre.data[r * w..(r + 1) * w];
            for (j, v) in g.iter_mut().enumerate() {
                *v += bias.data[j];
                *v = if (2 * hid..3 * hid).contains(&j) { v.tanh() } else { sigmoid(*v) };
            }
            for j in 0..hid {
                let cn = g[hid + j] * cprev.data[r * hid + j] + g[j] * g[2 * hid + j];
                let tc = cn.tanh();
                tanh_c.data[r * hid + j] = tc;
                out.data[r * 2 * hid + j] = g[3 * hid + j] * tc;
                out.data[r * 2 * hid + hid + j] = cn;
            }
        }
        self.push(
            out,
            Op::Lstm {
                x,
                h,
                c,
                wx,
                wh,
                b,
                gates: pre,
                tanh_c,
            },
        )
    }

    /// Mean binary cross-entropy of probabilities against 0/1 targets.
    pub fn bce(&mut self, prob: Var, labels: &[f64]) -> Var {
        let p = self.value(prob);
        assert_eq!(p.len(), labels.len(), "bce labels");
        let total: f64 = p
            .data
            .iter()
            .zip(labels)
            .map(|(&q, &y)| -(y * q.max(LOG_FLOOR).ln() + (1.0 - y) * (1.0 - q).max(LOG_FLOOR).ln()))
            .sum();
        let out = Tensor::scalar(total / labels.len() as f64);
        self.push(out, Op::Bce(prob, labels.to_vec()))
    }

    /// Mean softmax cross-entropy of row logits against class ids.
    pub fn xent(&mut self, logits: Var, classes: &[usize]) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows, classes.len(), "xent classes");
        let mut probs = Tensor::zeros(l.rows, l.cols);
        let mut total = 0.0;
        for (r, &c) in classes.iter().enumerate() {
            assert!(c < l.cols, "class {c} out of range");
            let p = super::softmax(l.row(r));
            total -= p[c].max(LOG_FLOOR).ln();
            probs.data[r * l.cols..(r + 1) * l.cols].copy_from_slice(&p);
        }
        let out = Tensor::scalar(total / classes.len() as f64);
        self.push(out, Op::Xent(logits, classes.to_vec(), probs))
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let val = &node.value;
            let v = |x: Var| &self.nodes[x.0].value;
            let mut put = |x: Var, t: Tensor| match &mut grads[x.0] {
                Some(g) => g.add_assign(&t),
                slot => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    put(*a, dy.matmul_t(v(*b)));
                    put(*b, v(*a).t_matmul(&dy));
                }
                Op::AddRowBias(a, b) => {
                    put(*b, dy.col_sums());
                    put(*a, dy.clone());
                }
                Op::Add(a, b) => {
                    put(*a, dy.clone());
                    put(*b, dy.clone());
                }
                Op::Sub(a, b) => {
                    put(*b, dy.map(|g| -g));
                    put(*a, dy.clone());
                }
                Op::Mul(a, b) => {
                    let ga = zip_t(&dy, v(*b), |g, y| g * y);
                    let gb = zip_t(&dy, v(*a), |g, x| g * x);
                    put(*a, ga);
                    put(*b, gb);
                }
                Op::Scale(a, s) => put(*a, dy.map(|g| g * s)),
                Op::Sigmoid(a) => put(*a, zip_t(&dy, val, |g, y| g * y * (1.0 - y))),
                Op::Tanh(a) => put(*a, zip_t(&dy, val, |g, y| g * (1.0 - y * y))),
                Op::Exp(a) => put(*a, zip_t(&dy, val, |g, y| g * y)),
                Op::Prelu(a, slope) => {
                    let s = v(*slope).item();
                    let x = v(*a);
                    let mut gs = 0.0;
                    let mut ga = dy.clone();
                    for (g, &xv) in ga.data.iter_mut().zip(&x.data) {
                        if xv <= 0.0 {
                            gs += *g * xv;
                            *g *= s;
                        }
                    }
                    put(*a, ga);
                    put(*slope, Tensor::scalar(gs));
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = v(p).cols;
                        let mut g = Tensor::zeros(dy.rows, w);
                        for r in 0..dy.rows {
                            g.data[r * w..(r + 1) * w].copy_from_slice(&dy.row(r)[off..off + w]);
                        }
                        off += w;
                        put(p, g);
                    }
                }
                Op::Slice(a, start) => {
                    let src = v(*a);
                    let mut g = Tensor::zeros(src.rows, src.cols);
                    for r in 0..dy.rows {
                        g.data[r * src.cols + start..r * src.cols + start + dy.cols].copy_from_slice(dy.row(r));
                    }
                    put(*a, g);
                }
                Op::RowMean(a) => {
                    let src = v(*a);
                    let mut g = Tensor::zeros(src.rows, src.cols);
                    for r in 0..src.rows {
                        let d = dy.data[r] / src.cols as f64;
                        g.data[r * src.cols..(r + 1) * src.cols].iter_mut().for_each(|x| *x = d);
                    }
                    put(*a, g);
                }
                Op::Mean(a) => {
                    let src = v(*a);
                    put(*a, Tensor::filled(src.rows, src.cols, dy.item() / src.len() as f64));
                }
                Op::Sum(a) => {
                    let src = v(*a);
                    put(*a, Tensor::filled(src.rows, src.cols, dy.item()));
                }
                Op::MinOf(parts, arg) => {
                    for (k, &p) in parts.iter().enumerate() {
                        let mut g = Tensor::zeros(dy.rows, dy.cols);
                        let mut any = false;
                        for (i, &a) in arg.iter().enumerate() {
                            if a == k {
                                g.data[i] = dy.data[i];
                                any = true;
                            }
                        }
                        if any {
                            put(p, g);
                        }
                    }
                }
                Op::Lstm {
                    x,
                    h,
                    c,
                    wx,
                    wh,
                    b,
                    gates,
                    tanh_c,
                } => {
                    let hid = v(*h).cols;
                    let rows = dy.rows;
                    let cprev = v(*c);
                    let mut dg = Tensor::zeros(rows, 4 * hid);
                    let mut dc_prev = Tensor::zeros(rows, hid);
                    for r in 0..rows {
                        let g = &gates.data[r * 4 * hid..(r + 1) * 4 * hid];
                        let d = &mut dg.data[r * 4 * hid..(r + 1) * 4 * hid];
                        for j in 0..hid {
                            let (gi, gf, gg, go) = (g[j], g[hid + j], g[2 * hid + j], g[3 * hid + j]);
                            let tc = tanh_c.data[r * hid + j];
                            let dh = dy.data[r * 2 * hid + j];
                            let dc = dy.data[r * 2 * hid + hid + j] + dh * go * (1.0 - tc * tc);
                            d[j] = dc * gg * gi * (1.0 - gi);
                            d[hid + j] = dc * cprev.data[r * hid + j] * gf * (1.0 - gf);
                            d[2 * hid + j] = dc * gi * (1.0 - gg * gg);
                            d[3 * hid + j] = dh * tc * go * (1.0 - go);
                            dc_prev.data[r * hid + j] = dc * gf;
                        }
                    }
                    put(*x, dg.matmul_t(v(*wx)));
                    put(*wx, v(*x).t_matmul(&dg));
                    put(*h, dg.matmul_t(v(*wh)));
                    put(*wh, v(*h).t_matmul(&dg));
                    put(*b, dg.col_sums());
                    put(*c, dc_prev);
                }
                Op::Bce(p, labels) => {
                    let q = v(*p);
                    let n = labels.len() as f64;
                    let scale = dy.item() / n;
                    let data = q
                        .data
                        .iter()
                        .zip(labels)
                        .map(|(&q, &y)| {
                            let mut g = 0.0;
                            if q > LOG_FLOOR {
                                g -= y / q;
                            }
                            if 1.0 - q > LOG_FLOOR {
                                g += (1.0 - y) / (1.0 - q);
                            }
                            g * scale
                        })
                        .collect();
                    put(*p, Tensor::from_vec(q.rows, q.cols, data));
                }
                Op::Xent(l, classes, probs) => {
                    let mut g = probs.clone();
                    let scale = dy.item() / classes.len() as f64;
                    for (r, &c) in classes.iter().enumerate() {
                        g.data[r * g.cols + c] -= 1.0;
                    }
                    g.data.iter_mut().for_each(|x| *x *= scale);
                    put(*l, g);
                }
            }
            grads[idx] = Some(dy);
        }
        self.grads = grads;
    }

    /// Gradient of the last [`Graph::backward`] loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds the computed parameter gradients into the store's accumulators.
    pub fn accumulate(&self, store: &mut ParamStore) {
        let tag = store.tag();
        for (&(t, id), &v) in &self.params {
            if t != tag {
                continue;
            }
            if let Some(g) = self.grad(v) {
                let p = store.get_mut(id);
                if p.grad.shape() != p.value.shape() {
                    p.grad = Tensor::zeros(p.value.rows, p.value.cols);
                }
                p.grad.add_assign(g);
            }
        }
    }
}

fn zip_t(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(a.rows, a.cols, a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect())
}
