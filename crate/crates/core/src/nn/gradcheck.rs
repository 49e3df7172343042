use super::{Graph, ParamStore, Tensor, Var};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
/// Relative errors divide by at least this, so near-zero gradients are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Name of the entry with the largest error, e.g. `input0[3]` or `lin.w[5]`.
    pub worst: String,
    pub checked: usize,
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn eval<F>(f: &F, store: &ParamStore, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, store, &vars)?;
    Ok(g.value(out).item())
}

/// Compares reverse-mode gradients of the scalar `f` with central differences
/// for every input entry and every parameter entry.
pub fn check_gradients<F>(store: &mut ParamStore, inputs: &[Tensor], f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var>,
{
    store.zero_grads();
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, store, &vars)?;
    g.backward(out);
    g.accumulate(store);
    let input_grads: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows, t.cols)))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut record = |name: String, analytic: f64, numeric: f64| {
        let e = rel_error(analytic, numeric);
        report.checked += 1;
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(e);
            report.worst = name;
        }
    };

    let mut work = inputs.to_vec();
    for (k, grad) in input_grads.iter().enumerate() {
        for i in 0..work[k].len() {
            let orig = work[k].data[i];
            work[k].data[i] = orig + FD_STEP;
            let up = eval(&f, store, &work)?;
            work[k].data[i] = orig - FD_STEP;
            let down = eval(&f, store, &work)?;
            work[k].data[i] = orig;
            record(format!("input{k}[{i}]"), grad.data[i], (up - down) / (2.0 * FD_STEP));
        }
    }
    let ids: Vec<usize> = (0..store.len()).collect();
    for pi in ids {
        let id = super::ParamId(pi);
        let n = store.get(id).value.len();
        for i in 0..n {
            let analytic = store.get(id).grad.data[i];
            let orig = store.get(id).value.data[i];
            store.get_mut(id).value.data[i] = orig + FD_STEP;
            let up = eval(&f, store, inputs)?;
            store.get_mut(id).value.data[i] = orig - FD_STEP;
            let down = eval(&f, store, inputs)?;
            store.get_mut(id).value.data[i] = orig;
            let name = format!("{}[{i}]", store.get(id).name);
            record(name, analytic, (up - down) / (2.0 * FD_STEP));
        }
    }
    store.zero_grads();
    Ok(report)
}
