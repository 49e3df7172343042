use serde::{Deserialize, Serialize};

use super::{Graph, Tensor, Var};

/// Mean squared error over every element.
pub fn mse(g: &mut Graph, pred: Var, target: Var) -> Var {
    let d = g.sub(pred, target);
    let sq = g.mul(d, d);
    g.mean(sq)
}

/// `½ E[(s − 1)²]`
pub fn ls_real(g: &mut Graph, score: Var) -> Var {
    let (r, c) = g.shape(score);
    let ones = g.constant(Tensor::filled(r, c, 1.0));
    let d = g.sub(score, ones);
    let sq = g.mul(d, d);
    let m = g.mean(sq);
    g.scale(m, 0.5)
}

/// `½ E[s²]`
pub fn ls_fake(g: &mut Graph, score: Var) -> Var {
    let sq = g.mul(score, score);
    let m = g.mean(sq);
    g.scale(m, 0.5)
}

/// Adversarial part of the generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarialTerm {
    /// `½ E[(D(d) − 1)²] + ½ E[D(d̂)²]`, minimized by the generator as printed.
    /// Only the second term depends on the generator and it rewards fakes
    /// the discriminator rejects.
    #[default]
    AsWritten,
    /// Least-squares generator target `½ E[(D(d̂) − 1)²]`.
    Fooling,
}

/// Generator-side adversarial loss for real and fake discriminator scores.
pub fn generator_adversarial(g: &mut Graph, real: Var, fake: Var, term: AdversarialTerm) -> Var {
    match term {
        AdversarialTerm::AsWritten => {
            let r = ls_real(g, real);
            let f = ls_fake(g, fake);
            g.add(r, f)
        }
        AdversarialTerm::Fooling => ls_real(g, fake),
    }
}

/// Closed-form KL of `N(mu, exp(logvar))` from `N(0, I)`, summed over
/// latent dimensions and averaged over rows.
pub fn kl_gaussian(g: &mut Graph, mu: Var, logvar: Var) -> Var {
    let (r, c) = g.shape(mu);
    let ones = g.constant(Tensor::filled(r, c, 1.0));
    let mu2 = g.mul(mu, mu);
    let var = g.exp(logvar);
    let a = g.add(ones, logvar);
    let b = g.sub(a, mu2);
    let t = g.sub(b, var);
    let m = g.mean(t);
    g.scale(m, -0.5 * c as f64)
}

/// Per-row minimum over candidates of the row MSE, averaged over rows.
/// Only the winning candidate of each row receives gradient.
pub fn k_variety(g: &mut Graph, preds: &[Var], target: Var) -> Var {
    let per: Vec<Var> = preds
        .iter()
        .map(|&p| {
            let d = g.sub(p, target);
            let sq = g.mul(d, d);
            g.row_mean(sq)
        })
        .collect();
    let best = g.min_of(&per);
    g.mean(best)
}

/// Binary cross-entropy on probabilities (log arguments clamped).
pub fn bce(g: &mut Graph, prob: Var, labels: &[f64]) -> Var {
    g.bce(prob, labels)
}

/// Softmax cross-entropy on row logits.
pub fn xent(g: &mut Graph, logits: Var, classes: &[usize]) -> Var {
    g.xent(logits, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(f: impl FnOnce(&mut Graph) -> Var) -> f64 {
        let mut g = Graph::new();
        let v = f(&mut g);
        g.value(v).item()
    }

    #[test]
    fn trivial_values() {
        let x = Tensor::from_vec(2, 2, vec![1.0, -2.0, 0.5, 3.0]);
        assert_eq!(
            scalar(|g| {
                let a = g.constant(x.clone());
                let b = g.constant(x.clone());
                mse(g, a, b)
            }),
            0.0
        );
        assert_eq!(
            scalar(|g| {
                let m = g.constant(Tensor::zeros(3, 4));
                let l = g.constant(Tensor::zeros(3, 4));
                kl_gaussian(g, m, l)
            }),
            0.0
        );
        assert_eq!(
            scalar(|g| {
                let s = g.constant(Tensor::scalar(1.0));
                ls_real(g, s)
            }),
            0.0
        );
        assert_eq!(
            scalar(|g| {
                let s = g.constant(Tensor::scalar(0.0));
                ls_fake(g, s)
            }),
            0.0
        );
    }

    #[test]
    fn bce_is_clamped() {
        let v = scalar(|g| {
            let p = g.constant(Tensor::from_vec(1, 2, vec![0.0, 1.0]));
            bce(g, p, &[1.0, 0.0])
        });
        // each term is clamped to -ln(1e-12)
        assert!((v + crate::nn::LOG_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn k_variety_singleton_is_mse() {
        let p = Tensor::from_vec(2, 3, vec![0.1, 0.2, 0.3, -1.0, 0.0, 2.0]);
        let t = Tensor::from_vec(2, 3, vec![0.0, 0.5, 0.3, 1.0, 1.0, 1.0]);
        let a = scalar(|g| {
            let pv = g.constant(p.clone());
            let tv = g.constant(t.clone());
            k_variety(g, &[pv], tv)
        });
        let b = scalar(|g| {
            let pv = g.constant(p.clone());
            let tv = g.constant(t.clone());
            mse(g, pv, tv)
        });
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn k_variety_with_exact_target_is_zero() {
        let t = Tensor::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let v = scalar(|g| {
            let a = g.constant(Tensor::zeros(1, 4));
            let b = g.constant(t.clone());
            let tv = g.constant(t.clone());
            k_variety(g, &[a, b], tv)
        });
        assert_eq!(v, 0.0);
    }
}
