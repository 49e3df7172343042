//! Small reverse-mode autodiff layer: dense 2D tensors, a per-step tape,
//! linear / PReLU / LSTM layers, the training losses, Adam and a
//! finite-difference gradient checker.

mod adam;
mod blocks;
mod gradcheck;
mod graph;
mod layers;
pub mod losses;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use blocks::{one_hot, split_steps, step_inputs, Discriminator, Encoder, EncoderKind, StepEncoder, DISC_TAG};
pub use gradcheck::{check_gradients, rel_error, GradCheckReport, FD_STEP, REL_FLOOR};
pub use graph::{Graph, Var, LOG_FLOOR};
pub use layers::{LayerKind, LayerSpec, Linear, LstmCell, LstmState, Mlp, Prelu, FORGET_BIAS, PRELU_INIT};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::{softmax, Tensor};

/// Lower-triangular ones, `steps x steps` on 2-column interleaved data:
/// `flat_deltas · M` gives flat cumulative positions relative to the start.
pub fn integration_matrix(steps: usize) -> Tensor {
    let n = 2 * steps;
    let mut m = Tensor::zeros(n, n);
    for i in 0..steps {
        for j in i..steps {
            m.data[(2 * i) * n + 2 * j] = 1.0;
            m.data[(2 * i + 1) * n + 2 * j + 1] = 1.0;
        }
    }
    m
}
