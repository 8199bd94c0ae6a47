//! Minimal differentiable numeric kernel: tensors with gradients, the
//! convolutional/recurrent/Q-head stacks, a recording tape for
//! backpropagation (including through time), Adam, and Polyak averaging.
//!
//! Everything is generic over [`Scalar`] so production code runs in f32
//! while gradient checks run the identical code in f64.

mod adam;
mod checkpoint;
mod kernels;
mod stacks;
mod tape;
mod tensor;

pub use adam::{polyak_update, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta};
pub use stacks::{
    action_one_hot, cnn_forward, mlp_forward, rnn_step, AgentParams, CnnParams, MlpParams,
    RnnParams, CNN_FEATURES, HIDDEN_DIM, LEAKY_SLOPE, MLP_HIDDEN, NUM_ACTIONS, RNN_HIDDEN,
};
pub use tape::{Grads, Tape, ValueId};
pub use tensor::Tensor;

/// Float type the kernel is generic over. `gemm` dispatches to the matching
/// matrixmultiply routine.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// C <- alpha * A B + beta * C over raw row/column strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> f32 {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> f64 {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("hidden input arity mismatch: MLP expects input dimension {expected}, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("parameter trees do not match: {0}")]
    TreeMismatch(String),
}

/// Anything that exposes an ordered, named set of parameter tensors.
/// The order is the canonical one used by Adam state, Polyak averaging and
/// checkpoints.
pub trait ParamTree<T: Scalar> {
    fn names(&self) -> Vec<String>;
    fn tensors(&self) -> Vec<&Tensor<T>>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>>;
}
