//! The three sub-networks and their wiring.
//!
//! CNN: three convolutions (kernel 6/4/3, channels 16/32/32, stride 3/2/1,
//! no padding, ReLU) and a linear head with LeakyReLU down to a 4-vector.
//! RNN: (previous estimate, previous feature, previous action one-hot) ->
//! 64 -> 64 -> 2 with ReLU hidden and Sigmoid output; the fed-back estimate
//! is the only recurrent state.
//! MLP: (feature [, hidden pair]) -> 64 -> 3 Q-values.

use super::kernels::{self, ConvGeom};
use super::tape::{Tape, ValueId};
use super::tensor::Tensor;
use super::{NnError, ParamTree, Scalar};
use crate::env::Action;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CNN_FEATURES: usize = 4;
pub const HIDDEN_DIM: usize = 2;
pub const NUM_ACTIONS: usize = 3;
pub const RNN_HIDDEN: usize = 64;
pub const MLP_HIDDEN: usize = 64;
pub const LEAKY_SLOPE: f64 = 0.01;

const CONV_GEOMS: [ConvGeom; 3] = [
    ConvGeom { batch: 0, in_h: 28, in_w: 28, in_c: 1, k: 6, stride: 3, out_c: 16 },
    ConvGeom { batch: 0, in_h: 8, in_w: 8, in_c: 16, k: 4, stride: 2, out_c: 32 },
    ConvGeom { batch: 0, in_h: 3, in_w: 3, in_c: 32, k: 3, stride: 1, out_c: 32 },
];

/// Stay -> (1,0,0), Run -> (0,1,0), Eat -> (0,0,1).
pub fn action_one_hot<T: Scalar>(action: Action) -> [T; NUM_ACTIONS] {
    let mut v = [T::zero(); NUM_ACTIONS];
    v[action.index()] = T::one();
    v
}

fn he_uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::new(shape, data)
}

fn xavier_uniform<T: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::new(shape, data)
}

// ---------------------------------------------------------------------------
// CNN
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams<T> {
    pub conv1_w: Tensor<T>,
    pub conv1_b: Tensor<T>,
    pub conv2_w: Tensor<T>,
    pub conv2_b: Tensor<T>,
    pub conv3_w: Tensor<T>,
    pub conv3_b: Tensor<T>,
    pub fc_w: Tensor<T>,
    pub fc_b: Tensor<T>,
}

impl<T: Scalar> CnnParams<T> {
    pub fn init(rng: &mut ChaCha8Rng) -> CnnParams<T> {
        let g = &CONV_GEOMS;
        CnnParams {
            conv1_w: he_uniform(rng, vec![16, 6, 6, 1], g[0].patch_len()),
            conv1_b: Tensor::zeros(vec![16]),
            conv2_w: he_uniform(rng, vec![32, 4, 4, 16], g[1].patch_len()),
            conv2_b: Tensor::zeros(vec![32]),
            conv3_w: he_uniform(rng, vec![32, 3, 3, 32], g[2].patch_len()),
            conv3_b: Tensor::zeros(vec![32]),
            fc_w: he_uniform(rng, vec![CNN_FEATURES, 32], 32),
            fc_b: Tensor::zeros(vec![CNN_FEATURES]),
        }
    }

    /// Tape node ids for one registration of the parameters.
    pub fn register(&self, tape: &mut Tape<T>) -> CnnIds {
        CnnIds {
            conv1_w: tape.param(&self.conv1_w),
            conv1_b: tape.param(&self.conv1_b),
            conv2_w: tape.param(&self.conv2_w),
            conv2_b: tape.param(&self.conv2_b),
            conv3_w: tape.param(&self.conv3_w),
            conv3_b: tape.param(&self.conv3_b),
            fc_w: tape.param(&self.fc_w),
            fc_b: tape.param(&self.fc_b),
        }
    }

    /// Inference forward over a (n, 28*28) image batch; returns (n, 4).
    pub fn infer(&self, images: &[T], n: usize) -> Vec<T> {
        assert_eq!(images.len(), n * 28 * 28);
        let mut geom = CONV_GEOMS;
        for g in geom.iter_mut() {
            g.batch = n;
        }
        let (c1, _) = kernels::conv2d_forward(images, self.conv1_w.data(), self.conv1_b.data(), &geom[0]);
        let a1 = kernels::relu(&c1);
        let (c2, _) = kernels::conv2d_forward(&a1, self.conv2_w.data(), self.conv2_b.data(), &geom[1]);
        let a2 = kernels::relu(&c2);
        let (c3, _) = kernels::conv2d_forward(&a2, self.conv3_w.data(), self.conv3_b.data(), &geom[2]);
        let a3 = kernels::relu(&c3);
        let fc = kernels::linear_forward(&a3, self.fc_w.data(), self.fc_b.data(), n, 32, CNN_FEATURES);
        kernels::leaky_relu(&fc, T::from_f64(LEAKY_SLOPE))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CnnIds {
    pub conv1_w: ValueId,
    pub conv1_b: ValueId,
    pub conv2_w: ValueId,
    pub conv2_b: ValueId,
    pub conv3_w: ValueId,
    pub conv3_b: ValueId,
    pub fc_w: ValueId,
    pub fc_b: ValueId,
}

impl CnnIds {
    /// Recorded forward over an image batch node of shape (n, 28, 28, 1).
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, images: ValueId) -> ValueId {
        let n = tape.value(images).shape()[0];
        let c1 = tape.conv2d(images, self.conv1_w, self.conv1_b, 3);
        let a1 = tape.relu(c1);
        let c2 = tape.conv2d(a1, self.conv2_w, self.conv2_b, 2);
        let a2 = tape.relu(c2);
        let c3 = tape.conv2d(a2, self.conv3_w, self.conv3_b, 1);
        let a3 = tape.relu(c3);
        let flat = tape.reshape(a3, vec![n, 32]);
        let fc = tape.linear(flat, self.fc_w, self.fc_b);
        tape.leaky_relu(fc, T::from_f64(LEAKY_SLOPE))
    }

    pub fn ids(&self) -> Vec<ValueId> {
        vec![
            self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b,
            self.conv3_w, self.conv3_b, self.fc_w, self.fc_b,
        ]
    }
}

impl<T: Scalar> ParamTree<T> for CnnParams<T> {
    fn names(&self) -> Vec<String> {
        ["conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b", "fc_w", "fc_b"]
            .iter()
            .map(|s| format!("cnn.{s}"))
            .collect()
    }

    fn tensors(&self) -> Vec<&Tensor<T>> {
        vec![
            &self.conv1_w, &self.conv1_b, &self.conv2_w, &self.conv2_b,
            &self.conv3_w, &self.conv3_b, &self.fc_w, &self.fc_b,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.conv1_w, &mut self.conv1_b, &mut self.conv2_w, &mut self.conv2_b,
            &mut self.conv3_w, &mut self.conv3_b, &mut self.fc_w, &mut self.fc_b,
        ]
    }
}

// ---------------------------------------------------------------------------
// RNN
// ---------------------------------------------------------------------------

/// Input layout: previous estimate (2) ++ previous feature (4) ++ previous
/// action one-hot (3).
pub const RNN_INPUT: usize = HIDDEN_DIM + CNN_FEATURES + NUM_ACTIONS;

#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams<T> {
    pub l1_w: Tensor<T>,
    pub l1_b: Tensor<T>,
    pub l2_w: Tensor<T>,
    pub l2_b: Tensor<T>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

impl<T: Scalar> RnnParams<T> {
    pub fn init(rng: &mut ChaCha8Rng) -> RnnParams<T> {
        RnnParams {
            l1_w: he_uniform(rng, vec![RNN_HIDDEN, RNN_INPUT], RNN_INPUT),
            l1_b: Tensor::zeros(vec![RNN_HIDDEN]),
            l2_w: he_uniform(rng, vec![RNN_HIDDEN, RNN_HIDDEN], RNN_HIDDEN),
            l2_b: Tensor::zeros(vec![RNN_HIDDEN]),
            out_w: xavier_uniform(rng, vec![HIDDEN_DIM, RNN_HIDDEN], RNN_HIDDEN, HIDDEN_DIM),
            out_b: Tensor::zeros(vec![HIDDEN_DIM]),
        }
    }

    pub fn register(&self, tape: &mut Tape<T>) -> RnnIds {
        RnnIds {
            l1_w: tape.param(&self.l1_w),
            l1_b: tape.param(&self.l1_b),
            l2_w: tape.param(&self.l2_w),
            l2_b: tape.param(&self.l2_b),
            out_w: tape.param(&self.out_w),
            out_b: tape.param(&self.out_b),
        }
    }

    /// One recurrence application on a (n, 9) input batch; returns (n, 2).
    pub fn infer(&self, x: &[T], n: usize) -> Vec<T> {
        let h1 = kernels::relu(&kernels::linear_forward(
            x, self.l1_w.data(), self.l1_b.data(), n, RNN_INPUT, RNN_HIDDEN,
        ));
        let h2 = kernels::relu(&kernels::linear_forward(
            &h1, self.l2_w.data(), self.l2_b.data(), n, RNN_HIDDEN, RNN_HIDDEN,
        ));
        kernels::sigmoid(&kernels::linear_forward(
            &h2, self.out_w.data(), self.out_b.data(), n, RNN_HIDDEN, HIDDEN_DIM,
        ))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RnnIds {
    pub l1_w: ValueId,
    pub l1_b: ValueId,
    pub l2_w: ValueId,
    pub l2_b: ValueId,
    pub out_w: ValueId,
    pub out_b: ValueId,
}

impl RnnIds {
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: ValueId) -> ValueId {
        let l1 = tape.linear(x, self.l1_w, self.l1_b);
        let a1 = tape.relu(l1);
        let l2 = tape.linear(a1, self.l2_w, self.l2_b);
        let a2 = tape.relu(l2);
        let out = tape.linear(a2, self.out_w, self.out_b);
        tape.sigmoid(out)
    }

    pub fn ids(&self) -> Vec<ValueId> {
        vec![self.l1_w, self.l1_b, self.l2_w, self.l2_b, self.out_w, self.out_b]
    }
}

impl<T: Scalar> ParamTree<T> for RnnParams<T> {
    fn names(&self) -> Vec<String> {
        ["l1_w", "l1_b", "l2_w", "l2_b", "out_w", "out_b"]
            .iter()
            .map(|s| format!("rnn.{s}"))
            .collect()
    }

    fn tensors(&self) -> Vec<&Tensor<T>> {
        vec![&self.l1_w, &self.l1_b, &self.l2_w, &self.l2_b, &self.out_w, &self.out_b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.l1_w, &mut self.l1_b, &mut self.l2_w, &mut self.l2_b,
            &mut self.out_w, &mut self.out_b,
        ]
    }
}

// ---------------------------------------------------------------------------
// MLP (Q-head)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub in_dim: usize,
    pub hidden_w: Tensor<T>,
    pub hidden_b: Tensor<T>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

impl<T: Scalar> MlpParams<T> {
    /// `with_hidden` selects the 6-input wiring (feature ++ hidden pair)
    /// over the vision-only 4-input wiring.
    pub fn init(rng: &mut ChaCha8Rng, with_hidden: bool) -> MlpParams<T> {
        let in_dim = if with_hidden {
            CNN_FEATURES + HIDDEN_DIM
        } else {
            CNN_FEATURES
        };
        MlpParams {
            in_dim,
            hidden_w: he_uniform(rng, vec![MLP_HIDDEN, in_dim], in_dim),
            hidden_b: Tensor::zeros(vec![MLP_HIDDEN]),
            out_w: xavier_uniform(rng, vec![NUM_ACTIONS, MLP_HIDDEN], MLP_HIDDEN, NUM_ACTIONS),
            out_b: Tensor::zeros(vec![NUM_ACTIONS]),
        }
    }

    pub fn register(&self, tape: &mut Tape<T>) -> MlpIds {
        MlpIds {
            hidden_w: tape.param(&self.hidden_w),
            hidden_b: tape.param(&self.hidden_b),
            out_w: tape.param(&self.out_w),
            out_b: tape.param(&self.out_b),
        }
    }

    /// Q-values for a (n, in_dim) input batch; returns (n, 3).
    pub fn infer(&self, x: &[T], n: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), n * self.in_dim);
        let h = kernels::relu(&kernels::linear_forward(
            x, self.hidden_w.data(), self.hidden_b.data(), n, self.in_dim, MLP_HIDDEN,
        ));
        kernels::linear_forward(&h, self.out_w.data(), self.out_b.data(), n, MLP_HIDDEN, NUM_ACTIONS)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MlpIds {
    pub hidden_w: ValueId,
    pub hidden_b: ValueId,
    pub out_w: ValueId,
    pub out_b: ValueId,
}

impl MlpIds {
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: ValueId) -> ValueId {
        let h = tape.linear(x, self.hidden_w, self.hidden_b);
        let a = tape.relu(h);
        tape.linear(a, self.out_w, self.out_b)
    }

    pub fn ids(&self) -> Vec<ValueId> {
        vec![self.hidden_w, self.hidden_b, self.out_w, self.out_b]
    }
}

impl<T: Scalar> ParamTree<T> for MlpParams<T> {
    fn names(&self) -> Vec<String> {
        ["hidden_w", "hidden_b", "out_w", "out_b"]
            .iter()
            .map(|s| format!("mlp.{s}"))
            .collect()
    }

    fn tensors(&self) -> Vec<&Tensor<T>> {
        vec![&self.hidden_w, &self.hidden_b, &self.out_w, &self.out_b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.hidden_w, &mut self.hidden_b, &mut self.out_w, &mut self.out_b]
    }
}

// ---------------------------------------------------------------------------
// Combined parameter tree
// ---------------------------------------------------------------------------

/// All parameters for one agent: CNN + optional RNN + Q-head.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams<T> {
    pub cnn: CnnParams<T>,
    pub rnn: Option<RnnParams<T>>,
    pub mlp: MlpParams<T>,
}

impl<T: Scalar> AgentParams<T> {
    /// Seeded initialization. `with_rnn` for the recurrent agent,
    /// `mlp_sees_hidden` false only for the vision-only baseline.
    pub fn init(seed: u64, with_rnn: bool, mlp_sees_hidden: bool) -> AgentParams<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x1417);
        AgentParams {
            cnn: CnnParams::init(&mut rng),
            rnn: with_rnn.then(|| RnnParams::init(&mut rng)),
            mlp: MlpParams::init(&mut rng, mlp_sees_hidden),
        }
    }

    pub fn cast<U: Scalar>(&self) -> AgentParams<U> {
        AgentParams {
            cnn: CnnParams {
                conv1_w: self.cnn.conv1_w.cast(),
                conv1_b: self.cnn.conv1_b.cast(),
                conv2_w: self.cnn.conv2_w.cast(),
                conv2_b: self.cnn.conv2_b.cast(),
                conv3_w: self.cnn.conv3_w.cast(),
                conv3_b: self.cnn.conv3_b.cast(),
                fc_w: self.cnn.fc_w.cast(),
                fc_b: self.cnn.fc_b.cast(),
            },
            rnn: self.rnn.as_ref().map(|r| RnnParams {
                l1_w: r.l1_w.cast(),
                l1_b: r.l1_b.cast(),
                l2_w: r.l2_w.cast(),
                l2_b: r.l2_b.cast(),
                out_w: r.out_w.cast(),
                out_b: r.out_b.cast(),
            }),
            mlp: MlpParams {
                in_dim: self.mlp.in_dim,
                hidden_w: self.mlp.hidden_w.cast(),
                hidden_b: self.mlp.hidden_b.cast(),
                out_w: self.mlp.out_w.cast(),
                out_b: self.mlp.out_b.cast(),
            },
        }
    }
}

impl<T: Scalar> ParamTree<T> for AgentParams<T> {
    fn names(&self) -> Vec<String> {
        let mut names = ParamTree::<T>::names(&self.cnn);
        if let Some(rnn) = &self.rnn {
            names.extend(ParamTree::<T>::names(rnn));
        }
        names.extend(ParamTree::<T>::names(&self.mlp));
        names
    }

    fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut t = self.cnn.tensors();
        if let Some(rnn) = &self.rnn {
            t.extend(rnn.tensors());
        }
        t.extend(self.mlp.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut t = self.cnn.tensors_mut();
        if let Some(rnn) = &mut self.rnn {
            t.extend(rnn.tensors_mut());
        }
        t.extend(self.mlp.tensors_mut());
        t
    }
}

// ---------------------------------------------------------------------------
// Single-sample convenience surface
// ---------------------------------------------------------------------------

/// Feature vector for one 28x28 image.
pub fn cnn_forward<T: Scalar>(params: &CnnParams<T>, image: &[T]) -> Result<[T; 4], NnError> {
    if image.len() != 28 * 28 {
        return Err(NnError::ShapeMismatch {
            expected: vec![28, 28],
            found: vec![image.len()],
        });
    }
    let out = params.infer(image, 1);
    Ok([out[0], out[1], out[2], out[3]])
}

/// One recurrence step for a single sample.
pub fn rnn_step<T: Scalar>(
    params: &RnnParams<T>,
    prev_estimate: [T; 2],
    prev_feature: [T; 4],
    prev_action: Action,
) -> [T; 2] {
    let onehot = action_one_hot::<T>(prev_action);
    let mut x = [T::zero(); RNN_INPUT];
    x[..2].copy_from_slice(&prev_estimate);
    x[2..6].copy_from_slice(&prev_feature);
    x[6..].copy_from_slice(&onehot);
    let out = params.infer(&x, 1);
    [out[0], out[1]]
}

/// Q-values for a single sample. `hidden` must be present exactly when the
/// head was built with the 6-input wiring.
pub fn mlp_forward<T: Scalar>(
    params: &MlpParams<T>,
    feature: [T; 4],
    hidden: Option<[T; 2]>,
) -> Result<[T; 3], NnError> {
    let found = CNN_FEATURES + if hidden.is_some() { HIDDEN_DIM } else { 0 };
    if found != params.in_dim {
        return Err(NnError::ArityMismatch {
            expected: params.in_dim,
            found,
        });
    }
    let mut x = Vec::with_capacity(params.in_dim);
    x.extend_from_slice(&feature);
    if let Some(h) = hidden {
        x.extend_from_slice(&h);
    }
    let out = params.infer(&x, 1);
    Ok([out[0], out[1], out[2]])
}
