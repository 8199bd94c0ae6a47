//! Adam with bias correction, and Polyak (soft) target updates.

use super::tensor::Tensor;
use super::{NnError, ParamTree, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig::with_lr(3e-4)
    }
}

struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

/// Optimizer state: first/second moments per parameter tensor, in the
/// canonical tree order. A tensor that received no gradient in an update is
/// skipped entirely (its moments and step count do not advance).
pub struct AdamState<T> {
    config: AdamConfig,
    moments: Vec<Moments<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &impl ParamTree<T>) -> AdamState<T> {
        let moments = params
            .tensors()
            .iter()
            .map(|t| Moments {
                m: vec![T::zero(); t.len()],
                v: vec![T::zero(); t.len()],
                step: 0,
            })
            .collect();
        AdamState { config, moments }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// One Adam step over the tree. `grads[i]` pairs with tensor `i` in tree
    /// order; `None` means the parameter was not part of the graph.
    pub fn step(&mut self, params: &mut impl ParamTree<T>, grads: &[Option<&[T]>]) {
        let tensors = params.tensors_mut();
        assert_eq!(tensors.len(), self.moments.len(), "tree changed size");
        assert_eq!(tensors.len(), grads.len(), "one grad slot per tensor");
        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let lr = self.config.lr;
        let eps = T::from_f64(self.config.eps);
        for ((tensor, moment), grad) in tensors.into_iter().zip(&mut self.moments).zip(grads) {
            let Some(grad) = grad else { continue };
            assert_eq!(grad.len(), tensor.len(), "grad shape mismatch");
            moment.step += 1;
            let bc1 = 1.0 - self.config.beta1.powi(moment.step as i32);
            let bc2 = 1.0 - self.config.beta2.powi(moment.step as i32);
            let m_scale = T::from_f64(lr / bc1);
            let v_scale = T::from_f64(1.0 / bc2);
            let one_minus_b1 = T::one() - b1;
            let one_minus_b2 = T::one() - b2;
            for ((p, m), (v, &g)) in tensor
                .data_mut()
                .iter_mut()
                .zip(&mut moment.m)
                .zip(moment.v.iter_mut().zip(grad.iter()))
            {
                *m = b1 * *m + one_minus_b1 * g;
                *v = b2 * *v + one_minus_b2 * g * g;
                let v_hat = (*v * v_scale).sqrt() + eps;
                *p -= *m * m_scale / v_hat;
            }
        }
    }
}

/// target <- (1 - tau) * target + tau * online, elementwise over both trees.
pub fn polyak_update<T: Scalar>(
    target: &mut impl ParamTree<T>,
    online: &impl ParamTree<T>,
    tau: f64,
) -> Result<(), NnError> {
    let online_tensors: Vec<&Tensor<T>> = online.tensors();
    let target_tensors = target.tensors_mut();
    if online_tensors.len() != target_tensors.len() {
        return Err(NnError::TreeMismatch(format!(
            "target has {} tensors, online has {}",
            target_tensors.len(),
            online_tensors.len()
        )));
    }
    let tau = T::from_f64(tau);
    let keep = T::one() - tau;
    for (t, o) in target_tensors.into_iter().zip(online_tensors) {
        if t.shape() != o.shape() {
            return Err(NnError::TreeMismatch(format!(
                "shape {:?} vs {:?}",
                t.shape(),
                o.shape()
            )));
        }
        for (tv, &ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = keep * *tv + tau * ov;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal one-tensor tree for the tests.
    struct One(Tensor<f64>);

    impl ParamTree<f64> for One {
        fn names(&self) -> Vec<String> {
            vec!["p".into()]
        }
        fn tensors(&self) -> Vec<&Tensor<f64>> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = One(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]));
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &p);
        let zeros = vec![0.0; 3];
        adam.step(&mut p, &[Some(&zeros)]);
        assert_eq!(p.0.data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // With a constant gradient g, the bias-corrected first step is
        // lr * g / (|g| + eps') ~= lr * sign(g).
        let mut p = One(Tensor::new(vec![2], vec![0.0, 0.0]));
        let lr = 3e-4;
        let mut adam = AdamState::new(AdamConfig::with_lr(lr), &p);
        let grad = vec![0.7, -0.2];
        adam.step(&mut p, &[Some(&grad)]);
        assert!((p.0.data()[0] + lr).abs() < lr * 1e-3, "{}", p.0.data()[0]);
        assert!((p.0.data()[1] - lr).abs() < lr * 1e-3, "{}", p.0.data()[1]);
    }

    #[test]
    fn skipped_parameters_do_not_drift() {
        let mut p = One(Tensor::new(vec![1], vec![1.0]));
        let mut adam = AdamState::new(AdamConfig::with_lr(0.5), &p);
        let g = vec![1.0];
        adam.step(&mut p, &[Some(&g)]);
        let after_first = p.0.data()[0];
        adam.step(&mut p, &[None]);
        assert_eq!(p.0.data()[0], after_first);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = One(Tensor::new(vec![2], vec![0.3, -0.4]));
            let mut adam = AdamState::new(AdamConfig::default(), &p);
            for i in 0..100 {
                let g = vec![(i as f64 * 0.01).sin(), (i as f64 * 0.02).cos()];
                adam.step(&mut p, &[Some(&g)]);
            }
            p.0.data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn polyak_endpoints_and_mixture() {
        let online = One(Tensor::new(vec![2], vec![1.0, 1.0]));

        let mut target = One(Tensor::new(vec![2], vec![0.0, 0.0]));
        polyak_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.0.data(), online.0.data());

        let mut target = One(Tensor::new(vec![2], vec![0.25, -3.0]));
        polyak_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target.0.data(), &[0.25, -3.0]);

        let mut target = One(Tensor::new(vec![2], vec![0.0, 0.0]));
        polyak_update(&mut target, &online, 0.005).unwrap();
        assert!((target.0.data()[0] - 0.005).abs() < 1e-15);
    }

    #[test]
    fn polyak_rejects_mismatched_trees() {
        let online = One(Tensor::new(vec![2], vec![1.0, 1.0]));
        let mut target = One(Tensor::new(vec![3], vec![0.0; 3]));
        assert!(polyak_update(&mut target, &online, 0.5).is_err());
    }
}
