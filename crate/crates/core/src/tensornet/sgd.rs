//! Stochastic gradient descent with classical momentum:
//! `v <- momentum * v + g`, then `p <- p - lr * v`.

use alloc::vec::Vec;

use super::scalar::Real;
use super::tensor::Tensor;

/// Per-parameter velocity buffers, aligned by index with the parameter
/// list they were created from.
#[derive(Clone, Debug)]
pub struct SgdState<S: Real> {
    velocity: Vec<Tensor<S>>,
}

impl<S: Real> SgdState<S> {
    /// Zero velocities matching the given parameters.
    pub fn zeros_like(params: &[Tensor<S>]) -> SgdState<S> {
        SgdState { velocity: params.iter().map(|p| Tensor::zeros(p.dims())).collect() }
    }

    pub fn len(&self) -> usize {
        self.velocity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocity.is_empty()
    }

    /// One update across all parameters. A `None` gradient counts as zero:
    /// the velocity still decays and keeps moving the parameter.
    pub fn step(
        &mut self,
        params: &mut [Tensor<S>],
        grads: &[Option<&Tensor<S>>],
        lr: S,
        momentum: S,
    ) {
        debug_assert_eq!(params.len(), self.velocity.len());
        debug_assert_eq!(params.len(), grads.len());
        for ((param, vel), grad) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            match grad {
                Some(g) => {
                    debug_assert_eq!(param.dims(), g.dims());
                    for ((p, v), gv) in
                        param.data_mut().iter_mut().zip(vel.data_mut()).zip(g.data())
                    {
                        *v = momentum * *v + *gv;
                        *p -= lr * *v;
                    }
                }
                None => {
                    for (p, v) in param.data_mut().iter_mut().zip(vel.data_mut()) {
                        *v = momentum * *v;
                        *p -= lr * *v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut params = vec![Tensor::<f64>::full(&[3], 2.0)];
        let grad = Tensor::full(&[3], 5.0);
        let mut state = SgdState::zeros_like(&params);
        state.step(&mut params, &[Some(&grad)], 0.0, 0.9);
        assert_eq!(params[0], Tensor::full(&[3], 2.0));
    }

    #[test]
    fn momentum_accumulates_over_steps() {
        // Constant gradient 1, momentum 0.9, lr 0.1:
        // v1 = 1, p1 = 1 - 0.1; v2 = 1.9, p2 = p1 - 0.19.
        let mut params = vec![Tensor::<f64>::full(&[1], 1.0)];
        let grad = Tensor::full(&[1], 1.0);
        let mut state = SgdState::zeros_like(&params);
        state.step(&mut params, &[Some(&grad)], 0.1, 0.9);
        assert!((params[0].data()[0] - 0.9).abs() < 1e-15);
        state.step(&mut params, &[Some(&grad)], 0.1, 0.9);
        assert!((params[0].data()[0] - 0.71).abs() < 1e-15);
    }

    #[test]
    fn zero_momentum_is_plain_gradient_descent() {
        let mut params = vec![Tensor::<f64>::from_vec(&[2], vec![1.0, -1.0]).unwrap()];
        let grad = Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap();
        let mut state = SgdState::zeros_like(&params);
        state.step(&mut params, &[Some(&grad)], 0.2, 0.0);
        assert_eq!(params[0].data(), &[0.9, -0.9]);
        state.step(&mut params, &[Some(&grad)], 0.2, 0.0);
        assert_eq!(params[0].data(), &[0.8, -0.8]);
    }

    #[test]
    fn missing_gradient_still_applies_decaying_velocity() {
        let mut params = vec![Tensor::<f64>::full(&[1], 0.0)];
        let grad = Tensor::full(&[1], 1.0);
        let mut state = SgdState::zeros_like(&params);
        state.step(&mut params, &[Some(&grad)], 1.0, 0.5);
        // p = -1, v = 1
        state.step(&mut params, &[None], 1.0, 0.5);
        // v = 0.5, p = -1.5
        assert!((params[0].data()[0] + 1.5).abs() < 1e-15);
    }
}
