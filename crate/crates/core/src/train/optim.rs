//! Gradient-ascent optimizers over a logits matrix.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Array2<T>,
    v: Array2<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(shape: (usize, usize), lr: T, beta1: T, beta2: T, eps: T) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            t: 0,
        }
    }

    /// Moves `params` along `grad` (ascent).
    pub fn step(&mut self, params: &mut Array2<T>, grad: &Array2<T>) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        Zip::from(params)
            .and(grad)
            .and(&mut self.m)
            .and(&mut self.v)
            .for_each(|x, &g, m, v| {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *x = *x + lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer<T> {
    Adam(Adam<T>),
    Sgd { lr: T },
}

impl<T: Scalar> Optimizer<T> {
    pub fn step(&mut self, params: &mut Array2<T>, grad: &Array2<T>) {
        match self {
            Optimizer::Adam(adam) => adam.step(params, grad),
            Optimizer::Sgd { lr } => {
                let lr = *lr;
                Zip::from(params).and(grad).for_each(|x, &g| *x = *x + lr * g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = array![[0.5, -1.0], [2.0, 3.0]];
        let before = params.clone();
        let mut adam = Optimizer::Adam(Adam::new((2, 2), 1e-3, 0.9, 0.999, 1e-8));
        let zero = Array2::zeros((2, 2));
        for _ in 0..10 {
            adam.step(&mut params, &zero);
        }
        assert_eq!(params, before);
        let mut sgd = Optimizer::Sgd { lr: 0.1 };
        sgd.step(&mut params, &zero);
        assert_eq!(params, before);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut params = array![[0.0f64, 0.0]];
        let mut adam = Adam::new((1, 2), 1e-2, 0.9, 0.999, 1e-8);
        adam.step(&mut params, &array![[3.0, -0.5]]);
        assert!((params[[0, 0]] - 1e-2).abs() < 1e-9);
        assert!((params[[0, 1]] + 1e-2).abs() < 1e-9);
    }

    #[test]
    fn adam_ascends_a_concave_quadratic() {
        // maximize -(x - 3)^2
        let mut params = array![[0.0f64]];
        let mut adam = Adam::new((1, 1), 0.1, 0.9, 0.999, 1e-8);
        for _ in 0..500 {
            let g = params.mapv(|x| -2.0 * (x - 3.0));
            adam.step(&mut params, &g);
        }
        assert!((params[[0, 0]] - 3.0).abs() < 1e-2);
    }

    #[test]
    fn sgd_step() {
        let mut params = array![[1.0]];
        Optimizer::Sgd { lr: 0.5 }.step(&mut params, &array![[2.0]]);
        assert_eq!(params, array![[2.0]]);
    }
}
