use std::collections::BTreeMap;

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    first: BTreeMap<String, Matrix>,
    second: BTreeMap<String, Matrix>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Applies one update to every unfrozen parameter, then zeroes all
    /// gradients.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            if p.frozen {
                continue;
            }
            let shape = p.value.shape();
            let m = self
                .first
                .entry(name.to_string())
                .or_insert_with(|| Matrix::zeros(shape.0, shape.1));
            let v = self
                .second
                .entry(name.to_string())
                .or_insert_with(|| Matrix::zeros(shape.0, shape.1));
            if m.shape() != shape || v.shape() != shape || p.grad.shape() != shape {
                return Err(Error::Invalid(format!("adam: shape mismatch for {name:?}")));
            }
            let values = p.value.data_mut();
            for (((theta, g), mi), vi) in values
                .iter_mut()
                .zip(p.grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *theta -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        params.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64, g: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("x", Matrix::filled(1, 1, v));
        s.accumulate_grad("x", &Matrix::filled(1, 1, g)).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = scalar_store(0.5, 1.0);
        let mut adam = AdamState::new(0.001);
        adam.step(&mut s).unwrap();
        let delta = s.value("x").unwrap().get(0, 0) - 0.5;
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        assert!((delta + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(s.grad("x").unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut s = scalar_store(0.5, 0.0);
        AdamState::new(0.001).step(&mut s).unwrap();
        assert_eq!(s.value("x").unwrap().get(0, 0), 0.5);
    }

    #[test]
    fn frozen_parameter_not_updated() {
        let mut s = scalar_store(0.5, 0.0);
        s.set_frozen("x", true).unwrap();
        AdamState::new(0.1).step(&mut s).unwrap();
        assert_eq!(s.value("x").unwrap().get(0, 0), 0.5);
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let build = |order: &[&str]| {
            let mut s = ParamStore::new();
            for (i, n) in order.iter().enumerate() {
                s.insert(*n, Matrix::filled(1, 2, i as f64 * 0.0 + 1.0));
                s.accumulate_grad(n, &Matrix::filled(1, 2, 0.3)).unwrap();
            }
            let mut adam = AdamState::new(0.01);
            adam.step(&mut s).unwrap();
            s.to_checkpoint()
        };
        assert_eq!(build(&["a", "b"]), build(&["b", "a"]));
    }
}
