//! Adam with bias correction over flat parameter vectors.

use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
            beta1: lit::<T>(0.9),
            beta2: lit::<T>(0.999),
            epsilon: lit::<T>(1e-8),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: returns the proposed parameter vector. No feasibility
    /// guarantee; the line search decides what to accept.
    pub fn step(&mut self, params: &[T], grads: &[T], lr: T) -> Vec<T> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        let one = T::one();
        let mut out = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            out.push(params[i] - lr * m_hat / (v_hat.sqrt() + self.epsilon));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::<f64>::new(3);
        let p = vec![1.0, -2.0, 0.5];
        let q = s.step(&p, &[0.0; 3], 0.01);
        assert_eq!(p, q);
    }

    #[test]
    fn first_step_is_normalized_descent() {
        // at t=1 the bias-corrected update is lr * g / (|g| + eps'):
        // essentially -lr * sign(g)
        let mut s = AdamState::<f64>::new(2);
        let p = vec![0.0, 0.0];
        let g = vec![3.0, -0.004];
        let q = s.step(&p, &g, 0.1);
        // hand evaluation of the recurrences at t=1
        for i in 0..2 {
            let m_hat = (0.1 * g[i]) / (1.0 - 0.9);
            let v_hat = (0.001 * g[i] * g[i]) / (1.0 - 0.999);
            let expect = -0.1 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((q[i] - expect).abs() < 1e-15);
            assert!((q[i] + 0.1 * g[i].signum()).abs() < 1e-4);
        }
    }

    #[test]
    fn deterministic_given_state() {
        let mut s1 = AdamState::<f64>::new(4);
        let mut s2 = AdamState::<f64>::new(4);
        let p = vec![0.1, 0.2, 0.3, 0.4];
        let g = vec![0.5, -0.5, 0.25, 0.0];
        for _ in 0..10 {
            let a = s1.step(&p, &g, 0.003);
            let b = s2.step(&p, &g, 0.003);
            assert_eq!(a, b);
        }
    }
}
