use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Bias-corrected Adam moments for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state for `n` parameters with `beta1 = 0.9`, `beta2 = 0.999`.
    pub fn new(n: usize, alpha: f64, eps: f64) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            eps,
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || self.m.len() != params.len() || self.v.len() != params.len() {
            return Err(Error::ShapeMismatch {
                context: "adam_step",
                expected: (self.m.len(), 1),
                found: (params.len(), grads.len()),
            });
        }
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - libm::pow(self.beta1, t);
        let bc2 = 1.0 - libm::pow(self.beta2, t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.alpha * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
        Ok(())
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], st: &mut AdamState) -> Result<()> {
    st.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = vec![1.5, -2.0, 0.25];
        let mut st = AdamState::new(3, 0.1, 1e-8);
        adam_step(&mut p, &[0.0; 3], &mut st).unwrap();
        assert_eq!(p, vec![1.5, -2.0, 0.25]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_bias_correction_cancels() {
        let mut p = vec![1.0];
        let mut st = AdamState::new(1, 0.1, 1e-8);
        adam_step(&mut p, &[1.0], &mut st).unwrap();
        assert!((p[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![1.0, 2.0];
        let mut st = AdamState::new(2, 0.1, 1e-8);
        assert!(adam_step(&mut p, &[1.0], &mut st).is_err());
        let mut st = AdamState::new(3, 0.1, 1e-8);
        assert!(adam_step(&mut p, &[1.0, 1.0], &mut st).is_err());
        assert_eq!(st.t, 0);
    }

    /// Reference written in the textbook form with running beta powers.
    fn reference_adam(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], b1t: &mut f64, b2t: &mut f64) {
        let (a, b1, b2, e) = (0.05, 0.9, 0.999, 1e-8);
        *b1t *= b1;
        *b2t *= b2;
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - *b1t);
            let vh = v[i] / (1.0 - *b2t);
            p[i] -= a * mh / (vh.sqrt() + e);
        }
    }

    #[test]
    fn five_step_quadratic_matches_reference() {
        // f(p) = sum_i c_i (p_i - t_i)^2
        let c = [1.0, 3.0, 0.5];
        let target = [2.0, -1.0, 0.3];
        let grad = |p: &[f64]| -> Vec<f64> { (0..3).map(|i| 2.0 * c[i] * (p[i] - target[i])).collect() };

        let mut p = vec![0.0, 0.5, -0.7];
        let mut st = AdamState::new(3, 0.05, 1e-8);
        let mut q = p.clone();
        let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
        let (mut b1t, mut b2t) = (1.0, 1.0);
        for _ in 0..5 {
            let g = grad(&p);
            adam_step(&mut p, &g, &mut st).unwrap();
            let gq = grad(&q);
            reference_adam(&mut q, &gq, &mut m, &mut v, &mut b1t, &mut b2t);
        }
        for i in 0..3 {
            assert!((p[i] - q[i]).abs() <= 1e-12, "{} vs {}", p[i], q[i]);
        }
        assert_eq!(st.t, 5);
    }
}
