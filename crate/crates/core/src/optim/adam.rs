use serde::{Deserialize, Serialize};

/// Bias-corrected adaptive moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(dim: usize) -> Self {
        Self::with_betas(dim, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(dim: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Consumes one gradient and returns the ascent update `step · m̂ / (√v̂ + ε)`.
    pub fn transform(&mut self, grad: &[f64], step_size: f64) -> Vec<f64> {
        self.t += 1;
        adam_transform(self, grad, step_size)
    }
}

/// The Adam update for step `moments.t` (already incremented, ≥ 1).
pub fn adam_transform(moments: &mut Adam, grad: &[f64], step_size: f64) -> Vec<f64> {
    debug_assert!(moments.t >= 1);
    let (b1, b2) = (moments.beta1, moments.beta2);
    let c1 = 1.0 - b1.powi(moments.t as i32);
    let c2 = 1.0 - b2.powi(moments.t as i32);
    let mut out = Vec::with_capacity(grad.len());
    for ((m, v), &g) in moments.m.iter_mut().zip(moments.v.iter_mut()).zip(grad) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        out.push(step_size * m_hat / (v_hat.sqrt() + moments.eps));
    }
    out
}
