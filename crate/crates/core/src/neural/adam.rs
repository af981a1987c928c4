use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn param_count(&self) -> usize {
        self.m.len()
    }

    /// One bias-corrected update of `params` (yielded in gradient order).
    pub fn apply<'a, I>(&mut self, params: I, grads: &[f64]) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut f64>,
    {
        if grads.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                got: grads.len(),
                context: "optimizer gradients",
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut seen = 0;
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            seen += 1;
        }
        if seen != grads.len() {
            return Err(Error::Dimension {
                expected: grads.len(),
                got: seen,
                context: "optimizer parameters",
            });
        }
        Ok(())
    }

    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        self.apply(params.iter_mut(), grads)
    }
}
