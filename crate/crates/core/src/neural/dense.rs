use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// 4-wide unrolled dot product.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Fully connected feed-forward net with flat parameter storage.
///
/// Layer `l` maps `sizes[l]` to `sizes[l + 1]`; its weights are stored row-major
/// (one row per output unit) followed by its biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

impl DenseNet {
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 || sizes.contains(&0) {
            return Err(Error::Architecture(format!(
                "{} sizes with {} activations",
                sizes.len(),
                activations.len()
            )));
        }
        let count = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; count],
        })
    }

    /// Rectifier on hidden layers, identity on the output layer.
    pub fn mlp(sizes: &[usize]) -> Result<Self> {
        let n = sizes.len().saturating_sub(1);
        let mut acts = vec![Activation::Relu; n];
        if let Some(last) = acts.last_mut() {
            *last = Activation::Identity;
        }
        Self::zeros(sizes, &acts)
    }

    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut off = 0;
        for w in self.sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            for p in &mut self.params[off..off + n_out * (n_in + 1)] {
                *p = rng.gen_range(-bound..bound);
            }
            off += n_out * (n_in + 1);
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Length of the buffer `forward_tape` fills: the input plus every layer output.
    pub fn tape_len(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Checks the stored parameter count against the declared sizes.
    pub fn validate(&self) -> Result<()> {
        let fresh = Self::zeros(&self.sizes, &self.activations)?;
        if fresh.params.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: fresh.params.len(),
                got: self.params.len(),
                context: "dense parameters",
            });
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &DenseNet) -> bool {
        self.sizes == other.sizes && self.activations == other.activations
    }

    /// Forward pass writing the input and every layer's activated output into `tape`.
    pub fn forward_tape(&self, x: &[f64], tape: &mut [f64]) {
        debug_assert_eq!(x.len(), self.sizes[0]);
        debug_assert_eq!(tape.len(), self.tape_len());
        tape[..x.len()].copy_from_slice(x);
        let mut p_off = 0;
        let mut t_off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let (done, rest) = tape.split_at_mut(t_off + n_in);
            let input = &done[t_off..];
            let out = &mut rest[..n_out];
            let weights = &self.params[p_off..p_off + n_out * n_in];
            let biases = &self.params[p_off + n_out * n_in..p_off + n_out * (n_in + 1)];
            for (i, o) in out.iter_mut().enumerate() {
                let z = biases[i] + dot(&weights[i * n_in..(i + 1) * n_in], input);
                *o = match self.activations[l] {
                    Activation::Relu => z.max(0.0),
                    Activation::Identity => z,
                };
            }
            p_off += n_out * (n_in + 1);
            t_off += n_in;
        }
    }

    pub fn output<'a>(&self, tape: &'a [f64]) -> &'a [f64] {
        &tape[tape.len() - self.output_dim()..]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut tape = vec![0.0; self.tape_len()];
        self.forward_tape(x, &mut tape);
        self.output(&tape).to_vec()
    }

    /// Reverse pass over a tape from `forward_tape`.
    ///
    /// Accumulates parameter gradients into `grads` and, if given, writes the
    /// gradient with respect to the input into `grad_in`.
    pub fn backward(&self, tape: &[f64], grad_out: &[f64], grads: &mut [f64], grad_in: Option<&mut [f64]>) {
        debug_assert_eq!(grads.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut delta: Vec<f64> = grad_out.to_vec();
        let mut p_end = self.params.len();
        let mut t_end = tape.len();
        let mut grad_in = grad_in;
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let out = &tape[t_end - n_out..t_end];
            let input = &tape[t_end - n_out - n_in..t_end - n_out];
            if self.activations[l] == Activation::Relu {
                for (d, o) in delta.iter_mut().zip(out) {
                    if *o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let p_off = p_end - n_out * (n_in + 1);
            let w_len = n_out * n_in;
            {
                let (gw, gb) = grads[p_off..p_end].split_at_mut(w_len);
                for (i, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, input, &mut gw[i * n_in..(i + 1) * n_in]);
                    }
                    gb[i] += d;
                }
            }
            let need_input_grad = l > 0 || grad_in.is_some();
            if need_input_grad {
                let weights = &self.params[p_off..p_off + w_len];
                let mut next = vec![0.0; n_in];
                for (i, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, &weights[i * n_in..(i + 1) * n_in], &mut next);
                    }
                }
                if l == 0 {
                    if let Some(g) = grad_in.take() {
                        g.copy_from_slice(&next);
                    }
                }
                delta = next;
            }
            p_end = p_off;
            t_end -= n_out;
        }
    }
}
