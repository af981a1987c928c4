use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::DenseNet;
use crate::{Error, Result};

/// Per-vehicle feature triple `(d_rel, v_rel, lane_rel)`.
pub const DYNAMIC_DIM: usize = 3;

/// Layer widths of the set encoder and the Q head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub phi_hidden: usize,
    pub phi_out: usize,
    pub rho_hidden: usize,
    pub rho_out: usize,
    pub static_dim: usize,
    pub gap_dim: usize,
    pub q_hidden: Vec<usize>,
    pub outputs: usize,
}

impl Architecture {
    /// Gap-conditioned scalar Q used by the options agent.
    pub fn options() -> Self {
        Self {
            phi_hidden: 20,
            phi_out: 80,
            rho_hidden: 80,
            rho_out: 20,
            static_dim: 3,
            gap_dim: 5,
            q_hidden: vec![100, 100],
            outputs: 1,
        }
    }

    /// Three-way head (keep, left, right) without gap input.
    pub fn high_level() -> Self {
        Self {
            gap_dim: 0,
            outputs: 3,
            ..Self::options()
        }
    }

    pub fn head_input_dim(&self) -> usize {
        self.rho_out + self.static_dim + self.gap_dim
    }
}

/// `Q(rho(sum_j phi(x_j)), static, gap)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepSetQNet {
    arch: Architecture,
    phi: DenseNet,
    rho: DenseNet,
    q: DenseNet,
}

/// Values kept from a forward pass for the reverse pass.
#[derive(Debug, Clone, Default)]
pub struct QTape {
    count: usize,
    phi: Vec<f64>,
    pooled: Vec<f64>,
    rho: Vec<f64>,
    head_in: Vec<f64>,
    q: Vec<f64>,
}

impl QTape {
    /// Every rectifier unit's on/off state; used to detect kinks in gradient checks.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.phi
            .iter()
            .chain(&self.rho)
            .chain(&self.q)
            .map(|v| *v > 0.0)
            .collect()
    }
}

/// Indices of `rows` in lexicographic order, the canonical summation order.
pub fn canonical_order(rows: &[[f64; DYNAMIC_DIM]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (&rows[a], &rows[b]);
        x[0].total_cmp(&y[0])
            .then(x[1].total_cmp(&y[1]))
            .then(x[2].total_cmp(&y[2]))
    });
    idx
}

impl DeepSetQNet {
    /// All-zero parameters.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        let phi = DenseNet::mlp(&[DYNAMIC_DIM, arch.phi_hidden, arch.phi_out])?;
        let rho = DenseNet::mlp(&[arch.phi_out, arch.rho_hidden, arch.rho_out])?;
        let mut q_sizes = vec![arch.head_input_dim()];
        q_sizes.extend(&arch.q_hidden);
        q_sizes.push(arch.outputs);
        let q = DenseNet::mlp(&q_sizes)?;
        Ok(Self { arch, phi, rho, q })
    }

    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        net.phi.init_uniform(rng);
        net.rho.init_uniform(rng);
        net.q.init_uniform(rng);
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        self.phi.param_count() + self.rho.param_count() + self.q.param_count()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.phi
            .params()
            .iter()
            .chain(self.rho.params())
            .chain(self.q.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.phi
            .params_mut()
            .iter_mut()
            .chain(self.rho.params_mut().iter_mut())
            .chain(self.q.params_mut().iter_mut())
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                got: values.len(),
                context: "flat parameters",
            });
        }
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
        Ok(())
    }

    /// Checks internal consistency after deserialization.
    pub fn validate(&self) -> Result<()> {
        let fresh = Self::zeros(self.arch.clone())?;
        for (ours, theirs) in [(&self.phi, &fresh.phi), (&self.rho, &fresh.rho), (&self.q, &fresh.q)] {
            if !ours.same_shape(theirs) {
                return Err(Error::Architecture("layer sizes disagree with architecture".into()));
            }
            ours.validate()?;
        }
        Ok(())
    }

    pub fn same_architecture(&self, other: &DeepSetQNet) -> bool {
        self.arch == other.arch
    }

    fn check_inputs(&self, stat: &[f64], gap: &[f64]) -> Result<()> {
        if stat.len() != self.arch.static_dim {
            return Err(Error::Dimension {
                expected: self.arch.static_dim,
                got: stat.len(),
                context: "static features",
            });
        }
        if gap.len() != self.arch.gap_dim {
            return Err(Error::Dimension {
                expected: self.arch.gap_dim,
                got: gap.len(),
                context: "gap features",
            });
        }
        Ok(())
    }

    /// Set representation `rho(sum_j phi(x_j))`, summed in canonical order.
    pub fn encode(&self, dynamic: &[[f64; DYNAMIC_DIM]]) -> Vec<f64> {
        let mut pooled = vec![0.0; self.arch.phi_out];
        let mut tape = vec![0.0; self.phi.tape_len()];
        for i in canonical_order(dynamic) {
            self.phi.forward_tape(&dynamic[i], &mut tape);
            for (p, o) in pooled.iter_mut().zip(self.phi.output(&tape)) {
                *p += o;
            }
        }
        self.rho.forward(&pooled)
    }

    /// Head outputs for a precomputed encoding.
    pub fn head(&self, encoding: &[f64], stat: &[f64], gap: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(stat, gap)?;
        if encoding.len() != self.arch.rho_out {
            return Err(Error::Dimension {
                expected: self.arch.rho_out,
                got: encoding.len(),
                context: "set encoding",
            });
        }
        let mut input = Vec::with_capacity(self.arch.head_input_dim());
        input.extend_from_slice(encoding);
        input.extend_from_slice(stat);
        input.extend_from_slice(gap);
        Ok(self.q.forward(&input))
    }

    pub fn forward(&self, dynamic: &[[f64; DYNAMIC_DIM]], stat: &[f64], gap: &[f64]) -> Result<Vec<f64>> {
        self.check_inputs(stat, gap)?;
        self.head(&self.encode(dynamic), stat, gap)
    }

    /// Scalar Q value; the first output for multi-output heads.
    pub fn forward_q(&self, dynamic: &[[f64; DYNAMIC_DIM]], stat: &[f64], gap: &[f64]) -> Result<f64> {
        Ok(self.forward(dynamic, stat, gap)?[0])
    }

    /// Forward pass retaining everything `backward` needs.
    pub fn forward_tape<'t>(
        &self,
        dynamic: &[[f64; DYNAMIC_DIM]],
        stat: &[f64],
        gap: &[f64],
        tape: &'t mut QTape,
    ) -> Result<&'t [f64]> {
        self.check_inputs(stat, gap)?;
        let phi_len = self.phi.tape_len();
        tape.count = dynamic.len();
        tape.phi.resize(phi_len * dynamic.len(), 0.0);
        tape.pooled.clear();
        tape.pooled.resize(self.arch.phi_out, 0.0);
        for (slot, i) in canonical_order(dynamic).into_iter().enumerate() {
            let t = &mut tape.phi[slot * phi_len..(slot + 1) * phi_len];
            self.phi.forward_tape(&dynamic[i], t);
            for (p, o) in tape.pooled.iter_mut().zip(self.phi.output(t)) {
                *p += o;
            }
        }
        tape.rho.resize(self.rho.tape_len(), 0.0);
        self.rho.forward_tape(&tape.pooled, &mut tape.rho);
        tape.head_in.clear();
        tape.head_in.extend_from_slice(self.rho.output(&tape.rho));
        tape.head_in.extend_from_slice(stat);
        tape.head_in.extend_from_slice(gap);
        tape.q.resize(self.q.tape_len(), 0.0);
        self.q.forward_tape(&tape.head_in, &mut tape.q);
        Ok(self.q.output(&tape.q))
    }

    /// Accumulates parameter gradients (flat, in `params()` order) for output gradient `grad_out`.
    pub fn backward(&self, tape: &QTape, grad_out: &[f64], grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.param_count());
        let (g_phi, rest) = grads.split_at_mut(self.phi.param_count());
        let (g_rho, g_q) = rest.split_at_mut(self.rho.param_count());
        let mut g_head = vec![0.0; self.arch.head_input_dim()];
        self.q.backward(&tape.q, grad_out, g_q, Some(&mut g_head));
        let mut g_pooled = vec![0.0; self.arch.phi_out];
        self.rho
            .backward(&tape.rho, &g_head[..self.arch.rho_out], g_rho, Some(&mut g_pooled));
        let phi_len = self.phi.tape_len();
        for slot in 0..tape.count {
            // sum pooling broadcasts the same upstream gradient to every instance
            self.phi
                .backward(&tape.phi[slot * phi_len..(slot + 1) * phi_len], &g_pooled, g_phi, None);
        }
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut DeepSetQNet, online: &DeepSetQNet, tau: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(Error::Architecture("soft update between different architectures".into()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
    }
    if tau == 1.0 {
        *target = online.clone();
        return Ok(());
    }
    for (t, o) in target.params_mut().zip(online.params()) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}
