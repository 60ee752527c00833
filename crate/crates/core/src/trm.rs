//! Tiny Recursive Module: residual refinement of a global latent.

use crate::error::Result;
use crate::numerics::{Bound, LayerNorm, ParamId, ParamStore, Rng, Tape, Tensor, Var};

/// Mean over all spatial positions of `features: [d, h, w]` → `[d]`.
pub fn global_pool(tape: &Tape<'_>, features: Var) -> Result<Var> {
    let s = tape.shape(features);
    let (d, n) = (s[0], s[1] * s[2]);
    let flat = tape.reshape(features, &[d, n])?;
    let avg = tape.constant(Tensor::full(&[n, 1], 1.0 / n as f64));
    let g = tape.matmul(flat, avg)?;
    tape.reshape(g, &[d])
}

/// `z⁰` and the bias-free two-layer update
/// `z ← z + W_out · GELU(W_in · [LN(z), g])`.
#[derive(Clone, Debug)]
pub struct Trm {
    pub z0: ParamId,
    pub w_in: ParamId,
    pub w_out: ParamId,
    pub ln: LayerNorm,
}

impl Trm {
    pub fn new(store: &mut ParamStore, d_z: usize, d_model: usize, rng: &mut Rng) -> Self {
        let din = d_z + d_model;
        Trm {
            z0: store.add_normal("trm.z0", &[d_z], 0.5, rng),
            w_in: store.add_normal("trm.w_in", &[d_z, din], (2.0 / din as f64).sqrt(), rng),
            w_out: store.add_normal("trm.w_out", &[d_z, d_z], 0.5 / (d_z as f64).sqrt(), rng),
            ln: LayerNorm::new(store, "trm.ln", d_z),
        }
    }

    /// Runs `iterations` refinement steps from `z⁰`.
    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, g: Var, iterations: usize) -> Result<Var> {
        let mut z = p[self.z0];
        for _ in 0..iterations {
            z = self.step(tape, p, z, g)?;
        }
        Ok(z)
    }

    /// One residual update.
    pub fn step(&self, tape: &Tape<'_>, p: &Bound, z: Var, g: Var) -> Result<Var> {
        let u = tape.concat(&[self.ln.forward(tape, p, z)?, g])?;
        let h = tape.gelu(tape.linear(u, p[self.w_in], None)?);
        tape.add(z, tape.linear(h, p[self.w_out], None)?)
    }
}
