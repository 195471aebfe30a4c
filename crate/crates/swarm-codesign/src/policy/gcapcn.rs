//! Graph capsule encoder: Laplacian propagation of element-wise statistical
//! moments of the node features, concatenated across moment orders, with a
//! residual initial projection.

use crate::nn::{Binding, ParamSet, Tape, Tensor, Var};

/// Parameter names for one encoder instance.
pub struct EncoderNames {
    prefix: String,
}

impl EncoderNames {
    pub fn new(prefix: &str) -> Self {
        Self {
            prefix: prefix.to_string(),
        }
    }

    pub fn f0_w(&self) -> String {
        format!("enc_{}_f0_w", self.prefix)
    }
    pub fn f0_b(&self) -> String {
        format!("enc_{}_f0_b", self.prefix)
    }
    pub fn cap_w(&self, layer: usize, p: usize) -> String {
        format!("enc_{}_l{layer}_p{p}_w", self.prefix)
    }
    pub fn cap_b(&self, layer: usize, p: usize) -> String {
        format!("enc_{}_l{layer}_p{p}_b", self.prefix)
    }
    pub fn ff_w(&self) -> String {
        format!("enc_{}_ff_w", self.prefix)
    }
    pub fn ff_b(&self) -> String {
        format!("enc_{}_ff_b", self.prefix)
    }
}

/// Registers one encoder's parameters: the initial projection, `layers`
/// capsule layers of `p_moments` maps each, and the final projection.
pub fn init_encoder<R: rand::Rng>(
    rng: &mut R,
    params: &mut ParamSet,
    prefix: &str,
    input_width: usize,
    embed: usize,
    p_moments: usize,
    layers: usize,
) {
    let names = EncoderNames::new(prefix);
    params.insert(&names.f0_w(), crate::nn::init_linear(rng, input_width, embed));
    params.insert(&names.f0_b(), Tensor::zeros(1, embed));
    let mut width = embed;
    for l in 1..=layers {
        for p in 1..=p_moments {
            params.insert(&names.cap_w(l, p), crate::nn::init_linear(rng, width, embed));
            params.insert(&names.cap_b(l, p), Tensor::zeros(1, embed));
        }
        width = embed * p_moments;
    }
    params.insert(&names.ff_w(), crate::nn::init_linear(rng, width, embed));
    params.insert(&names.ff_b(), Tensor::zeros(1, embed));
}

/// Forward pass: returns the N x h node-embedding matrix.
///
/// `F0 = X W0 + b0`; each capsule layer propagates the element-wise p-th
/// powers of the (tanh-bounded) previous output through the Laplacian,
/// applies a learned map with tanh, and concatenates over p; the final
/// projection is added to `F0` as a residual.
pub fn encode(
    tape: &mut Tape,
    params: &ParamSet,
    binding: &Binding,
    prefix: &str,
    features: Var,
    laplacian: Var,
    p_moments: usize,
    layers: usize,
) -> Var {
    let names = EncoderNames::new(prefix);
    let w0 = binding.var(params, &names.f0_w());
    let b0 = binding.var(params, &names.f0_b());
    let f0 = {
        let xw = tape.matmul(features, w0);
        tape.add_row_broadcast(xw, b0)
    };
    let mut g = f0;
    for l in 1..=layers {
        // Powers act on bounded activations; the first layer's input is the
        // raw linear projection, so bound it here.
        let base = if l == 1 { tape.tanh(g) } else { g };
        let mut parts = Vec::with_capacity(p_moments);
        for p in 1..=p_moments {
            let powered = if p == 1 { base } else { tape.powi(base, p as i32) };
            let propagated = tape.matmul(laplacian, powered);
            let w = binding.var(params, &names.cap_w(l, p));
            let b = binding.var(params, &names.cap_b(l, p));
            let lin = tape.matmul(propagated, w);
            let lin = tape.add_row_broadcast(lin, b);
            parts.push(tape.tanh(lin));
        }
        g = tape.concat_cols(&parts);
    }
    let ffw = binding.var(params, &names.ff_w());
    let ffb = binding.var(params, &names.ff_b());
    let projected = tape.matmul(g, ffw);
    let projected = tape.add_row_broadcast(projected, ffb);
    tape.add(f0, projected)
}
