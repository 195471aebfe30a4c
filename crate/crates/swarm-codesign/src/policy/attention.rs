//! Multi-head attention decoder: the context queries the node embeddings
//! and the attended summary is scored against a separate projection of each
//! node to yield one logit per node.

use crate::nn::{Binding, ParamSet, Tape, Tensor, Var};

pub struct DecoderNames {
    prefix: String,
}

impl DecoderNames {
    pub fn new(prefix: &str) -> Self {
        Self {
            prefix: prefix.to_string(),
        }
    }
    pub fn q_w(&self) -> String {
        format!("dec_{}_q_w", self.prefix)
    }
    pub fn k_w(&self) -> String {
        format!("dec_{}_k_w", self.prefix)
    }
    pub fn v_w(&self) -> String {
        format!("dec_{}_v_w", self.prefix)
    }
    pub fn ff_w(&self) -> String {
        format!("dec_{}_ff_w", self.prefix)
    }
    pub fn ff_b(&self) -> String {
        format!("dec_{}_ff_b", self.prefix)
    }
    pub fn proj_w(&self) -> String {
        format!("dec_{}_proj_w", self.prefix)
    }
}

pub fn init_decoder<R: rand::Rng>(
    rng: &mut R,
    params: &mut ParamSet,
    prefix: &str,
    context_width: usize,
    embed: usize,
) {
    let names = DecoderNames::new(prefix);
    params.insert(&names.q_w(), crate::nn::init_linear(rng, context_width, embed));
    params.insert(&names.k_w(), crate::nn::init_linear(rng, embed, embed));
    params.insert(&names.v_w(), crate::nn::init_linear(rng, embed, embed));
    params.insert(&names.ff_w(), crate::nn::init_linear(rng, embed, embed));
    params.insert(&names.ff_b(), Tensor::zeros(1, embed));
    params.insert(&names.proj_w(), crate::nn::init_linear(rng, embed, embed));
}

/// Returns one logit per node row of `node_embeddings` (N x 1).
pub fn decode(
    tape: &mut Tape,
    params: &ParamSet,
    binding: &Binding,
    prefix: &str,
    node_embeddings: Var,
    context: Var,
    heads: usize,
) -> Var {
    let names = DecoderNames::new(prefix);
    let embed = node_embeddings.cols;
    assert!(embed % heads == 0, "embed width divisible by heads");
    let dh = embed / heads;

    let q_full = tape.matmul(context, binding.var(params, &names.q_w())); // 1 x h
    let k_full = tape.matmul(node_embeddings, binding.var(params, &names.k_w())); // N x h
    let v_full = tape.matmul(node_embeddings, binding.var(params, &names.v_w())); // N x h

    let mut head_outputs = Vec::with_capacity(heads);
    let scale = 1.0 / (dh as f64).sqrt();
    for head in 0..heads {
        let q = tape.col_slice(q_full, head * dh, dh); // 1 x dh
        let k = tape.col_slice(k_full, head * dh, dh); // N x dh
        let v = tape.col_slice(v_full, head * dh, dh); // N x dh
        let k_t = tape.transpose(k); // dh x N
        let scores = tape.matmul(q, k_t); // 1 x N
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax(scores); // 1 x N
        head_outputs.push(tape.matmul(attn, v)); // 1 x dh
    }
    let attended = tape.concat_cols(&head_outputs); // 1 x h
    let ff = tape.matmul(attended, binding.var(params, &names.ff_w()));
    let ff = tape.add_row_broadcast(ff, binding.var(params, &names.ff_b()));
    let ff = tape.relu(ff); // 1 x h

    let projected = tape.matmul(node_embeddings, binding.var(params, &names.proj_w())); // N x h
    let ff_col = tape.transpose(ff); // h x 1
    tape.matmul(projected, ff_col) // N x 1
}

/// Attention weights of each head for inspection/tests (no grad needed).
pub fn attention_weights(
    params: &ParamSet,
    prefix: &str,
    node_embeddings: &Tensor,
    context: &Tensor,
    heads: usize,
) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let binding = Binding::bind(&mut tape, params);
    let nodes = tape.leaf(node_embeddings.clone());
    let ctx = tape.leaf(context.clone());
    let names = DecoderNames::new(prefix);
    let embed = node_embeddings.cols;
    let dh = embed / heads;
    let q_full = tape.matmul(ctx, binding.var(params, &names.q_w()));
    let k_full = tape.matmul(nodes, binding.var(params, &names.k_w()));
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Vec::new();
    for head in 0..heads {
        let q = tape.col_slice(q_full, head * dh, dh);
        let k = tape.col_slice(k_full, head * dh, dh);
        let k_t = tape.transpose(k);
        let scores = tape.matmul(q, k_t);
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax(scores);
        out.push(tape.value(attn).data.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(h: usize) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = ParamSet::new();
        init_decoder(&mut rng, &mut params, "t", 2 * h, h);
        params
    }

    #[test]
    fn identical_embeddings_give_uniform_attention() {
        let h = 4;
        let params = setup(h);
        let row = vec![0.3, -0.2, 0.8, 0.1];
        let nodes = Tensor::from_rows(vec![row.clone(), row.clone(), row]);
        let context = Tensor::row_vector(&[0.5; 8]);
        for weights in attention_weights(&params, "t", &nodes, &context, 2) {
            for &w in &weights {
                assert!((w - 1.0 / 3.0).abs() < 1e-12, "weight {w}");
            }
        }
    }

    #[test]
    fn single_node_attention_weight_is_one() {
        let h = 4;
        let params = setup(h);
        let nodes = Tensor::from_rows(vec![vec![0.3, -0.2, 0.8, 0.1]]);
        let context = Tensor::row_vector(&[0.5; 8]);
        for weights in attention_weights(&params, "t", &nodes, &context, 2) {
            assert_eq!(weights.len(), 1);
            assert!((weights[0] - 1.0).abs() < 1e-15);
        }
    }

    /// Step-by-step manual attention computation on a hand-sized instance.
    #[test]
    fn logits_match_manual_computation() {
        let h = 4;
        let heads = 2;
        let params = setup(h);
        let nodes = Tensor::from_rows(vec![
            vec![0.2, -0.5, 0.7, 0.0],
            vec![-0.1, 0.4, 0.3, 0.9],
            vec![0.6, 0.1, -0.2, 0.5],
        ]);
        let context = Tensor::row_vector(&[0.1, 0.2, -0.3, 0.4, 0.0, -0.1, 0.25, 0.6]);

        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, &params);
        let nv = tape.leaf(nodes.clone());
        let cv = tape.leaf(context.clone());
        let logits = decode(&mut tape, &params, &binding, "t", nv, cv, heads);
        let got = tape.value(logits).data.clone();

        // Manual computation with plain loops.
        let names = DecoderNames::new("t");
        let matmul = |a: &Tensor, b: &Tensor| -> Tensor {
            let mut out = Tensor::zeros(a.rows, b.cols);
            for i in 0..a.rows {
                for j in 0..b.cols {
                    let mut s = 0.0;
                    for k in 0..a.cols {
                        s += a.at(i, k) * b.at(k, j);
                    }
                    *out.at_mut(i, j) = s;
                }
            }
            out
        };
        let q = matmul(&context, params.get(&names.q_w()));
        let k = matmul(&nodes, params.get(&names.k_w()));
        let v = matmul(&nodes, params.get(&names.v_w()));
        let dh = h / heads;
        let mut attended = vec![0.0; h];
        for head in 0..heads {
            let cols = head * dh..(head + 1) * dh;
            let mut scores = vec![0.0; 3];
            for n in 0..3 {
                let mut s = 0.0;
                for c in cols.clone() {
                    s += q.at(0, c) * k.at(n, c);
                }
                scores[n] = s / (dh as f64).sqrt();
            }
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (offset, c) in cols.clone().enumerate() {
                let _ = offset;
                let mut s = 0.0;
                for n in 0..3 {
                    s += exps[n] / total * v.at(n, c);
                }
                attended[c] = s;
            }
        }
        let att = Tensor::row_vector(&attended);
        let ff_lin = matmul(&att, params.get(&names.ff_w()));
        let ffb = params.get(&names.ff_b());
        let ff: Vec<f64> = (0..h)
            .map(|j| (ff_lin.data[j] + ffb.data[j]).max(0.0))
            .collect();
        let proj = matmul(&nodes, params.get(&names.proj_w()));
        for n in 0..3 {
            let want: f64 = (0..h).map(|j| proj.at(n, j) * ff[j]).sum();
            assert!((got[n] - want).abs() < 1e-12, "node {n}: {} vs {want}", got[n]);
        }
    }
}
