//! Reverse-mode autograd tape over dense matrices.
//!
//! Ops are an enum; backward walks the node list in reverse, accumulating
//! gradients in fixed order so results are bit-deterministic. Shapes are
//! asserted at op construction.

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    idx: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    /// (n x m) + (1 x m), second operand broadcast over rows.
    AddRowBroadcast(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    Mul(usize, usize),
    PowI(usize, i32),
    Tanh(usize),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Sum(usize),
    MeanRows(usize),
    ConcatCols(Vec<usize>),
    ColSlice(usize, usize),
    GatherRows(usize, Vec<usize>),
    Softmax(usize),
    LogSoftmax(usize),
    Transpose(usize),
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let var = Var {
            idx: self.nodes.len(),
            rows: value.rows,
            cols: value.cols,
        };
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        var
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.idx].value
    }

    /// Gradient of the last `backward` target w.r.t. `v`; zeros if the node
    /// was not reached.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        self.nodes[v.idx]
            .grad
            .clone()
            .unwrap_or_else(|| vec![0.0; self.nodes[v.idx].value.len()])
    }

    pub fn grad_opt(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.idx].grad.as_deref()
    }

    // -- ops ---------------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(a.cols, b.rows, "matmul inner dims {} vs {}", a.cols, b.rows);
        let (ta, tb) = (&self.nodes[a.idx].value, &self.nodes[b.idx].value);
        let mut out = Tensor::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for k in 0..a.cols {
                let av = ta.at(i, k);
                if av == 0.0 {
                    continue;
                }
                for j in 0..b.cols {
                    *out.at_mut(i, j) += av * tb.at(k, j);
                }
            }
        }
        self.push(out, Op::MatMul(a.idx, b.idx))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols), "add shape mismatch");
        let data = self.nodes[a.idx]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.idx].value.data)
            .map(|(x, y)| x + y)
            .collect();
        self.push(
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            },
            Op::Add(a.idx, b.idx),
        )
    }

    pub fn add_row_broadcast(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(b.rows, 1, "broadcast operand must be a row vector");
        assert_eq!(a.cols, b.cols, "broadcast width mismatch");
        let mut out = self.nodes[a.idx].value.clone();
        for i in 0..a.rows {
            for j in 0..a.cols {
                *out.at_mut(i, j) += self.nodes[b.idx].value.at(0, j);
            }
        }
        self.push(out, Op::AddRowBroadcast(a.idx, b.idx))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let data = self.nodes[a.idx]
            .value
            .data
            .iter()
            .map(|x| x * factor)
            .collect();
        self.push(
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            },
            Op::Scale(a.idx, factor),
        )
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let data = self.nodes[a.idx]
            .value
            .data
            .iter()
            .map(|x| x + c)
            .collect();
        self.push(
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            },
            Op::AddConst(a.idx),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols), "mul shape mismatch");
        let data = self.nodes[a.idx]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.idx].value.data)
            .map(|(x, y)| x * y)
            .collect();
        self.push(
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            },
            Op::Mul(a.idx, b.idx),
        )
    }

    pub fn powi(&mut self, a: Var, p: i32) -> Var {
        assert!(p >= 1, "powi exponent must be >= 1");
        let data = self.nodes[a.idx]
            .value
            .data
            .iter()
            .map(|x| x.powi(p))
            .collect();
        self.push(
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            },
            Op::PowI(a.idx, p),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let data = self.nodes[a.idx].value.data.iter().map(|x| x.tanh()).collect();
        self.push(
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            },
            Op::Tanh(a.idx),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.nodes[a.idx]
            .value
            .data
            .iter()
            .map(|x| x.max(0.0))
            .collect();
        self.push(
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            },
            Op::Relu(a.idx),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let data = self.nodes[a.idx]
            .value
            .data
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        self.push(
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            },
            Op::Sigmoid(a.idx),
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let data = self.nodes[a.idx].value.data.iter().map(|x| x.exp()).collect();
        self.push(
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            },
            Op::Exp(a.idx),
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total: f64 = self.nodes[a.idx].value.data.iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a.idx))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = (a.rows * a.cols).max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Arithmetic mean over rows: (n x m) -> (1 x m). Empty input yields a
    /// zero row so entity graphs with no nodes contribute nothing.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let mut out = Tensor::zeros(1, a.cols);
        if a.rows > 0 {
            for j in 0..a.cols {
                let mut s = 0.0;
                for i in 0..a.rows {
                    s += self.nodes[a.idx].value.at(i, j);
                }
                out.data[j] = s / a.rows as f64;
            }
        }
        self.push(out, Op::MeanRows(a.idx))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = parts[0].rows;
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            assert_eq!(p.rows, rows, "concat_cols row mismatch");
            for i in 0..rows {
                for j in 0..p.cols {
                    *out.at_mut(i, offset + j) = self.nodes[p.idx].value.at(i, j);
                }
            }
            offset += p.cols;
        }
        self.push(out, Op::ConcatCols(parts.iter().map(|p| p.idx).collect()))
    }

    pub fn col_slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= a.cols, "col_slice out of range");
        let mut out = Tensor::zeros(a.rows, len);
        for i in 0..a.rows {
            for j in 0..len {
                *out.at_mut(i, j) = self.nodes[a.idx].value.at(i, start + j);
            }
        }
        self.push(out, Op::ColSlice(a.idx, start))
    }

    /// Gathers whole rows by index: (n x m) -> (k x m).
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let mut out = Tensor::zeros(indices.len(), a.cols);
        for (r, &i) in indices.iter().enumerate() {
            assert!(i < a.rows, "gather_rows index out of range");
            for j in 0..a.cols {
                *out.at_mut(r, j) = self.nodes[a.idx].value.at(i, j);
            }
        }
        self.push(out, Op::GatherRows(a.idx, indices.to_vec()))
    }

    /// Softmax over all entries (max-shifted). Shape is preserved.
    pub fn softmax(&mut self, a: Var) -> Var {
        let src = &self.nodes[a.idx].value;
        let mx = src.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = src.data.iter().map(|x| (x - mx).exp()).collect();
        let total: f64 = exps.iter().sum();
        let data = exps.into_iter().map(|e| e / total).collect();
        self.push(
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            },
            Op::Softmax(a.idx),
        )
    }

    /// Log-softmax over all entries (max-shifted).
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let src = &self.nodes[a.idx].value;
        let mx = src.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logsum = src
            .data
            .iter()
            .map(|x| (x - mx).exp())
            .sum::<f64>()
            .ln()
            + mx;
        let data = src.data.iter().map(|x| x - logsum).collect();
        self.push(
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            },
            Op::LogSoftmax(a.idx),
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let mut out = Tensor::zeros(a.cols, a.rows);
        for i in 0..a.rows {
            for j in 0..a.cols {
                *out.at_mut(j, i) = self.nodes[a.idx].value.at(i, j);
            }
        }
        self.push(out, Op::Transpose(a.idx))
    }

    // -- backward ----------------------------------------------------------

    fn grad_buf(&mut self, idx: usize) -> &mut Vec<f64> {
        let len = self.nodes[idx].value.len();
        self.nodes[idx].grad.get_or_insert_with(|| vec![0.0; len])
    }

    /// Backpropagates from a scalar target. Resets previous gradients.
    pub fn backward(&mut self, target: Var) {
        assert_eq!(
            (target.rows, target.cols),
            (1, 1),
            "backward target must be scalar"
        );
        for node in &mut self.nodes {
            node.grad = None;
        }
        *self.grad_buf(target.idx) = vec![1.0];

        for idx in (0..=target.idx).rev() {
            let Some(g) = self.nodes[idx].grad.clone() else {
                continue;
            };
            match self.nodes[idx].op.clone() {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (ar, ac) = (self.nodes[a].value.rows, self.nodes[a].value.cols);
                    let bc = self.nodes[b].value.cols;
                    // dA = G * B^T
                    let bval = self.nodes[b].value.clone();
                    {
                        let ga = self.grad_buf(a);
                        for i in 0..ar {
                            for k in 0..ac {
                                let mut s = 0.0;
                                for j in 0..bc {
                                    s += g[i * bc + j] * bval.at(k, j);
                                }
                                ga[i * ac + k] += s;
                            }
                        }
                    }
                    // dB = A^T * G
                    let aval = self.nodes[a].value.clone();
                    {
                        let gb = self.grad_buf(b);
                        for k in 0..ac {
                            for j in 0..bc {
                                let mut s = 0.0;
                                for i in 0..ar {
                                    s += aval.at(i, k) * g[i * bc + j];
                                }
                                gb[k * bc + j] += s;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (dst, s) in self.grad_buf(a).iter_mut().zip(&g) {
                        *dst += s;
                    }
                    for (dst, s) in self.grad_buf(b).iter_mut().zip(&g) {
                        *dst += s;
                    }
                }
                Op::AddRowBroadcast(a, b) => {
                    for (dst, s) in self.grad_buf(a).iter_mut().zip(&g) {
                        *dst += s;
                    }
                    let cols = self.nodes[b].value.cols;
                    let rows = self.nodes[a].value.rows;
                    let gb = self.grad_buf(b);
                    for i in 0..rows {
                        for j in 0..cols {
                            gb[j] += g[i * cols + j];
                        }
                    }
                }
                Op::Scale(a, f) => {
                    for (dst, s) in self.grad_buf(a).iter_mut().zip(&g) {
                        *dst += f * s;
                    }
                }
                Op::AddConst(a) => {
                    for (dst, s) in self.grad_buf(a).iter_mut().zip(&g) {
                        *dst += s;
                    }
                }
                Op::Mul(a, b) => {
                    let bval = self.nodes[b].value.data.clone();
                    for ((dst, s), y) in self.grad_buf(a).iter_mut().zip(&g).zip(&bval) {
                        *dst += s * y;
                    }
                    let aval = self.nodes[a].value.data.clone();
                    for ((dst, s), x) in self.grad_buf(b).iter_mut().zip(&g).zip(&aval) {
                        *dst += s * x;
                    }
                }
                Op::PowI(a, p) => {
                    let aval = self.nodes[a].value.data.clone();
                    for ((dst, s), x) in self.grad_buf(a).iter_mut().zip(&g).zip(&aval) {
                        *dst += s * p as f64 * x.powi(p - 1);
                    }
                }
                Op::Tanh(a) => {
                    let y = self.nodes[idx].value.data.clone();
                    for ((dst, s), yv) in self.grad_buf(a).iter_mut().zip(&g).zip(&y) {
                        *dst += s * (1.0 - yv * yv);
                    }
                }
                Op::Relu(a) => {
                    let x = self.nodes[a].value.data.clone();
                    for ((dst, s), xv) in self.grad_buf(a).iter_mut().zip(&g).zip(&x) {
                        if *xv > 0.0 {
                            *dst += s;
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let y = self.nodes[idx].value.data.clone();
                    for ((dst, s), yv) in self.grad_buf(a).iter_mut().zip(&g).zip(&y) {
                        *dst += s * yv * (1.0 - yv);
                    }
                }
                Op::Exp(a) => {
                    let y = self.nodes[idx].value.data.clone();
                    for ((dst, s), yv) in self.grad_buf(a).iter_mut().zip(&g).zip(&y) {
                        *dst += s * yv;
                    }
                }
                Op::Sum(a) => {
                    let s = g[0];
                    for dst in self.grad_buf(a).iter_mut() {
                        *dst += s;
                    }
                }
                Op::MeanRows(a) => {
                    let rows = self.nodes[a].value.rows;
                    let cols = self.nodes[a].value.cols;
                    if rows > 0 {
                        let ga = self.grad_buf(a);
                        for i in 0..rows {
                            for j in 0..cols {
                                ga[i * cols + j] += g[j] / rows as f64;
                            }
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let rows = self.nodes[idx].value.rows;
                    let total_cols = self.nodes[idx].value.cols;
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.nodes[p].value.cols;
                        let gp = self.grad_buf(p);
                        for i in 0..rows {
                            for j in 0..pc {
                                gp[i * pc + j] += g[i * total_cols + offset + j];
                            }
                        }
                        offset += pc;
                    }
                }
                Op::ColSlice(a, start) => {
                    let rows = self.nodes[idx].value.rows;
                    let len = self.nodes[idx].value.cols;
                    let acols = self.nodes[a].value.cols;
                    let ga = self.grad_buf(a);
                    for i in 0..rows {
                        for j in 0..len {
                            ga[i * acols + start + j] += g[i * len + j];
                        }
                    }
                }
                Op::GatherRows(a, indices) => {
                    let cols = self.nodes[a].value.cols;
                    let ga = self.grad_buf(a);
                    for (r, &i) in indices.iter().enumerate() {
                        for j in 0..cols {
                            ga[i * cols + j] += g[r * cols + j];
                        }
                    }
                }
                Op::Softmax(a) => {
                    let y = self.nodes[idx].value.data.clone();
                    let dot: f64 = g.iter().zip(&y).map(|(gv, yv)| gv * yv).sum();
                    for ((dst, s), yv) in self.grad_buf(a).iter_mut().zip(&g).zip(&y) {
                        *dst += yv * (s - dot);
                    }
                }
                Op::LogSoftmax(a) => {
                    let y = self.nodes[idx].value.data.clone();
                    let gsum: f64 = g.iter().sum();
                    for ((dst, s), yv) in self.grad_buf(a).iter_mut().zip(&g).zip(&y) {
                        *dst += s - yv.exp() * gsum;
                    }
                }
                Op::Transpose(a) => {
                    let rows = self.nodes[idx].value.rows;
                    let cols = self.nodes[idx].value.cols;
                    let ga = self.grad_buf(a);
                    for i in 0..rows {
                        for j in 0..cols {
                            ga[j * rows + i] += g[i * cols + j];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{
        finite_difference_grads, max_relative_grad_error, Binding, GradStore, ParamSet,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect(),
        }
    }

    /// A composite expression touching every op; used to finite-difference
    /// check the whole tape in one go.
    fn composite_loss(params: &ParamSet) -> (f64, Option<GradStore>) {
        let mut tape = Tape::new();
        let binding = Binding::bind(&mut tape, params);
        let w1 = binding.var(params, "w1"); // 3x4
        let w2 = binding.var(params, "w2"); // 4x3
        let b = binding.var(params, "b"); // 1x4
        let x = tape.leaf(Tensor::from_rows(vec![
            vec![0.3, -0.7, 1.1],
            vec![-0.2, 0.5, 0.9],
            vec![1.3, 0.1, -0.4],
        ]));

        let h = tape.matmul(x, w1); // 3x4
        let h = tape.add_row_broadcast(h, b);
        let t = tape.tanh(h);
        let p2 = tape.powi(t, 3);
        let r = tape.relu(h);
        let s = tape.sigmoid(h);
        let m = tape.mul(r, s); // 3x4
        let joined = tape.concat_cols(&[p2, m]); // 3x8
        let sliced = tape.col_slice(joined, 2, 4); // 3x4
        let back = tape.matmul(sliced, w2); // 3x3
        let tr = tape.transpose(back); // 3x3
        let gathered = tape.gather_rows(tr, &[2, 0]); // 2x3
        let mean = tape.mean_rows(gathered); // 1x3
        let sm = tape.softmax(mean);
        let lsm = tape.log_softmax(mean);
        let e = tape.exp(lsm);
        let mixed = tape.mul(sm, e);
        let shifted = tape.add_const(mixed, 0.25);
        let scaled = tape.scale(shifted, 1.7);
        let also = tape.add(scaled, sm);
        let total = tape.sum(also);
        let loss = tape.mean_all(total);

        let value = tape.value(loss).data[0];
        tape.backward(loss);
        let mut grads = GradStore::zeros_like(params);
        grads.accumulate(&tape, &binding, 1.0);
        (value, Some(grads))
    }

    #[test]
    fn composite_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut params = ParamSet::new();
        params.insert("w1", random_tensor(&mut rng, 3, 4));
        params.insert("w2", random_tensor(&mut rng, 4, 3));
        params.insert("b", random_tensor(&mut rng, 1, 4));

        let (_, analytic) = composite_loss(&params);
        let numeric = finite_difference_grads(&params, 1e-6, |p| composite_loss(p).0);
        let err = max_relative_grad_error(&analytic.unwrap(), &numeric);
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn matmul_values() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = tape.leaf(Tensor::from_rows(vec![vec![5.0, 6.0], vec![7.0, 8.0]]));
        let c = tape.matmul(a, b);
        assert_eq!(tape.value(c).data, vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn softmax_of_equal_scores_is_uniform() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::row_vector(&[2.5, 2.5, 2.5, 2.5]));
        let s = tape.softmax(a);
        for &v in &tape.value(s).data {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn log_softmax_single_entry_is_zero() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::row_vector(&[42.0]));
        let l = tape.log_softmax(a);
        assert_eq!(tape.value(l).data[0], 0.0);
    }

    #[test]
    fn mean_rows_of_single_row_is_identity() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::row_vector(&[1.0, -2.0, 3.0]));
        let m = tape.mean_rows(a);
        assert_eq!(tape.value(m).data, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn backward_resets_between_calls() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(2.0));
        let sq = tape.powi(a, 2);
        let loss = tape.sum(sq);
        tape.backward(loss);
        assert_eq!(tape.grad(a), vec![4.0]);
        tape.backward(loss);
        assert_eq!(tape.grad(a), vec![4.0], "grads must not accumulate across calls");
    }

    #[test]
    fn gather_rows_accumulates_duplicate_indices() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::col_vector(&[1.0, 2.0, 3.0]));
        let g = tape.gather_rows(a, &[1, 1, 2]);
        let s = tape.sum(g);
        tape.backward(s);
        assert_eq!(tape.grad(a), vec![0.0, 2.0, 1.0]);
    }
}
