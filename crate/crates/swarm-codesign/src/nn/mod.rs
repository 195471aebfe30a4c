//! Minimal dense-tensor autograd used by the policy and critic.
//!
//! Everything is an `f64` row-major matrix. Forward passes build a [`tape::Tape`]
//! of primitive ops; [`tape::Tape::backward`] walks it in reverse. The op set is
//! exactly what the graph encoders, attention decoders, and losses need —
//! no broadcasting rules beyond the ones spelled out per op.

pub mod tape;

pub use tape::{Tape, Var};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged tensor rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn col_vector(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered, named parameter tensors. Order is the canonical layout for
/// gradients, optimizer state and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        debug_assert!(
            self.index_of(name).is_none(),
            "duplicate parameter {name}"
        );
        self.entries.push((name.to_string(), tensor));
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> &Tensor {
        let i = self
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        &self.entries[i].1
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        &mut self.entries[i].1
    }

    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Shape manifest used to validate checkpoints.
    pub fn shapes(&self) -> Vec<(String, usize, usize)> {
        self.entries
            .iter()
            .map(|(n, t)| (n.clone(), t.rows, t.cols))
            .collect()
    }

    pub fn check_shapes_match(&self, other: &ParamSet) -> Result<()> {
        if self.shapes() != other.shapes() {
            return Err(Error::CheckpointMismatch(
                "parameter shape manifest differs".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Parameter leaves bound into a tape, aligned with `ParamSet::entries`.
pub struct Binding {
    pub vars: Vec<Var>,
}

impl Binding {
    pub fn bind(tape: &mut Tape, params: &ParamSet) -> Self {
        let vars = params
            .entries
            .iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect();
        Self { vars }
    }

    pub fn var(&self, params: &ParamSet, name: &str) -> Var {
        let i = params
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }
}

/// Per-entry gradient accumulator aligned with a `ParamSet`.
#[derive(Debug, Clone)]
pub struct GradStore {
    pub grads: Vec<Vec<f64>>,
}

impl GradStore {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            grads: params
                .entries
                .iter()
                .map(|(_, t)| vec![0.0; t.len()])
                .collect(),
        }
    }

    /// Accumulates the tape gradients of every bound parameter leaf.
    pub fn accumulate(&mut self, tape: &Tape, binding: &Binding, scale: f64) {
        for (g, &var) in self.grads.iter_mut().zip(&binding.vars) {
            if let Some(src) = tape.grad_opt(var) {
                for (dst, s) in g.iter_mut().zip(src) {
                    *dst += scale * s;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Zeroes gradients of the named entry (used for frozen tensors).
    pub fn zero_entry(&mut self, params: &ParamSet, name: &str) {
        if let Some(i) = params.index_of(name) {
            for v in self.grads[i].iter_mut() {
                *v = 0.0;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Adam with optional global-norm clipping. Moments are serializable so a
/// resumed run continues bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamSet, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            m: params
                .entries
                .iter()
                .map(|(_, t)| vec![0.0; t.len()])
                .collect(),
            v: params
                .entries
                .iter()
                .map(|(_, t)| vec![0.0; t.len()])
                .collect(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &GradStore) {
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for ((entry, g), (m, v)) in params
            .entries
            .iter_mut()
            .zip(&grads.grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..entry.1.data.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                entry.1.data[k] -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Standard normal draw via Box-Muller; depends only on the RNG stream.
pub fn standard_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn init_linear<R: rand::Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor {
        rows: fan_in,
        cols: fan_out,
        data,
    }
}

/// Central finite-difference gradient of `f` w.r.t. every parameter entry.
/// O(2 * total parameters) evaluations; test use only.
pub fn finite_difference_grads<F>(params: &ParamSet, eps: f64, mut f: F) -> GradStore
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut work = params.clone();
    let mut out = GradStore::zeros_like(params);
    for e in 0..params.entries.len() {
        for k in 0..params.entries[e].1.data.len() {
            let orig = work.entries[e].1.data[k];
            work.entries[e].1.data[k] = orig + eps;
            let up = f(&work);
            work.entries[e].1.data[k] = orig - eps;
            let down = f(&work);
            work.entries[e].1.data[k] = orig;
            out.grads[e][k] = (up - down) / (2.0 * eps);
        }
    }
    out
}

/// Maximum relative error between analytic and finite-difference gradients,
/// with an absolute floor so near-zero pairs compare absolutely.
pub fn max_relative_grad_error(analytic: &GradStore, numeric: &GradStore) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.grads.iter().zip(&numeric.grads) {
        for (&x, &y) in a.iter().zip(n) {
            let denom = x.abs().max(y.abs()).max(1e-4);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}
