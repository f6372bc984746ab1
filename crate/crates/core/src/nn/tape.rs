//! Reverse-mode differentiation over a fixed set of matrix primitives.
//!
//! A [`Tape`] records every value produced during a forward pass together
//! with the operation that produced it. [`Tape::backward`] walks the record
//! in reverse, pushing gradients to operands. Parameters enter through
//! [`Tape::param`] and receive their gradients via
//! [`Gradients::accumulate_into`].

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Fixed-coefficient sparse aggregation: `out[dst] += coef * x[src]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagation {
    pub num_nodes: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub coef: Vec<f64>,
}

/// Attention neighbourhoods in CSR form: the sources attended by target `i`
/// are `sources[offsets[i]..offsets[i + 1]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhoods {
    pub offsets: Vec<usize>,
    pub sources: Vec<usize>,
}

impl Neighborhoods {
    pub fn num_nodes(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.sources[self.offsets[i]..self.offsets[i + 1]]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Sum,
    #[default]
    Mean,
    Max,
}

enum Op {
    Input,
    Param(String),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Propagate(Var, Arc<Propagation>),
    Attention {
        h: Var,
        att: Var,
        nbrs: Arc<Neighborhoods>,
        slope: f64,
        /// Pre-activation logits and normalized coefficients, CSR-aligned.
        logits: Vec<f64>,
        alpha: Vec<f64>,
    },
    Pool {
        x: Var,
        segments: Arc<Vec<Range<usize>>>,
        mode: Pooling,
        argmax: Vec<usize>,
    },
    Concat(Var, Var),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; gradients flow to it but are not stored anywhere.
    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let value = store.value(name)?.clone();
        Ok(self.push(value, Op::Param(name.to_string())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        check_finite(&out, "matmul")?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `x + bias`, with a `1 x cols` bias broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let b = self.value(bias);
        let xv = self.value(x);
        if b.rows() != 1 || b.cols() != xv.cols() {
            return Err(Error::dim("bias width", xv.cols(), b.cols()));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, bb) in out.row_mut(r).iter_mut().zip(b.data()) {
                *o += bb;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu(x, slope))
    }

    pub fn propagate(&mut self, x: Var, prop: Arc<Propagation>) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != prop.num_nodes {
            return Err(Error::dim("propagate node count", prop.num_nodes, xv.rows()));
        }
        let mut out = Matrix::zeros(xv.rows(), xv.cols());
        for ((&s, &d), &c) in prop.src.iter().zip(&prop.dst).zip(&prop.coef) {
            let src = xv.row(s);
            for (o, v) in out.row_mut(d).iter_mut().zip(src) {
                *o += c * v;
            }
        }
        Ok(self.push(out, Op::Propagate(x, prop)))
    }

    /// Single-head attention aggregation. For target `i` and each source `j`
    /// in its neighbourhood, `e_ij = LeakyReLU(a_dst . h_i + a_src . h_j)`,
    /// `alpha_ij = softmax_j(e_ij)`, and `out_i = sum_j alpha_ij h_j`, where
    /// `att = [a_dst | a_src]` is `1 x 2d`.
    pub fn attention(
        &mut self,
        h: Var,
        att: Var,
        nbrs: Arc<Neighborhoods>,
        slope: f64,
    ) -> Result<Var> {
        let hv = self.value(h);
        let a = self.value(att);
        let (n, d) = hv.shape();
        if a.rows() != 1 || a.cols() != 2 * d {
            return Err(Error::dim("attention vector width", 2 * d, a.cols()));
        }
        if nbrs.num_nodes() != n {
            return Err(Error::dim("attention node count", nbrs.num_nodes(), n));
        }
        let (a_dst, a_src) = a.data().split_at(d);
        let dot = |row: &[f64], w: &[f64]| row.iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
        let s_dst: Vec<f64> = (0..n).map(|i| dot(hv.row(i), a_dst)).collect();
        let s_src: Vec<f64> = (0..n).map(|i| dot(hv.row(i), a_src)).collect();

        let mut logits = vec![0.0; nbrs.sources.len()];
        let mut alpha = vec![0.0; nbrs.sources.len()];
        let mut out = Matrix::zeros(n, d);
        for i in 0..n {
            let range = nbrs.offsets[i]..nbrs.offsets[i + 1];
            let mut max = f64::NEG_INFINITY;
            for k in range.clone() {
                let z = s_dst[i] + s_src[nbrs.sources[k]];
                logits[k] = z;
                let e = if z > 0.0 { z } else { slope * z };
                alpha[k] = e;
                max = max.max(e);
            }
            let mut total = 0.0;
            for k in range.clone() {
                alpha[k] = (alpha[k] - max).exp();
                total += alpha[k];
            }
            for k in range {
                alpha[k] /= total;
                let src = hv.row(nbrs.sources[k]);
                for (o, v) in out.row_mut(i).iter_mut().zip(src) {
                    *o += alpha[k] * v;
                }
            }
        }
        check_finite(&out, "attention")?;
        Ok(self.push(
            out,
            Op::Attention {
                h,
                att,
                nbrs,
                slope,
                logits,
                alpha,
            },
        ))
    }

    /// Attention coefficients of an attention node, CSR-aligned with its
    /// neighbourhoods.
    pub fn attention_coefficients(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Pools each row segment into one output row.
    pub fn pool(&mut self, x: Var, segments: Arc<Vec<Range<usize>>>, mode: Pooling) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut out = Matrix::zeros(segments.len(), cols);
        let mut argmax = Vec::new();
        for (g, seg) in segments.iter().enumerate() {
            if seg.is_empty() {
                return Err(Error::Empty(format!("pooling segment {g} has no rows")));
            }
            if seg.end > xv.rows() {
                return Err(Error::dim("pooling segment end", xv.rows(), seg.end));
            }
            match mode {
                Pooling::Sum | Pooling::Mean => {
                    let o = out.row_mut(g);
                    for r in seg.clone() {
                        for (acc, v) in o.iter_mut().zip(xv.row(r)) {
                            *acc += v;
                        }
                    }
                    if mode == Pooling::Mean {
                        let inv = 1.0 / seg.len() as f64;
                        o.iter_mut().for_each(|v| *v *= inv);
                    }
                }
                Pooling::Max => {
                    for c in 0..cols {
                        let mut best = seg.start;
                        for r in seg.clone() {
                            if xv.get(r, c) > xv.get(best, c) {
                                best = r;
                            }
                        }
                        out.set(g, c, xv.get(best, c));
                        argmax.push(best);
                    }
                }
            }
        }
        Ok(self.push(
            out,
            Op::Pool {
                x,
                segments,
                mode,
                argmax,
            },
        ))
    }

    /// `x W + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).hcat(self.value(b))?;
        Ok(self.push(out, Op::Concat(a, b)))
    }

    /// Back-propagates `seed` (the gradient of the loss w.r.t. `output`).
    pub fn backward(&self, output: Var, seed: Matrix) -> Result<Gradients> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::Invalid(format!(
                "seed gradient shape {:?} vs output {:?}",
                seed.shape(),
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate(&mut grads, *a, g.gemm(false, bv, true)?)?;
                    accumulate(&mut grads, *b, av.gemm(true, &g, false)?)?;
                }
                Op::AddRow(x, bias) => {
                    accumulate(&mut grads, *bias, g.column_sums())?;
                    accumulate(&mut grads, *x, g.clone())?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.clone())?;
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let mut dx = g.clone();
                    for (d, v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        if *v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::LeakyRelu(x, slope) => {
                    let xv = self.value(*x);
                    let mut dx = g.clone();
                    for (d, v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        if *v <= 0.0 {
                            *d *= slope;
                        }
                    }
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::Propagate(x, prop) => {
                    let mut dx = Matrix::zeros(g.rows(), g.cols());
                    for ((&s, &d), &c) in prop.src.iter().zip(&prop.dst).zip(&prop.coef) {
                        let gd = g.row(d);
                        for (o, v) in dx.row_mut(s).iter_mut().zip(gd) {
                            *o += c * v;
                        }
                    }
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::Attention {
                    h,
                    att,
                    nbrs,
                    slope,
                    logits,
                    alpha,
                } => {
                    let (dh, da) = attention_backward(
                        self.value(*h),
                        self.value(*att),
                        nbrs,
                        *slope,
                        logits,
                        alpha,
                        &g,
                    );
                    accumulate(&mut grads, *h, dh)?;
                    accumulate(&mut grads, *att, da)?;
                }
                Op::Pool {
                    x,
                    segments,
                    mode,
                    argmax,
                } => {
                    let xv = self.value(*x);
                    let cols = xv.cols();
                    let mut dx = Matrix::zeros(xv.rows(), cols);
                    for (gi, seg) in segments.iter().enumerate() {
                        match mode {
                            Pooling::Sum | Pooling::Mean => {
                                let scale = if *mode == Pooling::Mean {
                                    1.0 / seg.len() as f64
                                } else {
                                    1.0
                                };
                                for r in seg.clone() {
                                    for (o, v) in dx.row_mut(r).iter_mut().zip(g.row(gi)) {
                                        *o += scale * v;
                                    }
                                }
                            }
                            Pooling::Max => {
                                for c in 0..cols {
                                    let r = argmax[gi * cols + c];
                                    let cur = dx.get(r, c);
                                    dx.set(r, c, cur + g.get(gi, c));
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx)?;
                }
                Op::Concat(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let mut ga = Matrix::zeros(g.rows(), ca);
                    let mut gb = Matrix::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        let (left, right) = g.row(r).split_at(ca);
                        ga.row_mut(r).copy_from_slice(left);
                        gb.row_mut(r).copy_from_slice(right);
                    }
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn param_name(&self, v: usize) -> Option<&str> {
        match &self.nodes[v].op {
            Op::Param(name) => Some(name),
            _ => None,
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn attention_backward(
    h: &Matrix,
    att: &Matrix,
    nbrs: &Neighborhoods,
    slope: f64,
    logits: &[f64],
    alpha: &[f64],
    g: &Matrix,
) -> (Matrix, Matrix) {
    let (n, d) = h.shape();
    let (a_dst, a_src) = att.data().split_at(d);
    let mut dh = Matrix::zeros(n, d);
    let mut ds_dst = vec![0.0; n];
    let mut ds_src = vec![0.0; n];
    let mut dalpha = vec![0.0; alpha.len()];
    for i in 0..n {
        let range = nbrs.offsets[i]..nbrs.offsets[i + 1];
        let gi = g.row(i);
        let mut weighted = 0.0;
        for k in range.clone() {
            let j = nbrs.sources[k];
            dalpha[k] = gi.iter().zip(h.row(j)).map(|(x, y)| x * y).sum();
            weighted += alpha[k] * dalpha[k];
            for (o, v) in dh.row_mut(j).iter_mut().zip(gi) {
                *o += alpha[k] * v;
            }
        }
        for k in range {
            let de = alpha[k] * (dalpha[k] - weighted);
            let dz = if logits[k] > 0.0 { de } else { slope * de };
            ds_dst[i] += dz;
            ds_src[nbrs.sources[k]] += dz;
        }
    }
    let mut da = Matrix::zeros(1, 2 * d);
    for i in 0..n {
        let hi = h.row(i);
        for c in 0..d {
            dh.row_mut(i)[c] += ds_dst[i] * a_dst[c] + ds_src[i] * a_src[c];
            da.data_mut()[c] += ds_dst[i] * hi[c];
            da.data_mut()[d + c] += ds_src[i] * hi[c];
        }
    }
    (dh, da)
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds the gradient of every parameter node to the store.
    pub fn accumulate_into(&self, tape: &Tape, store: &mut ParamStore) -> Result<()> {
        for (i, g) in self.grads.iter().enumerate() {
            if let (Some(g), Some(name)) = (g, tape.param_name(i)) {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }
}
