//! Reverse-mode automatic differentiation over 2-D `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass in evaluation
//! order. [`Tape::backward`] walks the record in reverse, accumulating the
//! adjoint of each node and finally of each parameter leaf.

use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{s, Array2, Axis};

use crate::error::{JetError, Result};

pub type Mat = Array2<f64>;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    /// `a + 1ᵀ·row`, row of shape `1×c`.
    AddRow(Var, Var),
    Scale(Var, f64),
    /// Elementwise product with a constant matrix (dropout masks).
    MulConst(Var, Rc<Mat>),
    Relu(Var),
    /// Scale-only RMS normalization; `inv` holds each row's `1/rms`.
    RmsNorm { x: Var, weight: Var, inv: Vec<f64> },
    Gather { table: Var, ids: Rc<Vec<usize>> },
    /// Gathers column `head` of a `buckets×heads` table into a matrix using a
    /// row-major bucket index grid.
    GatherBias { table: Var, head: usize, buckets: Rc<Vec<usize>> },
    /// Row softmax restricted to allowed entries; rows with no allowed entry
    /// are all zero.
    MaskedSoftmax(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    /// Sum over rows of `-log softmax(row)[target]`; `None` rows are skipped.
    SoftmaxXent { logits: Var, targets: Rc<Vec<Option<usize>>> },
    /// Sum over rows of binary cross-entropy between `sigmoid(z)` and a soft
    /// target; `None` rows are skipped.
    SigmoidBce { logits: Var, targets: Rc<Vec<Option<f64>>> },
    Sum(Var),
}

struct Node {
    value: Mat,
    op: Op,
}

/// Gradients for every parameter tensor, keyed by parameter id.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Mat>,
}

impl Gradients {
    pub fn zeros_like(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Gradients {
            tensors: shapes.into_iter().map(Mat::zeros).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.mapv_inplace(|x| x * factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

pub struct Tape<'p> {
    params: &'p [Mat],
    nodes: Vec<Node>,
    param_vars: HashMap<usize, Var>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Mat]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Constant)
    }

    /// Leaf for parameter `id`; repeated requests share one node.
    pub fn param(&mut self, id: usize) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(self.params[id].clone(), Op::Param(id));
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        self.push(value, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        self.push(value, Op::Scale(a, factor))
    }

    pub fn mul_const(&mut self, a: Var, c: Mat) -> Var {
        let value = self.value(a) * &c;
        self.push(value, Op::MulConst(a, Rc::new(c)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn rms_norm(&mut self, x: Var, weight: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let cols = xv.ncols() as f64;
        let inv: Vec<f64> = xv
            .rows()
            .into_iter()
            .map(|r| 1.0 / (r.iter().map(|v| v * v).sum::<f64>() / cols + eps).sqrt())
            .collect();
        let mut value = xv.clone();
        for (mut r, &s) in value.rows_mut().into_iter().zip(&inv) {
            r *= s;
        }
        value *= self.value(weight);
        self.push(value, Op::RmsNorm { x, weight, inv })
    }

    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut value = Mat::zeros((ids.len(), t.ncols()));
        for (i, &id) in ids.iter().enumerate() {
            value.row_mut(i).assign(&t.row(id));
        }
        self.push(
            value,
            Op::Gather {
                table,
                ids: Rc::new(ids.to_vec()),
            },
        )
    }

    pub fn gather_bias(&mut self, table: Var, head: usize, buckets: Rc<Vec<usize>>, shape: (usize, usize)) -> Var {
        let t = self.value(table);
        let value = Mat::from_shape_fn(shape, |(i, j)| t[[buckets[i * shape.1 + j], head]]);
        self.push(value, Op::GatherBias { table, head, buckets })
    }

    pub fn masked_softmax(&mut self, x: Var, allowed: Rc<Vec<bool>>) -> Var {
        let xv = self.value(x);
        let cols = xv.ncols();
        let mut value = Mat::zeros(xv.raw_dim());
        for (i, row) in xv.rows().into_iter().enumerate() {
            let ok = &allowed[i * cols..(i + 1) * cols];
            let max = row
                .iter()
                .zip(ok)
                .filter(|(_, &a)| a)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for j in 0..cols {
                if ok[j] {
                    let e = (row[j] - max).exp();
                    value[[i, j]] = e;
                    total += e;
                }
            }
            value.row_mut(i).mapv_inplace(|v| v / total);
        }
        self.push(value, Op::MaskedSoftmax(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(value, Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn softmax_xent(&mut self, logits: Var, targets: Vec<Option<usize>>) -> Var {
        let lv = self.value(logits);
        let mut total = 0.0;
        for (row, t) in lv.rows().into_iter().zip(&targets) {
            if let Some(t) = *t {
                total -= log_softmax_at(row.as_slice().expect("contiguous"), t);
            }
        }
        self.push(
            Mat::from_elem((1, 1), total),
            Op::SoftmaxXent {
                logits,
                targets: Rc::new(targets),
            },
        )
    }

    pub fn sigmoid_bce(&mut self, logits: Var, targets: Vec<Option<f64>>) -> Var {
        let lv = self.value(logits);
        let mut total = 0.0;
        for (z, q) in lv.column(0).iter().zip(&targets) {
            if let Some(q) = *q {
                // softplus(z) - q·z = -(q·ln σ(z) + (1-q)·ln(1-σ(z)))
                total += softplus(*z) - q * z;
            }
        }
        self.push(
            Mat::from_elem((1, 1), total),
            Op::SigmoidBce {
                logits,
                targets: Rc::new(targets),
            },
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        self.push(Mat::from_elem((1, 1), total), Op::Sum(x))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    /// Reverse pass from the `1×1` node `output`, whose adjoint is `seed`.
    pub fn backward(&self, output: Var, seed: f64) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(JetError::NoForward);
        }
        let mut grads =
            Gradients::zeros_like(self.params.iter().map(|p| (p.nrows(), p.ncols())));
        let mut adj: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output.0] = Some(Mat::from_elem(self.nodes[output.0].value.raw_dim(), seed));

        fn acc(adj: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut adj[v.0] {
                Some(a) => *a += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.tensors[*id] += &g,
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    // y = a·bᵀ: dA = g·b, dB = gᵀ·a
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.clone());
                    acc(&mut adj, *b, g);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut adj, *a, g);
                    acc(&mut adj, *row, gr);
                }
                Op::Scale(a, f) => acc(&mut adj, *a, g * *f),
                Op::MulConst(a, c) => acc(&mut adj, *a, g * c.as_ref()),
                Op::Relu(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(self.value(*a), |gv, &x| {
                        if x <= 0.0 {
                            *gv = 0.0
                        }
                    });
                    acc(&mut adj, *a, ga);
                }
                Op::RmsNorm { x, weight, inv } => {
                    let xv = self.value(*x);
                    let w = self.value(*weight);
                    let cols = xv.ncols() as f64;
                    let mut gx = Mat::zeros(xv.raw_dim());
                    let mut gw = Mat::zeros(w.raw_dim());
                    for i in 0..xv.nrows() {
                        let r = inv[i];
                        let xr = xv.row(i);
                        let gr = g.row(i);
                        // y_j = w_j·x_j·r, r = (mean(x²)+eps)^(-1/2)
                        let mut dot = 0.0;
                        for j in 0..xr.len() {
                            gw[[0, j]] += gr[j] * xr[j] * r;
                            dot += gr[j] * w[[0, j]] * xr[j];
                        }
                        let coef = dot * r * r * r / cols;
                        for j in 0..xr.len() {
                            gx[[i, j]] = gr[j] * w[[0, j]] * r - coef * xr[j];
                        }
                    }
                    acc(&mut adj, *x, gx);
                    acc(&mut adj, *weight, gw);
                }
                Op::Gather { table, ids } => {
                    let mut gt = Mat::zeros(self.value(*table).raw_dim());
                    for (i, &id) in ids.iter().enumerate() {
                        let mut row = gt.row_mut(id);
                        row += &g.row(i);
                    }
                    acc(&mut adj, *table, gt);
                }
                Op::GatherBias { table, head, buckets } => {
                    let mut gt = Mat::zeros(self.value(*table).raw_dim());
                    for (k, gv) in g.iter().enumerate() {
                        gt[[buckets[k], *head]] += gv;
                    }
                    acc(&mut adj, *table, gt);
                }
                Op::MaskedSoftmax(x) => {
                    // dx = y ⊙ (g - Σ g⊙y); masked entries have y = 0
                    let y = &node.value;
                    let mut gx = Mat::zeros(y.raw_dim());
                    for i in 0..y.nrows() {
                        let dot: f64 = y.row(i).iter().zip(g.row(i)).map(|(a, b)| a * b).sum();
                        for j in 0..y.ncols() {
                            gx[[i, j]] = y[[i, j]] * (g[[i, j]] - dot);
                        }
                    }
                    acc(&mut adj, *x, gx);
                }
                Op::SliceCols { x, start } => {
                    let mut gx = Mat::zeros(self.value(*x).raw_dim());
                    gx.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut adj, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut adj, p, g.slice(s![.., offset..offset + w]).to_owned());
                        offset += w;
                    }
                }
                Op::SoftmaxXent { logits, targets } => {
                    let lv = self.value(*logits);
                    let scale = g[[0, 0]];
                    let mut gl = Mat::zeros(lv.raw_dim());
                    for (i, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let row = lv.row(i);
                        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
                        for j in 0..row.len() {
                            let p = (row[j] - max).exp() / total;
                            gl[[i, j]] = scale * (p - if j == t { 1.0 } else { 0.0 });
                        }
                    }
                    acc(&mut adj, *logits, gl);
                }
                Op::SigmoidBce { logits, targets } => {
                    let lv = self.value(*logits);
                    let scale = g[[0, 0]];
                    let mut gl = Mat::zeros(lv.raw_dim());
                    for (i, q) in targets.iter().enumerate() {
                        if let Some(q) = *q {
                            gl[[i, 0]] = scale * (sigmoid(lv[[i, 0]]) - q);
                        }
                    }
                    acc(&mut adj, *logits, gl);
                }
                Op::Sum(x) => {
                    let gx = Mat::from_elem(self.value(*x).raw_dim(), g[[0, 0]]);
                    acc(&mut adj, *x, gx);
                }
            }
        }
        Ok(grads)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn log_softmax_at(row: &[f64], target: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    row[target] - lse
}

pub fn softmax_rows(m: &Mat) -> Mat {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}
