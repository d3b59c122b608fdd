//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] records operations for one forward pass. Parameters are read
//! from a borrowed [`ParamStore`] and their gradients are accumulated into a
//! separate [`Gradients`] buffer by [`Graph::backward`].

use super::ops::{softmax_in_place, LOG_CLAMP};
use super::{Gradients, Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Gather(ParamId, Vec<usize>),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Matrix),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Transpose(Var),
    ConcatCols(Var, Var),
    StackRows(Vec<Var>),
    SliceCols(Var, usize),
    Row(Var, usize),
    SoftmaxRows(Var),
    SumCols(Var),
    Sum(Var),
    CrossEntropy(Var, Vec<usize>, Matrix),
    AttentionCe(Var, Matrix),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::Gather(..) => "gather",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MulConst(..) => "mul_const",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Transpose(_) => "transpose",
            Op::ConcatCols(..) => "concat_cols",
            Op::StackRows(_) => "stack_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::Row(..) => "row",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::SumCols(_) => "sum_cols",
            Op::Sum(_) => "sum",
            Op::CrossEntropy(..) => "cross_entropy",
            Op::AttentionCe(..) => "attention_ce",
        }
    }
}

struct Node {
    /// `None` for parameters, whose value lives in the store.
    value: Option<Matrix>,
    op: Op,
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    non_finite: Option<&'static str>,
}

fn shape_check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Shape(what()))
    }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(256),
            non_finite: None,
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some(op.name());
        }
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Value of a 1×1 node; fails if any operation produced NaN or infinity.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.check_finite()?;
        let m = self.value(v);
        shape_check(m.shape() == (1, 1), || format!("expected scalar, got {:?}", m.shape()))?;
        Ok(m.get(0, 0))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.non_finite {
            Some(op) => Err(Error::NonFinite(op.to_string())),
            None => Ok(()),
        }
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    /// Rows of a parameter table, e.g. an embedding lookup.
    pub fn gather(&mut self, id: ParamId, rows: &[usize]) -> Result<Var> {
        let table = self.store.value(id);
        let mut out = Matrix::zeros(rows.len(), table.cols());
        for (i, &r) in rows.iter().enumerate() {
            shape_check(r < table.rows(), || {
                format!("gather row {r} out of {} rows", table.rows())
            })?;
            out.row_mut(i).copy_from_slice(table.row(r));
        }
        Ok(self.push(out, Op::Gather(id, rows.to_vec())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        shape_check(va.cols() == vb.rows(), || {
            format!("matmul {:?} x {:?}", va.shape(), vb.shape())
        })?;
        let out = va.matmul(vb);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        shape_check(sa == sb, || format!("{what} {sa:?} vs {sb:?}"))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Elementwise product with a constant mask (dropout, indicators).
    pub fn mul_const(&mut self, a: Var, mask: Matrix) -> Result<Var> {
        let sa = self.shape(a);
        shape_check(sa == mask.shape(), || format!("mul_const {sa:?} vs {:?}", mask.shape()))?;
        let out = self.value(a).zip_map(&mask, |x, m| x * m);
        Ok(self.push(out, Op::MulConst(a, mask)))
    }

    /// Adds a 1×m row to every row of an n×m matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        shape_check(sr.0 == 1 && sr.1 == sa.1, || format!("add_row {sa:?} + {sr:?}"))?;
        let mut out = self.value(a).clone();
        let r = self.value(row).row(0).to_vec();
        for i in 0..sa.0 {
            for (o, b) in out.row_mut(i).iter_mut().zip(&r) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// Multiplies every row of an n×m matrix by a 1×m row, elementwise.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        shape_check(sr.0 == 1 && sr.1 == sa.1, || format!("mul_row {sa:?} * {sr:?}"))?;
        let mut out = self.value(a).clone();
        let r = self.value(row).row(0).to_vec();
        for i in 0..sa.0 {
            for (o, b) in out.row_mut(i).iter_mut().zip(&r) {
                *o *= b;
            }
        }
        Ok(self.push(out, Op::MulRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        shape_check(va.rows() == vb.rows(), || {
            format!("concat_cols {:?} | {:?}", va.shape(), vb.shape())
        })?;
        let mut out = Matrix::zeros(va.rows(), va.cols() + vb.cols());
        for i in 0..va.rows() {
            let row = out.row_mut(i);
            row[..va.cols()].copy_from_slice(va.row(i));
            row[va.cols()..].copy_from_slice(vb.row(i));
        }
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |&v| self.shape(v).1);
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            shape_check(m.cols() == cols, || format!("stack_rows width {} vs {cols}", m.cols()))?;
            data.extend_from_slice(m.data());
            rows += m.rows();
        }
        Ok(self.push(Matrix::from_vec(rows, cols, data), Op::StackRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let va = self.value(a);
        shape_check(start + len <= va.cols(), || {
            format!("slice_cols {start}+{len} of {}", va.cols())
        })?;
        let mut out = Matrix::zeros(va.rows(), len);
        for i in 0..va.rows() {
            out.row_mut(i).copy_from_slice(&va.row(i)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        let va = self.value(a);
        shape_check(r < va.rows(), || format!("row {r} of {}", va.rows()))?;
        let out = Matrix::row_vector(va.row(r));
        Ok(self.push(out, Op::Row(a, r)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for i in 0..out.rows() {
            softmax_in_place(out.row_mut(i));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Row sums as an n×1 column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = (0..va.rows()).map(|i| va.row(i).iter().sum()).collect();
        let out = Matrix::from_vec(va.rows(), 1, data);
        self.push(out, Op::SumCols(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::from_vec(1, 1, vec![self.value(a).sum()]);
        self.push(out, Op::Sum(a))
    }

    /// Summed negative log-likelihood of `gold[r]` under `softmax(logits[r])`.
    pub fn cross_entropy(&mut self, logits: Var, gold: &[usize]) -> Result<Var> {
        let v = self.value(logits);
        shape_check(v.rows() == gold.len(), || {
            format!("cross_entropy {} rows vs {} labels", v.rows(), gold.len())
        })?;
        let mut probs = v.clone();
        let mut loss = 0.0;
        for (i, &g) in gold.iter().enumerate() {
            shape_check(g < probs.cols(), || format!("label {g} out of {}", probs.cols()))?;
            let row = probs.row_mut(i);
            softmax_in_place(row);
            loss -= row[g].max(LOG_CLAMP).ln();
        }
        let out = Matrix::from_vec(1, 1, vec![loss]);
        Ok(self.push(out, Op::CrossEntropy(logits, gold.to_vec(), probs)))
    }

    /// `-Σ t log α` with the log clamped at 1e-12.
    pub fn attention_ce(&mut self, alpha: Var, target: Matrix) -> Result<Var> {
        let a = self.value(alpha);
        shape_check(a.shape() == target.shape(), || {
            format!("attention_ce {:?} vs {:?}", a.shape(), target.shape())
        })?;
        let loss = -a
            .data()
            .iter()
            .zip(target.data())
            .filter(|(_, &t)| t != 0.0)
            .map(|(&p, &t)| t * p.max(LOG_CLAMP).ln())
            .sum::<f64>();
        let out = Matrix::from_vec(1, 1, vec![loss]);
        Ok(self.push(out, Op::AttentionCe(alpha, target)))
    }

    /// Back-propagates from a scalar node, accumulating parameter gradients.
    pub fn backward(&self, loss: Var, grads: &mut Gradients) -> Result<()> {
        self.check_finite()?;
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        fn acc(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut adj[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.get_mut(*id).add_assign(&g),
                Op::Gather(id, rows) => {
                    let target = grads.get_mut(*id);
                    for (i, &r) in rows.iter().enumerate() {
                        for (t, v) in target.row_mut(r).iter_mut().zip(g.row(i)) {
                            *t += v;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.clone());
                    acc(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *b, g.map(|x| -x));
                    acc(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::MulConst(a, mask) => acc(&mut adj, *a, g.zip_map(mask, |x, m| x * m)),
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, v) in gr.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    acc(&mut adj, *row, gr);
                    acc(&mut adj, *a, g);
                }
                Op::MulRow(a, row) => {
                    let va = self.value(*a);
                    let r = self.value(*row).row(0);
                    let mut ga = g.clone();
                    let mut gr = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            ga.set(i, j, g.get(i, j) * r[j]);
                            gr.row_mut(0)[j] += g.get(i, j) * va.get(i, j);
                        }
                    }
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *row, gr);
                }
                Op::Scale(a, s) => acc(&mut adj, *a, g.map(|x| x * s)),
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("value");
                    acc(&mut adj, *a, g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv)));
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().expect("value");
                    acc(&mut adj, *a, g.zip_map(y, |gv, yv| gv * (1.0 - yv * yv)));
                }
                Op::Transpose(a) => acc(&mut adj, *a, g.transpose()),
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(*a).1;
                    let cb = self.shape(*b).1;
                    let mut ga = Matrix::zeros(g.rows(), ca);
                    let mut gb = Matrix::zeros(g.rows(), cb);
                    for i in 0..g.rows() {
                        ga.row_mut(i).copy_from_slice(&g.row(i)[..ca]);
                        gb.row_mut(i).copy_from_slice(&g.row(i)[ca..]);
                    }
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::StackRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let rows = self.shape(*p).0;
                        let cols = g.cols();
                        let part = Matrix::from_vec(
                            rows,
                            cols,
                            g.data()[start * cols..(start + rows) * cols].to_vec(),
                        );
                        acc(&mut adj, *p, part);
                        start += rows;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for i in 0..rows {
                        ga.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::Row(a, r) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    ga.row_mut(*r).copy_from_slice(g.row(0));
                    acc(&mut adj, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.as_ref().expect("value");
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (o, (yv, gv)) in ga.row_mut(i).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = yv * (gv - inner);
                        }
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::SumCols(a) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for i in 0..rows {
                        ga.row_mut(i).fill(g.get(i, 0));
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.shape(*a);
                    acc(&mut adj, *a, Matrix::filled(rows, cols, g.get(0, 0)));
                }
                Op::CrossEntropy(logits, gold, probs) => {
                    let scale = g.get(0, 0);
                    let mut ga = probs.clone();
                    for (i, &k) in gold.iter().enumerate() {
                        ga.row_mut(i)[k] -= 1.0;
                    }
                    ga.scale_in_place(scale);
                    acc(&mut adj, *logits, ga);
                }
                Op::AttentionCe(alpha, target) => {
                    let scale = g.get(0, 0);
                    let a = self.value(*alpha);
                    let ga = a.zip_map(target, |p, t| {
                        if t == 0.0 || p < LOG_CLAMP {
                            0.0
                        } else {
                            -scale * t / p
                        }
                    });
                    acc(&mut adj, *alpha, ga);
                }
            }
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("backward".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_values_trip_an_error() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.constant(Matrix::row_vector(&[f64::NAN]));
        let s = g.sum(a);
        assert!(matches!(g.scalar(s), Err(Error::NonFinite(_))));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.constant(Matrix::zeros(2, 3));
        let b = g.constant(Matrix::zeros(2, 3));
        assert!(matches!(g.matmul(a, b), Err(Error::Shape(_))));
        let c = g.constant(Matrix::zeros(3, 2));
        assert!(g.add(a, c).is_err());
    }
}
