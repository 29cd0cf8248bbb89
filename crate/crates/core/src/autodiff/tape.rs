//! Tape-based reverse-mode differentiation over rank-2 tensors.
//!
//! Every forward op appends a node holding its value and the handles of its
//! inputs. [`Tape::backward`] walks the nodes in reverse creation order, which
//! is a valid reverse topological order because inputs always precede their
//! consumers.

use std::collections::BTreeMap;

use super::tensor::{exact_sum, matmul, matmul_exact, matmul_nt, matmul_tn};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Aggregate(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    Square(Var),
    RowSoftmax(Var),
    RowLogSoftmax(Var),
    Transpose(Var),
    Concat(Var, Var, Axis),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation so it can be differentiated.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: BTreeMap<ParamId, Var>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if it was reached.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    sigmoid(x)
}

/// Numerically stable `ln(1 + e^x)`.
pub fn log1p_exp(x: f64) -> f64 {
    softplus(x)
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn row_softmax(x: &Tensor) -> Tensor {
    let (r, c) = (x.rows(), x.cols());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = x.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let denom = exact_sum(exps.iter().copied());
        out.extend(exps.iter().map(|e| e / denom));
    }
    Tensor::matrix(r, c, out).expect("softmax shape")
}

fn row_log_softmax(x: &Tensor) -> Tensor {
    let (r, c) = (x.rows(), x.cols());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = x.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + exact_sum(row.iter().map(|v| (v - max).exp())).ln();
        out.extend(row.iter().map(|v| v - lse));
    }
    Tensor::matrix(r, c, out).expect("log-softmax shape")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Which side of zero every ReLU input sits on, in recording order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(a) = n.op {
                out.extend(self.value(a).data().iter().map(|&x| x > 0.0));
            }
        }
        out
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, var: Var) -> Result<()> {
        if var.0 >= self.nodes.len() {
            return Err(Error::State(format!(
                "variable {} is not on this tape",
                var.0
            )));
        }
        Ok(())
    }

    /// Records an input tensor. Gradients reach it but are not stored anywhere
    /// except the returned [`Gradients`].
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        if !value.is_matrix() {
            return Err(Error::shape("leaf", "tape values must be rank 2"));
        }
        Ok(self.push(value, Op::Leaf))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value)
    }

    /// Binds a parameter. Repeated calls for the same id return the same node
    /// so every use accumulates into one gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).value.clone(), Op::Param);
        self.bound.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} · {:?}", av.shape(), bv.shape()),
            ));
        }
        let out = matmul(av, bv);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `weights · features`, summing over neighbours with an order-independent
    /// correctly rounded sum. Same gradient as [`Tape::matmul`].
    pub fn aggregate(&mut self, weights: Var, features: Var) -> Result<Var> {
        self.check(weights)?;
        self.check(features)?;
        let (w, f) = (self.value(weights), self.value(features));
        if w.cols() != f.rows() {
            return Err(Error::shape(
                "aggregate",
                format!("{:?} · {:?}", w.shape(), f.shape()),
            ));
        }
        let out = matmul_exact(w, f);
        Ok(self.push(out, Op::Aggregate(weights, features)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        same_shape("add", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds the `1 × n` row vector `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.check(x)?;
        self.check(bias)?;
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + row {:?}", xv.shape(), bv.shape()),
            ));
        }
        let c = xv.cols();
        let mut out = xv.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            *v += bv.data()[k % c];
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        same_shape("sub", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        same_shape("mul", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Element-wise product with a constant tensor (a mask or weighting).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let cv = self.constant(c)?;
        self.mul(a, cv)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| x * factor);
        Ok(self.push(out, Op::Scale(a, factor)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| x.max(0.0));
        Ok(self.push(out, Op::Relu(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(sigmoid);
        Ok(self.push(out, Op::Sigmoid(a)))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(f64::tanh);
        Ok(self.push(out, Op::Tanh(a)))
    }

    /// `ln(1 + e^x)`, element-wise and overflow-safe.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(softplus);
        Ok(self.push(out, Op::Softplus(a)))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| x * x);
        Ok(self.push(out, Op::Square(a)))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        if self.value(a).cols() == 0 {
            return Err(Error::shape("row_softmax", "rows must be non-empty"));
        }
        let out = row_softmax(self.value(a));
        Ok(self.push(out, Op::RowSoftmax(a)))
    }

    pub fn row_log_softmax(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        if self.value(a).cols() == 0 {
            return Err(Error::shape("row_log_softmax", "rows must be non-empty"));
        }
        let out = row_log_softmax(self.value(a));
        Ok(self.push(out, Op::RowLogSoftmax(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).transpose();
        Ok(self.push(out, Op::Transpose(a)))
    }

    /// Stacks `a` above `b` ([`Axis::Rows`]) or `a` left of `b` ([`Axis::Cols`]).
    pub fn concat(&mut self, a: Var, b: Var, axis: Axis) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let out = match axis {
            Axis::Rows => {
                if av.cols() != bv.cols() {
                    return Err(Error::shape(
                        "concat",
                        format!("row concat of {:?} and {:?}", av.shape(), bv.shape()),
                    ));
                }
                let mut data = av.data().to_vec();
                data.extend_from_slice(bv.data());
                Tensor::matrix(av.rows() + bv.rows(), av.cols(), data)?
            }
            Axis::Cols => {
                if av.rows() != bv.rows() {
                    return Err(Error::shape(
                        "concat",
                        format!("column concat of {:?} and {:?}", av.shape(), bv.shape()),
                    ));
                }
                let mut data = Vec::with_capacity(av.len() + bv.len());
                for r in 0..av.rows() {
                    data.extend_from_slice(av.row(r));
                    data.extend_from_slice(bv.row(r));
                }
                Tensor::matrix(av.rows(), av.cols() + bv.cols(), data)?
            }
        };
        Ok(self.push(out, Op::Concat(a, b, axis)))
    }

    /// Columns `start .. start + len` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.check(a)?;
        let av = self.value(a);
        if start + len > av.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{} of {:?}", start + len, av.shape()),
            ));
        }
        let mut data = Vec::with_capacity(av.rows() * len);
        for r in 0..av.rows() {
            data.extend_from_slice(&av.row(r)[start..start + len]);
        }
        let out = Tensor::matrix(av.rows(), len, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    /// Rows of `a` at `indices`, in order; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        self.check(a)?;
        let av = self.value(a);
        let mut data = Vec::with_capacity(indices.len() * av.cols());
        for &i in indices {
            if i >= av.rows() {
                return Err(Error::shape(
                    "gather_rows",
                    format!("row {i} of {:?}", av.shape()),
                ));
            }
            data.extend_from_slice(av.row(i));
        }
        let out = Tensor::matrix(indices.len(), av.cols(), data)?;
        Ok(self.push(out, Op::GatherRows(a, indices.to_vec())))
    }

    /// Row-major reinterpretation as `rows × cols`.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        self.check(a)?;
        let av = self.value(a);
        if rows * cols != av.len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} into {rows}×{cols}", av.shape()),
            ));
        }
        let out = av.clone().reshaped(rows, cols);
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Sum of all entries as a `1 × 1` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = Tensor::scalar(self.value(a).sum());
        Ok(self.push(out, Op::Sum(a)))
    }

    /// `x · w + b` with `b` broadcast across rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward op".into()));
        }
        self.check(loss)?;
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::State(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) | Op::Aggregate(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, matmul_nt(&g, bv));
                    acc(&mut grads, *b, matmul_tn(av, &g));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddRow(x, bias) => {
                    let c = g.cols();
                    let mut gb = vec![0.0; c];
                    for (k, v) in g.data().iter().enumerate() {
                        gb[k % c] += v;
                    }
                    acc(&mut grads, *x, g.clone());
                    acc(&mut grads, *bias, Tensor::row_vector(&gb));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.zip_map(bv, |gv, x| gv * x));
                    acc(&mut grads, *b, g.zip_map(av, |gv, x| gv * x));
                }
                Op::Scale(a, f) => acc(&mut grads, *a, g.map(|v| v * f)),
                Op::Relu(a) => {
                    let av = self.value(*a);
                    acc(
                        &mut grads,
                        *a,
                        g.zip_map(av, |gv, x| if x > 0.0 { gv } else { 0.0 }),
                    );
                }
                Op::Sigmoid(a) => acc(&mut grads, *a, g.zip_map(y, |gv, s| gv * s * (1.0 - s))),
                Op::Tanh(a) => acc(&mut grads, *a, g.zip_map(y, |gv, t| gv * (1.0 - t * t))),
                Op::Softplus(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, g.zip_map(av, |gv, x| gv * sigmoid(x)));
                }
                Op::Square(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, g.zip_map(av, |gv, x| 2.0 * gv * x));
                }
                Op::RowSoftmax(a) => {
                    let (r, c) = (y.rows(), y.cols());
                    let mut out = vec![0.0; r * c];
                    for i in 0..r {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..c {
                            out[i * c + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    acc(&mut grads, *a, Tensor::matrix(r, c, out)?);
                }
                Op::RowLogSoftmax(a) => {
                    let (r, c) = (y.rows(), y.cols());
                    let mut out = vec![0.0; r * c];
                    for i in 0..r {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let gsum: f64 = gr.iter().sum();
                        for j in 0..c {
                            out[i * c + j] = gr[j] - yr[j].exp() * gsum;
                        }
                    }
                    acc(&mut grads, *a, Tensor::matrix(r, c, out)?);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::Concat(a, b, axis) => {
                    let (ar, ac) = (self.value(*a).rows(), self.value(*a).cols());
                    let (br, bc) = (self.value(*b).rows(), self.value(*b).cols());
                    match axis {
                        Axis::Rows => {
                            let split = ar * ac;
                            acc(
                                &mut grads,
                                *a,
                                Tensor::matrix(ar, ac, g.data()[..split].to_vec())?,
                            );
                            acc(
                                &mut grads,
                                *b,
                                Tensor::matrix(br, bc, g.data()[split..].to_vec())?,
                            );
                        }
                        Axis::Cols => {
                            let mut ga = Vec::with_capacity(ar * ac);
                            let mut gb = Vec::with_capacity(br * bc);
                            for r in 0..ar {
                                let row = g.row(r);
                                ga.extend_from_slice(&row[..ac]);
                                gb.extend_from_slice(&row[ac..]);
                            }
                            acc(&mut grads, *a, Tensor::matrix(ar, ac, ga)?);
                            acc(&mut grads, *b, Tensor::matrix(br, bc, gb)?);
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    let av = self.value(*a);
                    let mut out = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        for (k, v) in g.row(r).iter().enumerate() {
                            out.set(r, start + k, *v);
                        }
                    }
                    acc(&mut grads, *a, out);
                }
                Op::GatherRows(a, indices) => {
                    let av = self.value(*a);
                    let c = av.cols();
                    let mut out = Tensor::zeros(av.rows(), c);
                    for (k, &i) in indices.iter().enumerate() {
                        let src = g.row(k);
                        let dst = &mut out.data_mut()[i * c..(i + 1) * c];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    acc(&mut grads, *a, out);
                }
                Op::Reshape(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, g.clone().reshaped(av.rows(), av.cols()));
                }
                Op::Sum(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, Tensor::filled(av.rows(), av.cols(), g.item()?));
                }
            }
            if matches!(node.op, Op::Leaf | Op::Param) {
                grads[idx] = Some(g);
            }
        }

        Ok(Gradients { grads })
    }

    /// Adds the gradient of every bound parameter into `store`.
    pub fn accumulate(&self, grads: &Gradients, store: &mut ParamStore) {
        for (&id, &var) in &self.bound {
            if let Some(g) = grads.wrt(var) {
                store.get_mut(id).grad.add_assign(g);
            }
        }
    }

    /// [`Tape::backward`] followed by [`Tape::accumulate`].
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        self.accumulate(&grads, store);
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0)).unwrap();
        let sq = tape.square(x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0)).unwrap();
        let s = tape.sigmoid(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.25]);
    }

    #[test]
    fn softmax_and_relu_values() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(1, 2, &[0.0, 0.0])).unwrap();
        let s = tape.row_softmax(x).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);
        let y = tape.leaf(t(1, 2, &[-1.0, 2.0])).unwrap();
        let r = tape.relu(y).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 3)).unwrap();
        let b = tape.leaf(Tensor::zeros(2, 3)).unwrap();
        assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
        let c = tape.leaf(Tensor::zeros(3, 2)).unwrap();
        assert!(tape.sub(a, c).is_err());
        assert!(tape.concat(a, c, Axis::Cols).is_err());
    }

    #[test]
    fn backward_on_empty_tape_is_state_error() {
        let tape = Tape::new();
        assert!(matches!(tape.backward(Var(0)), Err(Error::State(_))));
    }

    #[test]
    fn backward_needs_scalar() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 2)).unwrap();
        assert!(matches!(tape.backward(a), Err(Error::State(_))));
    }

    #[test]
    fn shared_parameter_gradients_sum() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(2.0)).unwrap();
        let mut tape = Tape::new();
        let w1 = tape.param(&store, id);
        let w2 = tape.param(&store, id);
        assert_eq!(w1, w2);
        // loss = w·w + 3w → d/dw = 2w + 3 = 7
        let sq = tape.mul(w1, w2).unwrap();
        let lin = tape.scale(w1, 3.0).unwrap();
        let total = tape.add(sq, lin).unwrap();
        tape.backward_into(total, &mut store).unwrap();
        assert_eq!(store.get(id).grad.data(), &[7.0]);
    }
}
