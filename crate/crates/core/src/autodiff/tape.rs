use std::borrow::Cow;

use super::tensor::{axpy, dot, matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{AutodiffError, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { src: Var, axis: usize, start: usize },
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax { src: Var, axis: usize },
    Gather { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor<T> },
    Sum(Vec<Var>),
}

#[derive(Debug)]
struct Node<'p, T: Scalar> {
    value: Cow<'p, Tensor<T>>,
    op: Op<T>,
}

/// Append-only record of a forward computation.
///
/// Parameters are borrowed rather than copied, so a tape is cheap to build per
/// example; nodes are always pushed after their parents, which keeps the tape
/// in topological order.
#[derive(Debug, Default)]
pub struct Tape<'p, T: Scalar> {
    nodes: Vec<Node<'p, T>>,
}

fn shape_err(op: &'static str, shapes: &[&[usize]]) -> AutodiffError {
    AutodiffError::Shape {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new() -> Tape<'p, T> {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a borrowed tensor (typically a model parameter) as a leaf.
    pub fn param(&mut self, t: &'p Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an owned tensor (an input or constant) as a leaf.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize), AutodiffError> {
        let t = self.value(v);
        if t.is_matrix() {
            Ok((t.shape()[0], t.shape()[1]))
        } else {
            Err(shape_err(op, &[t.shape()]))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = self.matrix(a, "matmul")?;
        let (k2, n) = self.matrix(b, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", &[self.value(a).shape(), self.value(b).shape()]));
        }
        let mut out = Tensor::zeros(&[m, n]);
        matmul_acc(self.value(a).data(), self.value(b).data(), out.data_mut(), m, k, n);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, &[ta.shape(), tb.shape()]));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `1 × n` bias row to every row of an `m × n` matrix.
    pub fn add_row(&mut self, m: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (rows, cols) = self.matrix(m, "add_row")?;
        let (br, bc) = self.matrix(bias, "add_row")?;
        if br != 1 || bc != cols {
            return Err(shape_err("add_row", &[self.value(m).shape(), self.value(bias).shape()]));
        }
        let mut out = self.value(m).clone();
        let b = self.value(bias).data();
        for r in 0..rows {
            for (o, &x) in out.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *o = *o + x;
            }
        }
        Ok(self.push(out, Op::AddRow(m, bias)))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| x * s).collect())
            .expect("same shape");
        self.push(out, Op::Scale(a, s))
    }

    /// Concatenates 2-D tensors along `axis` (0 stacks rows, 1 joins columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        if parts.is_empty() || axis > 1 {
            return Err(shape_err("concat", &[]));
        }
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| self.matrix(p, "concat"))
            .collect::<Result<_, _>>()?;
        let fixed = if axis == 0 { dims[0].1 } else { dims[0].0 };
        if dims.iter().any(|d| if axis == 0 { d.1 } else { d.0 } != fixed) {
            let shapes: Vec<&[usize]> = parts.iter().map(|&p| self.value(p).shape()).collect();
            return Err(shape_err("concat", &shapes));
        }
        let out = if axis == 0 {
            let rows = dims.iter().map(|d| d.0).sum();
            let mut data = Vec::with_capacity(rows * fixed);
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
            Tensor::matrix(rows, fixed, data)?
        } else {
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(fixed * cols);
            for r in 0..fixed {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row_slice(r));
                }
            }
            Tensor::matrix(fixed, cols, data)?
        };
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Takes `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, src: Var, axis: usize, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let (rows, cols) = self.matrix(src, "slice")?;
        let extent = if axis == 0 { rows } else { cols };
        if axis > 1 || len == 0 || start + len > extent {
            return Err(shape_err("slice", &[self.value(src).shape(), &[axis, start, len]]));
        }
        let t = self.value(src);
        let out = if axis == 0 {
            Tensor::matrix(len, cols, t.data()[start * cols..(start + len) * cols].to_vec())?
        } else {
            Tensor::from_fn(rows, len, |r, c| t.get(r, start + c))
        };
        Ok(self.push(out, Op::Slice { src, axis, start }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.matrix(a, "transpose")?;
        let out = self.value(a).transpose();
        Ok(self.push(out, Op::Transpose(a)))
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
            .expect("same shape");
        self.push(out, op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, T::tanh, Op::Tanh(a))
    }

    /// Max-shifted softmax along `axis` of a 2-D tensor.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, AutodiffError> {
        let (rows, cols) = self.matrix(a, "softmax")?;
        if axis > 1 {
            return Err(shape_err("softmax", &[self.value(a).shape(), &[axis]]));
        }
        let out = if axis == 1 {
            let t = self.value(a);
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                data.extend(softmax_slice(t.row_slice(r)));
            }
            Tensor::matrix(rows, cols, data)?
        } else {
            softmax_columns(self.value(a))
        };
        Ok(self.push(out, Op::Softmax { src: a, axis }))
    }

    /// Gathers rows of `table` by id.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutodiffError> {
        let (rows, cols) = self.matrix(table, "embedding_gather")?;
        if ids.is_empty() {
            return Err(shape_err("embedding_gather", &[self.value(table).shape(), &[0]]));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(AutodiffError::Index {
                op: "embedding_gather",
                index: bad,
                bound: rows,
            });
        }
        let t = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::matrix(ids.len(), cols, data)?;
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Summed cross entropy of each logits row against its target id,
    /// computed through log-sum-exp. Returns a `1 × 1` tensor.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, AutodiffError> {
        let (rows, cols) = self.matrix(logits, "cross_entropy")?;
        if targets.len() != rows {
            return Err(shape_err("cross_entropy", &[self.value(logits).shape(), &[targets.len()]]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
            return Err(AutodiffError::Index {
                op: "cross_entropy",
                index: bad,
                bound: cols,
            });
        }
        let t = self.value(logits);
        let mut loss = T::zero();
        let mut probs = Vec::with_capacity(rows * cols);
        for (r, &target) in targets.iter().enumerate() {
            let row = t.row_slice(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
            loss = loss + lse - row[target];
            probs.extend(row.iter().map(|&x| (x - lse).exp()));
        }
        let probs = Tensor::matrix(rows, cols, probs)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Elementwise sum of same-shaped tensors.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = parts.first().ok_or_else(|| shape_err("sum", &[]))?;
        let mut out = self.value(*first).clone();
        for &p in &parts[1..] {
            let t = self.value(p);
            if t.shape() != out.shape() {
                return Err(shape_err("sum", &[out.shape(), t.shape()]));
            }
            for (o, &x) in out.data_mut().iter_mut().zip(t.data()) {
                *o = *o + x;
            }
        }
        Ok(self.push(out, Op::Sum(parts.to_vec())))
    }

    /// Reverse pass from a scalar `loss`. Gradients of every leaf reachable
    /// from the loss are returned; fan-out contributions are accumulated.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, AutodiffError> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::new(lt.shape().to_vec(), vec![T::one()])?);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &node.value, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Tensor<T>>], v: Var) -> &'g mut [T] {
        let shape = self.value(v).shape();
        grads[v.0]
            .get_or_insert_with(|| Tensor::zeros(shape))
            .data_mut()
    }

    fn propagate(&self, node: &Node<'p, T>, out: &Tensor<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                matmul_bt_acc(gd, tb.data(), self.acc(grads, *a), m, n, k);
                matmul_at_acc(ta.data(), gd, self.acc(grads, *b), m, k, n);
            }
            Op::Add(a, b) => {
                axpy(T::one(), gd, self.acc(grads, *a));
                axpy(T::one(), gd, self.acc(grads, *b));
            }
            Op::Sub(a, b) => {
                axpy(T::one(), gd, self.acc(grads, *a));
                axpy(-T::one(), gd, self.acc(grads, *b));
            }
            Op::Mul(a, b) => {
                let bd = self.value(*b).data();
                for ((o, &gv), &bv) in self.acc(grads, *a).iter_mut().zip(gd).zip(bd) {
                    *o = *o + gv * bv;
                }
                let ad = self.value(*a).data();
                for ((o, &gv), &av) in self.acc(grads, *b).iter_mut().zip(gd).zip(ad) {
                    *o = *o + gv * av;
                }
            }
            Op::AddRow(m, bias) => {
                axpy(T::one(), gd, self.acc(grads, *m));
                let cols = g.cols();
                let gb = self.acc(grads, *bias);
                for row in gd.chunks_exact(cols) {
                    axpy(T::one(), row, gb);
                }
            }
            Op::Scale(a, s) => axpy(*s, gd, self.acc(grads, *a)),
            Op::Concat { parts, axis } => {
                if *axis == 0 {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).numel();
                        axpy(T::one(), &gd[offset..offset + n], self.acc(grads, p));
                        offset += n;
                    }
                } else {
                    let total = g.cols();
                    let mut col = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let gp = self.acc(grads, p);
                        for (r, dst) in gp.chunks_exact_mut(w).enumerate() {
                            axpy(T::one(), &gd[r * total + col..r * total + col + w], dst);
                        }
                        col += w;
                    }
                }
            }
            Op::Slice { src, axis, start } => {
                let src_cols = self.value(*src).cols();
                let gs = self.acc(grads, *src);
                if *axis == 0 {
                    let off = start * src_cols;
                    axpy(T::one(), gd, &mut gs[off..off + gd.len()]);
                } else {
                    let w = g.cols();
                    for (r, row) in gd.chunks_exact(w).enumerate() {
                        let off = r * src_cols + start;
                        axpy(T::one(), row, &mut gs[off..off + w]);
                    }
                }
            }
            Op::Transpose(a) => {
                let gt = g.transpose();
                axpy(T::one(), gt.data(), self.acc(grads, *a));
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                for ((o, &gv), &yv) in self.acc(grads, *a).iter_mut().zip(gd).zip(y) {
                    *o = *o + gv * yv * (T::one() - yv);
                }
            }
            Op::Tanh(a) => {
                let y = out.data();
                for ((o, &gv), &yv) in self.acc(grads, *a).iter_mut().zip(gd).zip(y) {
                    *o = *o + gv * (T::one() - yv * yv);
                }
            }
            Op::Softmax { src, axis } => {
                let (rows, cols) = (out.rows(), out.cols());
                let y = out.data();
                let gs = self.acc(grads, *src);
                if *axis == 1 {
                    for r in 0..rows {
                        let range = r * cols..(r + 1) * cols;
                        let s = dot(&gd[range.clone()], &y[range.clone()]);
                        for j in range {
                            gs[j] = gs[j] + y[j] * (gd[j] - s);
                        }
                    }
                } else {
                    for c in 0..cols {
                        let s: T = (0..rows).map(|r| gd[r * cols + c] * y[r * cols + c]).sum();
                        for r in 0..rows {
                            let j = r * cols + c;
                            gs[j] = gs[j] + y[j] * (gd[j] - s);
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                let cols = g.cols();
                let gt = self.acc(grads, *table);
                for (row, &id) in gd.chunks_exact(cols).zip(ids) {
                    axpy(T::one(), row, &mut gt[id * cols..(id + 1) * cols]);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let scale = gd[0];
                let cols = probs.cols();
                let gl = self.acc(grads, *logits);
                for (r, &t) in targets.iter().enumerate() {
                    let row = &mut gl[r * cols..(r + 1) * cols];
                    axpy(scale, probs.row_slice(r), row);
                    row[t] = row[t] - scale;
                }
            }
            Op::Sum(parts) => {
                for &p in parts {
                    axpy(T::one(), gd, self.acc(grads, p));
                }
            }
        }
    }
}

/// Result of [`Tape::backward`]: one optional gradient per tape node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not
    /// influence the loss.
    pub fn take_or_zeros(&mut self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_slice<T: Scalar>(xs: &[T]) -> Vec<T> {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = xs.iter().map(|&x| (x - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax_columns<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let tt = t.transpose();
    let mut data = Vec::with_capacity(t.numel());
    for r in 0..tt.rows() {
        data.extend(softmax_slice(tt.row_slice(r)));
    }
    Tensor::matrix(tt.rows(), tt.cols(), data)
        .expect("same shape")
        .transpose()
}
