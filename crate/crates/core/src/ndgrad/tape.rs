use std::cell::{Ref, RefCell};
use std::fmt;

use crate::scalar::{self, Real};

use super::tensor::{matmul_nt, matmul_raw, matmul_tn};
use super::{GradError, Tensor};

type Result<T> = std::result::Result<T, GradError>;

enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddRow(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    MatMul(usize, usize),
    Sum(usize),
    Mean(usize),
    Exp(usize),
    Log(usize),
    Neg(usize),
    Abs(usize),
    Tanh(usize),
    Relu(usize),
    Softplus(usize),
    SoftmaxRows(usize),
    PairwiseAbsDiff(usize),
    NormalCdf(usize),
    Clamp(usize, T, T),
    MulConst(usize, Tensor<T>),
    Column(usize, usize),
    Slice(usize, usize),
    Concat(Vec<usize>),
    Reshape(usize),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Record of a differentiable computation. Confined to one thread.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a node on a [`Tape`].
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Var<'_, T> {}

impl<T> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf with requires-grad set.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_ref(&self, id: usize) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn record(&self, op_name: &'static str, value: Tensor<T>, op: Op<T>, parents: &[usize]) -> Result<Var<'_, T>> {
        if !value.all_finite() {
            return Err(GradError::NonFinite { op: op_name });
        }
        let rg = self.requires(parents);
        Ok(self.push(value, op, rg))
    }

    /// Reverse sweep from a scalar `output`; one gradient per `wrt` node.
    pub fn gradients(&self, output: Var<'_, T>, wrt: &[Var<'_, T>]) -> Result<Vec<Tensor<T>>> {
        let nodes = self.nodes.borrow();
        let out_shape = nodes[output.id].value.shape().to_vec();
        if nodes[output.id].value.len() != 1 {
            return Err(GradError::NonScalar(out_shape));
        }
        for w in wrt {
            if !nodes[w.id].requires_grad {
                return Err(GradError::NotDifferentiable(w.id));
            }
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=output.id).map(|_| None).collect();
        grads[output.id] = Some(Tensor::full(&out_shape, T::one()));

        for id in (0..=output.id).rev() {
            if !nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backward_node(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }

        Ok(wrt
            .iter()
            .map(|w| {
                grads
                    .get(w.id)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| Tensor::zeros(nodes[w.id].value.shape()))
            })
            .collect())
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], id: usize, g: Tensor<T>) {
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn backward_node<T: Real>(nodes: &[Node<T>], id: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
    let node = &nodes[id];
    let rg = |i: usize| nodes[i].requires_grad;
    let val = |i: usize| &nodes[i].value;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if rg(*a) {
                accumulate(grads, *a, g.clone());
            }
            if rg(*b) {
                accumulate(grads, *b, g.clone());
            }
        }
        Op::Sub(a, b) => {
            if rg(*a) {
                accumulate(grads, *a, g.clone());
            }
            if rg(*b) {
                accumulate(grads, *b, g.map(|v| -v));
            }
        }
        Op::Mul(a, b) => {
            if rg(*a) {
                accumulate(grads, *a, g.zip_map(val(*b), |gv, bv| gv * bv));
            }
            if rg(*b) {
                accumulate(grads, *b, g.zip_map(val(*a), |gv, av| gv * av));
            }
        }
        Op::Div(a, b) => {
            let bv = val(*b);
            if rg(*a) {
                accumulate(grads, *a, g.zip_map(bv, |gv, d| gv / d));
            }
            if rg(*b) {
                // d(a/b)/db = -(a/b)/b
                let q = &node.value;
                let gb = g.zip_map(q, |gv, qv| gv * qv).zip_map(bv, |x, d| -x / d);
                accumulate(grads, *b, gb);
            }
        }
        Op::AddRow(a, r) => {
            if rg(*a) {
                accumulate(grads, *a, g.clone());
            }
            if rg(*r) {
                let cols = val(*r).len();
                let mut acc = vec![T::zero(); cols];
                for row in g.data().chunks(cols) {
                    for (s, &v) in acc.iter_mut().zip(row) {
                        *s = *s + v;
                    }
                }
                accumulate(grads, *r, Tensor::new(val(*r).shape().to_vec(), acc).unwrap());
            }
        }
        Op::Scale(a, c) => {
            let c = *c;
            accumulate(grads, *a, g.map(|v| v * c));
        }
        Op::AddScalar(a) | Op::Reshape(a) => {
            let shape = val(*a).shape().to_vec();
            accumulate(grads, *a, Tensor::new(shape, g.data().to_vec()).unwrap());
        }
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k, n) = (av.rows(), av.cols(), bv.cols());
            if rg(*a) {
                let ga = matmul_nt(g.data(), bv.data(), m, n, k);
                accumulate(grads, *a, Tensor::new(vec![m, k], ga).unwrap());
            }
            if rg(*b) {
                let gb = matmul_tn(av.data(), g.data(), m, k, n);
                accumulate(grads, *b, Tensor::new(vec![k, n], gb).unwrap());
            }
        }
        Op::Sum(a) => {
            accumulate(grads, *a, Tensor::full(val(*a).shape(), g.item()));
        }
        Op::Mean(a) => {
            let n = T::lit(val(*a).len() as f64);
            accumulate(grads, *a, Tensor::full(val(*a).shape(), g.item() / n));
        }
        Op::Exp(a) => accumulate(grads, *a, g.zip_map(&node.value, |gv, y| gv * y)),
        Op::Log(a) => accumulate(grads, *a, g.zip_map(val(*a), |gv, x| gv / x)),
        Op::Neg(a) => accumulate(grads, *a, g.map(|v| -v)),
        Op::Abs(a) => accumulate(
            grads,
            *a,
            g.zip_map(val(*a), |gv, x| {
                if x > T::zero() {
                    gv
                } else if x < T::zero() {
                    -gv
                } else {
                    T::zero()
                }
            }),
        ),
        Op::Tanh(a) => accumulate(grads, *a, g.zip_map(&node.value, |gv, y| gv * (T::one() - y * y))),
        Op::Relu(a) => accumulate(
            grads,
            *a,
            g.zip_map(val(*a), |gv, x| if x > T::zero() { gv } else { T::zero() }),
        ),
        Op::Softplus(a) => accumulate(grads, *a, g.zip_map(val(*a), |gv, x| gv * scalar::sigmoid(x))),
        Op::SoftmaxRows(a) => {
            let y = &node.value;
            let cols = y.cols();
            let mut out = Vec::with_capacity(y.len());
            for (yr, gr) in y.data().chunks(cols).zip(g.data().chunks(cols)) {
                let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                out.extend(yr.iter().zip(gr).map(|(&p, &q)| p * (q - dot)));
            }
            accumulate(grads, *a, Tensor::new(y.shape().to_vec(), out).unwrap());
        }
        Op::PairwiseAbsDiff(a) => {
            let v = val(*a).data();
            let n = v.len();
            let gd = g.data();
            let mut out = vec![T::zero(); n];
            for j in 0..n {
                let mut acc = T::zero();
                for k in 0..n {
                    let d = v[j] - v[k];
                    let w = gd[j * n + k] + gd[k * n + j];
                    if d > T::zero() {
                        acc = acc + w;
                    } else if d < T::zero() {
                        acc = acc - w;
                    }
                }
                out[j] = acc;
            }
            accumulate(grads, *a, Tensor::new(val(*a).shape().to_vec(), out).unwrap());
        }
        Op::NormalCdf(a) => accumulate(grads, *a, g.zip_map(val(*a), |gv, z| gv * scalar::std_normal_pdf(z))),
        Op::Clamp(a, lo, hi) => {
            let (lo, hi) = (*lo, *hi);
            accumulate(
                grads,
                *a,
                g.zip_map(val(*a), |gv, x| if x >= lo && x <= hi { gv } else { T::zero() }),
            );
        }
        Op::MulConst(a, c) => accumulate(grads, *a, g.zip_map(c, |gv, cv| gv * cv)),
        Op::Column(a, j) => {
            let src = val(*a);
            let cols = src.cols();
            let mut out = Tensor::zeros(src.shape());
            for (i, &gv) in g.data().iter().enumerate() {
                out.data_mut()[i * cols + j] = gv;
            }
            accumulate(grads, *a, out);
        }
        Op::Slice(a, start) => {
            let mut out = Tensor::zeros(val(*a).shape());
            out.data_mut()[*start..*start + g.len()].copy_from_slice(g.data());
            accumulate(grads, *a, out);
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = val(p).len();
                if rg(p) {
                    let piece = g.data()[offset..offset + len].to_vec();
                    accumulate(grads, p, Tensor::new(val(p).shape().to_vec(), piece).unwrap());
                }
                offset += len;
            }
        }
    }
}

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(GradError::Shape {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    /// Snapshot of the node's value.
    pub fn value(&self) -> Tensor<T> {
        self.tape.value_ref(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_ref(self.id).shape().to_vec()
    }

    /// Value of a one-element node.
    pub fn item(&self) -> T {
        self.tape.value_ref(self.id).item()
    }

    fn unary(self, name: &'static str, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var<'t, T>> {
        let v = self.tape.value_ref(self.id).map(f);
        self.tape.record(name, v, op, &[self.id])
    }

    fn binary(self, other: Var<'t, T>, name: &'static str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var<'t, T>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(other.id);
            same_shape(name, &a, &b)?;
            a.zip_map(&b, f)
        };
        self.tape.record(name, v, op, &[self.id, other.id])
    }

    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    /// Elementwise quotient; every divisor must be nonzero.
    pub fn div(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        if self.tape.value_ref(other.id).data().iter().any(|v| v.is_zero()) {
            return Err(GradError::Domain {
                op: "div",
                detail: "division by zero".into(),
            });
        }
        self.binary(other, "div", |a, b| a / b, Op::Div(self.id, other.id))
    }

    /// Adds a length-`n` row to every row of an `m×n` matrix.
    pub fn add_row(self, row: Var<'t, T>) -> Result<Var<'t, T>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            let r = self.tape.value_ref(row.id);
            if a.shape().len() != 2 || r.len() != a.cols() {
                return Err(GradError::Shape {
                    op: "add_row",
                    lhs: a.shape().to_vec(),
                    rhs: r.shape().to_vec(),
                });
            }
            let cols = a.cols();
            let mut out = a.clone();
            for chunk in out.data_mut().chunks_mut(cols) {
                for (x, &b) in chunk.iter_mut().zip(r.data()) {
                    *x = *x + b;
                }
            }
            out
        };
        self.tape.record("add_row", v, Op::AddRow(self.id, row.id), &[self.id, row.id])
    }

    pub fn scale(self, c: T) -> Result<Var<'t, T>> {
        self.unary("scale", |x| x * c, Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: T) -> Result<Var<'t, T>> {
        self.unary("add_scalar", |x| x + c, Op::AddScalar(self.id))
    }

    /// 2-D matrix product.
    pub fn matmul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(other.id);
            if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
                return Err(GradError::Shape {
                    op: "matmul",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            Tensor::new(vec![m, n], matmul_raw(a.data(), b.data(), m, k, n))?
        };
        self.tape.record("matmul", v, Op::MatMul(self.id, other.id), &[self.id, other.id])
    }

    pub fn sum(self) -> Result<Var<'t, T>> {
        let v = Tensor::scalar(self.tape.value_ref(self.id).sum());
        self.tape.record("sum", v, Op::Sum(self.id), &[self.id])
    }

    pub fn mean(self) -> Result<Var<'t, T>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            if a.is_empty() {
                return Err(GradError::Domain {
                    op: "mean",
                    detail: "empty tensor".into(),
                });
            }
            Tensor::scalar(a.sum() / T::lit(a.len() as f64))
        };
        self.tape.record("mean", v, Op::Mean(self.id), &[self.id])
    }

    pub fn exp(self) -> Result<Var<'t, T>> {
        self.unary("exp", T::exp, Op::Exp(self.id))
    }

    /// Natural log; every element must be positive.
    pub fn ln(self) -> Result<Var<'t, T>> {
        if let Some(bad) = self.tape.value_ref(self.id).data().iter().find(|v| **v <= T::zero()) {
            return Err(GradError::Domain {
                op: "log",
                detail: format!("nonpositive argument {bad}"),
            });
        }
        self.unary("log", T::ln, Op::Log(self.id))
    }

    pub fn neg(self) -> Result<Var<'t, T>> {
        self.unary("neg", |x| -x, Op::Neg(self.id))
    }

    pub fn abs(self) -> Result<Var<'t, T>> {
        self.unary("abs", T::abs, Op::Abs(self.id))
    }

    pub fn tanh(self) -> Result<Var<'t, T>> {
        self.unary("tanh", T::tanh, Op::Tanh(self.id))
    }

    pub fn relu(self) -> Result<Var<'t, T>> {
        self.unary("relu", |x| x.max(T::zero()), Op::Relu(self.id))
    }

    pub fn softplus(self) -> Result<Var<'t, T>> {
        self.unary("softplus", scalar::softplus, Op::Softplus(self.id))
    }

    pub fn std_normal_cdf(self) -> Result<Var<'t, T>> {
        self.unary("std_normal_cdf", scalar::std_normal_cdf, Op::NormalCdf(self.id))
    }

    pub fn clamp(self, lo: T, hi: T) -> Result<Var<'t, T>> {
        self.unary("clamp", |x| x.max(lo).min(hi), Op::Clamp(self.id, lo, hi))
    }

    /// Softmax over the last axis of a 2-D tensor.
    pub fn softmax_rows(self) -> Result<Var<'t, T>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            let cols = a.cols();
            let mut out = a.clone();
            for row in out.data_mut().chunks_mut(cols) {
                let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for x in row.iter_mut() {
                    *x = (*x - m).exp();
                    z = z + *x;
                }
                for x in row.iter_mut() {
                    *x = *x / z;
                }
            }
            out
        };
        self.tape.record("softmax_rows", v, Op::SoftmaxRows(self.id), &[self.id])
    }

    /// `A[j,k] = |v_j - v_k|` for a vector `v`.
    pub fn pairwise_abs_diff(self) -> Result<Var<'t, T>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            let n = a.len();
            let d = a.data();
            let mut out = Vec::with_capacity(n * n);
            for j in 0..n {
                out.extend(d.iter().map(|&x| (d[j] - x).abs()));
            }
            Tensor::new(vec![n, n], out)?
        };
        self.tape.record("pairwise_abs_diff", v, Op::PairwiseAbsDiff(self.id), &[self.id])
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(self, c: &Tensor<T>) -> Result<Var<'t, T>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            same_shape("mul_const", &a, c)?;
            a.zip_map(c, |x, y| x * y)
        };
        self.tape.record("mul_const", v, Op::MulConst(self.id, c.clone()), &[self.id])
    }

    /// Inverted dropout with a caller-supplied 0/1 keep mask.
    pub fn dropout(self, mask: &Tensor<T>, rate: T) -> Result<Var<'t, T>> {
        let keep = T::one() - rate;
        if keep <= T::zero() {
            return Err(GradError::Domain {
                op: "dropout",
                detail: format!("rate {rate} leaves nothing"),
            });
        }
        let scaled = mask.map(|m| m / keep);
        self.mul_const(&scaled)
    }

    /// Column `j` of a 2-D tensor, as a vector.
    pub fn column(self, j: usize) -> Result<Var<'t, T>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            if a.shape().len() != 2 {
                return Err(GradError::Shape {
                    op: "column",
                    lhs: a.shape().to_vec(),
                    rhs: vec![],
                });
            }
            let cols = a.cols();
            if j >= cols {
                return Err(GradError::Index {
                    op: "column",
                    index: j,
                    extent: cols,
                });
            }
            Tensor::vector(a.data().chunks(cols).map(|r| r[j]).collect())
        };
        self.tape.record("column", v, Op::Column(self.id, j), &[self.id])
    }

    /// Contiguous run of `len` elements of the flattened tensor.
    pub fn slice(self, start: usize, len: usize) -> Result<Var<'t, T>> {
        let v = {
            let a = self.tape.value_ref(self.id);
            if start + len > a.len() {
                return Err(GradError::Index {
                    op: "slice",
                    index: start + len,
                    extent: a.len(),
                });
            }
            Tensor::vector(a.data()[start..start + len].to_vec())
        };
        self.tape.record("slice", v, Op::Slice(self.id, start), &[self.id])
    }

    /// Single element of the flattened tensor.
    pub fn index(self, i: usize) -> Result<Var<'t, T>> {
        self.slice(i, 1)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, T>> {
        let v = self.tape.value_ref(self.id).clone().reshaped(shape.to_vec())?;
        self.tape.record("reshape", v, Op::Reshape(self.id), &[self.id])
    }

    /// Flattened concatenation into one vector.
    pub fn concat(parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let first = parts.first().ok_or(GradError::Domain {
            op: "concat",
            detail: "no inputs".into(),
        })?;
        let tape = first.tape;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let mut data = Vec::new();
        for &i in &ids {
            data.extend_from_slice(tape.value_ref(i).data());
        }
        tape.record("concat", Tensor::vector(data), Op::Concat(ids.clone()), &ids)
    }
}
