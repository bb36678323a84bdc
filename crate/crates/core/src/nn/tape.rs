//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Tape`] borrows a [`ParamStore`] read-only, records every operation in
//! execution order and replays them backwards in [`Tape::backward`]. Shape
//! errors in graph construction are programming errors and panic.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::params::{Gradients, ParamId, ParamStore};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Softplus(Var),
    Square(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Reshape(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    Clamp(Var, T, T),
    Minimum(Var, Var),
}

struct Node<T> {
    value: Option<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<'s, T: Scalar> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

/// Result of a backward pass: gradients for every node that received one.
pub struct Grads<T> {
    nodes: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
    params: Gradients<T>,
}

impl<T: Scalar> Grads<T> {
    /// Gradient of the loss with respect to an arbitrary node, if any flowed.
    pub fn wrt(&self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0]
            .as_ref()
            .map(|g| Tensor::new(&self.shapes[v.0], g.clone()).expect("grad shape"))
    }

    pub fn params(&self) -> &Gradients<T> {
        &self.params
    }

    pub fn into_params(self) -> Gradients<T> {
        self.params
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, len: usize) -> &mut Vec<T> {
    slot.get_or_insert_with(|| vec![T::zero(); len])
}

impl<'s, T: Scalar> Tape<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn item(&self, v: Var) -> T {
        self.value(v).item()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf for a trainable parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    /// Leaf holding a copy of `v`'s value that tracks gradients, used for
    /// differentiating with respect to inputs (e.g. actions).
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Same values as `v`, but no gradient flows back through the result.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.push(t, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.value(a).dims2();
        let (k2, n) = self.value(b).dims2();
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            T::zero(),
            &mut out,
        );
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(&[m, n], out).unwrap(), Op::MatMul(a, b), rg)
    }

    /// `x[n, m] + bias[m]` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (n, m) = self.value(x).dims2();
        assert_eq!(self.value(bias).numel(), m, "bias length");
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(m.max(1)) {
            for (o, &bv) in row.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        self.push(Tensor::new(&[n, m], out).unwrap(), Op::AddBias(x, bias), rg)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shapes differ");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(&shape, data).unwrap(), op, rg)
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, data).unwrap(), op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| if x <= y { x } else { y }, Op::Minimum(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.map(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, |x| x.exp(), Op::Exp(a))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, softplus, Op::Softplus(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        self.map(a, |x| x.max(lo).min(hi), Op::Clamp(a, lo, hi))
    }

    /// Row-wise log-softmax of a matrix.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let (n, m) = self.value(a).dims2();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(m) {
            let max = row.iter().fold(T::neg_infinity(), |acc, &v| acc.max(v));
            let lse = max + row.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp()).ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::new(&[n, m], out).unwrap(), Op::LogSoftmax(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().fold(T::zero(), |acc, &v| acc + v);
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().fold(T::zero(), |acc, &v| acc + v);
        let m = s / T::lit(t.numel() as f64);
        let rg = self.rg(a);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    /// Sums each row of `[n, m]` into `[n, 1]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let (n, m) = self.value(a).dims2();
        let out = self
            .value(a)
            .data()
            .chunks(m.max(1))
            .map(|r| r.iter().fold(T::zero(), |acc, &v| acc + v))
            .collect::<Vec<_>>();
        let out = if m == 0 { vec![T::zero(); n] } else { out };
        let rg = self.rg(a);
        self.push(Tensor::new(&[n, 1], out).unwrap(), Op::RowSum(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let n = self.value(parts[0]).dims2().0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.value(p).dims2();
                assert_eq!(r, n, "concat_cols row mismatch");
                c
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            Tensor::new(&[n, total], out).unwrap(),
            Op::ConcatCols(parts.to_vec()),
            rg,
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.value(a).dims2();
        assert!(start + len <= m, "slice_cols out of range");
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(n * len);
        for i in 0..n {
            out.extend_from_slice(&src[i * m + start..i * m + start + len]);
        }
        let rg = self.rg(a);
        self.push(Tensor::new(&[n, len], out).unwrap(), Op::SliceCols(a, start), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let m = self.value(parts[0]).dims2().1;
        let mut out = Vec::new();
        let mut n = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2();
            assert_eq!(c, m, "concat_rows col mismatch");
            out.extend_from_slice(self.value(p).data());
            n += r;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            Tensor::new(&[n, m], out).unwrap(),
            Op::ConcatRows(parts.to_vec()),
            rg,
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.value(a).dims2();
        assert!(start + len <= n, "slice_rows out of range");
        let out = self.value(a).data()[start * m..(start + len) * m].to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(&[len, m], out).unwrap(), Op::SliceRows(a, start), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let t = self.value(a).clone().reshaped(shape).expect("reshape");
        let rg = self.rg(a);
        self.push(t, Op::Reshape(a), rg)
    }

    /// 2D convolution. `x: [n, c, h, w]`, `w: [o, c, k, k]`, `b: [o]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(xs.len(), 4, "conv2d input must be rank 4");
        assert_eq!(ws.len(), 4, "conv2d weight must be rank 4");
        assert_eq!(xs[1], ws[1], "conv2d channel mismatch");
        assert_eq!(ws[2], ws[3], "square kernels only");
        let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (o, k) = (ws[0], ws[2]);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let geom = ConvGeom {
            n,
            c,
            h,
            w: wd,
            o,
            k,
            stride,
            pad,
            ho,
            wo,
        };
        let cols = im2col(self.value(x).data(), &geom);
        let ckk = c * k * k;
        let span = n * ho * wo;
        let mut out_perm = vec![T::zero(); o * span];
        T::gemm(
            o,
            ckk,
            span,
            T::one(),
            self.value(w).data(),
            false,
            &cols,
            false,
            T::zero(),
            &mut out_perm,
        );
        let bias = self.value(b).data();
        let plane = ho * wo;
        let mut out = vec![T::zero(); n * o * plane];
        for oc in 0..o {
            for s in 0..n {
                let src = &out_perm[oc * span + s * plane..oc * span + (s + 1) * plane];
                let dst = &mut out[(s * o + oc) * plane..(s * o + oc + 1) * plane];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = v + bias[oc];
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push(
            Tensor::new(&[n, o, ho, wo], out).unwrap(),
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                cols,
            },
            rg,
        )
    }

    /// Backpropagates from the scalar `loss`. Fails if the loss or any
    /// parameter gradient is non-finite.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        let lt = self.value(loss);
        assert_eq!(lt.numel(), 1, "loss must be scalar");
        if !lt.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let count = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..count).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let (lo, hi) = grads.split_at_mut(i);
            let g = match &hi[0] {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(i, g, lo);
        }

        let shapes = (0..count)
            .map(|i| self.value(Var(i)).shape().to_vec())
            .collect::<Vec<_>>();
        let mut params = Gradients::new();
        for (&id, &v) in &self.params {
            if let Some(g) = &grads[v.0] {
                let t = Tensor::new(self.store.get(id).shape(), g.clone()).unwrap();
                if !t.is_finite() {
                    return Err(Error::NonFinite(format!("grad:{}", self.store.name(id))));
                }
                params.insert(id, t);
            }
        }
        Ok(Grads {
            nodes: grads,
            shapes,
            params,
        })
    }

    fn backprop_node(&self, i: usize, g: &[T], lo: &mut [Option<Vec<T>>]) {
        let out = self.value(Var(i));
        let want = |v: Var| self.nodes[v.0].requires_grad;
        let numel = |v: Var| self.value(v).numel();
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let n = self.value(*b).dims2().1;
                if want(*a) {
                    let ga = accumulate(&mut lo[a.0], m * k);
                    T::gemm(m, n, k, T::one(), g, false, self.value(*b).data(), true, T::one(), ga);
                }
                if want(*b) {
                    let gb = accumulate(&mut lo[b.0], k * n);
                    T::gemm(k, m, n, T::one(), self.value(*a).data(), true, g, false, T::one(), gb);
                }
            }
            Op::AddBias(x, b) => {
                let m = self.value(*b).numel();
                if want(*x) {
                    let gx = accumulate(&mut lo[x.0], g.len());
                    for (d, &s) in gx.iter_mut().zip(g) {
                        *d += s;
                    }
                }
                if want(*b) {
                    let gb = accumulate(&mut lo[b.0], m);
                    for row in g.chunks(m.max(1)) {
                        for (d, &s) in gb.iter_mut().zip(row) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(self.nodes[i].op, Op::Sub(..)) {
                    -T::one()
                } else {
                    T::one()
                };
                if want(*a) {
                    let ga = accumulate(&mut lo[a.0], g.len());
                    for (d, &s) in ga.iter_mut().zip(g) {
                        *d += s;
                    }
                }
                if want(*b) {
                    let gb = accumulate(&mut lo[b.0], g.len());
                    for (d, &s) in gb.iter_mut().zip(g) {
                        *d += sign * s;
                    }
                }
            }
            Op::Mul(a, b) => {
                if want(*a) {
                    let bv = self.value(*b).data();
                    let ga = accumulate(&mut lo[a.0], g.len());
                    for ((d, &s), &y) in ga.iter_mut().zip(g).zip(bv) {
                        *d += s * y;
                    }
                }
                if want(*b) {
                    let av = self.value(*a).data();
                    let gb = accumulate(&mut lo[b.0], g.len());
                    for ((d, &s), &x) in gb.iter_mut().zip(g).zip(av) {
                        *d += s * x;
                    }
                }
            }
            Op::Minimum(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if want(*a) {
                    let ga = accumulate(&mut lo[a.0], g.len());
                    for j in 0..g.len() {
                        if av[j] <= bv[j] {
                            ga[j] += g[j];
                        }
                    }
                }
                if want(*b) {
                    let gb = accumulate(&mut lo[b.0], g.len());
                    for j in 0..g.len() {
                        if av[j] > bv[j] {
                            gb[j] += g[j];
                        }
                    }
                }
            }
            Op::Scale(a, c) => {
                let ga = accumulate(&mut lo[a.0], g.len());
                for (d, &s) in ga.iter_mut().zip(g) {
                    *d += s * *c;
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                let ga = accumulate(&mut lo[a.0], g.len());
                for (d, &s) in ga.iter_mut().zip(g) {
                    *d += s;
                }
            }
            Op::Tanh(a) => {
                let ga = accumulate(&mut lo[a.0], g.len());
                for ((d, &s), &y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *d += s * (T::one() - y * y);
                }
            }
            Op::Sigmoid(a) => {
                let ga = accumulate(&mut lo[a.0], g.len());
                for ((d, &s), &y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *d += s * y * (T::one() - y);
                }
            }
            Op::Relu(a) => {
                let xv = self.value(*a).data();
                let ga = accumulate(&mut lo[a.0], g.len());
                for ((d, &s), &x) in ga.iter_mut().zip(g).zip(xv) {
                    if x > T::zero() {
                        *d += s;
                    }
                }
            }
            Op::Exp(a) => {
                let ga = accumulate(&mut lo[a.0], g.len());
                for ((d, &s), &y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *d += s * y;
                }
            }
            Op::Softplus(a) => {
                let xv = self.value(*a).data();
                let ga = accumulate(&mut lo[a.0], g.len());
                for ((d, &s), &x) in ga.iter_mut().zip(g).zip(xv) {
                    *d += s * sigmoid(x);
                }
            }
            Op::Square(a) => {
                let xv = self.value(*a).data();
                let ga = accumulate(&mut lo[a.0], g.len());
                for ((d, &s), &x) in ga.iter_mut().zip(g).zip(xv) {
                    *d += s * (x + x);
                }
            }
            Op::Clamp(a, lo_v, hi_v) => {
                let xv = self.value(*a).data();
                let ga = accumulate(&mut lo[a.0], g.len());
                for ((d, &s), &x) in ga.iter_mut().zip(g).zip(xv) {
                    if x >= *lo_v && x <= *hi_v {
                        *d += s;
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let m = out.dims2().1;
                let ga = accumulate(&mut lo[a.0], g.len());
                for ((dr, gr), yr) in ga.chunks_mut(m).zip(g.chunks(m)).zip(out.data().chunks(m)) {
                    let gs = gr.iter().fold(T::zero(), |acc, &v| acc + v);
                    for ((d, &s), &y) in dr.iter_mut().zip(gr).zip(yr) {
                        *d += s - y.exp() * gs;
                    }
                }
            }
            Op::Sum(a) => {
                let len = numel(*a);
                let ga = accumulate(&mut lo[a.0], len);
                for d in ga.iter_mut() {
                    *d += g[0];
                }
            }
            Op::Mean(a) => {
                let len = numel(*a);
                let s = g[0] / T::lit(len as f64);
                let ga = accumulate(&mut lo[a.0], len);
                for d in ga.iter_mut() {
                    *d += s;
                }
            }
            Op::RowSum(a) => {
                let (n, m) = self.value(*a).dims2();
                let ga = accumulate(&mut lo[a.0], n * m);
                for r in 0..n {
                    for d in &mut ga[r * m..(r + 1) * m] {
                        *d += g[r];
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.dims2().1;
                let n = out.dims2().0;
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).dims2().1;
                    if want(p) {
                        let gp = accumulate(&mut lo[p.0], n * w);
                        for r in 0..n {
                            for j in 0..w {
                                gp[r * w + j] += g[r * total + off + j];
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (n, m) = self.value(*a).dims2();
                let len = out.dims2().1;
                let ga = accumulate(&mut lo[a.0], n * m);
                for r in 0..n {
                    for j in 0..len {
                        ga[r * m + start + j] += g[r * len + j];
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = numel(p);
                    if want(p) {
                        let gp = accumulate(&mut lo[p.0], len);
                        for (d, &s) in gp.iter_mut().zip(&g[off..off + len]) {
                            *d += s;
                        }
                    }
                    off += len;
                }
            }
            Op::SliceRows(a, start) => {
                let m = self.value(*a).dims2().1;
                let total = numel(*a);
                let ga = accumulate(&mut lo[a.0], total);
                for (d, &s) in ga[start * m..start * m + g.len()].iter_mut().zip(g) {
                    *d += s;
                }
            }
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                cols,
            } => {
                let plane = geom.ho * geom.wo;
                let span = geom.n * plane;
                let ckk = geom.c * geom.k * geom.k;
                // [n, o, plane] -> [o, n * plane]
                let mut g_perm = vec![T::zero(); geom.o * span];
                for s in 0..geom.n {
                    for oc in 0..geom.o {
                        let src = &g[(s * geom.o + oc) * plane..(s * geom.o + oc + 1) * plane];
                        g_perm[oc * span + s * plane..oc * span + (s + 1) * plane]
                            .copy_from_slice(src);
                    }
                }
                if want(*b) {
                    let gb = accumulate(&mut lo[b.0], geom.o);
                    for oc in 0..geom.o {
                        gb[oc] += g_perm[oc * span..(oc + 1) * span]
                            .iter()
                            .fold(T::zero(), |acc, &v| acc + v);
                    }
                }
                if want(*w) {
                    let gw = accumulate(&mut lo[w.0], geom.o * ckk);
                    T::gemm(geom.o, span, ckk, T::one(), &g_perm, false, cols, true, T::one(), gw);
                }
                if want(*x) {
                    let mut gcols = vec![T::zero(); ckk * span];
                    T::gemm(
                        ckk,
                        geom.o,
                        span,
                        T::one(),
                        self.value(*w).data(),
                        true,
                        &g_perm,
                        false,
                        T::zero(),
                        &mut gcols,
                    );
                    let gx = accumulate(&mut lo[x.0], geom.n * geom.c * geom.h * geom.w);
                    col2im(&gcols, geom, gx);
                }
            }
        }
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let plane = g.ho * g.wo;
    let span = g.n * plane;
    let mut cols = vec![T::zero(); g.c * g.k * g.k * span];
    for c in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * span..(row + 1) * span];
                for s in 0..g.n {
                    let base = (s * g.c + c) * g.h * g.w;
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            dst[s * plane + oy * g.wo + ox] =
                                x[base + iy as usize * g.w + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, gx: &mut [T]) {
    let plane = g.ho * g.wo;
    let span = g.n * plane;
    for c in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * span..(row + 1) * span];
                for s in 0..g.n {
                    let base = (s * g.c + c) * g.h * g.w;
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            gx[base + iy as usize * g.w + ix as usize] +=
                                src[s * plane + oy * g.wo + ox];
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

    fn store() -> ParamStore<f64> {
        ParamStore::new()
    }

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn square_gradient() {
        let s = store();
        let mut tape = Tape::new(&s);
        let x = tape.input(t(&[1], &[3.0]));
        let y = tape.square(x);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn linear_sum_gradient_is_column_sums() {
        let s = store();
        let mut tape = Tape::new(&s);
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let av = tape.constant(t(&[2, 3], &a));
        let x = tape.input(t(&[3, 1], &[0.5, -1.0, 2.0]));
        let y = tape.matmul(av, x);
        let l = tape.sum(y);
        let g = tape.backward(l).unwrap().wrt(x).unwrap();
        assert_eq!(g.data(), &[5.0, 7.0, 9.0]);
    }

    #[test]
    fn detach_blocks_one_factor() {
        let s = store();
        let mut tape = Tape::new(&s);
        let x = tape.input(t(&[1], &[2.0]));
        let d = tape.detach(x);
        let y = tape.mul(d, x);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[2.0]);

        let mut tape = Tape::new(&s);
        let x = tape.input(t(&[1], &[2.0]));
        let d = tape.detach(x);
        let y = tape.square(d);
        let g = tape.backward(y).unwrap();
        assert!(g.wrt(x).is_none());
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let s = store();
        let mut tape = Tape::new(&s);
        let x = tape.input(t(&[1], &[1000.0]));
        let y = tape.exp(x);
        let y = tape.scale(y, f64::INFINITY);
        match tape.backward(y) {
            Err(Error::NonFinite(what)) => assert_eq!(what, "loss"),
            other => panic!("expected non-finite error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = store();
        let id = s.add("layer/w", t(&[1], &[1.0])).unwrap();
        let mut tape = Tape::new(&s);
        let w = tape.param(id);
        // sigmoid saturates to a finite loss while d/dw = 0 * inf = NaN
        let big = tape.constant(t(&[1], &[f64::INFINITY]));
        let y = tape.mul(w, big);
        let y = tape.sigmoid(y);
        match tape.backward(y) {
            Err(Error::NonFinite(what)) => assert_eq!(what, "grad:layer/w"),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("expected failure"),
        }
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let s = store();
        let mut tape = Tape::new(&s);
        let x = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.0, 50.0]));
        let y = tape.log_softmax(x);
        for row in tape.value(y).data().chunks(3) {
            let total: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_matches_direct_evaluation() {
        // 1 sample, 2 channels, 4x5 image, 3 output channels, k=3, stride 2, pad 1
        let (c, h, w, o, k) = (2, 4, 5, 3, 3);
        let xv: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.3).sin()).collect();
        let wv: Vec<f64> = (0..o * c * k * k).map(|i| (i as f64 * 0.7).cos()).collect();
        let bv = [0.1, -0.2, 0.3];
        let s = store();
        let mut tape = Tape::new(&s);
        let x = tape.constant(t(&[1, c, h, w], &xv));
        let wt = tape.constant(t(&[o, c, k, k], &wv));
        let b = tape.constant(t(&[o], &bv));
        let y = tape.conv2d(x, wt, b, 2, 1);
        assert_eq!(tape.shape(y), &[1, 3, 2, 3]);
        let out = tape.value(y).data();
        for oc in 0..o {
            for oy in 0..2 {
                for ox in 0..3 {
                    let mut acc = bv[oc];
                    for ci in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let iy = (oy * 2 + ki) as isize - 1;
                                let ix = (ox * 2 + kj) as isize - 1;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += xv[(ci * h + iy as usize) * w + ix as usize]
                                    * wv[((oc * c + ci) * k + ki) * k + kj];
                            }
                        }
                    }
                    assert!((out[(oc * 2 + oy) * 3 + ox] - acc).abs() < 1e-12);
                }
            }
        }
    }
}
