//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Binary elementwise ops broadcast their second operand when it is a row
//! vector (`1 x cols`), a column vector (`rows x 1`) or a scalar.

use crate::error::{Error, Result};
use crate::neural::params::ParamStore;
use crate::neural::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Shape of a valid (unpadded) 2-D convolution over `c x h x w` images.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn h_out(&self) -> usize {
        (self.h_in - self.kernel) / self.stride + 1
    }

    pub fn w_out(&self) -> usize {
        (self.w_in - self.kernel) / self.stride + 1
    }

    pub fn out_len(&self) -> usize {
        self.c_out * self.h_out() * self.w_out()
    }

    pub fn in_len(&self) -> usize {
        self.c_in * self.h_in * self.w_in
    }

    pub fn valid(&self) -> bool {
        self.kernel > 0 && self.stride > 0 && self.h_in >= self.kernel && self.w_in >= self.kernel
    }
}

/// 2x2, stride-2 max pooling over `c x h x w` images.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolShape {
    pub c: usize,
    pub h_in: usize,
    pub w_in: usize,
}

impl PoolShape {
    pub fn h_out(&self) -> usize {
        self.h_in / 2
    }

    pub fn w_out(&self) -> usize {
        self.w_in / 2
    }

    pub fn out_len(&self) -> usize {
        self.c * self.h_out() * self.w_out()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Col,
    Scalar,
}

fn broadcast_kind(a: &Tensor, b: &Tensor) -> Broadcast {
    if a.rows == b.rows && a.cols == b.cols {
        Broadcast::Same
    } else if b.rows == 1 && b.cols == 1 {
        Broadcast::Scalar
    } else if b.rows == 1 && b.cols == a.cols {
        Broadcast::Row
    } else if b.cols == 1 && b.rows == a.rows {
        Broadcast::Col
    } else {
        panic!(
            "incompatible shapes {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )
    }
}

#[inline]
fn bindex(kind: Broadcast, cols: usize, i: usize) -> usize {
    match kind {
        Broadcast::Same => i,
        Broadcast::Row => i % cols,
        Broadcast::Col => i / cols,
        Broadcast::Scalar => 0,
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(usize),
    Affine(Var, Var, Var),
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    AddScalar(Var),
    Celu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    SumCols(Var),
    SumAll(Var),
    MeanAll(Var),
    Conv2d(Var, Var, Var, ConvShape),
    MaxPool(Var, PoolShape, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients for every parameter in a [`ParamStore`], in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            grads: store.params().iter().map(|p| vec![0.0; p.value.len()]).collect(),
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

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows, t.cols)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Parameter by store index, shared across uses within this graph.
    pub fn param(&mut self, idx: usize) -> Var {
        if let Some(v) = self.param_nodes[idx] {
            return v;
        }
        let p = &self.params.params()[idx];
        let t = p.as_matrix();
        let v = self.push(t, Op::Param(idx));
        self.param_nodes[idx] = Some(v);
        v
    }

    /// `x W + b` with `x: B x in`, `W: in x out`, `b: 1 x out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        assert_eq!(xt.cols, wt.rows, "affine inner dimension");
        assert_eq!((bt.rows, bt.cols), (1, wt.cols), "affine bias shape");
        let mut out = Tensor::zeros(xt.rows, wt.cols);
        matmul_into(xt, wt, &mut out);
        for r in 0..out.rows {
            for (o, bv) in out.row_mut(r).iter_mut().zip(&bt.data) {
                *o += bv;
            }
        }
        self.push(out, Op::Affine(x, w, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (at, bt) = (self.value(a), self.value(b));
        assert_eq!(at.cols, bt.rows, "matmul inner dimension");
        let mut out = Tensor::zeros(at.rows, bt.cols);
        matmul_into(at, bt, &mut out);
        self.push(out, Op::MatMul(a, b))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> (Tensor, Broadcast) {
        let (at, bt) = (self.value(a), self.value(b));
        let kind = broadcast_kind(at, bt);
        let cols = at.cols;
        let data = at
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bt.data[bindex(kind, cols, i)]))
            .collect();
        (
            Tensor {
                rows: at.rows,
                cols,
                data,
            },
            kind,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (t, k) = self.binary(a, b, |x, y| x + y);
        self.push(t, Op::Add(a, b, k))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (t, k) = self.binary(a, b, |x, y| x - y);
        self.push(t, Op::Sub(a, b, k))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (t, k) = self.binary(a, b, |x, y| x * y);
        self.push(t, Op::Mul(a, b, k))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let at = self.value(a);
        let t = Tensor {
            rows: at.rows,
            cols: at.cols,
            data: at.data.iter().map(|&x| f(x)).collect(),
        };
        self.push(t, op)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.scale(a, -1.0);
        self.add_scalar(n, 1.0)
    }

    /// `x` for `x >= 0`, `exp(x) - 1` otherwise.
    pub fn celu(&mut self, a: Var) -> Var {
        self.unary(a, celu, Op::Celu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Elementwise minimum of equally shaped operands.
    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let (t, k) = self.binary(a, b, f64::min);
        assert_eq!(k, Broadcast::Same, "minimum requires equal shapes");
        self.push(t, Op::Minimum(a, b))
    }

    /// Copy of `a` that blocks gradient flow.
    pub fn detach(&mut self, a: Var) -> Var {
        let t = self.value(a).clone();
        self.push(t, Op::Leaf)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rows, rows, "concat row mismatch");
                out.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(t.row(r));
                off += t.cols;
            }
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let at = self.value(a);
        assert!(start + len <= at.cols, "slice out of range");
        let mut out = Tensor::zeros(at.rows, len);
        for r in 0..at.rows {
            out.row_mut(r).copy_from_slice(&at.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    /// Per-row sum, `B x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let at = self.value(a);
        let data = (0..at.rows).map(|r| at.row(r).iter().sum()).collect();
        let t = Tensor {
            rows: at.rows,
            cols: 1,
            data,
        };
        self.push(t, Op::SumCols(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data.iter().sum::<f64>() / t.data.len() as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(a))
    }

    /// Valid convolution; `x: B x (c*h*w)`, `w: c_out x (c_in*k*k)`, `b: 1 x c_out`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, shape: ConvShape) -> Var {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        assert_eq!(xt.cols, shape.in_len(), "conv input size");
        assert_eq!((wt.rows, wt.cols), (shape.c_out, shape.c_in * shape.kernel * shape.kernel), "conv weight shape");
        assert_eq!((bt.rows, bt.cols), (1, shape.c_out), "conv bias shape");
        let (ho, wo, k, s) = (shape.h_out(), shape.w_out(), shape.kernel, shape.stride);
        let mut out = Tensor::zeros(xt.rows, shape.out_len());
        for bi in 0..xt.rows {
            let xr = xt.row(bi);
            let orow = out.row_mut(bi);
            for co in 0..shape.c_out {
                let wr = wt.row(co);
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = bt.data[co];
                        for ci in 0..shape.c_in {
                            for ky in 0..k {
                                let xo = (ci * shape.h_in + oy * s + ky) * shape.w_in + ox * s;
                                let wo_ = (ci * k + ky) * k;
                                for kx in 0..k {
                                    acc += xr[xo + kx] * wr[wo_ + kx];
                                }
                            }
                        }
                        orow[(co * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        self.push(out, Op::Conv2d(x, w, b, shape))
    }

    pub fn max_pool2(&mut self, x: Var, shape: PoolShape) -> Var {
        let xt = self.value(x);
        assert_eq!(xt.cols, shape.c * shape.h_in * shape.w_in, "pool input size");
        let (ho, wo) = (shape.h_out(), shape.w_out());
        let mut out = Tensor::zeros(xt.rows, shape.out_len());
        let mut arg = vec![0usize; xt.rows * shape.out_len()];
        for bi in 0..xt.rows {
            let xr = xt.row(bi);
            for c in 0..shape.c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best = f64::NEG_INFINITY;
                        let mut bidx = 0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = (c * shape.h_in + 2 * oy + dy) * shape.w_in + 2 * ox + dx;
                                if xr[i] > best {
                                    best = xr[i];
                                    bidx = i;
                                }
                            }
                        }
                        let o = (c * ho + oy) * wo + ox;
                        out.data[bi * shape.out_len() + o] = best;
                        arg[bi * shape.out_len() + o] = bidx;
                    }
                }
            }
        }
        self.push(out, Op::MaxPool(x, shape, arg))
    }

    /// Reverse pass from a `1 x 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::Contract("backward called before any forward pass".into()));
        }
        let lt = self.value(loss);
        if lt.rows != 1 || lt.cols != 1 {
            return Err(Error::Contract(format!("loss must be scalar, got {}x{}", lt.rows, lt.cols)));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::zeros_like(self.params);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>], out: &mut Gradients) {
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(e) => {
                for (a, b) in e.data.iter_mut().zip(&t.data) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(t),
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let map = |v: Var, f: &dyn Fn(f64, f64, f64) -> f64| {
            // f(upstream, input, output)
            let x = val(v);
            Tensor {
                rows: x.rows,
                cols: x.cols,
                data: g
                    .data
                    .iter()
                    .zip(&x.data)
                    .zip(&node.value.data)
                    .map(|((&gi, &xi), &yi)| f(gi, xi, yi))
                    .collect(),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param(idx) => {
                for (a, b) in out.grads[*idx].iter_mut().zip(&g.data) {
                    *a += b;
                }
            }
            Op::Affine(x, w, b) => {
                let (xt, wt) = (val(*x), val(*w));
                acc(*x, matmul_bt(g, wt));
                acc(*w, matmul_at(xt, g));
                let mut gb = Tensor::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (a, v) in gb.data.iter_mut().zip(g.row(r)) {
                        *a += v;
                    }
                }
                acc(*b, gb);
            }
            Op::MatMul(a, b) => {
                let (at, bt) = (val(*a), val(*b));
                acc(*a, matmul_bt(g, bt));
                acc(*b, matmul_at(at, g));
            }
            Op::Add(a, b, k) | Op::Sub(a, b, k) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                acc(*a, g.clone());
                let bt = val(*b);
                let mut gb = Tensor::zeros(bt.rows, bt.cols);
                for (i, &gi) in g.data.iter().enumerate() {
                    gb.data[bindex(*k, g.cols, i)] += sign * gi;
                }
                acc(*b, gb);
            }
            Op::Mul(a, b, k) => {
                let (at, bt) = (val(*a), val(*b));
                let mut ga = Tensor::zeros(at.rows, at.cols);
                let mut gb = Tensor::zeros(bt.rows, bt.cols);
                for (i, &gi) in g.data.iter().enumerate() {
                    let j = bindex(*k, g.cols, i);
                    ga.data[i] = gi * bt.data[j];
                    gb.data[j] += gi * at.data[i];
                }
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::Scale(a, s) => {
                let s = *s;
                acc(*a, map(*a, &|gi, _, _| gi * s));
            }
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Celu(a) => acc(*a, map(*a, &|gi, x, y| if x >= 0.0 { gi } else { gi * (y + 1.0) })),
            Op::Sigmoid(a) => acc(*a, map(*a, &|gi, _, y| gi * y * (1.0 - y))),
            Op::Tanh(a) => acc(*a, map(*a, &|gi, _, y| gi * (1.0 - y * y))),
            Op::Exp(a) => acc(*a, map(*a, &|gi, _, y| gi * y)),
            Op::Log(a) => acc(*a, map(*a, &|gi, x, _| gi / x)),
            Op::Abs(a) => acc(*a, map(*a, &|gi, x, _| gi * sign0(x))),
            Op::Square(a) => acc(*a, map(*a, &|gi, x, _| 2.0 * gi * x)),
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                acc(*a, map(*a, &|gi, x, _| if x >= lo && x <= hi { gi } else { 0.0 }));
            }
            Op::Minimum(a, b) => {
                let (at, bt) = (val(*a), val(*b));
                let mut ga = Tensor::zeros(at.rows, at.cols);
                let mut gb = Tensor::zeros(bt.rows, bt.cols);
                for (i, &gi) in g.data.iter().enumerate() {
                    if at.data[i] <= bt.data[i] {
                        ga.data[i] = gi;
                    } else {
                        gb.data[i] = gi;
                    }
                }
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let c = val(p).cols;
                    let mut gp = Tensor::zeros(g.rows, c);
                    for r in 0..g.rows {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + c]);
                    }
                    acc(p, gp);
                    off += c;
                }
            }
            Op::SliceCols(a, start) => {
                let at = val(*a);
                let mut ga = Tensor::zeros(at.rows, at.cols);
                for r in 0..g.rows {
                    ga.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                }
                acc(*a, ga);
            }
            Op::SumCols(a) => {
                let at = val(*a);
                let mut ga = Tensor::zeros(at.rows, at.cols);
                for r in 0..at.rows {
                    ga.row_mut(r).fill(g.data[r]);
                }
                acc(*a, ga);
            }
            Op::SumAll(a) => {
                let at = val(*a);
                acc(*a, Tensor::filled(at.rows, at.cols, g.data[0]));
            }
            Op::MeanAll(a) => {
                let at = val(*a);
                let n = at.data.len() as f64;
                acc(*a, Tensor::filled(at.rows, at.cols, g.data[0] / n));
            }
            Op::Conv2d(x, w, b, shape) => {
                let (xt, wt) = (val(*x), val(*w));
                let (ho, wo, k, s) = (shape.h_out(), shape.w_out(), shape.kernel, shape.stride);
                let mut gx = Tensor::zeros(xt.rows, xt.cols);
                let mut gw = Tensor::zeros(wt.rows, wt.cols);
                let mut gb = Tensor::zeros(1, shape.c_out);
                for bi in 0..xt.rows {
                    let xr = xt.row(bi);
                    let gr = g.row(bi);
                    for co in 0..shape.c_out {
                        for oy in 0..ho {
                            for ox in 0..wo {
                                let go = gr[(co * ho + oy) * wo + ox];
                                if go == 0.0 {
                                    continue;
                                }
                                gb.data[co] += go;
                                for ci in 0..shape.c_in {
                                    for ky in 0..k {
                                        let xo = (ci * shape.h_in + oy * s + ky) * shape.w_in + ox * s;
                                        let wo_ = co * wt.cols + (ci * k + ky) * k;
                                        for kx in 0..k {
                                            gw.data[wo_ + kx] += go * xr[xo + kx];
                                            gx.data[bi * xt.cols + xo + kx] += go * wt.data[wo_ + kx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                acc(*x, gx);
                acc(*w, gw);
                acc(*b, gb);
            }
            Op::MaxPool(x, shape, arg) => {
                let xt = val(*x);
                let mut gx = Tensor::zeros(xt.rows, xt.cols);
                let n = shape.out_len();
                for bi in 0..xt.rows {
                    for o in 0..n {
                        gx.data[bi * xt.cols + arg[bi * n + o]] += g.data[bi * n + o];
                    }
                }
                acc(*x, gx);
            }
        }
    }
}

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub fn celu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
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

/// `out += a b`.
fn matmul_into(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    let n = b.cols;
    for r in 0..a.rows {
        let orow = &mut out.data[r * n..(r + 1) * n];
        for (i, &av) in a.row(r).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `g b^T`.
fn matmul_bt(g: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(g.rows, b.rows);
    for r in 0..g.rows {
        let gr = g.row(r);
        for i in 0..b.rows {
            out.data[r * b.rows + i] = gr.iter().zip(b.row(i)).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a^T g`.
fn matmul_at(a: &Tensor, g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.cols, g.cols);
    for r in 0..a.rows {
        let gr = g.row(r);
        for (i, &av) in a.row(r).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out.data[i * g.cols..(i + 1) * g.cols];
            for (o, gv) in orow.iter_mut().zip(gr) {
                *o += av * gv;
            }
        }
    }
    out
}
