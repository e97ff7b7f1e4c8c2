//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so a reverse sweep over the tape visits every node after
//! all of its consumers.

use crate::error::{Error, Result};

use super::gemm::gemm;
use super::params::ParameterSet;
use super::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Softplus,
}

enum Op {
    Input,
    Param(usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Dense { x: Var, w: Var, b: Var },
    Conv {
        x: Var,
        w: Var,
        b: Var,
        dilation: usize,
        col: Vec<f64>,
    },
    Unary(Var, Unary),
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    Mse(Var, Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Reshape(Var),
    Gaussian { mean: Var, logvar: Var, noise: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar loss, aligned with a [`ParameterSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Gradients(params.iter().map(|(_, t)| Tensor::zeros(&t.shape)).collect())
    }

    /// First parameter holding a non-finite gradient entry.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.0
            .iter()
            .position(|t| t.data.iter().any(|x| !x.is_finite()))
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, false)
    }

    /// Trainable leaf holding a copy of parameter `index`.
    pub fn param(&mut self, params: &ParameterSet, index: usize) -> Var {
        self.push(params.get(index).clone(), Op::Param(index), true)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let data = self.value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor { shape, data }, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut t = self.value(a).clone();
        t.data.iter_mut().for_each(|x| *x *= c);
        let ng = self.ng(a);
        self.push(t, Op::Scale(a, c), ng)
    }

    /// `a + c` elementwise.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let mut t = self.value(a).clone();
        t.data.iter_mut().for_each(|x| *x += c);
        let ng = self.ng(a);
        self.push(t, Op::Offset(a), ng)
    }

    /// `x · w + b` for `x: [n, in]`, `w: [in, out]`, `b: [out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::Shape {
                op: "dense",
                left: xs.to_vec(),
                right: ws.to_vec(),
            });
        }
        if bs != [ws[1]] {
            return Err(Error::Shape {
                op: "dense bias",
                left: ws.to_vec(),
                right: bs.to_vec(),
            });
        }
        let (n, din, dout) = (xs[0], xs[1], ws[1]);
        let mut out = Vec::with_capacity(n * dout);
        let bias = &self.value(b).data;
        for _ in 0..n {
            out.extend_from_slice(bias);
        }
        gemm(n, din, dout, &self.value(x).data, false, &self.value(w).data, false, 1.0, &mut out);
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(
            Tensor {
                shape: vec![n, dout],
                data: out,
            },
            Op::Dense { x, w, b },
            ng,
        ))
    }

    /// Causal dilated 1-D convolution.
    ///
    /// `x: [batch, time, c_in]`, `w: [kernel, c_in, c_out]`, `b: [c_out]`.
    /// Tap `k` reads input time `t - (kernel - 1 - k) * dilation`; positions
    /// before the series start read zero, so output at `t` depends only on
    /// inputs at times `<= t`.
    pub fn conv1d_causal(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 3 || ws.len() != 3 || xs[2] != ws[1] || dilation == 0 {
            return Err(Error::Shape {
                op: "conv1d_causal",
                left: xs.to_vec(),
                right: ws.to_vec(),
            });
        }
        if bs != [ws[2]] {
            return Err(Error::Shape {
                op: "conv1d_causal bias",
                left: ws.to_vec(),
                right: bs.to_vec(),
            });
        }
        let (nb, nt, cin) = (xs[0], xs[1], xs[2]);
        let (kern, cout) = (ws[0], ws[2]);
        let width = kern * cin;
        let xv = &self.value(x).data;
        let mut col = vec![0.0; nb * nt * width];
        for bi in 0..nb {
            for t in 0..nt {
                let row = &mut col[(bi * nt + t) * width..(bi * nt + t + 1) * width];
                for k in 0..kern {
                    let back = (kern - 1 - k) * dilation;
                    if t >= back {
                        let src = (bi * nt + t - back) * cin;
                        row[k * cin..(k + 1) * cin].copy_from_slice(&xv[src..src + cin]);
                    }
                }
            }
        }
        let mut out = Vec::with_capacity(nb * nt * cout);
        let bias = &self.value(b).data;
        for _ in 0..nb * nt {
            out.extend_from_slice(bias);
        }
        gemm(nb * nt, width, cout, &col, false, &self.value(w).data, false, 1.0, &mut out);
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(
            Tensor {
                shape: vec![nb, nt, cout],
                data: out,
            },
            Op::Conv {
                x,
                w,
                b,
                dilation,
                col,
            },
            ng,
        ))
    }

    fn unary(&mut self, a: Var, kind: Unary) -> Var {
        let f: fn(f64) -> f64 = match kind {
            Unary::Relu => |x| x.max(0.0),
            Unary::Sigmoid => sigmoid,
            Unary::Tanh => f64::tanh,
            Unary::Exp => f64::exp,
            Unary::Log => f64::ln,
            Unary::Softplus => softplus,
        };
        let v = self.value(a);
        let t = Tensor {
            shape: v.shape.clone(),
            data: v.data.iter().map(|x| f(*x)).collect(),
        };
        let ng = self.ng(a);
        self.push(t, Op::Unary(a, kind), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Log)
    }

    /// `log(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Softplus)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data.iter().sum::<f64>() / v.len() as f64;
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Mean(a), ng)
    }

    /// Sums over the last axis: `[.., m] -> [..]`.
    pub fn sum_last(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let Some((&m, lead)) = v.shape.split_last() else {
            return Err(Error::Shape {
                op: "sum_last",
                left: vec![],
                right: vec![],
            });
        };
        let data = if m == 0 {
            vec![0.0; lead.iter().product()]
        } else {
            v.data.chunks(m).map(|c| c.iter().sum()).collect()
        };
        let t = Tensor {
            shape: lead.to_vec(),
            data,
        };
        let ng = self.ng(a);
        Ok(self.push(t, Op::SumLast(a), ng))
    }

    /// Mean squared difference, a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let s = va
            .data
            .iter()
            .zip(&vb.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / va.len() as f64;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::scalar(s), Op::Mse(a, b), ng))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Shape {
            op: "concat",
            left: vec![],
            right: vec![],
        })?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::Shape {
                op: "concat axis",
                left: base,
                right: vec![axis],
            });
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::Shape {
                    op: "concat",
                    left: base,
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let len = v.shape[axis] * inner;
                data.extend_from_slice(&v.data[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(
            Tensor { shape, data },
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            ng,
        ))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::Shape {
                op: "slice",
                left: shape,
                right: vec![axis, start, len],
            });
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let v = &self.value(x).data;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&v[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let ng = self.ng(x);
        Ok(self.push(
            Tensor {
                shape: out_shape,
                data,
            },
            Op::Slice { x, axis, start },
            ng,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if shape.iter().product::<usize>() != v.len() {
            return Err(Error::Shape {
                op: "reshape",
                left: v.shape.clone(),
                right: shape.to_vec(),
            });
        }
        let t = Tensor {
            shape: shape.to_vec(),
            data: v.data.clone(),
        };
        let ng = self.ng(x);
        Ok(self.push(t, Op::Reshape(x), ng))
    }

    /// Reparameterized draw `mean + exp(logvar / 2) * noise`.
    pub fn gaussian_sample(&mut self, mean: Var, logvar: Var, noise: Vec<f64>) -> Result<Var> {
        self.same_shape("gaussian_sample", mean, logvar)?;
        if noise.len() != self.value(mean).len() {
            return Err(Error::Shape {
                op: "gaussian_sample noise",
                left: self.shape(mean).to_vec(),
                right: vec![noise.len()],
            });
        }
        let data = self.value(mean)
            .data
            .iter()
            .zip(&self.value(logvar).data)
            .zip(&noise)
            .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
            .collect();
        let shape = self.shape(mean).to_vec();
        let ng = self.ng(mean) || self.ng(logvar);
        Ok(self.push(
            Tensor { shape, data },
            Op::Gaussian {
                mean,
                logvar,
                noise,
            },
            ng,
        ))
    }

    /// Reverse sweep from the scalar `root`.
    pub fn backward(&self, root: Var, params: &ParameterSet) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::Shape {
                op: "backward (root must be scalar)",
                left: self.shape(root).to_vec(),
                right: vec![],
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);
        let mut out = Gradients::zeros_like(params);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
                f(slot);
            };
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    for (o, x) in out.0[*p].data.iter_mut().zip(&g) {
                        *o += x;
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, &mut |s| s.iter_mut().zip(&g).for_each(|(s, x)| *s += x));
                    acc(*b, &mut |s| s.iter_mut().zip(&g).for_each(|(s, x)| *s += x));
                }
                Op::Sub(a, b) => {
                    acc(*a, &mut |s| s.iter_mut().zip(&g).for_each(|(s, x)| *s += x));
                    acc(*b, &mut |s| s.iter_mut().zip(&g).for_each(|(s, x)| *s -= x));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                    acc(*a, &mut |s| {
                        for ((s, x), y) in s.iter_mut().zip(&g).zip(vb) {
                            *s += x * y;
                        }
                    });
                    acc(*b, &mut |s| {
                        for ((s, x), y) in s.iter_mut().zip(&g).zip(va) {
                            *s += x * y;
                        }
                    });
                }
                Op::Scale(a, c) => {
                    acc(*a, &mut |s| s.iter_mut().zip(&g).for_each(|(s, x)| *s += c * x));
                }
                Op::Offset(a) | Op::Reshape(a) => {
                    acc(*a, &mut |s| s.iter_mut().zip(&g).for_each(|(s, x)| *s += x));
                }
                Op::Dense { x, w, b } => {
                    let xs = self.shape(*x);
                    let (n, din) = (xs[0], xs[1]);
                    let dout = self.shape(*w)[1];
                    let (xv, wv) = (&self.value(*x).data, &self.value(*w).data);
                    acc(*w, &mut |s| gemm(din, n, dout, xv, true, &g, false, 1.0, s));
                    acc(*b, &mut |s| {
                        for row in g.chunks(dout) {
                            s.iter_mut().zip(row).for_each(|(s, x)| *s += x);
                        }
                    });
                    acc(*x, &mut |s| gemm(n, dout, din, &g, false, wv, true, 1.0, s));
                }
                Op::Conv {
                    x,
                    w,
                    b,
                    dilation,
                    col,
                } => {
                    let dilation = *dilation;
                    let xs = self.shape(*x);
                    let (nb, nt, cin) = (xs[0], xs[1], xs[2]);
                    let ws = self.shape(*w);
                    let (kern, cout) = (ws[0], ws[2]);
                    let width = kern * cin;
                    let rows = nb * nt;
                    let wv = &self.value(*w).data;
                    acc(*w, &mut |s| gemm(width, rows, cout, col, true, &g, false, 1.0, s));
                    acc(*b, &mut |s| {
                        for row in g.chunks(cout) {
                            s.iter_mut().zip(row).for_each(|(s, x)| *s += x);
                        }
                    });
                    if self.ng(*x) {
                        let mut dcol = vec![0.0; rows * width];
                        gemm(rows, cout, width, &g, false, wv, true, 0.0, &mut dcol);
                        acc(*x, &mut |s| {
                            for bi in 0..nb {
                                for t in 0..nt {
                                    let row = &dcol[(bi * nt + t) * width..(bi * nt + t + 1) * width];
                                    for k in 0..kern {
                                        let back = (kern - 1 - k) * dilation;
                                        if t >= back {
                                            let dst = (bi * nt + t - back) * cin;
                                            for c in 0..cin {
                                                s[dst + c] += row[k * cin + c];
                                            }
                                        }
                                    }
                                }
                            }
                        });
                    }
                }
                Op::Unary(a, kind) => {
                    let xin = &self.value(*a).data;
                    let y = &node.value.data;
                    let kind = *kind;
                    acc(*a, &mut |s| {
                        for j in 0..s.len() {
                            let d = match kind {
                                Unary::Relu => {
                                    if xin[j] > 0.0 {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                Unary::Sigmoid => y[j] * (1.0 - y[j]),
                                Unary::Tanh => 1.0 - y[j] * y[j],
                                Unary::Exp => y[j],
                                Unary::Log => 1.0 / xin[j],
                                Unary::Softplus => sigmoid(xin[j]),
                            };
                            s[j] += g[j] * d;
                        }
                    });
                }
                Op::Sum(a) => {
                    acc(*a, &mut |s| s.iter_mut().for_each(|s| *s += g[0]));
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len() as f64;
                    acc(*a, &mut |s| s.iter_mut().for_each(|s| *s += g[0] / n));
                }
                Op::SumLast(a) => {
                    let m = *self.shape(*a).last().unwrap_or(&1);
                    acc(*a, &mut |s| {
                        if m > 0 {
                            for (chunk, gi) in s.chunks_mut(m).zip(&g) {
                                chunk.iter_mut().for_each(|s| *s += gi);
                            }
                        }
                    });
                }
                Op::Mse(a, b) => {
                    let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                    let c = 2.0 * g[0] / va.len() as f64;
                    acc(*a, &mut |s| {
                        for ((s, x), y) in s.iter_mut().zip(va).zip(vb) {
                            *s += c * (x - y);
                        }
                    });
                    acc(*b, &mut |s| {
                        for ((s, x), y) in s.iter_mut().zip(va).zip(vb) {
                            *s -= c * (x - y);
                        }
                    });
                }
                Op::Concat { parts, axis } => {
                    let (outer, total, inner) = split_axis(&node.value.shape, *axis);
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.shape(p)[*axis];
                        acc(p, &mut |s| {
                            for o in 0..outer {
                                let src = (o * total + offset) * inner;
                                let dst = o * n * inner;
                                for j in 0..n * inner {
                                    s[dst + j] += g[src + j];
                                }
                            }
                        });
                        offset += n;
                    }
                }
                Op::Slice { x, axis, start } => {
                    let (outer, n, inner) = split_axis(self.shape(*x), *axis);
                    let len = node.value.shape[*axis];
                    acc(*x, &mut |s| {
                        for o in 0..outer {
                            let dst = (o * n + start) * inner;
                            let src = o * len * inner;
                            for j in 0..len * inner {
                                s[dst + j] += g[src + j];
                            }
                        }
                    });
                }
                Op::Gaussian {
                    mean,
                    logvar,
                    noise,
                } => {
                    let lv = &self.value(*logvar).data;
                    acc(*mean, &mut |s| s.iter_mut().zip(&g).for_each(|(s, x)| *s += x));
                    acc(*logvar, &mut |s| {
                        for j in 0..s.len() {
                            s[j] += g[j] * 0.5 * (0.5 * lv[j]).exp() * noise[j];
                        }
                    });
                }
            }
        }
        Ok(out)
    }

}
