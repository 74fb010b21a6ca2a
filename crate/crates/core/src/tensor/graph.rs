use std::sync::Arc;

use super::conv::{self, ConvGeom, Padding};
use super::{sigmoid, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Reshape(Var),
    SliceLast { x: Var, start: usize },
    ConcatLast(Vec<Var>),
    Sum(Var),
    Mean(Var),
    MatMul(Var, Var),
    Conv {
        x: Var,
        k: Var,
        geom: ConvGeom,
        taps: Vec<(usize, usize)>,
        mask: Option<Arc<Tensor>>,
        cols: Vec<f64>,
    },
    ConvT {
        x: Var,
        k: Var,
        geom: ConvGeom,
        taps: Vec<(usize, usize)>,
    },
    LogSumExp(Var),
    Softmax(Var),
    Pick { x: Var, idx: Vec<usize> },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    tracked: bool,
}

/// Define-by-run tape. Rebuilt for every forward pass; `backward` walks the
/// recorded nodes in exact reverse order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

#[inline]
pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Constant input; gradients are not accumulated for it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Trainable leaf; receives a gradient on `backward`.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Gradient as a tensor shaped like the value (zeros when unreached).
    pub fn grad_tensor(&self, v: Var) -> Tensor {
        let shape = self.shape(v).to_vec();
        match self.grad(v) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("grad shape"),
            None => Tensor::zeros(&shape),
        }
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(xv.shape().to_vec(), data).expect("unary shape");
        let tracked = self.tracked(x);
        self.push(t, op, tracked)
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return shape_err(name, av.shape(), bv.shape());
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(t, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    /// Adds a `[C]` bias along the trailing axis of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (&self.nodes[x.0].value, &self.nodes[b.0].value);
        let c = xv.last_dim();
        if bv.shape() != [c] {
            return shape_err("add_bias", xv.shape(), bv.shape());
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(c) {
            for (v, bb) in row.iter_mut().zip(bv.data()) {
                *v += bb;
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        let tracked = self.tracked(x) || self.tracked(b);
        Ok(self.push(t, Op::AddBias(x, b), tracked))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, relu, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.nodes[x.0].value.clone().reshape(shape)?;
        let tracked = self.tracked(x);
        Ok(self.push(t, Op::Reshape(x), tracked))
    }

    /// `x[..., start..start+len]`.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let c = xv.last_dim();
        if start + len > c {
            return shape_err("slice_last", xv.shape(), &[start, len]);
        }
        let mut data = Vec::with_capacity(xv.len() / c * len);
        for row in xv.data().chunks(c) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let t = Tensor::new(shape, data)?;
        let tracked = self.tracked(x);
        Ok(self.push(t, Op::SliceLast { x, start }, tracked))
    }

    pub fn concat_last(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self.shape(xs[0]).to_vec();
        let lead = &first[..first.len() - 1];
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            if &s[..s.len() - 1] != lead {
                return shape_err("concat_last", &first, s);
            }
            total += s[s.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &v in xs {
                let t = &self.nodes[v.0].value;
                let c = t.last_dim();
                data.extend_from_slice(&t.data()[r * c..(r + 1) * c]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let t = Tensor::new(shape, data)?;
        let tracked = xs.iter().any(|&v| self.tracked(v));
        Ok(self.push(t, Op::ConcatLast(xs.to_vec()), tracked))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data().iter().sum();
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(s), Op::Sum(x), tracked)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(s), Op::Mean(x), tracked)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (&[m, k], &[k2, n]) = (av.shape(), bv.shape()) else {
            return shape_err("matmul", av.shape(), bv.shape());
        };
        if k != k2 {
            return shape_err("matmul", av.shape(), bv.shape());
        }
        let mut out = vec![0.0; m * n];
        conv::gemm(m, k, n, av.data(), false, bv.data(), false, 0.0, &mut out);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), tracked))
    }

    /// Cross-correlation of `x: [N,H,W,Cin]` with `k: [kh,kw,Cin,Cout]`.
    /// When `mask` is given the effective kernel is `k * mask` in both the
    /// forward and the backward pass.
    pub fn conv2d(
        &mut self,
        x: Var,
        k: Var,
        stride: usize,
        padding: Padding,
        mask: Option<Arc<Tensor>>,
    ) -> Result<Var> {
        let (xv, kv) = (&self.nodes[x.0].value, &self.nodes[k.0].value);
        let (out, geom, taps, cols) = conv::conv2d_parts(xv, kv, stride, padding, mask.as_deref())?;
        let tracked = self.tracked(x) || self.tracked(k);
        // Columns are only needed for the kernel gradient.
        let cols = if self.tracked(k) { cols } else { Vec::new() };
        Ok(self.push(
            out,
            Op::Conv {
                x,
                k,
                geom,
                taps,
                mask,
                cols,
            },
            tracked,
        ))
    }

    /// Transposed convolution with kernel `[kh,kw,Cout,Cin]`; spatial dims
    /// are multiplied by `stride`.
    pub fn transposed_conv2d(&mut self, x: Var, k: Var, stride: usize) -> Result<Var> {
        let (xv, kv) = (&self.nodes[x.0].value, &self.nodes[k.0].value);
        let geom = conv::transposed_geom(xv.shape(), kv.shape(), stride)?;
        let out = conv::transposed_conv2d(xv, kv, stride)?;
        let taps = conv::active_taps(geom.kh, geom.kw, None);
        let tracked = self.tracked(x) || self.tracked(k);
        Ok(self.push(out, Op::ConvT { x, k, geom, taps }, tracked))
    }

    /// Log-sum-exp over the trailing axis; the axis is removed.
    pub fn log_sum_exp(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let k = xv.last_dim();
        let data: Vec<f64> = xv.data().chunks(k).map(super::log_sum_exp_slice).collect();
        let shape = xv.shape()[..xv.shape().len().saturating_sub(1)].to_vec();
        let t = Tensor::new(shape, data).expect("lse shape");
        let tracked = self.tracked(x);
        self.push(t, Op::LogSumExp(x), tracked)
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let k = xv.last_dim();
        let mut data = vec![0.0; xv.len()];
        for (o, row) in data.chunks_mut(k).zip(xv.data().chunks(k)) {
            super::softmax_into(row, o);
        }
        let t = Tensor::new(xv.shape().to_vec(), data).expect("softmax shape");
        let tracked = self.tracked(x);
        self.push(t, Op::Softmax(x), tracked)
    }

    /// Selects `x[r, idx[r]]` for every row of the trailing axis.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let k = xv.last_dim();
        let rows = xv.len() / k.max(1);
        if idx.len() != rows {
            return shape_err("pick", xv.shape(), &[idx.len()]);
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= k) {
            return Err(Error::Data(format!("target level {bad} out of range for K={k}")));
        }
        let data = idx.iter().enumerate().map(|(r, &i)| xv.data()[r * k + i]).collect();
        let shape = xv.shape()[..xv.shape().len() - 1].to_vec();
        let t = Tensor::new(shape, data)?;
        let tracked = self.tracked(x);
        Ok(self.push(
            t,
            Op::Pick {
                x,
                idx: idx.to_vec(),
            },
            tracked,
        ))
    }

    /// Mean over rows of `logsumexp(x_r) - x_r[target_r]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let picked = self.pick(logits, targets)?;
        let lse = self.log_sum_exp(logits);
        let nll = self.sub(lse, picked)?;
        Ok(self.mean(nll))
    }

    /// Mean squared difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Reverse sweep from a scalar `loss`. Leaves keep their gradients;
    /// intermediate gradients are retained as well.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return shape_err("backward", self.shape(loss), &[]);
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let contribs = self.node_backward(i, &g);
            self.nodes[i].grad = Some(g);
            for (v, c) in contribs {
                let node = &mut self.nodes[v.0];
                if !node.tracked {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, b)| *a += b),
                    None => node.grad = Some(c),
                }
            }
        }
        Ok(())
    }

    fn node_backward(&self, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let y = node.value.data();
        match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|v| -v).collect())],
            Op::Mul(a, b) => {
                let ga = g.iter().zip(val(*b).data()).map(|(g, b)| g * b).collect();
                let gb = g.iter().zip(val(*a).data()).map(|(g, a)| g * a).collect();
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(x, c) => vec![(*x, g.iter().map(|v| v * c).collect())],
            Op::AddBias(x, b) => {
                let c = val(*b).len();
                let mut gb = vec![0.0; c];
                for row in g.chunks(c) {
                    gb.iter_mut().zip(row).for_each(|(a, r)| *a += r);
                }
                vec![(*x, g.to_vec()), (*b, gb)]
            }
            Op::Relu(x) => {
                let gx = g.iter().zip(val(*x).data()).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect();
                vec![(*x, gx)]
            }
            Op::Tanh(x) => vec![(*x, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect())],
            Op::Sigmoid(x) => vec![(*x, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect())],
            Op::Reshape(x) => vec![(*x, g.to_vec())],
            Op::SliceLast { x, start } => {
                let xv = val(*x);
                let c = xv.last_dim();
                let len = node.value.last_dim();
                let mut gx = vec![0.0; xv.len()];
                for (dst, src) in gx.chunks_mut(c).zip(g.chunks(len)) {
                    dst[*start..start + len].copy_from_slice(src);
                }
                vec![(*x, gx)]
            }
            Op::ConcatLast(xs) => {
                let total = node.value.last_dim();
                let rows = g.len() / total;
                let mut out = Vec::with_capacity(xs.len());
                let mut off = 0;
                for &v in xs {
                    let c = val(v).last_dim();
                    let mut gx = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        gx.extend_from_slice(&g[r * total + off..r * total + off + c]);
                    }
                    off += c;
                    out.push((v, gx));
                }
                out
            }
            Op::Sum(x) => vec![(*x, vec![g[0]; val(*x).len()])],
            Op::Mean(x) => {
                let n = val(*x).len();
                vec![(*x, vec![g[0] / n as f64; n])]
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let mut ga = vec![0.0; m * k];
                conv::gemm(m, n, k, g, false, bv.data(), true, 0.0, &mut ga);
                let mut gb = vec![0.0; k * n];
                conv::gemm(k, m, n, av.data(), true, g, false, 0.0, &mut gb);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Conv {
                x,
                k,
                geom,
                taps,
                mask,
                cols,
            } => {
                let kv = val(*k);
                let width = taps.len() * geom.cin;
                let mut out = Vec::with_capacity(2);
                if self.tracked(*x) {
                    let wmat = conv::kernel_matrix(kv, mask.as_deref(), taps);
                    let mut gcols = vec![0.0; geom.rows() * width];
                    conv::gemm(geom.rows(), geom.cout, width, g, false, &wmat, true, 0.0, &mut gcols);
                    let mut gx = vec![0.0; val(*x).len()];
                    conv::col2im(&gcols, geom, taps, &mut gx);
                    out.push((*x, gx));
                }
                if self.tracked(*k) {
                    let mut gw = vec![0.0; width * geom.cout];
                    conv::gemm(width, geom.rows(), geom.cout, cols, true, g, false, 0.0, &mut gw);
                    out.push((*k, conv::scatter_kernel_grad(&gw, kv.shape(), mask.as_deref(), taps)));
                }
                out
            }
            Op::ConvT { x, k, geom, taps } => {
                let (xv, kv) = (val(*x), val(*k));
                let width = taps.len() * geom.cin;
                let gcols = conv::im2col(g, geom, taps);
                let wmat = conv::kernel_matrix(kv, None, taps);
                let cin_t = geom.cout;
                let mut out = Vec::with_capacity(2);
                if self.tracked(*x) {
                    let mut gx = vec![0.0; xv.len()];
                    conv::gemm(geom.rows(), width, cin_t, &gcols, false, &wmat, false, 0.0, &mut gx);
                    out.push((*x, gx));
                }
                if self.tracked(*k) {
                    let mut gw = vec![0.0; width * cin_t];
                    conv::gemm(width, geom.rows(), cin_t, &gcols, true, xv.data(), false, 0.0, &mut gw);
                    out.push((*k, conv::scatter_kernel_grad(&gw, kv.shape(), None, taps)));
                }
                out
            }
            Op::LogSumExp(x) => {
                let xv = val(*x);
                let k = xv.last_dim();
                let mut gx = vec![0.0; xv.len()];
                for (r, (dst, src)) in gx.chunks_mut(k).zip(xv.data().chunks(k)).enumerate() {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = g[r] * (s - y[r]).exp();
                    }
                }
                vec![(*x, gx)]
            }
            Op::Softmax(x) => {
                let k = node.value.last_dim();
                let mut gx = vec![0.0; y.len()];
                for ((dst, yr), gr) in gx.chunks_mut(k).zip(y.chunks(k)).zip(g.chunks(k)) {
                    let dotp: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, yy), gg) in dst.iter_mut().zip(yr).zip(gr) {
                        *d = yy * (gg - dotp);
                    }
                }
                vec![(*x, gx)]
            }
            Op::Pick { x, idx } => {
                let xv = val(*x);
                let k = xv.last_dim();
                let mut gx = vec![0.0; xv.len()];
                for (r, &i) in idx.iter().enumerate() {
                    gx[r * k + i] = g[r];
                }
                vec![(*x, gx)]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_through_shared_operand() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(vec![2], vec![3.0, -2.0]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0, -4.0]);
    }

    #[test]
    fn constants_receive_no_grad() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::full(&[3], 2.0));
        let p = g.param(Tensor::full(&[3], 1.5));
        let m = g.mul(c, p).unwrap();
        let s = g.mean(m);
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        for v in g.grad(p).unwrap() {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let p = g.param(Tensor::zeros(&[2]));
        assert!(g.backward(p).is_err());
    }

    #[test]
    fn pick_rejects_out_of_range() {
        let mut g = Graph::new();
        let p = g.param(Tensor::zeros(&[2, 3]));
        assert!(matches!(g.pick(p, &[0, 3]), Err(Error::Data(_))));
        assert!(g.pick(p, &[0]).is_err());
    }

    #[test]
    fn slice_and_concat_roundtrip() {
        let mut g = Graph::new();
        let p = g.param(Tensor::from_fn(&[2, 5], |i| i as f64));
        let a = g.slice_last(p, 0, 2).unwrap();
        let b = g.slice_last(p, 2, 3).unwrap();
        let c = g.concat_last(&[a, b]).unwrap();
        assert_eq!(g.value(c), g.value(p));
        assert_eq!(g.value(b).data(), &[2.0, 3.0, 4.0, 7.0, 8.0, 9.0]);
    }
}
