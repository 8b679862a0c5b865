//! Tape-based reverse-mode differentiation over [`Tensor4`] values.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep over
//! the tape visits every consumer before its producers. Complex-valued
//! linear operators (FFTs, data consistency, temporal averaging) act on the
//! `[t][2][y][x]` embedding; their backward pass applies the adjoint to the
//! gradient `∂L/∂re + i·∂L/∂im`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fft::transform_axis_in_place;
use crate::nn::conv::{conv2d, conv2d_backward};
use crate::nn::tensor::Tensor4;
use crate::sampling::{KtMeasurement, SamplingMask};
use crate::xf::DcLambda;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, dilation: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    ConcatC(Var, Var),
    SwapNH(Var),
    SliceN(Var, usize),
    StackN(Vec<Var>),
    BroadcastN(Var),
    Fft2c { x: Var, inverse: bool },
    FftT { x: Var, inverse: bool },
    Dc { x: Var, meas: Arc<KtMeasurement>, lambda: DcLambda },
    TemporalAverage { x: Var, mask: Arc<SamplingMask> },
    Sum(Var),
    SumSquares(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor4,
    op: Op,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires them.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor4>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor4> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros shaped like `like` if nothing reached it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor4) -> Tensor4 {
        self.get(v).cloned().unwrap_or_else(|| Tensor4::zeros(like.dims()))
    }
}

fn complex_transform(t: &Tensor4, axes: &[usize], inverse: bool) -> Tensor4 {
    let [n, _, h, w] = t.dims();
    let mut z = t.to_complex();
    for &axis in axes {
        transform_axis_in_place(&mut z, [n, h, w], axis, inverse);
    }
    Tensor4::from_complex(t.dims(), &z)
}

fn require_complex(t: &Tensor4, what: &str) -> Result<()> {
    if t.dims()[1] != 2 {
        return Err(Error::DimensionMismatch(format!(
            "{what} expects [t][2][y][x], got {:?}",
            t.dims()
        )));
    }
    Ok(())
}

fn check_meas_dims(t: &Tensor4, meas: &KtMeasurement) -> Result<()> {
    let [ft, _, fy, fx] = t.dims();
    if [ft, fy, fx] != meas.dims() {
        return Err(Error::DimensionMismatch(format!(
            "tensor {:?} vs measurement {:?}",
            t.dims(),
            meas.dims()
        )));
    }
    Ok(())
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

    fn push(&mut self, value: Tensor4, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor4 {
        &self.nodes[v.0].value
    }

    /// Differentiable leaf.
    pub fn input(&mut self, t: Tensor4) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor4) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, dilation: usize) -> Result<Var> {
        let value = conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), dilation)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(value, Op::Conv2d { x, w, b, dilation }, rg))
    }

    fn same_dims(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).dims() != self.value(b).dims() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).dims(),
                self.value(b).dims()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims(a, b, "add")?;
        let value = self.value(a).zip_map(self.value(b), |p, q| p + q);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims(a, b, "sub")?;
        let value = self.value(a).zip_map(self.value(b), |p, q| p - q);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|v| v * factor);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn concat_c(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, db) = (self.value(a).dims(), self.value(b).dims());
        if [da[0], da[2], da[3]] != [db[0], db[2], db[3]] {
            return Err(Error::DimensionMismatch(format!("concat_c: {da:?} vs {db:?}")));
        }
        let value = Tensor4::concat_c(self.value(a), self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::ConcatC(a, b), rg))
    }

    pub fn swap_nh(&mut self, a: Var) -> Var {
        let value = self.value(a).swap_nh();
        let rg = self.rg(a);
        self.push(value, Op::SwapNH(a), rg)
    }

    pub fn slice_n(&mut self, a: Var, i: usize) -> Result<Var> {
        if i >= self.value(a).dims()[0] {
            return Err(Error::InvalidArgument(format!("slice index {i} out of range")));
        }
        let value = self.value(a).slice_n(i);
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceN(a, i), rg))
    }

    pub fn stack_n(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("stack of nothing".into()))?;
        let tail = self.value(*first).dims();
        if parts.iter().any(|p| self.value(*p).dims()[1..] != tail[1..]) {
            return Err(Error::DimensionMismatch("stack_n: item shapes differ".into()));
        }
        let refs: Vec<&Tensor4> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor4::stack_n(&refs);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::StackN(parts.to_vec()), rg))
    }

    /// Repeats a one-item tensor `n` times along `n`.
    pub fn broadcast_n(&mut self, a: Var, n: usize) -> Result<Var> {
        let src = self.value(a);
        if src.dims()[0] != 1 || n == 0 {
            return Err(Error::DimensionMismatch("broadcast_n expects one item".into()));
        }
        let refs = vec![src; n];
        let value = Tensor4::stack_n(&refs);
        let rg = self.rg(a);
        Ok(self.push(value, Op::BroadcastN(a), rg))
    }

    /// Per-frame centered 2D transform over (y, x).
    pub fn fft2c(&mut self, x: Var, inverse: bool) -> Result<Var> {
        require_complex(self.value(x), "fft2c")?;
        let value = complex_transform(self.value(x), &[1, 2], inverse);
        let rg = self.rg(x);
        Ok(self.push(value, Op::Fft2c { x, inverse }, rg))
    }

    /// Centered transform along the item axis (time ↔ temporal frequency).
    pub fn fft_t(&mut self, x: Var, inverse: bool) -> Result<Var> {
        require_complex(self.value(x), "fft_t")?;
        let value = complex_transform(self.value(x), &[0], inverse);
        let rg = self.rg(x);
        Ok(self.push(value, Op::FftT { x, inverse }, rg))
    }

    /// Data consistency in k-space against `meas`.
    pub fn data_consistency(&mut self, x: Var, meas: &Arc<KtMeasurement>, lambda: DcLambda) -> Result<Var> {
        let xv = self.value(x);
        require_complex(xv, "data consistency")?;
        check_meas_dims(xv, meas)?;
        let [t, _, h, w] = xv.dims();
        let plane = h * w;
        let acq = meas.kspace();
        let mask = meas.mask();
        let mut value = xv.clone();
        let d = value.data_mut();
        for f in 0..t {
            for col in (0..w).filter(|&c| mask.is_sampled(f, c)) {
                for row in 0..h {
                    let i = row * w + col;
                    let re = f * 2 * plane + i;
                    let im = re + plane;
                    let z = lambda.blend(num_complex::Complex64::new(d[re], d[im]), acq.get(f, row, col));
                    d[re] = z.re;
                    d[im] = z.im;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            value,
            Op::Dc {
                x,
                meas: Arc::clone(meas),
                lambda,
            },
            rg,
        ))
    }

    /// Per-position mean over the sampled frames; returns one item.
    pub fn temporal_average(&mut self, x: Var, mask: &Arc<SamplingMask>) -> Result<Var> {
        let xv = self.value(x);
        require_complex(xv, "temporal average")?;
        let [t, _, h, w] = xv.dims();
        if t != mask.t_frames() || w != mask.cols() {
            return Err(Error::DimensionMismatch("temporal average vs mask".into()));
        }
        let plane = h * w;
        let mut value = Tensor4::zeros([1, 2, h, w]);
        let d = value.data_mut();
        let src = xv.data();
        for f in 0..t {
            for col in (0..w).filter(|&c| mask.is_sampled(f, c)) {
                for ch in 0..2 {
                    for row in 0..h {
                        d[ch * plane + row * w + col] += src[(f * 2 + ch) * plane + row * w + col];
                    }
                }
            }
        }
        for col in 0..w {
            let n = mask.column_count(col).max(1) as f64;
            for ch in 0..2 {
                for row in 0..h {
                    d[ch * plane + row * w + col] /= n;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            value,
            Op::TemporalAverage {
                x,
                mask: Arc::clone(mask),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor4::scalar(s), Op::Sum(a), rg)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|v| v * v).sum();
        let rg = self.rg(a);
        self.push(Tensor4::scalar(s), Op::SumSquares(a), rg)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar, got {:?}",
                self.value(loss).dims()
            )));
        }
        if !self.rg(loss) {
            return Err(Error::InvalidArgument(
                "backward from a node that depends on no differentiable input".into(),
            ));
        }
        let mut grads: Vec<Option<Tensor4>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor4::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let acc = |v: Var, t: Tensor4, grads: &mut Vec<Option<Tensor4>>| {
                if !self.rg(v) {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&t),
                    slot => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Conv2d { x, w, b, dilation } => {
                    let cg = conv2d_backward(self.value(*x), self.value(*w), &g, *dilation)?;
                    acc(*x, cg.input, &mut grads);
                    acc(*w, cg.weight, &mut grads);
                    if let Some(b) = b {
                        let dims = self.value(*b).dims();
                        acc(*b, Tensor4::from_vec(dims, cg.bias.into_vec())?, &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|v| -v), &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::Scale(a, f) => acc(*a, g.map(|v| v * f), &mut grads),
                Op::Relu(a) => {
                    let gi = self.value(*a).zip_map(&g, |x, gv| if x > 0.0 { gv } else { 0.0 });
                    acc(*a, gi, &mut grads);
                }
                Op::LeakyRelu(a, slope) => {
                    let gi = self
                        .value(*a)
                        .zip_map(&g, |x, gv| if x > 0.0 { gv } else { slope * gv });
                    acc(*a, gi, &mut grads);
                }
                Op::ConcatC(a, b) => {
                    let (ga, gb) = g.split_c(self.value(*a).dims()[1]);
                    acc(*a, ga, &mut grads);
                    acc(*b, gb, &mut grads);
                }
                Op::SwapNH(a) => acc(*a, g.swap_nh(), &mut grads),
                Op::SliceN(a, idx) => {
                    let src = self.value(*a);
                    let mut gi = Tensor4::zeros(src.dims());
                    let len = src.item_len();
                    gi.data_mut()[idx * len..(idx + 1) * len].copy_from_slice(g.data());
                    acc(*a, gi, &mut grads);
                }
                Op::StackN(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let dims = self.value(*p).dims();
                        let len: usize = dims.iter().product();
                        let gi = Tensor4::from_vec(dims, g.data()[start..start + len].to_vec())?;
                        start += len;
                        acc(*p, gi, &mut grads);
                    }
                }
                Op::BroadcastN(a) => {
                    let dims = self.value(*a).dims();
                    let len = g.item_len();
                    let mut gi = vec![0.0; len];
                    for item in g.data().chunks_exact(len) {
                        for (o, v) in gi.iter_mut().zip(item) {
                            *o += v;
                        }
                    }
                    acc(*a, Tensor4::from_vec(dims, gi)?, &mut grads);
                }
                Op::Fft2c { x, inverse } => acc(*x, complex_transform(&g, &[1, 2], !inverse), &mut grads),
                Op::FftT { x, inverse } => acc(*x, complex_transform(&g, &[0], !inverse), &mut grads),
                Op::Dc { x, meas, lambda } => {
                    let [t, _, h, w] = g.dims();
                    let plane = h * w;
                    let keep = lambda.pred_weight();
                    let mut gi = g;
                    let d = gi.data_mut();
                    for f in 0..t {
                        for col in (0..w).filter(|&c| meas.mask().is_sampled(f, c)) {
                            for ch in 0..2 {
                                for row in 0..h {
                                    d[(f * 2 + ch) * plane + row * w + col] *= keep;
                                }
                            }
                        }
                    }
                    acc(*x, gi, &mut grads);
                }
                Op::TemporalAverage { x, mask } => {
                    let dims = self.value(*x).dims();
                    let [t, _, h, w] = dims;
                    let plane = h * w;
                    let mut gi = Tensor4::zeros(dims);
                    let d = gi.data_mut();
                    for f in 0..t {
                        for col in (0..w).filter(|&c| mask.is_sampled(f, c)) {
                            let n = mask.column_count(col).max(1) as f64;
                            for ch in 0..2 {
                                for row in 0..h {
                                    d[(f * 2 + ch) * plane + row * w + col] = g.data()[ch * plane + row * w + col] / n;
                                }
                            }
                        }
                    }
                    acc(*x, gi, &mut grads);
                }
                Op::Sum(a) => {
                    let s = g.data()[0];
                    acc(*a, self.value(*a).map(|_| s), &mut grads);
                }
                Op::SumSquares(a) => {
                    let s = g.data()[0];
                    acc(*a, self.value(*a).map(|v| 2.0 * v * s), &mut grads);
                }
            }
        }
        Ok(Gradients { grads })
    }
}
