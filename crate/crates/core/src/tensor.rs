//! Reverse-mode automatic differentiation over dense tensors.
//!
//! The [`Graph`] is a define-by-run tape: every operation appends a node
//! holding its output values plus whatever the backward rule needs. Handles
//! ([`Tensor`]) are indices into the tape, so inputs always precede outputs
//! and [`Graph::backward`] is a single reverse sweep. A graph lives for one
//! training step and is dropped afterwards.
//!
//! The element type is generic: training runs in `f32`, gradient checking in
//! `f64`, selected at the call site by instantiating `Graph<f32>` or
//! `Graph<f64>`.

use crate::error::{Error, Result};
use crate::kernels;

/// Element type of a [`Graph`]: `f32` for training, `f64` for verification.
pub trait Scalar:
    Copy
    + PartialOrd
    + std::fmt::Debug
    + std::fmt::Display
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                self.exp()
            }
            fn ln(self) -> Self {
                self.ln()
            }
            fn tanh(self) -> Self {
                self.tanh()
            }
            fn abs(self) -> Self {
                self.abs()
            }
            fn maximum(self, other: Self) -> Self {
                self.max(other)
            }
            fn is_finite(self) -> bool {
                self.is_finite()
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Handle to a node in a [`Graph`]. Only valid for the graph that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor(usize);

/// Zero-padding mode for [`Graph::conv2d`] (stride is always 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output shrinks by kernel−1.
    Valid,
    /// Zero padding of (k−1)/2 per side; output keeps the input extent.
    /// Requires odd kernel extents.
    Same,
}

enum Op<T> {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    ScalarMul(Tensor, T),
    AddBias(Tensor, Tensor),
    Matmul(Tensor, Tensor),
    Conv2d {
        x: Tensor,
        w: Tensor,
        pad_h: usize,
        pad_w: usize,
        /// im2col patches saved from the forward pass, [n·ho·wo, cin·kh·kw].
        cols: Vec<T>,
    },
    MaxPool2 {
        x: Tensor,
        /// Absolute input index of each pooled maximum (first in scan order on ties).
        argmax: Vec<u32>,
    },
    Relu(Tensor),
    Tanh(Tensor),
    Exp(Tensor),
    Reshape(Tensor),
    Sum(Tensor),
    Mean(Tensor),
    LogSoftmax(Tensor),
    Concat(Vec<Tensor>),
    NllLoss {
        logp: Tensor,
        targets: Vec<usize>,
    },
    StopGradient,
    GradReverse(Tensor),
    AffineGrid {
        theta: Tensor,
        out_h: usize,
        out_w: usize,
    },
    BilinearSample {
        x: Tensor,
        grid: Tensor,
    },
}

struct Node<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// How close (in pixels) a sampling coordinate must be to a pixel center to be
/// snapped onto it. Grid coordinates pass through `2j/(W−1)−1` and back, which
/// perturbs exact centers by a few ulps; without the snap an identity
/// transform would not reproduce the input bit-for-bit.
const PIXEL_SNAP: f64 = 1e-5;

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, requires_grad: bool) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        let grad = if requires_grad {
            vec![T::ZERO; data.len()]
        } else {
            Vec::new()
        };
        self.nodes.push(Node {
            shape,
            data,
            grad,
            op,
            requires_grad,
        });
        Tensor(self.nodes.len() - 1)
    }

    /// Insert a leaf tensor. `requires_grad` marks it as a differentiation root.
    pub fn leaf(&mut self, data: Vec<T>, shape: &[usize], requires_grad: bool) -> Result<Tensor> {
        if numel(shape) != data.len() {
            return Err(Error::ShapeMismatch {
                op: "leaf",
                details: format!("shape {:?} needs {} values, got {}", shape, numel(shape), data.len()),
            });
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, requires_grad))
    }

    /// Insert a constant (non-differentiable) leaf.
    pub fn constant(&mut self, data: Vec<T>, shape: &[usize]) -> Result<Tensor> {
        self.leaf(data, shape, false)
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn data(&self, t: Tensor) -> &[T] {
        &self.nodes[t.0].data
    }

    /// Scalar value of a single-element tensor.
    pub fn value(&self, t: Tensor) -> T {
        debug_assert_eq!(self.nodes[t.0].data.len(), 1);
        self.nodes[t.0].data[0]
    }

    /// Accumulated gradient, `None` if the tensor does not require grad.
    pub fn grad(&self, t: Tensor) -> Option<&[T]> {
        let n = &self.nodes[t.0];
        if n.requires_grad {
            Some(&n.grad)
        } else {
            None
        }
    }

    fn requires(&self, t: Tensor) -> bool {
        self.nodes[t.0].requires_grad
    }

    fn same_shape(&self, op: &'static str, a: Tensor, b: Tensor) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                details: format!("lhs {:?} vs rhs {:?}", self.shape(a), self.shape(b)),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape("add", a, b)?;
        let data: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x + y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), data, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape("sub", a, b)?;
        let data: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x - y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), data, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape("mul", a, b)?;
        let data: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x * y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), data, Op::Mul(a, b), rg))
    }

    pub fn scalar_mul(&mut self, a: Tensor, c: T) -> Result<Tensor> {
        let data: Vec<T> = self.nodes[a.0].data.iter().map(|&x| x * c).collect();
        let rg = self.requires(a);
        Ok(self.push(self.nodes[a.0].shape.clone(), data, Op::ScalarMul(a, c), rg))
    }

    /// Broadcast-add a 1-D bias over axis 1 of `x` (rows of a matrix, or
    /// channels of an NCHW image).
    pub fn add_bias(&mut self, x: Tensor, b: Tensor) -> Result<Tensor> {
        let xs = self.shape(x).to_vec();
        let bs = self.shape(b).to_vec();
        if xs.len() < 2 || bs.len() != 1 || bs[0] != xs[1] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                details: format!("input {:?} vs bias {:?} (bias must be 1-D of extent {})", xs, bs, if xs.len() < 2 { 0 } else { xs[1] }),
            });
        }
        let inner: usize = xs[2..].iter().product();
        let (c, n) = (xs[1], xs[0]);
        let mut data = self.nodes[x.0].data.clone();
        let bias = &self.nodes[b.0].data;
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * inner;
                let bv = bias[ci];
                for v in &mut data[base..base + inner] {
                    *v += bv;
                }
            }
        }
        let rg = self.requires(x) || self.requires(b);
        Ok(self.push(xs, data, Op::AddBias(x, b), rg))
    }

    /// Matrix product of 2-D tensors: `[m,k] × [k,n] → [m,n]`.
    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                details: format!("lhs {:?} vs rhs {:?}", sa, sb),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut data = vec![T::ZERO; m * n];
        kernels::matmul_acc(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n, &mut data);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(vec![m, n], data, Op::Matmul(a, b), rg))
    }

    /// 2-D convolution, stride 1: `x [n,cin,h,w]` with filters `w [cout,cin,kh,kw]`.
    pub fn conv2d(&mut self, x: Tensor, w: Tensor, pad: Padding) -> Result<Tensor> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                details: format!("input {:?} vs kernel {:?} (channel extents must agree)", xs, ws),
            });
        }
        let (n, cin, h, wdt) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
        let (pad_h, pad_w) = match pad {
            Padding::Valid => (0, 0),
            Padding::Same => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(Error::ShapeMismatch {
                        op: "conv2d",
                        details: format!("same padding needs odd kernel extents, got {}x{}", kh, kw),
                    });
                }
                ((kh - 1) / 2, (kw - 1) / 2)
            }
        };
        if h + 2 * pad_h < kh || wdt + 2 * pad_w < kw {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                details: format!("kernel {}x{} exceeds padded input {}x{}", kh, kw, h + 2 * pad_h, wdt + 2 * pad_w),
            });
        }
        let ho = h + 2 * pad_h + 1 - kh;
        let wo = wdt + 2 * pad_w + 1 - kw;
        let ck = cin * kh * kw;
        let rows = n * ho * wo;
        let cols = kernels::im2col(&self.nodes[x.0].data, n, cin, h, wdt, kh, kw, pad_h, pad_w);
        let mut y_rows = vec![T::ZERO; rows * cout];
        kernels::matmul_a_bt_acc(&cols, &self.nodes[w.0].data, rows, ck, cout, &mut y_rows);
        // [n·ho·wo, cout] → [n, cout, ho, wo]
        let mut data = vec![T::ZERO; n * cout * ho * wo];
        for ni in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let r = ((ni * ho + oy) * wo + ox) * cout;
                    for co in 0..cout {
                        data[((ni * cout + co) * ho + oy) * wo + ox] = y_rows[r + co];
                    }
                }
            }
        }
        let rg = self.requires(x) || self.requires(w);
        let cols = if rg { cols } else { Vec::new() };
        Ok(self.push(
            vec![n, cout, ho, wo],
            data,
            Op::Conv2d { x, w, pad_h, pad_w, cols },
            rg,
        ))
    }

    /// 2×2 max pooling with stride 2; spatial extents must be even.
    /// Ties keep the first maximum in row-major scan order.
    pub fn max_pool2(&mut self, x: Tensor) -> Result<Tensor> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || xs[2] % 2 != 0 || xs[3] % 2 != 0 {
            return Err(Error::ShapeMismatch {
                op: "max_pool2",
                details: format!("input {:?} must be 4-D with even spatial extents", xs),
            });
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (ho, wo) = (h / 2, w / 2);
        let mut data = vec![T::ZERO; n * c * ho * wo];
        let mut argmax = vec![0u32; data.len()];
        let xd = &self.nodes[x.0].data;
        for p in 0..n * c {
            let plane = p * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best_i = plane + (2 * oy) * w + 2 * ox;
                    let mut best = xd[best_i];
                    for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                        let i = plane + (2 * oy + dy) * w + 2 * ox + dx;
                        if xd[i] > best {
                            best = xd[i];
                            best_i = i;
                        }
                    }
                    let o = (p * ho + oy) * wo + ox;
                    data[o] = best;
                    argmax[o] = best_i as u32;
                }
            }
        }
        let rg = self.requires(x);
        Ok(self.push(vec![n, c, ho, wo], data, Op::MaxPool2 { x, argmax }, rg))
    }

    pub fn relu(&mut self, x: Tensor) -> Result<Tensor> {
        let data: Vec<T> = self.nodes[x.0].data.iter().map(|&v| v.maximum(T::ZERO)).collect();
        let rg = self.requires(x);
        Ok(self.push(self.nodes[x.0].shape.clone(), data, Op::Relu(x), rg))
    }

    pub fn tanh(&mut self, x: Tensor) -> Result<Tensor> {
        let data: Vec<T> = self.nodes[x.0].data.iter().map(|&v| v.tanh()).collect();
        let rg = self.requires(x);
        Ok(self.push(self.nodes[x.0].shape.clone(), data, Op::Tanh(x), rg))
    }

    pub fn exp(&mut self, x: Tensor) -> Result<Tensor> {
        let data: Vec<T> = self.nodes[x.0].data.iter().map(|&v| v.exp()).collect();
        let rg = self.requires(x);
        Ok(self.push(self.nodes[x.0].shape.clone(), data, Op::Exp(x), rg))
    }

    pub fn reshape(&mut self, x: Tensor, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.nodes[x.0].data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                details: format!("cannot view {:?} as {:?}", self.shape(x), shape),
            });
        }
        let data = self.nodes[x.0].data.clone();
        let rg = self.requires(x);
        Ok(self.push(shape.to_vec(), data, Op::Reshape(x), rg))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: Tensor) -> Result<Tensor> {
        let mut acc = T::ZERO;
        for &v in &self.nodes[x.0].data {
            acc += v;
        }
        let rg = self.requires(x);
        Ok(self.push(vec![1], vec![acc], Op::Sum(x), rg))
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, x: Tensor) -> Result<Tensor> {
        let len = self.nodes[x.0].data.len();
        if len == 0 {
            return Err(Error::ShapeMismatch {
                op: "mean",
                details: "empty tensor".into(),
            });
        }
        let mut acc = T::ZERO;
        for &v in &self.nodes[x.0].data {
            acc += v;
        }
        let rg = self.requires(x);
        Ok(self.push(vec![1], vec![acc / T::from_f64(len as f64)], Op::Mean(x), rg))
    }

    /// Row-wise log-softmax of a `[n,k]` tensor (max-subtracted for stability).
    pub fn log_softmax(&mut self, x: Tensor) -> Result<Tensor> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "log_softmax",
                details: format!("input {:?} must be 2-D [batch, classes]", xs),
            });
        }
        let (n, k) = (xs[0], xs[1]);
        let xd = &self.nodes[x.0].data;
        let mut data = vec![T::ZERO; n * k];
        for i in 0..n {
            let row = &xd[i * k..(i + 1) * k];
            let mut m = row[0];
            for &v in &row[1..] {
                m = m.maximum(v);
            }
            let mut s = T::ZERO;
            for &v in row {
                s += (v - m).exp();
            }
            let lse = m + s.ln();
            for j in 0..k {
                data[i * k + j] = row[j] - lse;
            }
        }
        let rg = self.requires(x);
        Ok(self.push(xs, data, Op::LogSoftmax(x), rg))
    }

    /// Concatenate along axis 0; trailing extents must agree.
    pub fn concat(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "concat",
                details: "no inputs".into(),
            });
        }
        let tail = self.shape(parts[0])[1..].to_vec();
        let mut n0 = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[1..] != tail[..] {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    details: format!("part {:?} does not match leading part {:?}", s, self.shape(parts[0])),
                });
            }
            n0 += s[0];
        }
        let mut shape = vec![n0];
        shape.extend_from_slice(&tail);
        let mut data = Vec::with_capacity(numel(&shape));
        for &p in parts {
            data.extend_from_slice(&self.nodes[p.0].data);
        }
        let rg = parts.iter().any(|&p| self.requires(p));
        Ok(self.push(shape, data, Op::Concat(parts.to_vec()), rg))
    }

    /// Negative log-likelihood: mean over the batch of `−logp[i, targets[i]]`.
    pub fn nll_loss(&mut self, logp: Tensor, targets: &[usize]) -> Result<Tensor> {
        let s = self.shape(logp).to_vec();
        if s.len() != 2 || s[0] != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "nll_loss",
                details: format!("logprobs {:?} vs {} targets", s, targets.len()),
            });
        }
        let (n, k) = (s[0], s[1]);
        for (i, &t) in targets.iter().enumerate() {
            if t >= k {
                return Err(Error::InvalidArg(format!(
                    "nll_loss: target {} at row {} out of range for {} classes",
                    t, i, k
                )));
            }
        }
        let xd = &self.nodes[logp.0].data;
        let mut acc = T::ZERO;
        for (i, &t) in targets.iter().enumerate() {
            acc += xd[i * k + t];
        }
        let val = -(acc / T::from_f64(n as f64));
        let rg = self.requires(logp);
        Ok(self.push(
            vec![1],
            vec![val],
            Op::NllLoss { logp, targets: targets.to_vec() },
            rg,
        ))
    }

    /// Forward identity that blocks gradient flow entirely.
    pub fn stop_gradient(&mut self, x: Tensor) -> Result<Tensor> {
        let data = self.nodes[x.0].data.clone();
        Ok(self.push(self.nodes[x.0].shape.clone(), data, Op::StopGradient, false))
    }

    /// Forward identity that multiplies gradients by −1 on the way back.
    pub fn grad_reverse(&mut self, x: Tensor) -> Result<Tensor> {
        let data = self.nodes[x.0].data.clone();
        let rg = self.requires(x);
        Ok(self.push(self.nodes[x.0].shape.clone(), data, Op::GradReverse(x), rg))
    }

    /// Affine sampling grid from per-sample parameters `theta [n,6]`
    /// (row-major 2×3). For output pixel (i,j), the base coordinates are
    /// `ũ = 2j/(out_w−1)−1`, `ṽ = 2i/(out_h−1)−1` and the output is
    /// `(u,v) = (θ00·ũ+θ01·ṽ+θ02, θ10·ũ+θ11·ṽ+θ12)`, laid out `[n,out_h,out_w,2]`.
    pub fn affine_grid(&mut self, theta: Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
        let s = self.shape(theta).to_vec();
        if s.len() != 2 || s[1] != 6 {
            return Err(Error::ShapeMismatch {
                op: "affine_grid",
                details: format!("theta {:?} must be [n,6]", s),
            });
        }
        if out_h < 2 || out_w < 2 {
            return Err(Error::InvalidArg(format!(
                "affine_grid: output extents must be ≥ 2, got {}x{}",
                out_h, out_w
            )));
        }
        let n = s[0];
        let td = &self.nodes[theta.0].data;
        let mut data = vec![T::ZERO; n * out_h * out_w * 2];
        for ni in 0..n {
            let t = &td[ni * 6..ni * 6 + 6];
            for i in 0..out_h {
                let vn = T::from_f64(2.0 * i as f64 / (out_h as f64 - 1.0) - 1.0);
                for j in 0..out_w {
                    let un = T::from_f64(2.0 * j as f64 / (out_w as f64 - 1.0) - 1.0);
                    let o = ((ni * out_h + i) * out_w + j) * 2;
                    data[o] = t[0] * un + t[1] * vn + t[2];
                    data[o + 1] = t[3] * un + t[4] * vn + t[5];
                }
            }
        }
        let rg = self.requires(theta);
        Ok(self.push(
            vec![n, out_h, out_w, 2],
            data,
            Op::AffineGrid { theta, out_h, out_w },
            rg,
        ))
    }

    /// Bilinear resampling of `x [n,c,h,w]` at normalized `grid [n,gh,gw,2]`
    /// coordinates; samples outside the image read as zero. Differentiable in
    /// both inputs.
    pub fn bilinear_sample(&mut self, x: Tensor, grid: Tensor) -> Result<Tensor> {
        if x == grid {
            return Err(Error::InvalidArg(
                "bilinear_sample: image and grid must be distinct tensors".into(),
            ));
        }
        let xs = self.shape(x).to_vec();
        let gs = self.shape(grid).to_vec();
        if xs.len() != 4 || gs.len() != 4 || gs[3] != 2 || xs[0] != gs[0] {
            return Err(Error::ShapeMismatch {
                op: "bilinear_sample",
                details: format!("image {:?} vs grid {:?} (want [n,c,h,w] and [n,gh,gw,2])", xs, gs),
            });
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (gh, gw) = (gs[1], gs[2]);
        let xd = &self.nodes[x.0].data;
        let gd = &self.nodes[grid.0].data;
        let mut data = vec![T::ZERO; n * c * gh * gw];
        for ni in 0..n {
            for i in 0..gh {
                for j in 0..gw {
                    let g = ((ni * gh + i) * gw + j) * 2;
                    let (x0, y0, wx, wy) = pixel_coords(gd[g].to_f64(), gd[g + 1].to_f64(), h, w);
                    let w00 = T::from_f64((1.0 - wx) * (1.0 - wy));
                    let w01 = T::from_f64(wx * (1.0 - wy));
                    let w10 = T::from_f64((1.0 - wx) * wy);
                    let w11 = T::from_f64(wx * wy);
                    for ci in 0..c {
                        let plane = (ni * c + ci) * h * w;
                        let mut acc = T::ZERO;
                        for (dy, dx, wv) in [(0, 0, w00), (0, 1, w01), (1, 0, w10), (1, 1, w11)] {
                            let (yy, xx) = (y0 + dy, x0 + dx);
                            if yy >= 0 && yy < h as isize && xx >= 0 && xx < w as isize {
                                acc += xd[plane + yy as usize * w + xx as usize] * wv;
                            }
                        }
                        data[((ni * c + ci) * gh + i) * gw + j] = acc;
                    }
                }
            }
        }
        let rg = self.requires(x) || self.requires(grid);
        Ok(self.push(vec![n, c, gh, gw], data, Op::BilinearSample { x, grid }, rg))
    }

    /// Reverse sweep from a scalar loss: accumulates gradients into every
    /// tensor reachable from `loss` that requires grad.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        let ln = &self.nodes[loss.0];
        if ln.data.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                details: format!("loss must be scalar, got {:?}", ln.shape),
            });
        }
        if !ln.requires_grad {
            return Err(Error::InvalidArg(
                "backward: loss does not depend on any differentiable leaf".into(),
            ));
        }
        self.nodes[loss.0].grad[0] += T::ONE;
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.step_back(id);
        }
        Ok(())
    }

    fn step_back(&mut self, id: usize) {
        let (before, after) = self.nodes.split_at_mut(id);
        let node = &after[0];
        let g = &node.grad;
        // Takes an input's grad buffer out, lets the closure accumulate into
        // it with shared access to earlier nodes, and puts it back. No-op for
        // inputs that don't require grad.
        let with_grad = |nodes: &mut [Node<T>], t: Tensor, f: &mut dyn FnMut(&mut [T], &[Node<T>])| {
            if !nodes[t.0].requires_grad {
                return;
            }
            let mut buf = std::mem::take(&mut nodes[t.0].grad);
            f(&mut buf, nodes);
            nodes[t.0].grad = buf;
        };
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::Add(a, b) => {
                with_grad(before, *a, &mut |ga, _| axpy(g, ga));
                with_grad(before, *b, &mut |gb, _| axpy(g, gb));
            }
            Op::Sub(a, b) => {
                with_grad(before, *a, &mut |ga, _| axpy(g, ga));
                with_grad(before, *b, &mut |gb, _| {
                    for (d, &s) in gb.iter_mut().zip(g) {
                        *d -= s;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                with_grad(before, a, &mut |ga, nodes| {
                    for ((d, &s), &o) in ga.iter_mut().zip(g).zip(&nodes[b.0].data) {
                        *d += s * o;
                    }
                });
                with_grad(before, b, &mut |gb, nodes| {
                    for ((d, &s), &o) in gb.iter_mut().zip(g).zip(&nodes[a.0].data) {
                        *d += s * o;
                    }
                });
            }
            Op::ScalarMul(a, c) => {
                let c = *c;
                with_grad(before, *a, &mut |ga, _| {
                    for (d, &s) in ga.iter_mut().zip(g) {
                        *d += s * c;
                    }
                });
            }
            Op::AddBias(x, b) => {
                let shape = &node.shape;
                let inner: usize = shape[2..].iter().product();
                let (n, c) = (shape[0], shape[1]);
                with_grad(before, *x, &mut |gx, _| axpy(g, gx));
                with_grad(before, *b, &mut |gb, _| {
                    for ni in 0..n {
                        for ci in 0..c {
                            let base = (ni * c + ci) * inner;
                            let mut acc = T::ZERO;
                            for &v in &g[base..base + inner] {
                                acc += v;
                            }
                            gb[ci] += acc;
                        }
                    }
                });
            }
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let (m, n) = (node.shape[0], node.shape[1]);
                let k = before[a.0].shape[1];
                with_grad(before, a, &mut |ga, nodes| {
                    // ga[m,k] += g[m,n] × bᵀ
                    kernels::matmul_a_bt_acc(g, &nodes[b.0].data, m, n, k, ga);
                });
                with_grad(before, b, &mut |gb, nodes| {
                    // gb[k,n] += aᵀ × g[m,n]
                    kernels::matmul_at_b_acc(&nodes[a.0].data, g, k, m, n, gb);
                });
            }
            Op::Conv2d { x, w, pad_h, pad_w, cols } => {
                let (x, w, pad_h, pad_w) = (*x, *w, *pad_h, *pad_w);
                let (n, cout, ho, wo) = (node.shape[0], node.shape[1], node.shape[2], node.shape[3]);
                let ws = &before[w.0].shape;
                let (cin, kh, kw) = (ws[1], ws[2], ws[3]);
                let ck = cin * kh * kw;
                let rows = n * ho * wo;
                // [n,cout,ho,wo] → [n·ho·wo, cout]
                let mut g_rows = vec![T::ZERO; rows * cout];
                for ni in 0..n {
                    for co in 0..cout {
                        for oy in 0..ho {
                            for ox in 0..wo {
                                g_rows[(((ni * ho + oy) * wo + ox) * cout) + co] =
                                    g[((ni * cout + co) * ho + oy) * wo + ox];
                            }
                        }
                    }
                }
                with_grad(before, w, &mut |gw, _| {
                    // gw[cout,ck] += g_rowsᵀ × cols
                    kernels::matmul_at_b_acc(&g_rows, cols, cout, rows, ck, gw);
                });
                with_grad(before, x, &mut |gx, nodes| {
                    let xs = &nodes[x.0].shape;
                    let mut gcols = vec![T::ZERO; rows * ck];
                    kernels::matmul_acc(&g_rows, &nodes[w.0].data, rows, cout, ck, &mut gcols);
                    kernels::col2im_acc(&gcols, n, cin, xs[2], xs[3], kh, kw, pad_h, pad_w, gx);
                });
            }
            Op::MaxPool2 { x, argmax } => {
                with_grad(before, *x, &mut |gx, _| {
                    for (o, &src) in argmax.iter().enumerate() {
                        gx[src as usize] += g[o];
                    }
                });
            }
            Op::Relu(x) => {
                let y = &node.data;
                with_grad(before, *x, &mut |gx, _| {
                    for ((d, &s), &v) in gx.iter_mut().zip(g).zip(y) {
                        if v > T::ZERO {
                            *d += s;
                        }
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &node.data;
                with_grad(before, *x, &mut |gx, _| {
                    for ((d, &s), &v) in gx.iter_mut().zip(g).zip(y) {
                        *d += s * (T::ONE - v * v);
                    }
                });
            }
            Op::Exp(x) => {
                let y = &node.data;
                with_grad(before, *x, &mut |gx, _| {
                    for ((d, &s), &v) in gx.iter_mut().zip(g).zip(y) {
                        *d += s * v;
                    }
                });
            }
            Op::Reshape(x) => {
                with_grad(before, *x, &mut |gx, _| axpy(g, gx));
            }
            Op::Sum(x) => {
                let gv = g[0];
                with_grad(before, *x, &mut |gx, _| {
                    for d in gx.iter_mut() {
                        *d += gv;
                    }
                });
            }
            Op::Mean(x) => {
                let gv = g[0];
                with_grad(before, *x, &mut |gx, _| {
                    let c = gv / T::from_f64(gx.len() as f64);
                    for d in gx.iter_mut() {
                        *d += c;
                    }
                });
            }
            Op::LogSoftmax(x) => {
                let y = &node.data;
                let (n, k) = (node.shape[0], node.shape[1]);
                with_grad(before, *x, &mut |gx, _| {
                    for i in 0..n {
                        let row = i * k;
                        let mut s = T::ZERO;
                        for &v in &g[row..row + k] {
                            s += v;
                        }
                        for j in 0..k {
                            gx[row + j] += g[row + j] - y[row + j].exp() * s;
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = before[p.0].data.len();
                    with_grad(before, p, &mut |gp, _| axpy(&g[off..off + len], gp));
                    off += len;
                }
            }
            Op::NllLoss { logp, targets } => {
                let k = before[logp.0].shape[1];
                let scale = g[0] / T::from_f64(targets.len() as f64);
                with_grad(before, *logp, &mut |gl, _| {
                    for (i, &t) in targets.iter().enumerate() {
                        gl[i * k + t] -= scale;
                    }
                });
            }
            Op::GradReverse(x) => {
                with_grad(before, *x, &mut |gx, _| {
                    for (d, &s) in gx.iter_mut().zip(g) {
                        *d -= s;
                    }
                });
            }
            Op::AffineGrid { theta, out_h, out_w } => {
                let (out_h, out_w) = (*out_h, *out_w);
                let n = node.shape[0];
                with_grad(before, *theta, &mut |gt, _| {
                    for ni in 0..n {
                        let t = ni * 6;
                        for i in 0..out_h {
                            let vn = T::from_f64(2.0 * i as f64 / (out_h as f64 - 1.0) - 1.0);
                            for j in 0..out_w {
                                let un = T::from_f64(2.0 * j as f64 / (out_w as f64 - 1.0) - 1.0);
                                let o = ((ni * out_h + i) * out_w + j) * 2;
                                let (gu, gv) = (g[o], g[o + 1]);
                                gt[t] += gu * un;
                                gt[t + 1] += gu * vn;
                                gt[t + 2] += gu;
                                gt[t + 3] += gv * un;
                                gt[t + 4] += gv * vn;
                                gt[t + 5] += gv;
                            }
                        }
                    }
                });
            }
            Op::BilinearSample { x, grid } => {
                let (x, grid) = (*x, *grid);
                let (n, c, gh, gw) = (node.shape[0], node.shape[1], node.shape[2], node.shape[3]);
                let (h, w) = (before[x.0].shape[2], before[x.0].shape[3]);
                // Both inputs are distinct (enforced at creation), so take both
                // grad buffers and run one fused scatter loop.
                let x_req = before[x.0].requires_grad;
                let g_req = before[grid.0].requires_grad;
                let mut gx = std::mem::take(&mut before[x.0].grad);
                let mut gg = std::mem::take(&mut before[grid.0].grad);
                {
                    let xd = &before[x.0].data;
                    let gd = &before[grid.0].data;
                    let du_scale = T::from_f64((w as f64 - 1.0) / 2.0);
                    let dv_scale = T::from_f64((h as f64 - 1.0) / 2.0);
                    let at = |plane: usize, yy: isize, xx: isize| -> T {
                        if yy >= 0 && yy < h as isize && xx >= 0 && xx < w as isize {
                            xd[plane + yy as usize * w + xx as usize]
                        } else {
                            T::ZERO
                        }
                    };
                    for ni in 0..n {
                        for i in 0..gh {
                            for j in 0..gw {
                                let go = ((ni * gh + i) * gw + j) * 2;
                                let (x0, y0, wx, wy) = pixel_coords(gd[go].to_f64(), gd[go + 1].to_f64(), h, w);
                                let weights = [
                                    (0isize, 0isize, (1.0 - wx) * (1.0 - wy)),
                                    (0, 1, wx * (1.0 - wy)),
                                    (1, 0, (1.0 - wx) * wy),
                                    (1, 1, wx * wy),
                                ];
                                let (mut du, mut dv) = (T::ZERO, T::ZERO);
                                for ci in 0..c {
                                    let plane = (ni * c + ci) * h * w;
                                    let gy = g[((ni * c + ci) * gh + i) * gw + j];
                                    if x_req {
                                        for &(dy, dx, wv) in &weights {
                                            let (yy, xx) = (y0 + dy, x0 + dx);
                                            if yy >= 0 && yy < h as isize && xx >= 0 && xx < w as isize {
                                                gx[plane + yy as usize * w + xx as usize] += gy * T::from_f64(wv);
                                            }
                                        }
                                    }
                                    if g_req {
                                        let x00 = at(plane, y0, x0);
                                        let x01 = at(plane, y0, x0 + 1);
                                        let x10 = at(plane, y0 + 1, x0);
                                        let x11 = at(plane, y0 + 1, x0 + 1);
                                        let one_wy = T::from_f64(1.0 - wy);
                                        let one_wx = T::from_f64(1.0 - wx);
                                        du += gy * (one_wy * (x01 - x00) + T::from_f64(wy) * (x11 - x10));
                                        dv += gy * (one_wx * (x10 - x00) + T::from_f64(wx) * (x11 - x01));
                                    }
                                }
                                if g_req {
                                    gg[go] += du * du_scale;
                                    gg[go + 1] += dv * dv_scale;
                                }
                            }
                        }
                    }
                }
                before[x.0].grad = gx;
                before[grid.0].grad = gg;
            }
        }
    }
}

fn axpy<T: Scalar>(src: &[T], dst: &mut [T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Map a normalized grid coordinate to pixel space, returning the top-left
/// integer corner and the fractional weights. Coordinates within
/// [`PIXEL_SNAP`] of a pixel center are snapped onto it so identity grids
/// reproduce inputs exactly.
fn pixel_coords(u: f64, v: f64, h: usize, w: usize) -> (isize, isize, f64, f64) {
    let mut upx = (u + 1.0) * (w as f64 - 1.0) / 2.0;
    let mut vpx = (v + 1.0) * (h as f64 - 1.0) / 2.0;
    if (upx - upx.round()).abs() < PIXEL_SNAP {
        upx = upx.round();
    }
    if (vpx - vpx.round()).abs() < PIXEL_SNAP {
        vpx = vpx.round();
    }
    let x0 = upx.floor();
    let y0 = vpx.floor();
    (x0 as isize, y0 as isize, upx - x0, vpx - y0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_loss(g: &mut Graph<f64>, t: Tensor) -> Tensor {
        g.sum(t).unwrap()
    }

    #[test]
    fn relu_forward_and_subgradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![-1.0, 0.0, 2.0], &[3], true).unwrap();
        let y = g.relu(x).unwrap();
        assert_eq!(g.data(y), &[0.0, 0.0, 2.0]);
        let l = scalar_loss(&mut g, y);
        g.backward(l).unwrap();
        // subgradient at exactly 0 is 0
        assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn matmul_identity_and_oracle() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(vec![1.0, 2.0, 3.0, 4.0], &[2, 2], false).unwrap();
        let eye = g.leaf(vec![1.0, 0.0, 0.0, 1.0], &[2, 2], false).unwrap();
        let y = g.matmul(a, eye).unwrap();
        assert_eq!(g.data(y), g.data(a));
        let b = g.leaf(vec![5.0, 6.0, 7.0, 8.0], &[2, 2], false).unwrap();
        let z = g.matmul(a, b).unwrap();
        assert_eq!(g.data(z), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_error_names_op_and_extents() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(vec![0.0; 6], &[2, 3], false).unwrap();
        let b = g.leaf(vec![0.0; 8], &[4, 2], false).unwrap();
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
    }

    #[test]
    fn conv_of_ones_gives_window_sums() {
        // 3×3 ones convolved with a 2×2 ones kernel, valid → 2×2 of 4s
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![1.0; 9], &[1, 1, 3, 3], false).unwrap();
        let w = g.leaf(vec![1.0; 4], &[1, 1, 2, 2], false).unwrap();
        let y = g.conv2d(x, w, Padding::Valid).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 2, 2]);
        assert_eq!(g.data(y), &[4.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn conv_same_keeps_extent() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf((0..16).map(f64::from).collect(), &[1, 1, 4, 4], false).unwrap();
        let w = g.leaf(vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0], &[1, 1, 3, 3], false).unwrap();
        let y = g.conv2d(x, w, Padding::Same).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 4, 4]);
        assert_eq!(g.data(y), g.data(x)); // centered delta kernel = identity
    }

    #[test]
    fn stop_gradient_blocks_only_its_branch() {
        // loss = sum(stop_gradient(x) ∘ x) at x=[3] → grad(x) = [3]
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![3.0], &[1], true).unwrap();
        let s = g.stop_gradient(x).unwrap();
        assert_eq!(g.data(s), &[3.0]);
        let p = g.mul(s, x).unwrap();
        let l = scalar_loss(&mut g, p);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[3.0]);
    }

    #[test]
    fn fully_stopped_path_has_no_root() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![1.0, 2.0], &[2], true).unwrap();
        let s = g.stop_gradient(x).unwrap();
        let l = g.sum(s).unwrap();
        // nothing differentiable reaches the loss
        assert!(g.backward(l).is_err());
        assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn grad_reverse_negates() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![5.0], &[1], true).unwrap();
        let r = g.grad_reverse(x).unwrap();
        assert_eq!(g.data(r), &[5.0]);
        let l = scalar_loss(&mut g, r);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[-1.0]);
    }

    #[test]
    fn double_grad_reverse_is_plain_grad() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![1.5, -2.0], &[2], true).unwrap();
        let r = g.grad_reverse(x).unwrap();
        let rr = g.grad_reverse(r).unwrap();
        let l = scalar_loss(&mut g, rr);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn gradients_accumulate_across_uses() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![4.0], &[1], true).unwrap();
        let y = g.add(x, x).unwrap();
        let l = scalar_loss(&mut g, y);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0]);
    }

    #[test]
    fn mul_square_rule() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![3.0], &[1], true).unwrap();
        let y = g.mul(x, x).unwrap();
        let l = scalar_loss(&mut g, y);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn maxpool_takes_first_of_ties() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![7.0, 7.0, 7.0, 7.0], &[1, 1, 2, 2], true).unwrap();
        let y = g.max_pool2(x).unwrap();
        assert_eq!(g.data(y), &[7.0]);
        let l = scalar_loss(&mut g, y);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![1.0, 2.0, 3.0, -5.0, 0.0, 5.0], &[2, 3], false).unwrap();
        let y = g.log_softmax(x).unwrap();
        for row in g.data(y).chunks(3) {
            let lse: f64 = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            assert!(lse.abs() < 1e-6, "logsumexp {lse}");
        }
    }

    #[test]
    fn log_softmax_is_shift_invariant_under_large_offsets() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(vec![1.0, 2.0, 3.0], &[1, 3], false).unwrap();
        let b = g.leaf(vec![1001.0, 1002.0, 1003.0], &[1, 3], false).unwrap();
        let ya = g.log_softmax(a).unwrap();
        let yb = g.log_softmax(b).unwrap();
        for (x, y) in g.data(ya).iter().zip(g.data(yb)) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn nll_loss_hand_value() {
        let mut g = Graph::<f64>::new();
        let lp = g
            .leaf(
                vec![0.9f64.ln(), 0.1f64.ln(), 0.4f64.ln(), 0.6f64.ln()],
                &[2, 2],
                true,
            )
            .unwrap();
        let l = g.nll_loss(lp, &[0, 1]).unwrap();
        let want = -(0.9f64.ln() + 0.6f64.ln()) / 2.0;
        assert!((g.value(l) - want).abs() < 1e-12);
    }

    #[test]
    fn nll_loss_rejects_out_of_range_label() {
        let mut g = Graph::<f64>::new();
        let lp = g.leaf(vec![0.0; 4], &[2, 2], false).unwrap();
        assert!(g.nll_loss(lp, &[0, 2]).is_err());
    }

    #[test]
    fn concat_splits_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(vec![1.0, 2.0], &[2, 1], true).unwrap();
        let b = g.leaf(vec![3.0], &[1, 1], true).unwrap();
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.shape(c), &[3, 1]);
        assert_eq!(g.data(c), &[1.0, 2.0, 3.0]);
        let w = g.leaf(vec![10.0, 20.0, 30.0], &[3, 1], false).unwrap();
        let p = g.mul(c, w).unwrap();
        let l = scalar_loss(&mut g, p);
        g.backward(l).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[10.0, 20.0]);
        assert_eq!(g.grad(b).unwrap(), &[30.0]);
    }

    #[test]
    fn reshape_roundtrips_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![1.0, 2.0, 3.0, 4.0], &[2, 2], true).unwrap();
        let y = g.reshape(x, &[4]).unwrap();
        let c = g.leaf(vec![1.0, 10.0, 100.0, 1000.0], &[4], false).unwrap();
        let p = g.mul(y, c).unwrap();
        let l = scalar_loss(&mut g, p);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 10.0, 100.0, 1000.0]);
    }

    #[test]
    fn mean_spreads_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![1.0, 3.0, 5.0, 7.0], &[4], true).unwrap();
        let m = g.mean(x).unwrap();
        assert_eq!(g.value(m), 4.0);
        g.backward(m).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn affine_grid_identity_reproduces_base_coords() {
        let mut g = Graph::<f64>::new();
        let theta = g.leaf(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0], &[1, 6], false).unwrap();
        let grid = g.affine_grid(theta, 3, 5).unwrap();
        let d = g.data(grid);
        // corners
        assert_eq!(&d[0..2], &[-1.0, -1.0]);
        let last = d.len() - 2;
        assert_eq!(&d[last..], &[1.0, 1.0]);
        // center pixel of a 3×5 grid is exactly (0,0)
        let mid = ((1 * 5) + 2) * 2;
        assert_eq!(&d[mid..mid + 2], &[0.0, 0.0]);
    }

    #[test]
    fn affine_grid_translation_example() {
        // φ = [[1,0,0.5],[0,1,0]] at (ũ,ṽ)=(0.3,−0.5) → (u,v)=(0.8,−0.5)
        let mut g = Graph::<f64>::new();
        let theta = g.leaf(vec![1.0, 0.0, 0.5, 0.0, 1.0, 0.0], &[1, 6], false).unwrap();
        // an 11×21 grid hits ũ=0.3 at j=13, ṽ=−0.5 at i=2.5 — use direct math instead:
        // pick out_h=5 (ṽ=−0.5 at i=1), out_w=21 (ũ=0.3 at j=13)
        let grid = g.affine_grid(theta, 5, 21).unwrap();
        let o = ((1 * 21) + 13) * 2;
        let d = g.data(grid);
        assert!((d[o] - 0.8).abs() < 1e-12, "u={}", d[o]);
        assert!((d[o + 1] + 0.5).abs() < 1e-12, "v={}", d[o + 1]);
    }

    #[test]
    fn bilinear_identity_grid_is_exact() {
        let mut gf = Graph::<f32>::new();
        let data: Vec<f32> = (0..2 * 3 * 8 * 8).map(|i| ((i * 37 % 101) as f32) / 101.0).collect();
        let x = gf.leaf(data.clone(), &[2, 3, 8, 8], false).unwrap();
        let theta = gf
            .leaf([1.0f32, 0.0, 0.0, 0.0, 1.0, 0.0].repeat(2), &[2, 6], false)
            .unwrap();
        let grid = gf.affine_grid(theta, 8, 8).unwrap();
        let y = gf.bilinear_sample(x, grid).unwrap();
        assert_eq!(gf.data(y), &data[..], "identity grid must be bit-exact");
    }

    #[test]
    fn bilinear_midpoint_average() {
        // single row [0,1], sample at u=0 (between the two pixels) → 0.5
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![0.0, 1.0, 0.0, 1.0], &[1, 1, 2, 2], false).unwrap();
        let grid = g.leaf(vec![0.0, -1.0], &[1, 1, 1, 2], false).unwrap();
        let y = g.bilinear_sample(x, grid).unwrap();
        assert!((g.data(y)[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bilinear_outside_reads_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![1.0; 4], &[1, 1, 2, 2], false).unwrap();
        let grid = g.leaf(vec![-3.0, -3.0], &[1, 1, 1, 2], false).unwrap();
        let y = g.bilinear_sample(x, grid).unwrap();
        assert_eq!(g.data(y), &[0.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(vec![1.0, 2.0], &[2], true).unwrap();
        let y = g.relu(x).unwrap();
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn f32_and_f64_graphs_agree_on_small_example() {
        let run = |vals: &[f64]| -> (f64, Vec<f64>) {
            let mut g = Graph::<f64>::new();
            let x = g.leaf(vals.to_vec(), &[2, 2], true).unwrap();
            let t = g.tanh(x).unwrap();
            let s = g.mul(t, t).unwrap();
            let l = g.mean(s).unwrap();
            g.backward(l).unwrap();
            (g.value(l), g.grad(x).unwrap().to_vec())
        };
        let runf = |vals: &[f64]| -> (f64, Vec<f64>) {
            let mut g = Graph::<f32>::new();
            let v32: Vec<f32> = vals.iter().map(|&v| v as f32).collect();
            let x = g.leaf(v32, &[2, 2], true).unwrap();
            let t = g.tanh(x).unwrap();
            let s = g.mul(t, t).unwrap();
            let l = g.mean(s).unwrap();
            g.backward(l).unwrap();
            (
                g.value(l) as f64,
                g.grad(x).unwrap().iter().map(|&v| v as f64).collect(),
            )
        };
        let vals = [0.3, -1.2, 0.7, 2.5];
        let (l64, g64) = run(&vals);
        let (l32, g32) = runf(&vals);
        assert!((l64 - l32).abs() < 1e-6);
        for (a, b) in g64.iter().zip(&g32) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
