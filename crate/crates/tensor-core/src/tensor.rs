//! Dense row-major tensors with reverse-mode autodiff.
//!
//! A [`DenseTensor`] is a shape plus an `f64` buffer. Operations build a
//! dynamic graph as a side effect; calling [`DenseTensor::backward`] on a
//! scalar walks that graph once and accumulates gradients into every
//! gradient-tracking tensor that fed it. Handles are reference-counted, so
//! a parameter held by a model and the same parameter registered in a
//! `ParamStore` share storage and gradient.
//!
//! Every completed operation checks its output for non-finite values and
//! reports them as a numeric error instead of letting NaN/Inf propagate.

use std::cell::{Ref, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::autograd::Op;
use crate::error::{Result, TensorError};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

#[derive(Clone)]
pub struct DenseTensor {
    pub(crate) node: Rc<Node>,
}

pub(crate) struct Node {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: RefCell<Vec<f64>>,
    pub(crate) grad: RefCell<Option<Vec<f64>>>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op,
}

impl std::fmt::Debug for DenseTensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenseTensor")
            .field("id", &self.node.id)
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    for (i, v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(TensorError::Numeric(format!(
                "{what} produced non-finite value {v} at flat index {i}"
            )));
        }
    }
    Ok(())
}

impl DenseTensor {
    fn alloc(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Self {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                op,
            }),
        }
    }

    /// Result of an operation. Drops the parent links when nothing upstream
    /// tracks gradients, so constant pipelines do not grow a graph.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f64>, op: Op, what: &str) -> Result<Self> {
        check_finite(&data, what)?;
        let rg = op.parents().iter().any(|p| p.requires_grad());
        let op = if rg { op } else { Op::Leaf };
        Ok(Self::alloc(shape, data, rg, op))
    }

    /// Leaf tensor that does not track gradients.
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::Dimension(format!(
                "shape {:?} holds {} values but {} were given",
                shape,
                numel(shape),
                data.len()
            )));
        }
        check_finite(&data, "from_vec")?;
        Ok(Self::alloc(shape.to_vec(), data, false, Op::Leaf))
    }

    /// Leaf tensor that accumulates gradients on backward passes.
    pub fn parameter(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::Dimension(format!(
                "shape {:?} holds {} values but {} were given",
                shape,
                numel(shape),
                data.len()
            )));
        }
        check_finite(&data, "parameter")?;
        Ok(Self::alloc(shape.to_vec(), data, true, Op::Leaf))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::alloc(shape.to_vec(), vec![0.0; numel(shape)], false, Op::Leaf)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::alloc(shape.to_vec(), vec![1.0; numel(shape)], false, Op::Leaf)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        Self::from_vec(vec![value; numel(shape)], shape)
    }

    /// Rank-0 tensor holding one value.
    pub fn scalar(value: f64) -> Result<Self> {
        Self::from_vec(vec![value], &[])
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    pub fn len(&self) -> usize {
        numel(&self.node.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.node.data.borrow().clone()
    }

    /// Value at a flat index.
    pub fn at(&self, flat: usize) -> f64 {
        self.node.data.borrow()[flat]
    }

    /// Value at (row, col) of a rank-2 tensor.
    pub fn at2(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        let cols = self.node.shape[1];
        self.node.data.borrow()[row * cols + col]
    }

    /// Copy of the accumulated gradient, if any backward pass reached this
    /// tensor since the last clear.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, contrib: &[f64]) -> Result<()> {
        check_finite(contrib, "gradient")?;
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += ci;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
        Ok(())
    }

    /// Overwrite the stored values in place (optimizer updates). The shape
    /// must match and the values must be finite.
    pub fn set_data(&self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(TensorError::Dimension(format!(
                "set_data: expected {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        check_finite(&values, "set_data")?;
        *self.node.data.borrow_mut() = values;
        Ok(())
    }

    /// Leaf copy of the current values, cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::alloc(self.node.shape.clone(), self.to_vec(), false, Op::Leaf)
    }

    // ---- elementwise binary operations (with limited broadcasting) ----

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        let (data, shape) = binary_map(self, other, |a, b| a + b)?;
        DenseTensor::from_op(shape, data, Op::Add(self.clone(), other.clone()), "add")
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        let (data, shape) = binary_map(self, other, |a, b| a - b)?;
        DenseTensor::from_op(shape, data, Op::Sub(self.clone(), other.clone()), "sub")
    }

    pub fn mul(&self, other: &DenseTensor) -> Result<DenseTensor> {
        let (data, shape) = binary_map(self, other, |a, b| a * b)?;
        DenseTensor::from_op(shape, data, Op::Mul(self.clone(), other.clone()), "mul")
    }

    pub fn div(&self, other: &DenseTensor) -> Result<DenseTensor> {
        let (data, shape) = binary_map(self, other, |a, b| a / b)?;
        DenseTensor::from_op(shape, data, Op::Div(self.clone(), other.clone()), "div")
    }

    // ---- elementwise unary operations ----

    pub fn neg(&self) -> Result<DenseTensor> {
        let data = self.data().iter().map(|v| -v).collect();
        DenseTensor::from_op(self.node.shape.clone(), data, Op::Neg(self.clone()), "neg")
    }

    pub fn exp(&self) -> Result<DenseTensor> {
        let data = self.data().iter().map(|v| v.exp()).collect();
        DenseTensor::from_op(self.node.shape.clone(), data, Op::Exp(self.clone()), "exp")
    }

    pub fn ln(&self) -> Result<DenseTensor> {
        let data = self.data().iter().map(|v| v.ln()).collect();
        DenseTensor::from_op(self.node.shape.clone(), data, Op::Ln(self.clone()), "ln")
    }

    pub fn sqrt(&self) -> Result<DenseTensor> {
        let data = self.data().iter().map(|v| v.sqrt()).collect();
        DenseTensor::from_op(self.node.shape.clone(), data, Op::Sqrt(self.clone()), "sqrt")
    }

    pub fn square(&self) -> Result<DenseTensor> {
        let data = self.data().iter().map(|v| v * v).collect();
        DenseTensor::from_op(
            self.node.shape.clone(),
            data,
            Op::Square(self.clone()),
            "square",
        )
    }

    pub fn abs(&self) -> Result<DenseTensor> {
        let data = self.data().iter().map(|v| v.abs()).collect();
        DenseTensor::from_op(self.node.shape.clone(), data, Op::Abs(self.clone()), "abs")
    }

    pub fn relu(&self) -> Result<DenseTensor> {
        let data = self.data().iter().map(|v| v.max(0.0)).collect();
        DenseTensor::from_op(self.node.shape.clone(), data, Op::Relu(self.clone()), "relu")
    }

    /// Elementwise power with a fixed exponent. Negative bases with a
    /// non-integer exponent surface as a numeric error.
    pub fn pow_scalar(&self, exponent: f64) -> Result<DenseTensor> {
        if !exponent.is_finite() {
            return Err(TensorError::Contract("pow_scalar: non-finite exponent".into()));
        }
        let data = self.data().iter().map(|v| v.powf(exponent)).collect();
        DenseTensor::from_op(
            self.node.shape.clone(),
            data,
            Op::PowScalar(self.clone(), exponent),
            "pow_scalar",
        )
    }

    pub fn scale(&self, factor: f64) -> Result<DenseTensor> {
        if !factor.is_finite() {
            return Err(TensorError::Contract("scale: non-finite factor".into()));
        }
        let data = self.data().iter().map(|v| v * factor).collect();
        DenseTensor::from_op(
            self.node.shape.clone(),
            data,
            Op::Scale(self.clone(), factor),
            "scale",
        )
    }

    pub fn add_scalar(&self, term: f64) -> Result<DenseTensor> {
        if !term.is_finite() {
            return Err(TensorError::Contract("add_scalar: non-finite term".into()));
        }
        let data = self.data().iter().map(|v| v + term).collect();
        DenseTensor::from_op(
            self.node.shape.clone(),
            data,
            Op::AddScalar(self.clone()),
            "add_scalar",
        )
    }

    // ---- linear algebra ----

    /// Rank-2 matrix product.
    pub fn matmul(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(TensorError::Dimension(format!(
                "matmul requires rank-2 operands, got {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (other.shape()[0], other.shape()[1]);
        if k != k2 {
            return Err(TensorError::Dimension(format!(
                "matmul inner extents differ: {:?} x {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = matmul_data(&self.data(), &other.data(), m, k, n);
        DenseTensor::from_op(
            vec![m, n],
            data,
            Op::Matmul(self.clone(), other.clone()),
            "matmul",
        )
    }

    /// Rank-2 transpose.
    pub fn transpose(&self) -> Result<DenseTensor> {
        if self.rank() != 2 {
            return Err(TensorError::Dimension(format!(
                "transpose requires rank 2, got {:?}",
                self.shape()
            )));
        }
        let (r, c) = (self.shape()[0], self.shape()[1]);
        let src = self.data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        drop(src);
        DenseTensor::from_op(vec![c, r], data, Op::Transpose(self.clone()), "transpose")
    }

    // ---- reductions ----

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<DenseTensor> {
        let (out_shape, data) = reduce_axis(self, axis, keepdim, false)?;
        DenseTensor::from_op(
            out_shape,
            data,
            Op::SumAxis {
                input: self.clone(),
                axis,
            },
            "sum_axis",
        )
    }

    /// Mean along one axis; the axis is removed or kept as length 1.
    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<DenseTensor> {
        let (out_shape, data) = reduce_axis(self, axis, keepdim, true)?;
        DenseTensor::from_op(
            out_shape,
            data,
            Op::MeanAxis {
                input: self.clone(),
                axis,
            },
            "mean_axis",
        )
    }

    /// Sum of every element, as a rank-0 tensor.
    pub fn sum_all(&self) -> Result<DenseTensor> {
        let total: f64 = self.data().iter().sum();
        DenseTensor::from_op(vec![], vec![total], Op::SumAll(self.clone()), "sum_all")
    }

    /// Mean of every element, as a rank-0 tensor.
    pub fn mean_all(&self) -> Result<DenseTensor> {
        if self.len() == 0 {
            return Err(TensorError::Dimension("mean_all of an empty tensor".into()));
        }
        self.sum_all()?.scale(1.0 / self.len() as f64)
    }

    // ---- shape manipulation ----

    pub fn reshape(&self, shape: &[usize]) -> Result<DenseTensor> {
        if numel(shape) != self.len() {
            return Err(TensorError::Dimension(format!(
                "reshape {:?} -> {:?} changes element count",
                self.shape(),
                shape
            )));
        }
        DenseTensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            Op::Reshape(self.clone()),
            "reshape",
        )
    }

    /// Contiguous sub-range `[start, start+len)` along one axis.
    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<DenseTensor> {
        if axis >= self.rank() {
            return Err(TensorError::Dimension(format!(
                "slice axis {axis} out of range for shape {:?}",
                self.shape()
            )));
        }
        let extent = self.shape()[axis];
        if len == 0 || start + len > extent {
            return Err(TensorError::Dimension(format!(
                "slice [{start}, {start}+{len}) exceeds axis extent {extent}"
            )));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        drop(src);
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = len;
        DenseTensor::from_op(
            out_shape,
            data,
            Op::Slice {
                input: self.clone(),
                axis,
                start,
                len,
            },
            "slice_axis",
        )
    }
}

/// Concatenate tensors along one axis. All other extents must match.
pub fn concat(parts: &[DenseTensor], axis: usize) -> Result<DenseTensor> {
    if parts.is_empty() {
        return Err(TensorError::Contract("concat of zero tensors".into()));
    }
    let rank = parts[0].rank();
    if axis >= rank {
        return Err(TensorError::Dimension(format!(
            "concat axis {axis} out of range for rank {rank}"
        )));
    }
    for p in parts {
        if p.rank() != rank {
            return Err(TensorError::Dimension("concat rank mismatch".into()));
        }
        for d in 0..rank {
            if d != axis && p.shape()[d] != parts[0].shape()[d] {
                return Err(TensorError::Dimension(format!(
                    "concat extent mismatch on axis {d}: {:?} vs {:?}",
                    p.shape(),
                    parts[0].shape()
                )));
            }
        }
    }
    let outer: usize = parts[0].shape()[..axis].iter().product();
    let inner: usize = parts[0].shape()[axis + 1..].iter().product();
    let total_axis: usize = parts.iter().map(|p| p.shape()[axis]).sum();
    let mut data = Vec::with_capacity(outer * total_axis * inner);
    for o in 0..outer {
        for p in parts {
            let ext = p.shape()[axis];
            let src = p.data();
            let base = o * ext * inner;
            data.extend_from_slice(&src[base..base + ext * inner]);
        }
    }
    let mut out_shape = parts[0].shape().to_vec();
    out_shape[axis] = total_axis;
    DenseTensor::from_op(
        out_shape,
        data,
        Op::Concat {
            inputs: parts.to_vec(),
            axis,
        },
        "concat",
    )
}

/// Numerically stable softmax along one axis. The per-slice maximum is
/// treated as a constant shift, which leaves both the value and the
/// gradient of the softmax unchanged.
pub fn softmax(x: &DenseTensor, axis: usize) -> Result<DenseTensor> {
    let m = max_axis_detached(x, axis)?;
    let e = x.sub(&m)?.exp()?;
    let s = e.sum_axis(axis, true)?;
    e.div(&s)
}

/// Per-slice maximum along an axis, kept as a length-1 axis, detached from
/// the graph.
pub fn max_axis_detached(x: &DenseTensor, axis: usize) -> Result<DenseTensor> {
    if axis >= x.rank() {
        return Err(TensorError::Dimension(format!(
            "max axis {axis} out of range for shape {:?}",
            x.shape()
        )));
    }
    let extent = x.shape()[axis];
    if extent == 0 {
        return Err(TensorError::Dimension("max over an empty axis".into()));
    }
    let outer: usize = x.shape()[..axis].iter().product();
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let src = x.data();
    let mut data = vec![f64::NEG_INFINITY; outer * inner];
    for o in 0..outer {
        for j in 0..extent {
            for i in 0..inner {
                let v = src[(o * extent + j) * inner + i];
                let slot = &mut data[o * inner + i];
                if v > *slot {
                    *slot = v;
                }
            }
        }
    }
    drop(src);
    let mut out_shape = x.shape().to_vec();
    out_shape[axis] = 1;
    DenseTensor::from_vec(data, &out_shape)
}

// ---- convolution support ----

/// Geometry of a 2-D convolution over a channels-first input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dGeom {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn col_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_height() * self.out_width()
    }

    fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(TensorError::Contract(
                "conv kernel and stride must be positive".into(),
            ));
        }
        if self.height + 2 * self.padding < self.kernel || self.width + 2 * self.padding < self.kernel
        {
            return Err(TensorError::Dimension(format!(
                "conv kernel {} does not fit padded input {}x{}",
                self.kernel,
                self.height + 2 * self.padding,
                self.width + 2 * self.padding
            )));
        }
        Ok(())
    }

}

/// Unfold a `(channels, height*width)` tensor into the patch matrix
/// `(channels*k*k, out_h*out_w)` so convolution becomes a matrix product.
pub fn im2col(x: &DenseTensor, geom: Conv2dGeom) -> Result<DenseTensor> {
    geom.validate()?;
    if x.rank() != 2 || x.shape()[0] != geom.in_channels || x.shape()[1] != geom.height * geom.width
    {
        return Err(TensorError::Dimension(format!(
            "im2col expects shape [{}, {}], got {:?}",
            geom.in_channels,
            geom.height * geom.width,
            x.shape()
        )));
    }
    let src = x.data();
    let (oh, ow) = (geom.out_height(), geom.out_width());
    let (h, w) = (geom.height, geom.width);
    let (k, s, p) = (geom.kernel, geom.stride, geom.padding);
    let mut data = Vec::with_capacity(geom.col_rows() * geom.col_cols());
    for c in 0..geom.in_channels {
        let plane = &src[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                for oy in 0..oh {
                    let iy = (oy * s + ki) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        data.resize(data.len() + ow, 0.0);
                        continue;
                    }
                    let row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    if s == 1 {
                        // With unit stride the in-bounds taps of one output
                        // row form a single contiguous run of the input row.
                        let lo = p.saturating_sub(kj).min(ow);
                        let hi = (w + p).saturating_sub(kj).min(ow).max(lo);
                        data.resize(data.len() + lo, 0.0);
                        if hi > lo {
                            data.extend_from_slice(&row[lo + kj - p..hi + kj - p]);
                        }
                        data.resize(data.len() + (ow - hi), 0.0);
                    } else {
                        for ox in 0..ow {
                            let ix = (ox * s + kj) as isize - p as isize;
                            data.push(if ix >= 0 && (ix as usize) < w {
                                row[ix as usize]
                            } else {
                                0.0
                            });
                        }
                    }
                }
            }
        }
    }
    drop(src);
    DenseTensor::from_op(
        vec![geom.col_rows(), geom.col_cols()],
        data,
        Op::Im2col {
            input: x.clone(),
            geom,
        },
        "im2col",
    )
}

/// Adjoint of [`im2col`]: scatter-add a patch-matrix gradient back onto the
/// `(channels, height*width)` input layout. Cells that read zero padding
/// contribute nothing.
pub(crate) fn col2im_acc(g: &[f64], geom: &Conv2dGeom, out: &mut [f64]) {
    let (oh, ow) = (geom.out_height(), geom.out_width());
    let (h, w) = (geom.height, geom.width);
    let (k, s, p) = (geom.kernel, geom.stride, geom.padding);
    let mut gi = 0usize;
    for c in 0..geom.in_channels {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                for oy in 0..oh {
                    let iy = (oy * s + ki) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        gi += ow;
                        continue;
                    }
                    let row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    if s == 1 {
                        let lo = p.saturating_sub(kj).min(ow);
                        let hi = (w + p).saturating_sub(kj).min(ow).max(lo);
                        if hi > lo {
                            let dst = &mut row[lo + kj - p..hi + kj - p];
                            for (d, &gv) in dst.iter_mut().zip(&g[gi + lo..gi + hi]) {
                                *d += gv;
                            }
                        }
                        gi += ow;
                    } else {
                        for ox in 0..ow {
                            let ix = (ox * s + kj) as isize - p as isize;
                            if ix >= 0 && (ix as usize) < w {
                                row[ix as usize] += g[gi];
                            }
                            gi += 1;
                        }
                    }
                }
            }
        }
    }
}

// ---- shared kernels (also used by the backward pass) ----

/// Accumulate `out_row += sum_p a_vals[p] * b rows` for one output row over
/// a block of four b rows, then any remainder, in ascending p order.
#[inline(always)]
fn matmul_row(arow: &[f64], b: &[f64], n: usize, orow: &mut [f64]) {
    let k = arow.len();
    let mut p = 0usize;
    while p + 4 <= k {
        let (a0, a1, a2, a3) = (arow[p], arow[p + 1], arow[p + 2], arow[p + 3]);
        if a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0 {
            p += 4;
            continue;
        }
        let b0 = &b[p * n..p * n + n];
        let b1 = &b[(p + 1) * n..(p + 1) * n + n];
        let b2 = &b[(p + 2) * n..(p + 2) * n + n];
        let b3 = &b[(p + 3) * n..(p + 3) * n + n];
        for j in 0..n {
            let mut acc = orow[j];
            acc += a0 * b0[j];
            acc += a1 * b1[j];
            acc += a2 * b2[j];
            acc += a3 * b3[j];
            orow[j] = acc;
        }
        p += 4;
    }
    while p < k {
        let aip = arow[p];
        if aip != 0.0 {
            let brow = &b[p * n..p * n + n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += aip * bv;
            }
        }
        p += 1;
    }
}

/// Same sums as [`matmul_row`] for two output rows at once, reading each
/// block of b rows a single time for the pair.
#[inline(always)]
fn matmul_row_pair(ar0: &[f64], ar1: &[f64], b: &[f64], n: usize, o0: &mut [f64], o1: &mut [f64]) {
    let k = ar0.len();
    let mut p = 0usize;
    while p + 4 <= k {
        let (a00, a01, a02, a03) = (ar0[p], ar0[p + 1], ar0[p + 2], ar0[p + 3]);
        let (a10, a11, a12, a13) = (ar1[p], ar1[p + 1], ar1[p + 2], ar1[p + 3]);
        let b0 = &b[p * n..p * n + n];
        let b1 = &b[(p + 1) * n..(p + 1) * n + n];
        let b2 = &b[(p + 2) * n..(p + 2) * n + n];
        let b3 = &b[(p + 3) * n..(p + 3) * n + n];
        for j in 0..n {
            let (w0, w1, w2, w3) = (b0[j], b1[j], b2[j], b3[j]);
            let mut s0 = o0[j];
            s0 += a00 * w0;
            s0 += a01 * w1;
            s0 += a02 * w2;
            s0 += a03 * w3;
            o0[j] = s0;
            let mut s1 = o1[j];
            s1 += a10 * w0;
            s1 += a11 * w1;
            s1 += a12 * w2;
            s1 += a13 * w3;
            o1[j] = s1;
        }
        p += 4;
    }
    while p < k {
        let (a0, a1) = (ar0[p], ar1[p]);
        let brow = &b[p * n..p * n + n];
        for j in 0..n {
            o0[j] += a0 * brow[j];
            o1[j] += a1 * brow[j];
        }
        p += 1;
    }
}

pub(crate) fn matmul_data(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    let mut i = 0usize;
    while i + 2 <= m {
        let (head, tail) = out.split_at_mut((i + 1) * n);
        matmul_row_pair(
            &a[i * k..(i + 1) * k],
            &a[(i + 1) * k..(i + 2) * k],
            b,
            n,
            &mut head[i * n..],
            &mut tail[..n],
        );
        i += 2;
    }
    if i < m {
        matmul_row(&a[i * k..(i + 1) * k], b, n, &mut out[i * n..(i + 1) * n]);
    }
    out
}

fn reduce_axis(
    x: &DenseTensor,
    axis: usize,
    keepdim: bool,
    mean: bool,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if axis >= x.rank() {
        return Err(TensorError::Dimension(format!(
            "reduction axis {axis} out of range for shape {:?}",
            x.shape()
        )));
    }
    let extent = x.shape()[axis];
    if extent == 0 {
        return Err(TensorError::Dimension("reduction over an empty axis".into()));
    }
    let outer: usize = x.shape()[..axis].iter().product();
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let src = x.data();
    let mut data = vec![0.0; outer * inner];
    for o in 0..outer {
        for j in 0..extent {
            let base = (o * extent + j) * inner;
            for i in 0..inner {
                data[o * inner + i] += src[base + i];
            }
        }
    }
    if mean {
        let inv = 1.0 / extent as f64;
        for v in &mut data {
            *v *= inv;
        }
    }
    drop(src);
    let mut out_shape = x.shape().to_vec();
    if keepdim {
        out_shape[axis] = 1;
    } else {
        out_shape.remove(axis);
    }
    Ok((out_shape, data))
}

/// Shape two operands broadcast to, NumPy style: align right, each pair of
/// extents must match or one must be 1. Only the patterns the attention math
/// needs are exercised, but the rule is implemented uniformly.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let ad = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let bd = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if ad == bd {
            ad
        } else if ad == 1 {
            bd
        } else if bd == 1 {
            ad
        } else {
            return Err(TensorError::Dimension(format!(
                "shapes {a:?} and {b:?} do not broadcast"
            )));
        };
    }
    Ok(out)
}

/// Per-output-dim stride into a (right-aligned) operand; 0 where the operand
/// is broadcast along that dim.
pub(crate) fn bcast_strides(shape: &[usize], out_rank: usize) -> Vec<usize> {
    let mut strides = vec![0usize; out_rank];
    let offset = out_rank - shape.len();
    let mut s = 1usize;
    for i in (0..shape.len()).rev() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { s };
        s *= shape[i];
    }
    strides
}

/// Base offset into a broadcast operand for one row of the output, where a
/// "row" is everything but the last axis.
fn row_base(row: usize, out_shape: &[usize], strides: &[usize]) -> usize {
    let mut idx = 0usize;
    let mut rem = row;
    for d in (0..out_shape.len() - 1).rev() {
        let coord = rem % out_shape[d];
        rem /= out_shape[d];
        idx += coord * strides[d];
    }
    idx
}

fn binary_map(
    a: &DenseTensor,
    b: &DenseTensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if a.shape() == b.shape() {
        let av = a.data();
        let bv = b.data();
        let out = av.iter().zip(bv.iter()).map(|(&x, &y)| f(x, y)).collect();
        return Ok((out, a.shape().to_vec()));
    }
    let out_shape = broadcast_shape(a.shape(), b.shape())?;
    let n = numel(&out_shape);
    if n == 0 {
        return Ok((Vec::new(), out_shape));
    }
    // Operands are contiguous, so along the last axis each one advances by
    // either 1 or 0 (broadcast); rows then only need a base offset each.
    let rank = out_shape.len();
    let cols = out_shape[rank - 1];
    let rows = n / cols;
    let astr = bcast_strides(a.shape(), rank);
    let bstr = bcast_strides(b.shape(), rank);
    let av = a.data();
    let bv = b.data();
    let mut out = Vec::with_capacity(n);
    for row in 0..rows {
        let ab = row_base(row, &out_shape, &astr);
        let bb = row_base(row, &out_shape, &bstr);
        match (astr[rank - 1], bstr[rank - 1]) {
            (1, 1) => {
                let ar = &av[ab..ab + cols];
                let br = &bv[bb..bb + cols];
                out.extend(ar.iter().zip(br.iter()).map(|(&x, &y)| f(x, y)));
            }
            (1, 0) => {
                let y = bv[bb];
                out.extend(av[ab..ab + cols].iter().map(|&x| f(x, y)));
            }
            (0, 1) => {
                let x = av[ab];
                out.extend(bv[bb..bb + cols].iter().map(|&y| f(x, y)));
            }
            _ => {
                let v = f(av[ab], bv[bb]);
                out.resize(out.len() + cols, v);
            }
        }
    }
    Ok((out, out_shape))
}

/// Materialize an operand at the broadcast output shape.
pub(crate) fn expand_to(data: &[f64], shape: &[usize], out_shape: &[usize]) -> Vec<f64> {
    if shape == out_shape {
        return data.to_vec();
    }
    let n = numel(out_shape);
    if n == 0 {
        return Vec::new();
    }
    let rank = out_shape.len();
    let cols = out_shape[rank - 1];
    let rows = n / cols;
    let str_in = bcast_strides(shape, rank);
    let mut out = Vec::with_capacity(n);
    for row in 0..rows {
        let idx = row_base(row, out_shape, &str_in);
        if str_in[rank - 1] == 1 {
            out.extend_from_slice(&data[idx..idx + cols]);
        } else {
            out.resize(out.len() + cols, data[idx]);
        }
    }
    out
}

/// Sum a gradient at the broadcast output shape back down to an operand
/// shape (the adjoint of broadcasting).
pub(crate) fn reduce_to_shape(grad: &[f64], out_shape: &[usize], target: &[usize]) -> Vec<f64> {
    if out_shape == target {
        return grad.to_vec();
    }
    let mut out = vec![0.0; numel(target)];
    let n = numel(out_shape);
    if n == 0 {
        return out;
    }
    let rank = out_shape.len();
    let cols = out_shape[rank - 1];
    let rows = n / cols;
    let tstr = bcast_strides(target, rank);
    for row in 0..rows {
        let idx = row_base(row, out_shape, &tstr);
        let grow = &grad[row * cols..(row + 1) * cols];
        if tstr[rank - 1] == 0 {
            out[idx] += grow.iter().sum::<f64>();
        } else {
            for (o, &gv) in out[idx..idx + cols].iter_mut().zip(grow.iter()) {
                *o += gv;
            }
        }
    }
    out
}
