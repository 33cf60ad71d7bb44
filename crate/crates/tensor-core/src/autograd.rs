//! Reverse-mode differentiation over the operation graph.
//!
//! The graph is recorded dynamically as ops execute and freed once the
//! tensors holding it go out of scope; parameters keep only their values
//! and accumulated gradients. [`grad_check_multi`] verifies any
//! differentiable composition against central finite differences.

use std::collections::{HashMap, HashSet};

use crate::error::{Result, TensorError};
use crate::tensor::{expand_to, reduce_to_shape, Conv2dGeom, DenseTensor};

/// Recipe that produced a tensor, holding handles to its inputs.
pub(crate) enum Op {
    Leaf,
    Add(DenseTensor, DenseTensor),
    Sub(DenseTensor, DenseTensor),
    Mul(DenseTensor, DenseTensor),
    Div(DenseTensor, DenseTensor),
    Neg(DenseTensor),
    Exp(DenseTensor),
    Ln(DenseTensor),
    Sqrt(DenseTensor),
    Square(DenseTensor),
    Abs(DenseTensor),
    Relu(DenseTensor),
    PowScalar(DenseTensor, f64),
    Scale(DenseTensor, f64),
    AddScalar(DenseTensor),
    Matmul(DenseTensor, DenseTensor),
    Transpose(DenseTensor),
    SumAxis { input: DenseTensor, axis: usize },
    MeanAxis { input: DenseTensor, axis: usize },
    SumAll(DenseTensor),
    Reshape(DenseTensor),
    Slice {
        input: DenseTensor,
        axis: usize,
        start: usize,
        len: usize,
    },
    Concat {
        inputs: Vec<DenseTensor>,
        axis: usize,
    },
    Im2col {
        input: DenseTensor,
        geom: Conv2dGeom,
    },
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<&DenseTensor> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::Matmul(a, b) => {
                vec![a, b]
            }
            Op::Neg(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Sqrt(a)
            | Op::Square(a)
            | Op::Abs(a)
            | Op::Relu(a)
            | Op::PowScalar(a, _)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Transpose(a)
            | Op::SumAll(a)
            | Op::Reshape(a) => vec![a],
            Op::SumAxis { input, .. }
            | Op::MeanAxis { input, .. }
            | Op::Slice { input, .. }
            | Op::Im2col { input, .. } => vec![input],
            Op::Concat { inputs, .. } => inputs.iter().collect(),
        }
    }
}

/// Graph nodes ordered so that every tensor appears after all tensors
/// computed from it when iterated in reverse.
fn topo_order(root: &DenseTensor) -> Vec<DenseTensor> {
    let mut order = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(DenseTensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        for p in t.node.op.parents() {
            if p.requires_grad() && !visited.contains(&p.id()) {
                stack.push((p.clone(), false));
            }
        }
    }
    order
}

impl DenseTensor {
    /// Backpropagate from a scalar. Every gradient-tracking tensor that the
    /// scalar depends on has its `grad` slot accumulated; repeated calls
    /// keep accumulating until grads are cleared.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward requires a single-element loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(TensorError::Contract(
                "backward on a tensor with no gradient-tracking inputs".into(),
            ));
        }
        let order = topo_order(self);
        let mut adjoints: HashMap<u64, Vec<f64>> = HashMap::new();
        adjoints.insert(self.id(), vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = adjoints.remove(&t.id()) else {
                continue;
            };
            t.accumulate_grad(&g)?;
            backprop_node(t, &g, &mut adjoints);
        }
        Ok(())
    }
}

fn acc(adjoints: &mut HashMap<u64, Vec<f64>>, parent: &DenseTensor, contrib: Vec<f64>) {
    if !parent.requires_grad() {
        return;
    }
    match adjoints.entry(parent.id()) {
        std::collections::hash_map::Entry::Occupied(mut e) => {
            for (slot, c) in e.get_mut().iter_mut().zip(contrib) {
                *slot += c;
            }
        }
        std::collections::hash_map::Entry::Vacant(e) => {
            e.insert(contrib);
        }
    }
}

fn backprop_node(t: &DenseTensor, g: &[f64], adjoints: &mut HashMap<u64, Vec<f64>>) {
    let out_shape = t.shape().to_vec();
    match &t.node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            acc(adjoints, a, reduce_to_shape(g, &out_shape, a.shape()));
            acc(adjoints, b, reduce_to_shape(g, &out_shape, b.shape()));
        }
        Op::Sub(a, b) => {
            acc(adjoints, a, reduce_to_shape(g, &out_shape, a.shape()));
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            acc(adjoints, b, reduce_to_shape(&neg, &out_shape, b.shape()));
        }
        Op::Mul(a, b) => {
            if a.requires_grad() {
                let bx = expand_to(&b.data(), b.shape(), &out_shape);
                let ca: Vec<f64> = g.iter().zip(&bx).map(|(gv, bv)| gv * bv).collect();
                acc(adjoints, a, reduce_to_shape(&ca, &out_shape, a.shape()));
            }
            if b.requires_grad() {
                let ax = expand_to(&a.data(), a.shape(), &out_shape);
                let cb: Vec<f64> = g.iter().zip(&ax).map(|(gv, av)| gv * av).collect();
                acc(adjoints, b, reduce_to_shape(&cb, &out_shape, b.shape()));
            }
        }
        Op::Div(a, b) => {
            let bx = expand_to(&b.data(), b.shape(), &out_shape);
            if a.requires_grad() {
                let ca: Vec<f64> = g.iter().zip(&bx).map(|(gv, bv)| gv / bv).collect();
                acc(adjoints, a, reduce_to_shape(&ca, &out_shape, a.shape()));
            }
            if b.requires_grad() {
                let ax = expand_to(&a.data(), a.shape(), &out_shape);
                let cb: Vec<f64> = g
                    .iter()
                    .zip(&ax)
                    .zip(&bx)
                    .map(|((gv, av), bv)| -gv * av / (bv * bv))
                    .collect();
                acc(adjoints, b, reduce_to_shape(&cb, &out_shape, b.shape()));
            }
        }
        Op::Neg(a) => acc(adjoints, a, g.iter().map(|v| -v).collect()),
        Op::Exp(a) => {
            let out = t.data();
            acc(adjoints, a, g.iter().zip(out.iter()).map(|(gv, ov)| gv * ov).collect());
        }
        Op::Ln(a) => {
            let x = a.data();
            acc(adjoints, a, g.iter().zip(x.iter()).map(|(gv, xv)| gv / xv).collect());
        }
        Op::Sqrt(a) => {
            let out = t.data();
            acc(
                adjoints,
                a,
                g.iter().zip(out.iter()).map(|(gv, ov)| gv / (2.0 * ov)).collect(),
            );
        }
        Op::Square(a) => {
            let x = a.data();
            acc(
                adjoints,
                a,
                g.iter().zip(x.iter()).map(|(gv, xv)| 2.0 * gv * xv).collect(),
            );
        }
        Op::Abs(a) => {
            let x = a.data();
            let contrib = g
                .iter()
                .zip(x.iter())
                .map(|(gv, xv)| {
                    if *xv > 0.0 {
                        *gv
                    } else if *xv < 0.0 {
                        -*gv
                    } else {
                        0.0
                    }
                })
                .collect();
            acc(adjoints, a, contrib);
        }
        Op::Relu(a) => {
            let x = a.data();
            acc(
                adjoints,
                a,
                g.iter()
                    .zip(x.iter())
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                    .collect(),
            );
        }
        Op::PowScalar(a, e) => {
            if *e == 0.0 {
                // d/dx x^0 = 0 everywhere, including x = 0
                acc(adjoints, a, vec![0.0; a.len()]);
                return;
            }
            let x = a.data();
            acc(
                adjoints,
                a,
                g.iter()
                    .zip(x.iter())
                    .map(|(gv, xv)| gv * e * xv.powf(e - 1.0))
                    .collect(),
            );
        }
        Op::Scale(a, c) => acc(adjoints, a, g.iter().map(|v| v * c).collect()),
        Op::AddScalar(a) => acc(adjoints, a, g.to_vec()),
        Op::Matmul(a, b) => {
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let n = b.shape()[1];
            if a.requires_grad() {
                // dA = G B^T, materializing the transpose so the product
                // runs on the streaming row-major kernel.
                let bv = b.data();
                let mut bt = vec![0.0; n * k];
                for p in 0..k {
                    let brow = &bv[p * n..(p + 1) * n];
                    for (j, &v) in brow.iter().enumerate() {
                        bt[j * k + p] = v;
                    }
                }
                acc(adjoints, a, crate::tensor::matmul_data(g, &bt, m, n, k));
            }
            if b.requires_grad() {
                // dB = A^T G, materializing the transpose so the product
                // runs on the streaming row-major kernel.
                let av = a.data();
                let mut at = vec![0.0; k * m];
                for i in 0..m {
                    let arow = &av[i * k..(i + 1) * k];
                    for (p, &v) in arow.iter().enumerate() {
                        at[p * m + i] = v;
                    }
                }
                acc(adjoints, b, crate::tensor::matmul_data(&at, g, k, m, n));
            }
        }
        Op::Transpose(a) => {
            let (c, r) = (out_shape[0], out_shape[1]);
            let mut contrib = vec![0.0; r * c];
            for i in 0..c {
                for j in 0..r {
                    contrib[j * c + i] = g[i * r + j];
                }
            }
            acc(adjoints, a, contrib);
        }
        Op::SumAxis { input, axis } | Op::MeanAxis { input, axis } => {
            let extent = input.shape()[*axis];
            let outer: usize = input.shape()[..*axis].iter().product();
            let inner: usize = input.shape()[*axis + 1..].iter().product();
            let factor = if matches!(t.node.op, Op::MeanAxis { .. }) {
                1.0 / extent as f64
            } else {
                1.0
            };
            let mut contrib = vec![0.0; input.len()];
            for o in 0..outer {
                for j in 0..extent {
                    let base = (o * extent + j) * inner;
                    for i in 0..inner {
                        contrib[base + i] = g[o * inner + i] * factor;
                    }
                }
            }
            acc(adjoints, input, contrib);
        }
        Op::SumAll(a) => acc(adjoints, a, vec![g[0]; a.len()]),
        Op::Reshape(a) => acc(adjoints, a, g.to_vec()),
        Op::Slice {
            input,
            axis,
            start,
            len,
        } => {
            let extent = input.shape()[*axis];
            let outer: usize = input.shape()[..*axis].iter().product();
            let inner: usize = input.shape()[*axis + 1..].iter().product();
            let mut contrib = vec![0.0; input.len()];
            for o in 0..outer {
                let src = o * len * inner;
                let dst = (o * extent + start) * inner;
                contrib[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
            }
            acc(adjoints, input, contrib);
        }
        Op::Concat { inputs, axis } => {
            let outer: usize = out_shape[..*axis].iter().product();
            let inner: usize = out_shape[*axis + 1..].iter().product();
            let total = out_shape[*axis];
            let mut offset = 0usize;
            for part in inputs {
                let ext = part.shape()[*axis];
                if part.requires_grad() {
                    let mut contrib = vec![0.0; part.len()];
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        let dst = o * ext * inner;
                        contrib[dst..dst + ext * inner]
                            .copy_from_slice(&g[src..src + ext * inner]);
                    }
                    acc(adjoints, part, contrib);
                }
                offset += ext;
            }
        }
        Op::Im2col { input, geom } => {
            let mut contrib = vec![0.0; input.len()];
            crate::tensor::col2im_acc(g, geom, &mut contrib);
            acc(adjoints, input, contrib);
        }
    }
}

/// Default perturbation for finite-difference checks.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Compare the analytic gradient of `f` at `input` against central finite
/// differences. Returns the worst relative error
/// `|analytic - numeric| / max(1, |analytic|)` over all coordinates.
pub fn grad_check<F>(f: F, input: &DenseTensor, step: f64) -> Result<f64>
where
    F: Fn(&DenseTensor) -> Result<DenseTensor>,
{
    grad_check_multi(|xs| f(&xs[0]), &[input.clone()], step)
}

/// [`grad_check`] over several inputs jointly; the maximum is taken over
/// every coordinate of every input.
pub fn grad_check_multi<F>(f: F, inputs: &[DenseTensor], step: f64) -> Result<f64>
where
    F: Fn(&[DenseTensor]) -> Result<DenseTensor>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(TensorError::Contract("grad_check step must be positive".into()));
    }
    if inputs.is_empty() {
        return Err(TensorError::Contract("grad_check needs at least one input".into()));
    }
    let params: Vec<DenseTensor> = inputs
        .iter()
        .map(|t| DenseTensor::parameter(t.to_vec(), t.shape()))
        .collect::<Result<_>>()?;
    let loss = f(&params)?;
    if loss.len() != 1 {
        return Err(TensorError::Contract(format!(
            "grad_check target must be scalar, got shape {:?}",
            loss.shape()
        )));
    }
    loss.backward()?;

    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = params[k]
            .grad()
            .unwrap_or_else(|| vec![0.0; input.len()]);
        for i in 0..input.len() {
            let eval = |delta: f64| -> Result<f64> {
                let xs: Vec<DenseTensor> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| {
                        let mut d = t.to_vec();
                        if j == k {
                            d[i] += delta;
                        }
                        DenseTensor::from_vec(d, t.shape())
                    })
                    .collect::<Result<_>>()?;
                Ok(f(&xs)?.at(0))
            };
            let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(1.0);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
