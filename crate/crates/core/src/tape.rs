//! Reverse-mode differentiation over the operations in [`crate::ops`].
//!
//! A [`Tape`] records operations in insertion order; every recorded node
//! keeps its forward value, which doubles as the saved activation for the
//! backward pass. A tape belongs to one worker and is never shared.

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{Dims, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Multiply-accumulate counts gathered while recording.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MacCounter {
    /// Spatial convolutions over feature maps.
    pub conv: u64,
    /// Grouped 1×1 convolutions.
    pub pointwise: u64,
    /// Per-channel scale and shift.
    pub affine: u64,
    /// Two multiplies per blended element.
    pub blend: u64,
}

impl MacCounter {
    pub fn total(&self) -> u64 {
        self.conv + self.pointwise + self.affine + self.blend
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Var, padding: usize },
    Grouped { input: Var, weight: Var, bias: Var, groups: usize },
    Prelu { input: Var, slope: Var },
    Blend { a: Var, b: Var, alpha: T },
    BlendMap { a: Var, b: Var, map: Tensor<T> },
    Add { a: Var, b: Var },
    Affine { input: Var, scale: Var, shift: Var },
    SwapNc { input: Var },
    Mse { pred: Var, target: Var },
    L1 { pred: Var, target: Var },
    Dot { input: Var, weights: Tensor<T> },
    Sum { a: Var, b: Var },
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::Conv2d { input, weight, bias, .. } | Op::Grouped { input, weight, bias, .. } => {
                vec![input, weight, bias]
            }
            Op::Prelu { input, slope } => vec![input, slope],
            Op::Blend { a, b, .. } | Op::BlendMap { a, b, .. } | Op::Add { a, b } | Op::Sum { a, b } => {
                vec![a, b]
            }
            Op::Affine { input, scale, shift } => vec![input, scale, shift],
            Op::SwapNc { input } | Op::Dot { input, .. } => vec![input],
            Op::Mse { pred, target } | Op::L1 { pred, target } => vec![pred, target],
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Gradients returned by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    macs: MacCounter,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            macs: MacCounter::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn macs(&self) -> MacCounter {
        self.macs
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value: Some(value),
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Record an input. Gradients are only accumulated for leaves created
    /// with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Value recorded for `var`.
    ///
    /// Panics if the value was released with [`Tape::release`].
    pub fn value(&self, var: Var) -> &Tensor<T> {
        self.try_value(var).expect("value was released from the tape")
    }

    pub fn try_value(&self, var: Var) -> Result<&Tensor<T>> {
        self.nodes
            .get(var.0)
            .ok_or_else(|| Error::TapeCorrupt(format!("node {} does not exist", var.0)))?
            .value
            .as_ref()
            .ok_or_else(|| Error::TapeCorrupt(format!("saved value of node {} was released", var.0)))
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Drop the stored value of a node to reclaim memory. A later backward
    /// pass that needs it fails with [`Error::TapeCorrupt`].
    pub fn release(&mut self, var: Var) {
        if let Some(node) = self.nodes.get_mut(var.0) {
            node.value = None;
        }
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, padding: usize) -> Result<Var> {
        let y = ops::conv2d(
            self.try_value(input)?,
            self.try_value(weight)?,
            self.try_value(bias)?,
            padding,
        )?;
        let f = self.value(weight).dims();
        let d = y.dims();
        self.macs.conv += (d.numel() * f.c * f.h * f.w) as u64;
        Ok(self.push(y, Op::Conv2d { input, weight, bias, padding }))
    }

    pub fn grouped_pointwise_conv(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        groups: usize,
    ) -> Result<Var> {
        let y = ops::grouped_pointwise_conv(
            self.try_value(input)?,
            self.try_value(weight)?,
            self.try_value(bias)?,
            groups,
        )?;
        let d = y.dims();
        self.macs.pointwise += (d.numel() * (d.c / groups)) as u64;
        Ok(self.push(y, Op::Grouped { input, weight, bias, groups }))
    }

    /// PReLU whose slope is the single element of `slope`.
    pub fn prelu(&mut self, input: Var, slope: Var) -> Result<Var> {
        let s = self.try_value(slope)?;
        if s.dims() != Dims::scalar() {
            return Err(Error::dims("prelu", format!("slope dims {} are not scalar", s.dims())));
        }
        let y = ops::prelu(self.try_value(input)?, s.item());
        Ok(self.push(y, Op::Prelu { input, slope }))
    }

    pub fn blend(&mut self, a: Var, b: Var, alpha: T) -> Result<Var> {
        let y = ops::blend(self.try_value(a)?, self.try_value(b)?, alpha)?;
        self.macs.blend += 2 * y.numel() as u64;
        Ok(self.push(y, Op::Blend { a, b, alpha }))
    }

    pub fn blend_map(&mut self, a: Var, b: Var, map: &Tensor<T>) -> Result<Var> {
        let y = ops::blend_map(self.try_value(a)?, self.try_value(b)?, map)?;
        self.macs.blend += 2 * y.numel() as u64;
        Ok(self.push(y, Op::BlendMap { a, b, map: map.clone() }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::add(self.try_value(a)?, self.try_value(b)?)?;
        Ok(self.push(y, Op::Add { a, b }))
    }

    pub fn channel_affine(&mut self, input: Var, scale: Var, shift: Var) -> Result<Var> {
        let y = ops::channel_affine(
            self.try_value(input)?,
            self.try_value(scale)?,
            self.try_value(shift)?,
        )?;
        self.macs.affine += y.numel() as u64;
        Ok(self.push(y, Op::Affine { input, scale, shift }))
    }

    pub fn swap_nc(&mut self, input: Var) -> Result<Var> {
        let y = ops::swap_nc(self.try_value(input)?);
        Ok(self.push(y, Op::SwapNc { input }))
    }

    pub fn loss_l2(&mut self, pred: Var, target: Var) -> Result<Var> {
        let v = ops::mse(self.try_value(pred)?, self.try_value(target)?)?;
        Ok(self.push(Tensor::scalar(v), Op::Mse { pred, target }))
    }

    pub fn loss_l1(&mut self, pred: Var, target: Var) -> Result<Var> {
        let v = ops::l1(self.try_value(pred)?, self.try_value(target)?)?;
        Ok(self.push(Tensor::scalar(v), Op::L1 { pred, target }))
    }

    /// Scalar `Σ input ⊙ weights` with constant `weights`.
    pub fn dot(&mut self, input: Var, weights: Tensor<T>) -> Result<Var> {
        let v = ops::dot(self.try_value(input)?, &weights)?;
        Ok(self.push(Tensor::scalar(v), Op::Dot { input, weights }))
    }

    /// Sum of two scalars.
    pub fn sum_scalars(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.try_value(a)?, self.try_value(b)?);
        if va.dims() != Dims::scalar() || vb.dims() != Dims::scalar() {
            return Err(Error::dims("sum_scalars", "operands must be scalars"));
        }
        let v = va.item() + vb.item();
        Ok(self.push(Tensor::scalar(v), Op::Sum { a, b }))
    }

    /// Back-propagate from a scalar `loss`. Nodes are visited in strict
    /// reverse insertion order.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = self.try_value(loss)?;
        if root.dims() != Dims::scalar() {
            return Err(Error::dims("backward", format!("loss dims {} are not scalar", root.dims())));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for p in node.op.parents() {
                if p.0 >= i {
                    return Err(Error::TapeCorrupt(format!(
                        "node {i} refers to later node {}",
                        p.0
                    )));
                }
            }
            let needs = |v: Var| self.nodes[v.0].requires_grad;
            let mut acc = |v: Var, t: Tensor<T>| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                &Op::Conv2d { input, weight, bias, padding } => {
                    let cg = ops::conv2d_backward(
                        &g,
                        self.try_value(input)?,
                        self.try_value(weight)?,
                        padding,
                        needs(input),
                        needs(weight) || needs(bias),
                    )?;
                    if let Some(t) = cg.input {
                        acc(input, t);
                    }
                    if needs(weight) {
                        acc(weight, cg.weight.expect("requested"));
                    }
                    if needs(bias) {
                        acc(bias, cg.bias.expect("requested"));
                    }
                }
                &Op::Grouped { input, weight, bias, groups } => {
                    let (gi, gw, gb) = ops::grouped_pointwise_conv_backward(
                        &g,
                        self.try_value(input)?,
                        self.try_value(weight)?,
                        groups,
                    )?;
                    if needs(input) {
                        acc(input, gi);
                    }
                    if needs(weight) {
                        acc(weight, gw);
                    }
                    if needs(bias) {
                        acc(bias, gb);
                    }
                }
                &Op::Prelu { input, slope } => {
                    let s = self.try_value(slope)?.item();
                    let (gi, gs) = ops::prelu_backward(&g, self.try_value(input)?, s)?;
                    if needs(input) {
                        acc(input, gi);
                    }
                    if needs(slope) {
                        acc(slope, Tensor::scalar(gs));
                    }
                }
                &Op::Blend { a, b, alpha } => {
                    if needs(a) {
                        acc(a, g.map(|v| (T::one() - alpha) * v));
                    }
                    if needs(b) {
                        acc(b, g.map(|v| alpha * v));
                    }
                }
                Op::BlendMap { a, b, map } => {
                    let plane = g.dims().plane();
                    if needs(*a) {
                        let t = Tensor::from_fn(g.dims(), |k| {
                            (T::one() - map.data()[k % plane]) * g.data()[k]
                        });
                        acc(*a, t);
                    }
                    if needs(*b) {
                        let t = Tensor::from_fn(g.dims(), |k| map.data()[k % plane] * g.data()[k]);
                        acc(*b, t);
                    }
                }
                &Op::Add { a, b } | &Op::Sum { a, b } => {
                    if needs(a) {
                        acc(a, g.clone());
                    }
                    if needs(b) {
                        acc(b, g);
                    }
                }
                &Op::Affine { input, scale, shift } => {
                    let (gi, gs, gb) = ops::channel_affine_backward(
                        &g,
                        self.try_value(input)?,
                        self.try_value(scale)?,
                    )?;
                    if needs(input) {
                        acc(input, gi);
                    }
                    if needs(scale) {
                        acc(scale, gs);
                    }
                    if needs(shift) {
                        acc(shift, gb);
                    }
                }
                &Op::SwapNc { input } => {
                    acc(input, ops::swap_nc(&g));
                }
                &Op::Mse { pred, target } | &Op::L1 { pred, target } => {
                    let (p, t) = (self.try_value(pred)?, self.try_value(target)?);
                    let upstream = g.item();
                    let is_l2 = matches!(node.op, Op::Mse { .. });
                    let dp = if is_l2 {
                        ops::mse_backward(p, t, upstream)
                    } else {
                        ops::l1_backward(p, t, upstream)
                    };
                    if needs(target) {
                        acc(target, dp.map(|v| -v));
                    }
                    if needs(pred) {
                        acc(pred, dp);
                    }
                }
                Op::Dot { input, weights } => {
                    let s = g.item();
                    acc(*input, weights.map(|w| w * s));
                }
            }
        }
        Ok(Gradients { grads })
    }
}
