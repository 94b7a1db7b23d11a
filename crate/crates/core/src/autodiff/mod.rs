//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every primitive applied during a forward pass as an
//! append-only list of nodes, so inputs always precede their consumers.
//! [`Tape::backward`] then walks the list once in reverse, accumulating
//! vector-Jacobian products into the leaves that were marked as requiring
//! gradients.
//!
//! Backward passes read the tape without modifying it, so running
//! [`Tape::vjp`] several times with different seeds (as the Jacobian
//! estimator does) is idempotent. Tapes are otherwise meant to be rebuilt
//! for every training iteration.
//!
//! ```
//! use titan_core::{autodiff::Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let theta = tape.param(Tensor::vector(&[1.0, -2.0]));
//! let loss = tape.sum_of_squares(theta);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(theta).unwrap().data(), &[2.0, -4.0]);
//! ```

mod primitives;

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use primitives::NormStats;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operations the tape can record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    Leaf,
    MatMul,
    Add,
    Sub,
    Scale,
    Relu,
    Softplus,
    Sin,
    Sigmoid,
    ChannelNorm,
    SumOfSquares,
    BilinearUpsample,
    DownsampleBox,
    RadonApply,
    Mean,
    BroadcastAdd,
    Reshape,
}

/// A fixed linear map with an exact adjoint, recorded as one tape node.
///
/// The Radon operator is the main implementor.
pub trait LinearMap: Send + Sync {
    fn input_shape(&self) -> Vec<usize>;
    fn output_shape(&self) -> Vec<usize>;
    /// `out = A x`; `out` is overwritten.
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// `out = A^T y`; `out` is overwritten.
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]);
}

pub(crate) enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Softplus(Var),
    /// `cos(x)`, kept when `x` needs a gradient.
    Sin(Var, Option<Vec<f64>>),
    Sigmoid(Var),
    ChannelNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        frozen: bool,
    },
    SumOfSquares(Var),
    Mean(Var),
    BroadcastAdd {
        a: Var,
        row: Var,
    },
    Upsample {
        x: Var,
        h: usize,
        w: usize,
    },
    Downsample {
        x: Var,
        h: usize,
        w: usize,
        f: usize,
    },
    Linear {
        x: Var,
        map: Arc<dyn LinearMap>,
    },
    Reshape(Var),
}

impl Op {
    fn primitive(&self) -> Primitive {
        match self {
            Op::Leaf => Primitive::Leaf,
            Op::MatMul { .. } => Primitive::MatMul,
            Op::Add(..) => Primitive::Add,
            Op::Sub(..) => Primitive::Sub,
            Op::Scale(..) => Primitive::Scale,
            Op::Relu(_) => Primitive::Relu,
            Op::Softplus(_) => Primitive::Softplus,
            Op::Sin(..) => Primitive::Sin,
            Op::Sigmoid(_) => Primitive::Sigmoid,
            Op::ChannelNorm { .. } => Primitive::ChannelNorm,
            Op::SumOfSquares(_) => Primitive::SumOfSquares,
            Op::Mean(_) => Primitive::Mean,
            Op::BroadcastAdd { .. } => Primitive::BroadcastAdd,
            Op::Upsample { .. } => Primitive::BilinearUpsample,
            Op::Downsample { .. } => Primitive::DownsampleBox,
            Op::Linear { .. } => Primitive::RadonApply,
            Op::Reshape(_) => Primitive::Reshape,
        }
    }
}

pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub needs_grad: bool,
}

/// Recorded computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    frozen_params: bool,
}

/// Gradients of a root with respect to every leaf that requires them.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Removes and returns a gradient.
    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tape on which [`Tape::param`] records constants, for passes that only
    /// need gradients with respect to explicitly created leaves.
    pub fn with_frozen_params() -> Self {
        Self { nodes: Vec::new(), frozen_params: true }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Consumes the tape, returning one recorded value without copying it.
    pub fn into_value(mut self, var: Var) -> Tensor {
        core::mem::replace(&mut self.nodes[var.0].value, Tensor::zeros(&[0]))
    }

    pub fn primitive(&self, var: Var) -> Primitive {
        self.nodes[var.0].op.primitive()
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.needs(*v));
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Leaf node; gradients are reported for it when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, !self.frozen_params)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub(crate) fn shape_error(primitive: Primitive, detail: alloc::string::String) -> Error {
        Error::Shape { primitive, detail }
    }

    /// Gradient of a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let shape = self.shape(root);
        if !self.value(root).is_scalar() {
            return Err(Error::NonScalarRoot(shape.to_vec()));
        }
        self.vjp(root, Tensor::full(shape, 1.0))
    }

    /// Vector-Jacobian product `seed^T d(root)/d(leaf)` for every leaf.
    pub fn vjp(&self, root: Var, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.shape(root) {
            return Err(Self::shape_error(
                self.primitive(root),
                format!("seed shape {:?} vs root shape {:?}", seed.shape(), self.shape(root)),
            ));
        }
        let mut pending: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        let mut out: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        pending[root.0] = Some(seed);
        for idx in (0..=root.0).rev() {
            let Some(g) = pending[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                out[idx] = Some(g);
                continue;
            }
            primitives::backprop(self, node, g, &mut pending);
        }
        Ok(Gradients { grads: out })
    }
}

pub(crate) fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}
