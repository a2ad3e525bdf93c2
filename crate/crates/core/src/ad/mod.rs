//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Tape`] records a DAG of tensor ops over `ArrayD<f64>`. Each op stores
//! only parent ids plus whatever constants it needs; [`Tape::backward`] walks
//! the tape in reverse and accumulates gradients into the leaves. The op set
//! is exactly what the model and losses need — no more.
//!
//! Invariants:
//! * every node value is a standard-layout (row-major, contiguous) array,
//!   so axis reshapes are views and 2-D matmul views are cheap;
//! * ops are pure: calling the same graph twice gives bit-identical values;
//! * `f64` throughout, so central-difference checks can resolve gradients to
//!   ~1e-9 relative error.

mod ops;

use ndarray::{ArrayD, IxDyn};

pub use ops::Op;

/// Handle to a tensor on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

pub(crate) struct Node {
    pub value: ArrayD<f64>,
    pub op: Op,
    /// Whether any leaf under this node wants a gradient.
    pub needs_grad: bool,
}

/// Gradient tape. Build a graph with the op methods, then call
/// [`Tape::backward`] on a scalar root.
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

/// Per-leaf gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: TensorId) -> Option<&ArrayD<f64>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: TensorId) -> Option<ArrayD<f64>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a differentiable leaf (a parameter or an input we want
    /// gradients for).
    pub fn leaf(&mut self, value: ArrayD<f64>) -> TensorId {
        self.push_node(value, Op::Leaf, true)
    }

    /// Insert a non-differentiable constant.
    pub fn constant(&mut self, value: ArrayD<f64>) -> TensorId {
        self.push_node(value, Op::Leaf, false)
    }

    pub fn value(&self, id: TensorId) -> &ArrayD<f64> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Extract a scalar from a 0-d (or single-element) tensor.
    pub fn scalar(&self, id: TensorId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!(v.len(), 1, "scalar() on tensor of shape {:?}", v.shape());
        v.iter().next().copied().unwrap_or(0.0)
    }

    pub(crate) fn push_node(&mut self, value: ArrayD<f64>, op: Op, needs_grad: bool) -> TensorId {
        debug_assert!(value.is_standard_layout());
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        id
    }

    pub(crate) fn needs_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// Reverse sweep from `root`, which is seeded with ones (use a 0-d root
    /// for a plain scalar loss). Returns gradients for every differentiable
    /// leaf reachable from the root; interior gradients are dropped as soon
    /// as they have been propagated to keep the high-water memory bounded.
    pub fn backward(&self, root: TensorId) -> Gradients {
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(ArrayD::ones(IxDyn(self.nodes[root.0].value.shape())));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            ops::backward_one(self, i, &g, &mut grads);
        }

        Gradients { grads }
    }
}

/// Accumulate `delta` into `slot` (allocating on first touch).
pub(crate) fn accumulate(slot: &mut Option<ArrayD<f64>>, delta: ArrayD<f64>) {
    match slot {
        Some(acc) => *acc += &delta,
        None => *slot = Some(delta),
    }
}
