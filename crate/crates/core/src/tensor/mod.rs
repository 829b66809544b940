//! Dense `f64` tensors with a dynamically recorded reverse-mode autodiff graph.
//!
//! A [`Tensor`] is a cheap reference-counted handle. Operations on tensors that
//! require gradients record a node pointing at their inputs together with a
//! [`Backward`] implementation; [`Tensor::backward`] walks the recorded graph in
//! reverse creation order and accumulates gradients into the leaf tensors
//! (parameters). Gradients accumulate until [`Tensor::zero_grad`] is called.

mod gradcheck;
mod ops;
mod optim;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::{Ref, RefCell, RefMut};
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::{Error, Result};

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, FD_STEP};
pub use ops::dropout_mask;
pub use optim::{Adam, AdamConfig, AdamState};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Gradient rule of a recorded operation.
///
/// `backward` receives the gradient flowing into the operation's output and
/// returns one gradient buffer per input (`None` for inputs that do not need
/// one). Implementations are public so that callers can register custom ops
/// through [`Tensor::from_op`].
pub trait Backward {
    fn name(&self) -> &'static str;

    fn backward(&self, ctx: &BackwardContext<'_>) -> Vec<Option<Vec<f64>>>;
}

/// What a [`Backward`] implementation gets to look at.
pub struct BackwardContext<'a> {
    pub grad_output: &'a [f64],
    pub output: &'a [f64],
    pub output_shape: &'a [usize],
    pub inputs: &'a [Tensor],
}

impl BackwardContext<'_> {
    /// Whether input `i` wants a gradient.
    pub fn needs(&self, i: usize) -> bool {
        self.inputs[i].requires_grad()
    }
}

struct Node {
    inputs: Vec<Tensor>,
    op: Box<dyn Backward>,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    node: Option<Node>,
}

#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, node: Option<Node>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: next_id(),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                node,
            }),
        }
    }

    /// A constant tensor (never receives gradient).
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::Dimension {
                op: "new",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// A trainable leaf tensor.
    pub fn parameter(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let t = Self::new(shape, data)?;
        Ok(Self::build(t.inner.shape.clone(), t.to_vec(), true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(shape.to_vec(), vec![0.0; numel(shape)], false, None)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::build(shape.to_vec(), vec![value; numel(shape)], false, None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(Vec::new(), vec![value], false, None)
    }

    /// Records the result of a custom operation. The output requires a
    /// gradient iff any input does; only then is `op` kept.
    pub fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        inputs: Vec<Tensor>,
        op: Box<dyn Backward>,
    ) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::Dimension {
                op: op.name(),
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        let requires_grad = inputs.iter().any(Tensor::requires_grad);
        let node = requires_grad.then(|| Node { inputs, op });
        Ok(Self::build(shape, data, requires_grad, node))
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.inner.shape)
    }

    pub fn ndim(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.node.is_none()
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    /// Mutable access to the values. Meant for leaves (optimizer updates,
    /// loading weights); mutating an interior node does not re-run anything.
    pub fn data_mut(&self) -> RefMut<'_, Vec<f64>> {
        self.inner.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.inner.data.borrow()[0]
    }

    /// Accumulated gradient, if any was delivered since the last reset.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// A new leaf with a copy of the values and the same `requires_grad` flag.
    pub fn deep_clone(&self) -> Self {
        Self::build(self.inner.shape.clone(), self.to_vec(), self.requires_grad(), None)
    }

    /// A constant copy cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.inner.shape.clone(), self.to_vec(), false, None)
    }

    /// Whether both handles point at the same tensor.
    pub fn same(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    fn accumulate_leaf_grad(&self, g: &[f64]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Back-propagates from this scalar; leaf tensors that require a gradient
    /// get `d self / d leaf` added to their gradient buffer.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Reachable graph; creation ids give a topological order.
        let mut order: Vec<Tensor> = Vec::new();
        let mut seen: BTreeMap<u64, ()> = BTreeMap::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if seen.insert(t.inner.id, ()).is_some() {
                continue;
            }
            if let Some(node) = &t.inner.node {
                for input in &node.inputs {
                    if input.requires_grad() && !seen.contains_key(&input.inner.id) {
                        stack.push(input.clone());
                    }
                }
            }
            order.push(t);
        }
        order.sort_by(|a, b| b.inner.id.cmp(&a.inner.id));

        let mut pending: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        pending.insert(self.inner.id, vec![1.0]);
        for t in &order {
            let Some(node) = &t.inner.node else {
                if let Some(g) = pending.remove(&t.inner.id) {
                    t.accumulate_leaf_grad(&g);
                }
                continue;
            };
            let Some(grad_output) = pending.remove(&t.inner.id) else {
                continue;
            };
            let input_grads = {
                let output = t.inner.data.borrow();
                let ctx = BackwardContext {
                    grad_output: &grad_output,
                    output: &output,
                    output_shape: &t.inner.shape,
                    inputs: &node.inputs,
                };
                node.op.backward(&ctx)
            };
            for (input, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !input.requires_grad() {
                    continue;
                }
                debug_assert_eq!(g.len(), input.numel(), "{}", node.op.name());
                match pending.get_mut(&input.inner.id) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => {
                        pending.insert(input.inner.id, g);
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.data();
        let preview: Vec<f64> = data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("data", &preview)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_derivative_six_at_three() {
        let x = Tensor::parameter(&[], vec![3.0]).unwrap();
        let y = x.mul(&x).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn unrelated_parameter_gets_no_gradient() {
        let x = Tensor::parameter(&[2], vec![1.0, 2.0]).unwrap();
        let p = Tensor::parameter(&[2], vec![5.0, 5.0]).unwrap();
        let loss = x.sum();
        loss.backward().unwrap();
        assert!(p.grad().unwrap_or_else(|| vec![0.0; 2]).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn constants_never_accumulate() {
        let c = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let x = Tensor::parameter(&[2], vec![3.0, 4.0]).unwrap();
        c.mul(&x).unwrap().sum().backward().unwrap();
        assert!(c.grad().is_none());
        assert_eq!(x.grad().unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Tensor::parameter(&[2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(x.scale(2.0).backward(), Err(Error::Usage(_))));
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let x = Tensor::parameter(&[], vec![2.0]).unwrap();
        x.scale(3.0).backward().unwrap();
        x.scale(3.0).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn diamond_graph_sums_both_paths() {
        let x = Tensor::parameter(&[], vec![1.5]).unwrap();
        let a = x.scale(2.0);
        let b = x.scale(5.0);
        a.add(&b).unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![7.0]);
    }
}
