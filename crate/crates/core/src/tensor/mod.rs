//! Dense tensors with reverse-mode differentiation.
//!
//! A [`Tape`] owns an arena of values plus the operations recorded while a
//! forward pass runs. [`Tensor`] is a cheap handle (tape + index) through
//! which ops are built. Backward replays the recorded nodes in exact reverse
//! order, accumulating adjoints, and folds them into each participating
//! value's gradient. Distinct tapes share nothing, so independent graphs
//! (e.g. cross-validation folds) can run on separate threads freely.

pub mod gradcheck;
pub mod kernels;
mod ops;

pub use ops::concat;

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub(crate) struct Value<S> {
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

/// Per-backward adjoint buffers, folded into `Value::grad` at the end so
/// that repeated backward calls accumulate instead of double-counting.
pub(crate) struct Adjoints<S> {
    bufs: Vec<Option<Vec<S>>>,
    active: Vec<bool>,
}

impl<S: Scalar> Adjoints<S> {
    fn new(values: &[Value<S>]) -> Self {
        Adjoints {
            bufs: values.iter().map(|_| None).collect(),
            active: values.iter().map(|v| v.requires_grad).collect(),
        }
    }

    pub(crate) fn get(&self, id: usize) -> Option<&[S]> {
        self.bufs[id].as_deref()
    }

    /// Remove and return a value's adjoint. Safe because every value is the
    /// output of at most one node, which consumes it exactly once.
    pub(crate) fn take(&mut self, id: usize) -> Option<Vec<S>> {
        self.bufs[id].take()
    }

    pub(crate) fn add(&mut self, id: usize, len: usize, contrib: impl Iterator<Item = S>) {
        if !self.active[id] {
            return;
        }
        let buf = self.bufs[id].get_or_insert_with(|| vec![S::zero(); len]);
        for (b, c) in buf.iter_mut().zip(contrib) {
            *b += c;
        }
    }

    /// Accumulate a pre-built contribution, moving it when the slot is empty.
    pub(crate) fn add_vec(&mut self, id: usize, contrib: Vec<S>) {
        if !self.active[id] {
            return;
        }
        match &mut self.bufs[id] {
            Some(buf) => buf.iter_mut().zip(contrib).for_each(|(b, c)| *b += c),
            slot => *slot = Some(contrib),
        }
    }
}

type BackwardFn<S> = Box<dyn Fn(&[Value<S>], &mut Adjoints<S>)>;

pub(crate) struct Node<S> {
    #[allow(dead_code)]
    op: &'static str,
    output: usize,
    backward: BackwardFn<S>,
}

pub(crate) struct TapeInner<S> {
    values: Vec<Value<S>>,
    nodes: Vec<Node<S>>,
}

/// Recording tape for one computation graph.
pub struct Tape<S: Scalar> {
    inner: Rc<RefCell<TapeInner<S>>>,
}

impl<S: Scalar> Clone for Tape<S> {
    fn clone(&self) -> Self {
        Tape { inner: Rc::clone(&self.inner) }
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { inner: Rc::new(RefCell::new(TapeInner { values: Vec::new(), nodes: Vec::new() })) }
    }

    /// Create a leaf tensor.
    pub fn leaf(&self, data: Vec<S>, shape: &[usize], requires_grad: bool) -> Result<Tensor<S>> {
        let numel: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Contract { message: format!("tensor shape must have all dims >= 1, got {shape:?}") });
        }
        if numel != data.len() {
            return Err(Error::dim("leaf", shape, data.len()));
        }
        Ok(self.push_value(shape.to_vec(), data, requires_grad))
    }

    /// Leaf without gradient tracking.
    pub fn constant(&self, data: Vec<S>, shape: &[usize]) -> Result<Tensor<S>> {
        self.leaf(data, shape, false)
    }

    pub fn n_nodes(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn n_values(&self) -> usize {
        self.inner.borrow().values.len()
    }

    /// Clear all accumulated gradients, keeping values and nodes.
    pub fn zero_grads(&self) {
        for v in self.inner.borrow_mut().values.iter_mut() {
            v.grad = None;
        }
    }

    fn same_tape(&self, other: &Tape<S>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn push_value(&self, shape: Vec<usize>, data: Vec<S>, requires_grad: bool) -> Tensor<S> {
        let mut inner = self.inner.borrow_mut();
        let id = inner.values.len();
        inner.values.push(Value { shape: shape.clone(), data, requires_grad, grad: None });
        Tensor { tape: self.clone(), id, shape }
    }

    /// Run a closure against the value arena without copying.
    pub(crate) fn with_values<R>(&self, f: impl FnOnce(&[Value<S>]) -> R) -> R {
        f(&self.inner.borrow().values)
    }

    pub(crate) fn push_node(&self, op: &'static str, output: usize, backward: BackwardFn<S>) {
        self.inner.borrow_mut().nodes.push(Node { op, output, backward });
    }
}

/// Handle to a value on a tape.
pub struct Tensor<S: Scalar> {
    tape: Tape<S>,
    id: usize,
    shape: Vec<usize>,
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor").field("id", &self.id).field("shape", &self.shape).finish()
    }
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor { tape: self.tape.clone(), id: self.id, shape: self.shape.clone() }
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn tape(&self) -> &Tape<S> {
        &self.tape
    }

    /// Copy of the value's data.
    pub fn data(&self) -> Vec<S> {
        self.tape.inner.borrow().values[self.id].data.clone()
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> S {
        let inner = self.tape.inner.borrow();
        debug_assert_eq!(inner.values[self.id].data.len(), 1);
        inner.values[self.id].data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().values[self.id].requires_grad
    }

    /// Accumulated gradient, if any backward pass reached this tensor.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.tape.inner.borrow().values[self.id].grad.clone()
    }

    /// Gradient, with zeros standing in for "no flow reached this tensor".
    pub fn grad_or_zeros(&self) -> Vec<S> {
        self.grad().unwrap_or_else(|| vec![S::zero(); self.numel()])
    }

    pub fn all_finite(&self) -> bool {
        self.tape.inner.borrow().values[self.id].data.iter().all(|v| v.is_finite())
    }

    /// Reverse-mode pass from this scalar. Gradients of every participating
    /// `requires_grad` tensor accumulate across repeated calls.
    pub fn backward(&self) -> Result<()> {
        let mut inner = self.tape.inner.borrow_mut();
        if inner.values[self.id].data.len() != 1 {
            return Err(Error::Contract {
                message: format!(
                    "backward requires a scalar; got shape {:?}",
                    inner.values[self.id].shape
                ),
            });
        }
        let TapeInner { values, nodes } = &mut *inner;
        let mut adj = Adjoints::new(values);
        adj.active[self.id] = true;
        adj.add(self.id, 1, std::iter::once(S::one()));
        for node in nodes.iter().rev() {
            if adj.get(node.output).is_some() {
                (node.backward)(values, &mut adj);
            }
        }
        for (value, buf) in values.iter_mut().zip(adj.bufs) {
            if let (true, Some(b)) = (value.requires_grad, buf) {
                match &mut value.grad {
                    Some(g) => g.iter_mut().zip(b).for_each(|(g, c)| *g += c),
                    None => value.grad = Some(b),
                }
            }
        }
        Ok(())
    }

    pub(crate) fn id(&self) -> usize {
        self.id
    }

    pub(crate) fn check_same_tape(&self, other: &Tensor<S>, op: &str) -> Result<()> {
        if self.tape.same_tape(&other.tape) {
            Ok(())
        } else {
            Err(Error::Contract { message: format!("{op}: operands live on different tapes") })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tape() -> Tape<f64> {
        Tape::new()
    }

    #[test]
    fn leaf_shape_must_match_data() {
        let t = tape();
        assert!(t.leaf(vec![1.0, 2.0], &[3], true).is_err());
        assert!(t.leaf(vec![1.0, 2.0], &[], true).is_err());
        assert!(t.leaf(vec![1.0, 2.0], &[2], true).is_ok());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let t = tape();
        let x = t.leaf(vec![1.0, 2.0], &[2], true).unwrap();
        assert!(matches!(x.backward(), Err(Error::Contract { .. })));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let t = tape();
        let x = t.leaf(vec![1.0, 2.0, 3.0], &[3], true).unwrap();
        let loss = x.sum().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn quadratic_gradient() {
        // loss = sum(x*x), x=[1,2,3] -> grad [2,4,6]
        let t = tape();
        let x = t.leaf(vec![1.0, 2.0, 3.0], &[3], true).unwrap();
        let loss = x.mul(&x).unwrap().sum().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let t = tape();
        let x = t.leaf(vec![1.0, 2.0], &[2], true).unwrap();
        let loss = x.sum().unwrap();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn disconnected_tensor_gets_zero_grad() {
        let t = tape();
        let x = t.leaf(vec![1.0, 2.0], &[2], true).unwrap();
        let y = t.leaf(vec![5.0], &[1], true).unwrap();
        let loss = x.sum().unwrap();
        loss.backward().unwrap();
        assert_eq!(y.grad(), None);
        assert_eq!(y.grad_or_zeros(), vec![0.0]);
    }

    #[test]
    fn diamond_graph_accumulates_both_paths() {
        // y = x*2 ; z = x*3 ; loss = sum(y + z) -> dx = 5
        let t = tape();
        let x = t.leaf(vec![1.0], &[1], true).unwrap();
        let y = x.scale(2.0).unwrap();
        let z = x.scale(3.0).unwrap();
        let loss = y.add(&z).unwrap().sum().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![5.0]);
    }

    #[test]
    fn cross_tape_ops_are_rejected() {
        let t1 = tape();
        let t2 = tape();
        let a = t1.leaf(vec![1.0], &[1], true).unwrap();
        let b = t2.leaf(vec![1.0], &[1], true).unwrap();
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn zero_grads_resets() {
        let t = tape();
        let x = t.leaf(vec![1.0, 2.0], &[2], true).unwrap();
        let loss = x.sum().unwrap();
        loss.backward().unwrap();
        t.zero_grads();
        assert_eq!(x.grad(), None);
    }
}
