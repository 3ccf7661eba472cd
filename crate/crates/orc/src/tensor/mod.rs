//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Define-by-run: every operation on a gradient-requiring tensor records a
//! node holding its (gradient-requiring) parents and a backward closure.
//! [`Tensor::backward`] on a scalar loss walks the recorded graph exactly once
//! in reverse topological order, accumulates gradients into the leaves, and
//! frees the tape. Leaf gradients persist and keep accumulating across
//! backward calls until explicitly zeroed.
//!
//! All reductions accumulate left-to-right so identical inputs produce
//! bit-identical outputs across runs. Graphs are thread-confined.

mod conv;
mod ops;

use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use crate::error::{Error, Result};

thread_local! {
    static NEXT_ID: Cell<u64> = Cell::new(0);
    static RECORDING: Cell<bool> = Cell::new(true);
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let v = c.get();
        c.set(v + 1);
        v
    })
}

pub(crate) fn recording() -> bool {
    RECORDING.with(Cell::get)
}

/// Suspends graph recording on the current thread while alive.
pub struct NoGradGuard {
    prev: bool,
}

impl NoGradGuard {
    pub fn new() -> Self {
        let prev = RECORDING.with(|r| r.replace(false));
        NoGradGuard { prev }
    }
}

impl Default for NoGradGuard {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        RECORDING.with(|r| r.set(self.prev));
    }
}

type BackwardFn = Box<dyn FnMut(&[f64])>;

struct TensorData {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    /// Gradient-requiring parents; drives the backward traversal.
    parents: Vec<Tensor>,
    backward_fn: Option<BackwardFn>,
}

/// A dense n-dimensional array of f64 with optional gradient tracking.
///
/// Cloning is cheap: handles share the underlying storage.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<TensorData>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = self.inner.borrow();
        write!(
            f,
            "Tensor(id={}, shape={:?}, requires_grad={})",
            d.id, d.shape, d.requires_grad
        )
    }
}

impl Tensor {
    fn new(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Tensor {
        Tensor {
            inner: Rc::new(RefCell::new(TensorData {
                id: next_id(),
                shape,
                data,
                requires_grad,
                grad: None,
                parents: Vec::new(),
                backward_fn: None,
            })),
        }
    }

    /// A constant (non-tracked) tensor from a flat row-major buffer.
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::shape(format!(
                "data length {} does not match shape {:?} (numel {})",
                data.len(),
                shape,
                numel
            )));
        }
        Ok(Tensor::new(data, shape.to_vec(), false))
    }

    /// A trainable leaf: gradients accumulate into it during backward.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::from_vec(data, shape)?;
        t.inner.borrow_mut().requires_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor::new(vec![0.0; numel], shape.to_vec(), false)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor::new(vec![value; numel], shape.to_vec(), false)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::new(vec![value], Vec::new(), false)
    }

    /// Records the result of an op. The backward builder is only invoked when
    /// the result actually tracks gradients, so no-grad forwards stay cheap.
    pub(crate) fn from_op(
        data: Vec<f64>,
        shape: Vec<usize>,
        inputs: &[&Tensor],
        make_backward: impl FnOnce() -> BackwardFn,
    ) -> Tensor {
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite value produced by a tensor op"
        );
        let track = recording() && inputs.iter().any(|t| t.requires_grad());
        let out = Tensor::new(data, shape, track);
        if track {
            let mut d = out.inner.borrow_mut();
            d.parents = inputs
                .iter()
                .filter(|t| t.requires_grad())
                .map(|t| (*t).clone())
                .collect();
            d.backward_fn = Some(make_backward());
        }
        out
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.borrow().id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn rank(&self) -> usize {
        self.inner.borrow().shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    /// Copy of the flat row-major values.
    pub fn values(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    /// The single value of a scalar (or one-element) tensor.
    pub fn item(&self) -> Result<f64> {
        let d = self.inner.borrow();
        if d.data.len() != 1 {
            return Err(Error::shape(format!(
                "item() on tensor with {} elements",
                d.data.len()
            )));
        }
        Ok(d.data[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// A constant copy of this tensor, cut off from the graph.
    pub fn detach(&self) -> Tensor {
        let d = self.inner.borrow();
        Tensor::new(d.data.clone(), d.shape.clone(), false)
    }

    /// In-place mutation of the raw values (optimizer updates). Must not be
    /// called on a tensor that is part of a live graph.
    pub fn with_data_mut(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.inner.borrow_mut().data);
    }

    /// Reads the raw values without copying.
    pub fn with_data(&self, f: impl FnOnce(&[f64])) {
        f(&self.inner.borrow().data);
    }

    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut d = self.inner.borrow_mut();
        debug_assert_eq!(d.data.len(), delta.len());
        match &mut d.grad {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => d.grad = Some(delta.to_vec()),
        }
    }

    /// Reverse-mode pass from a scalar loss. Every gradient-requiring leaf
    /// reachable from the loss receives `d loss / d leaf`, added on top of
    /// whatever gradient it already held. The tape is freed afterwards.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::shape(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        self.accumulate_grad(&[1.0]);
        for node in order.iter().rev() {
            let grad = node.inner.borrow().grad.clone();
            let Some(grad) = grad else { continue };
            let backward_fn = node.inner.borrow_mut().backward_fn.take();
            if let Some(mut f) = backward_fn {
                f(&grad);
                // Interior node: release the tape and the transient gradient.
                let mut d = node.inner.borrow_mut();
                d.parents.clear();
                d.grad = None;
            }
        }
        Ok(())
    }

    /// Post-order over the gradient-requiring ancestry (leaves first).
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        visited.insert(self.id());
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        while let Some((node, i)) = stack.pop() {
            let parent = node.inner.borrow().parents.get(i).cloned();
            match parent {
                Some(p) => {
                    stack.push((node, i + 1));
                    if visited.insert(p.id()) {
                        stack.push((p, 0));
                    }
                }
                None => order.push(node),
            }
        }
        order
    }
}
