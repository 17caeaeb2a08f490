//! Dense row-major `f64` tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheap reference-counted handle. Every operation that has
//! at least one gradient-tracking input records its parents and a closure
//! mapping the output gradient to per-parent gradients. [`Tensor::backward`]
//! walks the recorded graph in reverse topological order and accumulates
//! into the `grad` buffers of gradient-tracking leaves.
//!
//! Graphs are confined to the thread that built them (`Rc` handles).

mod conv;
mod nn;
mod ops;

pub use nn::{DEFAULT_LAYER_NORM_EPS, DEFAULT_LEAKY_SLOPE};

use std::cell::{Ref, RefCell, RefMut};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

pub(crate) type GradFn = Box<dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>>>;

struct Node {
    data: RefCell<Vec<f64>>,
    shape: Vec<usize>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    parents: Vec<Tensor>,
    grad_fn: Option<GradFn>,
}

#[derive(Clone)]
pub struct Tensor(Rc<Node>);

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn make(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Tensor {
        debug_assert_eq!(data.len(), numel(&shape));
        Tensor(Rc::new(Node {
            data: RefCell::new(data),
            shape,
            requires_grad,
            grad: RefCell::new(None),
            parents: Vec::new(),
            grad_fn: None,
        }))
    }

    /// Builds a constant (non-tracking) tensor.
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if shape.contains(&0) {
            return Err(Error::shape("from_vec", format!("zero extent in {shape:?}")));
        }
        if data.len() != numel(shape) {
            return Err(Error::shape(
                "from_vec",
                format!("{} elements for shape {shape:?}", data.len()),
            ));
        }
        Ok(Tensor::make(data, shape.to_vec(), false))
    }

    /// Builds a gradient-tracking leaf.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::from_vec(data, shape)?;
        Ok(Tensor::make(t.to_vec(), shape.to_vec(), true))
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor::make(vec![value; numel(shape)], shape.to_vec(), false)
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::make(vec![value], vec![1], false)
    }

    /// Records an operation result. Parents that do not track gradients are
    /// dropped together with the closure when no input requires grad.
    pub(crate) fn from_op(
        data: Vec<f64>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        grad_fn: GradFn,
    ) -> Tensor {
        debug_assert_eq!(data.len(), numel(&shape));
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if !requires_grad {
            return Tensor::make(data, shape, false);
        }
        Tensor(Rc::new(Node {
            data: RefCell::new(data),
            shape,
            requires_grad,
            grad: RefCell::new(None),
            parents,
            grad_fn: Some(grad_fn),
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.0.data.borrow()
    }

    /// Mutable access to a leaf's values. Used by optimizers and
    /// checkpoint loading; never call it while a graph built on this leaf
    /// still needs the old values.
    pub fn data_mut(&self) -> RefMut<'_, Vec<f64>> {
        assert!(self.is_leaf(), "data_mut on a non-leaf tensor");
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on shape {:?}", self.shape());
        self.0.data.borrow()[0]
    }

    /// Accumulated gradient of a tracking leaf (zeros before any backward).
    /// Non-tracking tensors and intermediate results return `None`.
    pub fn grad(&self) -> Option<Vec<f64>> {
        if !self.requires_grad() || !self.is_leaf() {
            return None;
        }
        Some(
            self.0
                .grad
                .borrow()
                .clone()
                .unwrap_or_else(|| vec![0.0; self.numel()]),
        )
    }

    pub fn zero_grad(&self) {
        self.0.grad.replace(None);
    }

    /// Copy of the values with no graph attached.
    pub fn detach(&self) -> Tensor {
        Tensor::make(self.to_vec(), self.0.shape.clone(), false)
    }

    pub(crate) fn ptr_id(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    /// Parents-before-children ordering of every tracking node reachable
    /// from `self`.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.ptr_id());
        while let Some((node, child)) = stack.pop() {
            if child < node.0.parents.len() {
                let parent = node.0.parents[child].clone();
                stack.push((node, child + 1));
                if parent.requires_grad() && visited.insert(parent.ptr_id()) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(node);
            }
        }
        order
    }

    /// Reverse-mode pass from a single-element root. Leaf gradients
    /// accumulate across calls; callers zero them between steps.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarRoot(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        let mut pending: HashMap<usize, Vec<f64>> = HashMap::new();
        pending.insert(self.ptr_id(), vec![1.0]);
        for node in order.iter().rev() {
            let Some(g) = pending.remove(&node.ptr_id()) else {
                continue;
            };
            let Some(grad_fn) = node.0.grad_fn.as_ref() else {
                let mut slot = node.0.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => *slot = Some(g),
                }
                continue;
            };
            let parent_grads = grad_fn(&g);
            debug_assert_eq!(parent_grads.len(), node.0.parents.len());
            for (parent, pg) in node.0.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !parent.requires_grad() {
                    continue;
                }
                debug_assert_eq!(pg.len(), parent.numel());
                match pending.get_mut(&parent.ptr_id()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                    None => {
                        pending.insert(parent.ptr_id(), pg);
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
    fn square_gradient() {
        let x = Tensor::param(vec![3.0], &[1]).unwrap();
        let y = x.mul(&x).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let x = Tensor::param(vec![1.0, -2.0, 5.0, 0.5], &[2, 2]).unwrap();
        x.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn diamond_graph_accumulates() {
        for v in [-1.5, 0.0, 2.0] {
            let x = Tensor::param(vec![v], &[1]).unwrap();
            let y = x.mul(&x).unwrap().add(&x).unwrap();
            y.backward().unwrap();
            assert_eq!(x.grad().unwrap(), vec![2.0 * v + 1.0]);
        }
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::param(vec![2.0], &[1]).unwrap();
        let y = x.mul(&x).unwrap();
        y.backward().unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![8.0]);
        x.zero_grad();
        assert_eq!(x.grad().unwrap(), vec![0.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(x.backward(), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn constants_do_not_track() {
        let a = Tensor::ones(&[2]);
        let b = a.add(&a).unwrap();
        assert!(!b.requires_grad());
        assert!(b.grad().is_none());
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Tensor::from_vec(vec![1.0; 3], &[2, 2]).is_err());
        assert!(Tensor::from_vec(vec![], &[0]).is_err());
    }
}
