//! Reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every op applied to its [`Var`]s together with a
//! hand-written adjoint. [`Tape::backward`] replays the adjoints in reverse
//! creation order, which is a valid topological order because an op can only
//! consume vars that already exist.

use std::cell::RefCell;
use std::rc::Rc;

use super::{Scalar, Tensor};

type Adjoint<T> = Box<dyn Fn(&Tensor<T>, &mut Gradients<T>)>;

struct Node<T: Scalar> {
    value: Rc<Tensor<T>>,
    requires_grad: bool,
    adjoint: Option<Adjoint<T>>,
}

pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a value recorded on a [`Tape`].
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Scalar> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Scalar> Copy for Var<'_, T> {}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.insert(Rc::new(value), true, None)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.insert(Rc::new(value), false, None)
    }

    fn insert(&self, value: Rc<Tensor<T>>, requires_grad: bool, adjoint: Option<Adjoint<T>>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            requires_grad,
            adjoint,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records the result of an op over `parents`. The adjoint receives the
    /// gradient of the output and accumulates into the parents' slots.
    pub(crate) fn record(
        &self,
        value: Tensor<T>,
        parents: &[Var<'_, T>],
        adjoint: impl Fn(&Tensor<T>, &mut Gradients<T>) + 'static,
    ) -> Var<'_, T> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].requires_grad)
        };
        #[cfg(debug_assertions)]
        if !value.all_finite() {
            let nodes = self.nodes.borrow();
            let finite_inputs = parents.iter().all(|p| nodes[p.id].value.all_finite());
            assert!(
                !finite_inputs,
                "non-finite output from finite inputs (shape {:?})",
                value.shape()
            );
        }
        let adjoint: Option<Adjoint<T>> = requires_grad.then(|| Box::new(adjoint) as Adjoint<T>);
        self.insert(Rc::new(value), requires_grad, adjoint)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_, T>) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[output.id].value.len(), 1, "backward needs a scalar output");
        let mut grads = Gradients {
            grads: (0..nodes.len()).map(|_| None).collect(),
            shapes: nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            needs: nodes.iter().map(|n| n.requires_grad).collect(),
        };
        grads.acc(output.id, |g| g[0] = g[0] + T::one());
        for id in (0..=output.id).rev() {
            let Some(adjoint) = nodes[id].adjoint.as_ref() else {
                continue;
            };
            if let Some(g) = grads.grads[id].take() {
                adjoint(&g, &mut grads);
                grads.grads[id] = Some(g);
            }
        }
        grads
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }
}

/// Gradient slots produced by [`Tape::backward`], indexed by var.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
    needs: Vec<bool>,
}

impl<T: Scalar> Gradients<T> {
    /// Accumulates into the gradient of `id` through `f`; a no-op for vars
    /// that do not require gradients.
    pub(crate) fn acc(&mut self, id: usize, f: impl FnOnce(&mut [T])) {
        if !self.needs[id] {
            return;
        }
        let g = self.grads[id].get_or_insert_with(|| Tensor::zeros(&self.shapes[id]));
        f(g.data_mut());
    }

    pub(crate) fn wants(&self, id: usize) -> bool {
        self.needs[id]
    }

    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads[var.id].as_ref()
    }

    /// Gradient of `var`, zero-filled when nothing flowed into it.
    pub fn wrt(&self, var: Var<'_, T>) -> Tensor<T> {
        self.grads[var.id]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.id]))
    }
}
