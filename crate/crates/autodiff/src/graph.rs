use crate::element::Element;
use crate::error::{AutodiffError, Result};
use crate::ops::{elementwise, linalg, nn, reduce, structural};
use crate::shape::numel;
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum UnaryKind<E> {
    Neg,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Softplus,
    Square,
    Sqrt,
    Relu,
    Scale(E),
    AddScalar(E),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum MatMulLayout {
    /// Right operand is a single matrix: the left batch folds into its rows.
    SharedRhs,
    /// Broadcast batch: (lhs batch index, rhs batch index) per output batch.
    Pairs(Vec<(usize, usize)>),
}

#[derive(Debug, Clone)]
pub(crate) enum Op<E> {
    Leaf,
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
    },
    Unary {
        kind: UnaryKind<E>,
        a: Var,
    },
    Sum {
        a: Var,
    },
    SumAxis {
        a: Var,
        axis: usize,
    },
    Softmax {
        a: Var,
        axis: usize,
    },
    LogSoftmax {
        a: Var,
        axis: usize,
    },
    LogSumExp {
        a: Var,
        axis: usize,
    },
    MatMul {
        a: Var,
        b: Var,
        p: usize,
        q: usize,
        r: usize,
        layout: MatMulLayout,
    },
    Transpose {
        a: Var,
    },
    Reshape {
        a: Var,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        a: Var,
        axis: usize,
        start: usize,
    },
    WhereMask {
        a: Var,
        mask: Vec<bool>,
        mask_shape: Vec<usize>,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        xhat: Vec<E>,
        rstd: Vec<E>,
    },
    Dropout {
        a: Var,
        mask: Vec<E>,
    },
    StraightThrough {
        soft: Var,
    },
    Gather {
        a: Var,
        indices: Vec<usize>,
    },
    KernelMean {
        x: Var,
        y: Var,
        bandwidths: Vec<E>,
        exclude_diagonal: bool,
    },
}

impl<E> Op<E> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Binary { kind, .. } => match kind {
                BinaryKind::Add => "add",
                BinaryKind::Sub => "sub",
                BinaryKind::Mul => "mul",
                BinaryKind::Div => "div",
            },
            Op::Unary { kind, .. } => match kind {
                UnaryKind::Neg => "neg",
                UnaryKind::Exp => "exp",
                UnaryKind::Log => "log",
                UnaryKind::Tanh => "tanh",
                UnaryKind::Sigmoid => "sigmoid",
                UnaryKind::Softplus => "softplus",
                UnaryKind::Square => "square",
                UnaryKind::Sqrt => "sqrt",
                UnaryKind::Relu => "relu",
                UnaryKind::Scale(_) => "scale",
                UnaryKind::AddScalar(_) => "add_scalar",
            },
            Op::Sum { .. } => "sum",
            Op::SumAxis { .. } => "sum_axis",
            Op::Softmax { .. } => "softmax",
            Op::LogSoftmax { .. } => "log_softmax",
            Op::LogSumExp { .. } => "logsumexp",
            Op::MatMul { .. } => "matmul",
            Op::Transpose { .. } => "transpose",
            Op::Reshape { .. } => "reshape",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::WhereMask { .. } => "where_mask",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Dropout { .. } => "dropout",
            Op::StraightThrough { .. } => "straight_through",
            Op::Gather { .. } => "gather",
            Op::KernelMean { .. } => "kernel_mean",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node<E> {
    pub shape: Vec<usize>,
    pub value: Vec<E>,
    pub op: Op<E>,
    pub requires_grad: bool,
}

/// Per-node gradient buffers used during a backward sweep.
pub(crate) struct Grads<'a, E> {
    nodes: &'a [Node<E>],
    bufs: Vec<Option<Vec<E>>>,
}

impl<E: Element> Grads<'_, E> {
    #[inline]
    pub fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Returns the accumulator of `v`, allocating zeros on first touch.
    pub fn slot(&mut self, v: Var) -> &mut [E] {
        let len = self.nodes[v.0].value.len();
        self.bufs[v.0].get_or_insert_with(|| vec![E::zero(); len])
    }

    pub fn value(&self, v: Var) -> &[E] {
        &self.nodes[v.0].value
    }

    pub fn add(&mut self, v: Var, g: &[E]) {
        if !self.wants(v) {
            return;
        }
        match &mut self.bufs[v.0] {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    pub fn add_owned(&mut self, v: Var, g: Vec<E>) {
        if !self.wants(v) {
            return;
        }
        match &mut self.bufs[v.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
            slot @ None => *slot = Some(g),
        }
    }
}

/// Dynamic tape of tensor operations.
///
/// Nodes are appended in execution order, so index order is a topological
/// order and the backward sweep simply walks indices downward. A graph is
/// built fresh for every step and dropped (or [`Graph::clear`]ed) afterwards.
#[derive(Debug, Clone, Default)]
pub struct Graph<E: Element = f64> {
    pub(crate) nodes: Vec<Node<E>>,
    leaf_grads: Vec<Option<Vec<E>>>,
    trap: bool,
    trapped: Option<AutodiffError>,
}

impl<E: Element> Graph<E> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
            trap: false,
            trapped: None,
        }
    }

    /// Enables the numeric trap: the first op that produces NaN from a domain
    /// violation (e.g. `log` of a non-positive value) is recorded and
    /// reported by [`Graph::check`] and [`Graph::backward`].
    pub fn with_trap(mut self, enabled: bool) -> Self {
        self.trap = enabled;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.leaf_grads.clear();
        self.trapped = None;
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, value: Vec<E>, op: Op<E>, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        let id = self.nodes.len();
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(id)
    }

    pub(crate) fn node(&self, v: Var) -> &Node<E> {
        &self.nodes[v.0]
    }

    pub(crate) fn trip(&mut self, op: &'static str, reason: impl Into<String>) {
        if self.trap && self.trapped.is_none() {
            self.trapped = Some(AutodiffError::Trap {
                op,
                node: self.nodes.len(),
                reason: reason.into(),
            });
        }
    }

    pub(crate) fn trap_enabled(&self) -> bool {
        self.trap
    }

    /// Records a constant input (never receives gradient).
    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<E>) -> Result<Var> {
        if numel(&shape) != values.len() {
            return Err(AutodiffError::DataLength {
                len: values.len(),
                shape,
            });
        }
        Ok(self.push(shape, values, Op::Leaf, false))
    }

    /// Records a differentiable leaf.
    pub fn variable(&mut self, shape: Vec<usize>, values: Vec<E>) -> Result<Var> {
        if numel(&shape) != values.len() {
            return Err(AutodiffError::DataLength {
                len: values.len(),
                shape,
            });
        }
        Ok(self.push(shape, values, Op::Leaf, true))
    }

    /// Records a tensor as a leaf, honouring its `requires_grad` flag.
    pub fn tensor(&mut self, t: &Tensor<E>) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), Op::Leaf, t.requires_grad())
    }

    pub fn scalar(&mut self, v: E) -> Var {
        self.push(Vec::new(), vec![v], Op::Leaf, false)
    }

    pub fn full(&mut self, shape: Vec<usize>, v: E) -> Var {
        let n = numel(&shape);
        self.push(shape, vec![v; n], Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[E] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a single-element node.
    pub fn item(&self, v: Var) -> E {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<E> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    /// Copies `v` as a constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = &self.nodes[v.0];
        let (shape, value) = (n.shape.clone(), n.value.clone());
        self.push(shape, value, Op::Leaf, false)
    }

    /// Returns the trap error, if the trap is enabled and fired.
    pub fn check(&self) -> Result<()> {
        match &self.trapped {
            Some(e) => Err(e.clone()),
            None => Ok(()),
        }
    }

    /// Reverse sweep from a scalar `loss`, accumulating into every
    /// differentiable leaf. Calling it twice accumulates twice.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check()?;
        let seed = &self.nodes[loss.0];
        if seed.value.len() != 1 {
            return Err(AutodiffError::NonScalarSeed(seed.shape.clone()));
        }
        if self.leaf_grads.len() < self.nodes.len() {
            self.leaf_grads.resize(self.nodes.len(), None);
        }
        if !seed.requires_grad {
            return Ok(());
        }
        let mut grads = Grads {
            nodes: &self.nodes,
            bufs: vec![None; loss.0 + 1],
        };
        grads.bufs[loss.0] = Some(vec![E::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads.bufs[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    match &mut self.leaf_grads[idx] {
                        Some(acc) => acc.iter_mut().zip(&gout).for_each(|(a, &b)| *a = *a + b),
                        slot @ None => *slot = Some(gout),
                    }
                }
                op => backward_op(&self.nodes, &mut grads, idx, op, &gout),
            }
        }
        Ok(())
    }

    /// Gradient accumulated into a differentiable leaf by [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[E]> {
        self.leaf_grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }
}

fn backward_op<E: Element>(nodes: &[Node<E>], grads: &mut Grads<'_, E>, idx: usize, op: &Op<E>, gout: &[E]) {
    let node = &nodes[idx];
    match op {
        Op::Leaf => {}
        Op::Binary { kind, a, b } => elementwise::binary_backward(nodes, grads, node, *kind, *a, *b, gout),
        Op::Unary { kind, a } => elementwise::unary_backward(nodes, grads, node, *kind, *a, gout),
        Op::Sum { a } => reduce::sum_backward(grads, *a, gout),
        Op::SumAxis { a, axis } => reduce::sum_axis_backward(nodes, grads, *a, *axis, gout),
        Op::Softmax { a, axis } => reduce::softmax_backward(grads, node, *a, *axis, gout),
        Op::LogSoftmax { a, axis } => reduce::log_softmax_backward(grads, node, *a, *axis, gout),
        Op::LogSumExp { a, axis } => reduce::logsumexp_backward(nodes, grads, node, *a, *axis, gout),
        Op::MatMul { a, b, p, q, r, layout } => {
            linalg::matmul_backward(nodes, grads, *a, *b, (*p, *q, *r), layout, gout)
        }
        Op::Transpose { a } => linalg::transpose_backward(nodes, grads, *a, gout),
        Op::Reshape { a } => grads.add(*a, gout),
        Op::Concat { inputs, axis } => structural::concat_backward(nodes, grads, node, inputs, *axis, gout),
        Op::Slice { a, axis, start } => structural::slice_backward(nodes, grads, node, *a, *axis, *start, gout),
        Op::WhereMask { a, mask, mask_shape } => {
            structural::where_mask_backward(nodes, grads, *a, mask, mask_shape, gout)
        }
        Op::Gather { a, indices } => structural::gather_backward(nodes, grads, *a, indices, gout),
        Op::LayerNorm {
            x,
            gain,
            shift,
            xhat,
            rstd,
        } => nn::layer_norm_backward(grads, *x, *gain, *shift, xhat, rstd, gout),
        Op::Dropout { a, mask } => nn::dropout_backward(grads, *a, mask, gout),
        Op::StraightThrough { soft } => grads.add(*soft, gout),
        Op::KernelMean {
            x,
            y,
            bandwidths,
            exclude_diagonal,
        } => nn::kernel_mean_backward(nodes, grads, *x, *y, bandwidths, *exclude_diagonal, gout),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient_at_three() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(vec![], vec![3.0]).unwrap();
        let y = g.square(x);
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn shared_leaf_accumulates_both_paths() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(vec![], vec![2.0]).unwrap();
        let a = g.scale(x, 3.0);
        let b = g.square(x);
        let s = g.add(a, b).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[3.0 + 4.0]);
    }

    #[test]
    fn non_scalar_seed_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(vec![2], vec![1.0, 2.0]).unwrap();
        let y = g.exp(x);
        assert_eq!(g.backward(y), Err(AutodiffError::NonScalarSeed(vec![2])));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::<f64>::new();
        let c = g.constant(vec![], vec![2.0]).unwrap();
        let x = g.variable(vec![], vec![5.0]).unwrap();
        let y = g.mul(c, x).unwrap();
        g.backward(y).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap(), &[2.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(vec![], vec![1.5]).unwrap();
        let y = g.scale(x, 2.0);
        g.backward(y).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[4.0]);
        g.zero_grads();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn trap_reports_log_of_negative() {
        let mut g = Graph::<f64>::new().with_trap(true);
        let x = g.variable(vec![2], vec![1.0, -1.0]).unwrap();
        let y = g.log(x);
        assert!(g.value(y)[1].is_nan());
        let s = g.sum(y);
        assert!(matches!(g.backward(s), Err(AutodiffError::Trap { op: "log", .. })));
    }

    #[test]
    fn log_of_negative_without_trap_is_nan() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(vec![1], vec![-1.0]).unwrap();
        let y = g.log(x);
        assert!(g.value(y)[0].is_nan());
        assert!(g.check().is_ok());
    }
}
