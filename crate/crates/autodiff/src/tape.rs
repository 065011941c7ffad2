use std::cell::{Ref, RefCell};
use std::collections::HashMap;

use crate::{shape_of, Error, Float, Matrix, ParamId, ParamStore, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row ranges used by the segment-wise primitives (`unfold`, `segment_max`).
pub type Segment = std::ops::Range<usize>;

#[derive(Debug)]
pub(crate) enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    AddScalar(Var),
    Concat { parts: Vec<Var>, axis: usize },
    SliceCols { a: Var, start: usize },
    SliceRows { a: Var, start: usize },
    GatherRows { a: Var, idx: Vec<usize> },
    WeightedRows { a: Var, rows: Vec<Vec<(usize, F)>> },
    Reshape(Var),
    Softmax(Var),
    Normalize { a: Var, inv_std: Vec<F> },
    Dropout { a: Var, mask: Matrix<F> },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Unfold { a: Var, segments: Vec<Segment>, width: usize },
    SegmentMax { a: Var, argmax: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Matrix<F> },
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    Pick { a: Var, idx: Vec<usize> },
    LnClamp { a: Var, min: F },
}

impl<F> Op<F> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::MulCol(..) => "mul_col",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Concat { .. } => "concat",
            Op::SliceCols { .. } => "slice_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::GatherRows { .. } => "embedding_lookup",
            Op::WeightedRows { .. } => "weighted_rows",
            Op::Reshape(..) => "reshape",
            Op::Softmax(..) => "softmax",
            Op::Normalize { .. } => "layer_norm",
            Op::Dropout { .. } => "dropout",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Unfold { .. } => "conv1d",
            Op::SegmentMax { .. } => "max_pool1d",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumRows(..) => "sum_rows",
            Op::Pick { .. } => "pick",
            Op::LnClamp { .. } => "ln",
        }
    }
}

pub(crate) struct Node<F> {
    pub(crate) value: Matrix<F>,
    pub(crate) op: Op<F>,
    pub(crate) requires_grad: bool,
}

/// Records primitive applications in evaluation order.
///
/// A tape is single-threaded and append-only. Values are kept for the
/// lifetime of the tape so that [`Tape::backward`] can be called (and
/// called again; leaf gradients accumulate across calls).
pub struct Tape<F: Float> {
    pub(crate) nodes: RefCell<Vec<Node<F>>>,
    leaf_grads: RefCell<HashMap<usize, Matrix<F>>>,
    bound: RefCell<HashMap<ParamId, Var>>,
    training: bool,
}

impl<F: Float> Tape<F> {
    /// `training` switches dropout on.
    pub fn new(training: bool) -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            leaf_grads: RefCell::new(HashMap::new()),
            bound: RefCell::new(HashMap::new()),
            training,
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(&self, value: Matrix<F>, op: Op<F>, requires_grad: bool) -> Var {
        let value = standard(value);
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    pub(crate) fn rg(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    /// Records an input value.
    pub fn leaf(&self, value: Matrix<F>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&self, value: Matrix<F>) -> Var {
        self.leaf(value, false)
    }

    /// Binds a parameter from `store`; repeated calls return the same var.
    pub fn param(&self, store: &ParamStore<F>, id: ParamId) -> Var {
        if let Some(v) = self.bound.borrow().get(&id) {
            return *v;
        }
        let v = self.push(
            store.value(id).clone(),
            Op::Leaf,
            store.is_trainable(id),
        );
        self.bound.borrow_mut().insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> Ref<'_, Matrix<F>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.dim()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// Scalar value of a `[1, 1]` var.
    pub fn scalar(&self, v: Var) -> F {
        self.nodes.borrow()[v.0].value[[0, 0]]
    }

    /// Accumulated gradient of a leaf after one or more backward passes.
    pub fn grad(&self, v: Var) -> Option<Matrix<F>> {
        self.leaf_grads.borrow().get(&v.0).cloned()
    }

    /// Name of the first primitive whose output holds a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.nodes
            .borrow()
            .iter()
            .find(|n| n.value.iter().any(|x| !x.is_finite()))
            .map(|n| n.op.name())
    }

    /// Propagates `∂loss/∂·` to every leaf that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<()> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.0];
        if root.value.dim() != (1, 1) {
            return Err(Error::NotScalar(shape_of(&root.value)));
        }
        if !root.requires_grad {
            return Err(Error::Detached);
        }
        let mut grads: Vec<Option<Matrix<F>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Matrix::from_elem((1, 1), F::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let mut acc = self.leaf_grads.borrow_mut();
                match acc.get_mut(&i) {
                    Some(existing) => *existing += &g,
                    None => {
                        acc.insert(i, g);
                    }
                }
                continue;
            }
            crate::backward::propagate(&nodes, i, &g, &mut grads);
        }
        Ok(())
    }

    /// Gradients of bound parameters, ready to be added to a store.
    pub fn param_grads(&self) -> Vec<(ParamId, Matrix<F>)> {
        let bound = self.bound.borrow();
        let grads = self.leaf_grads.borrow();
        let mut out: Vec<_> = bound
            .iter()
            .filter_map(|(id, v)| grads.get(&v.0).map(|g| (*id, g.clone())))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

/// Row-major copy if `m` came back column-major (e.g. from `dot`).
pub(crate) fn standard<F: Float>(m: Matrix<F>) -> Matrix<F> {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

pub(crate) fn accumulate<F: Float>(grads: &mut [Option<Matrix<F>>], v: Var, g: Matrix<F>) {
    let g = standard(g);
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}
