//! Reverse-mode automatic differentiation on dense f64 arrays.
//!
//! A `Graph` owns a topologically ordered arena of nodes; `Tensor` is a cheap
//! handle into it. Every primitive records a backward closure computing input
//! gradients from (output value, output gradient, input values). Gradients
//! accumulate additively: two backward passes without zeroing yield exactly
//! twice one pass. All reductions run in fixed index order, so results are
//! bit-identical across runs.

mod conv;
mod fourier;
mod gradcheck;
mod linalg;
mod norm;
mod reduce;
mod sample;
mod shape;

pub use fourier::complex_rescale;
pub use gradcheck::check_gradient;
pub use sample::{cost_volume_raw, hsample_validity, COST_VOLUME_SENTINEL};
pub use shape::concat_channels;

use crate::array::Array;
use std::cell::RefCell;
use std::rc::Rc;

/// Arguments handed to a backward closure. `inputs` are the parent values in
/// declaration order; `needs[i]` is false when parent i does not require a
/// gradient so the closure may return `None` for it.
pub(crate) struct BwdArgs<'a> {
    pub out_value: &'a Array,
    pub out_grad: &'a Array,
    pub inputs: Vec<&'a Array>,
    pub needs: Vec<bool>,
}

type BackwardFn = Box<dyn Fn(&BwdArgs) -> Vec<Option<Array>>>;

struct Node {
    value: Array,
    grad: Option<Array>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    #[allow(dead_code)]
    op: &'static str,
}

struct GraphInner {
    nodes: Vec<Node>,
}

/// Computation graph. Cloning shares the underlying arena.
#[derive(Clone)]
pub struct Graph {
    inner: Rc<RefCell<GraphInner>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Graph {
        Graph { inner: Rc::new(RefCell::new(GraphInner { nodes: Vec::new() })) }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// New leaf node holding `value`; participates in gradients iff `requires_grad`.
    pub fn leaf(&self, value: Array, requires_grad: bool) -> Tensor {
        let shape = value.shape().to_vec();
        let id = {
            let mut inner = self.inner.borrow_mut();
            inner.nodes.push(Node {
                value,
                grad: None,
                requires_grad,
                parents: Vec::new(),
                backward: None,
                op: "leaf",
            });
            inner.nodes.len() - 1
        };
        Tensor { graph: self.clone(), id, shape }
    }

    /// Leaf that never receives gradients.
    pub fn constant(&self, value: Array) -> Tensor {
        self.leaf(value, false)
    }

    pub fn scalar(&self, v: f64) -> Tensor {
        self.constant(Array::scalar(v))
    }

    /// Clears accumulated gradients on every node.
    pub fn zero_grad(&self) {
        for node in self.inner.borrow_mut().nodes.iter_mut() {
            node.grad = None;
        }
    }

    pub(crate) fn push(
        &self,
        op: &'static str,
        value: Array,
        parents: &[&Tensor],
        backward: BackwardFn,
    ) -> Tensor {
        for p in parents {
            assert!(
                Rc::ptr_eq(&self.inner, &p.graph.inner),
                "{op}: tensors from different graphs"
            );
        }
        let shape = value.shape().to_vec();
        let id = {
            let mut inner = self.inner.borrow_mut();
            let requires_grad = parents.iter().any(|p| inner.nodes[p.id].requires_grad);
            let parent_ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
            inner.nodes.push(Node {
                value,
                grad: None,
                requires_grad,
                parents: parent_ids,
                backward: if requires_grad { Some(backward) } else { None },
                op,
            });
            inner.nodes.len() - 1
        };
        Tensor { graph: self.clone(), id, shape }
    }

    pub(crate) fn with_values<R>(&self, ids: &[usize], f: impl FnOnce(&[&Array]) -> R) -> R {
        let inner = self.inner.borrow();
        let refs: Vec<&Array> = ids.iter().map(|&i| &inner.nodes[i].value).collect();
        f(&refs)
    }
}

/// Handle to one node of a `Graph`.
#[derive(Clone)]
pub struct Tensor {
    graph: Graph,
    id: usize,
    shape: Vec<usize>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &self.shape)
            .finish()
    }
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn value(&self) -> Array {
        self.graph.inner.borrow().nodes[self.id].value.clone()
    }

    /// Scalar value; panics unless the tensor holds exactly one element.
    pub fn item(&self) -> f64 {
        let inner = self.graph.inner.borrow();
        inner.nodes[self.id].value.item()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.inner.borrow().nodes[self.id].requires_grad
    }

    pub fn grad(&self) -> Option<Array> {
        self.graph.inner.borrow().nodes[self.id].grad.clone()
    }

    /// Constant copy sharing no gradient history.
    pub fn detach(&self) -> Tensor {
        self.graph.constant(self.value())
    }

    pub(crate) fn with_value<R>(&self, f: impl FnOnce(&Array) -> R) -> R {
        let inner = self.graph.inner.borrow();
        f(&inner.nodes[self.id].value)
    }

    pub(crate) fn with_value2<R>(&self, other: &Tensor, f: impl FnOnce(&Array, &Array) -> R) -> R {
        assert!(
            Rc::ptr_eq(&self.graph.inner, &other.graph.inner),
            "binary op: tensors from different graphs"
        );
        let inner = self.graph.inner.borrow();
        f(&inner.nodes[self.id].value, &inner.nodes[other.id].value)
    }

    /// Reverse pass from a scalar loss. Visits nodes in exact reverse
    /// topological (arena) order and adds this pass's contribution into each
    /// requires-grad ancestor's grad buffer.
    pub fn backward(&self) {
        assert!(
            self.len() == 1,
            "backward: loss must be scalar, got shape {:?}",
            self.shape
        );
        let mut inner = self.graph.inner.borrow_mut();
        let n = inner.nodes.len();
        let mut local: Vec<Option<Array>> = (0..n).map(|_| None).collect();
        local[self.id] = Some(Array::full(&self.shape, 1.0));

        for id in (0..=self.id).rev() {
            let Some(g) = local[id].take() else { continue };
            let node = &inner.nodes[id];
            if let Some(backward) = &node.backward {
                let parent_ids = node.parents.clone();
                let grads = {
                    let args = BwdArgs {
                        out_value: &node.value,
                        out_grad: &g,
                        inputs: parent_ids.iter().map(|&p| &inner.nodes[p].value).collect(),
                        needs: parent_ids
                            .iter()
                            .map(|&p| inner.nodes[p].requires_grad)
                            .collect(),
                    };
                    backward(&args)
                };
                assert!(
                    grads.len() == parent_ids.len(),
                    "{}: backward returned {} grads for {} inputs",
                    node.op,
                    grads.len(),
                    parent_ids.len()
                );
                for (&pid, grad) in parent_ids.iter().zip(grads) {
                    let Some(grad) = grad else { continue };
                    if !inner.nodes[pid].requires_grad {
                        continue;
                    }
                    debug_assert!(grad.shape() == inner.nodes[pid].value.shape());
                    match &mut local[pid] {
                        Some(acc) => {
                            let dst = acc.data_mut();
                            for (d, s) in dst.iter_mut().zip(grad.data()) {
                                *d += s;
                            }
                        }
                        slot => *slot = Some(grad),
                    }
                }
            }
            local[id] = Some(g);
        }

        for (id, g) in local.into_iter().enumerate() {
            let Some(g) = g else { continue };
            let node = &mut inner.nodes[id];
            if !node.requires_grad {
                continue;
            }
            match &mut node.grad {
                Some(acc) => {
                    let dst = acc.data_mut();
                    for (d, s) in dst.iter_mut().zip(g.data()) {
                        *d += s;
                    }
                }
                slot => *slot = Some(g),
            }
        }
    }

    // ---- elementwise machinery ----

    pub(crate) fn unary(
        &self,
        op: &'static str,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Tensor {
        let value = self.with_value(|a| a.map(&f));
        self.graph.push(
            op,
            value,
            &[self],
            Box::new(move |args| {
                let x = args.inputs[0].data();
                let y = args.out_value.data();
                let g = args.out_grad.data();
                let data = (0..x.len()).map(|i| g[i] * df(x[i], y[i])).collect();
                vec![Some(Array::new(args.inputs[0].shape(), data))]
            }),
        )
    }

    pub(crate) fn binary(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        dfa: impl Fn(f64, f64, f64) -> f64 + 'static,
        dfb: impl Fn(f64, f64, f64) -> f64 + 'static,
    ) -> Tensor {
        assert!(
            self.shape == other.shape,
            "{op}: shape mismatch {:?} vs {:?}",
            self.shape,
            other.shape
        );
        let value = self.with_value2(other, |a, b| a.zip(b, &f));
        self.graph.push(
            op,
            value,
            &[self, other],
            Box::new(move |args| {
                let a = args.inputs[0].data();
                let b = args.inputs[1].data();
                let y = args.out_value.data();
                let g = args.out_grad.data();
                let ga = args.needs[0].then(|| {
                    Array::new(
                        args.inputs[0].shape(),
                        (0..a.len()).map(|i| g[i] * dfa(a[i], b[i], y[i])).collect(),
                    )
                });
                let gb = args.needs[1].then(|| {
                    Array::new(
                        args.inputs[1].shape(),
                        (0..b.len()).map(|i| g[i] * dfb(a[i], b[i], y[i])).collect(),
                    )
                });
                vec![ga, gb]
            }),
        )
    }

    // ---- elementwise primitives ----

    pub fn add(&self, o: &Tensor) -> Tensor {
        self.binary(o, "add", |a, b| a + b, |_, _, _| 1.0, |_, _, _| 1.0)
    }

    pub fn sub(&self, o: &Tensor) -> Tensor {
        self.binary(o, "sub", |a, b| a - b, |_, _, _| 1.0, |_, _, _| -1.0)
    }

    pub fn mul(&self, o: &Tensor) -> Tensor {
        self.binary(o, "mul", |a, b| a * b, |_, b, _| b, |a, _, _| a)
    }

    pub fn div(&self, o: &Tensor) -> Tensor {
        self.binary(
            o,
            "div",
            |a, b| a / b,
            |_, b, _| 1.0 / b,
            |_, b, y| -y / b,
        )
    }

    pub fn neg(&self) -> Tensor {
        self.unary("neg", |x| -x, |_, _| -1.0)
    }

    /// Absolute value; subgradient 0 at 0.
    pub fn abs(&self) -> Tensor {
        self.unary(
            "abs",
            f64::abs,
            |x, _| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            },
        )
    }

    pub fn exp(&self) -> Tensor {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn log(&self) -> Tensor {
        self.unary("log", f64::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(&self) -> Tensor {
        self.unary("sqrt", f64::sqrt, |_, y| 0.5 / y)
    }

    /// Rectifier; subgradient 0 at 0.
    pub fn relu(&self) -> Tensor {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(
            "sigmoid",
            |x| 1.0 / (1.0 + (-x).exp()),
            |_, y| y * (1.0 - y),
        )
    }

    pub fn tanh(&self) -> Tensor {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn softplus(&self) -> Tensor {
        self.unary(
            "softplus",
            |x| {
                if x > 30.0 {
                    x
                } else {
                    x.exp().ln_1p()
                }
            },
            |x, _| 1.0 / (1.0 + (-x).exp()),
        )
    }

    /// Elementwise x^p for scalar p.
    pub fn powf(&self, p: f64) -> Tensor {
        self.unary("powf", move |x| x.powf(p), move |x, _| p * x.powf(p - 1.0))
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.unary("add_scalar", move |x| x + c, |_, _| 1.0)
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        self.unary("mul_scalar", move |x| x * c, move |_, _| c)
    }
}
