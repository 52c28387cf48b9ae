//! Append-only gradient tape.
//!
//! Every op appends one node holding its output value and whatever it needs for
//! the reverse pass. Because inputs must already exist when a node is pushed, the
//! node order is a topological order and [`Tape::backward`] is a single reverse
//! sweep that visits each node once.

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op {
    Leaf,
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        padded: Vec<f64>,
        wt: Vec<f64>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Elu {
        x: Var,
    },
    Lstm {
        x: Var,
        w_ih: Var,
        w_hh: Var,
        b: Var,
        gates: Vec<f64>,
        cells: Vec<f64>,
        tanh_c: Vec<f64>,
    },
    MeanTime {
        x: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Concat {
        a: Var,
        b: Var,
    },
    ColAffine {
        x: Var,
        scale: Vec<f64>,
    },
    WeightedL1 {
        pred: Var,
        target: Vec<f64>,
        weights: Vec<f64>,
    },
    Sum {
        x: Var,
    },
    Dot {
        x: Var,
        c: Vec<f64>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: f64,
    },
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Gradient buffers indexed by node, allocated on first write.
pub(crate) struct Grads<'a> {
    nodes: &'a [Node],
    slots: Vec<Option<Vec<f64>>>,
}

impl<'a> Grads<'a> {
    pub(crate) fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Mutable gradient buffer of `v`, zero-initialised on first use.
    pub(crate) fn slot(&mut self, v: Var) -> &mut [f64] {
        let n = self.nodes[v.0].value.len();
        self.slots[v.0].get_or_insert_with(|| vec![0.0; n])
    }

    pub(crate) fn value(&self, v: Var) -> &'a Tensor {
        &self.nodes[v.0].value
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; receives a gradient on [`Tape::backward`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push_node(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_node(t, Op::Leaf, false)
    }

    /// Handle of the node created `index`-th.
    pub fn node(&self, index: usize) -> Option<Var> {
        (index < self.nodes.len()).then_some(Var(index))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the loss w.r.t. a trainable leaf, after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }

    fn push_node(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(value, op, requires_grad)
    }

    pub(crate) fn check_live(&self) -> Result<()> {
        if self.consumed {
            Err(Error::TapeConsumed)
        } else {
            Ok(())
        }
    }

    /// Reverse sweep from a scalar `loss`; fills the gradients of every trainable leaf.
    ///
    /// A tape supports a single backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check_live()?;
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.consumed = true;

        let mut grads = Grads {
            nodes: &self.nodes,
            slots: (0..self.nodes.len()).map(|_| None).collect(),
        };
        grads.slots[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads.slots[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads.slots[i] = Some(g);
                }
                Op::Conv1d { x, w, b, padded, wt } => {
                    ops::conv::backward(&mut grads, &g, *x, *w, *b, padded, wt)
                }
                Op::MaxPool { x, argmax } => ops::pool::backward(&mut grads, &g, *x, argmax),
                Op::Elu { x } => ops::dense::elu_backward(&mut grads, &g, *x, &node.value),
                Op::Lstm {
                    x,
                    w_ih,
                    w_hh,
                    b,
                    gates,
                    cells,
                    tanh_c,
                } => ops::lstm::backward(
                    &mut grads,
                    &g,
                    ops::lstm::Saved {
                        x: *x,
                        w_ih: *w_ih,
                        w_hh: *w_hh,
                        b: *b,
                        gates,
                        cells,
                        tanh_c,
                        hs: node.value.data(),
                    },
                ),
                Op::MeanTime { x } => ops::dense::mean_time_backward(&mut grads, &g, *x),
                Op::Linear { x, w, b } => ops::dense::linear_backward(&mut grads, &g, *x, *w, *b),
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    batch_stats,
                } => ops::dense::batchnorm_backward(
                    &mut grads,
                    &g,
                    (*x, *gamma, *beta),
                    xhat,
                    inv_std,
                    *batch_stats,
                ),
                Op::Concat { a, b } => ops::dense::concat_backward(&mut grads, &g, *a, *b),
                Op::ColAffine { x, scale } => ops::dense::col_affine_backward(&mut grads, &g, *x, scale),
                Op::WeightedL1 {
                    pred,
                    target,
                    weights,
                } => ops::reduce::weighted_l1_backward(&mut grads, &g, *pred, target, weights),
                Op::Sum { x } => ops::reduce::sum_backward(&mut grads, &g, *x),
                Op::Dot { x, c } => ops::reduce::dot_backward(&mut grads, &g, *x, c),
                Op::Add { a, b } => ops::reduce::add_backward(&mut grads, &g, *a, *b),
                Op::Scale { x, c } => ops::reduce::scale_backward(&mut grads, &g, *x, *c),
            }
        }

        let slots = grads.slots;
        self.grads = self
            .nodes
            .iter()
            .zip(slots)
            .map(|(n, s)| match (&n.op, s) {
                (Op::Leaf, s) if n.requires_grad => {
                    let g = s.unwrap_or_else(|| vec![0.0; n.value.len()]);
                    Some(Tensor::new(n.value.shape(), g).expect("gradient matches leaf shape"))
                }
                _ => None,
            })
            .collect();
        Ok(())
    }
}
