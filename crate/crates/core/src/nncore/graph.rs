//! Reverse-mode tape over dense matrices.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep over the
//! node list visits every node after all of its consumers. Parameter leaves are
//! bound once per graph; several forward passes through the same network share
//! them and their adjoints add up.

use ndarray::{Array2, Axis, Zip};

use super::tensor::{Matrix, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    MatMul(NodeId, NodeId),
    /// Matrix plus a broadcast `1 x n` row.
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    /// Sigmoid of logits clamped to `[-bound, bound]`.
    Sigmoid(NodeId, f64),
    Ln(NodeId),
    Exp(NodeId),
    /// Elementwise `min(x, cap)`.
    Cap(NodeId, f64),
    /// `n x 1` column of row sums.
    RowSum(NodeId),
    Sum(NodeId),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: Vec<(usize, NodeId)>,
}

fn shape_of(m: &Matrix) -> (usize, usize) {
    m.dim()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[[0, 0]]
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Constant)
    }

    pub fn scalar_constant(&mut self, value: f64) -> NodeId {
        self.constant(Array2::from_elem((1, 1), value))
    }

    /// Leaf bound to `params[idx]`; binding the same index twice returns the same node.
    pub fn param(&mut self, params: &ParamSet, idx: usize) -> NodeId {
        if let Some(&(_, id)) = self.param_nodes.iter().find(|(p, _)| *p == idx) {
            return id;
        }
        let id = self.push(params.get(idx).values.clone(), Op::Param);
        self.param_nodes.push((idx, id));
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, m: NodeId, row: NodeId) -> NodeId {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row expects a 1 x n row");
        let v = self.value(m) + r;
        self.push(v, Op::AddRow(m, row))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(shape_of(self.value(a)), shape_of(self.value(b)));
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(shape_of(self.value(a)), shape_of(self.value(b)));
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(shape_of(self.value(a)), shape_of(self.value(b)));
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(shape_of(self.value(a)), shape_of(self.value(b)));
        let v = self.value(a) / self.value(b);
        self.push(v, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    /// `a + k` elementwise.
    pub fn offset(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.value(a) + k;
        self.push(v, Op::Offset(a))
    }

    /// `1 - a` elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let neg = self.scale(a, -1.0);
        self.offset(neg, 1.0)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid_clamped(&mut self, a: NodeId, bound: f64) -> NodeId {
        let v = self.value(a).mapv(|x| sigmoid(x.clamp(-bound, bound)));
        self.push(v, Op::Sigmoid(a, bound))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    /// Elementwise `min(x, cap)`; no gradient flows through capped entries.
    pub fn cap(&mut self, a: NodeId, cap: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x.min(cap));
        self.push(v, Op::Cap(a, cap))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::RowSum(a))
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), s), Op::Sum(a))
    }

    /// Adjoints of every leaf with respect to the scalar `loss`.
    ///
    /// Adjoints start from zero on every call. Use [`Gradients::accumulate_into`]
    /// to add them to parameter gradient buffers; calling it twice without
    /// [`ParamSet::zero_grad`] in between accumulates.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let shape = shape_of(self.value(loss));
        if shape != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got a {}x{} node",
                shape.0, shape.1
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Array2::ones((1, 1)));
        let mut leaves = Vec::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match node.op {
                Op::Constant | Op::Param => leaves.push((NodeId(i), g)),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(b).t());
                    let gb = self.value(a).t().dot(&g);
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, b, gb);
                }
                Op::AddRow(m, row) => {
                    let grow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut adj, row, grow);
                    accumulate(&mut adj, m, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, b, g.clone());
                    accumulate(&mut adj, a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, b, -&g);
                    accumulate(&mut adj, a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(b);
                    let gb = &g * self.value(a);
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, b, gb);
                }
                Op::Div(a, b) => {
                    let vb = self.value(b);
                    let ga = &g / vb;
                    let gb = -(&g * &node.value) / vb;
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, b, gb);
                }
                Op::Scale(a, k) => accumulate(&mut adj, a, g * k),
                Op::Offset(a) => accumulate(&mut adj, a, g),
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(a)).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    accumulate(&mut adj, a, ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|d, &y| *d *= 1.0 - y * y);
                    accumulate(&mut adj, a, ga);
                }
                Op::Sigmoid(a, bound) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .and(self.value(a))
                        .for_each(|d, &y, &x| {
                            if x.abs() > bound {
                                *d = 0.0;
                            } else {
                                *d *= y * (1.0 - y);
                            }
                        });
                    accumulate(&mut adj, a, ga);
                }
                Op::Ln(a) => {
                    let ga = g / self.value(a);
                    accumulate(&mut adj, a, ga);
                }
                Op::Exp(a) => accumulate(&mut adj, a, g * &node.value),
                Op::Cap(a, cap) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(a)).for_each(|d, &x| {
                        if x > cap {
                            *d = 0.0;
                        }
                    });
                    accumulate(&mut adj, a, ga);
                }
                Op::RowSum(a) => {
                    let ga = g.broadcast(self.value(a).raw_dim()).expect("column broadcast").to_owned();
                    accumulate(&mut adj, a, ga);
                }
                Op::Sum(a) => {
                    let s = g[[0, 0]];
                    let ga = Array2::from_elem(self.value(a).raw_dim(), s);
                    accumulate(&mut adj, a, ga);
                }
            }
        }

        let params = self
            .param_nodes
            .iter()
            .filter_map(|&(p, id)| leaves.iter().any(|(l, _)| *l == id).then_some((p, id)))
            .collect();
        Ok(Gradients { leaves, params })
    }
}

fn accumulate(adj: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut adj[id.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Leaf adjoints produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    leaves: Vec<(NodeId, Matrix)>,
    params: Vec<(usize, NodeId)>,
}

impl Gradients {
    /// Adjoint of a leaf node; `None` when the loss does not depend on it.
    pub fn wrt(&self, id: NodeId) -> Option<&Matrix> {
        self.leaves.iter().find(|(l, _)| *l == id).map(|(_, g)| g)
    }

    /// Add parameter adjoints into the matching `grad` buffers.
    pub fn accumulate_into(&self, params: &mut ParamSet) {
        for &(p, id) in &self.params {
            if let Some(g) = self.wrt(id) {
                params.get_mut(p).grad += g;
            }
        }
    }
}
