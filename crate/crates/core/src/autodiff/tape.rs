use alloc::vec;
use alloc::vec::Vec;

use super::mat::{dense_forward, gemm, Mat};
use super::net::{squash, Activation, ParamVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param { slot: usize },
    Dense { input: NodeId, slot: usize, offset: usize, inp: usize, out: usize },
    Relu { input: NodeId },
    Map { input: NodeId, deriv: Vec<f64> },
    Affine { input: NodeId, scale: f64 },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Columns { input: NodeId, start: usize },
    Concat { parts: Vec<NodeId> },
    SumCols { input: NodeId },
    Sum { input: NodeId },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param { .. } => "param",
            Op::Dense { .. } => "dense",
            Op::Relu { .. } => "relu",
            Op::Map { .. } => "map",
            Op::Affine { .. } => "affine",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Columns { .. } => "columns",
            Op::Concat { .. } => "concat",
            Op::SumCols { .. } => "sum_cols",
            Op::Sum { .. } => "sum",
        }
    }
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

struct Slot<'a> {
    params: &'a ParamVector,
    trainable: bool,
}

/// Reverse-mode tape over batched matrix values.
///
/// Each node holds a `rows x cols` value where rows are independent batch
/// entries. Local partial derivatives are captured when a node is
/// recorded, so `backward` is a single reverse sweep. Parameter vectors
/// are registered once and referenced by dense layers without copying.
pub struct Tape<'a> {
    nodes: Vec<Node>,
    slots: Vec<Slot<'a>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            slots: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Parameters whose gradient `backward` reports.
    pub fn register(&mut self, params: &'a ParamVector) -> ParamId {
        self.slots.push(Slot {
            params,
            trainable: true,
        });
        ParamId(self.slots.len() - 1)
    }

    /// Parameters treated as constants: gradients still flow through the
    /// network to its inputs but are not accumulated for the weights.
    pub fn register_frozen(&mut self, params: &'a ParamVector) -> ParamId {
        self.slots.push(Slot {
            params,
            trainable: false,
        });
        ParamId(self.slots.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    /// Shortcut for the single entry of a `1 x 1` node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.shape(), (1, 1), "scalar_value on non-scalar node");
        v.get(0, 0)
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn constant(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, x: f64) -> NodeId {
        self.constant(Mat::scalar(x))
    }

    /// The registered parameters as a `1 x P` node.
    pub fn params(&mut self, p: ParamId) -> NodeId {
        let slot = &self.slots[p.0];
        let value = Mat::row_vector(slot.params.values());
        let trainable = slot.trainable;
        self.push(value, Op::Param { slot: p.0 }, trainable)
    }

    fn dense(&mut self, x: NodeId, p: ParamId, offset: usize, inp: usize, out: usize) -> NodeId {
        let slot = &self.slots[p.0];
        let w = &slot.params.values()[offset..offset + inp * out];
        let b = &slot.params.values()[offset + inp * out..offset + inp * out + out];
        let value = dense_forward(&self.nodes[x.0].value, w, b, out);
        let needs = slot.trainable || self.needs(x);
        self.push(
            value,
            Op::Dense {
                input: x,
                slot: p.0,
                offset,
                inp,
                out,
            },
            needs,
        )
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut value = self.nodes[x.0].value.clone();
        for v in value.as_mut_slice() {
            *v = Activation::Relu.eval(*v).0;
        }
        let needs = self.needs(x);
        self.push(value, Op::Relu { input: x }, needs)
    }

    /// Elementwise map; `f` returns the value and its derivative.
    pub fn map(&mut self, x: NodeId, f: impl Fn(f64) -> (f64, f64)) -> NodeId {
        let src = &self.nodes[x.0].value;
        let mut value = Mat::zeros(src.rows(), src.cols());
        let mut deriv = vec![0.0; src.as_slice().len()];
        for ((o, d), &v) in value
            .as_mut_slice()
            .iter_mut()
            .zip(deriv.iter_mut())
            .zip(src.as_slice())
        {
            let (y, dy) = f(v);
            *o = y;
            *d = dy;
        }
        let needs = self.needs(x);
        self.push(value, Op::Map { input: x, deriv }, needs)
    }

    /// Column-wise map; `f(col, x)` returns the value and its derivative.
    pub fn map_cols(&mut self, x: NodeId, f: impl Fn(usize, f64) -> (f64, f64)) -> NodeId {
        let src = &self.nodes[x.0].value;
        let cols = src.cols();
        let mut value = Mat::zeros(src.rows(), cols);
        let mut deriv = vec![0.0; src.as_slice().len()];
        for (i, &v) in src.as_slice().iter().enumerate() {
            let (y, dy) = f(i % cols, v);
            value.as_mut_slice()[i] = y;
            deriv[i] = dy;
        }
        let needs = self.needs(x);
        self.push(value, Op::Map { input: x, deriv }, needs)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| Activation::Tanh.eval(v))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| {
            let e = libm::exp(v);
            (e, e)
        })
    }

    pub fn sin(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| (libm::sin(v), libm::cos(v)))
    }

    pub fn cos(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| (libm::cos(v), -libm::sin(v)))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| (v * v, 2.0 * v))
    }

    /// Derivative at 0 is taken as 0.
    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| {
            let s = libm::sqrt(v);
            (s, if s > 0.0 { 0.5 / s } else { 0.0 })
        })
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let mut value = self.nodes[x.0].value.clone();
        for v in value.as_mut_slice() {
            *v = scale * *v + shift;
        }
        let needs = self.needs(x);
        self.push(value, Op::Affine { input: x, scale }, needs)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.affine(x, c, 0.0)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.affine(x, -1.0, 0.0)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> (Mat, bool) {
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        assert_eq!(va.shape(), vb.shape(), "elementwise op shape mismatch");
        let data = va
            .as_slice()
            .iter()
            .zip(vb.as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let needs = self.needs(a) || self.needs(b);
        (Mat::from_vec(va.rows(), va.cols(), data), needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (v, n) = self.binary(a, b, |x, y| x + y);
        self.push(v, Op::Add { a, b }, n)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (v, n) = self.binary(a, b, |x, y| x - y);
        self.push(v, Op::Sub { a, b }, n)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (v, n) = self.binary(a, b, |x, y| x * y);
        self.push(v, Op::Mul { a, b }, n)
    }

    /// Columns `start..start + len`.
    pub fn columns(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let src = &self.nodes[x.0].value;
        assert!(start + len <= src.cols(), "column slice out of range");
        let mut value = Mat::zeros(src.rows(), len);
        for r in 0..src.rows() {
            value
                .row_mut(r)
                .copy_from_slice(&src.row(r)[start..start + len]);
        }
        let needs = self.needs(x);
        self.push(value, Op::Columns { input: x, start }, needs)
    }

    pub fn column(&mut self, x: NodeId, c: usize) -> NodeId {
        self.columns(x, c, 1)
    }

    /// Horizontal concatenation; all parts must share the row count.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.nodes[parts[0].0].value.rows();
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut value = Mat::zeros(rows, cols);
        let mut c0 = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            assert_eq!(v.rows(), rows, "concat row mismatch");
            for r in 0..rows {
                value.row_mut(r)[c0..c0 + v.cols()].copy_from_slice(v.row(r));
            }
            c0 += v.cols();
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
            },
            needs,
        )
    }

    /// Row sums, `rows x 1`.
    pub fn sum_cols(&mut self, x: NodeId) -> NodeId {
        let src = &self.nodes[x.0].value;
        let data = (0..src.rows()).map(|r| src.row(r).iter().sum()).collect();
        let value = Mat::from_vec(src.rows(), 1, data);
        let needs = self.needs(x);
        self.push(value, Op::SumCols { input: x }, needs)
    }

    /// Sum of every entry, `1 x 1`.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.nodes[x.0].value.as_slice().iter().sum();
        let needs = self.needs(x);
        self.push(Mat::scalar(s), Op::Sum { input: x }, needs)
    }

    /// Run the registered network on every row of `x`.
    pub fn mlp(&mut self, p: ParamId, x: NodeId) -> Result<NodeId> {
        let params = self.slots[p.0].params;
        let topo = params.topology();
        let cols = self.nodes[x.0].value.cols();
        if cols != topo.input_dim() {
            return Err(Error::Dimension {
                what: "network input",
                expected: topo.input_dim(),
                got: cols,
            });
        }
        let mut h = x;
        for layer in topo.layers() {
            h = self.dense(h, p, layer.offset, layer.inp, layer.out);
            h = match layer.activation {
                Activation::Relu => self.relu(h),
                Activation::Tanh => self.tanh(h),
                Activation::Identity => h,
            };
        }
        if let Some(bounds) = topo.output_squash() {
            h = self.map_cols(h, |c, v| squash(v, bounds[c].0, bounds[c].1));
        }
        Ok(h)
    }

    /// Digest of every ReLU on/off decision recorded so far. Two
    /// evaluations with equal digests lie on the same smooth piece.
    pub fn kink_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for node in &self.nodes {
            if let Op::Relu { .. } = node.op {
                for &v in node.value.as_slice() {
                    h ^= (v > 0.0) as u64 + 1;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    fn first_non_finite(&self, upto: usize) -> Option<usize> {
        (0..=upto).find(|&i| !self.nodes[i].value.is_finite())
    }

    /// Gradient of the `1 x 1` node `root` with respect to every trainable
    /// registered parameter vector.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let root_value = &self.nodes[root.0].value;
        if root_value.shape() != (1, 1) {
            return Err(Error::Dimension {
                what: "gradient root (must be 1x1)",
                expected: 1,
                got: root_value.as_slice().len(),
            });
        }
        if !root_value.is_finite() {
            let node = self.first_non_finite(root.0).unwrap_or(root.0);
            return Err(Error::NonFiniteNode {
                node,
                op: self.nodes[node].op.name(),
            });
        }

        let mut grads: Vec<Vec<f64>> = self
            .slots
            .iter()
            .map(|s| {
                if s.trainable {
                    vec![0.0; s.params.len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        let mut adj: Vec<Option<Vec<f64>>> = Vec::with_capacity(root.0 + 1);
        adj.resize_with(root.0 + 1, || None);
        if self.nodes[root.0].needs_grad {
            adj[root.0] = Some(vec![1.0]);
        }

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param { slot } => {
                    for (acc, d) in grads[*slot].iter_mut().zip(&g) {
                        *acc += d;
                    }
                }
                Op::Dense {
                    input,
                    slot,
                    offset,
                    inp,
                    out,
                } => {
                    let (inp, out) = (*inp, *out);
                    let x = &self.nodes[input.0].value;
                    let rows = x.rows();
                    let s = &self.slots[*slot];
                    if s.trainable {
                        let gw = &mut grads[*slot][*offset..*offset + inp * out + out];
                        let (gw, gb) = gw.split_at_mut(inp * out);
                        // dW += g^T x
                        gemm(
                            out,
                            rows,
                            inp,
                            1.0,
                            &g,
                            (1, out),
                            x.as_slice(),
                            (inp, 1),
                            1.0,
                            gw,
                            (inp, 1),
                        );
                        for r in 0..rows {
                            for (acc, d) in gb.iter_mut().zip(&g[r * out..(r + 1) * out]) {
                                *acc += d;
                            }
                        }
                    }
                    if let Some(dx) = accum(&mut adj, &self.nodes, *input) {
                        let w = &s.params.values()[*offset..*offset + inp * out];
                        // dx += g w
                        gemm(rows, out, inp, 1.0, &g, (out, 1), w, (inp, 1), 1.0, dx, (inp, 1));
                    }
                }
                Op::Relu { input } => {
                    let y = node.value.as_slice();
                    if let Some(dx) = accum(&mut adj, &self.nodes, *input) {
                        for ((acc, d), &yv) in dx.iter_mut().zip(&g).zip(y) {
                            if yv > 0.0 {
                                *acc += d;
                            }
                        }
                    }
                }
                Op::Map { input, deriv } => {
                    if let Some(dx) = accum(&mut adj, &self.nodes, *input) {
                        for ((acc, d), dd) in dx.iter_mut().zip(&g).zip(deriv) {
                            *acc += d * dd;
                        }
                    }
                }
                Op::Affine { input, scale } => {
                    if let Some(dx) = accum(&mut adj, &self.nodes, *input) {
                        for (acc, d) in dx.iter_mut().zip(&g) {
                            *acc += scale * d;
                        }
                    }
                }
                Op::Add { a, b } | Op::Sub { a, b } => {
                    let sign = if let Op::Sub { .. } = node.op { -1.0 } else { 1.0 };
                    if let Some(da) = accum(&mut adj, &self.nodes, *a) {
                        for (acc, d) in da.iter_mut().zip(&g) {
                            *acc += d;
                        }
                    }
                    if let Some(db) = accum(&mut adj, &self.nodes, *b) {
                        for (acc, d) in db.iter_mut().zip(&g) {
                            *acc += sign * d;
                        }
                    }
                }
                Op::Mul { a, b } => {
                    let va = self.nodes[a.0].value.as_slice();
                    let vb = self.nodes[b.0].value.as_slice();
                    if let Some(da) = accum(&mut adj, &self.nodes, *a) {
                        for ((acc, d), y) in da.iter_mut().zip(&g).zip(vb) {
                            *acc += d * y;
                        }
                    }
                    if let Some(db) = accum(&mut adj, &self.nodes, *b) {
                        for ((acc, d), x) in db.iter_mut().zip(&g).zip(va) {
                            *acc += d * x;
                        }
                    }
                }
                Op::Columns { input, start } => {
                    let src_cols = self.nodes[input.0].value.cols();
                    let len = node.value.cols();
                    if let Some(dx) = accum(&mut adj, &self.nodes, *input) {
                        for r in 0..node.value.rows() {
                            let dst = &mut dx[r * src_cols + start..r * src_cols + start + len];
                            for (acc, d) in dst.iter_mut().zip(&g[r * len..(r + 1) * len]) {
                                *acc += d;
                            }
                        }
                    }
                }
                Op::Concat { parts } => {
                    let cols = node.value.cols();
                    let mut c0 = 0;
                    for p in parts {
                        let pc = self.nodes[p.0].value.cols();
                        if let Some(dp) = accum(&mut adj, &self.nodes, *p) {
                            for r in 0..node.value.rows() {
                                let src = &g[r * cols + c0..r * cols + c0 + pc];
                                for (acc, d) in dp[r * pc..(r + 1) * pc].iter_mut().zip(src) {
                                    *acc += d;
                                }
                            }
                        }
                        c0 += pc;
                    }
                }
                Op::SumCols { input } => {
                    let cols = self.nodes[input.0].value.cols();
                    if let Some(dx) = accum(&mut adj, &self.nodes, *input) {
                        for (r, d) in g.iter().enumerate() {
                            for acc in &mut dx[r * cols..(r + 1) * cols] {
                                *acc += d;
                            }
                        }
                    }
                }
                Op::Sum { input } => {
                    if let Some(dx) = accum(&mut adj, &self.nodes, *input) {
                        for acc in dx.iter_mut() {
                            *acc += g[0];
                        }
                    }
                }
            }
        }

        if grads.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { which: "tape" });
        }
        Ok(Gradients { per_slot: grads })
    }

    /// `d root / d params` for one registered parameter vector.
    pub fn gradient(&self, root: NodeId, wrt: ParamId) -> Result<Vec<f64>> {
        Ok(self.backward(root)?.into_wrt(wrt))
    }
}

/// Adjoint buffer of `id`, allocated on first use; `None` when `id` does
/// not depend on any trainable parameter.
fn accum<'g>(adj: &'g mut [Option<Vec<f64>>], nodes: &[Node], id: NodeId) -> Option<&'g mut [f64]> {
    let node = &nodes[id.0];
    if !node.needs_grad {
        return None;
    }
    let len = node.value.as_slice().len();
    Some(adj[id.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
}

/// Result of one reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    per_slot: Vec<Vec<f64>>,
}

impl Gradients {
    /// Empty for parameters registered as frozen.
    pub fn wrt(&self, p: ParamId) -> &[f64] {
        &self.per_slot[p.0]
    }

    pub fn into_wrt(mut self, p: ParamId) -> Vec<f64> {
        core::mem::take(&mut self.per_slot[p.0])
    }
}
