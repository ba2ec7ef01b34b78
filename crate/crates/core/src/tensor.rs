//! Reverse-mode differentiation on a flat tape of 2-D values.
//!
//! Every operation appends a node to the [`Tape`] and returns its
//! [`ValueId`]. Nodes are stored in creation order, which is also a
//! topological order, so [`Tape::backward`] is a single reverse sweep.
//!
//! There is no broadcasting. Callers adapt shapes explicitly with
//! [`Tape::repeat_rows`] and [`Tape::repeat_cols`].
//!
//! ```
//! use ordered_gnn::{Matrix, Tape};
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.param(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
//! let loss = tape.sum(x);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).data(), &[1.0; 4]);
//! ```

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::{Matrix, Real};

/// Work (multiply-adds) above which matmul and aggregation split rows
/// across the rayon pool. Each output row keeps a fixed summation order, so
/// parallel and serial results are bitwise identical.
const PAR_THRESHOLD: usize = 1 << 16;

/// Correctly rounded sum of `xs` (Shewchuk's partials with a final
/// half-even correction), so any ordering of the same values gives the same
/// result. `partials` is scratch space.
pub(crate) fn exact_sum<T: Real>(xs: impl Iterator<Item = T>, partials: &mut Vec<T>) -> T {
    partials.clear();
    for mut x in xs {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != T::zero() {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let Some(mut n) = partials.len().checked_sub(1) else {
        return T::zero();
    };
    let mut hi = partials[n];
    let mut lo = T::zero();
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != T::zero() {
            break;
        }
    }
    if n > 0 {
        let next = partials[n - 1];
        if (lo < T::zero() && next < T::zero()) || (lo > T::zero() && next > T::zero()) {
            let y = lo + lo;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(usize);

impl ValueId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds, used for visit accounting and fault injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    RowSoftmax,
    CumsumReverse,
    LayerNorm,
    Dropout,
    Concat,
    CrossEntropy,
    Add,
    Sub,
    Mul,
    OneMinus,
    Relu,
    Sigmoid,
    RepeatRows,
    RepeatCols,
    NeighborMean,
    Sum,
}

enum Op<T> {
    Leaf,
    MatMul(ValueId, ValueId),
    RowSoftmax(ValueId),
    CumsumReverse(ValueId),
    LayerNorm {
        x: ValueId,
        gain: ValueId,
        bias: ValueId,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Dropout {
        x: ValueId,
        mask: Vec<T>,
    },
    Concat(ValueId, ValueId),
    CrossEntropy {
        logits: ValueId,
        rows: Vec<usize>,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    OneMinus(ValueId),
    Relu(ValueId),
    Sigmoid(ValueId),
    RepeatRows(ValueId),
    RepeatCols(ValueId, usize),
    NeighborMean(ValueId, Arc<Graph>),
    Sum(ValueId),
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::RowSoftmax(_) => OpKind::RowSoftmax,
            Op::CumsumReverse(_) => OpKind::CumsumReverse,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::Dropout { .. } => OpKind::Dropout,
            Op::Concat(..) => OpKind::Concat,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::OneMinus(_) => OpKind::OneMinus,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::RepeatRows(_) => OpKind::RepeatRows,
            Op::RepeatCols(..) => OpKind::RepeatCols,
            Op::NeighborMean(..) => OpKind::NeighborMean,
            Op::Sum(_) => OpKind::Sum,
        }
    }
}

struct Node<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    grad: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
    visits: u32,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    swept: bool,
    parallel: bool,
    min_relu_margin: f64,
    fault: Option<OpKind>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            swept: false,
            parallel: true,
            min_relu_margin: f64::INFINITY,
            fault: None,
        }
    }

    /// Disables row-parallel kernels. Results do not change; this only
    /// pins execution to the calling thread.
    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, m: Matrix<T>) -> ValueId {
        self.leaf(m, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, m: Matrix<T>) -> ValueId {
        self.leaf(m, false)
    }

    fn leaf(&mut self, m: Matrix<T>, requires_grad: bool) -> ValueId {
        let (rows, cols) = m.shape();
        self.push(rows, cols, m.into_vec(), Op::Leaf, requires_grad)
    }

    fn push(
        &mut self,
        rows: usize,
        cols: usize,
        data: Vec<T>,
        op: Op<T>,
        requires_grad: bool,
    ) -> ValueId {
        debug_assert_eq!(data.len(), rows * cols);
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node {
            rows,
            cols,
            grad: vec![T::zero(); data.len()],
            data,
            op,
            requires_grad,
            visits: 0,
        });
        id
    }

    fn node(&self, id: ValueId) -> &Node<T> {
        &self.nodes[id.0]
    }

    fn rg(&self, ids: &[ValueId]) -> bool {
        ids.iter().any(|&i| self.nodes[i.0].requires_grad)
    }

    pub fn shape(&self, id: ValueId) -> (usize, usize) {
        let n = self.node(id);
        (n.rows, n.cols)
    }

    pub fn data(&self, id: ValueId) -> &[T] {
        &self.node(id).data
    }

    pub fn value(&self, id: ValueId) -> Matrix<T> {
        let n = self.node(id);
        Matrix::from_vec(n.rows, n.cols, n.data.clone())
    }

    pub fn grad(&self, id: ValueId) -> Matrix<T> {
        let n = self.node(id);
        Matrix::from_vec(n.rows, n.cols, n.grad.clone())
    }

    pub fn scalar(&self, id: ValueId) -> T {
        self.node(id).data[0]
    }

    pub fn requires_grad(&self, id: ValueId) -> bool {
        self.node(id).requires_grad
    }

    pub fn op_kind(&self, id: ValueId) -> OpKind {
        self.node(id).op.kind()
    }

    /// Number of times the last backward sweep processed this value.
    pub fn visits(&self, id: ValueId) -> u32 {
        self.node(id).visits
    }

    /// Smallest |input| seen by any relu on this tape. Gradient checks
    /// resample when this falls below their kink tolerance.
    pub fn min_relu_margin(&self) -> f64 {
        self.min_relu_margin
    }

    /// Flips the sign of the gradient flowing through every op of `kind`.
    /// Only useful for checking that a gradient checker catches broken
    /// backward rules.
    #[doc(hidden)]
    pub fn inject_sign_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    fn check_same(&self, op: &'static str, a: ValueId, b: ValueId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Dimension {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                left: (m, k),
                right: (k2, n),
            });
        }
        let out = matmul_kernel(
            &self.node(a).data,
            &self.node(b).data,
            m,
            k,
            n,
            self.parallel,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(m, n, out, Op::MatMul(a, b), rg))
    }

    pub fn row_softmax(&mut self, x: ValueId) -> Result<ValueId> {
        let (m, d) = self.shape(x);
        let src = &self.node(x).data;
        if src.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain { op: "row_softmax" });
        }
        let mut out = vec![T::zero(); m * d];
        for (row, dst) in src.chunks(d.max(1)).zip(out.chunks_mut(d.max(1))) {
            softmax_row(row, dst);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(m, d, out, Op::RowSoftmax(x), rg))
    }

    pub fn cumsum_reverse(&mut self, x: ValueId) -> ValueId {
        let (m, d) = self.shape(x);
        let src = &self.node(x).data;
        let mut out = vec![T::zero(); m * d];
        for (row, dst) in src.chunks(d.max(1)).zip(out.chunks_mut(d.max(1))) {
            let mut acc = T::zero();
            for l in (0..row.len()).rev() {
                acc = acc + row[l];
                dst[l] = acc;
            }
        }
        let rg = self.rg(&[x]);
        self.push(m, d, out, Op::CumsumReverse(x), rg)
    }

    pub fn layer_norm(
        &mut self,
        x: ValueId,
        gain: ValueId,
        bias: ValueId,
        eps: f64,
    ) -> Result<ValueId> {
        let (m, d) = self.shape(x);
        if d < 2 {
            return Err(Error::Config(format!(
                "layer_norm needs at least 2 columns, got {d}"
            )));
        }
        if eps.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Config(format!("layer_norm eps must be > 0, got {eps}")));
        }
        for p in [gain, bias] {
            if self.shape(p) != (1, d) {
                return Err(Error::Dimension {
                    op: "layer_norm",
                    left: (m, d),
                    right: self.shape(p),
                });
            }
        }
        let eps = T::lit(eps);
        let dt = T::lit(d as f64);
        let src = &self.node(x).data;
        let g = &self.node(gain).data;
        let b = &self.node(bias).data;
        let mut out = vec![T::zero(); m * d];
        let mut xhat = vec![T::zero(); m * d];
        let mut inv_std = vec![T::zero(); m];
        for r in 0..m {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dt;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dt;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..d {
                let xh = (row[c] - mean) * is;
                xhat[r * d + c] = xh;
                out[r * d + c] = xh * g[c] + b[c];
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            m,
            d,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Inverted dropout. In eval mode, or with `rate == 0`, the input id is
    /// returned unchanged and `rng` is not touched.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: ValueId,
        rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<ValueId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0,1), got {rate}")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let (m, d) = self.shape(x);
        let keep = 1.0 - rate;
        let scale = T::lit(1.0 / keep);
        let mask: Vec<T> = (0..m * d)
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    scale
                } else {
                    T::zero()
                }
            })
            .collect();
        let out = self
            .node(x)
            .data
            .iter()
            .zip(&mask)
            .map(|(&v, &k)| v * k)
            .collect();
        let rg = self.rg(&[x]);
        Ok(self.push(m, d, out, Op::Dropout { x, mask }, rg))
    }

    pub fn concat(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (m, d1) = self.shape(a);
        let (m2, d2) = self.shape(b);
        if m != m2 {
            return Err(Error::Dimension {
                op: "concat",
                left: (m, d1),
                right: (m2, d2),
            });
        }
        let (da, db) = (&self.node(a).data, &self.node(b).data);
        let mut out = Vec::with_capacity(m * (d1 + d2));
        for r in 0..m {
            out.extend_from_slice(&da[r * d1..(r + 1) * d1]);
            out.extend_from_slice(&db[r * d2..(r + 1) * d2]);
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(m, d1 + d2, out, Op::Concat(a, b), rg))
    }

    /// Mean negative log-likelihood over the rows selected by `mask`.
    pub fn cross_entropy(
        &mut self,
        logits: ValueId,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<ValueId> {
        let (m, c) = self.shape(logits);
        if labels.len() != m || mask.len() != m {
            return Err(Error::Dimension {
                op: "cross_entropy",
                left: (m, c),
                right: (labels.len(), mask.len()),
            });
        }
        let rows: Vec<usize> = (0..m).filter(|&i| mask[i]).collect();
        if rows.is_empty() {
            return Err(Error::Config("cross_entropy mask selects no rows".into()));
        }
        let src = &self.node(logits).data;
        if src.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain {
                op: "cross_entropy",
            });
        }
        let mut probs = vec![T::zero(); rows.len() * c];
        let mut picked = Vec::with_capacity(rows.len());
        let mut total = T::zero();
        for (j, &r) in rows.iter().enumerate() {
            let y = labels[r];
            if y >= c {
                return Err(Error::Contract(format!(
                    "label {y} at row {r} out of range for {c} classes"
                )));
            }
            let row = &src[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            total = total + (lse - row[y]);
            for (p, &v) in probs[j * c..(j + 1) * c].iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
            picked.push(y);
        }
        let loss = total / T::lit(rows.len() as f64);
        let rg = self.rg(&[logits]);
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropy {
                logits,
                rows,
                labels: picked,
                probs,
            },
            rg,
        ))
    }

    fn zip_with(
        &mut self,
        op: &'static str,
        a: ValueId,
        b: ValueId,
        f: impl Fn(T, T) -> T,
        record: Op<T>,
    ) -> Result<ValueId> {
        self.check_same(op, a, b)?;
        let (m, d) = self.shape(a);
        let out = self
            .node(a)
            .data
            .iter()
            .zip(&self.node(b).data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(m, d, out, record, rg))
    }

    fn map_unary(&mut self, x: ValueId, f: impl Fn(T) -> T, record: Op<T>) -> ValueId {
        let (m, d) = self.shape(x);
        let out = self.node(x).data.iter().map(|&v| f(v)).collect();
        let rg = self.rg(&[x]);
        self.push(m, d, out, record, rg)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn one_minus(&mut self, x: ValueId) -> ValueId {
        self.map_unary(x, |v| T::one() - v, Op::OneMinus(x))
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let margin = self
            .node(x)
            .data
            .iter()
            .map(|v| v.abs().to_f64_lossless())
            .fold(f64::INFINITY, f64::min);
        self.min_relu_margin = self.min_relu_margin.min(margin);
        self.map_unary(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: ValueId) -> ValueId {
        self.map_unary(x, sigmoid, Op::Sigmoid(x))
    }

    /// Tiles a `1×d` row `m` times.
    pub fn repeat_rows(&mut self, x: ValueId, m: usize) -> Result<ValueId> {
        let (r, d) = self.shape(x);
        if r != 1 {
            return Err(Error::Dimension {
                op: "repeat_rows",
                left: (r, d),
                right: (1, d),
            });
        }
        let row = self.node(x).data.clone();
        let mut out = Vec::with_capacity(m * d);
        for _ in 0..m {
            out.extend_from_slice(&row);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(m, d, out, Op::RepeatRows(x), rg))
    }

    /// Repeats every column `c` times in place: `[a, b]` with `c = 2`
    /// becomes `[a, a, b, b]`.
    pub fn repeat_cols(&mut self, x: ValueId, c: usize) -> Result<ValueId> {
        if c == 0 {
            return Err(Error::Config("column repeat factor must be >= 1".into()));
        }
        let (m, d) = self.shape(x);
        let out = self
            .node(x)
            .data
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, c))
            .collect();
        let rg = self.rg(&[x]);
        Ok(self.push(m, d * c, out, Op::RepeatCols(x, c), rg))
    }

    /// Mean of neighbor rows; degree-0 nodes get a zero row.
    ///
    /// Neighbor sums are correctly rounded, so the result does not depend
    /// on the order neighbors are stored in and relabeling nodes permutes
    /// the output bitwise.
    pub fn neighbor_mean(&mut self, graph: &Arc<Graph>, x: ValueId) -> Result<ValueId> {
        let (m, d) = self.shape(x);
        if m != graph.num_nodes() {
            return Err(Error::Dimension {
                op: "mean_aggregate",
                left: (graph.num_nodes(), d),
                right: (m, d),
            });
        }
        let src = &self.node(x).data;
        let mut out = vec![T::zero(); m * d];
        let kernel = |(v, dst): (usize, &mut [T])| {
            let nb = graph.neighbors(v);
            if nb.is_empty() {
                return;
            }
            let deg = T::lit(nb.len() as f64);
            let mut partials = Vec::new();
            for (c, o) in dst.iter_mut().enumerate() {
                *o = exact_sum(nb.iter().map(|&u| src[u * d + c]), &mut partials) / deg;
            }
        };
        if d > 0 {
            if self.parallel && graph.num_edges() * 2 * d >= PAR_THRESHOLD {
                out.par_chunks_mut(d).enumerate().for_each(kernel);
            } else {
                out.chunks_mut(d).enumerate().for_each(kernel);
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(m, d, out, Op::NeighborMean(x, Arc::clone(graph)), rg))
    }

    pub fn sum(&mut self, x: ValueId) -> ValueId {
        let s = self.node(x).data.iter().copied().sum::<T>();
        let rg = self.rg(&[x]);
        self.push(1, 1, vec![s], Op::Sum(x), rg)
    }

    /// Clears gradients and visit counters so another sweep is allowed.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.iter_mut().for_each(|g| *g = T::zero());
            n.visits = 0;
        }
        self.swept = false;
    }

    /// Seeds `loss` with 1 and propagates to every requires-grad value
    /// created before it.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.shape(loss)
            )));
        }
        if self.swept {
            return Err(Error::State(
                "backward already ran on this tape; call zero_grad first".into(),
            ));
        }
        self.swept = true;
        self.nodes[loss.0].grad[0] = T::one();
        for i in (0..=loss.0).rev() {
            let (lo, hi) = self.nodes.split_at_mut(i);
            let node = &mut hi[0];
            if !node.requires_grad {
                continue;
            }
            node.visits += 1;
            let mut g = std::mem::take(&mut node.grad);
            if self.fault == Some(node.op.kind()) {
                g.iter_mut().for_each(|v| *v = -*v);
            }
            propagate(lo, node, &g, self.parallel);
            if self.fault == Some(node.op.kind()) {
                g.iter_mut().for_each(|v| *v = -*v);
            }
            node.grad = g;
        }
        Ok(())
    }
}

#[inline]
fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn softmax_row<T: Real>(row: &[T], dst: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &v) in dst.iter_mut().zip(row) {
        *o = (v - max).exp();
        total = total + *o;
    }
    for o in dst.iter_mut() {
        *o = *o / total;
    }
}

fn matmul_kernel<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, par: bool) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    if n == 0 {
        return out;
    }
    let row = |(i, dst): (usize, &mut [T])| {
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in dst.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o = *o + av * bv;
            }
        }
    };
    if par && m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

fn transpose<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut t = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

fn accumulate<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// Adds this node's contribution to the gradients of its inputs. Inputs
/// always precede the node, so they all live in `lo`.
fn propagate<T: Real>(lo: &mut [Node<T>], node: &Node<T>, g: &[T], par: bool) {
    let (rows, cols) = (node.rows, node.cols);
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = (lo[a.0].rows, lo[a.0].cols);
            let n = cols;
            if lo[a.0].requires_grad {
                // dA = G · Bᵀ
                let bt = transpose(&lo[b.0].data, k, n);
                let da = matmul_kernel(g, &bt, m, n, k, par);
                accumulate(&mut lo[a.0].grad, &da);
            }
            if lo[b.0].requires_grad {
                // dB = Aᵀ · G
                let at = transpose(&lo[a.0].data, m, k);
                let db = matmul_kernel(&at, g, k, m, n, par);
                accumulate(&mut lo[b.0].grad, &db);
            }
        }
        Op::RowSoftmax(x) => {
            let y = &node.data;
            let gx = &mut lo[x.0].grad;
            for r in 0..rows {
                let s = r * cols..(r + 1) * cols;
                let dot: T = g[s.clone()]
                    .iter()
                    .zip(&y[s.clone()])
                    .map(|(&a, &b)| a * b)
                    .sum();
                for j in s {
                    gx[j] = gx[j] + y[j] * (g[j] - dot);
                }
            }
        }
        Op::CumsumReverse(x) => {
            let gx = &mut lo[x.0].grad;
            for r in 0..rows {
                let mut acc = T::zero();
                for j in 0..cols {
                    acc = acc + g[r * cols + j];
                    gx[r * cols + j] = gx[r * cols + j] + acc;
                }
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let d = cols;
            let dt = T::lit(d as f64);
            if lo[gain.0].requires_grad {
                let gg = &mut lo[gain.0].grad;
                for r in 0..rows {
                    for c in 0..d {
                        gg[c] = gg[c] + g[r * d + c] * xhat[r * d + c];
                    }
                }
            }
            if lo[bias.0].requires_grad {
                let gb = &mut lo[bias.0].grad;
                for r in 0..rows {
                    for c in 0..d {
                        gb[c] = gb[c] + g[r * d + c];
                    }
                }
            }
            if lo[x.0].requires_grad {
                let gain_v = lo[gain.0].data.clone();
                let gx = &mut lo[x.0].grad;
                let mut gxh = vec![T::zero(); d];
                for r in 0..rows {
                    let xh = &xhat[r * d..(r + 1) * d];
                    for c in 0..d {
                        gxh[c] = g[r * d + c] * gain_v[c];
                    }
                    let s1: T = gxh.iter().copied().sum();
                    let s2: T = gxh.iter().zip(xh).map(|(&a, &b)| a * b).sum();
                    let k = inv_std[r] / dt;
                    for c in 0..d {
                        let v = k * (dt * gxh[c] - s1 - xh[c] * s2);
                        gx[r * d + c] = gx[r * d + c] + v;
                    }
                }
            }
        }
        Op::Dropout { x, mask } => {
            let gx = &mut lo[x.0].grad;
            for ((o, &gv), &k) in gx.iter_mut().zip(g).zip(mask) {
                *o = *o + gv * k;
            }
        }
        Op::Concat(a, b) => {
            let (d1, d2) = (lo[a.0].cols, lo[b.0].cols);
            for r in 0..rows {
                let src = &g[r * cols..(r + 1) * cols];
                if lo[a.0].requires_grad {
                    accumulate(&mut lo[a.0].grad[r * d1..(r + 1) * d1], &src[..d1]);
                }
                if lo[b.0].requires_grad {
                    accumulate(&mut lo[b.0].grad[r * d2..(r + 1) * d2], &src[d1..]);
                }
            }
        }
        Op::CrossEntropy {
            logits,
            rows: sel,
            labels,
            probs,
        } => {
            let c = lo[logits.0].cols;
            let scale = g[0] / T::lit(sel.len() as f64);
            let gl = &mut lo[logits.0].grad;
            for (j, (&r, &y)) in sel.iter().zip(labels).enumerate() {
                for k in 0..c {
                    let mut d = probs[j * c + k];
                    if k == y {
                        d = d - T::one();
                    }
                    gl[r * c + k] = gl[r * c + k] + d * scale;
                }
            }
        }
        Op::Add(a, b) => {
            for id in [a, b] {
                if lo[id.0].requires_grad {
                    accumulate(&mut lo[id.0].grad, g);
                }
            }
        }
        Op::Sub(a, b) => {
            if lo[a.0].requires_grad {
                accumulate(&mut lo[a.0].grad, g);
            }
            if lo[b.0].requires_grad {
                for (o, &v) in lo[b.0].grad.iter_mut().zip(g) {
                    *o = *o - v;
                }
            }
        }
        Op::Mul(a, b) => {
            if lo[a.0].requires_grad {
                let bd = lo[b.0].data.clone();
                for ((o, &v), &w) in lo[a.0].grad.iter_mut().zip(g).zip(&bd) {
                    *o = *o + v * w;
                }
            }
            if lo[b.0].requires_grad {
                let ad = lo[a.0].data.clone();
                for ((o, &v), &w) in lo[b.0].grad.iter_mut().zip(g).zip(&ad) {
                    *o = *o + v * w;
                }
            }
        }
        Op::OneMinus(x) => {
            for (o, &v) in lo[x.0].grad.iter_mut().zip(g) {
                *o = *o - v;
            }
        }
        Op::Relu(x) => {
            let xn = &mut lo[x.0];
            for ((o, &v), &inp) in xn.grad.iter_mut().zip(g).zip(&xn.data) {
                if inp > T::zero() {
                    *o = *o + v;
                }
            }
        }
        Op::Sigmoid(x) => {
            for ((o, &v), &y) in lo[x.0].grad.iter_mut().zip(g).zip(&node.data) {
                *o = *o + v * y * (T::one() - y);
            }
        }
        Op::RepeatRows(x) => {
            let gx = &mut lo[x.0].grad;
            for r in 0..rows {
                accumulate(gx, &g[r * cols..(r + 1) * cols]);
            }
        }
        Op::RepeatCols(x, c) => {
            let gx = &mut lo[x.0].grad;
            for (o, block) in gx.iter_mut().zip(g.chunks(*c)) {
                *o = *o + block.iter().copied().sum::<T>();
            }
        }
        Op::NeighborMean(x, graph) => {
            // Scatter g_v / deg(v) to every neighbor u of v. Gathering by
            // source instead keeps the per-row order fixed: since the graph
            // is symmetric, dX_u = sum over v in N(u) of g_v / deg(v).
            let d = cols;
            let gx = &mut lo[x.0].grad;
            if d == 0 {
                return;
            }
            let kernel = |(u, dst): (usize, &mut [T])| {
                for &v in graph.neighbors(u) {
                    let inv = T::one() / T::lit(graph.degree(v) as f64);
                    for (o, &s) in dst.iter_mut().zip(&g[v * d..(v + 1) * d]) {
                        *o = *o + s * inv;
                    }
                }
            };
            if par && graph.num_edges() * 2 * d >= PAR_THRESHOLD {
                gx.par_chunks_mut(d).enumerate().for_each(kernel);
            } else {
                gx.chunks_mut(d).enumerate().for_each(kernel);
            }
        }
        Op::Sum(x) => {
            let s = g[0];
            for o in lo[x.0].grad.iter_mut() {
                *o = *o + s;
            }
        }
    }
}
