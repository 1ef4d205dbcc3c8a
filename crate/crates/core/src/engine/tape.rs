//! Reverse-mode gradient tape over a fixed set of matrix primitives.
//!
//! Every op records its inputs by index; [`Tape::backward`] walks the
//! records in exact reverse order and applies each op's analytic adjoint.
//! The primitive set is closed: it covers what the pathway-masked network
//! and the three graph networks need, nothing more.

use std::sync::Arc;

use super::masked::SparseMask;
use super::matrix::Matrix;
use super::ops::{Activation, BCE_EPS};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MaskedMatMul {
        x: Var,
        w: Var,
        mask: Arc<SparseMask>,
    },
    SparseLinear {
        x: Var,
        values: Var,
        mask: Arc<SparseMask>,
    },
    AddBias {
        a: Var,
        bias: Var,
    },
    Add(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Spmm {
        h: Var,
        adj: Arc<CsrMatrix>,
        blocks: usize,
    },
    GatherRows {
        h: Var,
        idx: Arc<[usize]>,
    },
    ScatterAdd {
        e: Var,
        idx: Arc<[usize]>,
    },
    ScaleRows {
        a: Var,
        factors: Arc<[f64]>,
    },
    MulColumn {
        a: Var,
        w: Var,
    },
    SegmentSoftmax {
        s: Var,
        seg: Arc<[usize]>,
        n_seg: usize,
    },
    ConcatCols(Vec<Var>),
    BlockMean {
        h: Var,
        blocks: usize,
    },
    Bce {
        p: Var,
        y: Arc<[f64]>,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Ordered record of primitive operations.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros if the loss does not depend on it.
    pub fn take(&mut self, v: Var) -> Matrix {
        let (r, c) = self.shapes[v.0];
        self.grads[v.0].take().unwrap_or_else(|| Matrix::zeros(r, c))
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => acc
            .add_assign(&g)
            .expect("gradient shape matches its value"),
        slot @ None => *slot = Some(g),
    }
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `x · (M ⊙ W)`.
    pub fn masked_matmul(&mut self, x: Var, w: Var, mask: &Arc<SparseMask>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        mask.check_weight(wv, "masked_matmul")?;
        if xv.cols() != wv.rows() {
            return Err(Error::dim("masked_matmul", wv.rows(), xv.cols()));
        }
        let out = mask.forward(xv, wv);
        Ok(self.push(
            out,
            Op::MaskedMatMul {
                x,
                w,
                mask: Arc::clone(mask),
            },
        ))
    }

    /// `x · W` where `W` is zero off-mask and holds `values[k]` at the
    /// `k`-th nonzero of `mask` (row-major order). `values` is `1×nnz`.
    pub fn sparse_linear(&mut self, x: Var, values: Var, mask: &Arc<SparseMask>) -> Result<Var> {
        let (xv, vv) = (self.value(x), self.value(values));
        if vv.rows() != 1 || vv.cols() != mask.count_ones() {
            return Err(Error::dim(
                "sparse_linear",
                format!("1x{}", mask.count_ones()),
                format!("{}x{}", vv.rows(), vv.cols()),
            ));
        }
        if xv.cols() != mask.rows() {
            return Err(Error::dim("sparse_linear", mask.rows(), xv.cols()));
        }
        let out = mask.forward_values(xv, vv.data());
        Ok(self.push(
            out,
            Op::SparseLinear {
                x,
                values,
                mask: Arc::clone(mask),
            },
        ))
    }

    /// Adds the `1×d` row `bias` to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::dim(
                "add_bias",
                format!("1x{}", av.cols()),
                format!("{}x{}", bv.rows(), bv.cols()),
            ));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias { a, bias }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).scale(factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let out = self.value(a).map(|x| kind.apply(x));
        self.push(out, Op::Act(a, kind))
    }

    /// Block-diagonal sparse product: `adj` applied to each `n`-row block of `h`.
    pub fn spmm(&mut self, adj: &Arc<CsrMatrix>, h: Var, blocks: usize) -> Result<Var> {
        let out = adj.spmm_blocks(self.value(h), blocks)?;
        Ok(self.push(
            out,
            Op::Spmm {
                h,
                adj: Arc::clone(adj),
                blocks,
            },
        ))
    }

    pub fn gather_rows(&mut self, h: Var, idx: &Arc<[usize]>) -> Result<Var> {
        let hv = self.value(h);
        if let Some(&bad) = idx.iter().find(|&&i| i >= hv.rows()) {
            return Err(Error::dim("gather_rows", format!("< {}", hv.rows()), bad));
        }
        let out = hv.select_rows(idx);
        Ok(self.push(
            out,
            Op::GatherRows {
                h,
                idx: Arc::clone(idx),
            },
        ))
    }

    /// `out[idx[k]] += e[k]` into `n_out` rows.
    pub fn scatter_add(&mut self, e: Var, idx: &Arc<[usize]>, n_out: usize) -> Result<Var> {
        let ev = self.value(e);
        if idx.len() != ev.rows() {
            return Err(Error::dim("scatter_add", ev.rows(), idx.len()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n_out) {
            return Err(Error::dim("scatter_add", format!("< {n_out}"), bad));
        }
        let mut out = Matrix::zeros(n_out, ev.cols());
        for (k, &t) in idx.iter().enumerate() {
            for (o, x) in out.row_mut(t).iter_mut().zip(ev.row(k)) {
                *o += x;
            }
        }
        Ok(self.push(
            out,
            Op::ScatterAdd {
                e,
                idx: Arc::clone(idx),
            },
        ))
    }

    /// Row `i` multiplied by the constant `factors[i]`.
    pub fn scale_rows(&mut self, a: Var, factors: &Arc<[f64]>) -> Result<Var> {
        let av = self.value(a);
        if factors.len() != av.rows() {
            return Err(Error::dim("scale_rows", av.rows(), factors.len()));
        }
        let mut out = av.clone();
        for (r, &f) in factors.iter().enumerate() {
            for o in out.row_mut(r) {
                *o *= f;
            }
        }
        Ok(self.push(
            out,
            Op::ScaleRows {
                a,
                factors: Arc::clone(factors),
            },
        ))
    }

    /// Row `k` of `a` multiplied by the scalar `w[k, 0]`.
    pub fn mul_column(&mut self, a: Var, w: Var) -> Result<Var> {
        let (av, wv) = (self.value(a), self.value(w));
        if wv.cols() != 1 || wv.rows() != av.rows() {
            return Err(Error::dim(
                "mul_column",
                format!("{}x1", av.rows()),
                format!("{}x{}", wv.rows(), wv.cols()),
            ));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            let f = wv[(r, 0)];
            for o in out.row_mut(r) {
                *o *= f;
            }
        }
        Ok(self.push(out, Op::MulColumn { a, w }))
    }

    /// Softmax of the column `s` within each segment `seg[k] ∈ [0, n_seg)`.
    pub fn segment_softmax(&mut self, s: Var, seg: &Arc<[usize]>, n_seg: usize) -> Result<Var> {
        let sv = self.value(s);
        if sv.cols() != 1 || sv.rows() != seg.len() {
            return Err(Error::dim(
                "segment_softmax",
                format!("{}x1", seg.len()),
                format!("{}x{}", sv.rows(), sv.cols()),
            ));
        }
        if let Some(&bad) = seg.iter().find(|&&i| i >= n_seg) {
            return Err(Error::dim("segment_softmax", format!("< {n_seg}"), bad));
        }
        let mut max = vec![f64::NEG_INFINITY; n_seg];
        for (k, &g) in seg.iter().enumerate() {
            max[g] = max[g].max(sv[(k, 0)]);
        }
        let mut exps: Vec<f64> = seg
            .iter()
            .enumerate()
            .map(|(k, &g)| (sv[(k, 0)] - max[g]).exp())
            .collect();
        let mut sums = vec![0.0; n_seg];
        for (k, &g) in seg.iter().enumerate() {
            sums[g] += exps[k];
        }
        for (k, &g) in seg.iter().enumerate() {
            exps[k] /= sums[g];
        }
        let out = Matrix::column(&exps);
        Ok(self.push(
            out,
            Op::SegmentSoftmax {
                s,
                seg: Arc::clone(seg),
                n_seg,
            },
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(Error::dim("concat_cols", rows, v.rows()));
            }
            cols += v.cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Mean over the rows of each of `blocks` equal row blocks, giving `blocks×d`.
    pub fn block_mean(&mut self, h: Var, blocks: usize) -> Result<Var> {
        let hv = self.value(h);
        if blocks == 0 || !hv.rows().is_multiple_of(blocks) || hv.rows() == 0 {
            return Err(Error::dim(
                "block_mean",
                format!("positive multiple of {blocks} rows"),
                hv.rows(),
            ));
        }
        let n = hv.rows() / blocks;
        let mut out = Matrix::zeros(blocks, hv.cols());
        for b in 0..blocks {
            let orow = out.row_mut(b);
            for r in 0..n {
                for (o, x) in orow.iter_mut().zip(hv.row(b * n + r)) {
                    *o += x;
                }
            }
            for o in orow.iter_mut() {
                *o /= n as f64;
            }
        }
        Ok(self.push(out, Op::BlockMean { h, blocks }))
    }

    /// Mean clamped binary cross-entropy of the column `p` against `y`.
    pub fn bce(&mut self, p: Var, y: &Arc<[f64]>) -> Result<Var> {
        let pv = self.value(p);
        if pv.cols() != 1 || pv.rows() != y.len() {
            return Err(Error::dim(
                "bce",
                format!("{}x1", y.len()),
                format!("{}x{}", pv.rows(), pv.cols()),
            ));
        }
        let loss = super::ops::bce_loss(pv.data(), y)?;
        Ok(self.push(
            Matrix::filled(1, 1, loss),
            Op::Bce {
                p,
                y: Arc::clone(y),
            },
        ))
    }

    /// Gradients of the `1×1` value `loss` with respect to every leaf.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::dim(
                "backward",
                "1x1 loss",
                format!("{}x{}", lv.rows(), lv.cols()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b))?;
                    let db = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MaskedMatMul { x, w, mask } => {
                    let (dx, dw) = mask.backward(self.value(*x), self.value(*w), &g);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                }
                Op::SparseLinear { x, values, mask } => {
                    let (dx, dv) =
                        mask.backward_values(self.value(*x), self.value(*values).data(), &g);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *values, Matrix::row_vector(&dv));
                }
                Op::AddBias { a, bias } => {
                    let db = Matrix::row_vector(&g.column_sums());
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, f) => accumulate(&mut grads, *a, g.scale(*f)),
                Op::Act(a, kind) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut da = g;
                    for ((d, &xi), &yi) in da.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                        *d *= kind.derivative(xi, yi);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Spmm { h, adj, blocks } => {
                    accumulate(&mut grads, *h, adj.spmm_t_blocks(&g, *blocks));
                }
                Op::GatherRows { h, idx } => {
                    let hv = self.value(*h);
                    let mut dh = Matrix::zeros(hv.rows(), hv.cols());
                    for (k, &src) in idx.iter().enumerate() {
                        for (o, x) in dh.row_mut(src).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *h, dh);
                }
                Op::ScatterAdd { e, idx } => {
                    accumulate(&mut grads, *e, g.select_rows(idx));
                }
                Op::ScaleRows { a, factors } => {
                    let mut da = g;
                    for (r, &f) in factors.iter().enumerate() {
                        for o in da.row_mut(r) {
                            *o *= f;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::MulColumn { a, w } => {
                    let (av, wv) = (self.value(*a), self.value(*w));
                    let mut da = g.clone();
                    let mut dw = Matrix::zeros(wv.rows(), 1);
                    for r in 0..av.rows() {
                        let f = wv[(r, 0)];
                        dw[(r, 0)] = g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum();
                        for o in da.row_mut(r) {
                            *o *= f;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *w, dw);
                }
                Op::SegmentSoftmax { s, seg, n_seg } => {
                    let alpha = &node.value;
                    let mut dots = vec![0.0; *n_seg];
                    for (k, &grp) in seg.iter().enumerate() {
                        dots[grp] += alpha[(k, 0)] * g[(k, 0)];
                    }
                    let ds: Vec<f64> = seg
                        .iter()
                        .enumerate()
                        .map(|(k, &grp)| alpha[(k, 0)] * (g[(k, 0)] - dots[grp]))
                        .collect();
                    accumulate(&mut grads, *s, Matrix::column(&ds));
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let cols = self.value(p).cols();
                        let mut dp = Matrix::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        off += cols;
                        accumulate(&mut grads, p, dp);
                    }
                }
                Op::BlockMean { h, blocks } => {
                    let hv = self.value(*h);
                    let n = hv.rows() / blocks;
                    let mut dh = Matrix::zeros(hv.rows(), hv.cols());
                    for b in 0..*blocks {
                        for r in 0..n {
                            for (o, x) in dh.row_mut(b * n + r).iter_mut().zip(g.row(b)) {
                                *o = x / n as f64;
                            }
                        }
                    }
                    accumulate(&mut grads, *h, dh);
                }
                Op::Bce { p, y } => {
                    let pv = self.value(*p);
                    let scale = g[(0, 0)] / y.len() as f64;
                    let dp: Vec<f64> = pv
                        .data()
                        .iter()
                        .zip(y.iter())
                        .map(|(&pi, &yi)| {
                            if !(BCE_EPS..=1.0 - BCE_EPS).contains(&pi) {
                                0.0
                            } else {
                                scale * (pi - yi) / (pi * (1.0 - pi))
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *p, Matrix::column(&dp));
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Grads { grads, shapes })
    }
}
