//! Message-passing layers, recorded on a [`Tape`] over `blocks` stacked
//! copies of the same graph (one block per patient).

use std::sync::Arc;

use crate::engine::{Activation, CsrMatrix, Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::GeneGraph;

pub const GAT_SLOPE: f64 = 0.2;

/// Directed edge lists of a batch; row `k` is the edge `src[k] → dst[k]`.
#[derive(Clone, Debug)]
pub struct EdgeIndex {
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    /// `1 / in-degree`, or 0 for nodes without incoming edges.
    pub inv_degree: Arc<[f64]>,
    pub n_total: usize,
}

impl EdgeIndex {
    pub fn new(graph: &GeneGraph, blocks: usize, self_loops: bool) -> Self {
        let n = graph.n_nodes();
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut degree = vec![0usize; n * blocks];
        for b in 0..blocks {
            let off = b * n;
            for i in 0..n {
                let nb = graph.neighbors(i);
                let split = nb.partition_point(|&j| j < i);
                let mut push = |j: usize| {
                    dst.push(off + i);
                    src.push(off + j);
                    degree[off + i] += 1;
                };
                nb[..split].iter().for_each(|&j| push(j));
                if self_loops {
                    push(i);
                }
                nb[split..].iter().for_each(|&j| push(j));
            }
        }
        let inv_degree = degree
            .iter()
            .map(|&d| if d == 0 { 0.0 } else { 1.0 / d as f64 })
            .collect();
        Self {
            src: src.into(),
            dst: dst.into(),
            inv_degree,
            n_total: n * blocks,
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Attention-head parameters: projection `d×d′` and the two halves of the
/// scoring vector, each `d′×1`.
#[derive(Clone, Copy, Debug)]
pub struct GatHeadVars {
    pub weight: Var,
    pub att_src: Var,
    pub att_dst: Var,
}

/// Two-layer perceptron `w2·relu(w1·x + b1) + b2`.
#[derive(Clone, Copy, Debug)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

pub(crate) fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add_bias(xw, b)
}

fn mlp(tape: &mut Tape, x: Var, p: MlpVars) -> Result<Var> {
    let h = linear(tape, x, p.w1, p.b1)?;
    let h = tape.activation(h, Activation::Relu);
    linear(tape, h, p.w2, p.b2)
}

pub fn record_gcn(
    tape: &mut Tape,
    h: Var,
    adjacency: &Arc<CsrMatrix>,
    blocks: usize,
    weight: Var,
) -> Result<Var> {
    let hw = tape.matmul(h, weight)?;
    let agg = tape.spmm(adjacency, hw, blocks)?;
    Ok(tape.activation(agg, Activation::Relu))
}

/// Returns the layer output and each head's attention column (aligned with `edges`).
pub fn record_gat(
    tape: &mut Tape,
    h: Var,
    edges: &EdgeIndex,
    heads: &[GatHeadVars],
) -> Result<(Var, Vec<Var>)> {
    if heads.is_empty() {
        return Err(Error::Validation("attention layer needs at least one head".into()));
    }
    let mut sum = None;
    let mut attention = Vec::with_capacity(heads.len());
    for head in heads {
        let wh = tape.matmul(h, head.weight)?;
        let s_dst = tape.matmul(wh, head.att_dst)?;
        let s_src = tape.matmul(wh, head.att_src)?;
        let e_dst = tape.gather_rows(s_dst, &edges.dst)?;
        let e_src = tape.gather_rows(s_src, &edges.src)?;
        let scores = tape.add(e_dst, e_src)?;
        let scores = tape.activation(scores, Activation::LeakyRelu { slope: GAT_SLOPE });
        let alpha = tape.segment_softmax(scores, &edges.dst, edges.n_total)?;
        let msgs = tape.gather_rows(wh, &edges.src)?;
        let msgs = tape.mul_column(msgs, alpha)?;
        let out = tape.scatter_add(msgs, &edges.dst, edges.n_total)?;
        sum = Some(match sum {
            None => out,
            Some(acc) => tape.add(acc, out)?,
        });
        attention.push(alpha);
    }
    let mean = tape.scale(sum.expect("heads non-empty"), 1.0 / heads.len() as f64);
    Ok((tape.activation(mean, Activation::Relu), attention))
}

/// One edge-then-node update; `e` has one row per edge of `edges`
/// (no self-loops). Incident edges of node `i` are those with `dst = i`.
pub fn record_meta(
    tape: &mut Tape,
    h: Var,
    e: Var,
    edges: &EdgeIndex,
    edge_mlp: MlpVars,
    node_mlp: MlpVars,
) -> Result<(Var, Var)> {
    let h_dst = tape.gather_rows(h, &edges.dst)?;
    let h_src = tape.gather_rows(h, &edges.src)?;
    let edge_in = tape.concat_cols(&[h_dst, h_src, e])?;
    let e_new = mlp(tape, edge_in, edge_mlp)?;
    let agg = tape.scatter_add(e_new, &edges.dst, edges.n_total)?;
    let agg = tape.scale_rows(agg, &edges.inv_degree)?;
    let node_in = tape.concat_cols(&[h, agg])?;
    let h_new = mlp(tape, node_in, node_mlp)?;
    Ok((h_new, e_new))
}

/// `relu(Â·H·W)` on a single graph.
pub fn gcn_layer(h: &Matrix, adjacency: &CsrMatrix, weight: &Matrix) -> Result<Matrix> {
    if h.rows() != adjacency.n() {
        return Err(Error::dim("gcn_layer", adjacency.n(), h.rows()));
    }
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone());
    let wv = tape.leaf(weight.clone());
    let out = record_gcn(&mut tape, hv, &Arc::new(adjacency.clone()), 1, wv)?;
    Ok(tape.value(out).clone())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatHead {
    pub weight: Matrix,
    pub att_src: Matrix,
    pub att_dst: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatOutput {
    pub h: Matrix,
    /// `(target, source)` for each attention entry, self-loops included.
    pub edges: Vec<(usize, usize)>,
    /// Per head, one coefficient per entry of `edges`.
    pub attention: Vec<Vec<f64>>,
}

/// Multi-head attention layer on a single graph, heads averaged.
pub fn gat_layer(h: &Matrix, graph: &GeneGraph, heads: &[GatHead]) -> Result<GatOutput> {
    if h.rows() != graph.n_nodes() {
        return Err(Error::dim("gat_layer", graph.n_nodes(), h.rows()));
    }
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone());
    let vars: Vec<GatHeadVars> = heads
        .iter()
        .map(|hd| GatHeadVars {
            weight: tape.leaf(hd.weight.clone()),
            att_src: tape.leaf(hd.att_src.clone()),
            att_dst: tape.leaf(hd.att_dst.clone()),
        })
        .collect();
    let edges = EdgeIndex::new(graph, 1, true);
    let (out, alphas) = record_gat(&mut tape, hv, &edges, &vars)?;
    Ok(GatOutput {
        h: tape.value(out).clone(),
        edges: edges.dst.iter().copied().zip(edges.src.iter().copied()).collect(),
        attention: alphas.iter().map(|&a| tape.value(a).data().to_vec()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl Mlp {
    fn leaves(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            w1: tape.leaf(self.w1.clone()),
            b1: tape.leaf(self.b1.clone()),
            w2: tape.leaf(self.w2.clone()),
            b2: tape.leaf(self.b2.clone()),
        }
    }
}

/// Edge and node update on a single graph. `e` has one row per entry of
/// [`GeneGraph::directed_edges`]; returns `(H′, E′)`.
pub fn metalayer_step(
    h: &Matrix,
    e: &Matrix,
    graph: &GeneGraph,
    edge_mlp: &Mlp,
    node_mlp: &Mlp,
) -> Result<(Matrix, Matrix)> {
    if h.rows() != graph.n_nodes() {
        return Err(Error::dim("metalayer_step", graph.n_nodes(), h.rows()));
    }
    let edges = EdgeIndex::new(graph, 1, false);
    if e.rows() != edges.len() {
        return Err(Error::dim("metalayer_step edges", edges.len(), e.rows()));
    }
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone());
    let ev = tape.leaf(e.clone());
    let em = edge_mlp.leaves(&mut tape);
    let nm = node_mlp.leaves(&mut tape);
    let (h2, e2) = record_meta(&mut tape, hv, ev, &edges, em, nm)?;
    Ok((tape.value(h2).clone(), tape.value(e2).clone()))
}

/// Column means of `h`.
pub fn global_mean_pool(h: &Matrix) -> Result<Vec<f64>> {
    if h.rows() == 0 {
        return Err(Error::dim("global_mean_pool", "at least 1 row", 0));
    }
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone());
    let out = tape.block_mean(hv, 1)?;
    Ok(tape.value(out).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, normalized_adjacency, GraphConfig, Interaction, InteractionTable};

    fn graph(n: usize, pairs: &[(usize, usize)]) -> GeneGraph {
        let names: Vec<String> = (0..n).map(|i| format!("G{i}")).collect();
        let records = pairs
            .iter()
            .map(|&(a, b)| Interaction {
                gene_a: names[a].clone(),
                gene_b: names[b].clone(),
                strength: 0.9,
            })
            .collect();
        build_graph(&InteractionTable { records }, &GraphConfig::default(), &names).unwrap()
    }

    #[test]
    fn gcn_isolated_node_is_dense_layer() {
        let g = graph(1, &[]);
        let h = Matrix::from_rows(&[vec![1.0, -2.0]]);
        let w = Matrix::from_rows(&[vec![0.5, 1.0], vec![0.25, 1.0]]);
        let out = gcn_layer(&h, &normalized_adjacency(&g), &w).unwrap();
        assert_eq!(out, Matrix::from_rows(&[vec![0.0, 0.0]]));
        let w = Matrix::from_rows(&[vec![0.5, 1.0], vec![-0.25, 1.0]]);
        let out = gcn_layer(&h, &normalized_adjacency(&g), &w).unwrap();
        assert_eq!(out, Matrix::from_rows(&[vec![1.0, 0.0]]));
    }

    #[test]
    fn gcn_symmetric_pair_identical_rows() {
        let g = graph(2, &[(0, 1)]);
        let h = Matrix::from_rows(&[vec![0.3, 0.7], vec![0.3, 0.7]]);
        let w = Matrix::from_rows(&[vec![1.0, -1.0, 0.5], vec![2.0, 0.1, 0.2]]);
        let out = gcn_layer(&h, &normalized_adjacency(&g), &w).unwrap();
        assert_eq!(out.row(0), out.row(1));
    }

    #[test]
    fn gat_single_node() {
        let g = graph(1, &[]);
        let h = Matrix::from_rows(&[vec![1.0, 2.0]]);
        let head = GatHead {
            weight: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, -1.0]]),
            att_src: Matrix::column(&[0.3, 0.1]),
            att_dst: Matrix::column(&[-0.2, 0.4]),
        };
        let out = gat_layer(&h, &g, &[head]).unwrap();
        assert_eq!(out.attention, vec![vec![1.0]]);
        assert_eq!(out.h, Matrix::from_rows(&[vec![2.0, 0.0]]));
    }

    #[test]
    fn gat_identical_heads_equal_one_head() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 2)]);
        let h = Matrix::from_rows(&[
            vec![0.1, -0.4],
            vec![0.9, 0.2],
            vec![-0.5, 0.3],
            vec![0.0, 1.0],
        ]);
        let head = GatHead {
            weight: Matrix::from_rows(&[vec![0.7, -0.3, 0.2], vec![0.1, 0.5, -0.6]]),
            att_src: Matrix::column(&[0.3, -0.2, 0.8]),
            att_dst: Matrix::column(&[-0.5, 0.4, 0.1]),
        };
        let one = gat_layer(&h, &g, std::slice::from_ref(&head)).unwrap();
        let three = gat_layer(&h, &g, &[head.clone(), head.clone(), head]).unwrap();
        for (a, b) in one.h.data().iter().zip(three.h.data()) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        let mut sums = [0.0; 4];
        for (&(t, _), &a) in one.edges.iter().zip(&one.attention[0]) {
            assert!(a >= 0.0);
            sums[t] += a;
        }
        for s in sums {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    fn mlp(rows: usize, hidden: usize, seed: u64) -> Mlp {
        let mut rng = crate::engine::SeededRng::new(seed);
        let mut m = |r, c| crate::engine::glorot_init(r, c, r, c, &mut rng).unwrap();
        Mlp {
            w1: m(rows, hidden),
            b1: m(1, hidden),
            w2: m(hidden, hidden),
            b2: m(1, hidden),
        }
    }

    #[test]
    fn meta_isolated_node_uses_zero_aggregate() {
        let g = graph(3, &[(0, 1)]);
        let h = Matrix::from_rows(&[vec![0.2, 0.1], vec![-0.3, 0.4], vec![0.5, -0.6]]);
        let e = Matrix::filled(2, 1, 1.0);
        let (em, nm) = (mlp(5, 4, 1), mlp(6, 4, 2));
        let (h2, e2) = metalayer_step(&h, &e, &g, &em, &nm).unwrap();
        assert_eq!(e2.shape(), (2, 4));

        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_rows(&[vec![0.5, -0.6, 0.0, 0.0, 0.0, 0.0]]));
        let vars = nm.leaves(&mut tape);
        let expected = mlp_value(&mut tape, x, vars);
        assert_eq!(h2.row(2), expected.data());
    }

    fn mlp_value(tape: &mut Tape, x: Var, p: MlpVars) -> Matrix {
        let out = super::mlp(tape, x, p).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn meta_without_edges() {
        let g = graph(2, &[]);
        let h = Matrix::from_rows(&[vec![0.2, 0.1], vec![-0.3, 0.4]]);
        let e = Matrix::zeros(0, 1);
        let (h2, e2) = metalayer_step(&h, &e, &g, &mlp(5, 4, 1), &mlp(6, 4, 2)).unwrap();
        assert_eq!(h2.shape(), (2, 4));
        assert_eq!(e2.rows(), 0);
        assert!(h2.is_finite());
    }

    #[test]
    fn mean_pool_examples() {
        let h = Matrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]);
        assert_eq!(global_mean_pool(&h).unwrap(), vec![1.0, 1.0]);
        let same = Matrix::from_rows(&[vec![0.3, -0.7], vec![0.3, -0.7], vec![0.3, -0.7]]);
        let pooled = global_mean_pool(&same).unwrap();
        assert!((pooled[0] - 0.3).abs() < 1e-15 && (pooled[1] + 0.7).abs() < 1e-15);
        assert!(global_mean_pool(&Matrix::zeros(0, 2)).is_err());
    }
}
