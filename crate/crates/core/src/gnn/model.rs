use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::GnnConfig;
use super::layers::{self, EdgeIndex, GatHeadVars, MlpVars};
use crate::engine::{glorot_init, Activation, CsrMatrix, Matrix, SeededRng, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, GeneGraph};
use crate::io;
use crate::model::{self, Model};

/// Graph classifier: message-passing steps, mean pooling, dense readout.
///
/// Per-patient node features are the patient's cohort row read gene-major
/// as an `n_genes×channels` matrix, so a `B×(n_genes·channels)` batch is
/// processed as `B` stacked copies of the graph.
#[derive(Clone, Debug)]
pub struct GnnModel {
    config: GnnConfig,
    channels: usize,
    seed: u64,
    graph: Arc<GeneGraph>,
    adjacency: Arc<CsrMatrix>,
    names: Vec<String>,
    params: Vec<Matrix>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    arch: String,
    config: GnnConfig,
    channels: usize,
    seed: u64,
    params: Vec<String>,
}

struct ParamBuilder<'a> {
    rng: &'a mut SeededRng,
    names: Vec<String>,
    params: Vec<Matrix>,
}

impl ParamBuilder<'_> {
    fn weight(&mut self, name: String, rows: usize, cols: usize) -> Result<()> {
        let w = glorot_init(rows, cols, rows, cols, self.rng)?;
        self.names.push(name);
        self.params.push(w);
        Ok(())
    }

    fn bias(&mut self, name: String, cols: usize) {
        self.names.push(name);
        self.params.push(Matrix::zeros(1, cols));
    }

    fn mlp(&mut self, prefix: &str, input: usize, hidden: usize) -> Result<()> {
        self.weight(format!("{prefix}.w1"), input, hidden)?;
        self.bias(format!("{prefix}.b1"), hidden);
        self.weight(format!("{prefix}.w2"), hidden, hidden)?;
        self.bias(format!("{prefix}.b2"), hidden);
        Ok(())
    }
}

/// Builds a GNN over `graph` with Glorot weights and zero biases.
pub fn build_gnn(
    config: &GnnConfig,
    graph: &GeneGraph,
    channels: usize,
    seed: u64,
) -> Result<GnnModel> {
    config.validate()?;
    if channels == 0 {
        return Err(Error::Validation("node features need at least one channel".into()));
    }
    if graph.n_nodes() == 0 {
        return Err(Error::Validation("graph has no nodes".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut b = ParamBuilder {
        rng: &mut rng,
        names: Vec::new(),
        params: Vec::new(),
    };
    let hidden = config.hidden();
    let mut width = channels;
    match config {
        GnnConfig::Gcn(c) => {
            for s in 0..c.steps {
                b.weight(format!("step{s}.weight"), width, hidden)?;
                width = hidden;
            }
            b.weight("head.weight".into(), hidden, c.head)?;
            b.bias("head.bias".into(), c.head);
            b.weight("out.weight".into(), c.head, 1)?;
            b.bias("out.bias".into(), 1);
        }
        GnnConfig::Gat(c) => {
            for s in 0..c.steps {
                for k in 0..c.heads {
                    b.weight(format!("step{s}.head{k}.weight"), width, hidden)?;
                    b.weight(format!("step{s}.head{k}.att_src"), hidden, 1)?;
                    b.weight(format!("step{s}.head{k}.att_dst"), hidden, 1)?;
                }
                width = hidden;
            }
            b.weight("head.weight".into(), hidden, c.head)?;
            b.bias("head.bias".into(), c.head);
            b.weight("out.weight".into(), c.head, 1)?;
            b.bias("out.bias".into(), 1);
        }
        GnnConfig::Meta(c) => {
            let mut edge_width = 1;
            for s in 0..c.steps {
                b.mlp(&format!("step{s}.edge"), 2 * width + edge_width, hidden)?;
                b.mlp(&format!("step{s}.node"), width + hidden, hidden)?;
                width = hidden;
                edge_width = hidden;
            }
            b.weight("out.weight".into(), hidden, 1)?;
            b.bias("out.bias".into(), 1);
        }
    }
    let (names, params) = (b.names, b.params);
    Ok(GnnModel {
        config: *config,
        channels,
        seed,
        adjacency: Arc::new(normalized_adjacency(graph)),
        graph: Arc::new(graph.clone()),
        names,
        params,
    })
}

impl GnnModel {
    pub fn config(&self) -> &GnnConfig {
        &self.config
    }

    pub fn graph(&self) -> &GeneGraph {
        &self.graph
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.params[i])
    }

    /// Records the forward pass on `graph` for `blocks` stacked node-feature
    /// blocks `x_nodes` (`blocks·n×channels`); returns the `blocks×1` output.
    fn record(
        &self,
        tape: &mut Tape,
        params: &[Var],
        graph: &GeneGraph,
        adjacency: &Arc<CsrMatrix>,
        x_nodes: Matrix,
        blocks: usize,
    ) -> Result<Var> {
        let mut next = params.iter().copied();
        let mut take = || next.next().expect("parameter layout matches config");
        let mut h = tape.leaf(x_nodes);
        match self.config {
            GnnConfig::Gcn(c) => {
                for _ in 0..c.steps {
                    let w = take();
                    h = layers::record_gcn(tape, h, adjacency, blocks, w)?;
                }
            }
            GnnConfig::Gat(c) => {
                let edges = EdgeIndex::new(graph, blocks, true);
                for _ in 0..c.steps {
                    let heads: Vec<GatHeadVars> = (0..c.heads)
                        .map(|_| GatHeadVars {
                            weight: take(),
                            att_src: take(),
                            att_dst: take(),
                        })
                        .collect();
                    h = layers::record_gat(tape, h, &edges, &heads)?.0;
                }
            }
            GnnConfig::Meta(c) => {
                let edges = EdgeIndex::new(graph, blocks, false);
                let mut e = tape.leaf(Matrix::filled(edges.len(), 1, 1.0));
                for _ in 0..c.steps {
                    let mut mlp = || MlpVars {
                        w1: take(),
                        b1: take(),
                        w2: take(),
                        b2: take(),
                    };
                    let (edge_mlp, node_mlp) = (mlp(), mlp());
                    (h, e) = layers::record_meta(tape, h, e, &edges, edge_mlp, node_mlp)?;
                }
            }
        }
        let mut z = tape.block_mean(h, blocks)?;
        if !matches!(self.config, GnnConfig::Meta(_)) {
            let (w, b) = (take(), take());
            z = layers::linear(tape, z, w, b)?;
            z = tape.activation(z, Activation::Relu);
        }
        let (w, b) = (take(), take());
        let logit = layers::linear(tape, z, w, b)?;
        Ok(tape.activation(logit, Activation::Sigmoid))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.graph.save(&dir.join("graph.txt"))?;
        model::write_params(self, dir)?;
        let manifest = Manifest {
            arch: self.config.arch().into(),
            config: self.config,
            channels: self.channels,
            seed: self.seed,
            params: self.names.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        io::write_text(&dir.join("manifest.json"), &(text + "\n"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let manifest: Manifest = serde_json::from_str(&io::read_text(&path)?)
            .map_err(|e| Error::parse(&path, e.line(), e.to_string()))?;
        let graph = GeneGraph::load(&dir.join("graph.txt"))?;
        let mut model = build_gnn(&manifest.config, &graph, manifest.channels, manifest.seed)?;
        if model.names != manifest.params {
            return Err(Error::Validation(format!(
                "{}: parameter list does not match the {} layout",
                path.display(),
                manifest.arch
            )));
        }
        model::read_params(&mut model, dir)?;
        Ok(model)
    }
}

impl Model for GnnModel {
    fn arch(&self) -> &'static str {
        self.config.arch()
    }

    fn n_features(&self) -> usize {
        self.graph.n_nodes() * self.channels
    }

    fn params(&self) -> Vec<&Matrix> {
        self.params.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.params.iter_mut().collect()
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], x: &Matrix) -> Result<Var> {
        if x.cols() != self.n_features() {
            return Err(Error::dim(self.arch(), self.n_features(), x.cols()));
        }
        let blocks = x.rows();
        let nodes = Matrix::from_vec(blocks * self.graph.n_nodes(), self.channels, x.data().to_vec())?;
        self.record(tape, params, &self.graph, &self.adjacency, nodes, blocks)
    }
}

/// Probability for one patient whose `n×channels` node features are
/// row-aligned with `graph`, which may be any relabeling of the model's graph.
pub fn gnn_forward(model: &GnnModel, graph: &GeneGraph, node_features: &Matrix) -> Result<f64> {
    if node_features.rows() != graph.n_nodes() || graph.n_nodes() != model.graph.n_nodes() {
        return Err(Error::dim("gnn_forward", model.graph.n_nodes(), node_features.rows()));
    }
    if node_features.cols() != model.channels {
        return Err(Error::dim("gnn_forward channels", model.channels, node_features.cols()));
    }
    let mut tape = Tape::new();
    let params: Vec<Var> = model.params.iter().map(|p| tape.leaf(p.clone())).collect();
    let adjacency = Arc::new(normalized_adjacency(graph));
    let out = model.record(&mut tape, &params, graph, &adjacency, node_features.clone(), 1)?;
    Ok(tape.value(out)[(0, 0)])
}
