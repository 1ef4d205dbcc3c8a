//! Thresholded, undirected, unweighted gene graph in CSR form.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::CsrMatrix;
use crate::error::{Error, Result};
use crate::io;

#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub gene_a: String,
    pub gene_b: String,
    pub strength: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InteractionTable {
    pub records: Vec<Interaction>,
}

/// Parses `<gene_a>\t<gene_b>\t<strength>` rows.
pub fn parse_interactions(path: impl AsRef<Path>) -> Result<InteractionTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_interactions(BufReader::new(file), path)
}

pub fn read_interactions(reader: impl BufRead, path: &Path) -> Result<InteractionTable> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::parse(path, i + 1, "expected `<gene_a>\\t<gene_b>\\t<strength>`"));
        }
        let strength: f64 = cols[2]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("malformed strength `{}`", cols[2])))?;
        if !(0.0..=1.0).contains(&strength) {
            return Err(Error::Validation(format!(
                "{}:{}: strength {strength} outside [0, 1]",
                path.display(),
                i + 1
            )));
        }
        if cols[0] == cols[1] {
            return Err(Error::Validation(format!(
                "{}:{}: self-interaction on {}",
                path.display(),
                i + 1,
                cols[0]
            )));
        }
        records.push(Interaction {
            gene_a: cols[0].to_string(),
            gene_b: cols[1].to_string(),
            strength,
        });
    }
    Ok(InteractionTable { records })
}

impl InteractionTable {
    /// Renders the table in the format read by [`parse_interactions`].
    pub fn to_text(&self) -> String {
        self.records
            .iter()
            .map(|r| format!("{}\t{}\t{:?}\n", r.gene_a, r.gene_b, r.strength))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub threshold: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::Validation(format!(
                "graph threshold {} outside [0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Undirected gene graph; node order is the cohort's gene universe.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneGraph {
    nodes: Vec<String>,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    threshold: f64,
}

/// Keeps a record iff `strength > threshold` and both genes are in the
/// universe; duplicate pairs in either direction collapse to one edge.
pub fn build_graph(
    table: &InteractionTable,
    config: &GraphConfig,
    gene_universe: &[String],
) -> Result<GeneGraph> {
    config.validate()?;
    if gene_universe.is_empty() {
        return Err(Error::Validation("gene universe is empty".into()));
    }
    let index: HashMap<&str, usize> = gene_universe
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let mut edges = BTreeSet::new();
    for r in &table.records {
        if r.strength <= config.threshold {
            continue;
        }
        if let (Some(&a), Some(&b)) = (index.get(r.gene_a.as_str()), index.get(r.gene_b.as_str())) {
            if a != b {
                edges.insert((a, b));
                edges.insert((b, a));
            }
        }
    }
    GeneGraph::from_directed_pairs(gene_universe.to_vec(), &edges, config.threshold)
}

impl GeneGraph {
    /// `pairs` must already be symmetric and sorted.
    fn from_directed_pairs(
        nodes: Vec<String>,
        pairs: &BTreeSet<(usize, usize)>,
        threshold: f64,
    ) -> Result<Self> {
        let n = nodes.len();
        let mut offsets = vec![0; n + 1];
        let mut indices = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            offsets[a + 1] += 1;
            indices.push(b);
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let g = Self {
            nodes,
            offsets,
            indices,
            threshold,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.indices[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    /// Every edge in both directions as `(source, target)`, grouped by source.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        (0..self.n_nodes())
            .flat_map(|a| self.neighbors(a).iter().map(move |&b| (a, b)))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if self.offsets.len() != n + 1 || self.offsets[n] != self.indices.len() {
            return Err(Error::Validation("CSR offsets inconsistent".into()));
        }
        for a in 0..n {
            let nb = self.neighbors(a);
            if nb.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!("unsorted or duplicate neighbors of node {a}")));
            }
            for &b in nb {
                if b >= n || b == a || !self.has_edge(b, a) {
                    return Err(Error::Validation(format!("invalid edge ({a}, {b})")));
                }
            }
        }
        Ok(())
    }

    /// Same graph with nodes reordered: new node `k` is old node `order[k]`.
    pub fn reorder(&self, order: &[usize]) -> Result<GeneGraph> {
        let n = self.n_nodes();
        let mut inverse = vec![usize::MAX; n];
        for (k, &old) in order.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::Validation("reorder is not a permutation".into()));
            }
            inverse[old] = k;
        }
        if order.len() != n {
            return Err(Error::dim("reorder", n, order.len()));
        }
        let pairs: BTreeSet<(usize, usize)> = self
            .directed_edges()
            .into_iter()
            .map(|(a, b)| (inverse[a], inverse[b]))
            .collect();
        let nodes = order.iter().map(|&o| self.nodes[o].clone()).collect();
        Self::from_directed_pairs(nodes, &pairs, self.threshold)
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        format!(
            "nodes {} edges {} threshold {:?}\nnames\t{}\noffsets {}\nindices {}\n",
            self.n_nodes(),
            self.edge_count(),
            self.threshold,
            self.nodes.join("\t"),
            join(&self.offsets),
            join(&self.indices)
        )
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < 4 {
            return Err(Error::parse(path, lines.len() + 1, "truncated graph file"));
        }
        let header: Vec<&str> = lines[0].split_whitespace().collect();
        if header.len() != 6 || header[0] != "nodes" || header[2] != "edges" || header[4] != "threshold" {
            return Err(Error::parse(path, 1, "expected `nodes N edges M threshold T`"));
        }
        let num = |s: &str, line: usize| -> Result<usize> {
            s.parse().map_err(|_| Error::parse(path, line, format!("bad integer `{s}`")))
        };
        let n = num(header[1], 1)?;
        let m = num(header[3], 1)?;
        let threshold: f64 = header[5]
            .parse()
            .map_err(|_| Error::parse(path, 1, "bad threshold"))?;
        let names = lines[1]
            .strip_prefix("names")
            .ok_or_else(|| Error::parse(path, 2, "expected names line"))?;
        let nodes: Vec<String> = names
            .split('\t')
            .skip(1)
            .map(str::to_string)
            .collect();
        let list = |line: &str, key: &str, lineno: usize| -> Result<Vec<usize>> {
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| Error::parse(path, lineno, format!("expected {key} line")))?;
            rest.split_whitespace().map(|t| num(t, lineno)).collect()
        };
        let offsets = list(lines[2], "offsets", 3)?;
        let indices = list(lines[3], "indices", 4)?;
        if nodes.len() != n || indices.len() != 2 * m {
            return Err(Error::parse(path, 1, "header counts disagree with arrays"));
        }
        let g = Self {
            nodes,
            offsets,
            indices,
            threshold,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_text(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&io::read_text(path)?, path)
    }
}

/// `D^{-1/2}(A + I)D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalized_adjacency(graph: &GeneGraph) -> CsrMatrix {
    let n = graph.n_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / ((graph.degree(i) + 1) as f64).sqrt())
        .collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(graph.indices.len() + n);
    let mut values = Vec::with_capacity(graph.indices.len() + n);
    offsets.push(0);
    for i in 0..n {
        let mut row: Vec<usize> = graph.neighbors(i).to_vec();
        row.push(i);
        row.sort_unstable();
        for j in row {
            indices.push(j);
            values.push(inv_sqrt[i] * inv_sqrt[j]);
        }
        offsets.push(indices.len());
    }
    CsrMatrix::new(n, offsets, indices, values).expect("well-formed by construction")
}
