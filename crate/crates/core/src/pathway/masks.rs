use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hierarchy::PathwayHierarchy;
use crate::engine::{Matrix, SeededRng};
use crate::error::{Error, Result};
use crate::io;

pub const MIN_LAYERS: usize = 2;
pub const MAX_LAYERS: usize = 6;

/// Ordered stack of binary connectivity matrices for the sparse classifier.
///
/// `gene_mask` maps the `n_genes·channels` input features (gene-major:
/// feature `g·channels + f`) onto one unit per gene. `pathway_masks[0]`
/// maps genes onto level-1 pathways and `pathway_masks[ℓ]` maps level-ℓ
/// units onto level-(ℓ+1) units.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    pub channels: usize,
    pub gene_mask: Matrix,
    pub pathway_masks: Vec<Matrix>,
    /// Unit labels: genes first, then one list per pathway layer.
    pub layer_labels: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub ones: usize,
    pub density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskStats {
    pub layers: Vec<LayerStats>,
}

impl MaskStats {
    pub fn total_ones(&self) -> usize {
        self.layers.iter().map(|l| l.ones).sum()
    }
}

impl MaskSet {
    pub fn n_layers(&self) -> usize {
        self.pathway_masks.len()
    }

    pub fn n_genes(&self) -> usize {
        self.gene_mask.cols()
    }

    pub fn n_inputs(&self) -> usize {
        self.gene_mask.rows()
    }

    /// Gene mask followed by pathway masks.
    pub fn matrices(&self) -> impl Iterator<Item = &Matrix> {
        std::iter::once(&self.gene_mask).chain(self.pathway_masks.iter())
    }

    pub fn layer_names(&self) -> Vec<String> {
        std::iter::once("gene".to_string())
            .chain((1..=self.n_layers()).map(|l| format!("pathway{l}")))
            .collect()
    }

    /// Every matrix independently shuffled with [`permute_mask`], in layer order.
    pub fn permuted(&self, rng: &mut SeededRng) -> MaskSet {
        MaskSet {
            channels: self.channels,
            gene_mask: permute_mask(&self.gene_mask, rng),
            pathway_masks: self
                .pathway_masks
                .iter()
                .map(|m| permute_mask(m, rng))
                .collect(),
            layer_labels: self.layer_labels.clone(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let names = self.layer_names();
        let mut layers = Vec::new();
        for ((name, m), labels) in names.iter().zip(self.matrices()).zip(&self.layer_labels) {
            let file = format!("{name}.mask");
            io::write_text(&dir.join(&file), &io::format_binary(m))?;
            layers.push(ManifestLayer {
                name: name.clone(),
                file,
                labels: labels.clone(),
            });
        }
        let manifest = MaskManifest {
            channels: self.channels,
            layers,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        io::write_text(&dir.join("manifest.json"), &(text + "\n"))
    }

    pub fn load(dir: &Path) -> Result<MaskSet> {
        let path = dir.join("manifest.json");
        let manifest: MaskManifest = serde_json::from_str(&io::read_text(&path)?)
            .map_err(|e| Error::parse(&path, e.line(), e.to_string()))?;
        if manifest.layers.len() < 2 {
            return Err(Error::Validation(format!(
                "{}: mask manifest lists fewer than two layers",
                path.display()
            )));
        }
        let mut matrices = Vec::new();
        let mut labels = Vec::new();
        for layer in &manifest.layers {
            matrices.push(io::read_matrix(&dir.join(&layer.file))?);
            labels.push(layer.labels.clone());
        }
        let gene_mask = matrices.remove(0);
        let set = MaskSet {
            channels: manifest.channels,
            gene_mask,
            pathway_masks: matrices,
            layer_labels: labels,
        };
        set.validate_shapes()?;
        Ok(set)
    }

    /// Shapes chain and label lists match unit counts.
    pub fn validate_shapes(&self) -> Result<()> {
        if self.channels == 0 || self.gene_mask.rows() != self.n_genes() * self.channels {
            return Err(Error::Validation(format!(
                "gene mask {}x{} does not match {} channels",
                self.gene_mask.rows(),
                self.gene_mask.cols(),
                self.channels
            )));
        }
        let mut width = self.n_genes();
        for (l, m) in self.pathway_masks.iter().enumerate() {
            if m.rows() != width {
                return Err(Error::dim("mask stack", width, m.rows()));
            }
            if self.layer_labels.get(l + 1).map(Vec::len) != Some(m.cols()) {
                return Err(Error::Validation(format!("labels of layer {} do not match", l + 1)));
            }
            width = m.cols();
        }
        if self.layer_labels.first().map(Vec::len) != Some(self.n_genes()) {
            return Err(Error::Validation("gene labels do not match gene count".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestLayer {
    name: String,
    file: String,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct MaskManifest {
    channels: usize,
    layers: Vec<ManifestLayer>,
}

/// Label of the pass-through copy of `pathway` at `level`.
fn passthrough_label(pathway: &str, level: usize) -> String {
    format!("{pathway}@{level}")
}

/// Compiles the hierarchy into the gene mask plus `layers` pathway masks.
///
/// Pathways are first restricted to those reaching the gene universe.
/// Units within a level are ordered by label. A relation that skips
/// levels, or a pathway whose parents all lie above `layers` (or that has
/// none), is carried upward by pass-through units `id@level`, one per
/// intermediate level, each with a single incoming connection. Pathways
/// above `layers` are dropped and the top level feeds the output head.
pub fn build_masks(hierarchy: &PathwayHierarchy, layers: usize, channels: usize) -> Result<MaskSet> {
    if !(MIN_LAYERS..=MAX_LAYERS).contains(&layers) {
        return Err(Error::Validation(format!(
            "layer count {layers} outside [{MIN_LAYERS}, {MAX_LAYERS}]"
        )));
    }
    if channels == 0 {
        return Err(Error::Validation("channel count must be at least 1".into()));
    }
    let h = hierarchy.restrict_to_universe()?;
    let max_depth = h.max_depth();
    if layers > max_depth {
        return Err(Error::Validation(format!(
            "requested {layers} pathway layers but the hierarchy has max depth {max_depth}"
        )));
    }

    let level = h.level_of();
    let parents = h.parents_map();
    let children = h.children_map();

    // highest level each pathway must be carried to by pass-through copies
    let mut carry_to: BTreeMap<&str, usize> = BTreeMap::new();
    for (id, &lv) in level {
        if lv >= layers {
            continue;
        }
        let need = match parents.get(id.as_str()) {
            Some(ps) => ps
                .iter()
                .map(|p| level[*p].min(layers + 1) - 1)
                .max()
                .unwrap_or(lv),
            None => layers,
        };
        if need > lv {
            carry_to.insert(id.as_str(), need);
        }
    }

    let mut units: Vec<Vec<String>> = vec![Vec::new(); layers + 1];
    for (id, &lv) in level {
        if lv <= layers {
            units[lv].push(id.clone());
        }
    }
    for (&id, &top) in &carry_to {
        for lv in level[id] + 1..=top {
            units[lv].push(passthrough_label(id, lv));
        }
    }
    for u in units.iter_mut() {
        u.sort();
    }
    let index: Vec<HashMap<&str, usize>> = units
        .iter()
        .map(|u| u.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect())
        .collect();

    let genes = h.gene_universe();
    let n_genes = genes.len();
    let gene_index: HashMap<&str, usize> =
        genes.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();

    let mut gene_mask = Matrix::zeros(n_genes * channels, n_genes);
    for g in 0..n_genes {
        for f in 0..channels {
            gene_mask[(g * channels + f, g)] = 1.0;
        }
    }

    let mut pathway_masks = Vec::with_capacity(layers);
    let mut first = Matrix::zeros(n_genes, units[1].len());
    for (col, id) in units[1].iter().enumerate() {
        for g in &h.pathways()[id] {
            if let Some(&row) = gene_index.get(g.as_str()) {
                first[(row, col)] = 1.0;
            }
        }
    }
    pathway_masks.push(first);

    // unit at level `lv` that carries pathway `id` (itself or its copy)
    let carrier = |id: &str, lv: usize| -> usize {
        if level[id] == lv {
            index[lv][id]
        } else {
            index[lv][passthrough_label(id, lv).as_str()]
        }
    };
    for lv in 2..=layers {
        let mut m = Matrix::zeros(units[lv - 1].len(), units[lv].len());
        for (col, label) in units[lv].iter().enumerate() {
            if let Some(&lp) = level.get(label) {
                if lp == lv {
                    for &c in children.get(label.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
                        m[(carrier(c, lv - 1), col)] = 1.0;
                    }
                    continue;
                }
            }
            let (id, _) = label.rsplit_once('@').expect("pass-through label");
            m[(carrier(id, lv - 1), col)] = 1.0;
        }
        pathway_masks.push(m);
    }

    let mut layer_labels = vec![genes.to_vec()];
    layer_labels.extend(units.into_iter().skip(1));
    let set = MaskSet {
        channels,
        gene_mask,
        pathway_masks,
        layer_labels,
    };
    for (name, m) in set.layer_names().iter().zip(set.matrices()) {
        if let Some(dead) = m.column_sums().iter().position(|&s| s == 0.0) {
            return Err(Error::Validation(format!(
                "layer {name} unit {dead} has no incoming connection"
            )));
        }
    }
    Ok(set)
}

/// Uniform random permutation of the flattened entries (Fisher–Yates).
pub fn permute_mask(mask: &Matrix, rng: &mut SeededRng) -> Matrix {
    let mut data = mask.data().to_vec();
    rng.shuffle(&mut data);
    Matrix::from_vec(mask.rows(), mask.cols(), data).expect("shape preserved")
}

pub fn mask_stats(set: &MaskSet) -> MaskStats {
    let layers = set
        .layer_names()
        .into_iter()
        .zip(set.matrices())
        .map(|(name, m)| {
            let ones = m.data().iter().filter(|&&v| v == 1.0).count();
            LayerStats {
                name,
                rows: m.rows(),
                cols: m.cols(),
                ones,
                density: ones as f64 / m.len() as f64,
            }
        })
        .collect();
    MaskStats { layers }
}
