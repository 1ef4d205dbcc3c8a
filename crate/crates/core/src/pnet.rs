//! Pathway-masked sparse feedforward classifier.
//!
//! Layers: a gene layer mapping every gene's feature channels onto one
//! unit, `L` pathway layers following the mask stack, and a dense output
//! head of width 1 with a sigmoid. Trainable weights are stored only at
//! mask nonzeros, so masked connections never receive an update.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{glorot_bound, Activation, Matrix, SeededRng, SparseMask, Tape, Var};
use crate::error::{Error, Result};
use crate::io;
use crate::model::Model;
use crate::pathway::{MaskSet, MAX_LAYERS, MIN_LAYERS};

fn default_activation() -> Activation {
    Activation::Tanh
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PNetConfig {
    pub layers: usize,
    pub channels: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

impl PNetConfig {
    pub fn new(layers: usize, channels: usize, seed: u64) -> Self {
        Self {
            layers,
            channels,
            activation: Activation::Tanh,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_LAYERS..=MAX_LAYERS).contains(&self.layers) {
            return Err(Error::Validation(format!(
                "pnet layers {} outside [{MIN_LAYERS}, {MAX_LAYERS}]",
                self.layers
            )));
        }
        if self.channels == 0 {
            return Err(Error::Validation("pnet channels must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct SparseLayer {
    mask: Arc<SparseMask>,
    /// `1×nnz` weights at the mask nonzeros.
    values: Matrix,
    bias: Matrix,
}

impl SparseLayer {
    /// Sparse Glorot: per output unit, fan-in is its count of unmasked
    /// incoming connections; fan-out is the mean unmasked out-degree.
    fn init(mask: SparseMask, rng: &mut SeededRng) -> Result<Self> {
        let nnz = mask.count_ones();
        let fan_out = ((nnz as f64 / mask.rows().max(1) as f64).round() as usize).max(1);
        let bounds: Vec<f64> = mask
            .column_counts()
            .into_iter()
            .map(|c| if c == 0 { Ok(0.0) } else { glorot_bound(c, fan_out) })
            .collect::<Result<_>>()?;
        let values: Vec<f64> = mask
            .nonzeros()
            .iter()
            .map(|&(_, j)| {
                let b = bounds[j as usize];
                rng.uniform_range(-b, b)
            })
            .collect();
        Ok(Self {
            bias: Matrix::zeros(1, mask.cols()),
            values: Matrix::row_vector(&values),
            mask: Arc::new(mask),
        })
    }
}

/// Hidden activations of one interpretable layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerActivations {
    pub labels: Vec<String>,
    pub values: Matrix,
}

#[derive(Clone, Debug)]
pub struct PNetModel {
    config: PNetConfig,
    masks: MaskSet,
    /// Gene layer, pathway layers, output head.
    layers: Vec<SparseLayer>,
}

/// Builds the classifier with sparse Glorot weights and zero biases.
pub fn build_pnet(masks: &MaskSet, config: &PNetConfig, rng: &mut SeededRng) -> Result<PNetModel> {
    config.validate()?;
    if masks.n_layers() != config.layers {
        return Err(Error::Validation(format!(
            "mask set has {} pathway layers, config asks for {}",
            masks.n_layers(),
            config.layers
        )));
    }
    if masks.channels != config.channels {
        return Err(Error::Validation(format!(
            "mask set has {} channels, config asks for {}",
            masks.channels, config.channels
        )));
    }
    masks.validate_shapes()?;
    let top = masks.pathway_masks.last().expect("validated layer count").cols();
    let mut layers = Vec::with_capacity(config.layers + 2);
    for m in masks.matrices() {
        layers.push(SparseLayer::init(SparseMask::new(m.clone())?, rng)?);
    }
    layers.push(SparseLayer::init(SparseMask::ones(top, 1), rng)?);
    Ok(PNetModel {
        config: config.clone(),
        masks: masks.clone(),
        layers,
    })
}

impl PNetModel {
    /// Builds with an RNG seeded from `config.seed`.
    pub fn new(masks: &MaskSet, config: &PNetConfig) -> Result<Self> {
        build_pnet(masks, config, &mut SeededRng::new(config.seed))
    }

    pub fn config(&self) -> &PNetConfig {
        &self.config
    }

    pub fn masks(&self) -> &MaskSet {
        &self.masks
    }

    /// Input width, then the unit count of every layer including the head.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.masks.n_inputs())
            .chain(self.layers.iter().map(|l| l.mask.cols()))
            .collect()
    }

    /// Dense `M ⊙ W` per layer (gene, pathways, head).
    pub fn dense_weights(&self) -> Vec<Matrix> {
        self.layers
            .iter()
            .map(|l| l.mask.scatter_values(l.values.data()))
            .collect()
    }

    pub fn layer_masks(&self) -> Vec<&SparseMask> {
        self.layers.iter().map(|l| l.mask.as_ref()).collect()
    }

    pub fn biases(&self) -> Vec<&Matrix> {
        self.layers.iter().map(|l| &l.bias).collect()
    }

    /// Overwrites layer weights from dense matrices; entries off the mask are ignored.
    pub fn set_dense_weights(&mut self, weights: &[Matrix]) -> Result<()> {
        if weights.len() != self.layers.len() {
            return Err(Error::dim("set_dense_weights", self.layers.len(), weights.len()));
        }
        for (l, w) in self.layers.iter_mut().zip(weights) {
            l.mask.check_weight(w, "set_dense_weights")?;
            l.values = Matrix::row_vector(&l.mask.gather_values(w));
        }
        Ok(())
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Matrix {
        &mut self.layers[layer].bias
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.masks.n_inputs() {
            return Err(Error::dim("pnet_forward", self.masks.n_inputs(), x.cols()));
        }
        Ok(())
    }

    /// Forward on the tape, returning every layer output (hidden layers
    /// post-activation, head post-sigmoid).
    fn record(&self, tape: &mut Tape, params: &[Var], x: &Matrix) -> Result<Vec<Var>> {
        let mut h = tape.leaf(x.clone());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = tape.sparse_linear(h, params[2 * i], &layer.mask)?;
            let z = tape.add_bias(z, params[2 * i + 1])?;
            let kind = if i == last {
                Activation::Sigmoid
            } else {
                self.config.activation
            };
            h = tape.activation(z, kind);
            outputs.push(h);
        }
        Ok(outputs)
    }

    /// Mean BCE and dense gradients `∂L/∂W` per layer, computed through the
    /// dense masked product `x·(M⊙W)` rather than the sparse parameterization.
    pub fn dense_loss_and_grads(&self, x: &Matrix, y: &[f64]) -> Result<(f64, Vec<Matrix>)> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let mut h = tape.leaf(x.clone());
        let mut weight_vars = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = tape.leaf(layer.mask.scatter_values(layer.values.data()));
            let b = tape.leaf(layer.bias.clone());
            weight_vars.push(w);
            let z = tape.masked_matmul(h, w, &layer.mask)?;
            let z = tape.add_bias(z, b)?;
            let kind = if i == last {
                Activation::Sigmoid
            } else {
                self.config.activation
            };
            h = tape.activation(z, kind);
        }
        let targets: Arc<[f64]> = y.into();
        let loss = tape.bce(h, &targets)?;
        let value = tape.value(loss)[(0, 0)];
        let mut grads = tape.backward(loss)?;
        Ok((value, weight_vars.into_iter().map(|v| grads.take(v)).collect()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.masks.save(&dir.join("masks"))?;
        for (i, (w, l)) in self.dense_weights().iter().zip(&self.layers).enumerate() {
            io::write_text(&dir.join(format!("weight{i}.txt")), &io::format_values(w))?;
            io::write_text(&dir.join(format!("bias{i}.txt")), &io::format_values(&l.bias))?;
        }
        let manifest = serde_json::json!({
            "arch": "pnet",
            "config": self.config,
            "seed": self.config.seed,
            "layer_labels": self.masks.layer_labels,
            "n_layers": self.layers.len(),
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        io::write_text(&dir.join("manifest.json"), &(text + "\n"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let manifest: serde_json::Value = serde_json::from_str(&io::read_text(&path)?)
            .map_err(|e| Error::parse(&path, e.line(), e.to_string()))?;
        if manifest["arch"] != "pnet" {
            return Err(Error::Validation(format!("{} is not a pnet checkpoint", path.display())));
        }
        let config: PNetConfig = serde_json::from_value(manifest["config"].clone())
            .map_err(|e| Error::parse(&path, 0, e.to_string()))?;
        let masks = MaskSet::load(&dir.join("masks"))?;
        let mut model = PNetModel::new(&masks, &config)?;
        let n = model.layers.len();
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            weights.push(io::read_matrix(&dir.join(format!("weight{i}.txt")))?);
            let b = io::read_matrix(&dir.join(format!("bias{i}.txt")))?;
            if b.shape() != model.layers[i].bias.shape() {
                return Err(Error::dim("pnet checkpoint bias", model.layers[i].bias.cols(), b.cols()));
            }
            model.layers[i].bias = b;
        }
        model.set_dense_weights(&weights)?;
        Ok(model)
    }
}

impl Model for PNetModel {
    fn arch(&self) -> &'static str {
        "pnet"
    }

    fn n_features(&self) -> usize {
        self.masks.n_inputs()
    }

    fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.values, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.values, &mut l.bias])
            .collect()
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("values{i}"), format!("bias{i}")])
            .collect()
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], x: &Matrix) -> Result<Var> {
        self.check_input(x)?;
        Ok(*self.record(tape, params, x)?.last().expect("at least one layer"))
    }
}

/// Sigmoid output per sample.
pub fn pnet_forward(model: &PNetModel, x: &Matrix) -> Result<Vec<f64>> {
    crate::model::predict(model, x)
}

/// Post-activation values of the gene layer and every pathway layer,
/// labeled with the unit identifiers of the mask set.
pub fn pathway_activations(model: &PNetModel, x: &Matrix) -> Result<Vec<LayerActivations>> {
    model.check_input(x)?;
    let mut tape = Tape::new();
    let params: Vec<Var> = model.params().into_iter().map(|p| tape.leaf(p.clone())).collect();
    let outputs = model.record(&mut tape, &params, x)?;
    Ok(outputs
        .iter()
        .zip(&model.masks.layer_labels)
        .map(|(&v, labels)| LayerActivations {
            labels: labels.clone(),
            values: tape.value(v).clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathway::{build_masks, GeneSet, PathwayHierarchy};

    fn toy_masks() -> MaskSet {
        let h = PathwayHierarchy::new(
            vec!["g1".into(), "g2".into(), "g3".into()],
            &[
                GeneSet {
                    id: "P1".into(),
                    description: String::new(),
                    genes: vec!["g1".into(), "g2".into()],
                },
                GeneSet {
                    id: "P2".into(),
                    description: String::new(),
                    genes: vec!["g3".into()],
                },
            ],
            vec![("R".into(), "P1".into()), ("R".into(), "P2".into())],
        )
        .unwrap();
        build_masks(&h, 2, 3).unwrap()
    }

    fn toy_input(batch: usize, seed: u64) -> Matrix {
        let mut rng = SeededRng::new(seed);
        let data = (0..batch * 9).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        Matrix::from_vec(batch, 9, data).unwrap()
    }

    #[test]
    fn toy_widths() {
        let model = PNetModel::new(&toy_masks(), &PNetConfig::new(2, 3, 1)).unwrap();
        assert_eq!(model.widths(), vec![9, 3, 2, 1, 1]);
    }

    #[test]
    fn same_seed_same_weights() {
        let a = PNetModel::new(&toy_masks(), &PNetConfig::new(2, 3, 9)).unwrap();
        let b = PNetModel::new(&toy_masks(), &PNetConfig::new(2, 3, 9)).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn layer_mismatch_rejected() {
        let err = PNetModel::new(&toy_masks(), &PNetConfig::new(3, 3, 1));
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn zero_input_zero_bias_gives_half() {
        let model = PNetModel::new(&toy_masks(), &PNetConfig::new(2, 3, 4)).unwrap();
        let p = pnet_forward(&model, &Matrix::zeros(5, 9)).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn wrong_width_is_dimension_error() {
        let model = PNetModel::new(&toy_masks(), &PNetConfig::new(2, 3, 4)).unwrap();
        assert!(matches!(
            pnet_forward(&model, &Matrix::zeros(2, 8)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn masked_weights_have_no_effect() {
        let model = PNetModel::new(&toy_masks(), &PNetConfig::new(2, 3, 4)).unwrap();
        let x = toy_input(4, 2);
        let before = pnet_forward(&model, &x).unwrap();
        let mut dense = model.dense_weights();
        // (0, 1): feature g1_c0 -> gene unit g2 is masked
        assert!(!model.layer_masks()[0].is_set(0, 1));
        dense[0][(0, 1)] = 123.0;
        let mut perturbed = model.clone();
        perturbed.set_dense_weights(&dense).unwrap();
        let after = pnet_forward(&perturbed, &x).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn activations_are_labeled_and_bounded() {
        let model = PNetModel::new(&toy_masks(), &PNetConfig::new(2, 3, 4)).unwrap();
        let x = toy_input(6, 3);
        let acts = pathway_activations(&model, &x).unwrap();
        assert_eq!(acts[0].values.shape(), (6, 3));
        assert_eq!(acts[0].labels, vec!["g1", "g2", "g3"]);
        assert_eq!(acts[1].values.shape(), (6, 2));
        assert_eq!(acts[1].labels, vec!["P1", "P2"]);
        assert!(acts
            .iter()
            .all(|a| a.values.data().iter().all(|v| v.abs() < 1.0)));
        assert_eq!(acts, pathway_activations(&model, &x).unwrap());
    }

    #[test]
    fn dense_and_sparse_gradients_agree() {
        let model = PNetModel::new(&toy_masks(), &PNetConfig::new(2, 3, 4)).unwrap();
        let x = toy_input(8, 5);
        let y: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
        let (l1, sparse) = crate::model::loss_and_grads(&model, &x, &y).unwrap();
        let (l2, dense) = model.dense_loss_and_grads(&x, &y).unwrap();
        assert_eq!(l1, l2);
        for (i, (mask, dg)) in model.layer_masks().iter().zip(&dense).enumerate() {
            let gathered = mask.gather_values(dg);
            for (a, b) in gathered.iter().zip(sparse[2 * i].data()) {
                assert!((a - b).abs() < 1e-15);
            }
            assert_eq!(mask.scatter_values(&gathered), *dg);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = PNetModel::new(&toy_masks(), &PNetConfig::new(2, 3, 4)).unwrap();
        model.save(dir.path()).unwrap();
        let back = PNetModel::load(dir.path()).unwrap();
        assert_eq!(back.params(), model.params());
        assert_eq!(back.config(), model.config());
    }
}
