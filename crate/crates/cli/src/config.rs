//! The pipeline configuration document (TOML).

use std::path::{Path, PathBuf};

use onconet::engine::Activation;
use onconet::gnn::{GatConfig, GcnConfig, GnnArch, GnnConfig, MetaConfig};
use onconet::graph::GraphConfig;
use onconet::pathway::{MAX_LAYERS, MIN_LAYERS};
use onconet::search::{HyperSpace, DEFAULT_DRAWS};
use onconet::synth::{self, SynthConfig};
use onconet::train::{TrainConfig, PNET_LEARNING_RATE};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Dataset file locations. Unset files default to the synthetic-data
/// names inside `dir`; relative paths resolve against the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub dir: PathBuf,
    pub gene_sets: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    pub interactions: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub splits: Option<PathBuf>,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            gene_sets: None,
            relations: None,
            interactions: None,
            features: None,
            labels: None,
            splits: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedPaths {
    pub gene_sets: PathBuf,
    pub relations: PathBuf,
    pub interactions: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub splits: PathBuf,
}

impl DataPaths {
    pub fn resolve(&self, base: &Path) -> ResolvedPaths {
        let dir = base.join(&self.dir);
        let pick = |set: &Option<PathBuf>, name: &str| match set {
            Some(p) => base.join(p),
            None => dir.join(name),
        };
        ResolvedPaths {
            gene_sets: pick(&self.gene_sets, synth::GENE_SETS_FILE),
            relations: pick(&self.relations, synth::RELATIONS_FILE),
            interactions: pick(&self.interactions, synth::INTERACTIONS_FILE),
            features: pick(&self.features, synth::FEATURES_FILE),
            labels: pick(&self.labels, synth::LABELS_FILE),
            splits: pick(&self.splits, synth::SPLITS_FILE),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PnetSection {
    pub layers: usize,
    pub activation: Activation,
    pub learning_rate: f64,
}

impl Default for PnetSection {
    fn default() -> Self {
        Self {
            layers: 3,
            activation: Activation::Tanh,
            learning_rate: PNET_LEARNING_RATE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub seeds: usize,
    /// Base seed; run `i` uses `seed + i`.
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            batch_size: 10,
            epochs: 100,
            seeds: 10,
            seed: 0,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, learning_rate: f64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnSection {
    pub gcn: GcnConfig,
    pub gat: GatConfig,
    pub meta: MetaConfig,
}

impl Default for GnnSection {
    fn default() -> Self {
        Self {
            gcn: GcnConfig {
                steps: 2,
                hidden: 32,
                head: 32,
                learning_rate: 1e-3,
            },
            gat: GatConfig {
                steps: 2,
                hidden: 32,
                head: 32,
                heads: 2,
                learning_rate: 1e-3,
            },
            meta: MetaConfig {
                steps: 2,
                hidden: 32,
                learning_rate: 1e-3,
            },
        }
    }
}

impl GnnSection {
    pub fn config(&self, arch: GnnArch) -> GnnConfig {
        match arch {
            GnnArch::Gcn => GnnConfig::Gcn(self.gcn),
            GnnArch::Gat => GnnConfig::Gat(self.gat),
            GnnArch::Meta => GnnConfig::Meta(self.meta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub draws: usize,
    pub seed: u64,
    pub space: HyperSpace,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            draws: DEFAULT_DRAWS,
            seed: 0,
            space: HyperSpace::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreementSection {
    pub delta: f64,
    pub alpha: f64,
}

impl Default for AgreementSection {
    fn default() -> Self {
        Self {
            delta: onconet::agreement::DEFAULT_DELTA,
            alpha: onconet::agreement::DEFAULT_ALPHA,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataPaths,
    pub synth: SynthConfig,
    pub pnet: PnetSection,
    pub train: TrainSection,
    pub graph: GraphConfig,
    pub gnn: GnnSection,
    pub search: SearchSection,
    pub agreement: AgreementSection,
}

impl PipelineConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", origin.display())))
    }

    /// Checks every section against the invariants of the module it feeds.
    pub fn validate(&self) -> Result<(), CliError> {
        self.synth.validate()?;
        if !(MIN_LAYERS..=MAX_LAYERS).contains(&self.pnet.layers) {
            return Err(CliError::Usage(format!(
                "pnet.layers {} outside [{MIN_LAYERS}, {MAX_LAYERS}]",
                self.pnet.layers
            )));
        }
        self.train.train_config(self.pnet.learning_rate).validate()?;
        if self.train.seeds == 0 {
            return Err(CliError::Usage("train.seeds must be at least 1".into()));
        }
        self.graph.validate()?;
        for arch in GnnArch::ALL {
            self.gnn.config(arch).validate()?;
        }
        self.search.space.validate()?;
        if self.search.draws == 0 {
            return Err(CliError::Usage("search.draws must be at least 1".into()));
        }
        let a = &self.agreement;
        if !(0.0..=1.0).contains(&a.delta) || !(a.alpha > 0.0 && a.alpha < 1.0) {
            return Err(CliError::Usage(format!(
                "agreement thresholds delta {} / alpha {} out of range",
                a.delta, a.alpha
            )));
        }
        Ok(())
    }

    /// Canonical text of the effective configuration, hashed into manifests.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let c = PipelineConfig::parse("", Path::new("x.toml")).unwrap();
        assert_eq!(c, PipelineConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut c = PipelineConfig::default();
        c.train.epochs = 7;
        c.gnn.gat.heads = 3;
        let back = PipelineConfig::parse(&c.canonical(), Path::new("x.toml")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(PipelineConfig::parse("[train]\nepoch = 3\n", Path::new("x")).is_err());
        let c = PipelineConfig::parse("[pnet]\nlayers = 9\n", Path::new("x")).unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let c = PipelineConfig::parse("[synth]\nnoise_rate = 2.0\n", Path::new("x")).unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn data_paths_resolve_against_base() {
        let d = DataPaths {
            labels: Some("elsewhere/l.csv".into()),
            ..DataPaths::default()
        };
        let r = d.resolve(Path::new("/cfg"));
        assert_eq!(r.features, Path::new("/cfg/data/features.csv"));
        assert_eq!(r.labels, Path::new("/cfg/elsewhere/l.csv"));
    }
}
