//! Seeded synthetic hierarchies, interaction networks and labelled cohorts.
//!
//! The class signal lives at the pathway level: a patient's label depends
//! on the fraction of altered genes inside a few driver pathways, so a
//! model wired along the true hierarchy can pool exactly the right genes.

use std::collections::BTreeSet;
use std::path::Path;

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::engine::{Matrix, SeededRng};
use crate::error::{Error, Result};
use crate::graph::{Interaction, InteractionTable};
use crate::io::write_text;
use crate::pathway::{format_gene_sets, format_relations, GeneSet, PathwayHierarchy};
use crate::train::{Cohort, SplitSpec};

pub const GENE_SETS_FILE: &str = "gene_sets.gmt";
pub const RELATIONS_FILE: &str = "relations.tsv";
pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const SPLITS_FILE: &str = "splits.csv";
pub const MANIFEST_FILE: &str = "synth-manifest.json";

const TRAIN_FRACTION: f64 = 0.8;
const PREVALENCE_TOLERANCE: f64 = 0.02;
const BISECTION_STEPS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_genes: usize,
    pub n_patients: usize,
    pub channels: usize,
    pub depth: usize,
    pub branching: usize,
    /// Number of level-1 pathways that drive the label.
    pub drivers: usize,
    /// Per-channel probability that a gene is altered in a patient.
    pub alteration_rate: f64,
    pub noise_rate: f64,
    pub prevalence: f64,
    /// Logit slope on the driver alteration fraction.
    pub signal_weight: f64,
    /// Chance that a gene joins one extra level-1 pathway.
    pub overlap_rate: f64,
    /// Chance that a pair sharing no pathway still gets an interaction row.
    pub cross_pair_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_genes: 200,
            n_patients: 1000,
            channels: 3,
            depth: 3,
            branching: 4,
            drivers: 1,
            alteration_rate: 0.1,
            noise_rate: 0.02,
            prevalence: 0.5,
            signal_weight: 80.0,
            overlap_rate: 0.05,
            cross_pair_rate: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Number of pathways directly holding genes.
    pub fn leaf_pathways(&self) -> usize {
        self.branching.pow(self.depth.saturating_sub(1) as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.depth < 3 {
            return bad(format!("hierarchy depth {} must be at least 3", self.depth));
        }
        if self.branching < 2 {
            return bad(format!("branching factor {} must be at least 2", self.branching));
        }
        if self.channels == 0 {
            return bad("at least one feature channel is required".into());
        }
        if self.n_patients < 10 {
            return bad(format!("{} patients cannot fill an 80/10/10 split", self.n_patients));
        }
        let leaves = self
            .branching
            .checked_pow(self.depth as u32 - 1)
            .filter(|&n| n <= 1 << 20)
            .ok_or_else(|| Error::Validation("hierarchy too large".into()))?;
        if self.n_genes < leaves {
            return bad(format!(
                "{} genes cannot be partitioned among {leaves} level-1 pathways",
                self.n_genes
            ));
        }
        if self.drivers == 0 || self.drivers > leaves {
            return bad(format!(
                "driver pathway count {} outside [1, {leaves}]",
                self.drivers
            ));
        }
        for (name, rate) in [
            ("alteration rate", self.alteration_rate),
            ("noise rate", self.noise_rate),
            ("overlap rate", self.overlap_rate),
            ("cross-pair rate", self.cross_pair_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} {rate} outside [0, 1]"));
            }
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return bad(format!("prevalence {} outside (0, 1)", self.prevalence));
        }
        if !self.signal_weight.is_finite() {
            return bad("signal weight must be finite".into());
        }
        Ok(())
    }
}

pub fn gene_id(i: usize) -> String {
    format!("G{:03}", i + 1)
}

pub fn patient_id(i: usize) -> String {
    format!("S{:04}", i + 1)
}

fn pathway_id(level: usize, i: usize) -> String {
    format!("PW{level}_{:02}", i + 1)
}

fn channel_names(channels: usize) -> Vec<String> {
    if channels == 3 {
        ["mut", "amp", "del"].map(String::from).to_vec()
    } else {
        (0..channels).map(|c| format!("ch{c}")).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SynthHierarchy {
    pub genes: Vec<String>,
    /// Level-1 pathways with their member genes.
    pub gene_sets: Vec<GeneSet>,
    /// `(parent, child)` edges of the balanced tree above level 1.
    pub relations: Vec<(String, String)>,
}

impl SynthHierarchy {
    pub fn to_hierarchy(&self) -> Result<PathwayHierarchy> {
        PathwayHierarchy::new(self.genes.clone(), &self.gene_sets, self.relations.clone())
    }
}

pub fn generate_hierarchy(config: &SynthConfig, rng: &mut SeededRng) -> Result<SynthHierarchy> {
    config.validate()?;
    let genes: Vec<String> = (0..config.n_genes).map(gene_id).collect();
    let leaves = config.leaf_pathways();

    let mut members: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); leaves];
    let mut order: Vec<usize> = (0..config.n_genes).collect();
    rng.shuffle(&mut order);
    for (k, &g) in order.iter().enumerate() {
        members[k % leaves].insert(g);
    }
    for g in 0..config.n_genes {
        if rng.bernoulli(config.overlap_rate) {
            let home = members.iter().position(|m| m.contains(&g)).unwrap_or(0);
            let extra = (home + 1 + rng.below(leaves - 1)) % leaves;
            members[extra].insert(g);
        }
    }
    let gene_sets = members
        .iter()
        .enumerate()
        .map(|(i, m)| GeneSet {
            id: pathway_id(1, i),
            description: "synthetic level-1 pathway".into(),
            genes: m.iter().map(|&g| genes[g].clone()).collect(),
        })
        .collect();

    let mut relations = Vec::new();
    let mut width = leaves;
    for level in 2..=config.depth {
        let parents = width / config.branching;
        for child in 0..width {
            relations.push((
                pathway_id(level, child / config.branching),
                pathway_id(level - 1, child),
            ));
        }
        width = parents;
    }
    Ok(SynthHierarchy {
        genes,
        gene_sets,
        relations,
    })
}

pub fn generate_graph(
    config: &SynthConfig,
    hierarchy: &SynthHierarchy,
    rng: &mut SeededRng,
) -> Result<InteractionTable> {
    let strong = Beta::new(5.0, 2.0).map_err(|e| Error::Generation(e.to_string()))?;
    let weak = Beta::new(2.0, 5.0).map_err(|e| Error::Generation(e.to_string()))?;
    let n = hierarchy.genes.len();
    let index: std::collections::HashMap<&str, usize> = hierarchy
        .genes
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let mut memberships: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (p, set) in hierarchy.gene_sets.iter().enumerate() {
        for g in &set.genes {
            memberships[index[g.as_str()]].push(p);
        }
    }
    let shares = |a: usize, b: usize| memberships[a].iter().any(|p| memberships[b].contains(p));

    let mut records = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let strength = if shares(a, b) {
                strong.sample(rng)
            } else if rng.bernoulli(config.cross_pair_rate) {
                weak.sample(rng)
            } else {
                continue;
            };
            records.push(Interaction {
                gene_a: hierarchy.genes[a].clone(),
                gene_b: hierarchy.genes[b].clone(),
                strength,
            });
        }
    }
    Ok(InteractionTable { records })
}

#[derive(Clone, Debug)]
pub struct SynthCohort {
    pub cohort: Cohort,
    pub split: SplitSpec,
    pub drivers: Vec<String>,
    /// Per patient fraction of altered genes across the driver pathways.
    pub driver_fraction: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn generate_cohort(
    config: &SynthConfig,
    hierarchy: &SynthHierarchy,
    rng: &mut SeededRng,
) -> Result<SynthCohort> {
    config.validate()?;
    let n_genes = hierarchy.genes.len();
    let channels = config.channels;
    let leaves = hierarchy.gene_sets.len();

    let mut picks: Vec<usize> = (0..leaves).collect();
    rng.shuffle(&mut picks);
    let mut picks = picks[..config.drivers].to_vec();
    picks.sort_unstable();
    let drivers: Vec<String> = picks.iter().map(|&p| hierarchy.gene_sets[p].id.clone()).collect();
    let driver_genes: BTreeSet<usize> = picks
        .iter()
        .flat_map(|&p| &hierarchy.gene_sets[p].genes)
        .map(|g| hierarchy.genes.iter().position(|x| x == g).expect("member of universe"))
        .collect();

    let mut features = Matrix::zeros(config.n_patients, n_genes * channels);
    let mut driver_fraction = Vec::with_capacity(config.n_patients);
    for i in 0..config.n_patients {
        let row = features.row_mut(i);
        for v in row.iter_mut() {
            if rng.bernoulli(config.alteration_rate) {
                *v = 1.0;
            }
        }
        let altered = driver_genes
            .iter()
            .filter(|&&g| row[g * channels..(g + 1) * channels].iter().any(|&v| v > 0.0))
            .count();
        driver_fraction.push(altered as f64 / driver_genes.len() as f64);
    }

    // Fixed uniforms make the label a monotone step function of the bias.
    let draws: Vec<(f64, bool)> = (0..config.n_patients)
        .map(|_| (rng.uniform(), rng.bernoulli(config.noise_rate)))
        .collect();
    let labels_for = |bias: f64| -> Vec<u8> {
        driver_fraction
            .iter()
            .zip(&draws)
            .map(|(&f, &(u, flip))| ((u < sigmoid(config.signal_weight * f + bias)) ^ flip) as u8)
            .collect()
    };
    let prevalence = |labels: &[u8]| {
        labels.iter().map(|&l| l as f64).sum::<f64>() / labels.len() as f64
    };
    // The driver fraction lies in [0, 1], so this range covers every prevalence.
    let bound = config.signal_weight.abs() + 50.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if prevalence(&labels_for(mid)) < config.prevalence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bias = [lo, hi]
        .into_iter()
        .min_by(|a, b| {
            let da = (prevalence(&labels_for(*a)) - config.prevalence).abs();
            let db = (prevalence(&labels_for(*b)) - config.prevalence).abs();
            da.total_cmp(&db)
        })
        .expect("two candidates");
    let labels = labels_for(bias);
    let achieved = prevalence(&labels);
    if (achieved - config.prevalence).abs() > PREVALENCE_TOLERANCE {
        return Err(Error::Generation(format!(
            "bias bisection reached prevalence {achieved:.4}, target {}",
            config.prevalence
        )));
    }

    let ids: Vec<String> = (0..config.n_patients).map(patient_id).collect();
    let cohort = Cohort::new(
        ids.clone(),
        features,
        labels,
        hierarchy.genes.clone(),
        channel_names(channels),
    )?;
    let split = SplitSpec::random(&ids, TRAIN_FRACTION, &mut rng.derive(1))?;
    Ok(SynthCohort {
        cohort,
        split,
        drivers,
        driver_fraction,
        bias,
    })
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub hierarchy: SynthHierarchy,
    pub interactions: InteractionTable,
    pub cohort: SynthCohort,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a SynthConfig,
    seed: u64,
    drivers: &'a [String],
    bias: f64,
    prevalence: f64,
    interactions: usize,
}

/// Generates everything from `config` alone; each stage draws from its own
/// stream so changing one stage's size leaves the others untouched.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let root = SeededRng::new(config.seed);
    let hierarchy = generate_hierarchy(config, &mut root.derive(1))?;
    let interactions = generate_graph(config, &hierarchy, &mut root.derive(2))?;
    let cohort = generate_cohort(config, &hierarchy, &mut root.derive(3))?;
    Ok(SynthDataset {
        config: config.clone(),
        hierarchy,
        interactions,
        cohort,
    })
}

impl SynthDataset {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(GENE_SETS_FILE), &format_gene_sets(&self.hierarchy.gene_sets))?;
        write_text(&dir.join(RELATIONS_FILE), &format_relations(&self.hierarchy.relations))?;
        write_text(&dir.join(INTERACTIONS_FILE), &self.interactions.to_text())?;
        self.cohort.cohort.save(dir)?;
        self.cohort.split.save(&dir.join(SPLITS_FILE))?;
        let labels = &self.cohort.cohort.labels;
        let manifest = Manifest {
            config: &self.config,
            seed: self.config.seed,
            drivers: &self.cohort.drivers,
            bias: self.cohort.bias,
            prevalence: labels.iter().map(|&l| l as f64).sum::<f64>() / labels.len() as f64,
            interactions: self.interactions.records.len(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Validation(format!("manifest serialization: {e}")))?;
        write_text(&dir.join(MANIFEST_FILE), &(text + "\n"))
    }
}
