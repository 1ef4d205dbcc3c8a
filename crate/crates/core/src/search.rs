//! Random hyperparameter search with validation-AUPR selection.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{derive_seed, SeededRng};
use crate::error::{Error, Result};
use crate::gnn::{
    build_gnn, GatConfig, GcnConfig, GnnArch, GnnConfig, GnnModel, MetaConfig, LAYER_SIZES, MAX_HEADS, MAX_STEPS,
    MIN_STEPS,
};
use crate::graph::GeneGraph;
use crate::model;
use crate::train::{aupr, train, Cohort, SplitSpec, TrainConfig};

pub const DEFAULT_DRAWS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    pub lr_min: f64,
    pub lr_max: f64,
    pub steps_min: usize,
    pub steps_max: usize,
    pub sizes: Vec<usize>,
    pub heads_min: usize,
    pub heads_max: usize,
}

impl Default for HyperSpace {
    fn default() -> Self {
        Self {
            lr_min: 1e-5,
            lr_max: 0.1,
            steps_min: MIN_STEPS,
            steps_max: MAX_STEPS,
            sizes: LAYER_SIZES.to_vec(),
            heads_min: 1,
            heads_max: MAX_HEADS,
        }
    }
}

impl HyperSpace {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(self.lr_min > 0.0 && self.lr_min < self.lr_max && self.lr_max.is_finite()) {
            return bad(format!("learning-rate bounds [{}, {}] invalid", self.lr_min, self.lr_max));
        }
        if !(MIN_STEPS <= self.steps_min && self.steps_min <= self.steps_max && self.steps_max <= MAX_STEPS) {
            return bad(format!("steps range [{}, {}] invalid", self.steps_min, self.steps_max));
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|s| !LAYER_SIZES.contains(s)) {
            return bad(format!("sizes {:?} must be a non-empty subset of {LAYER_SIZES:?}", self.sizes));
        }
        if !(1 <= self.heads_min && self.heads_min <= self.heads_max && self.heads_max <= MAX_HEADS) {
            return bad(format!("heads range [{}, {}] invalid", self.heads_min, self.heads_max));
        }
        Ok(())
    }
}

/// Samples one configuration. RNG order: learning rate, steps, hidden
/// size, head size (GCN/GAT), attention heads (GAT).
pub fn sample_hyper(space: &HyperSpace, arch: GnnArch, rng: &mut SeededRng) -> GnnConfig {
    let learning_rate = rng.uniform_range(space.lr_min.ln(), space.lr_max.ln()).exp();
    let steps = rng.int_inclusive(space.steps_min, space.steps_max);
    let hidden = *rng.choose(&space.sizes);
    match arch {
        GnnArch::Gcn => GnnConfig::Gcn(GcnConfig {
            steps,
            hidden,
            head: *rng.choose(&space.sizes),
            learning_rate,
        }),
        GnnArch::Gat => {
            let head = *rng.choose(&space.sizes);
            GnnConfig::Gat(GatConfig {
                steps,
                hidden,
                head,
                heads: rng.int_inclusive(space.heads_min, space.heads_max),
                learning_rate,
            })
        }
        GnnArch::Meta => GnnConfig::Meta(MetaConfig {
            steps,
            hidden,
            learning_rate,
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub index: usize,
    /// Model initialization seed.
    pub seed: u64,
    pub config: GnnConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawOutcome {
    pub draw: Draw,
    /// `None` when training diverged.
    pub val_aupr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub arch: GnnArch,
    pub base_seed: u64,
    pub outcomes: Vec<DrawOutcome>,
    pub selected: usize,
}

impl SearchResult {
    pub fn selected_draw(&self) -> &Draw {
        &self.outcomes[self.selected].draw
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut text = String::from("arch,draw_index,lr,steps,hidden,head,heads,val_aupr,status\n");
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for (i, o) in self.outcomes.iter().enumerate() {
            let c = &o.draw.config;
            let (score, status) = match o.val_aupr {
                Some(a) => (format!("{a:?}"), if i == self.selected { "selected" } else { "ok" }),
                None => ("failed".to_string(), "failed"),
            };
            text += &format!(
                "{},{},{:?},{},{},{},{},{},{}\n",
                self.arch,
                o.draw.index,
                c.learning_rate(),
                c.steps(),
                c.hidden(),
                opt(c.head()),
                opt(c.heads()),
                score,
                status
            );
        }
        crate::io::write_text(path, &text)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("search result serializes");
        crate::io::write_text(path, &(text + "\n"))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = crate::io::read_text(path)?;
        let r: SearchResult =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        if select(&r.outcomes)? != r.selected {
            return Err(Error::Validation(format!(
                "{}: stored selection disagrees with the scores",
                path.display()
            )));
        }
        Ok(r)
    }
}

/// Index of the best-scoring successful outcome; ties go to the lowest index.
pub fn select(outcomes: &[DrawOutcome]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if let Some(a) = o.val_aupr {
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::Search(format!("all {} draws failed", outcomes.len())))
}

/// Draws `n` configurations from one RNG seeded by `base_seed` and scores
/// each with `score`; a [`Error::Divergence`] marks the draw as failed.
pub fn random_search_with<F>(
    space: &HyperSpace,
    arch: GnnArch,
    n: usize,
    base_seed: u64,
    score: F,
) -> Result<SearchResult>
where
    F: Fn(&Draw) -> Result<f64> + Sync,
{
    space.validate()?;
    if n == 0 {
        return Err(Error::Validation("search needs at least one draw".into()));
    }
    let mut rng = SeededRng::new(base_seed);
    let draws: Vec<Draw> = (0..n)
        .map(|index| Draw {
            index,
            seed: derive_seed(base_seed, index as u64),
            config: sample_hyper(space, arch, &mut rng),
        })
        .collect();
    let outcomes = draws
        .par_iter()
        .map(|d| match score(d) {
            Ok(a) => Ok(DrawOutcome {
                draw: *d,
                val_aupr: Some(a),
            }),
            Err(Error::Divergence(_)) => Ok(DrawOutcome {
                draw: *d,
                val_aupr: None,
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let selected = select(&outcomes)?;
    Ok(SearchResult {
        arch,
        base_seed,
        outcomes,
        selected,
    })
}

/// Trains each draw's GNN on the training split with the draw's learning
/// rate and scores it by validation AUPR.
#[allow(clippy::too_many_arguments)]
pub fn random_search(
    space: &HyperSpace,
    arch: GnnArch,
    graph: &GeneGraph,
    cohort: &Cohort,
    split: &SplitSpec,
    train_config: &TrainConfig,
    n: usize,
    base_seed: u64,
) -> Result<SearchResult> {
    if split.validation.is_empty() {
        return Err(Error::Validation("search needs a non-empty validation split".into()));
    }
    let val_rows = cohort.indices(&split.validation)?;
    let (x_val, y_val) = cohort.subset(&val_rows);
    random_search_with(space, arch, n, base_seed, |draw| {
        let m = train_draw(draw, graph, cohort, split, train_config)?;
        let p = model::predict(&m, &x_val)?;
        aupr(&p, &y_val)
    })
}

/// Builds and trains the model of one draw with the draw's learning rate
/// and seed; the search and checkpointing of its winner share this path.
pub fn train_draw(
    draw: &Draw,
    graph: &GeneGraph,
    cohort: &Cohort,
    split: &SplitSpec,
    train_config: &TrainConfig,
) -> Result<GnnModel> {
    let mut m = build_gnn(&draw.config, graph, cohort.channels(), draw.seed)?;
    let cfg = TrainConfig {
        learning_rate: draw.config.learning_rate(),
        seed: draw.seed,
        ..*train_config
    };
    train(&mut m, cohort, split, &cfg)?;
    Ok(m)
}
