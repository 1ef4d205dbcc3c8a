use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, SplitSpec};
use super::store::{PredictionRecord, PredictionStore};
use crate::engine::{adam_step, AdamConfig, AdamState, Matrix, SeededRng};
use crate::error::{Error, Result};
use crate::model::{self, Model};

/// Learning rate used for the pathway-masked network.
pub const PNET_LEARNING_RATE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            epochs: 100,
            learning_rate: PNET_LEARNING_RATE,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Validation("batch size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Validation(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Mean training loss of every epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub loss_history: Vec<f64>,
}

/// Trains on the split's training patients.
pub fn train(
    model: &mut dyn Model,
    cohort: &Cohort,
    split: &SplitSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if split.train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let rows = cohort.indices(&split.train)?;
    let (x, y) = cohort.subset(&rows);
    train_on(model, &x, &y, config)
}

/// Mini-batch Adam on unweighted BCE over `(x, y)`; batches are drawn from
/// a fresh seeded shuffle each epoch and the last batch may be smaller.
pub fn train_on(
    model: &mut dyn Model,
    x: &Matrix,
    y: &[f64],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if x.rows() != y.len() {
        return Err(Error::dim("train labels", x.rows(), y.len()));
    }
    if x.rows() == 0 {
        return Err(Error::Validation("no training samples".into()));
    }
    let adam = AdamConfig::with_lr(config.learning_rate);
    let mut states: Vec<AdamState> = model
        .params()
        .iter()
        .map(|p| AdamState::for_param(p, adam))
        .collect();
    let mut rng = SeededRng::new(config.seed).derive(1);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let xb = x.select_rows(chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let diverged = |what: String| Error::Divergence(format!("epoch {epoch}, batch {batch}: {what}"));
            let (loss, grads) = model::loss_and_grads(&*model, &xb, &yb)?;
            if !loss.is_finite() {
                return Err(diverged(format!("non-finite loss {loss}")));
            }
            for ((p, g), s) in model.params_mut().into_iter().zip(&grads).zip(&mut states) {
                adam_step(p, g, s).map_err(|e| diverged(e.to_string()))?;
            }
            total += loss * chunk.len() as f64;
        }
        history.push(total / x.rows() as f64);
    }
    Ok(TrainOutcome {
        loss_history: history,
    })
}

/// Model seed of run `index`: an offset from the base seed.
pub fn run_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// Trains one model per seed, predicts the test patients, and collects
/// the predictions under `tag`. Seeds run concurrently; the result does
/// not depend on scheduling.
pub fn multi_seed_run<F>(
    tag: &str,
    build: F,
    cohort: &Cohort,
    split: &SplitSpec,
    config: &TrainConfig,
    n_seeds: usize,
) -> Result<PredictionStore>
where
    F: Fn(u64) -> Result<Box<dyn Model>> + Sync,
{
    if n_seeds == 0 {
        return Err(Error::Validation("at least one seed is required".into()));
    }
    let test_rows = cohort.indices(&split.test)?;
    let (x_test, _) = cohort.subset(&test_rows);
    let runs: Vec<Result<PredictionStore>> = (0..n_seeds)
        .into_par_iter()
        .map(|i| {
            let seed = run_seed(config.seed, i);
            single_seed_run(tag, &build, seed, cohort, split, config, &test_rows, &x_test)
                .map_err(|e| match e {
                    Error::Divergence(msg) => Error::Divergence(format!("seed {seed}: {msg}")),
                    other => other,
                })
        })
        .collect();
    PredictionStore::merge(runs.into_iter().collect::<Result<Vec<_>>>()?)
}

#[allow(clippy::too_many_arguments)]
fn single_seed_run<F>(
    tag: &str,
    build: &F,
    seed: u64,
    cohort: &Cohort,
    split: &SplitSpec,
    config: &TrainConfig,
    test_rows: &[usize],
    x_test: &Matrix,
) -> Result<PredictionStore>
where
    F: Fn(u64) -> Result<Box<dyn Model>> + Sync,
{
    let mut model = build(seed)?;
    let cfg = TrainConfig { seed, ..*config };
    train(model.as_mut(), cohort, split, &cfg)?;
    let probs = model::predict(model.as_ref(), x_test)?;
    let records = test_rows
        .iter()
        .zip(probs)
        .map(|(&r, p)| PredictionRecord {
            model: tag.to_string(),
            seed,
            patient_id: cohort.patient_ids[r].clone(),
            probability: p,
            label: cohort.labels[r],
        })
        .collect();
    PredictionStore::from_records(records)
}
