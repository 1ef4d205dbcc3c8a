use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::SeededRng;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const BOOTSTRAP_REPLICATES: usize = 2000;
/// Redraws allowed for a single-class bootstrap resample before giving up.
pub const MAX_REDRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Auc,
    Aupr,
    F1,
    Precision,
    Recall,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Accuracy,
        Metric::Auc,
        Metric::Aupr,
        Metric::F1,
        Metric::Precision,
        Metric::Recall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Auc => "auc",
            Metric::Aupr => "aupr",
            Metric::F1 => "f1",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub auc: f64,
    pub aupr: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl MetricsReport {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Auc => self.auc,
            Metric::Aupr => self.aupr,
            Metric::F1 => self.f1,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
        }
    }
}

fn check_inputs(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::dim("metric labels", scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(Error::Validation("no predictions to evaluate".into()));
    }
    if let Some(l) = labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(Error::Validation(format!("label {l} is not binary")));
    }
    Ok(())
}

fn class_counts(labels: &[f64]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == 1.0).count();
    (pos, labels.len() - pos)
}

/// Ratio with the `0/0 = 0` convention.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// All six metrics; thresholded ones predict positive when `p ≥ threshold`.
pub fn evaluate(probabilities: &[f64], labels: &[f64], threshold: f64) -> Result<MetricsReport> {
    check_inputs(probabilities, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in probabilities.iter().zip(labels) {
        match (p >= threshold, y == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricsReport {
        accuracy: ratio(tp + tn, probabilities.len()),
        auc: roc_auc(probabilities, labels)?,
        aupr: aupr(probabilities, labels)?,
        f1,
        precision,
        recall,
    })
}

/// Indices sorted by descending score; equal scores keep input order.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Area under the ROC curve by trapezoidal integration over tied-score groups.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("auc"));
    }
    let order = descending_order(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (tp0, fp0) = (tp, fp);
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        area += (fp - fp0) as f64 * (tp0 + tp) as f64 / 2.0;
    }
    Ok(area / (pos as f64 * neg as f64))
}

/// Average precision: mean of precision at the rank of each positive.
pub fn aupr(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let (pos, _) = class_counts(labels);
    if pos == 0 {
        return Err(Error::UndefinedMetric("aupr"));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in descending_order(scores).iter().enumerate() {
        if labels[i] == 1.0 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

/// Quantile `q` with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Sample standard deviation (`n − 1` denominator).
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replicates: usize,
    /// One interval per metric, in [`Metric::ALL`] order.
    pub intervals: Vec<(Metric, Interval)>,
}

impl BootstrapReport {
    pub fn get(&self, metric: Metric) -> Interval {
        self.intervals
            .iter()
            .find(|(m, _)| *m == metric)
            .map(|(_, i)| *i)
            .expect("every metric is present")
    }
}

/// `replicates` resamples with replacement; median and 2.5%/97.5% quantiles.
pub fn bootstrap_metrics(
    probabilities: &[f64],
    labels: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    bootstrap_metrics_with(probabilities, labels, replicates, seed, |rng, n| {
        (0..n).map(|_| rng.below(n)).collect()
    })
}

/// As [`bootstrap_metrics`] with a caller-supplied index resampler.
pub fn bootstrap_metrics_with(
    probabilities: &[f64],
    labels: &[f64],
    replicates: usize,
    seed: u64,
    mut resample: impl FnMut(&mut SeededRng, usize) -> Vec<usize>,
) -> Result<BootstrapReport> {
    check_inputs(probabilities, labels)?;
    if replicates == 0 {
        return Err(Error::Validation("bootstrap needs at least one replicate".into()));
    }
    let n = probabilities.len();
    let mut rng = SeededRng::new(seed);
    let mut per_metric: Vec<Vec<f64>> = vec![Vec::with_capacity(replicates); Metric::ALL.len()];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    for b in 0..replicates {
        let mut attempts = 0;
        loop {
            let idx = resample(&mut rng, n);
            if idx.len() != n {
                return Err(Error::dim("bootstrap resample", n, idx.len()));
            }
            for (k, &i) in idx.iter().enumerate() {
                p[k] = probabilities[i];
                y[k] = labels[i];
            }
            let (pos, neg) = class_counts(&y);
            if pos > 0 && neg > 0 {
                break;
            }
            attempts += 1;
            if attempts > MAX_REDRAWS {
                return Err(Error::DegenerateData(format!(
                    "bootstrap replicate {b}: {MAX_REDRAWS} redraws all single-class"
                )));
            }
        }
        let report = evaluate(&p, &y, DEFAULT_THRESHOLD)?;
        for (slot, m) in per_metric.iter_mut().zip(Metric::ALL) {
            slot.push(report.get(m));
        }
    }
    let intervals = Metric::ALL
        .iter()
        .zip(per_metric.iter_mut())
        .map(|(&m, values)| {
            values.sort_by(f64::total_cmp);
            (
                m,
                Interval {
                    median: quantile_sorted(values, 0.5),
                    lower: quantile_sorted(values, 0.025),
                    upper: quantile_sorted(values, 0.975),
                },
            )
        })
        .collect();
    Ok(BootstrapReport {
        replicates,
        intervals,
    })
}
