use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, median, sample_std, Metric, MetricsReport, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub model: String,
    pub seed: u64,
    pub patient_id: String,
    pub probability: f64,
    pub label: u8,
}

/// Test-set predictions keyed by `(model, seed, patient)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictionStore {
    records: Vec<PredictionRecord>,
}

/// Probabilities and labels of one `(model, seed)` run, in patient order.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedPredictions {
    pub patient_ids: Vec<String>,
    pub probabilities: Vec<f64>,
    pub labels: Vec<f64>,
}

impl PredictionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<PredictionRecord>) -> Result<Self> {
        let mut s = Self { records };
        s.validate()?;
        s.sort();
        Ok(s)
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !(r.probability > 0.0 && r.probability < 1.0) {
                return Err(Error::Validation(format!(
                    "probability {} for {}/{}/{} outside (0, 1)",
                    r.probability, r.model, r.seed, r.patient_id
                )));
            }
            if r.label > 1 {
                return Err(Error::Validation(format!("label {} is not binary", r.label)));
            }
            if !seen.insert((&r.model, r.seed, &r.patient_id)) {
                return Err(Error::Validation(format!(
                    "duplicate prediction {}/{}/{}",
                    r.model, r.seed, r.patient_id
                )));
            }
        }
        Ok(())
    }

    fn sort(&mut self) {
        self.records.sort_by(|a, b| {
            (&a.model, a.seed, &a.patient_id).cmp(&(&b.model, b.seed, &b.patient_id))
        });
    }

    /// Merges several stores, re-sorting by model, seed and patient.
    pub fn merge(stores: impl IntoIterator<Item = PredictionStore>) -> Result<Self> {
        Self::from_records(stores.into_iter().flat_map(|s| s.records).collect())
    }

    pub fn models(&self) -> Vec<String> {
        let mut m: Vec<String> = self.records.iter().map(|r| r.model.clone()).collect();
        m.dedup();
        m
    }

    /// Per-seed predictions of `model`, ordered by seed.
    pub fn by_seed(&self, model: &str) -> BTreeMap<u64, SeedPredictions> {
        let mut out: BTreeMap<u64, SeedPredictions> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.model == model) {
            let e = out.entry(r.seed).or_insert_with(|| SeedPredictions {
                patient_ids: Vec::new(),
                probabilities: Vec::new(),
                labels: Vec::new(),
            });
            e.patient_ids.push(r.patient_id.clone());
            e.probabilities.push(r.probability);
            e.labels.push(r.label as f64);
        }
        out
    }

    /// Probabilities as a `seeds × patients` table for `model`, with patient
    /// ids in sorted order; fails if seeds cover different patients.
    pub fn probability_table(&self, model: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
        let seeds = self.by_seed(model);
        let mut ids: Option<Vec<String>> = None;
        let mut rows = Vec::with_capacity(seeds.len());
        for (seed, s) in seeds {
            match &ids {
                None => ids = Some(s.patient_ids.clone()),
                Some(prev) if *prev != s.patient_ids => {
                    return Err(Error::Validation(format!(
                        "model {model} seed {seed} covers a different patient set"
                    )))
                }
                _ => {}
            }
            rows.push(s.probabilities);
        }
        let ids = ids.ok_or_else(|| Error::Lookup(format!("no predictions for model `{model}`")))?;
        Ok((ids, rows))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let wrap = |e: csv::Error| Error::parse(path, 0, e.to_string());
        w.write_record(["model", "seed", "patient_id", "probability", "label"])
            .map_err(wrap)?;
        for r in &self.records {
            w.write_record([
                r.model.as_str(),
                &r.seed.to_string(),
                &r.patient_id,
                &format!("{:.16e}", r.probability),
                &r.label.to_string(),
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let mut records = Vec::new();
        for (i, rec) in r.deserialize().enumerate() {
            let rec: PredictionRecord = rec.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
            records.push(rec);
        }
        Self::from_records(records)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub model: String,
    pub n_seeds: usize,
    /// In [`Metric::ALL`] order.
    pub metrics: Vec<(Metric, Spread)>,
}

impl SeedSummary {
    pub fn get(&self, metric: Metric) -> Spread {
        self.metrics
            .iter()
            .find(|(m, _)| *m == metric)
            .map(|(_, s)| *s)
            .expect("every metric is present")
    }
}

/// Per-seed metrics of `model`.
pub fn seed_metrics(store: &PredictionStore, model: &str) -> Result<Vec<(u64, MetricsReport)>> {
    store
        .by_seed(model)
        .into_iter()
        .map(|(seed, s)| Ok((seed, evaluate(&s.probabilities, &s.labels, DEFAULT_THRESHOLD)?)))
        .collect()
}

/// Median and sample standard deviation of each metric across seeds.
pub fn aggregate_seeds(store: &PredictionStore, model: &str) -> Result<SeedSummary> {
    let per_seed = seed_metrics(store, model)?;
    if per_seed.len() < 2 {
        return Err(Error::Validation(format!(
            "model {model} has {} seed(s); aggregation needs at least 2",
            per_seed.len()
        )));
    }
    let metrics = Metric::ALL
        .iter()
        .map(|&m| {
            let values: Vec<f64> = per_seed.iter().map(|(_, r)| r.get(m)).collect();
            (
                m,
                Spread {
                    median: median(&values),
                    std: sample_std(&values),
                },
            )
        })
        .collect();
    Ok(SeedSummary {
        model: model.to_string(),
        n_seeds: per_seed.len(),
        metrics,
    })
}

/// Metrics table: one row per model, `<metric>` and `<metric>_std` columns.
pub fn write_metrics_csv(summaries: &[SeedSummary], path: &Path) -> Result<()> {
    let mut header = vec!["model".to_string(), "n_seeds".to_string()];
    for m in Metric::ALL {
        header.push(m.name().to_string());
        header.push(format!("{}_std", m.name()));
    }
    let mut text = header.join(",") + "\n";
    for s in summaries {
        let mut row = vec![s.model.clone(), s.n_seeds.to_string()];
        for m in Metric::ALL {
            let v = s.get(m);
            row.push(format!("{:.6}", v.median));
            row.push(format!("{:.6}", v.std));
        }
        text += &(row.join(",") + "\n");
    }
    crate::io::write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(model: &str, seed: u64, id: &str, p: f64, y: u8) -> PredictionRecord {
        PredictionRecord {
            model: model.into(),
            seed,
            patient_id: id.into(),
            probability: p,
            label: y,
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let p = [0.1 + 0.2, 1.0 / 3.0, 0.999_999_999_999_9, 1e-300];
        let records: Vec<_> = p
            .iter()
            .enumerate()
            .map(|(i, &v)| rec("pnet", 7, &format!("p{i}"), v, (i % 2) as u8))
            .collect();
        let s = PredictionStore::from_records(records).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.csv");
        s.write_csv(&path).unwrap();
        let back = PredictionStore::read_csv(&path).unwrap();
        for (a, b) in back.records().iter().zip(s.records()) {
            assert_eq!(a.probability.to_bits(), b.probability.to_bits());
        }
        assert_eq!(back, s);
    }

    #[test]
    fn duplicates_and_range_rejected() {
        assert!(PredictionStore::from_records(vec![rec("a", 0, "x", 0.5, 1), rec("a", 0, "x", 0.4, 1)]).is_err());
        assert!(PredictionStore::from_records(vec![rec("a", 0, "x", 1.0, 1)]).is_err());
    }

    #[test]
    fn aggregation_median_and_std() {
        // Identical seeds give zero spread.
        let mut records = Vec::new();
        for seed in 0..3 {
            records.push(rec("gcn", seed, "a", 0.9, 1));
            records.push(rec("gcn", seed, "b", 0.2, 0));
        }
        let s = PredictionStore::from_records(records).unwrap();
        let summary = aggregate_seeds(&s, "gcn").unwrap();
        for m in Metric::ALL {
            assert_eq!(summary.get(m), Spread { median: 1.0, std: 0.0 });
        }
        let one = PredictionStore::from_records(vec![rec("gcn", 0, "a", 0.9, 1), rec("gcn", 0, "b", 0.2, 0)]).unwrap();
        assert!(matches!(aggregate_seeds(&one, "gcn"), Err(Error::Validation(_))));
    }

    #[test]
    fn records_sorted_on_merge() {
        let a = PredictionStore::from_records(vec![rec("z", 1, "b", 0.5, 1)]).unwrap();
        let b = PredictionStore::from_records(vec![rec("a", 2, "a", 0.5, 0), rec("z", 0, "c", 0.5, 0)]).unwrap();
        let m = PredictionStore::merge([a, b]).unwrap();
        let keys: Vec<_> = m.records().iter().map(|r| (r.model.as_str(), r.seed)).collect();
        assert_eq!(keys, [("a", 2), ("z", 0), ("z", 1)]);
    }
}
