use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::engine::{Matrix, SeededRng};
use crate::error::{Error, Result};

/// Patients with gene-major multi-channel features and binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub patient_ids: Vec<String>,
    /// `n_patients × (n_genes·channels)`; column `g·channels + c`.
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub gene_universe: Vec<String>,
    pub channel_names: Vec<String>,
}

impl Cohort {
    pub fn new(
        patient_ids: Vec<String>,
        features: Matrix,
        labels: Vec<u8>,
        gene_universe: Vec<String>,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        let c = Self {
            patient_ids,
            features,
            labels,
            gene_universe,
            channel_names,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.patient_ids.len();
        if self.features.rows() != n || self.labels.len() != n {
            return Err(Error::Validation(format!(
                "cohort has {n} ids, {} feature rows and {} labels",
                self.features.rows(),
                self.labels.len()
            )));
        }
        if self.features.cols() != self.gene_universe.len() * self.channels() {
            return Err(Error::dim(
                "cohort features",
                self.gene_universe.len() * self.channels(),
                self.features.cols(),
            ));
        }
        if !self.features.is_finite() {
            return Err(Error::Validation("cohort features contain non-finite values".into()));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l > 1) {
            return Err(Error::Validation(format!("label {l} is not binary")));
        }
        if let Some(c) = self.channel_names.iter().find(|c| c.is_empty() || c.contains('_')) {
            return Err(Error::Validation(format!(
                "channel name `{c}` must be non-empty and free of `_`"
            )));
        }
        let unique: HashSet<&String> = self.patient_ids.iter().collect();
        if unique.len() != n {
            return Err(Error::Validation("duplicate patient ids".into()));
        }
        Ok(())
    }

    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }

    /// Row indices of `ids`, failing on unknown ids.
    pub fn indices(&self, ids: &[String]) -> Result<Vec<usize>> {
        let index: HashMap<&str, usize> = self
            .patient_ids
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Lookup(format!("patient `{id}` not in cohort")))
            })
            .collect()
    }

    /// Features and float labels of the given rows.
    pub fn subset(&self, rows: &[usize]) -> (Matrix, Vec<f64>) {
        (
            self.features.select_rows(rows),
            rows.iter().map(|&r| self.labels[r] as f64).collect(),
        )
    }

    /// Writes `features.csv` and `labels.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("features.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        let mut header = vec!["patient_id".to_string()];
        for g in &self.gene_universe {
            for c in &self.channel_names {
                header.push(format!("{g}_{c}"));
            }
        }
        w.write_record(&header).map_err(|e| csv_error(&path, e))?;
        for (i, id) in self.patient_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(self.features.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&row).map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("labels.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(["patient_id", "label"]).map_err(|e| csv_error(&path, e))?;
        for (id, l) in self.patient_ids.iter().zip(&self.labels) {
            w.write_record([id.as_str(), &l.to_string()])
                .map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    /// Reads a features CSV and a labels CSV; feature columns must be
    /// `<gene>_<channel>` in gene-major order with the same channels per gene.
    pub fn load(features: &Path, labels: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(features).map_err(|e| csv_error(features, e))?;
        let header = r.headers().map_err(|e| csv_error(features, e))?.clone();
        if header.get(0) != Some("patient_id") || header.len() < 2 {
            return Err(Error::parse(features, 1, "header must start with patient_id"));
        }
        let (gene_universe, channel_names) = parse_feature_header(&header, features)?;
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(features, e))?;
            let line = i + 2;
            if rec.len() != header.len() {
                return Err(Error::parse(features, line, "column count differs from header"));
            }
            ids.push(rec[0].to_string());
            for v in rec.iter().skip(1) {
                let x: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(features, line, format!("bad number `{v}`")))?;
                data.push(x);
            }
        }
        let cols = header.len() - 1;
        let matrix = Matrix::from_vec(ids.len(), cols, data)?;

        let label_map = read_id_column(labels, "label")?;
        let mut lab = Vec::with_capacity(ids.len());
        for id in &ids {
            let v = label_map
                .get(id)
                .ok_or_else(|| Error::Lookup(format!("no label for patient `{id}`")))?;
            lab.push(match v.as_str() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Validation(format!(
                        "label `{other}` for `{id}` is not 0 or 1"
                    )))
                }
            });
        }
        Cohort::new(ids, matrix, lab, gene_universe, channel_names)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(path, line, e.to_string())
}

fn parse_feature_header(header: &csv::StringRecord, path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let mut genes: Vec<String> = Vec::new();
    let mut channels: Vec<String> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for col in header.iter().skip(1) {
        let (gene, channel) = col
            .rsplit_once('_')
            .ok_or_else(|| Error::parse(path, 1, format!("column `{col}` is not <gene>_<channel>")))?;
        if genes.last().map(String::as_str) != Some(gene) {
            if !genes.is_empty() {
                close_gene(&mut channels, &mut current, genes.last().unwrap(), path)?;
            }
            if genes.iter().any(|g| g == gene) {
                return Err(Error::parse(path, 1, format!("columns of gene `{gene}` are not contiguous")));
            }
            genes.push(gene.to_string());
        }
        current.push(channel.to_string());
    }
    close_gene(&mut channels, &mut current, genes.last().unwrap(), path)?;
    Ok((genes, channels))
}

fn close_gene(channels: &mut Vec<String>, current: &mut Vec<String>, gene: &str, path: &Path) -> Result<()> {
    if channels.is_empty() {
        *channels = std::mem::take(current);
    } else if *channels != *current {
        return Err(Error::parse(
            path,
            1,
            format!("gene `{gene}` has channels {current:?}, expected {channels:?}"),
        ));
    } else {
        current.clear();
    }
    Ok(())
}

/// Reads a two-column `patient_id,<column>` CSV into a map.
fn read_id_column(path: &Path, column: &str) -> Result<HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() != 2 || &header[0] != "patient_id" || &header[1] != column {
        return Err(Error::parse(path, 1, format!("expected header `patient_id,{column}`")));
    }
    let mut map = HashMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if map.insert(rec[0].to_string(), rec[1].trim().to_string()).is_some() {
            return Err(Error::parse(path, i + 2, format!("duplicate patient `{}`", &rec[0])));
        }
    }
    Ok(map)
}

/// Patient ids assigned to training, validation and test.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl SplitSpec {
    /// Shuffles `ids`, takes `round(train_fraction·n)` for training and
    /// halves the rest into validation and test (test gets any odd one).
    pub fn random(ids: &[String], train_fraction: f64, rng: &mut SeededRng) -> Result<Self> {
        if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
            return Err(Error::Validation(format!(
                "train fraction {train_fraction} outside (0, 1)"
            )));
        }
        let mut order = ids.to_vec();
        rng.shuffle(&mut order);
        let n_train = ((ids.len() as f64) * train_fraction).round() as usize;
        let n_val = (ids.len() - n_train) / 2;
        let test = order.split_off(n_train + n_val);
        let validation = order.split_off(n_train);
        let s = Self {
            train: order,
            validation,
            test,
        };
        s.validate(ids)?;
        Ok(s)
    }

    pub fn validate(&self, cohort_ids: &[String]) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Validation("training split is empty".into()));
        }
        let known: HashSet<&String> = cohort_ids.iter().collect();
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.validation).chain(&self.test) {
            if !known.contains(id) {
                return Err(Error::Lookup(format!("split patient `{id}` not in cohort")));
            }
            if !seen.insert(id) {
                return Err(Error::Validation(format!("patient `{id}` appears in two splits")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["patient_id", "split"]).map_err(|e| csv_error(path, e))?;
        for (name, ids) in [("train", &self.train), ("validation", &self.validation), ("test", &self.test)] {
            for id in ids {
                w.write_record([id.as_str(), name]).map_err(|e| csv_error(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
        if header.len() != 2 || &header[0] != "patient_id" || &header[1] != "split" {
            return Err(Error::parse(path, 1, "expected header `patient_id,split`"));
        }
        let mut s = SplitSpec::default();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let id = rec[0].to_string();
            match rec[1].trim() {
                "train" => s.train.push(id),
                "validation" => s.validation.push(id),
                "test" => s.test.push(id),
                other => {
                    return Err(Error::parse(path, i + 2, format!("unknown split `{other}`")));
                }
            }
        }
        Ok(s)
    }
}
