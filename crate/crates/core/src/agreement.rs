//! Per-patient agreement between architectures: correlation of seed-median
//! predictions, two-sample Kolmogorov–Smirnov tests across seed
//! distributions, Benjamini–Hochberg adjustment and divergence flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::Matrix;
use crate::error::{Error, Result};
use crate::train::{median, PredictionStore};

pub const DEFAULT_DELTA: f64 = 0.10;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim("pearson", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("{} points", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-patient median probability over seeds, with patient ids sorted.
pub fn patient_medians(store: &PredictionStore, model: &str) -> Result<(Vec<String>, Vec<f64>)> {
    let (ids, table) = store.probability_table(model)?;
    let medians = (0..ids.len())
        .map(|j| median(&table.iter().map(|row| row[j]).collect::<Vec<_>>()))
        .collect();
    Ok((ids, medians))
}

fn check_same_patients(a: (&str, &[String]), b: (&str, &[String])) -> Result<()> {
    if a.1 == b.1 {
        return Ok(());
    }
    let only = |x: &[String], y: &[String]| -> Vec<String> {
        x.iter().filter(|p| !y.contains(p)).cloned().collect()
    };
    Err(Error::Validation(format!(
        "models {} and {} cover different patients: only in {}: {:?}; only in {}: {:?}",
        a.0,
        b.0,
        a.0,
        only(a.1, b.1),
        b.0,
        only(b.1, a.1)
    )))
}

/// Pearson correlation of per-patient seed medians for every model pair.
pub fn correlation_matrix(store: &PredictionStore, models: &[String]) -> Result<Matrix> {
    let medians: Vec<(Vec<String>, Vec<f64>)> = models
        .iter()
        .map(|m| patient_medians(store, m))
        .collect::<Result<_>>()?;
    let k = models.len();
    let mut out = Matrix::identity(k);
    for i in 0..k {
        for j in i + 1..k {
            check_same_patients((&models[i], &medians[i].0), (&models[j], &medians[j].0))?;
            let r = pearson(&medians[i].1, &medians[j].1)?;
            out[(i, j)] = r;
            out[(j, i)] = r;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Validation(format!(
            "K-S test needs at least 2 values per sample (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let d = ks_statistic(a, b);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, a.len(), b.len()),
    })
}

/// `sup |F_a − F_b|` by a merge sweep over the sorted samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic Kolmogorov tail `2 Σ (−1)^{k−1} exp(−2k²λ²)` with
/// `λ = (√nₑ + 0.12 + 0.11/√nₑ)·D`. Returns 1 when the series has not
/// converged within 100 terms (small `λ`).
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda == 0.0 {
        return 1.0;
    }
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 2.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = sign * (a2 * k * k).exp();
        sum += term;
        if term.abs() < 1e-10 {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    1.0
}

/// Benjamini–Hochberg step-up adjustment, returned in input order.
pub fn bh_fdr(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Validation(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        let q = p_values[i] * m as f64 / (rank + 1) as f64;
        running = running.min(q);
        // q ≥ p holds exactly; the max only undoes rounding in p·m/m.
        adjusted[i] = running.min(1.0).max(p_values[i]);
    }
    Ok(adjusted)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientAgreement {
    pub patient_id: String,
    pub statistic: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub median_a: f64,
    pub median_b: f64,
    pub divergent: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceReport {
    pub model_a: String,
    pub model_b: String,
    pub delta: f64,
    pub alpha: f64,
    /// Sorted by patient id.
    pub patients: Vec<PatientAgreement>,
}

impl DivergenceReport {
    pub fn divergent(&self) -> Vec<&str> {
        self.patients
            .iter()
            .filter(|p| p.divergent)
            .map(|p| p.patient_id.as_str())
            .collect()
    }

    pub fn divergent_count(&self) -> usize {
        self.patients.iter().filter(|p| p.divergent).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = format!(
            "patient_id,ks_d,p_value,p_adjusted,median_{},median_{},divergent\n",
            self.model_a, self.model_b
        );
        for p in &self.patients {
            text += &format!(
                "{},{:?},{:?},{:?},{:?},{:?},{}\n",
                p.patient_id, p.statistic, p.p_value, p.p_adjusted, p.median_a, p.median_b, p.divergent
            );
        }
        crate::io::write_text(path, &text)
    }
}

/// Per-patient K-S test between the seed distributions of two models,
/// BH-adjusted across patients. A patient is flagged when the adjusted
/// p-value is below `alpha` and the seed medians differ by at least `delta`.
pub fn flag_divergent_patients(
    store: &PredictionStore,
    model_a: &str,
    model_b: &str,
    delta: f64,
    alpha: f64,
) -> Result<DivergenceReport> {
    let (ids_a, table_a) = store.probability_table(model_a)?;
    let (ids_b, table_b) = store.probability_table(model_b)?;
    check_same_patients((model_a, &ids_a), (model_b, &ids_b))?;
    if table_a.len() != table_b.len() {
        return Err(Error::Validation(format!(
            "{model_a} has {} seeds but {model_b} has {}",
            table_a.len(),
            table_b.len()
        )));
    }
    let column = |t: &[Vec<f64>], j: usize| t.iter().map(|row| row[j]).collect::<Vec<f64>>();
    let mut tests = Vec::with_capacity(ids_a.len());
    for j in 0..ids_a.len() {
        let (a, b) = (column(&table_a, j), column(&table_b, j));
        tests.push((ks_two_sample(&a, &b)?, median(&a), median(&b)));
    }
    let raw: Vec<f64> = tests.iter().map(|t| t.0.p_value).collect();
    let adjusted = bh_fdr(&raw)?;
    let patients = ids_a
        .into_iter()
        .zip(tests)
        .zip(adjusted)
        .map(|((patient_id, (ks, ma, mb)), q)| PatientAgreement {
            patient_id,
            statistic: ks.statistic,
            p_value: ks.p_value,
            p_adjusted: q,
            median_a: ma,
            median_b: mb,
            divergent: q < alpha && (ma - mb).abs() >= delta,
        })
        .collect();
    Ok(DivergenceReport {
        model_a: model_a.into(),
        model_b: model_b.into(),
        delta,
        alpha,
        patients,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientSeedDistribution {
    pub patient_id: String,
    pub model: String,
    pub seeds: Vec<u64>,
    pub probabilities: Vec<f64>,
}

/// One patient's predicted probabilities across seeds, in seed order.
pub fn patient_distribution(store: &PredictionStore, model: &str, patient: &str) -> Result<PatientSeedDistribution> {
    let mut seeds = Vec::new();
    let mut probabilities = Vec::new();
    for r in store.records().iter().filter(|r| r.model == model && r.patient_id == patient) {
        seeds.push(r.seed);
        probabilities.push(r.probability);
    }
    if seeds.is_empty() {
        return Err(Error::Lookup(format!("no predictions for model `{model}`, patient `{patient}`")));
    }
    Ok(PatientSeedDistribution {
        patient_id: patient.into(),
        model: model.into(),
        seeds,
        probabilities,
    })
}

/// Writes a `models×models` correlation CSV with model tags as header and row labels.
pub fn write_correlation_csv(models: &[String], pcc: &Matrix, path: &Path) -> Result<()> {
    let mut text = format!("model,{}\n", models.join(","));
    for (i, m) in models.iter().enumerate() {
        let row: Vec<String> = pcc.row(i).iter().map(|v| format!("{v:?}")).collect();
        text += &format!("{m},{}\n", row.join(","));
    }
    crate::io::write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::PredictionRecord;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        // cov = 3/2, var_x = 1, var_y = 7/3 (sample): r = 1.5 / √(7/3).
        assert!((r - 1.5 / (7.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r - 0.981981).abs() < 1e-6);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn ks_examples() {
        let same = ks_two_sample(&[0.1, 0.5, 0.3], &[0.3, 0.1, 0.5]).unwrap();
        assert_eq!((same.statistic, same.p_value), (0.0, 1.0));
        assert_eq!(ks_two_sample(&[0.0; 3], &[1.0; 3]).unwrap().statistic, 1.0);
        let d = ks_two_sample(&[0.1, 0.2, 0.3], &[0.15, 0.25, 0.35]).unwrap().statistic;
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
        assert!(ks_two_sample(&[0.1], &[0.2, 0.3]).is_err());
    }

    #[test]
    fn ks_p_value_reference() {
        // Disjoint 30-seed samples: D = 1, nₑ = 15.
        let p = ks_p_value(1.0, 30, 30);
        let lambda = 15f64.sqrt() + 0.12 + 0.11 / 15f64.sqrt();
        let first = 2.0 * (-2.0 * lambda * lambda).exp();
        assert!((p - first).abs() < 1e-12 * first.max(1e-300));
        assert!(p < 1e-12);
        assert!((ks_p_value(0.01, 30, 30) - 1.0).abs() < 1e-9);
        // λ ≈ 0.004: the series has not converged after 100 terms.
        assert_eq!(ks_p_value(0.001, 30, 30), 1.0);
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_fdr(&[0.3]).unwrap(), vec![0.3]);
        let q = bh_fdr(&[0.01, 0.02, 0.03, 0.04]).unwrap();
        for v in q {
            assert!((v - 0.04).abs() < 1e-15);
        }
        assert!(bh_fdr(&[1.2]).is_err());
        let p = [0.04, 0.001, 0.5, 0.03];
        let q = bh_fdr(&p).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!(b >= a);
        }
    }

    fn store(models: &[(&str, &dyn Fn(u64, usize) -> f64)], seeds: u64, patients: usize) -> PredictionStore {
        let mut records = Vec::new();
        for (tag, f) in models {
            for s in 0..seeds {
                for p in 0..patients {
                    records.push(PredictionRecord {
                        model: tag.to_string(),
                        seed: s,
                        patient_id: format!("p{p:02}"),
                        probability: f(s, p),
                        label: (p % 2) as u8,
                    });
                }
            }
        }
        PredictionStore::from_records(records).unwrap()
    }

    #[test]
    fn point_mass_fixture_flags_one_patient() {
        let base = |s: u64, p: usize| 0.3 + 0.01 * ((s as usize * 7 + p * 3) % 11) as f64;
        let shifted = move |s: u64, p: usize| if p == 7 { 0.8 } else { base(s, p) };
        let a = move |s: u64, p: usize| if p == 7 { 0.2 } else { base(s, p) };
        let st = store(&[("a", &a), ("b", &shifted)], 30, 12);
        let r = flag_divergent_patients(&st, "a", "b", DEFAULT_DELTA, DEFAULT_ALPHA).unwrap();
        assert_eq!(r.divergent(), vec!["p07"]);
        let swapped = flag_divergent_patients(&st, "b", "a", DEFAULT_DELTA, DEFAULT_ALPHA).unwrap();
        assert_eq!(swapped.divergent(), vec!["p07"]);

        let copy = store(&[("a", &base), ("b", &base)], 30, 12);
        let none = flag_divergent_patients(&copy, "a", "b", DEFAULT_DELTA, DEFAULT_ALPHA).unwrap();
        assert_eq!(none.divergent_count(), 0);
    }

    #[test]
    fn correlation_matrix_properties() {
        let f = |s: u64, p: usize| 0.1 + 0.05 * p as f64 + 0.001 * s as f64;
        let g = |s: u64, p: usize| 0.9 - 0.03 * ((p * p) % 7) as f64 + 0.002 * s as f64;
        let st = store(&[("a", &f), ("b", &f), ("c", &g)], 5, 10);
        let models: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let m = correlation_matrix(&st, &models).unwrap();
        assert_eq!(m, m.transpose());
        for i in 0..3 {
            assert_eq!(m[(i, i)], 1.0);
        }
        assert!((m[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distribution_in_seed_order() {
        let f = |s: u64, p: usize| 0.1 + 0.02 * s as f64 + 0.001 * p as f64;
        let st = store(&[("a", &f)], 30, 3);
        let d = patient_distribution(&st, "a", "p01").unwrap();
        assert_eq!(d.probabilities.len(), 30);
        assert_eq!(d.seeds, (0..30).collect::<Vec<_>>());
        assert!(patient_distribution(&st, "a", "zz").is_err());
    }
}
