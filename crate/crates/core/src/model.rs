//! Common interface of every trainable classifier.

use std::sync::Arc;

use crate::engine::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// A binary classifier over cohort feature rows, differentiable through a [`Tape`].
pub trait Model: Send + Sync {
    /// Architecture tag (`pnet`, `gcn`, `gat`, `meta`).
    fn arch(&self) -> &'static str;

    /// Width of the cohort feature rows the model consumes.
    fn n_features(&self) -> usize;

    fn params(&self) -> Vec<&Matrix>;

    fn params_mut(&mut self) -> Vec<&mut Matrix>;

    /// Stable names of the parameters, aligned with [`Model::params`].
    fn param_names(&self) -> Vec<String>;

    /// Records the forward pass for a batch of feature rows and returns the
    /// `batch×1` probability column. `params` are the tape leaves holding
    /// [`Model::params`], in order.
    fn forward(&self, tape: &mut Tape, params: &[Var], x: &Matrix) -> Result<Var>;

    fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

fn check_features(model: &dyn Model, x: &Matrix) -> Result<()> {
    if x.cols() != model.n_features() {
        return Err(Error::dim(model.arch(), model.n_features(), x.cols()));
    }
    Ok(())
}

fn record_params(model: &dyn Model, tape: &mut Tape) -> Vec<Var> {
    model.params().into_iter().map(|p| tape.leaf(p.clone())).collect()
}

/// Probabilities for each row of `x`.
pub fn predict(model: &dyn Model, x: &Matrix) -> Result<Vec<f64>> {
    check_features(model, x)?;
    let mut tape = Tape::new();
    let params = record_params(model, &mut tape);
    let out = model.forward(&mut tape, &params, x)?;
    Ok(tape.value(out).data().to_vec())
}

/// Mean BCE on `(x, y)` and its gradient for every parameter.
pub fn loss_and_grads(model: &dyn Model, x: &Matrix, y: &[f64]) -> Result<(f64, Vec<Matrix>)> {
    check_features(model, x)?;
    let mut tape = Tape::new();
    let params = record_params(model, &mut tape);
    let out = model.forward(&mut tape, &params, x)?;
    let targets: Arc<[f64]> = y.into();
    let loss = tape.bce(out, &targets)?;
    let value = tape.value(loss)[(0, 0)];
    let mut grads = tape.backward(loss)?;
    Ok((value, params.into_iter().map(|v| grads.take(v)).collect()))
}

/// Mean BCE on `(x, y)` without gradients.
pub fn loss(model: &dyn Model, x: &Matrix, y: &[f64]) -> Result<f64> {
    let p = predict(model, x)?;
    crate::engine::bce_loss(&p, y)
}

/// Writes each parameter to `<dir>/<name>.txt` in the value matrix format.
pub fn write_params(model: &dyn Model, dir: &std::path::Path) -> Result<()> {
    for (name, p) in model.param_names().iter().zip(model.params()) {
        crate::io::write_text(&dir.join(format!("{name}.txt")), &crate::io::format_values(p))?;
    }
    Ok(())
}

/// Reads parameters written by [`write_params`] into `model`, checking shapes.
pub fn read_params(model: &mut dyn Model, dir: &std::path::Path) -> Result<()> {
    let names = model.param_names();
    for (name, p) in names.iter().zip(model.params_mut()) {
        let loaded = crate::io::read_matrix(&dir.join(format!("{name}.txt")))?;
        if loaded.shape() != p.shape() {
            return Err(Error::dim(
                "checkpoint",
                format!("{name} {}x{}", p.rows(), p.cols()),
                format!("{}x{}", loaded.rows(), loaded.cols()),
            ));
        }
        *p = loaded;
    }
    Ok(())
}
