use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Binary connectivity matrix with its nonzero coordinates precomputed.
///
/// Entry `(i, j)` set means input unit `i` feeds output unit `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMask {
    dense: Matrix,
    /// `(row, col)` of every one, row-major order.
    nonzeros: Vec<(u32, u32)>,
}

impl SparseMask {
    /// Fails on any entry outside `{0, 1}`.
    pub fn new(dense: Matrix) -> Result<Self> {
        let mut nonzeros = Vec::new();
        for r in 0..dense.rows() {
            for (c, &v) in dense.row(r).iter().enumerate() {
                if v == 1.0 {
                    nonzeros.push((r as u32, c as u32));
                } else if v != 0.0 {
                    return Err(Error::Validation(format!(
                        "mask entry ({r},{c}) = {v} is not binary"
                    )));
                }
            }
        }
        Ok(Self { dense, nonzeros })
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::new(Matrix::filled(rows, cols, 1.0)).expect("all-ones mask is binary")
    }

    pub fn dense(&self) -> &Matrix {
        &self.dense
    }

    pub fn rows(&self) -> usize {
        self.dense.rows()
    }

    pub fn cols(&self) -> usize {
        self.dense.cols()
    }

    pub fn nonzeros(&self) -> &[(u32, u32)] {
        &self.nonzeros
    }

    pub fn count_ones(&self) -> usize {
        self.nonzeros.len()
    }

    /// Number of ones in each column (incoming connections per output unit).
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols()];
        for &(_, c) in &self.nonzeros {
            counts[c as usize] += 1;
        }
        counts
    }

    pub fn is_set(&self, r: usize, c: usize) -> bool {
        self.dense[(r, c)] == 1.0
    }

    /// `x · (M ⊙ W)`, touching only unmasked weights.
    pub(crate) fn forward(&self, x: &Matrix, w: &Matrix) -> Matrix {
        let out_cols = self.cols();
        let mut y = Matrix::zeros(x.rows(), out_cols);
        for b in 0..x.rows() {
            let xr = x.row(b);
            let yr = y.row_mut(b);
            for &(i, j) in &self.nonzeros {
                yr[j as usize] += xr[i as usize] * w[(i as usize, j as usize)];
            }
        }
        y
    }

    /// Gradients `(∂L/∂x, ∂L/∂W)` for upstream `delta`; `∂L/∂W` is zero off-mask.
    pub(crate) fn backward(&self, x: &Matrix, w: &Matrix, delta: &Matrix) -> (Matrix, Matrix) {
        let mut dx = Matrix::zeros(x.rows(), x.cols());
        let mut dw = Matrix::zeros(w.rows(), w.cols());
        for b in 0..x.rows() {
            let xr = x.row(b);
            let dr = delta.row(b);
            for &(i, j) in &self.nonzeros {
                let (i, j) = (i as usize, j as usize);
                dw[(i, j)] += xr[i] * dr[j];
                dx[(b, i)] += w[(i, j)] * dr[j];
            }
        }
        (dx, dw)
    }

    /// Dense `M ⊙ W` for the nonzero `values` (row-major nonzero order).
    pub fn scatter_values(&self, values: &[f64]) -> Matrix {
        let mut w = Matrix::zeros(self.rows(), self.cols());
        for (&(i, j), &v) in self.nonzeros.iter().zip(values) {
            w[(i as usize, j as usize)] = v;
        }
        w
    }

    /// Values of `w` at the nonzeros, in row-major nonzero order.
    pub fn gather_values(&self, w: &Matrix) -> Vec<f64> {
        self.nonzeros
            .iter()
            .map(|&(i, j)| w[(i as usize, j as usize)])
            .collect()
    }

    pub(crate) fn forward_values(&self, x: &Matrix, values: &[f64]) -> Matrix {
        let mut y = Matrix::zeros(x.rows(), self.cols());
        for b in 0..x.rows() {
            let xr = x.row(b);
            let yr = y.row_mut(b);
            for (&(i, j), &v) in self.nonzeros.iter().zip(values) {
                yr[j as usize] += xr[i as usize] * v;
            }
        }
        y
    }

    pub(crate) fn backward_values(
        &self,
        x: &Matrix,
        values: &[f64],
        delta: &Matrix,
    ) -> (Matrix, Vec<f64>) {
        let mut dx = Matrix::zeros(x.rows(), x.cols());
        let mut dv = vec![0.0; values.len()];
        for b in 0..x.rows() {
            let xr = x.row(b);
            let dr = delta.row(b);
            let dxr = dx.row_mut(b);
            for (k, (&(i, j), &v)) in self.nonzeros.iter().zip(values).enumerate() {
                let d = dr[j as usize];
                dv[k] += xr[i as usize] * d;
                dxr[i as usize] += v * d;
            }
        }
        (dx, dv)
    }

    pub(crate) fn check_weight(&self, w: &Matrix, op: &'static str) -> Result<()> {
        if w.shape() != self.dense.shape() {
            return Err(Error::dim(
                op,
                format!("weight {}x{}", self.rows(), self.cols()),
                format!("{}x{}", w.rows(), w.cols()),
            ));
        }
        Ok(())
    }
}

/// `y = x·(M⊙W) + b`, validating shapes and mask entries.
pub fn masked_linear(x: &Matrix, w: &Matrix, b: &[f64], mask: &Matrix) -> Result<Matrix> {
    let mask = SparseMask::new(mask.clone())?;
    mask.check_weight(w, "masked_linear")?;
    if x.cols() != w.rows() {
        return Err(Error::dim("masked_linear", w.rows(), x.cols()));
    }
    if b.len() != w.cols() {
        return Err(Error::dim("masked_linear bias", w.cols(), b.len()));
    }
    let mut y = mask.forward(x, w);
    for r in 0..y.rows() {
        for (v, bias) in y.row_mut(r).iter_mut().zip(b) {
            *v += bias;
        }
    }
    Ok(y)
}
