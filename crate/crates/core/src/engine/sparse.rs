use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Square CSR matrix with real values, used for normalized adjacencies.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(n: usize, offsets: Vec<usize>, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if offsets.len() != n + 1
            || offsets[n] != indices.len()
            || indices.len() != values.len()
            || offsets.windows(2).any(|w| w[0] > w[1])
            || indices.iter().any(|&c| c >= n)
        {
            return Err(Error::Validation("malformed CSR arrays".into()));
        }
        Ok(Self {
            n,
            offsets,
            indices,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Applies the matrix to each of `blocks` stacked `n`-row blocks of `h`.
    pub fn spmm_blocks(&self, h: &Matrix, blocks: usize) -> Result<Matrix> {
        if h.rows() != self.n * blocks {
            return Err(Error::dim("spmm", self.n * blocks, h.rows()));
        }
        let mut out = Matrix::zeros(h.rows(), h.cols());
        for b in 0..blocks {
            let base = b * self.n;
            for r in 0..self.n {
                let orow = out.row_mut(base + r);
                for (c, v) in self.row(r) {
                    for (o, x) in orow.iter_mut().zip(h.row(base + c)) {
                        *o += v * x;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `Sᵀ · delta` per block, the backward of [`CsrMatrix::spmm_blocks`].
    pub(crate) fn spmm_t_blocks(&self, delta: &Matrix, blocks: usize) -> Matrix {
        let mut out = Matrix::zeros(delta.rows(), delta.cols());
        for b in 0..blocks {
            let base = b * self.n;
            for r in 0..self.n {
                let d = delta.row(base + r);
                for (c, v) in self.row(r) {
                    for (o, x) in out.row_mut(base + c).iter_mut().zip(d) {
                        *o += v * x;
                    }
                }
            }
        }
        out
    }
}
