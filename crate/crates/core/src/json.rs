//! JSON wire formats.
//!
//! Matrices are `{"dims":[rows,cols],"entries":[[re,im],...]}` with entries in
//! row-major order. Choi matrices add `"d_in"` and `"d_out"` to the same object.

use serde::{Deserialize, Serialize};

use crate::channel::ChoiMatrix;
use crate::error::{Error, Result};
use crate::linalg::{c, CMat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dims: [usize; 2],
    pub entries: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let (r, cols) = m.shape();
        let entries = (0..r)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
            .collect();
        Self { dims: [r, cols], entries }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let [r, cols] = self.dims;
        if self.entries.len() != r * cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix JSON declares {r}x{cols} but has {} entries",
                self.entries.len()
            )));
        }
        Ok(CMat::from_fn(r, cols, |i, j| {
            let [re, im] = self.entries[i * cols + j];
            c(re, im)
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiJson {
    pub d_in: usize,
    pub d_out: usize,
    #[serde(flatten)]
    pub matrix: MatrixJson,
}

impl ChoiJson {
    pub fn from_choi(choi: &ChoiMatrix) -> Self {
        Self {
            d_in: choi.d_in(),
            d_out: choi.d_out(),
            matrix: MatrixJson::from_matrix(choi.matrix()),
        }
    }

    pub fn to_choi(&self) -> Result<ChoiMatrix> {
        ChoiMatrix::new(self.matrix.to_matrix()?, self.d_in, self.d_out)
    }
}
