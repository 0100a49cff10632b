//! On-disk complex tensors: `{"dtype":"c128","shape":[..],"layout":"row-major","data":[[re,im],..]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, CVector, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub layout: String,
    pub data: Vec<[f64; 2]>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: impl IntoIterator<Item = C64>) -> Result<Self> {
        let data: Vec<[f64; 2]> = values.into_iter().map(|z| [z.re, z.im]).collect();
        let t = Tensor { dtype: "c128".into(), shape, layout: "row-major".into(), data };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dtype != "c128" {
            return Err(Error::Config(format!("tensor dtype {:?} is not \"c128\"", self.dtype)));
        }
        if self.layout != "row-major" {
            return Err(Error::Config(format!("tensor layout {:?} is not \"row-major\"", self.layout)));
        }
        let count: usize = self.shape.iter().product();
        if count != self.data.len() {
            return Err(Error::Config(format!("shape {:?} needs {count} entries, found {}", self.shape, self.data.len())));
        }
        if self.data.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Config("tensor contains non-finite entries".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = C64> + '_ {
        self.data.iter().map(|[re, im]| c64(*re, *im))
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        let (r, c) = m.shape();
        let values = (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]);
        Tensor::new(vec![r, c], values).expect("shape matches data")
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        self.validate()?;
        let [r, c] = self.shape[..] else {
            return Err(Error::Config(format!("expected a rank-2 tensor, got shape {:?}", self.shape)));
        };
        let vals: Vec<C64> = self.values().collect();
        CMatrix::new(nalgebra::DMatrix::from_row_slice(r, c, &vals)).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_vector(v: &CVector) -> Self {
        Tensor::new(vec![v.dim()], v.iter().copied()).expect("shape matches data")
    }

    pub fn to_vector(&self) -> Result<CVector> {
        self.validate()?;
        if self.shape.len() != 1 {
            return Err(Error::Config(format!("expected a rank-1 tensor, got shape {:?}", self.shape)));
        }
        CVector::from_vec(self.values().collect()).map_err(|e| Error::Config(e.to_string()))
    }

    /// Rows of a rank-2 tensor as vectors.
    pub fn to_rows(&self) -> Result<Vec<CVector>> {
        self.validate()?;
        let [r, c] = self.shape[..] else {
            return Err(Error::Config(format!("expected a rank-2 tensor, got shape {:?}", self.shape)));
        };
        let vals: Vec<C64> = self.values().collect();
        (0..r)
            .map(|i| CVector::from_vec(vals[i * c..(i + 1) * c].to_vec()).map_err(|e| Error::Config(e.to_string())))
            .collect()
    }

    pub fn from_rows(rows: &[CVector]) -> Self {
        let c = rows.first().map_or(0, |r| r.dim());
        Tensor::new(vec![rows.len(), c], rows.iter().flat_map(|r| r.iter().copied())).expect("rows share a length")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: Tensor = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_keeps_row_major_order() {
        let m = CMatrix::from_fn(2, 2, |i, j| c64((2 * i + j) as f64, -(i as f64)));
        let t = Tensor::from_matrix(&m);
        assert_eq!(t.data[1], [1.0, 0.0]);
        assert_eq!(t.data[2], [2.0, -1.0]);
        let json = serde_json::to_string(&t).unwrap();
        let back: Tensor = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_matrix().unwrap().max_abs_diff(&m), 0.0);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let t = Tensor { dtype: "c128".into(), shape: vec![3], layout: "row-major".into(), data: vec![[0.0, 0.0]; 2] };
        assert!(matches!(t.validate(), Err(Error::Config(_))));
    }
}
