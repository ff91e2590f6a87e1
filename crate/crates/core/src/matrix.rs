use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};

/// Dense square matrix of Galerkin coefficients indexed by a [`BasisSpec`].
///
/// Rows and columns follow the basis' flat index order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffMatrix {
    entries: DMatrix<f64>,
    basis: BasisSpec,
}

impl CoeffMatrix {
    pub fn new(basis: BasisSpec, entries: DMatrix<f64>) -> Result<Self> {
        let side = basis.len();
        if entries.nrows() != side || entries.ncols() != side {
            return Err(Error::DimensionMismatch {
                expected: side,
                found: if entries.nrows() != side {
                    entries.nrows()
                } else {
                    entries.ncols()
                },
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("coefficient matrix has non-finite entries".into()));
        }
        Ok(Self { entries, basis })
    }

    pub fn zeros(basis: BasisSpec) -> Self {
        let n = basis.len();
        Self {
            entries: DMatrix::zeros(n, n),
            basis,
        }
    }

    pub fn identity(basis: BasisSpec) -> Self {
        let n = basis.len();
        Self {
            entries: DMatrix::identity(n, n),
            basis,
        }
    }

    /// `scale · E_ij`, a single non-zero entry.
    pub fn unit(basis: BasisSpec, i: usize, j: usize, scale: f64) -> Self {
        let mut m = Self::zeros(basis);
        m.entries[(i, j)] = scale;
        m
    }

    /// One-dimensional basis of side `rows.len()` on `[0, 2π)`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::MalformedInput("coefficient matrix must be square".into()));
        }
        Self::new(BasisSpec::new(1, n.max(1))?, crate::linalg::from_rows(rows))
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn side(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &CoeffMatrix) -> f64 {
        (&self.entries - &other.entries).amax()
    }

    /// Leading `size^d` block in a basis with `size` functions per axis.
    pub fn leading_block(&self, size: usize) -> Result<CoeffMatrix> {
        if size > self.basis.size_per_axis {
            return Err(Error::invalid(format!(
                "block size {size} exceeds basis size {}",
                self.basis.size_per_axis
            )));
        }
        let sub = BasisSpec::with_period(self.basis.dim, size, self.basis.period)?;
        let map: Vec<usize> = sub
            .indices()
            .map(|idx| self.basis.flat_index(&idx.per_axis))
            .collect::<Result<_>>()?;
        let n = map.len();
        let entries = DMatrix::from_fn(n, n, |i, j| self.entries[(map[i], map[j])]);
        CoeffMatrix::new(sub, entries)
    }

    /// Embeds into a larger basis (same dimension), filling the new
    /// coefficients with zero.
    pub fn zero_padded(&self, size: usize) -> Result<CoeffMatrix> {
        if size < self.basis.size_per_axis {
            return Err(Error::invalid(format!(
                "cannot pad a basis of size {} down to {size}",
                self.basis.size_per_axis
            )));
        }
        let big = BasisSpec::with_period(self.basis.dim, size, self.basis.period)?;
        let mut out = CoeffMatrix::zeros(big);
        let map: Vec<usize> = self
            .basis
            .indices()
            .map(|idx| big.flat_index(&idx.per_axis))
            .collect::<Result<_>>()?;
        for (i, &bi) in map.iter().enumerate() {
            for (j, &bj) in map.iter().enumerate() {
                out.entries[(bi, bj)] = self.entries[(i, j)];
            }
        }
        Ok(out)
    }

    pub fn to_json_value(&self) -> MatrixJson {
        MatrixJson {
            basis: self.basis,
            rows: self.rows(),
        }
    }

    pub fn from_json_value(doc: MatrixJson) -> Result<Self> {
        let n = doc.basis.len();
        if doc.rows.len() != n || doc.rows.iter().any(|r| r.len() != n) {
            return Err(Error::MalformedInput(format!("matrix JSON must be {n}x{n}")));
        }
        Self::new(doc.basis, crate::linalg::from_rows(&doc.rows))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub basis: BasisSpec,
    pub rows: Vec<Vec<f64>>,
}
