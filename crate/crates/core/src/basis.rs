//! Orthonormal basis on the torus `[0, period)^d` and the flat/multi-index
//! bookkeeping shared by every coefficient matrix.
//!
//! The per-axis family is the real trigonometric basis
//!
//! ```text
//! Ψ_0(x)    = 1/√L
//! Ψ_2i(x)   = √(2/L) cos(2π i x / L)
//! Ψ_2i-1(x) = √(2/L) sin(2π i x / L)
//! ```
//!
//! with `L` the period. For `L = 2π` this is `1/√(2π)`, `cos(kx/2)/√π` for
//! even `k` and `sin((k+1)x/2)/√π` for odd `k`. Multivariate functions are
//! tensor products, enumerated in row-major order of their per-axis indices.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A one-dimensional orthonormal family on a circle of given circumference.
///
/// Only [`Trigonometric`] is provided; a periodized wavelet or B-spline family
/// would slot in here.
pub trait OrthonormalBasis1d {
    fn eval(&self, k: usize, x: f64, period: f64) -> f64;

    /// Fills `out[k]` with `Ψ_k(x)` for `k < out.len()`.
    fn eval_prefix(&self, x: f64, period: f64, out: &mut [f64]) {
        for (k, v) in out.iter_mut().enumerate() {
            *v = self.eval(k, x, period);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Trigonometric;

impl OrthonormalBasis1d for Trigonometric {
    #[inline]
    fn eval(&self, k: usize, x: f64, period: f64) -> f64 {
        if k == 0 {
            return 1.0 / period.sqrt();
        }
        let amp = (2.0 / period).sqrt();
        let freq = k.div_ceil(2) as f64;
        let arg = TAU * freq * x / period;
        if k.is_multiple_of(2) {
            amp * arg.cos()
        } else {
            amp * arg.sin()
        }
    }

    fn eval_prefix(&self, x: f64, period: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        out[0] = 1.0 / period.sqrt();
        let amp = (2.0 / period).sqrt();
        let base = TAU * x / period;
        let mut k = 1;
        while k < out.len() {
            let (s, c) = (base * k.div_ceil(2) as f64).sin_cos();
            out[k] = amp * s;
            if k + 1 < out.len() {
                out[k + 1] = amp * c;
            }
            k += 2;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    #[default]
    Trigonometric,
}

/// Tensor basis of `size_per_axis^dim` functions on `[0, period)^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub dim: usize,
    pub size_per_axis: usize,
    pub period: f64,
    #[serde(default)]
    pub family: BasisFamily,
}

/// A basis function identified both by its flat position and its per-axis digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    pub flat: usize,
    pub per_axis: Vec<usize>,
}

/// `Ψ_k(x)` of the trigonometric family on `[0, 2π)`.
pub fn eval_basis_1d(k: usize, x: f64) -> f64 {
    Trigonometric.eval(k, x, TAU)
}

/// Product over axes of the one-dimensional functions on `[0, 2π)`.
pub fn eval_basis(idx: &BasisIndex, point: &[f64]) -> Result<f64> {
    if idx.per_axis.len() != point.len() {
        return Err(Error::DimensionMismatch {
            expected: idx.per_axis.len(),
            found: point.len(),
        });
    }
    Ok(idx
        .per_axis
        .iter()
        .zip(point)
        .map(|(&k, &x)| eval_basis_1d(k, x))
        .product())
}

impl BasisSpec {
    pub fn new(dim: usize, size_per_axis: usize) -> Result<Self> {
        Self::with_period(dim, size_per_axis, TAU)
    }

    pub fn with_period(dim: usize, size_per_axis: usize, period: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("basis dimension must be positive"));
        }
        if size_per_axis == 0 {
            return Err(Error::invalid("basis size per axis must be positive"));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::invalid(format!(
                "period must be positive and finite, got {period}"
            )));
        }
        size_per_axis
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::invalid("basis size overflows usize"))?;
        Ok(Self {
            dim,
            size_per_axis,
            period,
            family: BasisFamily::Trigonometric,
        })
    }

    /// Total number of tensor functions, `m^d`.
    pub fn len(&self) -> usize {
        self.size_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major decomposition of a flat index into base-`m` digits.
    pub fn index(&self, flat: usize) -> BasisIndex {
        assert!(flat < self.len(), "flat index {flat} out of range");
        let mut per_axis = vec![0; self.dim];
        let mut rest = flat;
        for slot in per_axis.iter_mut().rev() {
            *slot = rest % self.size_per_axis;
            rest /= self.size_per_axis;
        }
        BasisIndex { flat, per_axis }
    }

    pub fn flat_index(&self, per_axis: &[usize]) -> Result<usize> {
        if per_axis.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: per_axis.len(),
            });
        }
        per_axis.iter().try_fold(0usize, |acc, &k| {
            if k >= self.size_per_axis {
                Err(Error::invalid(format!(
                    "per-axis index {k} exceeds basis size {}",
                    self.size_per_axis
                )))
            } else {
                Ok(acc * self.size_per_axis + k)
            }
        })
    }

    pub fn indices(&self) -> impl Iterator<Item = BasisIndex> + '_ {
        (0..self.len()).map(|flat| self.index(flat))
    }

    /// Value of a single basis function at a point.
    pub fn eval(&self, idx: &BasisIndex, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim || idx.per_axis.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: point.len(),
            });
        }
        Ok(idx
            .per_axis
            .iter()
            .zip(point)
            .map(|(&k, &x)| self.eval_1d(k, x))
            .product())
    }

    #[inline]
    pub fn eval_1d(&self, k: usize, x: f64) -> f64 {
        match self.family {
            BasisFamily::Trigonometric => Trigonometric.eval(k, x, self.period),
        }
    }

    /// Evaluates all `m^d` functions at `point` into `out` (length `len()`).
    ///
    /// `scratch` must hold `dim * size_per_axis` values.
    pub fn eval_all_into(&self, point: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        debug_assert_eq!(point.len(), self.dim);
        debug_assert_eq!(out.len(), self.len());
        let m = self.size_per_axis;
        for (axis, &x) in point.iter().enumerate() {
            let row = &mut scratch[axis * m..(axis + 1) * m];
            match self.family {
                BasisFamily::Trigonometric => Trigonometric.eval_prefix(x, self.period, row),
            }
        }
        if self.dim == 1 {
            out.copy_from_slice(&scratch[..m]);
            return;
        }
        // Row-major tensor product: the last axis varies fastest.
        out[0] = 1.0;
        let mut filled = 1;
        for axis in 0..self.dim {
            let row = &scratch[axis * m..(axis + 1) * m];
            for i in (0..filled).rev() {
                let v = out[i];
                for (j, &r) in row.iter().enumerate() {
                    out[i * m + j] = v * r;
                }
            }
            filled *= m;
        }
    }

    /// Convenience allocation wrapper around [`Self::eval_all_into`].
    pub fn eval_all(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: point.len(),
            });
        }
        let mut scratch = vec![0.0; self.dim * self.size_per_axis];
        let mut out = vec![0.0; self.len()];
        self.eval_all_into(point, &mut scratch, &mut out);
        Ok(out)
    }

    /// Uniform bound `sup |Ψ_k|` for `k ≥ 1` on a single axis.
    pub fn sup_norm_1d(&self) -> f64 {
        (2.0 / self.period).sqrt()
    }
}

/// `1/√π`, the sup norm of the non-constant functions on `[0, 2π)`.
pub const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;
