//! Dense decompositions with deterministic ordering and sign conventions.
//!
//! The SVD is a one-sided Jacobi iteration; the symmetric eigensolver is
//! `nalgebra`'s.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 10_000;
const JACOBI_TOL: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Singular value decomposition sorted by decreasing singular value.
///
/// Each left vector is sign-normalized so its first component of non-negligible
/// magnitude is positive; the matching right vector is flipped with it.
#[derive(Debug, Clone)]
pub struct Svd {
    pub values: Vec<f64>,
    /// Columns are left singular vectors.
    pub u: DMatrix<f64>,
    /// Columns are right singular vectors.
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("SVD input contains non-finite entries".into()));
        }
        if m.nrows() < m.ncols() {
            let t = Self::new(&m.transpose())?;
            return Ok(Self {
                values: t.values,
                u: t.v,
                v: t.u,
            });
        }
        let (cols, v) = one_sided_jacobi(m.clone())?;
        let nr = cols.nrows();
        let k = cols.ncols();
        let norms: Vec<f64> = (0..k).map(|j| cols.column(j).norm()).collect();

        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite norms").then(a.cmp(&b)));

        let largest = norms.iter().fold(0.0f64, |a, &b| a.max(b));
        let tiny = largest * f64::EPSILON * k as f64;
        let mut su = DMatrix::<f64>::zeros(nr, k);
        let mut sv = DMatrix::<f64>::zeros(k, k);
        let mut values = Vec::with_capacity(k);
        let mut pending = Vec::new();
        for (dst, &src) in order.iter().enumerate() {
            let s = norms[src];
            sv.set_column(dst, &v.column(src));
            if s > tiny && s > 0.0 {
                su.set_column(dst, &(cols.column(src) / s));
            } else {
                pending.push(dst);
            }
            values.push(s);
        }
        // Complete the left basis for numerically null directions.
        let mut filled: Vec<usize> = (0..k).filter(|j| !pending.contains(j)).collect();
        let mut e = 0;
        for dst in pending {
            while e < nr {
                let mut cand = DVector::<f64>::zeros(nr);
                cand[e] = 1.0;
                e += 1;
                for _ in 0..2 {
                    for &j in &filled {
                        let proj = su.column(j).dot(&cand);
                        cand.axpy(-proj, &su.column(j), 1.0);
                    }
                }
                let nrm = cand.norm();
                if nrm > 1e-8 {
                    su.set_column(dst, &(cand / nrm));
                    filled.push(dst);
                    break;
                }
            }
        }

        for j in 0..k {
            let scale = su.column(j).amax();
            let flip = su
                .column(j)
                .iter()
                .find(|x| x.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE))
                .is_some_and(|x| *x < 0.0);
            if flip {
                su.column_mut(j).neg_mut();
                sv.column_mut(j).neg_mut();
            }
        }
        Ok(Self { values, u: su, v: sv })
    }

    /// `Σ_{k in keep} s_k u_k v_kᵀ`.
    pub fn reconstruct(&self, keep: impl IntoIterator<Item = usize>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.u.nrows(), self.v.nrows());
        for k in keep {
            out.ger(self.values[k], &self.u.column(k), &self.v.column(k), 1.0);
        }
        out
    }

    pub fn rank_above(&self, alpha: f64) -> usize {
        self.values.iter().take_while(|&&s| s > alpha).count()
    }
}

/// One-sided Jacobi rotations on the columns of `a` (rows >= cols).
/// Returns the rotated columns `A V` and the accumulated orthogonal `V`.
fn one_sided_jacobi(mut a: DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.ncols();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            return Ok((a, v));
        }
    }
    Err(Error::Numerical("SVD did not converge".into()))
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let x = m[(i, p)];
        let y = m[(i, q)];
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(Svd::new(m)?.values)
}

/// Pseudo-inverse of a symmetric matrix with a relative eigenvalue cutoff.
#[derive(Debug, Clone)]
pub struct SymmetricPinv {
    pub pinv: DMatrix<f64>,
    /// Eigenvalues in increasing order.
    pub eigenvalues: Vec<f64>,
    /// Number of eigen-directions kept.
    pub retained: usize,
}

impl SymmetricPinv {
    pub fn new(g: &DMatrix<f64>, rcond: f64) -> Result<Self> {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("Gram matrix contains non-finite entries".into()));
        }
        let eig = SymmetricEigen::try_new(g.clone(), SVD_EPS, SVD_MAX_ITER)
            .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
        let n = g.nrows();
        let largest = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let cutoff = rcond * largest;
        let mut pinv = DMatrix::zeros(n, n);
        let mut retained = 0;
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > cutoff {
                let col = eig.eigenvectors.column(i);
                pinv.ger(1.0 / lam, &col, &col, 1.0);
                retained += 1;
            }
        }
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        Ok(Self {
            pinv,
            eigenvalues,
            retained,
        })
    }
}

pub fn max_abs_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
