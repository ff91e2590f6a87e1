//! Empirical Galerkin matrices, spectral hard thresholding and the Gram
//! correction that turns μ-weighted coefficients into transition-density
//! coefficients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::linalg::{max_abs_asymmetry, Svd, SymmetricPinv};
use crate::matrix::CoeffMatrix;
use crate::sim::Trajectory;

pub const DEFAULT_GRAM_RCOND: f64 = 1e-10;
const GRAM_SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub basis: BasisSpec,
    pub alpha: f64,
    pub gram_rcond: f64,
    pub tau: u32,
}

impl EstimatorConfig {
    pub fn new(basis: BasisSpec, alpha: f64) -> Result<Self> {
        let cfg = Self {
            basis,
            alpha,
            gram_rcond: DEFAULT_GRAM_RCOND,
            tau: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.gram_rcond > 0.0 && self.gram_rcond < 1.0) {
            return Err(Error::invalid(format!(
                "gram_rcond must lie in (0, 1), got {}",
                self.gram_rcond
            )));
        }
        if self.tau < 1 {
            return Err(Error::invalid("tau must be at least 1"));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!(
            "threshold alpha must be non-negative and finite, got {alpha}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularTriple {
    pub value: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub alpha: f64,
    /// Full spectrum of the thresholded matrix, decreasing.
    pub singular_values: Vec<f64>,
    /// Triples with singular value strictly above `alpha`, decreasing.
    pub kept: Vec<SingularTriple>,
    pub rank: usize,
}

/// Emitted when the empirical Gram matrix has eigenvalues below the
/// relative cutoff; those directions are dropped by the pseudo-inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramWarning {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub rcond: f64,
    pub dropped: usize,
}

#[derive(Debug, Clone)]
pub struct GramCorrection {
    pub p: CoeffMatrix,
    pub warning: Option<GramWarning>,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub p_tilde: CoeffMatrix,
    pub report: ThresholdReport,
    pub gram_warning: Option<GramWarning>,
    pub r_hat: CoeffMatrix,
    pub g_hat: CoeffMatrix,
}

fn check_compatible(traj: &Trajectory, basis: &BasisSpec) -> Result<()> {
    if traj.dim() != basis.dim {
        return Err(Error::DimensionMismatch {
            expected: basis.dim,
            found: traj.dim(),
        });
    }
    if (traj.period() - basis.period).abs() > 1e-12 * basis.period {
        return Err(Error::invalid(format!(
            "trajectory period {} does not match basis period {}",
            traj.period(),
            basis.period
        )));
    }
    Ok(())
}

/// Single pass computing both `R̂ = (1/n) Σ_{i<n} Ψ(X_i) Ψ(X_{i+1})ᵀ` and
/// `Ĝ = (1/(n+1)) Σ_{i≤n} Ψ(X_i) Ψ(X_i)ᵀ`.
pub fn accumulate(traj: &Trajectory, basis: &BasisSpec) -> Result<(CoeffMatrix, CoeffMatrix)> {
    check_compatible(traj, basis)?;
    let nb = basis.len();
    let mut scratch = vec![0.0; basis.dim * basis.size_per_axis];
    let mut prev = vec![0.0; nb];
    let mut cur = vec![0.0; nb];
    let mut r = vec![0.0; nb * nb];
    let mut g = vec![0.0; nb * nb];

    let mut points = traj.points();
    let first = points.next().expect("trajectory has at least two points");
    basis.eval_all_into(first, &mut scratch, &mut prev);
    add_outer(&mut g, &prev, &prev);
    for pt in points {
        basis.eval_all_into(pt, &mut scratch, &mut cur);
        add_outer(&mut r, &prev, &cur);
        add_outer(&mut g, &cur, &cur);
        std::mem::swap(&mut prev, &mut cur);
    }

    let n = traj.transitions() as f64;
    let r = DMatrix::from_row_slice(nb, nb, &r) / n;
    let g = DMatrix::from_row_slice(nb, nb, &g) / (n + 1.0);
    Ok((CoeffMatrix::new(*basis, r)?, CoeffMatrix::new(*basis, g)?))
}

#[inline]
fn add_outer(acc: &mut [f64], a: &[f64], b: &[f64]) {
    let nb = b.len();
    for (row, &ai) in acc.chunks_exact_mut(nb).zip(a) {
        for (x, &bj) in row.iter_mut().zip(b) {
            *x += ai * bj;
        }
    }
}

/// Empirical Galerkin matrix of consecutive pairs.
pub fn accumulate_r(traj: &Trajectory, basis: &BasisSpec) -> Result<CoeffMatrix> {
    Ok(accumulate(traj, basis)?.0)
}

/// Empirical Gram matrix of single states.
pub fn accumulate_g(traj: &Trajectory, basis: &BasisSpec) -> Result<CoeffMatrix> {
    Ok(accumulate(traj, basis)?.1)
}

/// Keeps the singular triples of `m` whose value is strictly greater than
/// `alpha`. This is also the minimizer of `‖m - S‖_F² + α² rank(S)`.
pub fn hard_threshold(m: &CoeffMatrix, alpha: f64) -> Result<(CoeffMatrix, ThresholdReport)> {
    check_alpha(alpha)?;
    let svd = Svd::new(m.entries())?;
    let rank = svd.rank_above(alpha);
    let kept = (0..rank)
        .map(|k| SingularTriple {
            value: svd.values[k],
            left: svd.u.column(k).iter().copied().collect(),
            right: svd.v.column(k).iter().copied().collect(),
        })
        .collect();
    let out = CoeffMatrix::new(*m.basis(), svd.reconstruct(0..rank))?;
    Ok((
        out,
        ThresholdReport {
            alpha,
            singular_values: svd.values,
            kept,
            rank,
        },
    ))
}

/// `G⁺ R̃` with a relative eigenvalue cutoff on the symmetric `G`.
pub fn gram_correct(g: &CoeffMatrix, rt: &CoeffMatrix, rcond: f64) -> Result<GramCorrection> {
    if g.side() != rt.side() {
        return Err(Error::DimensionMismatch {
            expected: g.side(),
            found: rt.side(),
        });
    }
    if !(rcond > 0.0 && rcond < 1.0) {
        return Err(Error::invalid(format!("rcond must lie in (0, 1), got {rcond}")));
    }
    let asym = max_abs_asymmetry(g.entries());
    if asym > GRAM_SYMMETRY_TOL {
        return Err(Error::invalid(format!(
            "Gram matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let pinv = SymmetricPinv::new(g.entries(), rcond)?;
    let min = *pinv.eigenvalues.first().unwrap_or(&0.0);
    let max = *pinv.eigenvalues.last().unwrap_or(&0.0);
    let warning = (min < rcond * max.abs() || pinv.retained < g.side()).then(|| GramWarning {
        min_eigenvalue: min,
        max_eigenvalue: max,
        rcond,
        dropped: g.side() - pinv.retained,
    });
    let p = CoeffMatrix::new(*rt.basis(), &pinv.pinv * rt.entries())?;
    Ok(GramCorrection { p, warning })
}

/// Full pipeline: accumulate, threshold `R̂`, then apply `Ĝ⁺`.
pub fn estimate(traj: &Trajectory, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    let (r_hat, g_hat) = accumulate(traj, &cfg.basis)?;
    estimate_from_matrices(r_hat, g_hat, cfg)
}

/// Pipeline starting from already accumulated `R̂` and `Ĝ`.
pub fn estimate_from_matrices(r_hat: CoeffMatrix, g_hat: CoeffMatrix, cfg: &EstimatorConfig) -> Result<Estimate> {
    let (rt, report) = hard_threshold(&r_hat, cfg.alpha)?;
    let corrected = gram_correct(&g_hat, &rt, cfg.gram_rcond)?;
    Ok(Estimate {
        p_tilde: corrected.p,
        report,
        gram_warning: corrected.warning,
        r_hat,
        g_hat,
    })
}

/// `p̃(x, y) = Ψ(x)ᵀ P̃ Ψ(y)`.
pub fn density_from_coeffs(p: &CoeffMatrix, x: &[f64], y: &[f64]) -> Result<f64> {
    let basis = p.basis();
    let px = basis.eval_all(x)?;
    let py = basis.eval_all(y)?;
    Ok(bilinear(p.entries(), &px, &py))
}

pub(crate) fn bilinear(m: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let row: f64 = b.iter().enumerate().map(|(j, &bj)| m[(i, j)] * bj).sum();
        total += ai * row;
    }
    total
}

/// `P̃^τ`, the plug-in estimator of the `τ`-step operator.
pub fn power_estimator(p: &CoeffMatrix, tau: u32) -> Result<CoeffMatrix> {
    if tau < 1 {
        return Err(Error::invalid("tau must be at least 1"));
    }
    let mut out = p.entries().clone();
    for _ in 1..tau {
        out = &out * p.entries();
    }
    CoeffMatrix::new(*p.basis(), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// Dyadic level `J`.
    pub level: u32,
    pub alpha: f64,
}

impl Resolution {
    /// Dimension of the approximation space per axis, `2^J`.
    pub fn size_per_axis(&self) -> usize {
        1usize << self.level
    }
}

/// `J = ⌈log₂(n^{1/(2s+d)} · ln(n)^{-d/(4s+2d)})⌉` and `α = C √(2^{Jd}/n)`.
pub fn choose_resolution(n: u64, s: f64, d: u32, c: f64) -> Result<Resolution> {
    if n < 3 {
        return Err(Error::invalid(format!("need n >= 3 so that ln(n) > 1, got {n}")));
    }
    if d < 1 {
        return Err(Error::invalid("dimension d must be at least 1"));
    }
    if !(s.is_finite() && s >= d as f64) {
        return Err(Error::invalid(format!(
            "smoothness s must satisfy s >= d, got s={s}, d={d}"
        )));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid(format!("constant C must be positive, got {c}")));
    }
    let nf = n as f64;
    let df = d as f64;
    let arg = nf.powf(1.0 / (2.0 * s + df)) * nf.ln().powf(-df / (4.0 * s + 2.0 * df));
    let level = arg.log2().ceil().max(0.0) as u32;
    let alpha = c * (2f64.powf(level as f64 * df) / nf).sqrt();
    Ok(Resolution { level, alpha })
}
