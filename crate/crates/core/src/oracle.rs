//! Ground truth for the periodized OU experiment: wrapped transition and
//! invariant densities, Galerkin coefficient matrices by tensorized
//! quadrature, and their singular spectra.
//!
//! Two transition kernels are provided for the OU chain.
//! [`WrappedDensity`] is the lattice sum of the Gaussian transition centred at
//! `x e^{-θ}` with `x` taken in `[0, period)`; it is the estimand of the loss
//! experiment. [`WrappedChainKernel`] is the exact conditional law of
//! `X_{i+1}` given `X_i` for the stationary wrapped chain, i.e. the law whose
//! pair moments the empirical matrices converge to. They differ because the
//! OU drift is not periodic.

use std::f64::consts::TAU;

use nalgebra::DMatrix;

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::linalg::Svd;
use crate::matrix::CoeffMatrix;
use crate::par::{map_indexed, Execution};
use crate::quadrature::QuadratureGrid;
use crate::sim::OuParams;

pub const DEFAULT_LATTICE_HALFWIDTH: i32 = 10;

/// A transition density `p(x, y)` on `[0, period)^dim`.
pub trait TransitionKernel: Sync {
    fn dim(&self) -> usize;
    fn period(&self) -> f64;
    fn density(&self, x: &[f64], y: &[f64]) -> f64;
}

/// A probability density on `[0, period)^dim`.
pub trait StationaryDensity: Sync {
    fn density(&self, x: &[f64]) -> f64;
}

#[inline]
fn gaussian(z: f64, var: f64) -> f64 {
    (-0.5 * z * z / var).exp() / (TAU * var).sqrt()
}

fn check_halfwidth(h: i32) -> Result<()> {
    if h < 1 {
        return Err(Error::invalid(format!(
            "lattice half-width must be at least 1, got {h}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrappedDensity {
    pub params: OuParams,
    pub lattice_halfwidth: i32,
}

impl WrappedDensity {
    pub fn new(params: OuParams) -> Self {
        Self {
            params,
            lattice_halfwidth: DEFAULT_LATTICE_HALFWIDTH,
        }
    }

    pub fn with_halfwidth(params: OuParams, lattice_halfwidth: i32) -> Result<Self> {
        check_halfwidth(lattice_halfwidth)?;
        Ok(Self {
            params,
            lattice_halfwidth,
        })
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        ou_transition_density(self, x, y)
    }
}

/// `p(x, y) = Σ_{|i| ≤ h} N(y + iL; x e^{-θ}, σ²(1 - e^{-2θ})/(2θ))`.
pub fn ou_transition_density(dens: &WrappedDensity, x: f64, y: f64) -> f64 {
    let p = &dens.params;
    let mean = x * p.decay();
    let var = p.step_variance();
    if var == 0.0 {
        return 0.0;
    }
    (-dens.lattice_halfwidth..=dens.lattice_halfwidth)
        .map(|i| gaussian(y + p.period * i as f64 - mean, var))
        .sum()
}

/// Wrapped `N(0, σ²/(2θ))`, the stationary marginal of the simulated chain.
pub fn ou_invariant_density(params: &OuParams, x: f64) -> f64 {
    wrapped_gaussian(
        x,
        params.stationary_variance(),
        params.period,
        DEFAULT_LATTICE_HALFWIDTH,
    )
}

pub fn wrapped_gaussian(x: f64, var: f64, period: f64, halfwidth: i32) -> f64 {
    (-halfwidth..=halfwidth)
        .map(|i| gaussian(x + period * i as f64, var))
        .sum()
}

impl TransitionKernel for WrappedDensity {
    fn dim(&self) -> usize {
        1
    }
    fn period(&self) -> f64 {
        self.params.period
    }
    fn density(&self, x: &[f64], y: &[f64]) -> f64 {
        self.value(x[0], y[0])
    }
}

/// Invariant density of the wrapped OU chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuInvariant {
    pub params: OuParams,
    pub lattice_halfwidth: i32,
}

impl OuInvariant {
    pub fn new(params: OuParams) -> Self {
        Self {
            params,
            lattice_halfwidth: DEFAULT_LATTICE_HALFWIDTH,
        }
    }
}

impl StationaryDensity for OuInvariant {
    fn density(&self, x: &[f64]) -> f64 {
        wrapped_gaussian(
            x[0],
            self.params.stationary_variance(),
            self.params.period,
            self.lattice_halfwidth,
        )
    }
}

/// Exact one-step kernel of the stationary wrapped OU chain:
/// `Σ_i φ_s(x + iL) Σ_j φ_v(y + jL - (x + iL) e^{-θ}) / μ(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrappedChainKernel {
    pub params: OuParams,
    pub lattice_halfwidth: i32,
}

impl WrappedChainKernel {
    pub fn new(params: OuParams) -> Self {
        Self {
            params,
            lattice_halfwidth: DEFAULT_LATTICE_HALFWIDTH,
        }
    }

    /// Stationary joint density of `(X_i, X_{i+1})`.
    pub fn joint(&self, x: f64, y: f64) -> f64 {
        let p = &self.params;
        let (s, v, a, l) = (p.stationary_variance(), p.step_variance(), p.decay(), p.period);
        let h = self.lattice_halfwidth;
        let mut total = 0.0;
        for i in -h..=h {
            let xu = x + l * i as f64;
            let w = gaussian(xu, s);
            if w == 0.0 {
                continue;
            }
            let inner: f64 = (-h..=h).map(|j| gaussian(y + l * j as f64 - xu * a, v)).sum();
            total += w * inner;
        }
        total
    }
}

impl TransitionKernel for WrappedChainKernel {
    fn dim(&self) -> usize {
        1
    }
    fn period(&self) -> f64 {
        self.params.period
    }
    fn density(&self, x: &[f64], y: &[f64]) -> f64 {
        let mu = wrapped_gaussian(
            x[0],
            self.params.stationary_variance(),
            self.params.period,
            self.lattice_halfwidth,
        );
        self.joint(x[0], y[0]) / mu
    }
}

/// `p ≡ L^{-d}`: the chain of i.i.d. uniform draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformKernel {
    pub dim: usize,
    pub period: f64,
}

impl UniformKernel {
    pub fn new(dim: usize) -> Self {
        Self { dim, period: TAU }
    }

    fn value(&self) -> f64 {
        self.period.powi(self.dim as i32).recip()
    }
}

impl TransitionKernel for UniformKernel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn period(&self) -> f64 {
        self.period
    }
    fn density(&self, _x: &[f64], _y: &[f64]) -> f64 {
        self.value()
    }
}

impl StationaryDensity for UniformKernel {
    fn density(&self, _x: &[f64]) -> f64 {
        self.value()
    }
}

/// True Galerkin matrices of a kernel in a basis.
#[derive(Debug, Clone)]
pub struct OracleMatrices {
    /// `⟨Ψ_λ, P Ψ_λ'⟩_μ`
    pub r: CoeffMatrix,
    /// `⟨Ψ_λ, Ψ_λ'⟩_μ`
    pub g: CoeffMatrix,
    /// `⟨Ψ_λ, P Ψ_λ'⟩` (Lebesgue)
    pub p: CoeffMatrix,
}

/// Computes `R`, `G` and `P` by tensor quadrature of
/// `∬ Ψ_λ(x) p(x, y) Ψ_λ'(y) μ(x) dx dy` and friends.
///
/// Quadrature rows are evaluated with `exec`; each row is summed in a fixed
/// order so the result does not depend on the thread count.
pub fn oracle_galerkin<K, M>(
    kernel: &K,
    invariant: &M,
    basis: &BasisSpec,
    grid: &QuadratureGrid,
    exec: Execution,
) -> Result<OracleMatrices>
where
    K: TransitionKernel + ?Sized,
    M: StationaryDensity + ?Sized,
{
    if kernel.dim() != basis.dim {
        return Err(Error::DimensionMismatch {
            expected: basis.dim,
            found: kernel.dim(),
        });
    }
    if (kernel.period() - basis.period).abs() > 1e-12 * basis.period
        || (grid.period - basis.period).abs() > 1e-12 * basis.period
    {
        return Err(Error::invalid(
            "kernel, basis and quadrature grid must share the same period",
        ));
    }
    if grid.nodes_per_axis() < 4 * basis.size_per_axis {
        return Err(Error::invalid(format!(
            "quadrature grid of {} nodes per axis aliases a basis of {} functions per axis (need at least {})",
            grid.nodes_per_axis(),
            basis.size_per_axis,
            4 * basis.size_per_axis
        )));
    }

    let (points, weights) = grid.tensor(basis.dim);
    let npts = points.len();
    let nb = basis.len();

    // Basis values weighted by the quadrature weights, one row per node.
    let bw: Vec<Vec<f64>> = points
        .iter()
        .zip(&weights)
        .map(|(pt, &w)| {
            let mut row = basis.eval_all(pt)?;
            row.iter_mut().for_each(|v| *v *= w);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mu: Vec<f64> = points.iter().map(|pt| invariant.density(pt)).collect();
    if let Some(bad) = mu.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Numerical(format!(
            "invariant density is not positive on the grid ({bad})"
        )));
    }

    // T[i, :] = Σ_j p(x_i, x_j) w_j Ψ(x_j)
    let t_rows: Vec<Vec<f64>> = map_indexed(exec, npts, |i| {
        let mut acc = vec![0.0; nb];
        for (j, row) in bw.iter().enumerate() {
            let k = kernel.density(&points[i], &points[j]);
            for (a, &b) in acc.iter_mut().zip(row) {
                *a += k * b;
            }
        }
        acc
    });

    let bw_m = DMatrix::from_fn(npts, nb, |i, j| bw[i][j]);
    let t_m = DMatrix::from_fn(npts, nb, |i, j| t_rows[i][j]);
    let b_mu = DMatrix::from_fn(npts, nb, |i, j| bw[i][j] * mu[i]);
    let b_plain = DMatrix::from_fn(
        npts,
        nb,
        |i, j| if weights[i] != 0.0 { bw[i][j] / weights[i] } else { 0.0 },
    );

    let p = bw_m.transpose() * &t_m;
    let r = b_mu.transpose() * &t_m;
    let mut g = b_mu.transpose() * &b_plain;
    // Symmetrize away rounding.
    g = (&g + g.transpose()) * 0.5;

    Ok(OracleMatrices {
        r: CoeffMatrix::new(*basis, r)?,
        g: CoeffMatrix::new(*basis, g)?,
        p: CoeffMatrix::new(*basis, p)?,
    })
}

/// Top `k` singular values in decreasing order.
pub fn oracle_singular_values(p: &CoeffMatrix, k: usize) -> Result<Vec<f64>> {
    if k > p.side() {
        return Err(Error::invalid(format!(
            "requested {k} singular values of a {}x{} matrix",
            p.side(),
            p.side()
        )));
    }
    let mut s = Svd::new(p.entries())?.values;
    s.truncate(k);
    Ok(s)
}

/// Best rank-`r` Frobenius approximation.
pub fn low_rank_truncate(p: &CoeffMatrix, r: usize) -> Result<CoeffMatrix> {
    if r > p.side() {
        return Err(Error::invalid(format!("rank {r} exceeds matrix size {}", p.side())));
    }
    let svd = Svd::new(p.entries())?;
    CoeffMatrix::new(*p.basis(), svd.reconstruct(0..r))
}

/// Least-squares slope of `ln λ_k` against `k = 1..count` over the leading
/// singular values, or `None` if any of them is not strictly positive.
pub fn spectral_decay_slope(values: &[f64], count: usize) -> Option<f64> {
    if count < 2 || values.len() < count || values[..count].iter().any(|&v| v <= 0.0) {
        return None;
    }
    let ks: Vec<f64> = (1..=count).map(|k| k as f64).collect();
    let logs: Vec<f64> = values[..count].iter().map(|v| v.ln()).collect();
    Some(crate::linalg::ls_slope(&ks, &logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ou() -> OuParams {
        OuParams::new(2.0, 2.0).unwrap()
    }

    #[test]
    fn transition_density_at_origin() {
        let d = WrappedDensity::new(ou());
        let v = 1.0 - (-4.0f64).exp();
        let expect = 1.0 / (TAU * v).sqrt();
        assert!((d.value(0.0, 0.0) - expect).abs() < 1e-8);
        assert!((d.value(0.0, 0.0) - 0.402_65).abs() < 1e-5);
    }

    #[test]
    fn transition_density_matches_lattice_sum() {
        // (π σ²(1-e^{-2θ})/θ)^{-1/2} exp(-θ (y - x e^{-θ})² / (σ²(1 - e^{-2θ}))), summed over the lattice.
        let (th, sg) = (2.0f64, 2.0f64);
        let c = sg * sg * (1.0 - (-2.0 * th).exp());
        let (x, y) = (1.3f64, 0.9f64);
        let direct: f64 = (-10..=10)
            .map(|i| {
                let yp = y + TAU * i as f64;
                (-th * (yp - x * (-th).exp()).powi(2) / c).exp() / (PI * c / th).sqrt()
            })
            .sum();
        let d = WrappedDensity::new(ou());
        assert!((d.value(x, y) - direct).abs() < 1e-14);
    }

    #[test]
    fn densities_are_normalized() {
        let grid = QuadratureGrid::gauss_legendre(512, TAU);
        let d = WrappedDensity::new(ou());
        let c = WrappedChainKernel::new(ou());
        for x in [0.0, 1.0, 3.0, 5.0] {
            assert!((grid.integrate(|y| d.value(x, y)) - 1.0).abs() < 1e-8, "x={x}");
            assert!((grid.integrate(|y| c.density(&[x], &[y])) - 1.0).abs() < 1e-8, "x={x}");
        }
        assert!((grid.integrate(|x| ou_invariant_density(&ou(), x)) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn invariant_density_values() {
        let p = ou();
        let at0 = ou_invariant_density(&p, 0.0);
        let phi = |z: f64| (-0.5 * z * z).exp() / TAU.sqrt();
        assert!((at0 - (phi(0.0) + 2.0 * phi(TAU))).abs() < 1e-12);
        assert!((at0 - 0.398_94).abs() < 1e-4);
        assert!((ou_invariant_density(&p, 1.0) - ou_invariant_density(&p, TAU - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn conditional_mode() {
        let d = WrappedDensity::new(ou());
        let res = 20_000;
        let h = TAU / res as f64;
        let (best, _) = (0..res)
            .map(|i| (i as f64 * h, d.value(1.0, i as f64 * h)))
            .fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        assert!((best - (-2.0f64).exp()).abs() <= h);
    }

    #[test]
    fn uniform_kernel_closed_form() {
        let basis = BasisSpec::new(1, 3).unwrap();
        let grid = QuadratureGrid::gauss_legendre(64, TAU);
        let u = UniformKernel::new(1);
        let o = oracle_galerkin(&u, &u, &basis, &grid, Execution::Sequential).unwrap();
        let g_expect = CoeffMatrix::identity(basis).into_entries() / TAU;
        assert!((o.g.entries() - g_expect).amax() < 1e-14);
        let r_expect = CoeffMatrix::unit(basis, 0, 0, 1.0 / TAU);
        assert!(o.r.max_abs_diff(&r_expect) < 1e-14);
        let p_expect = CoeffMatrix::unit(basis, 0, 0, 1.0);
        assert!(o.p.max_abs_diff(&p_expect) < 1e-14);

        // G⁻¹R = P for a kernel exactly supported on the basis span.
        let gi = o.g.entries().clone().try_inverse().unwrap();
        assert!((gi * o.r.entries() - o.p.entries()).amax() < 1e-8);

        let sv = oracle_singular_values(&o.p, 3).unwrap();
        assert!((sv[0] - 1.0).abs() < 1e-12 && sv[1] < 1e-12 && sv[2] < 1e-12);
    }

    #[test]
    fn ou_gram_is_spd() {
        let basis = BasisSpec::new(1, 8).unwrap();
        let grid = QuadratureGrid::gauss_legendre(128, TAU);
        let o = oracle_galerkin(
            &WrappedDensity::new(ou()),
            &OuInvariant::new(ou()),
            &basis,
            &grid,
            Execution::Parallel,
        )
        .unwrap();
        let g = o.g.entries();
        assert!(crate::linalg::max_abs_asymmetry(g) < 1e-14);
        let eig = nalgebra::SymmetricEigen::new(g.clone());
        assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn rejects_aliasing_grid() {
        let basis = BasisSpec::new(1, 16).unwrap();
        let grid = QuadratureGrid::gauss_legendre(63, TAU);
        let err = oracle_galerkin(
            &WrappedDensity::new(ou()),
            &OuInvariant::new(ou()),
            &basis,
            &grid,
            Execution::Sequential,
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn quadrature_doubling_is_converged() {
        let basis = BasisSpec::new(1, 16).unwrap();
        let k = WrappedDensity::new(ou());
        let mu = OuInvariant::new(ou());
        let a = oracle_galerkin(
            &k,
            &mu,
            &basis,
            &QuadratureGrid::gauss_legendre(256, TAU),
            Execution::Parallel,
        )
        .unwrap();
        let b = oracle_galerkin(
            &k,
            &mu,
            &basis,
            &QuadratureGrid::gauss_legendre(512, TAU),
            Execution::Parallel,
        )
        .unwrap();
        assert!(a.r.max_abs_diff(&b.r) < 1e-9);
        assert!(a.g.max_abs_diff(&b.g) < 1e-9);
        assert!(a.p.max_abs_diff(&b.p) < 1e-9);
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let basis = BasisSpec::new(1, 6).unwrap();
        let grid = QuadratureGrid::gauss_legendre(96, TAU);
        let k = WrappedChainKernel::new(ou());
        let mu = OuInvariant::new(ou());
        let a = oracle_galerkin(&k, &mu, &basis, &grid, Execution::Sequential).unwrap();
        let b = oracle_galerkin(&k, &mu, &basis, &grid, Execution::Parallel).unwrap();
        assert_eq!(a.r, b.r);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn truncation_examples() {
        let d = CoeffMatrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let t = low_rank_truncate(&d, 2).unwrap();
        let want = CoeffMatrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(t.max_abs_diff(&want) < 1e-12);
        assert!(low_rank_truncate(&d, 3).unwrap().max_abs_diff(&d) < 1e-12);
        assert_eq!(low_rank_truncate(&d, 0).unwrap().frobenius_norm(), 0.0);
        assert!(low_rank_truncate(&d, 4).is_err());
    }

    #[test]
    fn spectral_decay_of_the_ou_oracle() {
        let basis = BasisSpec::new(1, 16).unwrap();
        let grid = QuadratureGrid::gauss_legendre(512, TAU);
        let o = oracle_galerkin(
            &WrappedDensity::new(ou()),
            &OuInvariant::new(ou()),
            &basis,
            &grid,
            Execution::Parallel,
        )
        .unwrap();
        let s = oracle_singular_values(&o.p, 16).unwrap();
        let slope = spectral_decay_slope(&s, 4).unwrap();
        assert!((slope + 2.0).abs() <= 0.3, "slope {slope}");
        let energy: f64 = s.iter().map(|v| v * v).sum();
        assert!((energy - o.p.frobenius_norm().powi(2)).abs() < 1e-10);
        assert!(spectral_decay_slope(&[1.0, 0.0, 0.0, 0.0], 4).is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn singular_values_invariant_under_transpose(vals in proptest::collection::vec(-1.0f64..1.0, 36)) {
                let m = DMatrix::from_row_slice(6, 6, &vals);
                let a = CoeffMatrix::new(BasisSpec::new(1, 6).unwrap(), m.clone()).unwrap();
                let b = CoeffMatrix::new(BasisSpec::new(1, 6).unwrap(), m.transpose()).unwrap();
                let sa = oracle_singular_values(&a, 6).unwrap();
                let sb = oracle_singular_values(&b, 6).unwrap();
                for (x, y) in sa.iter().zip(&sb) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
                let energy: f64 = sa.iter().map(|v| v * v).sum();
                prop_assert!((energy - m.norm_squared()).abs() < 1e-10);
            }
        }
    }
}
