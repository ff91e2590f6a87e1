//! Exact simulation of the periodized Ornstein–Uhlenbeck chain and the
//! trajectory container consumed by the estimator.
//!
//! The unwrapped chain follows `Y_{i+1} = Y_i e^{-θ} + ξ_i` with
//! `ξ_i ~ N(0, σ²(1 - e^{-2θ}) / (2θ))`, which is the exact unit-time
//! transition of `dY = -θ Y dt + σ dW`. Observations are `Y_i mod period`.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub theta: f64,
    pub sigma: f64,
    #[serde(default = "default_period")]
    pub period: f64,
}

fn default_period() -> f64 {
    TAU
}

impl OuParams {
    pub fn new(theta: f64, sigma: f64) -> Result<Self> {
        Self::with_period(theta, sigma, TAU)
    }

    pub fn with_period(theta: f64, sigma: f64, period: f64) -> Result<Self> {
        let p = Self { theta, sigma, period };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::invalid(format!(
                "theta must be positive and finite, got {}",
                self.theta
            )));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be non-negative and finite, got {}",
                self.sigma
            )));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::invalid(format!(
                "period must be positive and finite, got {}",
                self.period
            )));
        }
        Ok(())
    }

    /// `e^{-θ}`, the one-step autoregression coefficient.
    pub fn decay(&self) -> f64 {
        (-self.theta).exp()
    }

    /// Variance of the one-step innovation.
    pub fn step_variance(&self) -> f64 {
        self.sigma * self.sigma * (-(-2.0 * self.theta).exp_m1()) / (2.0 * self.theta)
    }

    /// Variance of the unwrapped stationary law.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Init {
    /// Draw `Y_0` from the unwrapped stationary Gaussian.
    #[default]
    Stationary,
    Fixed(f64),
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("stationary") {
            return Ok(Init::Stationary);
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad fixed initial value '{v}'")))?;
            if !x.is_finite() {
                return Err(Error::invalid("fixed initial value must be finite"));
            }
            return Ok(Init::Fixed(x));
        }
        Err(Error::invalid(format!(
            "init must be 'stationary' or 'fixed:<x0>', got '{s}'"
        )))
    }
}

impl TryFrom<String> for Init {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Init> for String {
    fn from(init: Init) -> String {
        init.to_string()
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Init::Stationary => write!(f, "stationary"),
            Init::Fixed(x) => write!(f, "fixed:{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Provenance {
    Ou { params: OuParams, init: Init },
    External,
}

/// Ordered torus-valued observations `X_0, ..., X_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    period: f64,
    samples: Vec<f64>,
    pub seed: u64,
    pub provenance: Provenance,
}

impl Trajectory {
    /// Builds a trajectory from row-major samples (`dim` coordinates per step).
    pub fn from_samples(dim: usize, period: f64, samples: Vec<f64>, seed: u64, provenance: Provenance) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("trajectory dimension must be positive"));
        }
        if !samples.len().is_multiple_of(dim) {
            return Err(Error::MalformedInput(format!(
                "{} values do not split into {dim}-dimensional points",
                samples.len()
            )));
        }
        if samples.len() / dim < 2 {
            return Err(Error::MalformedInput(
                "trajectory needs at least two observations".into(),
            ));
        }
        if let Some((i, x)) = samples
            .iter()
            .enumerate()
            .find(|(_, x)| !(x.is_finite() && **x >= 0.0 && **x < period))
        {
            return Err(Error::MalformedInput(format!(
                "coordinate {x} at step {} lies outside [0, {period})",
                i / dim
            )));
        }
        Ok(Self {
            dim,
            period,
            samples,
            seed,
            provenance,
        })
    }

    /// External one-dimensional chain on `[0, 2π)`.
    pub fn external_1d(samples: Vec<f64>) -> Result<Self> {
        Self::from_samples(1, TAU, samples, 0, Provenance::External)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Number of observations, `n + 1`.
    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of transitions `n`.
    pub fn transitions(&self) -> usize {
        self.len() - 1
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.samples.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.samples
    }
}

/// Maps each coordinate into `[0, period)`.
pub fn wrap(x: &[f64], period: f64) -> Vec<f64> {
    x.iter().map(|&v| wrap_scalar(v, period)).collect()
}

#[inline]
pub fn wrap_scalar(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    // rem_euclid can round up to `period` for tiny negative inputs.
    if r >= period {
        0.0
    } else {
        r
    }
}

/// SplitMix64 finalizer folded over `parts`; used to derive independent
/// per-replication seeds from a master seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

fn check_n(n: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::invalid("number of transitions n must be at least 1"));
    }
    Ok(())
}

/// Unwrapped path `Y_0, ..., Y_n`.
pub fn simulate_ou_unwrapped(params: &OuParams, n: usize, init: Init, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    check_n(n)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let y0 = match init {
        Init::Stationary => {
            let z: f64 = StandardNormal.sample(&mut rng);
            params.stationary_variance().sqrt() * z
        }
        Init::Fixed(x0) => {
            if !x0.is_finite() {
                return Err(Error::invalid("fixed initial value must be finite"));
            }
            x0
        }
    };
    let decay = params.decay();
    let sd = params.step_variance().sqrt();
    let mut path = Vec::with_capacity(n + 1);
    path.push(y0);
    let mut y = y0;
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        y = y * decay + sd * z;
        path.push(y);
    }
    Ok(path)
}

/// Periodized OU chain of `n` transitions.
pub fn simulate_ou(params: &OuParams, n: usize, init: Init, seed: u64) -> Result<Trajectory> {
    let path = simulate_ou_unwrapped(params, n, init, seed)?;
    let samples = path.into_iter().map(|y| wrap_scalar(y, params.period)).collect();
    Trajectory::from_samples(
        1,
        params.period,
        samples,
        seed,
        Provenance::Ou { params: *params, init },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_drift_without_noise() {
        let p = OuParams::new(2.0, 0.0).unwrap();
        let t = simulate_ou(&p, 3, Init::Fixed(1.0), 99).unwrap();
        let expect = [1.0, (-2.0f64).exp(), (-4.0f64).exp(), (-6.0f64).exp()];
        assert_eq!(t.len(), 4);
        for (got, want) in t.points().zip(expect) {
            assert!((got[0] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn wrap_examples() {
        assert!((wrap_scalar(7.0, TAU) - (7.0 - TAU)).abs() < 1e-15);
        assert!((wrap_scalar(7.0, TAU) - 0.716_814_692_8).abs() < 1e-9);
        assert!((wrap_scalar(-0.5, TAU) - 5.783_185_307_2).abs() < 1e-9);
        assert_eq!(wrap_scalar(TAU, TAU), 0.0);
        assert_eq!(wrap_scalar(-1e-300, TAU), 0.0);
        assert_eq!(wrap(&[7.0, -0.5], TAU).len(), 2);
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = OuParams::new(2.0, 2.0).unwrap();
        assert!(simulate_ou(&p, 0, Init::Stationary, 1).is_err());
        assert!(OuParams::new(0.0, 1.0).is_err());
        assert!(OuParams::new(f64::NAN, 1.0).is_err());
        assert!(OuParams::new(1.0, -1.0).is_err());
        assert!(OuParams::new(1.0, f64::INFINITY).is_err());
        assert!(simulate_ou(&p, 3, Init::Fixed(f64::NAN), 1).is_err());
    }

    #[test]
    fn init_parsing() {
        assert_eq!("stationary".parse::<Init>().unwrap(), Init::Stationary);
        assert_eq!("fixed:0.5".parse::<Init>().unwrap(), Init::Fixed(0.5));
        assert!("fixed:x".parse::<Init>().is_err());
        assert!("burnin".parse::<Init>().is_err());
        assert_eq!(Init::Fixed(0.5).to_string(), "fixed:0.5");
    }

    #[test]
    fn same_seed_same_path() {
        let p = OuParams::new(2.0, 2.0).unwrap();
        let a = simulate_ou(&p, 500, Init::Stationary, 7).unwrap();
        let b = simulate_ou(&p, 500, Init::Stationary, 7).unwrap();
        let c = simulate_ou(&p, 500, Init::Stationary, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn deterministic_under_threads() {
        use crate::par::{map_indexed, Execution};
        let p = OuParams::new(2.0, 2.0).unwrap();
        let seq = map_indexed(Execution::Sequential, 16, |r| {
            simulate_ou(&p, 200, Init::Stationary, derive_seed(5, &[r as u64])).unwrap()
        });
        let par = map_indexed(Execution::Parallel, 16, |r| {
            simulate_ou(&p, 200, Init::Stationary, derive_seed(5, &[r as u64])).unwrap()
        });
        assert_eq!(seq, par);
    }

    #[test]
    fn stationary_moments() {
        let p = OuParams::new(2.0, 2.0).unwrap();
        let y = simulate_ou_unwrapped(&p, 100_000, Init::Stationary, 11).unwrap();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0).abs() < 0.02, "variance {var}");

        let cov: f64 = y.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0);
        let rho = cov / var;
        assert!((rho - (-2.0f64).exp()).abs() < 0.01, "lag-1 autocorrelation {rho}");

        // Regression slope of Y_{i+1} on Y_i.
        let xs: Vec<f64> = y[..y.len() - 1].to_vec();
        let ys: Vec<f64> = y[1..].to_vec();
        let slope = crate::linalg::ls_slope(&xs, &ys);
        assert!((slope - (-2.0f64).exp()).abs() < 0.01, "slope {slope}");
    }

    #[test]
    fn trajectory_validation() {
        assert!(Trajectory::external_1d(vec![0.1]).is_err());
        assert!(Trajectory::external_1d(vec![0.1, 7.0]).is_err());
        assert!(Trajectory::external_1d(vec![0.1, -0.0001]).is_err());
        assert!(Trajectory::from_samples(2, TAU, vec![0.1, 0.2, 0.3], 0, Provenance::External).is_err());
        let t = Trajectory::from_samples(2, TAU, vec![0.1, 0.2, 0.3, 0.4], 0, Provenance::External).unwrap();
        assert_eq!(t.transitions(), 1);
        assert_eq!(t.point(1), &[0.3, 0.4]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn wrap_is_idempotent_and_lattice_invariant(x in -1e4f64..1e4, k in -50i32..50) {
                let w = wrap_scalar(x, TAU);
                prop_assert!((0.0..TAU).contains(&w));
                prop_assert_eq!(wrap_scalar(w, TAU), w);
                let shifted = wrap_scalar(x + TAU * k as f64, TAU);
                // Equal modulo the floating-point error of the shift itself.
                let d = (shifted - w).abs();
                prop_assert!(d < 1e-9 || (TAU - d) < 1e-9, "{} vs {}", shifted, w);
            }
        }
    }
}
