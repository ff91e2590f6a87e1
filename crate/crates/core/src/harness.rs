//! Replicated loss experiments against quadrature ground truth.
//!
//! Each observation level `n` gets `replications` independent chains; chain
//! `r` at level `n` is seeded from `(master_seed, n, r)` and shared by every
//! `(m, alpha)` row of the table. Replications run through [`crate::par`],
//! and statistics are reduced sequentially in replication order, so tables
//! are bit-identical for any thread count.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::estimator::{accumulate, estimate_from_matrices, EstimatorConfig, DEFAULT_GRAM_RCOND};
use crate::io::{fmt_f64, DensityGrid};
use crate::matrix::CoeffMatrix;
use crate::oracle::{oracle_galerkin, OuInvariant, TransitionKernel, WrappedDensity};
use crate::par::{try_map_indexed, Execution};
use crate::quadrature::QuadratureGrid;
use crate::sim::{derive_seed, simulate_ou, Init, OuParams};

/// One `(m, alpha)` row of a loss table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub m: usize,
    pub alpha: f64,
}

fn default_replications() -> usize {
    100
}
fn default_truth_block() -> usize {
    30
}
fn default_quad_nodes() -> usize {
    512
}
fn default_rcond() -> f64 {
    DEFAULT_GRAM_RCOND
}

/// Replication specification. In TOML the chain constants sit at top level
/// and the flag spellings (`n`, `m`, `alpha`, `reps`, `seed`) are accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub params: OuParams,
    #[serde(alias = "n")]
    pub n_values: Vec<usize>,
    /// Basis functions per axis; used with `alpha_values` when `rows` is absent.
    #[serde(default, alias = "m")]
    pub m_values: Vec<usize>,
    #[serde(default, alias = "alpha")]
    pub alpha_values: Vec<f64>,
    /// Explicit `(m, alpha)` rows; overrides the `m_values × alpha_values` product.
    #[serde(default)]
    pub rows: Option<Vec<CellSpec>>,
    #[serde(default = "default_replications", alias = "reps")]
    pub replications: usize,
    #[serde(default, alias = "seed")]
    pub master_seed: u64,
    #[serde(default = "default_truth_block")]
    pub truth_block: usize,
    #[serde(default)]
    pub init: Init,
    #[serde(default = "default_quad_nodes")]
    pub quad_nodes: usize,
    #[serde(default = "default_rcond")]
    pub gram_rcond: f64,
}

/// `(m, alpha)` rows of the reference OU loss table, in order.
pub const TABLE1_ROWS: [(usize, f64); 16] = [
    (3, 0.0),
    (3, 0.2),
    (3, 0.1),
    (4, 0.0),
    (4, 0.2),
    (4, 0.1),
    (5, 0.0),
    (5, 0.02),
    (5, 0.03),
    (5, 0.05),
    (5, 0.1),
    (5, 0.2),
    (6, 0.0),
    (6, 0.05),
    (6, 0.1),
    (6, 0.2),
];

pub const TABLE1_N: [usize; 3] = [1000, 3000, 6000];

/// Master seed of the shipped table manifest.
pub const TABLE1_SEED: u64 = 2019;

impl ExperimentConfig {
    /// A single cell with the default θ = σ = 2 chain.
    pub fn single(n: usize, m: usize, alpha: f64, replications: usize, master_seed: u64) -> Result<Self> {
        let cfg = Self {
            params: OuParams::new(2.0, 2.0)?,
            n_values: vec![n],
            m_values: vec![m],
            alpha_values: vec![alpha],
            rows: None,
            replications,
            master_seed,
            truth_block: default_truth_block(),
            init: Init::Stationary,
            quad_nodes: default_quad_nodes(),
            gram_rcond: DEFAULT_GRAM_RCOND,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The reference grid: θ = σ = 2, n ∈ {1000, 3000, 6000}, 100
    /// replications, 30 × 30 true coefficients.
    pub fn table1(master_seed: u64) -> Self {
        Self {
            params: OuParams::new(2.0, 2.0).expect("valid constants"),
            n_values: TABLE1_N.to_vec(),
            m_values: Vec::new(),
            alpha_values: Vec::new(),
            rows: Some(TABLE1_ROWS.iter().map(|&(m, alpha)| CellSpec { m, alpha }).collect()),
            replications: 100,
            master_seed,
            truth_block: 30,
            init: Init::Stationary,
            quad_nodes: 512,
            gram_rcond: DEFAULT_GRAM_RCOND,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn cells(&self) -> Vec<CellSpec> {
        match &self.rows {
            Some(rows) => rows.clone(),
            None => self
                .m_values
                .iter()
                .flat_map(|&m| self.alpha_values.iter().map(move |&alpha| CellSpec { m, alpha }))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.replications < 1 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::invalid("n_values must be a non-empty list of positive integers"));
        }
        let cells = self.cells();
        if cells.is_empty() {
            return Err(Error::invalid("no (m, alpha) cells configured"));
        }
        for c in &cells {
            if c.m == 0 {
                return Err(Error::invalid("basis size m must be positive"));
            }
            if !(c.alpha.is_finite() && c.alpha >= 0.0) {
                return Err(Error::invalid(format!("alpha must be non-negative, got {}", c.alpha)));
            }
        }
        let max_m = cells.iter().map(|c| c.m).max().unwrap_or(0);
        if self.truth_block < max_m {
            return Err(Error::invalid(format!(
                "truth_block {} is smaller than the largest basis size {max_m}",
                self.truth_block
            )));
        }
        if self.quad_nodes < 4 * self.truth_block {
            return Err(Error::invalid(format!(
                "quad_nodes {} must be at least 4 x truth_block = {}",
                self.quad_nodes,
                4 * self.truth_block
            )));
        }
        if !(self.gram_rcond > 0.0 && self.gram_rcond < 1.0) {
            return Err(Error::invalid("gram_rcond must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Lebesgue coefficients of the wrapped density on the first
    /// `truth_block` functions per axis.
    pub fn truth(&self, exec: Execution) -> Result<CoeffMatrix> {
        let basis = BasisSpec::with_period(1, self.truth_block, self.params.period)?;
        let grid = QuadratureGrid::gauss_legendre(self.quad_nodes, self.params.period);
        let o = oracle_galerkin(
            &WrappedDensity::new(self.params),
            &OuInvariant::new(self.params),
            &basis,
            &grid,
            exec,
        )?;
        Ok(o.p)
    }
}

/// Frobenius distance between a zero-padded estimate and the true block.
pub fn euclidean_loss(p_tilde: &CoeffMatrix, truth: &CoeffMatrix) -> Result<f64> {
    let (eb, tb) = (p_tilde.basis(), truth.basis());
    if eb.dim != tb.dim {
        return Err(Error::DimensionMismatch {
            expected: tb.dim,
            found: eb.dim,
        });
    }
    if eb.size_per_axis > tb.size_per_axis {
        return Err(Error::invalid(format!(
            "estimate has {} functions per axis but the true block only {}",
            eb.size_per_axis, tb.size_per_axis
        )));
    }
    let padded = p_tilde.zero_padded(tb.size_per_axis)?;
    Ok((padded.entries() - truth.entries()).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub mean_loss: f64,
    pub sd_loss: f64,
    pub mean_rank: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    pub cells: Vec<CellStats>,
}

pub const LOSS_TABLE_HEADER: [&str; 7] = ["n", "m", "alpha", "mean_loss", "sd_loss", "mean_rank", "replications"];

impl LossTable {
    pub fn get(&self, n: usize, m: usize, alpha: f64) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.n == n && c.m == m && c.alpha == alpha)
    }

    /// Lowest mean loss at level `n` among cells with `alpha > 0` (or `== 0`).
    pub fn best(&self, n: usize, thresholded: bool) -> Option<&CellStats> {
        self.cells
            .iter()
            .filter(|c| c.n == n && (c.alpha > 0.0) == thresholded)
            .min_by(|a, b| a.mean_loss.total_cmp(&b.mean_loss))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LOSS_TABLE_HEADER)?;
        for c in &self.cells {
            w.write_record([
                c.n.to_string(),
                c.m.to_string(),
                c.alpha.to_string(),
                fmt_f64(c.mean_loss),
                fmt_f64(c.sd_loss),
                fmt_f64(c.mean_rank),
                c.replications.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::MalformedInput(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if header != LOSS_TABLE_HEADER {
            return Err(Error::MalformedInput(format!(
                "unexpected loss table header {header:?}"
            )));
        }
        let mut cells = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|_| Error::MalformedInput(format!("bad number '{}'", &rec[i])))
            };
            let int = |i: usize| -> Result<usize> {
                rec[i]
                    .parse()
                    .map_err(|_| Error::MalformedInput(format!("bad integer '{}'", &rec[i])))
            };
            cells.push(CellStats {
                n: int(0)?,
                m: int(1)?,
                alpha: num(2)?,
                mean_loss: num(3)?,
                sd_loss: num(4)?,
                mean_rank: num(5)?,
                replications: int(6)?,
            });
        }
        Ok(Self { cells })
    }

    /// Human-readable pivot: one line per `(m, alpha)` row, one column per `n`.
    pub fn pivot(&self) -> String {
        let mut ns: Vec<usize> = self.cells.iter().map(|c| c.n).collect();
        ns.sort_unstable();
        ns.dedup();
        let mut rows: Vec<(usize, f64)> = Vec::new();
        for c in &self.cells {
            if !rows.iter().any(|&(m, a)| m == c.m && a == c.alpha) {
                rows.push((c.m, c.alpha));
            }
        }
        let mut out = format!("{:<18}", "m, alpha");
        for n in &ns {
            out.push_str(&format!("{n:>10}"));
        }
        out.push('\n');
        for (m, a) in rows {
            out.push_str(&format!("{:<18}", format!("m={m}, a={a}")));
            for &n in &ns {
                match self.get(n, m, a) {
                    Some(c) => out.push_str(&format!("{:>10.4}", c.mean_loss)),
                    None => out.push_str(&format!("{:>10}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Loss and rank of one replication in one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepOutcome {
    pub loss: f64,
    pub rank: usize,
}

/// Runs every row at level `n`; result is indexed `[replication][row]`.
fn replicate(
    cfg: &ExperimentConfig,
    truth: Option<&CoeffMatrix>,
    n: usize,
    rows: &[CellSpec],
    exec: Execution,
) -> Result<Vec<Vec<RepOutcome>>> {
    let mut sizes: Vec<usize> = rows.iter().map(|c| c.m).collect();
    sizes.sort_unstable();
    sizes.dedup();
    try_map_indexed(exec, cfg.replications, |rep| {
        let seed = derive_seed(cfg.master_seed, &[n as u64, rep as u64]);
        let traj = simulate_ou(&cfg.params, n, cfg.init, seed)?;
        let mut mats = BTreeMap::new();
        for &m in &sizes {
            let basis = BasisSpec::with_period(1, m, cfg.params.period)?;
            mats.insert(m, (basis, accumulate(&traj, &basis)?));
        }
        rows.iter()
            .map(|cell| {
                let run = || -> Result<RepOutcome> {
                    let (basis, (r, g)) = &mats[&cell.m];
                    let est_cfg = EstimatorConfig {
                        basis: *basis,
                        alpha: cell.alpha,
                        gram_rcond: cfg.gram_rcond,
                        tau: 1,
                    };
                    let est = estimate_from_matrices(r.clone(), g.clone(), &est_cfg)?;
                    let loss = match truth {
                        Some(t) => euclidean_loss(&est.p_tilde, t)?,
                        None => f64::NAN,
                    };
                    Ok(RepOutcome {
                        loss,
                        rank: est.report.rank,
                    })
                };
                run().map_err(|e| Error::Cell {
                    n,
                    m: cell.m,
                    alpha: cell.alpha,
                    source: Box::new(e),
                })
            })
            .collect()
    })
}

fn summarize(n: usize, cell: CellSpec, outcomes: impl Iterator<Item = RepOutcome>) -> CellStats {
    let outs: Vec<RepOutcome> = outcomes.collect();
    let k = outs.len() as f64;
    let mean = outs.iter().map(|o| o.loss).sum::<f64>() / k;
    let sd = if outs.len() > 1 {
        (outs.iter().map(|o| (o.loss - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let mean_rank = outs.iter().map(|o| o.rank as f64).sum::<f64>() / k;
    CellStats {
        n,
        m: cell.m,
        alpha: cell.alpha,
        mean_loss: mean,
        sd_loss: sd,
        mean_rank,
        replications: outs.len(),
    }
}

/// Runs the full configured table against a precomputed true block.
pub fn run_table_with(cfg: &ExperimentConfig, truth: &CoeffMatrix, exec: Execution) -> Result<LossTable> {
    cfg.validate()?;
    if truth.basis().size_per_axis != cfg.truth_block {
        return Err(Error::invalid("true block does not match truth_block"));
    }
    let rows = cfg.cells();
    let mut cells = Vec::with_capacity(rows.len() * cfg.n_values.len());
    for &n in &cfg.n_values {
        let outcomes = replicate(cfg, Some(truth), n, &rows, exec)?;
        for (j, &cell) in rows.iter().enumerate() {
            cells.push(summarize(n, cell, outcomes.iter().map(|rep| rep[j])));
        }
    }
    Ok(LossTable { cells })
}

pub fn run_table(cfg: &ExperimentConfig) -> Result<LossTable> {
    cfg.validate()?;
    let truth = cfg.truth(Execution::Parallel)?;
    run_table_with(cfg, &truth, Execution::Parallel)
}

/// Statistics of one `(n, m, alpha)` cell under `cfg`'s chain and seeding.
pub fn run_cell(cfg: &ExperimentConfig, n: usize, m: usize, alpha: f64) -> Result<CellStats> {
    let mut single = cfg.clone();
    single.n_values = vec![n];
    single.rows = Some(vec![CellSpec { m, alpha }]);
    single.truth_block = single.truth_block.max(m);
    let table = run_table(&single)?;
    Ok(table.cells[0])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankHistogram {
    /// `counts[r]` replications ended with rank `r`.
    pub counts: Vec<usize>,
}

impl RankHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Smallest most frequent rank.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (r, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = r;
            }
        }
        best
    }

    pub fn fraction_at_most(&self, rank: usize) -> f64 {
        let below: usize = self.counts.iter().take(rank + 1).sum();
        below as f64 / self.total() as f64
    }

    /// Ranks with non-zero count.
    pub fn support(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(r, _)| r)
            .collect()
    }
}

/// Histogram of the thresholded rank over the replications of a cell.
pub fn rank_diagnostic(
    cfg: &ExperimentConfig,
    n: usize,
    m: usize,
    alpha: f64,
    exec: Execution,
) -> Result<RankHistogram> {
    cfg.params.validate()?;
    if cfg.replications < 1 {
        return Err(Error::invalid("replications must be at least 1"));
    }
    let cell = CellSpec { m, alpha };
    let outcomes = replicate(cfg, None, n, &[cell], exec)?;
    let mut counts = vec![0; m + 1];
    for rep in outcomes {
        counts[rep[0].rank] += 1;
    }
    Ok(RankHistogram { counts })
}

fn grid_axis(resolution: usize, period: f64) -> Vec<f64> {
    (0..resolution).map(|j| period * j as f64 / resolution as f64).collect()
}

/// Estimated kernel on an equispaced `resolution × resolution` grid.
pub fn density_grid(p: &CoeffMatrix, resolution: usize) -> Result<DensityGrid> {
    if resolution < 2 {
        return Err(Error::invalid("grid resolution must be at least 2"));
    }
    let basis = p.basis();
    if basis.dim != 1 {
        return Err(Error::invalid(
            "density grids are only defined for one-dimensional chains",
        ));
    }
    let axis = grid_axis(resolution, basis.period);
    let psi: Vec<Vec<f64>> = axis.iter().map(|&x| basis.eval_all(&[x])).collect::<Result<_>>()?;
    // Q[j] = P̃ Ψ(y_j) reused for every x.
    let q: Vec<nalgebra::DVector<f64>> = psi.iter().map(|v| p.entries() * crate::linalg::dvec(v)).collect();
    let values = (0..resolution)
        .map(|i| {
            (0..resolution)
                .map(|j| psi[j].iter().zip(q[i].iter()).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(DensityGrid {
        xs: axis.clone(),
        ys: axis,
        values,
    })
}

/// True kernel on the same grid layout as [`density_grid`].
pub fn kernel_grid<K: TransitionKernel + ?Sized>(kernel: &K, resolution: usize) -> Result<DensityGrid> {
    if resolution < 2 {
        return Err(Error::invalid("grid resolution must be at least 2"));
    }
    if kernel.dim() != 1 {
        return Err(Error::invalid(
            "density grids are only defined for one-dimensional chains",
        ));
    }
    let axis = grid_axis(resolution, kernel.period());
    let values = axis
        .iter()
        .map(|&y| axis.iter().map(|&x| kernel.density(&[x], &[y])).collect())
        .collect();
    Ok(DensityGrid {
        xs: axis.clone(),
        ys: axis,
        values,
    })
}

/// Settings for the four-panel density comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureConfig {
    pub params: OuParams,
    pub n: usize,
    pub init: Init,
    pub seed: u64,
    pub resolution: usize,
    pub projection_m: usize,
    pub raw_m: usize,
    pub raw_alpha: f64,
    pub thresholded_m: usize,
    pub thresholded_alpha: f64,
    pub quad_nodes: usize,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            params: OuParams::new(2.0, 2.0).expect("valid constants"),
            n: 1000,
            init: Init::Fixed(0.5),
            seed: 1,
            resolution: 256,
            projection_m: 4,
            raw_m: 3,
            raw_alpha: 0.0,
            thresholded_m: 4,
            thresholded_alpha: 0.2,
            quad_nodes: 512,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FigurePanels {
    pub truth: DensityGrid,
    pub projected: DensityGrid,
    pub nonthresholded: DensityGrid,
    pub thresholded: DensityGrid,
}

impl FigurePanels {
    pub const LABELS: [&'static str; 4] = ["true", "projected", "nonthresholded", "thresholded"];

    pub fn labeled(&self) -> [(&'static str, &DensityGrid); 4] {
        [
            ("true", &self.truth),
            ("projected", &self.projected),
            ("nonthresholded", &self.nonthresholded),
            ("thresholded", &self.thresholded),
        ]
    }
}

pub fn figure_data(fig: &FigureConfig, exec: Execution) -> Result<FigurePanels> {
    fig.params.validate()?;
    let kernel = WrappedDensity::new(fig.params);
    let truth = kernel_grid(&kernel, fig.resolution)?;

    let proj_basis = BasisSpec::with_period(1, fig.projection_m, fig.params.period)?;
    let grid = QuadratureGrid::gauss_legendre(fig.quad_nodes.max(4 * fig.projection_m), fig.params.period);
    let oracle = oracle_galerkin(&kernel, &OuInvariant::new(fig.params), &proj_basis, &grid, exec)?;
    let projected = density_grid(&oracle.p, fig.resolution)?;

    let traj = simulate_ou(&fig.params, fig.n, fig.init, fig.seed)?;
    let panel = |m: usize, alpha: f64| -> Result<DensityGrid> {
        let basis = BasisSpec::with_period(1, m, fig.params.period)?;
        let est = crate::estimator::estimate(&traj, &EstimatorConfig::new(basis, alpha)?)?;
        density_grid(&est.p_tilde, fig.resolution)
    };
    Ok(FigurePanels {
        truth,
        projected,
        nonthresholded: panel(fig.raw_m, fig.raw_alpha)?,
        thresholded: panel(fig.thresholded_m, fig.thresholded_alpha)?,
    })
}

/// Default period for grids when no basis is at hand.
pub const DEFAULT_PERIOD: f64 = TAU;
