//! CSV readers and writers for trajectories, coefficient matrices and
//! density grids. Floating-point values are written with 17 significant
//! digits so that every file round-trips exactly.

use std::io::{Read, Write};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::matrix::CoeffMatrix;
use crate::sim::{Provenance, Trajectory};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::MalformedInput(format!("cannot parse {what} '{s}' as a number")))
}

/// One row per step, one column per coordinate, header `x0,x1,...`.
pub fn write_trajectory<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((0..traj.dim()).map(|k| format!("x{k}")))?;
    for pt in traj.points() {
        w.write_record(pt.iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(input: R, period: f64) -> Result<Trajectory> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let dim = r.headers()?.len();
    if dim == 0 {
        return Err(Error::MalformedInput("trajectory CSV has an empty header".into()));
    }
    let mut samples = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim {
            return Err(Error::MalformedInput(format!(
                "row {} has {} columns, expected {dim}",
                line + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            samples.push(parse_f64(field, "coordinate")?);
        }
    }
    Trajectory::from_samples(dim, period, samples, 0, Provenance::External)
}

/// Row-major matrix with header `c0,c1,...`.
pub fn write_matrix<W: Write>(m: &CoeffMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((0..m.side()).map(|k| format!("c{k}")))?;
    for row in m.rows() {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a square matrix written by [`write_matrix`]; `dim` and `period`
/// describe the basis the coefficients belong to.
pub fn read_matrix<R: Read>(input: R, dim: usize, period: f64) -> Result<CoeffMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let side = r.headers()?.len();
    let mut rows = Vec::with_capacity(side);
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| parse_f64(f, "matrix entry"))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != side {
            return Err(Error::MalformedInput(format!(
                "matrix row has {} entries, expected {side}",
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.len() != side {
        return Err(Error::MalformedInput(format!(
            "matrix has {} rows, expected {side}",
            rows.len()
        )));
    }
    let m = (side as f64).powf(1.0 / dim as f64).round() as usize;
    if m.checked_pow(dim as u32) != Some(side) {
        return Err(Error::MalformedInput(format!("side {side} is not a {dim}-th power")));
    }
    CoeffMatrix::new(BasisSpec::with_period(dim, m, period)?, crate::linalg::from_rows(&rows))
}

/// Kernel values on an equispaced grid; `values[i][j]` is `p(xs[j], ys[i])`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DensityGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl DensityGrid {
    pub fn frobenius_distance(&self, other: &DensityGrid) -> Result<f64> {
        if self.xs.len() != other.xs.len() || self.ys.len() != other.ys.len() {
            return Err(Error::DimensionMismatch {
                expected: self.xs.len() * self.ys.len(),
                found: other.xs.len() * other.ys.len(),
            });
        }
        Ok(self
            .values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt())
    }
}

pub const GRID_CORNER: &str = "y\\x";

/// First row: corner label then the x grid; each later row: y value then
/// the kernel values along x.
pub fn write_grid<W: Write>(grid: &DensityGrid, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![GRID_CORNER.to_string()];
    header.extend(grid.xs.iter().map(|&x| fmt_f64(x)));
    w.write_record(&header)?;
    for (y, row) in grid.ys.iter().zip(&grid.values) {
        let mut rec = vec![fmt_f64(*y)];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid<R: Read>(input: R) -> Result<DensityGrid> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| Error::MalformedInput("empty grid file".into()))??;
    let xs = header
        .iter()
        .skip(1)
        .map(|f| parse_f64(f, "x grid value"))
        .collect::<Result<Vec<_>>>()?;
    let mut ys = Vec::new();
    let mut values = Vec::new();
    for rec in records {
        let rec = rec?;
        if rec.len() != xs.len() + 1 {
            return Err(Error::MalformedInput(
                "grid row length does not match the x grid".into(),
            ));
        }
        ys.push(parse_f64(&rec[0], "y grid value")?);
        values.push(
            rec.iter()
                .skip(1)
                .map(|f| parse_f64(f, "grid value"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(DensityGrid { xs, ys, values })
}
