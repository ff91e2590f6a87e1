use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use specthresh::estimator::{
    accumulate_r, estimate as run_estimate, power_estimator, EstimatorConfig, GramWarning, ThresholdReport,
};
use specthresh::harness::{figure_data as run_figure, run_table_with, FigureConfig, TABLE1_SEED};
use specthresh::io::{read_trajectory, write_grid, write_matrix, write_trajectory, DensityGrid};
use specthresh::linalg::singular_values;
use specthresh::oracle::{oracle_galerkin, oracle_singular_values, spectral_decay_slope, OuInvariant, UniformKernel};
use specthresh::par::Execution;
use specthresh::quadrature::QuadratureGrid;
use specthresh::sim::{simulate_ou, Provenance};
use specthresh::{BasisSpec, CoeffMatrix, Error, ExperimentConfig, OuParams, Result, Trajectory, WrappedDensity};

use crate::args::{EstimateArgs, ExperimentArgs, FigureArgs, Format, KernelKind, Preset, SimulateArgs, SpectrumArgs};

const DEFAULT_PERIOD: f64 = specthresh::harness::DEFAULT_PERIOD;

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryJson {
    dim: usize,
    period: f64,
    seed: u64,
    samples: Vec<f64>,
}

/// Standard output that ends the process quietly once the reader goes away.
struct Stdout(io::StdoutLock<'static>);

fn stdout() -> Stdout {
    Stdout(io::stdout().lock())
}

impl Write for Stdout {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.write(buf).map_err(exit_on_broken_pipe)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.0.flush().map_err(exit_on_broken_pipe)
    }
}

fn exit_on_broken_pipe(e: io::Error) -> io::Error {
    if e.kind() == io::ErrorKind::BrokenPipe {
        std::process::exit(0);
    }
    e
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn write_coeffs<W: Write>(m: &CoeffMatrix, format: Format, out: W) -> Result<()> {
    match format {
        Format::Csv => write_matrix(m, out),
        Format::Json => write_json(&m.to_json_value(), out),
    }
}

fn write_density<W: Write>(g: &DensityGrid, format: Format, out: W) -> Result<()> {
    match format {
        Format::Csv => write_grid(g, out),
        Format::Json => write_json(g, out),
    }
}

fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let file = File::open(path)?;
    if is_json {
        let doc: TrajectoryJson = serde_json::from_reader(io::BufReader::new(file))?;
        Trajectory::from_samples(doc.dim, doc.period, doc.samples, doc.seed, Provenance::External)
    } else {
        read_trajectory(io::BufReader::new(file), DEFAULT_PERIOD)
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let params = OuParams::new(a.theta, a.sigma)?;
    let traj = simulate_ou(&params, a.n, a.init, a.seed)?;
    let emit = |out: &mut dyn Write| -> Result<()> {
        match a.format {
            Format::Csv => write_trajectory(&traj, out),
            Format::Json => write_json(
                &TrajectoryJson {
                    dim: traj.dim(),
                    period: traj.period(),
                    seed: a.seed,
                    samples: traj.as_flat().to_vec(),
                },
                out,
            ),
        }
    };
    let (lo, hi) = traj
        .as_flat()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let summary = format!(
        "n={} observations={} min={lo} max={hi} seed={}",
        a.n,
        traj.len(),
        a.seed
    );
    match &a.out {
        Some(path) => {
            emit(&mut create(path)?)?;
            println!("{summary} out={}", path.display());
        }
        None => {
            emit(&mut stdout())?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EstimateReport<'a> {
    observations: usize,
    m: usize,
    tau: u32,
    kept_count: usize,
    #[serde(flatten)]
    report: &'a ThresholdReport,
    gram_warning: &'a Option<GramWarning>,
}

pub fn estimate(a: &EstimateArgs) -> Result<()> {
    if a.tau < 1 {
        return Err(usage("--tau must be at least 1"));
    }
    let traj = load_trajectory(&a.input)?;
    let basis = BasisSpec::with_period(traj.dim(), a.m, traj.period())?;
    let cfg = EstimatorConfig::new(basis, a.alpha)?;
    let est = run_estimate(&traj, &cfg)?;

    fs::create_dir_all(&a.out)?;
    let ext = a.format.ext();
    let p_path = a.out.join(format!("p_tilde.{ext}"));
    write_coeffs(&est.p_tilde, a.format, create(&p_path)?)?;
    if a.tau > 1 {
        let power = power_estimator(&est.p_tilde, a.tau)?;
        write_coeffs(
            &power,
            a.format,
            create(&a.out.join(format!("p_tilde_tau{}.{ext}", a.tau)))?,
        )?;
    }
    let report = EstimateReport {
        observations: traj.len(),
        m: a.m,
        tau: a.tau,
        kept_count: est.report.kept.len(),
        report: &est.report,
        gram_warning: &est.gram_warning,
    };
    write_json(&report, create(&a.out.join("report.json"))?)?;
    if let Some(w) = &est.gram_warning {
        eprintln!(
            "warning kind=gram dropped={} min_eigenvalue={:e} max_eigenvalue={:e}",
            w.dropped, w.min_eigenvalue, w.max_eigenvalue
        );
    }
    println!(
        "rank={} alpha={} m={} out={}",
        est.report.rank,
        a.alpha,
        a.m,
        a.out.display()
    );
    Ok(())
}

fn experiment_config(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&a.config, a.preset) {
        (Some(path), _) => ExperimentConfig::from_toml_file(path)?,
        (None, Some(Preset::Table1)) => ExperimentConfig::table1(TABLE1_SEED),
        (None, None) => {
            if a.n.is_empty() || a.m.is_empty() || a.alpha.is_empty() {
                return Err(usage("without --config or --preset, --n, --m and --alpha are required"));
            }
            let mut cfg = ExperimentConfig::table1(0);
            cfg.rows = None;
            cfg
        }
    };
    if a.theta.is_some() || a.sigma.is_some() {
        cfg.params = OuParams::with_period(
            a.theta.unwrap_or(cfg.params.theta),
            a.sigma.unwrap_or(cfg.params.sigma),
            cfg.params.period,
        )?;
    }
    if !a.n.is_empty() {
        cfg.n_values = a.n.clone();
    }
    if !a.m.is_empty() || !a.alpha.is_empty() {
        if let Some(rows) = cfg.rows.take() {
            cfg.m_values = rows.iter().map(|r| r.m).collect();
            cfg.m_values.sort_unstable();
            cfg.m_values.dedup();
            cfg.alpha_values = rows.iter().map(|r| r.alpha).collect();
            cfg.alpha_values.sort_by(|x, y| x.total_cmp(y));
            cfg.alpha_values.dedup();
        }
        if !a.m.is_empty() {
            cfg.m_values = a.m.clone();
        }
        if !a.alpha.is_empty() {
            cfg.alpha_values = a.alpha.clone();
        }
    }
    if let Some(r) = a.reps {
        cfg.replications = r;
    }
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(i) = a.init {
        cfg.init = i;
    }
    if let Some(t) = a.truth_block {
        cfg.truth_block = t;
    }
    if let Some(q) = a.quad_nodes {
        cfg.quad_nodes = q;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn experiment(a: &ExperimentArgs) -> Result<()> {
    let cfg = experiment_config(a)?;
    let truth = cfg.truth(Execution::Parallel)?;
    let table = run_table_with(&cfg, &truth, Execution::Parallel)?;
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let csv_path = dir.join("loss_table.csv");
            let json_path = dir.join("loss_table.json");
            table.write_csv(create(&csv_path)?)?;
            write_json(&table, create(&json_path)?)?;
            print!("{}", table.pivot());
            println!("out={} {}", csv_path.display(), json_path.display());
        }
        None => {
            let out = stdout();
            match a.format {
                Format::Csv => table.write_csv(out)?,
                Format::Json => write_json(&table, out)?,
            }
        }
    }
    Ok(())
}

pub fn figure_data(a: &FigureArgs) -> Result<()> {
    let fig = FigureConfig {
        params: OuParams::new(a.theta, a.sigma)?,
        n: a.n,
        init: a.init,
        seed: a.seed,
        resolution: a.resolution,
        projection_m: a.projection_m,
        raw_m: a.raw_m,
        raw_alpha: a.raw_alpha,
        thresholded_m: a.m,
        thresholded_alpha: a.alpha,
        quad_nodes: a.quad_nodes,
    };
    let panels = run_figure(&fig, Execution::Parallel)?;
    fs::create_dir_all(&a.out)?;
    for (label, grid) in panels.labeled() {
        let path: PathBuf = a.out.join(format!("grid_{label}.{}", a.format.ext()));
        write_density(grid, a.format, create(&path)?)?;
        println!("panel={label} out={}", path.display());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SpectrumReport {
    source: &'static str,
    m: usize,
    singular_values: Vec<f64>,
    fit: usize,
    slope: Option<f64>,
}

pub fn spectrum(a: &SpectrumArgs) -> Result<()> {
    let (source, values) = if a.oracle {
        let params = OuParams::new(a.theta, a.sigma)?;
        let basis = BasisSpec::with_period(1, a.m, params.period)?;
        let grid = QuadratureGrid::gauss_legendre(a.quad_nodes, params.period);
        let o = match a.kernel {
            KernelKind::Ou => oracle_galerkin(
                &WrappedDensity::new(params),
                &OuInvariant::new(params),
                &basis,
                &grid,
                Execution::Parallel,
            )?,
            KernelKind::Uniform => {
                let u = UniformKernel::new(1);
                oracle_galerkin(&u, &u, &basis, &grid, Execution::Parallel)?
            }
        };
        let source = match a.kernel {
            KernelKind::Ou => "oracle-ou",
            KernelKind::Uniform => "oracle-uniform",
        };
        (source, oracle_singular_values(&o.p, a.m)?)
    } else {
        let path = a
            .input
            .as_ref()
            .ok_or_else(|| usage("a trajectory file is required without --oracle"))?;
        let traj = load_trajectory(path)?;
        let basis = BasisSpec::with_period(traj.dim(), a.m, traj.period())?;
        ("empirical-r", singular_values(accumulate_r(&traj, &basis)?.entries())?)
    };
    if a.fit < 2 || a.fit > values.len() {
        return Err(usage(format!("--fit must lie in [2, {}]", values.len())));
    }
    let report = SpectrumReport {
        source,
        m: a.m,
        slope: spectral_decay_slope(&values, a.fit),
        fit: a.fit,
        singular_values: values,
    };
    let emit = |out: &mut dyn Write| -> Result<()> {
        match a.format {
            Format::Csv => {
                writeln!(out, "k,singular_value")?;
                for (k, v) in report.singular_values.iter().enumerate() {
                    writeln!(out, "{},{}", k + 1, specthresh::io::fmt_f64(*v))?;
                }
                out.flush()?;
                Ok(())
            }
            Format::Json => write_json(&report, out),
        }
    };
    let slope = report.slope.map_or("none".to_string(), |s| format!("{s}"));
    match &a.out {
        Some(path) => {
            emit(&mut create(path)?)?;
            println!(
                "source={source} m={} fit={} slope={slope} out={}",
                a.m,
                a.fit,
                path.display()
            );
        }
        None => {
            emit(&mut stdout())?;
            eprintln!("source={source} m={} fit={} slope={slope}", a.m, a.fit);
        }
    }
    Ok(())
}
