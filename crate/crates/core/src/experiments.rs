//! Parameter sweeps producing CSV: recovery errors over `(s, m, n)`,
//! representer convergence under refinement and sinc accuracy against the
//! spectral oracle.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rayon::prelude::*;

use crate::assembly::{assemble_full_matrices, h1_norm, prolongate, ExactSolution, DEFAULT_QUAD_ORDER};
use crate::error::{Error, Result};
use crate::fractional::{relative_mass_error, FractionalExponent, FractionalSolver, SpectralOracle, DEFAULT_SINC_STEP};
use crate::linalg::{PrimalVector, SolverPolicy, DEFAULT_DENSE_CAP};
use crate::measurements::{
    assemble_measurement_dual, measure_exact, GaussianMeasurement, MeasurementSet, DEFAULT_DUAL_ORDER,
    DEFAULT_OMEGA_ORDER, DEFAULT_RADIUS,
};
use crate::mesh::MAX_LEVEL;
use crate::recovery::{gram_and_recover, riesz_representer, riesz_representers, Discretization, RecoveryResult};

/// Errors below this are treated as roundoff when fitting exponential decay.
pub const ORACLE_FIT_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Case {
    Smooth,
    Nonsmooth,
}

impl Case {
    pub fn exact(self) -> ExactSolution {
        match self {
            Case::Smooth => ExactSolution::smooth(),
            Case::Nonsmooth => ExactSolution::nonsmooth(),
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::Smooth => "smooth",
            Case::Nonsmooth => "nonsmooth",
        })
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Case::Smooth),
            "nonsmooth" => Ok(Case::Nonsmooth),
            other => Err(Error::InvalidArgument(format!("unknown case {other:?}; expected smooth or nonsmooth"))),
        }
    }
}

/// Discretization and data parameters of one recovery run.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub case: Case,
    pub s: FractionalExponent,
    pub p: usize,
    pub n: u32,
    pub k: f64,
    /// Per-cell Gauss order of the measurement dual vectors.
    pub dual_order: usize,
    /// Per-cell Gauss order of the H1 error.
    pub quad_order: usize,
    /// Per-cell Gauss order of the exact data.
    pub omega_order: usize,
    pub radius: f64,
}

impl ExperimentConfig {
    pub fn new(case: Case, s: FractionalExponent, p: usize, n: u32) -> Self {
        Self {
            case,
            s,
            p,
            n,
            k: DEFAULT_SINC_STEP,
            dual_order: DEFAULT_DUAL_ORDER,
            quad_order: DEFAULT_QUAD_ORDER,
            omega_order: DEFAULT_OMEGA_ORDER,
            radius: DEFAULT_RADIUS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_LEVEL {
            return Err(Error::InvalidArgument(format!(
                "refinement level must lie in 1..={MAX_LEVEL}, got {}",
                self.n
            )));
        }
        if self.p == 0 {
            return Err(Error::InvalidArgument("grid parameter p must be at least 1".into()));
        }
        if !(self.k > 0.0) {
            return Err(Error::InvalidArgument(format!("sinc spacing must be positive, got {}", self.k)));
        }
        if self.dual_order == 0 || self.quad_order == 0 || self.omega_order == 0 {
            return Err(Error::InvalidArgument("quadrature orders must be positive".into()));
        }
        Ok(())
    }

    /// Space-separated `key=value` summary of every field.
    pub fn describe(&self) -> String {
        format!(
            "case={} s={} p={} n={} k={} dual_quad={} quad={} omega_quad={} radius={}",
            self.case, self.s, self.p, self.n, self.k, self.dual_order, self.quad_order, self.omega_order, self.radius
        )
    }
}

/// One recovery run.
#[derive(Clone, Debug)]
pub struct CaseRow {
    pub case: Case,
    pub s: f64,
    pub p: usize,
    pub m: usize,
    pub n: u32,
    pub cells: usize,
    pub dofs: usize,
    pub e_rel: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl CaseRow {
    const HEADER: [&'static str; 10] = ["case", "s", "p", "m", "n", "cells", "dofs", "e_rel", "sigma_min", "sigma_max"];

    fn record(&self) -> [String; 10] {
        [
            self.case.to_string(),
            self.s.to_string(),
            self.p.to_string(),
            self.m.to_string(),
            self.n.to_string(),
            self.cells.to_string(),
            self.dofs.to_string(),
            format!("{:.10e}", self.e_rel),
            format!("{:.6e}", self.sigma_min),
            format!("{:.6e}", self.sigma_max),
        ]
    }
}

/// Full output of [`run_recovery_case`].
#[derive(Clone, Debug)]
pub struct CaseOutput {
    pub row: CaseRow,
    pub discretization: Discretization,
    pub measurements: MeasurementSet,
    pub omega: Vec<f64>,
    pub result: RecoveryResult,
}

/// Recovery for several cases sharing mesh, exponent and measurements.
fn recover_cases(
    disc: &Discretization,
    set: &MeasurementSet,
    cfg: &ExperimentConfig,
    cases: &[Case],
) -> Result<Vec<(Vec<f64>, RecoveryResult)>> {
    let frac = FractionalSolver::new(&disc.boundary_ops, cfg.s, cfg.k)?;
    let duals: Vec<&[f64]> = set.duals.iter().map(|d| d.as_slice()).collect();
    let reps = riesz_representers(disc, &frac, &duals)?;
    let u_f = vec![0.0; disc.mesh.n_dofs()];
    cases
        .iter()
        .map(|&case| {
            let exact = case.exact();
            let omega = measure_exact(&disc.mesh, set, &exact, cfg.omega_order);
            let res = gram_and_recover(&reps, &duals, &omega, &u_f)?.with_error(&disc.mesh, &exact, cfg.quad_order)?;
            Ok((omega, res))
        })
        .collect()
}

fn row_for(case: Case, cfg: &ExperimentConfig, disc: &Discretization, m: usize, res: &RecoveryResult) -> CaseRow {
    CaseRow {
        case,
        s: cfg.s.value(),
        p: cfg.p,
        m,
        n: cfg.n,
        cells: disc.mesh.n_cells(),
        dofs: disc.mesh.n_dofs(),
        e_rel: res.relative_h1_error.unwrap_or(f64::NAN),
        sigma_min: res.sigma_min,
        sigma_max: res.sigma_max,
    }
}

/// End-to-end recovery of the built-in exact solution.
pub fn run_recovery_case(cfg: &ExperimentConfig) -> Result<CaseOutput> {
    cfg.validate()?;
    let disc = Discretization::new(cfg.n)?;
    let set = MeasurementSet::build(&disc.mesh, cfg.p, cfg.radius, cfg.dual_order)?;
    let (omega, result) = recover_cases(&disc, &set, cfg, &[cfg.case])?.remove(0);
    let row = row_for(cfg.case, cfg, &disc, set.len(), &result);
    Ok(CaseOutput { row, discretization: disc, measurements: set, omega, result })
}

/// Parameter grid of an error-table sweep, selected by id 2, 3 or 4.
#[derive(Clone, Debug)]
pub struct TableSpec {
    pub id: u32,
    pub cases: Vec<Case>,
    pub exponents: Vec<FractionalExponent>,
    pub grid_params: Vec<usize>,
    pub levels: Vec<u32>,
}

fn exps(list: &[&str]) -> Vec<FractionalExponent> {
    list.iter().map(|s| s.parse().expect("built-in exponent")).collect()
}

impl TableSpec {
    /// Grids 2 and 3 sweep `n = 2..=max_n`; grid 4 is fixed at `n = 6`.
    pub fn new(id: u32, max_n: u32) -> Result<Self> {
        if !(2..=MAX_LEVEL).contains(&max_n) {
            return Err(Error::InvalidArgument(format!("max level must lie in 2..={MAX_LEVEL}, got {max_n}")));
        }
        let levels: Vec<u32> = (2..=max_n).collect();
        let grid = vec![2, 4, 5, 7];
        match id {
            2 => Ok(Self { id, cases: vec![Case::Smooth], exponents: exps(&["1", "1.45"]), grid_params: grid, levels }),
            3 => Ok(Self {
                id,
                cases: vec![Case::Nonsmooth],
                exponents: exps(&["0.55", "7/6"]),
                grid_params: grid,
                levels,
            }),
            4 => Ok(Self {
                id,
                cases: vec![Case::Smooth, Case::Nonsmooth],
                exponents: exps(&[
                    "0.55", "0.66", "0.75", "1", "7/6", "1.25", "1.5", "1.75", "1.95", "2", "5", "10", "20",
                ]),
                grid_params: vec![2, 7],
                levels: vec![6],
            }),
            other => Err(Error::InvalidArgument(format!("unknown table {other}; expected 2, 3 or 4"))),
        }
    }
}

/// Runs every cell of a table. Rows are ordered by case, exponent, grid
/// parameter and level.
pub fn run_table(spec: &TableSpec, k: f64) -> Result<Vec<CaseRow>> {
    let mut rows = Vec::new();
    for &n in &spec.levels {
        let disc = Discretization::new(n)?;
        let sets: Vec<MeasurementSet> = spec
            .grid_params
            .iter()
            .map(|&p| MeasurementSet::build(&disc.mesh, p, DEFAULT_RADIUS, DEFAULT_DUAL_ORDER))
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, usize)> =
            (0..spec.exponents.len()).flat_map(|i| (0..sets.len()).map(move |j| (i, j))).collect();
        let results: Vec<Vec<CaseRow>> = jobs
            .par_iter()
            .map(|&(i, j)| {
                let mut cfg = ExperimentConfig::new(spec.cases[0], spec.exponents[i], spec.grid_params[j], n);
                cfg.k = k;
                let out = recover_cases(&disc, &sets[j], &cfg, &spec.cases)?;
                Ok(spec
                    .cases
                    .iter()
                    .zip(out)
                    .map(|(&c, (_, res))| row_for(c, &cfg, &disc, sets[j].len(), &res))
                    .collect())
            })
            .collect::<Result<_>>()?;
        rows.extend(results.into_iter().flatten());
    }
    let key = |r: &CaseRow| {
        (
            spec.cases.iter().position(|&c| c == r.case),
            spec.exponents.iter().position(|e| e.value() == r.s),
            spec.grid_params.iter().position(|&p| p == r.p),
            r.n,
        )
    };
    rows.sort_by_key(key);
    Ok(rows)
}

/// `# optrec <version> <description>` comment line.
pub fn comment_line(description: &str) -> String {
    format!("# optrec {} {}", env!("CARGO_PKG_VERSION"), description)
}

pub fn write_table_csv<W: Write>(mut out: W, description: &str, rows: &[CaseRow]) -> Result<()> {
    writeln!(out, "{}", comment_line(description))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CaseRow::HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_case_csv<W: Write>(out: W, cfg: &ExperimentConfig, row: &CaseRow) -> Result<()> {
    write_table_csv(out, &cfg.describe(), std::slice::from_ref(row))
}

/// Writes `node_id,x,y,value`.
pub fn write_field_csv<W: Write>(out: W, disc: &Discretization, values: &[f64]) -> Result<()> {
    crate::error::check_len(disc.mesh.n_dofs(), values.len())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node_id", "x", "y", "value"])?;
    for (i, ([x, y], v)) in disc.mesh.nodes().iter().zip(values).enumerate() {
        w.write_record([i.to_string(), x.to_string(), y.to_string(), format!("{v:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Parameters of a representer refinement study.
#[derive(Clone, Debug)]
pub struct ConvergenceConfig {
    pub center: [f64; 2],
    pub s: FractionalExponent,
    pub min_n: u32,
    pub max_n: u32,
    pub reference_level: u32,
    pub k: f64,
    pub dual_order: usize,
}

impl ConvergenceConfig {
    pub fn new(center: [f64; 2], s: FractionalExponent) -> Self {
        Self { center, s, min_n: 2, max_n: 6, reference_level: 8, k: DEFAULT_SINC_STEP, dual_order: DEFAULT_DUAL_ORDER }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_n == 0 || self.max_n <= self.min_n {
            return Err(Error::InvalidArgument("need 1 <= min_n < max_n".into()));
        }
        if self.reference_level < self.max_n + 2 {
            return Err(Error::InvalidArgument(format!(
                "reference level {} must be at least max_n + 2 = {}",
                self.reference_level,
                self.max_n + 2
            )));
        }
        if self.reference_level > MAX_LEVEL {
            return Err(Error::DimensionTooLarge { dim: self.reference_level as usize, cap: MAX_LEVEL as usize });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    /// `(n, h, ||phi_n - phi_ref||_{H1})`.
    pub rows: Vec<(u32, f64, f64)>,
    /// Least-squares slope of `log error` against `log h`.
    pub rate: f64,
}

fn representer_at(
    level: u32,
    cfg: &ConvergenceConfig,
    policy: &SolverPolicy,
) -> Result<(Discretization, PrimalVector)> {
    let disc = Discretization::with_policy(level, policy)?;
    let meas = GaussianMeasurement::new(cfg.center, DEFAULT_RADIUS)?;
    let nu = assemble_measurement_dual(&disc.mesh, &meas, cfg.dual_order);
    let frac = FractionalSolver::new(&disc.boundary_ops, cfg.s, cfg.k)?;
    let rep = riesz_representer(&disc, &frac, &nu)?;
    Ok((disc, rep.coefficients))
}

/// Representer errors against a fine reference, measured in the discrete H1
/// norm after exact transfer to the reference mesh.
pub fn run_riesz_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let policy = SolverPolicy::default();
    let (fine, reference) = representer_at(cfg.reference_level, cfg, &policy)?;
    let (k, m) = assemble_full_matrices(&fine.mesh)?;
    let rows = (cfg.min_n..=cfg.max_n)
        .into_par_iter()
        .map(|n| {
            let (disc, coarse) = representer_at(n, cfg, &policy)?;
            let lifted = prolongate(&disc.mesh, &coarse, &fine.mesh)?;
            let diff: Vec<f64> = lifted.iter().zip(reference.iter()).map(|(a, b)| a - b).collect();
            Ok((n, disc.mesh.mesh_size(), h1_norm(&k, &m, &diff)))
        })
        .collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.2.ln()).collect();
    Ok(ConvergenceStudy { rate: least_squares_slope(&lx, &ly), rows })
}

pub fn write_convergence_csv<W: Write>(mut out: W, cfg: &ConvergenceConfig, study: &ConvergenceStudy) -> Result<()> {
    writeln!(
        out,
        "{}",
        comment_line(&format!(
            "riesz-conv z={},{} s={} ref_level={} k={} dual_quad={}",
            cfg.center[0], cfg.center[1], cfg.s, cfg.reference_level, cfg.k, cfg.dual_order
        ))
    )?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["n", "h", "h1_error"])?;
    for (n, h, e) in &study.rows {
        w.write_record([n.to_string(), format!("{h:.10e}"), format!("{e:.10e}")])?;
    }
    w.flush()?;
    drop(w);
    writeln!(out, "# rate={:.6}", study.rate)?;
    Ok(())
}

/// Sinc-versus-oracle comparison for a fixed dual vector.
#[derive(Clone, Debug)]
pub struct OracleConfig {
    pub n: u32,
    pub s: FractionalExponent,
    pub ks: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct OracleStudy {
    /// `(k, relative M-norm error)`.
    pub rows: Vec<(f64, f64)>,
    /// `c` in `error ~ C exp(-c / k)`, fitted on errors above
    /// [`ORACLE_FIT_FLOOR`]; `None` with fewer than two such points.
    pub decay: Option<f64>,
}

/// Uniform random entries in `[-1, 1)` from a seeded generator.
pub fn random_dual(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Fitted `c` in `err ~ C exp(-c/k)` over points with `err > floor`.
pub fn fit_exponential_decay(rows: &[(f64, f64)], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 > floor).map(|&(k, e)| (1.0 / k, e.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    Some(-least_squares_slope(&x, &y))
}

pub fn run_oracle_check(cfg: &OracleConfig) -> Result<OracleStudy> {
    if cfg.ks.is_empty() || cfg.ks.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::InvalidArgument("k list must be nonempty and positive".into()));
    }
    let disc = Discretization::new(cfg.n)?;
    let ops = &disc.boundary_ops;
    let oracle = SpectralOracle::new(ops, DEFAULT_DENSE_CAP)?;
    let g = random_dual(ops.len(), cfg.seed);
    let reference = oracle.apply(cfg.s.value(), &g)?;
    let rows = cfg
        .ks
        .iter()
        .map(|&k| {
            let x = FractionalSolver::new(ops, cfg.s, k)?.apply(&g)?;
            Ok((k, relative_mass_error(ops, &x, &reference)))
        })
        .collect::<Result<Vec<_>>>()?;
    let decay = if cfg.s.frac() > 0.0 { fit_exponential_decay(&rows, ORACLE_FIT_FLOOR) } else { None };
    Ok(OracleStudy { rows, decay })
}

pub fn write_oracle_csv<W: Write>(mut out: W, cfg: &OracleConfig, study: &OracleStudy) -> Result<()> {
    writeln!(out, "{}", comment_line(&format!("oracle n={} s={} seed={}", cfg.n, cfg.s, cfg.seed)))?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["k", "sinc_vs_oracle_error"])?;
    for (k, e) in &study.rows {
        w.write_record([k.to_string(), format!("{e:.6e}")])?;
    }
    w.flush()?;
    drop(w);
    match study.decay {
        Some(c) => writeln!(out, "# decay={c:.6} decay_over_pi2={:.6}", c / (std::f64::consts::PI.powi(2)))?,
        None => writeln!(out, "# decay=none")?,
    }
    Ok(())
}
