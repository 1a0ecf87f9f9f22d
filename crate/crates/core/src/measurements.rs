//! Gaussian measurement functionals
//! `lambda(v; z) = (2 pi r^2)^{-1/2} int_Omega exp(-|x - z|^2 / 2r^2) v(x) dx`
//! on a uniform grid of centers.

use std::io::Write;

use rayon::prelude::*;

use crate::assembly::{for_each_quad_point, ExactSolution};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, DualVector};
use crate::mesh::{point_in_domain, QuadMesh};
use crate::quadrature::SquareRule;

/// Default Gaussian width.
pub const DEFAULT_RADIUS: f64 = 0.1;

/// Default per-cell Gauss order for measurement dual vectors.
pub const DEFAULT_DUAL_ORDER: usize = 2;

/// Default per-cell Gauss order for the exact data `omega`.
pub const DEFAULT_OMEGA_ORDER: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianMeasurement {
    pub center: [f64; 2],
    pub radius: f64,
}

impl GaussianMeasurement {
    pub fn new(center: [f64; 2], radius: f64) -> Result<Self> {
        if !point_in_domain(center[0], center[1]) {
            return Err(Error::InvalidArgument(format!("center {center:?} lies outside the domain")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// Weight of the functional at `(x, y)`.
    #[inline]
    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        let r2 = self.radius * self.radius;
        let d2 = (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2);
        (-d2 / (2.0 * r2)).exp() / (2.0 * std::f64::consts::PI * r2).sqrt()
    }
}

/// Grid centers `-1 + i * 2/(p+1)`, `i, j = 1..p`, that fall inside the
/// domain. Row-major with the x index outer.
pub fn generate_centers(p: usize) -> Result<Vec<[f64; 2]>> {
    if p == 0 {
        return Err(Error::InvalidArgument("grid parameter p must be at least 1".into()));
    }
    let denom = (p + 1) as f64;
    let coord = |i: usize| (2.0 * i as f64 - denom) / denom;
    let mut out = Vec::new();
    for i in 1..=p {
        for j in 1..=p {
            let (x, y) = (coord(i), coord(j));
            if point_in_domain(x, y) {
                out.push([x, y]);
            }
        }
    }
    Ok(out)
}

/// `nu_i = lambda(phi_i)` for every basis function.
pub fn assemble_measurement_dual(mesh: &QuadMesh, meas: &GaussianMeasurement, order: usize) -> DualVector {
    let mut nu = vec![0.0; mesh.n_dofs()];
    let rule = SquareRule::new(order);
    for_each_quad_point(mesh, &rule, |cell, phi, [x, y], w| {
        let kw = meas.kernel(x, y) * w;
        for (a, &g) in cell.iter().enumerate() {
            nu[g] += kw * phi[a];
        }
    });
    nu.into()
}

/// `lambda(v)` for a function given by its nodal coefficients.
pub fn apply_functional(dual: &[f64], v: &[f64]) -> Result<f64> {
    check_len(dual.len(), v.len())?;
    Ok(dot(dual, v))
}

/// `lambda(u)` for a continuous function, by per-cell quadrature.
pub fn measure_function(mesh: &QuadMesh, meas: &GaussianMeasurement, u: impl Fn(f64, f64) -> f64, order: usize) -> f64 {
    let mut total = 0.0;
    let rule = SquareRule::new(order);
    for_each_quad_point(mesh, &rule, |_, _, [x, y], w| {
        total += w * meas.kernel(x, y) * u(x, y);
    });
    total
}

/// Ordered measurements with their dual vectors on one mesh.
#[derive(Clone, Debug)]
pub struct MeasurementSet {
    pub p: usize,
    pub measurements: Vec<GaussianMeasurement>,
    pub duals: Vec<DualVector>,
}

impl MeasurementSet {
    pub fn build(mesh: &QuadMesh, p: usize, radius: f64, order: usize) -> Result<Self> {
        let measurements = generate_centers(p)?
            .into_iter()
            .map(|c| GaussianMeasurement::new(c, radius))
            .collect::<Result<Vec<_>>>()?;
        let duals = measurements.par_iter().map(|m| assemble_measurement_dual(mesh, m, order)).collect();
        Ok(Self { p, measurements, duals })
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// `(lambda^1(v), ..., lambda^m(v))` for nodal coefficients `v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.duals.iter().map(|d| apply_functional(d, v)).collect()
    }
}

/// `omega = lambda(u)` for an exact solution.
pub fn measure_exact(mesh: &QuadMesh, set: &MeasurementSet, exact: &ExactSolution, order: usize) -> Vec<f64> {
    set.measurements.par_iter().map(|m| measure_function(mesh, m, exact.value, order)).collect()
}

/// Writes `index,x,y,omega` rows.
pub fn write_measurements_csv<W: Write>(set: &MeasurementSet, omega: &[f64], out: W) -> Result<()> {
    check_len(set.len(), omega.len())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "x", "y", "omega"])?;
    for (i, (m, o)) in set.measurements.iter().zip(omega).enumerate() {
        w.write_record([i.to_string(), m.center[0].to_string(), m.center[1].to_string(), format!("{o:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}
