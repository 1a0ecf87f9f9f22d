//! Riesz representers of the measurement functionals and the recovery
//! `u_hat = sum_i U_i phi_i + u_f` from measured data.
//!
//! A representer is discretely harmonic. Its boundary trace `psi` solves
//! `L_h^s psi = mu`, where `mu` is the functional composed with the discrete
//! harmonic extension. `mu` is obtained without building the extension
//! column by column:
//! 1. `K_N xi = nu_N`
//! 2. `mu = nu_b - K_b^T xi`
//! 3. `psi = L_h^{-s} mu`
//! 4. `K_N phi_N = -K_b psi`

use faer::Mat;

use crate::assembly::{
    assemble_boundary_operators, assemble_interior_load, assemble_stiffness, h1_error, BoundaryOperators,
    ExactSolution, StiffnessBlocks,
};
use crate::error::{check_len, Error, Result};
use crate::fractional::FractionalSolver;
use crate::linalg::{
    dot, factor_spd_with, norm2, pinv_solve_with_rtol, PrimalVector, SolverPolicy, SpdFactorization, PINV_RTOL,
};
use crate::mesh::{build_lshape_mesh, extract_boundary, BoundaryMesh, QuadMesh};

/// Everything that depends only on the mesh level.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: QuadMesh,
    pub boundary: BoundaryMesh,
    pub stiffness: StiffnessBlocks,
    pub boundary_ops: BoundaryOperators,
    interior_solver: SpdFactorization,
}

impl Discretization {
    pub fn new(level: u32) -> Result<Self> {
        Self::with_policy(level, &SolverPolicy::default())
    }

    pub fn with_policy(level: u32, policy: &SolverPolicy) -> Result<Self> {
        let mesh = build_lshape_mesh(level)?;
        let boundary = extract_boundary(&mesh)?;
        let ni = mesh.n_interior();
        if boundary.boundary_dofs().iter().enumerate().any(|(i, &d)| d != ni + i) {
            return Err(Error::MalformedMesh("boundary dofs are not numbered along the boundary cycle".into()));
        }
        let stiffness = assemble_stiffness(&mesh)?;
        let boundary_ops = assemble_boundary_operators(&boundary)?;
        let interior_solver = factor_spd_with(&stiffness.interior, policy)?;
        Ok(Self { mesh, boundary, stiffness, boundary_ops, interior_solver })
    }

    pub fn level(&self) -> u32 {
        self.mesh.level()
    }

    pub fn interior_solver(&self) -> &SpdFactorization {
        &self.interior_solver
    }
}

/// `xi` with `K_N xi = nu_N`, for each dual vector.
pub fn solve_lagrange_multiplier(disc: &Discretization, nus: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    let ni = disc.mesh.n_interior();
    for nu in nus {
        check_len(disc.mesh.n_dofs(), nu.len())?;
    }
    let interior: Vec<&[f64]> = nus.iter().map(|nu| &nu[..ni]).collect();
    disc.interior_solver.solve_many(&interior)
}

/// `nu_b - K_b^T xi`, the functional composed with the harmonic extension.
pub fn boundary_rhs(k: &StiffnessBlocks, nu: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
    let ni = k.n_interior();
    check_len(ni + k.n_boundary(), nu.len())?;
    check_len(ni, xi.len())?;
    let kx = k.coupling.tr_mul_vec(xi);
    Ok(nu[ni..].iter().zip(kx).map(|(a, b)| a - b).collect())
}

/// Full coefficient vectors equal to each trace on the boundary and
/// discretely harmonic inside.
pub fn discrete_harmonic_extension(disc: &Discretization, traces: &[&[f64]]) -> Result<Vec<PrimalVector>> {
    let k = &disc.stiffness;
    let rhs: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| {
            check_len(k.n_boundary(), t.len())?;
            Ok(k.coupling.mul_vec(t).into_iter().map(|v| -v).collect())
        })
        .collect::<Result<_>>()?;
    let slices: Vec<&[f64]> = rhs.iter().map(|r| r.as_slice()).collect();
    let interior = disc.interior_solver.solve_many(&slices)?;
    Ok(interior
        .into_iter()
        .zip(traces)
        .map(|(mut v, t)| {
            v.extend_from_slice(t);
            PrimalVector::from(v)
        })
        .collect())
}

/// `||K_N v_N + K_b v_b|| / ||K_b v_b||`; zero when the trace is zero and the
/// residual vanishes.
pub fn harmonicity_residual(k: &StiffnessBlocks, full: &[f64]) -> f64 {
    let ni = k.n_interior();
    let r = norm2(&k.interior_residual(full));
    let scale = norm2(&k.coupling.mul_vec(&full[ni..]));
    if scale == 0.0 {
        r
    } else {
        r / scale
    }
}

#[derive(Clone, Debug)]
pub struct RieszRepresenter {
    pub measurement_index: usize,
    /// Values at all dofs, interior first.
    pub coefficients: PrimalVector,
    pub boundary_trace: PrimalVector,
}

/// Representers of every dual vector, sharing all factorizations.
pub fn riesz_representers(
    disc: &Discretization,
    frac: &FractionalSolver,
    nus: &[&[f64]],
) -> Result<Vec<RieszRepresenter>> {
    let xis = solve_lagrange_multiplier(disc, nus)?;
    let mus: Vec<Vec<f64>> =
        nus.iter().zip(&xis).map(|(nu, xi)| boundary_rhs(&disc.stiffness, nu, xi)).collect::<Result<_>>()?;
    let mu_slices: Vec<&[f64]> = mus.iter().map(|m| m.as_slice()).collect();
    let traces = frac.apply_many(&mu_slices)?;
    let trace_slices: Vec<&[f64]> = traces.iter().map(|t| t.as_slice()).collect();
    let full = discrete_harmonic_extension(disc, &trace_slices)?;
    Ok(full
        .into_iter()
        .zip(traces)
        .enumerate()
        .map(|(i, (coefficients, trace))| RieszRepresenter {
            measurement_index: i,
            coefficients,
            boundary_trace: trace.into(),
        })
        .collect())
}

pub fn riesz_representer(disc: &Discretization, frac: &FractionalSolver, nu: &[f64]) -> Result<RieszRepresenter> {
    Ok(riesz_representers(disc, frac, &[nu])?.remove(0))
}

/// Homogeneous Dirichlet solve of `-Delta u = f`.
pub fn solve_forcing(disc: &Discretization, f: impl Fn(f64, f64) -> f64, order: usize) -> Result<PrimalVector> {
    let load = assemble_interior_load(&disc.mesh, f, order);
    let mut u = disc.interior_solver.solve(&load)?;
    u.resize(disc.mesh.n_dofs(), 0.0);
    Ok(u.into())
}

#[derive(Clone, Debug)]
pub struct RecoveryResult {
    /// `g_ij = lambda^i(phi_j)`.
    pub gram: Mat<f64>,
    pub coefficients: Vec<f64>,
    pub u_hat: PrimalVector,
    /// Eigenvalues of the symmetrized Gram matrix, ascending.
    pub gram_eigenvalues: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rank: usize,
    pub relative_h1_error: Option<f64>,
}

impl RecoveryResult {
    /// `max |g_ij - g_ji| / max |g_ij|`.
    pub fn gram_asymmetry(&self) -> f64 {
        let g = &self.gram;
        let m = g.nrows();
        let mut diff = 0.0_f64;
        let mut scale = 0.0_f64;
        for i in 0..m {
            for j in 0..m {
                diff = diff.max((g[(i, j)] - g[(j, i)]).abs());
                scale = scale.max(g[(i, j)].abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    /// Fills in the relative H1 error against an exact solution.
    pub fn with_error(mut self, mesh: &QuadMesh, exact: &ExactSolution, order: usize) -> Result<Self> {
        let (e, norm) = h1_error(mesh, &self.u_hat, exact, order)?;
        self.relative_h1_error = Some(e / norm);
        Ok(self)
    }
}

/// Solves `G U = omega - lambda(u_f)` by pseudo-inverse and assembles
/// `u_hat = sum_i U_i phi_i + u_f`.
pub fn gram_and_recover(
    representers: &[RieszRepresenter],
    duals: &[&[f64]],
    omega: &[f64],
    u_f: &[f64],
) -> Result<RecoveryResult> {
    gram_and_recover_with(representers, duals, omega, u_f, PINV_RTOL)
}

/// [`gram_and_recover`] with an explicit pseudo-inverse cutoff relative to
/// the largest singular value.
pub fn gram_and_recover_with(
    representers: &[RieszRepresenter],
    duals: &[&[f64]],
    omega: &[f64],
    u_f: &[f64],
    rtol: f64,
) -> Result<RecoveryResult> {
    let m = representers.len();
    if m == 0 {
        return Err(Error::InvalidArgument("at least one measurement is required".into()));
    }
    check_len(m, duals.len())?;
    check_len(m, omega.len())?;
    let n = u_f.len();
    for (d, r) in duals.iter().zip(representers) {
        check_len(n, d.len())?;
        check_len(n, r.coefficients.len())?;
    }
    let gram = Mat::from_fn(m, m, |i, j| dot(duals[i], &representers[j].coefficients));
    let omega_hat: Vec<f64> = omega.iter().zip(duals).map(|(w, d)| w - dot(d, u_f)).collect();
    let pinv = pinv_solve_with_rtol(gram.as_ref(), &omega_hat, rtol)?;
    let mut u_hat = u_f.to_vec();
    for (c, r) in pinv.solution.iter().zip(representers) {
        for (u, p) in u_hat.iter_mut().zip(r.coefficients.iter()) {
            *u += c * p;
        }
    }
    Ok(RecoveryResult {
        sigma_min: pinv.singular_values.last().copied().unwrap_or(0.0),
        sigma_max: pinv.singular_values.first().copied().unwrap_or(0.0),
        rank: pinv.rank,
        gram_eigenvalues: pinv.eigenvalues,
        coefficients: pinv.solution,
        u_hat: u_hat.into(),
        gram,
        relative_h1_error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_full_matrices, h1_norm};
    use crate::fractional::{FractionalExponent, DEFAULT_SINC_STEP};
    use crate::linalg::relative_residual;
    use crate::measurements::{assemble_measurement_dual, GaussianMeasurement, MeasurementSet, DEFAULT_RADIUS};

    fn solver(disc: &Discretization, s: f64) -> FractionalSolver {
        FractionalSolver::new(&disc.boundary_ops, FractionalExponent::new(s).unwrap(), DEFAULT_SINC_STEP).unwrap()
    }

    fn dual(disc: &Discretization, z: [f64; 2]) -> Vec<f64> {
        assemble_measurement_dual(&disc.mesh, &GaussianMeasurement::new(z, DEFAULT_RADIUS).unwrap(), 4).into_inner()
    }

    #[test]
    fn multiplier_basics() {
        let disc = Discretization::new(3).unwrap();
        let zero = vec![0.0; disc.mesh.n_dofs()];
        assert!(solve_lagrange_multiplier(&disc, &[&zero]).unwrap()[0].iter().all(|&v| v == 0.0));
        let nu = dual(&disc, [-0.5, 0.5]);
        let xi = &solve_lagrange_multiplier(&disc, &[&nu]).unwrap()[0];
        let ni = disc.mesh.n_interior();
        assert!(relative_residual(&disc.stiffness.interior, xi, &nu[..ni]) <= 1e-10);
        let again = &solve_lagrange_multiplier(&disc, &[&nu]).unwrap()[0];
        assert_eq!(xi, again);
    }

    #[test]
    fn boundary_rhs_of_boundary_supported_dual() {
        let disc = Discretization::new(2).unwrap();
        let ni = disc.mesh.n_interior();
        let mut nu = vec![0.0; disc.mesh.n_dofs()];
        for (i, v) in nu[ni..].iter_mut().enumerate() {
            *v = i as f64 + 0.5;
        }
        let xi = vec![0.0; ni];
        assert_eq!(boundary_rhs(&disc.stiffness, &nu, &xi).unwrap(), nu[ni..].to_vec());
    }

    #[test]
    fn boundary_rhs_equals_functional_of_extension() {
        let disc = Discretization::new(2).unwrap();
        let nu = dual(&disc, [-0.25, 0.25]);
        let xi = &solve_lagrange_multiplier(&disc, &[&nu]).unwrap()[0];
        let mu = boundary_rhs(&disc.stiffness, &nu, xi).unwrap();
        let nb = disc.mesh.n_boundary();
        for i in 0..nb {
            let mut e = vec![0.0; nb];
            e[i] = 1.0;
            let ext = &discrete_harmonic_extension(&disc, &[&e]).unwrap()[0];
            let direct = dot(&nu, ext);
            assert!((direct - mu[i]).abs() < 1e-13 * (1.0 + direct.abs()), "{i}: {direct} vs {}", mu[i]);
        }
    }

    #[test]
    fn extension_of_constant_is_constant() {
        let disc = Discretization::new(3).unwrap();
        let ones = vec![1.0; disc.mesh.n_boundary()];
        let ext = &discrete_harmonic_extension(&disc, &[&ones]).unwrap()[0];
        assert!(ext.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn extension_minimizes_energy() {
        let disc = Discretization::new(3).unwrap();
        let (k, _) = assemble_full_matrices(&disc.mesh).unwrap();
        let nb = disc.mesh.n_boundary();
        let trace: Vec<f64> = (0..nb).map(|i| (i as f64 * 0.3).cos()).collect();
        let ext = discrete_harmonic_extension(&disc, &[&trace]).unwrap().remove(0);
        let energy = |v: &[f64]| dot(v, &k.mul_vec(v));
        let e0 = energy(&ext);
        let ni = disc.mesh.n_interior();
        for seed in 0..10 {
            let mut lift = ext.clone().into_inner();
            for (i, v) in lift[..ni].iter_mut().enumerate() {
                *v += 0.1 * (((i + 1) * (seed + 2)) as f64).sin();
            }
            assert!(energy(&lift) >= e0);
        }
        // Linearity.
        let doubled: Vec<f64> = trace.iter().map(|t| 2.0 * t).collect();
        let ext2 = &discrete_harmonic_extension(&disc, &[&doubled]).unwrap()[0];
        assert!(ext2.iter().zip(ext.iter()).all(|(a, b)| (a - 2.0 * b).abs() < 1e-12));
    }

    #[test]
    fn representer_properties() {
        let disc = Discretization::new(3).unwrap();
        let frac = solver(&disc, 0.75);
        let nu = dual(&disc, [-0.5, 0.5]);
        let r = riesz_representer(&disc, &frac, &nu).unwrap();
        assert!(harmonicity_residual(&disc.stiffness, &r.coefficients) <= 1e-9);
        let scaled: Vec<f64> = nu.iter().map(|v| 3.0 * v).collect();
        let r3 = riesz_representer(&disc, &frac, &scaled).unwrap();
        let h = norm2(&r.coefficients);
        assert!(r3.coefficients.iter().zip(r.coefficients.iter()).all(|(a, b)| (a - 3.0 * b).abs() < 1e-11 * h));
    }

    #[test]
    fn unit_exponent_trace_solves_shifted_system() {
        let disc = Discretization::new(2).unwrap();
        let frac = solver(&disc, 1.0);
        let nu = dual(&disc, [-0.5, -0.5]);
        let r = riesz_representer(&disc, &frac, &nu).unwrap();
        // Saddle formulation: build the extension matrix explicitly and solve
        // (M + A) psi = E^T nu.
        let nb = disc.mesh.n_boundary();
        let mu: Vec<f64> = (0..nb)
            .map(|i| {
                let mut e = vec![0.0; nb];
                e[i] = 1.0;
                dot(&nu, &discrete_harmonic_extension(&disc, &[&e]).unwrap()[0])
            })
            .collect();
        let psi = crate::fractional::plain_inverse(&disc.boundary_ops, &mu).unwrap();
        let scale = norm2(&psi);
        assert!(psi.iter().zip(r.boundary_trace.iter()).all(|(a, b)| (a - b).abs() < 1e-12 * scale));
    }

    #[test]
    fn single_measurement_recovery() {
        let disc = Discretization::new(2).unwrap();
        let frac = solver(&disc, 1.0);
        let nu = dual(&disc, [-0.5, 0.5]);
        let r = riesz_representer(&disc, &frac, &nu).unwrap();
        let g11 = dot(&nu, &r.coefficients);
        let u_f = vec![0.0; disc.mesh.n_dofs()];
        let res = gram_and_recover(std::slice::from_ref(&r), &[&nu], &[g11], &u_f).unwrap();
        assert!((res.coefficients[0] - 1.0).abs() < 1e-12);
        assert!(res.u_hat.iter().zip(r.coefficients.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn recovery_reproduces_measurements() {
        let disc = Discretization::new(4).unwrap();
        let set = MeasurementSet::build(&disc.mesh, 2, DEFAULT_RADIUS, 4).unwrap();
        let duals: Vec<&[f64]> = set.duals.iter().map(|d| d.as_slice()).collect();
        let reps = riesz_representers(&disc, &solver(&disc, 1.0), &duals).unwrap();
        let omega = [0.3, -0.2, 0.5];
        let u_f = vec![0.0; disc.mesh.n_dofs()];
        let res = gram_and_recover(&reps, &duals, &omega, &u_f).unwrap();
        assert!(res.gram_asymmetry() <= 1e-10);
        assert!(res.gram_eigenvalues[0] >= -1e-10 * res.sigma_max);
        assert!(res.sigma_min > crate::linalg::PINV_RTOL * res.sigma_max);
        let back = set.apply(&res.u_hat).unwrap();
        for (b, w) in back.iter().zip(&omega) {
            assert!(((b - w) / w).abs() < 1e-8);
        }
        assert!(harmonicity_residual(&disc.stiffness, &res.u_hat) <= 1e-9);
    }

    #[test]
    fn forcing_solution() {
        let disc = Discretization::new(3).unwrap();
        assert!(solve_forcing(&disc, |_, _| 0.0, 4).unwrap().iter().all(|&v| v == 0.0));
        let u = solve_forcing(&disc, |_, _| 1.0, 4).unwrap();
        let ni = disc.mesh.n_interior();
        assert!(u[..ni].iter().all(|&v| v > 0.0));
        assert!(u[ni..].iter().all(|&v| v == 0.0));
        let u2 = solve_forcing(&disc, |_, _| 2.0, 4).unwrap();
        assert!(u.iter().zip(u2.iter()).all(|(a, b)| (2.0 * a - b).abs() < 1e-14));
        let (k, m) = assemble_full_matrices(&disc.mesh).unwrap();
        assert!(h1_norm(&k, &m, &u) > 0.0);
    }

    #[test]
    fn forcing_shifts_recovery_data() {
        let disc = Discretization::new(3).unwrap();
        let set = MeasurementSet::build(&disc.mesh, 2, DEFAULT_RADIUS, 4).unwrap();
        let duals: Vec<&[f64]> = set.duals.iter().map(|d| d.as_slice()).collect();
        let reps = riesz_representers(&disc, &solver(&disc, 1.0), &duals).unwrap();
        let u_f = solve_forcing(&disc, |x, y| 1.0 + x * y, 4).unwrap();
        let omega = [0.1, 0.2, 0.3];
        let res = gram_and_recover(&reps, &duals, &omega, &u_f).unwrap();
        let back = set.apply(&res.u_hat).unwrap();
        for (b, w) in back.iter().zip(&omega) {
            assert!((b - w).abs() < 1e-8 * w.abs());
        }
    }
}
