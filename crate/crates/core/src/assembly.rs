//! Finite element operators on the L-shape and on its boundary curve, plus
//! quadrature-based loads and H1 errors.

use std::f64::consts::PI;

use crate::error::{check_len, Result};
use crate::linalg::{DualVector, PrimalVector, SparseMatrix};
use crate::mesh::{BoundaryMesh, QuadMesh};
use crate::quadrature::SquareRule;

/// Q1 stiffness on any square, vertices counterclockwise from lower-left.
pub const Q1_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Q1 mass on the unit square; scale by `side^2`.
pub const Q1_MASS_UNIT: [[f64; 4]; 4] = [
    [4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0],
    [1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0],
];

/// Default tensor Gauss order for loads, duals and errors.
pub const DEFAULT_QUAD_ORDER: usize = 4;

/// Bilinear shape functions at reference point `(xi, eta)` in `[0,1]^2`.
#[inline]
pub fn q1_shape(xi: f64, eta: f64) -> [f64; 4] {
    [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta]
}

/// Reference gradients `(d/dxi, d/deta)` of the shape functions.
#[inline]
pub fn q1_shape_grad(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [[-(1.0 - eta), -(1.0 - xi)], [1.0 - eta, -xi], [eta, xi], [-eta, 1.0 - xi]]
}

/// Interior-interior and interior-boundary blocks of the volume stiffness.
#[derive(Clone, Debug)]
pub struct StiffnessBlocks {
    /// `N x N`, SPD.
    pub interior: SparseMatrix,
    /// `N x N_b`.
    pub coupling: SparseMatrix,
}

impl StiffnessBlocks {
    pub fn n_interior(&self) -> usize {
        self.interior.nrows()
    }

    pub fn n_boundary(&self) -> usize {
        self.coupling.ncols()
    }

    /// `K_N x_N + K_b x_b` for a full coefficient vector.
    pub fn interior_residual(&self, full: &[f64]) -> Vec<f64> {
        let n = self.n_interior();
        let mut r = self.interior.mul_vec(&full[..n]);
        for (ri, ci) in r.iter_mut().zip(self.coupling.mul_vec(&full[n..])) {
            *ri += ci;
        }
        r
    }
}

pub fn assemble_stiffness(mesh: &QuadMesh) -> Result<StiffnessBlocks> {
    let ni = mesh.n_interior();
    let nb = mesh.n_boundary();
    let mut kn = Vec::with_capacity(16 * mesh.n_cells());
    let mut kb = Vec::new();
    for cell in mesh.cells() {
        for (a, &ga) in cell.iter().enumerate() {
            if ga >= ni {
                continue;
            }
            for (b, &gb) in cell.iter().enumerate() {
                let v = Q1_STIFFNESS[a][b];
                if gb < ni {
                    kn.push((ga, gb, v));
                } else {
                    kb.push((ga, gb - ni, v));
                }
            }
        }
    }
    Ok(StiffnessBlocks {
        interior: SparseMatrix::from_triplets(ni, ni, &kn)?,
        coupling: SparseMatrix::from_triplets(ni, nb, &kb)?,
    })
}

/// Full `n_dofs x n_dofs` stiffness and mass matrices.
pub fn assemble_full_matrices(mesh: &QuadMesh) -> Result<(SparseMatrix, SparseMatrix)> {
    let n = mesh.n_dofs();
    let h2 = mesh.cell_side().powi(2);
    let mut k = Vec::with_capacity(16 * mesh.n_cells());
    let mut m = Vec::with_capacity(16 * mesh.n_cells());
    for cell in mesh.cells() {
        for a in 0..4 {
            for b in 0..4 {
                k.push((cell[a], cell[b], Q1_STIFFNESS[a][b]));
                m.push((cell[a], cell[b], h2 * Q1_MASS_UNIT[a][b]));
            }
        }
    }
    Ok((SparseMatrix::from_triplets(n, n, &k)?, SparseMatrix::from_triplets(n, n, &m)?))
}

/// Boundary mass `M` and Laplace-Beltrami stiffness `A` on the closed curve.
/// The discrete operator `L_h = I - Delta_Gamma` is the pencil `(M + A, M)`.
#[derive(Clone, Debug)]
pub struct BoundaryOperators {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
}

impl BoundaryOperators {
    pub fn len(&self) -> usize {
        self.mass.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `c M + A`.
    pub fn shifted(&self, c: f64) -> Result<SparseMatrix> {
        self.mass.linear_combination(c, &self.stiffness, 1.0)
    }

    /// `a M + b A`.
    pub fn combination(&self, a: f64, b: f64) -> Result<SparseMatrix> {
        self.mass.linear_combination(a, &self.stiffness, b)
    }

    /// `sqrt(x^T M x)`.
    pub fn mass_norm(&self, x: &[f64]) -> f64 {
        crate::linalg::dot(x, &self.mass.mul_vec(x)).sqrt()
    }
}

pub fn assemble_boundary_operators(bmesh: &BoundaryMesh) -> Result<BoundaryOperators> {
    let n = bmesh.len();
    let mut m = Vec::with_capacity(4 * n);
    let mut a = Vec::with_capacity(4 * n);
    for (e, &len) in bmesh.edge_lengths().iter().enumerate() {
        let (i, j) = (e, (e + 1) % n);
        for (p, q, mw, aw) in [(i, i, 2.0, 1.0), (i, j, 1.0, -1.0), (j, i, 1.0, -1.0), (j, j, 2.0, 1.0)] {
            m.push((p, q, len / 6.0 * mw));
            a.push((p, q, aw / len));
        }
    }
    Ok(BoundaryOperators {
        mass: SparseMatrix::from_triplets(n, n, &m)?,
        stiffness: SparseMatrix::from_triplets(n, n, &a)?,
    })
}

/// A harmonic function on the L-shape with known value and gradient.
#[derive(Clone, Copy, Debug)]
pub struct ExactSolution {
    pub name: &'static str,
    pub value: fn(f64, f64) -> f64,
    pub gradient: fn(f64, f64) -> [f64; 2],
    /// `||u||_{H1(Omega)}` from a closed form or a high-accuracy integral.
    pub h1_norm_reference: f64,
}

fn smooth_value(x: f64, y: f64) -> f64 {
    x.exp() * y.cos()
}

fn smooth_gradient(x: f64, y: f64) -> [f64; 2] {
    let ex = x.exp();
    [ex * y.cos(), -ex * y.sin()]
}

/// Polar angle in `[0, 2 pi)`.
fn angle(x: f64, y: f64) -> f64 {
    let t = y.atan2(x);
    if t < 0.0 {
        t + 2.0 * PI
    } else {
        t
    }
}

fn corner_value(x: f64, y: f64) -> f64 {
    let r = x.hypot(y);
    if r == 0.0 {
        return 0.0;
    }
    r.powf(2.0 / 3.0) * (2.0 * angle(x, y) / 3.0).sin()
}

fn corner_gradient(x: f64, y: f64) -> [f64; 2] {
    let r = x.hypot(y);
    if r == 0.0 {
        return [f64::INFINITY, f64::INFINITY];
    }
    let t = angle(x, y) / 3.0;
    let c = 2.0 / 3.0 * r.powf(-1.0 / 3.0);
    [-c * t.sin(), c * t.cos()]
}

/// `||e^x cos y||_{H1}^2` on the L-shape, integrated in closed form over the
/// three unit squares.
fn smooth_h1_norm() -> f64 {
    let e2 = 1.0_f64.exp().powi(2);
    let s2 = 2.0_f64.sin();
    // |grad u|^2 = e^{2x}; u^2 = e^{2x} cos^2 y.
    let ex_neg = (1.0 - 1.0 / e2) / 2.0; // int_{-1}^0 e^{2x}
    let ex_pos = (e2 - 1.0) / 2.0; // int_0^1 e^{2x}
    let cos2_full = 0.5 * (1.0 + s2 / 2.0); // int_0^1 cos^2 = int_{-1}^0 cos^2
    let grad = ex_neg * 2.0 + ex_pos;
    let val = ex_neg * 2.0 * cos2_full + ex_pos * cos2_full;
    (grad + val).sqrt()
}

/// `||u_2||_{H1}` in polar coordinates: the region is star-shaped about the
/// corner with radius `1 / max(|cos|, |sin|)`, so the radial integrals are
/// closed-form and only the angle is integrated numerically.
fn corner_h1_norm() -> f64 {
    let gl = crate::quadrature::GaussLegendre::new(40);
    let radius = |t: f64| 1.0 / t.cos().abs().max(t.sin().abs());
    let mut total = 0.0;
    for piece in 0..6 {
        let a = piece as f64 * PI / 4.0;
        total += gl.integrate(a, a + PI / 4.0, |t| {
            let r = radius(t);
            // |grad u|^2 = (4/9) r^{-2/3}, times r dr.
            let grad = 4.0 / 9.0 * 0.75 * r.powf(4.0 / 3.0);
            let val = 0.3 * r.powf(10.0 / 3.0) * (2.0 * t / 3.0).sin().powi(2);
            grad + val
        });
    }
    total.sqrt()
}

impl ExactSolution {
    /// `u(x, y) = e^x cos y`.
    pub fn smooth() -> Self {
        Self { name: "smooth", value: smooth_value, gradient: smooth_gradient, h1_norm_reference: smooth_h1_norm() }
    }

    /// `u(r, theta) = r^{2/3} sin(2 theta / 3)`, singular at the reentrant corner.
    pub fn nonsmooth() -> Self {
        Self { name: "nonsmooth", value: corner_value, gradient: corner_gradient, h1_norm_reference: corner_h1_norm() }
    }
}

/// Calls `f(cell, vertices, shape values, physical point, weight)` at every
/// quadrature point of the mesh.
pub(crate) fn for_each_quad_point(
    mesh: &QuadMesh,
    rule: &SquareRule,
    mut f: impl FnMut(&[usize; 4], [f64; 4], [f64; 2], f64),
) {
    let side = mesh.cell_side();
    let area = side * side;
    for (c, cell) in mesh.cells().iter().enumerate() {
        let [x0, y0] = mesh.cell_origin(c);
        for &(xi, eta, w) in rule.points() {
            f(cell, q1_shape(xi, eta), [x0 + side * xi, y0 + side * eta], w * area);
        }
    }
}

/// `int_Omega f phi_i` for the interior basis functions.
pub fn assemble_interior_load(mesh: &QuadMesh, f: impl Fn(f64, f64) -> f64, order: usize) -> DualVector {
    let ni = mesh.n_interior();
    let mut load = vec![0.0; ni];
    let rule = SquareRule::new(order);
    for_each_quad_point(mesh, &rule, |cell, phi, [x, y], w| {
        let fw = f(x, y) * w;
        for (a, &g) in cell.iter().enumerate() {
            if g < ni {
                load[g] += fw * phi[a];
            }
        }
    });
    load.into()
}

/// `int_Omega f phi_i` for every basis function.
pub fn assemble_full_load(mesh: &QuadMesh, f: impl Fn(f64, f64) -> f64, order: usize) -> DualVector {
    let mut load = vec![0.0; mesh.n_dofs()];
    let rule = SquareRule::new(order);
    for_each_quad_point(mesh, &rule, |cell, phi, [x, y], w| {
        let fw = f(x, y) * w;
        for (a, &g) in cell.iter().enumerate() {
            load[g] += fw * phi[a];
        }
    });
    load.into()
}

/// Returns `(||u - u_h||_{H1}, ||u||_{H1})`, both by per-cell tensor Gauss.
pub fn h1_error(mesh: &QuadMesh, u_h: &[f64], exact: &ExactSolution, order: usize) -> Result<(f64, f64)> {
    check_len(mesh.n_dofs(), u_h.len())?;
    let rule = SquareRule::new(order);
    let side = mesh.cell_side();
    let area = side * side;
    let mut err2 = 0.0;
    let mut norm2 = 0.0;
    for (c, cell) in mesh.cells().iter().enumerate() {
        let [x0, y0] = mesh.cell_origin(c);
        let coef = cell.map(|g| u_h[g]);
        for &(xi, eta, w) in rule.points() {
            let phi = q1_shape(xi, eta);
            let dphi = q1_shape_grad(xi, eta);
            let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for a in 0..4 {
                v += coef[a] * phi[a];
                gx += coef[a] * dphi[a][0];
                gy += coef[a] * dphi[a][1];
            }
            gx /= side;
            gy /= side;
            let (x, y) = (x0 + side * xi, y0 + side * eta);
            let u = (exact.value)(x, y);
            let [ux, uy] = (exact.gradient)(x, y);
            let wa = w * area;
            err2 += wa * ((u - v).powi(2) + (ux - gx).powi(2) + (uy - gy).powi(2));
            norm2 += wa * (u * u + ux * ux + uy * uy);
        }
    }
    Ok((err2.sqrt(), norm2.sqrt()))
}

/// Nodal interpolant.
pub fn interpolate(mesh: &QuadMesh, f: impl Fn(f64, f64) -> f64) -> PrimalVector {
    mesh.nodes().iter().map(|&[x, y]| f(x, y)).collect::<Vec<_>>().into()
}

/// Discrete H1 norm `sqrt(v^T (K + M) v)`.
pub fn h1_norm(stiffness: &SparseMatrix, mass: &SparseMatrix, v: &[f64]) -> f64 {
    let kv = stiffness.mul_vec(v);
    let mv = mass.mul_vec(v);
    v.iter().zip(kv.iter().zip(&mv)).map(|(x, (a, b))| x * (a + b)).sum::<f64>().sqrt()
}

/// Transfers a coarse Q1 function to a finer nested mesh. Exact because the
/// coarse space is contained in the fine one.
pub fn prolongate(coarse: &QuadMesh, coeffs: &[f64], fine: &QuadMesh) -> Result<PrimalVector> {
    check_len(coarse.n_dofs(), coeffs.len())?;
    fine.nodes()
        .iter()
        .map(|&[x, y]| {
            coarse.evaluate(coeffs, x, y).ok_or_else(|| {
                crate::error::Error::MalformedMesh(format!("fine node ({x}, {y}) outside the coarse mesh"))
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(PrimalVector::from)
}
