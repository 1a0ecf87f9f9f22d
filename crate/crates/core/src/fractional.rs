//! Negative fractional powers of the boundary operator `L_h = I - Delta_Gamma`,
//! represented by the pencil `(M + A, M)`.
//!
//! For `0 < s < 1` the sinc discretization of the Balakrishnan integral is
//! used:
//!
//! ```text
//! L_h^{-s} g  ~  (k sin(pi s) / pi) * sum_{l=-M}^{N} e^{(1-s) y_l} ((e^{y_l} + 1) M + A)^{-1} g,   y_l = l k
//! ```
//!
//! Larger exponents `s = l + s_bar` first apply `l` plain solves with `M + A`
//! and finish with the sinc stage for `s_bar`. Inputs `g` are dual vectors,
//! outputs are coefficient vectors.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use faer::Mat;
use rayon::prelude::*;

use crate::assembly::BoundaryOperators;
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, eig_sym_dense, factor_spd, GeneralizedEigen, SpdFactorization, SymbolicCholesky};

/// Default sinc spacing.
pub const DEFAULT_SINC_STEP: f64 = 0.25;

/// Fractional parts below this are treated as zero.
const FRACTION_EPS: f64 = 1e-12;

/// Upper bound on sinc nodes per application.
pub const MAX_SINC_NODES: usize = 2_000_000;

/// Consecutive sinc nodes summed together before the chunk totals are added.
const SINC_CHUNK: usize = 32;

/// Exponent `s > 0` split as `whole + frac`, `frac` in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractionalExponent {
    s: f64,
    whole: u32,
    frac: f64,
}

impl FractionalExponent {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) || s > u32::MAX as f64 {
            return Err(Error::InvalidArgument(format!("exponent must be positive and finite, got {s}")));
        }
        let mut whole = s.floor();
        let mut frac = s - whole;
        if frac < FRACTION_EPS {
            frac = 0.0;
        } else if 1.0 - frac < FRACTION_EPS {
            whole += 1.0;
            frac = 0.0;
        }
        Ok(Self { s, whole: whole as u32, frac })
    }

    pub fn value(&self) -> f64 {
        self.s
    }

    pub fn whole(&self) -> u32 {
        self.whole
    }

    pub fn frac(&self) -> f64 {
        self.frac
    }
}

impl fmt::Display for FractionalExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.s)
    }
}

/// Accepts decimals (`1.45`) and ratios (`7/6`).
impl FromStr for FractionalExponent {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse exponent {text:?}"));
        let t = text.trim();
        let s = match t.split_once('/') {
            Some((a, b)) => {
                let a: f64 = a.trim().parse().map_err(|_| bad())?;
                let b: f64 = b.trim().parse().map_err(|_| bad())?;
                a / b
            }
            None => t.parse().map_err(|_| bad())?,
        };
        Self::new(s)
    }
}

/// Sinc nodes `y_l = l k`, `l = -m..=n`, for the exponent `s_bar` in `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SincScheme {
    pub k: f64,
    pub s_bar: f64,
    pub m: usize,
    pub n: usize,
}

/// `M = ceil(pi^2 / ((1 - s) k^2))`; `N = ceil(pi^2 / ((s - 1/2) k^2))` for
/// `s > 1/2`, else `ceil(pi^2 / (s k^2))`.
pub fn sinc_parameters(k: f64, s_bar: f64) -> Result<SincScheme> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!("sinc spacing must be positive, got {k}")));
    }
    if !(s_bar > 0.0 && s_bar < 1.0) {
        return Err(Error::InvalidArgument(format!("sinc exponent must lie in (0, 1), got {s_bar}")));
    }
    let pi2 = PI * PI;
    let m = (pi2 / ((1.0 - s_bar) * k * k)).ceil();
    let n = if s_bar > 0.5 { pi2 / ((s_bar - 0.5) * k * k) } else { pi2 / (s_bar * k * k) }.ceil();
    if m + n + 1.0 > MAX_SINC_NODES as f64 {
        return Err(Error::DimensionTooLarge {
            dim: (m + n + 1.0).min(usize::MAX as f64) as usize,
            cap: MAX_SINC_NODES,
        });
    }
    Ok(SincScheme { k, s_bar, m: m as usize, n: n as usize })
}

impl SincScheme {
    pub fn node_count(&self) -> usize {
        self.m + self.n + 1
    }

    pub fn prefactor(&self) -> f64 {
        self.k * (PI * self.s_bar).sin() / PI
    }

    /// `y_l` for the `i`-th node in ascending order.
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 - self.m as f64) * self.k
    }

    /// Matrix coefficients `(a, b)` and weight `w` of node `y` such that the
    /// node contributes `w (a M + b A)^{-1} g`. Positive `y` is rescaled by
    /// `e^{-y}` so no exponential overflows.
    fn node_system(&self, y: f64) -> (f64, f64, f64) {
        if y > 0.0 {
            let e = (-y).exp();
            (1.0 + e, e, (-self.s_bar * y).exp())
        } else {
            (y.exp() + 1.0, 1.0, ((1.0 - self.s_bar) * y).exp())
        }
    }
}

/// Reusable evaluator of `L_h^{-s}` on one boundary.
#[derive(Clone, Debug)]
pub struct FractionalSolver {
    ops: BoundaryOperators,
    exponent: FractionalExponent,
    scheme: Option<SincScheme>,
    base: SpdFactorization,
    symbolic: SymbolicCholesky,
}

impl FractionalSolver {
    pub fn new(ops: &BoundaryOperators, exponent: FractionalExponent, k: f64) -> Result<Self> {
        let scheme = if exponent.frac() > 0.0 { Some(sinc_parameters(k, exponent.frac())?) } else { None };
        let plain = ops.shifted(1.0)?;
        let symbolic = SymbolicCholesky::analyze(&plain)?;
        let base = symbolic.factor(&plain)?;
        Ok(Self { ops: ops.clone(), exponent, scheme, base, symbolic })
    }

    pub fn exponent(&self) -> FractionalExponent {
        self.exponent
    }

    pub fn scheme(&self) -> Option<&SincScheme> {
        self.scheme.as_ref()
    }

    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply_many(&[g])?.pop().unwrap_or_default())
    }

    /// Applies `L_h^{-s}` to each dual vector.
    pub fn apply_many(&self, rhs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        for g in rhs {
            check_len(self.ops.len(), g.len())?;
        }
        let mut current: Option<Vec<Vec<f64>>> = None;
        for _ in 0..self.exponent.whole() {
            let next = match &current {
                None => self.base.solve_many(rhs)?,
                Some(psi) => {
                    let duals: Vec<Vec<f64>> = psi.iter().map(|p| self.ops.mass.mul_vec(p)).collect();
                    self.base.solve_many(&as_slices(&duals))?
                }
            };
            current = Some(next);
        }
        let Some(scheme) = &self.scheme else {
            return Ok(current.unwrap_or_else(|| rhs.iter().map(|g| g.to_vec()).collect()));
        };
        match current {
            None => self.sinc_apply_many(scheme, rhs),
            Some(psi) => {
                let duals: Vec<Vec<f64>> = psi.iter().map(|p| self.ops.mass.mul_vec(p)).collect();
                self.sinc_apply_many(scheme, &as_slices(&duals))
            }
        }
    }

    fn sinc_apply_many(&self, scheme: &SincScheme, rhs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        sinc_sum(&self.ops, &self.symbolic, scheme, rhs)
    }
}

fn as_slices(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(|x| x.as_slice()).collect()
}

fn sinc_sum(
    ops: &BoundaryOperators,
    symbolic: &SymbolicCholesky,
    scheme: &SincScheme,
    rhs: &[&[f64]],
) -> Result<Vec<Vec<f64>>> {
    let nb = ops.len();
    let total = scheme.node_count();
    let chunks: Vec<Vec<Vec<f64>>> = (0..total.div_ceil(SINC_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![vec![0.0; nb]; rhs.len()];
            for i in c * SINC_CHUNK..((c + 1) * SINC_CHUNK).min(total) {
                let (a, b, w) = scheme.node_system(scheme.node(i));
                if w == 0.0 {
                    continue;
                }
                let fact = symbolic.factor(&ops.combination(a, b)?)?;
                for (sum, x) in acc.iter_mut().zip(fact.solve_many(rhs)?) {
                    for (s, xi) in sum.iter_mut().zip(x) {
                        *s += w * xi;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![vec![0.0; nb]; rhs.len()];
    for chunk in chunks {
        for (o, c) in out.iter_mut().zip(chunk) {
            for (oi, ci) in o.iter_mut().zip(c) {
                *oi += ci;
            }
        }
    }
    let pre = scheme.prefactor();
    for o in &mut out {
        o.iter_mut().for_each(|v| *v *= pre);
    }
    Ok(out)
}

/// Sinc approximation of `L_h^{-s_bar} g` for `s_bar` in `(0, 1)`.
pub fn sinc_apply(ops: &BoundaryOperators, scheme: &SincScheme, g: &[f64]) -> Result<Vec<f64>> {
    check_len(ops.len(), g.len())?;
    let symbolic = SymbolicCholesky::analyze(&ops.shifted(1.0)?)?;
    Ok(sinc_sum(ops, &symbolic, scheme, &[g])?.pop().unwrap_or_default())
}

/// `L_h^{-s} g` by integer solves followed by the sinc stage.
pub fn fractional_inverse(
    ops: &BoundaryOperators,
    exponent: FractionalExponent,
    k: f64,
    g: &[f64],
) -> Result<Vec<f64>> {
    FractionalSolver::new(ops, exponent, k)?.apply(g)
}

/// Dense eigendecomposition of the pencil `(M + A, M)`.
#[derive(Clone, Debug)]
pub struct SpectralOracle {
    eigen: GeneralizedEigen,
}

impl SpectralOracle {
    pub fn new(ops: &BoundaryOperators, cap: usize) -> Result<Self> {
        let a = ops.shifted(1.0)?.to_dense();
        let m = ops.mass.to_dense();
        Ok(Self { eigen: eig_sym_dense(a.as_ref(), m.as_ref(), cap)? })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn eigenvectors(&self) -> &Mat<f64> {
        &self.eigen.vectors
    }

    /// `sum_j tau_j^{-s} (v_j^T g) v_j`; `s` may be any real.
    pub fn apply(&self, s: f64, g: &[f64]) -> Result<Vec<f64>> {
        let v = &self.eigen.vectors;
        let n = v.nrows();
        check_len(n, g.len())?;
        let mut out = vec![0.0; n];
        for (j, &tau) in self.eigen.values.iter().enumerate() {
            let col = v.col_as_slice(j);
            let c = dot(col, g) * tau.powf(-s);
            for (o, vi) in out.iter_mut().zip(col) {
                *o += c * vi;
            }
        }
        Ok(out)
    }
}

/// One-shot [`SpectralOracle::apply`].
pub fn spectral_oracle(ops: &BoundaryOperators, s: f64, g: &[f64], cap: usize) -> Result<Vec<f64>> {
    SpectralOracle::new(ops, cap)?.apply(s, g)
}

/// `||x - reference||_M / ||reference||_M`.
pub fn relative_mass_error(ops: &BoundaryOperators, x: &[f64], reference: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(reference).map(|(a, b)| a - b).collect();
    ops.mass_norm(&d) / ops.mass_norm(reference)
}

/// Direct solve of `(M + A) x = g`.
pub fn plain_inverse(ops: &BoundaryOperators, g: &[f64]) -> Result<Vec<f64>> {
    factor_spd(&ops.shifted(1.0)?)?.solve(g)
}
