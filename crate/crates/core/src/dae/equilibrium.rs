use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{newton, NewtonFailure, NewtonOptions};
use crate::assembly::SystemAssembly;
use crate::error::{Error, Result};

/// Half-width of the "marginal" band on the largest real part.
pub const EIG_TOL: f64 = 1e-9;

/// Two equilibria closer than this (max-norm over `(x, u)`) are the same point.
pub const DEDUP_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

pub fn classify(max_real: f64, eig_tol: f64) -> Classification {
    if max_real < -eig_tol {
        Classification::Stable
    } else if max_real > eig_tol {
        Classification::Unstable
    } else {
        Classification::Marginal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedJacobian {
    pub a: DMatrix<f64>,
    pub eigenvalues: Vec<Complex64>,
    pub max_real: f64,
}

/// `A = F_x − F_u g_u⁻¹ g_x` and its spectrum.
pub fn reduced_jacobian(assembly: &SystemAssembly, x: &DVector<f64>, u: &DVector<f64>) -> Result<ReducedJacobian> {
    let jac = assembly.jacobians(x, u)?;
    let (gx, gu) = assembly.g_jacobians(&jac);
    let lu = gu.lu();
    if !lu.is_invertible() {
        return Err(Error::SingularAlgebraicJacobian);
    }
    let du_dx = lu.solve(&gx).ok_or(Error::SingularAlgebraicJacobian)?;
    let a = &jac.fx - &jac.fu * du_dx;
    let eigenvalues: Vec<Complex64> =
        if a.nrows() == 0 { vec![] } else { a.clone().complex_eigenvalues().iter().copied().collect() };
    let max_real = eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(ReducedJacobian { a, eigenvalues, max_real })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPoint {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub f_residual: f64,
    pub g_residual: f64,
    pub eigenvalues: Vec<Complex64>,
    pub max_real: f64,
    pub classification: Classification,
    pub iterations: usize,
}

impl EquilibriumPoint {
    pub fn distance(&self, other: &EquilibriumPoint) -> f64 {
        (&self.x - &other.x).amax().max((&self.u - &other.u).amax())
    }
}

/// Newton on `[f; g] = 0` over `(x, u)` from a seed, then eigen classification.
pub fn find_equilibrium(
    assembly: &SystemAssembly,
    x_seed: &DVector<f64>,
    u_seed: &DVector<f64>,
    opts: NewtonOptions,
) -> Result<EquilibriumPoint> {
    let n = assembly.state_dim();
    let m = assembly.port_dim();
    if x_seed.len() != n || u_seed.len() != m {
        return Err(Error::DimensionMismatch("equilibrium seed has the wrong length".into()));
    }
    if x_seed.iter().chain(u_seed.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("equilibrium seed must be finite".into()));
    }
    let split = |z: &DVector<f64>| (z.rows(0, n).into_owned(), z.rows(n, m).into_owned());
    let system = |z: &DVector<f64>, want_jac: bool| {
        let (x, u) = split(z);
        let mut r = DVector::zeros(n + m);
        r.rows_mut(0, n).copy_from(&assembly.f(&x, &u)?);
        r.rows_mut(n, m).copy_from(&assembly.g(&x, &u)?);
        let jac = if want_jac {
            let j = assembly.jacobians(&x, &u)?;
            let (gx, gu) = assembly.g_jacobians(&j);
            let mut big = DMatrix::zeros(n + m, n + m);
            big.view_mut((0, 0), (n, n)).copy_from(&j.fx);
            big.view_mut((0, n), (n, m)).copy_from(&j.fu);
            big.view_mut((n, 0), (m, n)).copy_from(&gx);
            big.view_mut((n, n), (m, m)).copy_from(&gu);
            Some(big)
        } else {
            None
        };
        Ok((r, jac))
    };
    let mut z0 = DVector::zeros(n + m);
    z0.rows_mut(0, n).copy_from(x_seed);
    z0.rows_mut(n, m).copy_from(u_seed);
    let sol = match newton(system, z0, opts) {
        Ok(s) => s,
        Err(NewtonFailure::Singular) => {
            return Err(Error::NoEquilibrium { residual: f64::NAN, iterations: 0 });
        }
        Err(NewtonFailure::NoConvergence { residual, iterations }) => {
            return Err(Error::NoEquilibrium { residual, iterations });
        }
    };
    let (x, u) = split(&sol.z);
    let f_residual = assembly.f(&x, &u)?.amax();
    let g_residual = assembly.g(&x, &u)?.amax();
    let red = reduced_jacobian(assembly, &x, &u)?;
    Ok(EquilibriumPoint {
        classification: classify(red.max_real, EIG_TOL),
        x,
        u,
        f_residual,
        g_residual,
        eigenvalues: red.eigenvalues,
        max_real: red.max_real,
        iterations: sol.iterations,
    })
}

/// Distinct equilibria in discovery order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EquilibriumSet {
    points: Vec<EquilibriumPoint>,
}

impl EquilibriumSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `eq` unless an existing point lies within [`DEDUP_DISTANCE`]; returns its index.
    pub fn insert(&mut self, eq: EquilibriumPoint) -> (usize, bool) {
        if let Some(k) = self.points.iter().position(|p| p.distance(&eq) <= DEDUP_DISTANCE) {
            return (k, false);
        }
        self.points.push(eq);
        (self.points.len() - 1, true)
    }

    pub fn points(&self) -> &[EquilibriumPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
