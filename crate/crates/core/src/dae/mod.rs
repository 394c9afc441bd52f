//! Semi-explicit DAE engine: consistent algebraic states, fixed-step
//! trapezoidal simulation, equilibria with eigen classification, and load
//! continuation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::SystemAssembly;
use crate::error::{Error, Result};

mod continuation;
mod equilibrium;
mod integrate;

pub use continuation::{continuation_sweep, ContinuationResult, SweepPoint};
pub use equilibrium::{
    classify, find_equilibrium, reduced_jacobian, Classification, EquilibriumPoint, EquilibriumSet, ReducedJacobian,
    DEDUP_DISTANCE, EIG_TOL,
};
pub use integrate::{simulate, LoadEvent, SimOptions, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50 }
    }
}

pub(crate) enum NewtonFailure {
    Singular,
    NoConvergence { residual: f64, iterations: usize },
}

pub(crate) struct NewtonSolution {
    pub z: DVector<f64>,
    pub iterations: usize,
}

/// Damped Newton on `r(z) = 0` with backtracking on `‖r‖∞`.
pub(crate) fn newton<F>(
    system: F,
    z0: DVector<f64>,
    opts: NewtonOptions,
) -> std::result::Result<NewtonSolution, NewtonFailure>
where
    F: Fn(&DVector<f64>, bool) -> Result<(DVector<f64>, Option<DMatrix<f64>>)>,
{
    let norm = |r: &DVector<f64>| if r.iter().all(|v| v.is_finite()) { r.amax() } else { f64::INFINITY };
    let mut z = z0;
    let (mut r, mut jac) = match system(&z, true) {
        Ok(v) => v,
        Err(_) => return Err(NewtonFailure::NoConvergence { residual: f64::INFINITY, iterations: 0 }),
    };
    let mut res = norm(&r);
    for it in 0..opts.max_iter {
        let lu = jac.take().expect("jacobian requested").lu();
        if !lu.is_invertible() {
            return Err(NewtonFailure::Singular);
        }
        if res <= opts.tol {
            return Ok(NewtonSolution { z, iterations: it });
        }
        let step = lu.solve(&(-&r)).ok_or(NewtonFailure::Singular)?;
        if step.iter().any(|v| !v.is_finite()) {
            return Err(NewtonFailure::Singular);
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = &z + &step * lambda;
            if let Ok((rt, _)) = system(&trial, false) {
                let nt = norm(&rt);
                if nt < res || nt <= opts.tol {
                    z = trial;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // take the full step anyway; Newton may climb out of a shallow region
            z = &z + &step;
        }
        match system(&z, true) {
            Ok((rn, jn)) => {
                r = rn;
                jac = jn;
                res = norm(&r);
            }
            Err(_) => return Err(NewtonFailure::NoConvergence { residual: f64::INFINITY, iterations: it + 1 }),
        }
    }
    if res <= opts.tol {
        return Ok(NewtonSolution { z, iterations: opts.max_iter });
    }
    Err(NewtonFailure::NoConvergence { residual: res, iterations: opts.max_iter })
}

/// Solves `g(x, u) = 0` for `u` at fixed `x`.
pub fn solve_algebraic(
    assembly: &SystemAssembly,
    x: &DVector<f64>,
    u_guess: &DVector<f64>,
    opts: NewtonOptions,
) -> Result<DVector<f64>> {
    solve_algebraic_counted(assembly, x, u_guess, opts).map(|(u, _)| u)
}

/// As [`solve_algebraic`], also returning the Newton iteration count.
pub fn solve_algebraic_counted(
    assembly: &SystemAssembly,
    x: &DVector<f64>,
    u_guess: &DVector<f64>,
    opts: NewtonOptions,
) -> Result<(DVector<f64>, usize)> {
    if x.len() != assembly.state_dim() || u_guess.len() != assembly.port_dim() {
        return Err(Error::DimensionMismatch("algebraic solve: x or u has the wrong length".into()));
    }
    let system = |u: &DVector<f64>, want_jac: bool| {
        let g = assembly.g(x, u)?;
        let jac = if want_jac { Some(assembly.g_jacobians(&assembly.jacobians(x, u)?).1) } else { None };
        Ok((g, jac))
    };
    match newton(system, u_guess.clone(), opts) {
        Ok(sol) => Ok((sol.z, sol.iterations)),
        Err(NewtonFailure::Singular) => Err(Error::SingularAlgebraicJacobian),
        Err(NewtonFailure::NoConvergence { residual, iterations }) => {
            Err(Error::NoConsistentAlgebraic { residual, iterations })
        }
    }
}
