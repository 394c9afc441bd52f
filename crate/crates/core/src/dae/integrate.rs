use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{newton, solve_algebraic, NewtonFailure, NewtonOptions};
use crate::assembly::SystemAssembly;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub t_end: f64,
    pub dt: f64,
    pub newton: NewtonOptions,
}

/// Switches the load scale to `scale` from `time` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEvent {
    pub time: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub algebraics: Vec<DVector<f64>>,
    /// `‖g‖∞` at each stored point.
    pub residuals: Vec<f64>,
    pub load_scales: Vec<f64>,
    /// Set when an algebraic solve failed and the run stopped early.
    pub error: Option<Error>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn completed(&self) -> bool {
        self.error.is_none()
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds the initial point")
    }
}

/// Fixed-step implicit trapezoidal rule; each step solves the stacked
/// `[x₊ − x − dt/2 (f + f₊); g₊] = 0` by Newton.
pub fn simulate(
    assembly: &SystemAssembly,
    x0: &DVector<f64>,
    u_guess: &DVector<f64>,
    opts: SimOptions,
    events: &[LoadEvent],
) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) || !opts.t_end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "need dt > 0 and finite t_end >= 0, got {} / {}",
            opts.dt, opts.t_end
        )));
    }
    let mut events = events.to_vec();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let n = assembly.state_dim();
    let m = assembly.port_dim();

    let mut sys = assembly.clone();
    let mut next_event = 0;
    let apply_events = |t: f64, sys: &mut SystemAssembly, next: &mut usize| -> Result<bool> {
        let mut changed = false;
        while *next < events.len() && events[*next].time <= t + 1e-9 * opts.dt {
            *sys = assembly.with_load_scale(events[*next].scale)?;
            *next += 1;
            changed = true;
        }
        Ok(changed)
    };
    apply_events(0.0, &mut sys, &mut next_event)?;

    let u0 = solve_algebraic(&sys, x0, u_guess, opts.newton)?;
    let steps = (opts.t_end / opts.dt).round() as usize;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
        algebraics: vec![u0.clone()],
        residuals: vec![sys.g(x0, &u0)?.amax()],
        load_scales: vec![sys.load_scale()],
        error: None,
    };
    let (mut x, mut u) = (x0.clone(), u0);
    let mut fx = sys.f(&x, &u)?;
    let h = opts.dt;

    for k in 0..steps {
        let t = k as f64 * h;
        if k > 0 && apply_events(t, &mut sys, &mut next_event)? {
            // the load jumps: x is continuous, u re-solved on the new manifold
            match solve_algebraic(&sys, &x, &u, opts.newton) {
                Ok(un) => u = un,
                Err(e) => {
                    traj.error = Some(e);
                    return Ok(traj);
                }
            }
            fx = sys.f(&x, &u)?;
        }
        let x_prev = x.clone();
        let f_prev = fx.clone();
        let stage = |z: &DVector<f64>, want_jac: bool| {
            let xn = z.rows(0, n).into_owned();
            let un = z.rows(n, m).into_owned();
            let fn_ = sys.f(&xn, &un)?;
            let mut r = DVector::zeros(n + m);
            r.rows_mut(0, n).copy_from(&(&xn - &x_prev - (&f_prev + &fn_) * (0.5 * h)));
            r.rows_mut(n, m).copy_from(&sys.g(&xn, &un)?);
            let jac = if want_jac {
                let j = sys.jacobians(&xn, &un)?;
                let (gx, gu) = sys.g_jacobians(&j);
                let mut big = DMatrix::zeros(n + m, n + m);
                big.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) - &j.fx * (0.5 * h)));
                big.view_mut((0, n), (n, m)).copy_from(&(&j.fu * (-0.5 * h)));
                big.view_mut((n, 0), (m, n)).copy_from(&gx);
                big.view_mut((n, n), (m, m)).copy_from(&gu);
                Some(big)
            } else {
                None
            };
            Ok((r, jac))
        };
        let mut z0 = DVector::zeros(n + m);
        z0.rows_mut(0, n).copy_from(&(&x + &fx * h));
        z0.rows_mut(n, m).copy_from(&u);
        match newton(stage, z0, opts.newton) {
            Ok(sol) => {
                x = sol.z.rows(0, n).into_owned();
                u = sol.z.rows(n, m).into_owned();
                fx = sys.f(&x, &u)?;
                traj.times.push((k + 1) as f64 * h);
                traj.residuals.push(sys.g(&x, &u)?.amax());
                traj.states.push(x.clone());
                traj.algebraics.push(u.clone());
                traj.load_scales.push(sys.load_scale());
            }
            Err(NewtonFailure::Singular) => {
                traj.error = Some(Error::SingularAlgebraicJacobian);
                return Ok(traj);
            }
            Err(NewtonFailure::NoConvergence { residual, iterations }) => {
                traj.error = Some(Error::NoConsistentAlgebraic { residual, iterations });
                return Ok(traj);
            }
        }
    }
    Ok(traj)
}
