//! Region-of-attraction estimate from the aggregated storage
//! `S = Σ p_i f_iᵀ P_i f_i` and the dissipative region on the algebraic manifold.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::assembly::SystemAssembly;
use crate::dae::{solve_algebraic, NewtonOptions};
use crate::devices::BusModel;
use crate::dissipativity::{dynamic_slack, static_slack};
use crate::error::{Error, Result};
use crate::linalg::{SymmetricMatrix, DEFAULT_PSD_TOL};
use crate::region::BoxRegion;

/// Margin subtracted from the critical level when certifying initial conditions.
pub const DEFAULT_LEVEL_MARGIN: f64 = 1e-6;

/// Dissipativity condition attached to one bus.
#[derive(Debug, Clone, PartialEq)]
pub enum BusPredicate {
    /// `Q ⪯ 0`, optionally restricted to a box in `(x_i, u_i)`.
    Dynamic { p: SymmetricMatrix, x: SymmetricMatrix, epsilon: f64, region: Option<BoxRegion> },
    /// `[I; H_u]ᵀ X [I; H_u] ⪰ 0`, optionally restricted to a box in `u_i`.
    Static { x: SymmetricMatrix, region: Option<BoxRegion> },
    /// No condition.
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPredicate {
    pub buses: Vec<BusPredicate>,
    pub psd_tol: f64,
}

impl RegionPredicate {
    pub fn new(buses: Vec<BusPredicate>) -> Self {
        Self { buses, psd_tol: DEFAULT_PSD_TOL }
    }

    pub fn with_tol(mut self, psd_tol: f64) -> Self {
        self.psd_tol = psd_tol;
        self
    }

    fn bus_holds(&self, assembly: &SystemAssembly, bus: usize, x: &DVector<f64>, u: &DVector<f64>) -> bool {
        let ui = assembly.bus_port(bus, u);
        match (&self.buses[bus], &assembly.buses()[bus]) {
            (BusPredicate::Free, _) => true,
            (BusPredicate::Dynamic { p, x: xm, epsilon, region }, BusModel::Dynamic(dev)) => {
                let xi = assembly.bus_state(bus, x);
                if let Some(r) = region {
                    let z: Vec<f64> = xi.iter().chain(ui.iter()).copied().collect();
                    if !r.contains(&z) {
                        return false;
                    }
                }
                dynamic_slack(dev.as_ref(), p, xm, *epsilon, &xi, &ui).is_ok_and(|s| s >= -self.psd_tol)
            }
            (BusPredicate::Static { x: xm, region }, BusModel::Static(dev)) => {
                if let Some(r) = region {
                    if !r.contains(ui.as_slice()) {
                        return false;
                    }
                }
                static_slack(dev.as_ref(), xm, &ui).is_ok_and(|s| s >= -self.psd_tol)
            }
            _ => false,
        }
    }

    /// Membership of `(x, u)` in each bus's region.
    pub fn bus_flags(&self, assembly: &SystemAssembly, x: &DVector<f64>, u: &DVector<f64>) -> Vec<bool> {
        (0..self.buses.len()).map(|i| self.bus_holds(assembly, i, x, u)).collect()
    }

    pub fn holds(&self, assembly: &SystemAssembly, x: &DVector<f64>, u: &DVector<f64>) -> bool {
        (0..self.buses.len()).all(|i| self.bus_holds(assembly, i, x, u))
    }

    /// Solves `u` on the manifold at `x`, then evaluates the predicate there.
    pub fn eval_state(
        &self,
        assembly: &SystemAssembly,
        x: &DVector<f64>,
        u_guess: &DVector<f64>,
        opts: NewtonOptions,
    ) -> Result<(DVector<f64>, bool)> {
        let u = solve_algebraic(assembly, x, u_guess, opts)?;
        let ok = self.holds(assembly, x, &u);
        Ok((u, ok))
    }
}

/// `Σ p_i f_iᵀ P_i f_i` over dynamic buses; static buses store nothing.
pub fn aggregate_storage(
    weights: &[f64],
    predicate: &RegionPredicate,
    assembly: &SystemAssembly,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    if weights.len() != assembly.buses().len() || predicate.buses.len() != weights.len() {
        return Err(Error::DimensionMismatch("weights, predicate and buses differ in count".into()));
    }
    let mut s = 0.0;
    for (i, bus) in assembly.buses().iter().enumerate() {
        if let (BusModel::Dynamic(dev), BusPredicate::Dynamic { p, .. }) = (bus, &predicate.buses[i]) {
            let f = dev.f(&assembly.bus_state(i, x), &assembly.bus_port(i, u));
            s += weights[i] * p.quad_form(&f);
        }
    }
    Ok(s)
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    /// `None` when no consistent algebraic state was found.
    pub storage: Option<f64>,
    pub predicate: bool,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelEstimate {
    pub l_bar: f64,
    pub boundary_count: usize,
    pub inside_count: usize,
    pub argmin_index: usize,
    pub argmin: DVector<f64>,
    pub grid: BoxRegion,
    /// Some predicate-true sample lies on the outer face of the grid.
    pub touches_grid_edge: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelScan {
    pub grid: BoxRegion,
    pub samples: Vec<GridSample>,
    pub estimate: Result<LevelEstimate>,
}

/// Marks boundary samples (predicate-true with a predicate-false axis neighbour)
/// and takes the minimum storage over them.
pub fn level_on_grid<F>(grid: &BoxRegion, eval: F) -> Result<LevelScan>
where
    F: Fn(&DVector<f64>) -> (Option<f64>, bool) + Sync,
{
    let count = grid.checked_len()?;
    let mut samples: Vec<GridSample> = (0..count)
        .into_par_iter()
        .map(|k| {
            let (storage, predicate) = eval(&grid.sample(k));
            GridSample { storage, predicate: predicate && storage.is_some(), boundary: false }
        })
        .collect();
    let dims = grid.samples_per_axis().to_vec();
    let flags: Vec<(bool, bool)> = (0..count)
        .into_par_iter()
        .map(|k| {
            if !samples[k].predicate {
                return (false, false);
            }
            let idx = grid.multi_index(k);
            let mut boundary = false;
            let mut edge = false;
            for axis in 0..dims.len() {
                if idx[axis] == 0 || idx[axis] + 1 == dims[axis] {
                    edge = true;
                }
                for delta in [-1i64, 1] {
                    let j = idx[axis] as i64 + delta;
                    if j < 0 || j >= dims[axis] as i64 {
                        continue;
                    }
                    let mut nb = idx.clone();
                    nb[axis] = j as usize;
                    if !samples[grid.flat_index(&nb)].predicate {
                        boundary = true;
                    }
                }
            }
            (boundary, edge)
        })
        .collect();
    let mut touches_grid_edge = false;
    let mut best: Option<(f64, usize)> = None;
    let mut boundary_count = 0;
    for (k, (b, e)) in flags.into_iter().enumerate() {
        samples[k].boundary = b;
        touches_grid_edge |= e;
        if b {
            boundary_count += 1;
            let s = samples[k].storage.expect("predicate-true samples carry storage");
            if best.is_none_or(|(v, _)| s < v) {
                best = Some((s, k));
            }
        }
    }
    let inside_count = samples.iter().filter(|s| s.predicate).count();
    let estimate = match best {
        Some((l_bar, k)) => Ok(LevelEstimate {
            l_bar,
            boundary_count,
            inside_count,
            argmin_index: k,
            argmin: grid.sample(k),
            grid: grid.clone(),
            touches_grid_edge,
        }),
        None if inside_count == 0 => Err(Error::GridTooSmall("predicate is false on every grid sample".into())),
        None => Err(Error::GridTooSmall(format!(
            "no boundary detected: predicate holds on all {inside_count} evaluated samples"
        ))),
    };
    Ok(LevelScan { grid: grid.clone(), samples, estimate })
}

/// Critical level over a state grid; `u` at each point is solved from `u_guess`.
pub fn estimate_level(
    assembly: &SystemAssembly,
    predicate: &RegionPredicate,
    weights: &[f64],
    x_grid: &BoxRegion,
    u_guess: &DVector<f64>,
    opts: NewtonOptions,
) -> Result<LevelScan> {
    if x_grid.dim() != assembly.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "grid has {} axes, system has {} states",
            x_grid.dim(),
            assembly.state_dim()
        )));
    }
    level_on_grid(x_grid, |x| match predicate.eval_state(assembly, x, u_guess, opts) {
        Ok((u, ok)) => (aggregate_storage(weights, predicate, assembly, x, &u).ok(), ok),
        Err(_) => (None, false),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditionVerdict {
    pub certified: bool,
    pub predicate: bool,
    pub storage: f64,
    pub level: f64,
    pub u0: DVector<f64>,
}

/// `certified` iff the predicate holds at `x0` and `S(x0, u0) < l̄ − margin`.
#[allow(clippy::too_many_arguments)]
pub fn certify_initial_condition(
    assembly: &SystemAssembly,
    predicate: &RegionPredicate,
    weights: &[f64],
    level: f64,
    x0: &DVector<f64>,
    u_guess: &DVector<f64>,
    margin: f64,
    opts: NewtonOptions,
) -> Result<InitialConditionVerdict> {
    let (u0, ok) = predicate.eval_state(assembly, x0, u_guess, opts)?;
    let storage = aggregate_storage(weights, predicate, assembly, x0, &u0)?;
    Ok(InitialConditionVerdict { certified: ok && storage < level - margin, predicate: ok, storage, level, u0 })
}

/// Point cloud `x_1..x_n,S,predicate,boundary`; samples without a manifold solution get `S = nan`.
pub fn point_cloud_csv(scan: &LevelScan) -> String {
    let n = scan.grid.dim();
    let mut out = String::new();
    let header: Vec<String> =
        (1..=n).map(|i| format!("x_{i}")).chain(["S", "predicate", "boundary"].map(String::from)).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (k, s) in scan.samples.iter().enumerate() {
        let x = scan.grid.sample(k);
        for v in x.iter() {
            out.push_str(&crate::output::fmt_num(*v));
            out.push(',');
        }
        out.push_str(&s.storage.map_or_else(|| "nan".to_string(), crate::output::fmt_num));
        out.push_str(&format!(",{},{}\n", s.predicate as u8, s.boundary as u8));
    }
    out
}
