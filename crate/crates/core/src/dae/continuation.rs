use nalgebra::DVector;

use super::{find_equilibrium, Classification, EquilibriumPoint, NewtonOptions};
use crate::assembly::SystemAssembly;
use crate::error::{Error, Result};
use crate::roa::RegionPredicate;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub s: f64,
    pub equilibrium: EquilibriumPoint,
    /// Per-bus region membership of the equilibrium; empty without a predicate.
    pub in_region: Vec<bool>,
}

impl SweepPoint {
    pub fn certified(&self) -> bool {
        !self.in_region.is_empty() && self.in_region.iter().all(|&b| b)
    }

    pub fn eigen_stable(&self) -> bool {
        self.equilibrium.classification == Classification::Stable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationResult {
    /// Points in increasing `s`.
    pub points: Vec<SweepPoint>,
    /// First `s` below 1 where Newton failed, if any.
    pub truncated_low: Option<f64>,
    /// First `s` above 1 where Newton failed, if any.
    pub truncated_high: Option<f64>,
}

impl ContinuationResult {
    /// Largest interval around `s = 1` on which `pred` holds at every sweep point.
    pub fn window<F: Fn(&SweepPoint) -> bool>(&self, pred: F) -> Option<(f64, f64)> {
        let base = self.points.iter().position(|p| (p.s - 1.0).abs() < 1e-12)?;
        if !pred(&self.points[base]) {
            return None;
        }
        let mut lo = base;
        while lo > 0 && pred(&self.points[lo - 1]) {
            lo -= 1;
        }
        let mut hi = base;
        while hi + 1 < self.points.len() && pred(&self.points[hi + 1]) {
            hi += 1;
        }
        Some((self.points[lo].s, self.points[hi].s))
    }

    /// Window for one bus's membership flag.
    pub fn bus_window(&self, bus: usize) -> Option<(f64, f64)> {
        self.window(|p| p.in_region.get(bus).copied().unwrap_or(false))
    }

    pub fn certified_window(&self) -> Option<(f64, f64)> {
        self.window(SweepPoint::certified)
    }

    pub fn eigen_window(&self) -> Option<(f64, f64)> {
        self.window(SweepPoint::eigen_stable)
    }
}

/// Natural-parameter continuation in the load scale `s`, outward from `s = 1`
/// in both directions; each solve is seeded with the previous equilibrium.
pub fn continuation_sweep(
    assembly: &SystemAssembly,
    x_seed: &DVector<f64>,
    u_seed: &DVector<f64>,
    s_range: (f64, f64),
    s_step: f64,
    predicate: Option<&RegionPredicate>,
    opts: NewtonOptions,
) -> Result<ContinuationResult> {
    let (lo, hi) = s_range;
    if !(lo > 0.0) || !(lo <= 1.0) || !(hi >= 1.0) || !(s_step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sweep needs 0 < s_lo <= 1 <= s_hi and step > 0, got ({lo}, {hi}), {s_step}"
        )));
    }
    let record = |s: f64, eq: EquilibriumPoint, sys: &SystemAssembly| SweepPoint {
        s,
        in_region: predicate.map(|p| p.bus_flags(sys, &eq.x, &eq.u)).unwrap_or_default(),
        equilibrium: eq,
    };
    let base_sys = assembly.with_load_scale(1.0)?;
    let base = find_equilibrium(&base_sys, x_seed, u_seed, opts)?;
    let mut up = vec![record(1.0, base.clone(), &base_sys)];
    let mut down = Vec::new();
    let mut truncated_high = None;
    let mut truncated_low = None;

    for (dir, out, trunc) in [(1.0, &mut up, &mut truncated_high), (-1.0, &mut down, &mut truncated_low)] {
        let (mut x, mut u) = (base.x.clone(), base.u.clone());
        let mut k = 1usize;
        loop {
            let s = ((1.0 + dir * k as f64 * s_step) * 1e12).round() / 1e12;
            if s > hi + 1e-12 || s < lo - 1e-12 {
                break;
            }
            let sys = assembly.with_load_scale(s)?;
            match find_equilibrium(&sys, &x, &u, opts) {
                Ok(eq) => {
                    x = eq.x.clone();
                    u = eq.u.clone();
                    out.push(record(s, eq, &sys));
                }
                Err(_) => {
                    *trunc = Some(s);
                    break;
                }
            }
            k += 1;
        }
    }
    down.reverse();
    down.extend(up);
    Ok(ContinuationResult { points: down, truncated_low, truncated_high })
}
