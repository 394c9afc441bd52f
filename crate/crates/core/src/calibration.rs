//! Recovery of the unstated two-bus data (line impedance, load level and
//! generator frame convention) from a reported operating point.
//!
//! The default method grid-searches `(r, x, P_L, convention)` for the
//! equilibrium closest to the reported one, optionally refining around the
//! coarse optimum. The two-stage method first fits the network alone (load
//! voltage `h_load(u₂*)` fixed, generator output free, least-squares residual
//! of `u* + C y = 0`) and only then picks the generator convention.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dae::{find_equilibrium, NewtonOptions};
use crate::devices::{pq_load, PqLoadParams, SgConvention, StaticDevice};
use crate::error::{Error, Result};
use crate::twobus::{ReferenceEquilibrium, TwoBusSystem};

/// Largest equilibrium deviation accepted as a reproduction.
pub const DEFAULT_GATE: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    pub target: ReferenceEquilibrium,
    /// Candidate active-power demands; the reactive part is taken from the base system.
    pub load_p_candidates: Vec<f64>,
    pub r_max: f64,
    pub x_max: f64,
    pub grid_step: f64,
    pub gate: f64,
    #[serde(default)]
    pub method: CalibrationMethod,
    /// Second pass of this step over `±grid_step` around the coarse optimum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_step: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    /// Joint search over `(r, x, P_L, convention)` by equilibrium deviation alone.
    #[default]
    EquilibriumDistance,
    /// Network consistency first, then the generator convention.
    TwoStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionResidual {
    pub convention: SgConvention,
    /// `None` when Newton did not converge from the target point.
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub r: f64,
    pub x: f64,
    pub load_p: f64,
    pub convention: SgConvention,
    pub network_residual: f64,
    pub equilibrium_deviation: f64,
    pub gate: f64,
    pub reproduced: bool,
    pub conventions: Vec<ConventionResidual>,
}

impl CalibrationResult {
    pub fn apply(&self, base: &TwoBusSystem) -> TwoBusSystem {
        TwoBusSystem {
            r: self.r,
            x: self.x,
            convention: self.convention,
            load: PqLoadParams { p: self.load_p, ..base.load },
            ..*base
        }
    }
}

/// `min_{y₁} ‖u* + C (y₁, h_load(u₂*))‖₂` for one candidate network.
pub fn network_residual(base: &TwoBusSystem, target: &ReferenceEquilibrium) -> Result<f64> {
    let coupling = base.coupling()?;
    let c = coupling.c();
    let load = pq_load(base.load)?;
    let y2 = load.h(&DVector::from_column_slice(&target.u2))?;
    let u = target.ports();
    let rhs = -(u + c.columns(2, 2) * y2);
    let a = c.columns(0, 2).into_owned();
    let y1 = a.clone().svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((a * y1 - rhs).norm())
}

fn equilibrium_deviation(sys: &TwoBusSystem, target: &ReferenceEquilibrium, opts: NewtonOptions) -> Option<f64> {
    sys.assembly()
        .and_then(|a| find_equilibrium(&a, &target.state(), &target.ports(), opts))
        .ok()
        .map(|eq| target.deviation(&eq.x, &eq.u))
}

pub fn calibrate(
    base: &TwoBusSystem,
    settings: &CalibrationSettings,
    opts: NewtonOptions,
) -> Result<CalibrationResult> {
    if !(settings.grid_step > 0.0) || !(settings.r_max > 0.0) || !(settings.x_max > 0.0) {
        return Err(Error::InvalidInput("calibration grid needs positive step and extents".into()));
    }
    if settings.load_p_candidates.is_empty() {
        return Err(Error::InvalidInput("at least one load candidate is required".into()));
    }
    let lattice = |r0: f64, r1: f64, x0: f64, x1: f64, step: f64| {
        let axis = |lo: f64, hi: f64| {
            let i0 = (lo / step).ceil().max(1.0) as usize;
            let i1 = (hi / step + 1e-9).floor() as usize;
            // rounded so grid values print cleanly
            (i0..=i1).map(move |i| ((i as f64 * step) * 1e12).round() / 1e12)
        };
        let mut out = Vec::new();
        for &p in &settings.load_p_candidates {
            for r in axis(r0, r1) {
                for x in axis(x0, x1) {
                    out.push((p, r, x));
                }
            }
        }
        out
    };
    let system = |(p, r, x): (f64, f64, f64)| TwoBusSystem { r, x, load: PqLoadParams { p, ..base.load }, ..*base };
    // ties resolve to the earliest candidate in the deterministic ordering
    let pick = |a: (f64, usize), b: (f64, usize)| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a };
    let convs = SgConvention::all();
    let search = |cands: &[(f64, f64, f64)]| -> Result<(f64, f64, f64, SgConvention)> {
        let best = (0..cands.len() * convs.len())
            .into_par_iter()
            .filter_map(|kk| {
                let (k, c) = (kk / convs.len(), kk % convs.len());
                let sys = TwoBusSystem { convention: convs[c], ..system(cands[k]) };
                equilibrium_deviation(&sys, &settings.target, opts).map(|d| (d, kk))
            })
            .reduce_with(pick)
            .ok_or(Error::NoEquilibrium { residual: f64::NAN, iterations: opts.max_iter })?;
        let (p, r, x) = cands[best.1 / convs.len()];
        Ok((p, r, x, convs[best.1 % convs.len()]))
    };

    let coarse = lattice(0.0, settings.r_max, 0.0, settings.x_max, settings.grid_step);
    let (best, fixed_convention) = match settings.method {
        CalibrationMethod::TwoStage => {
            let best = (0..coarse.len())
                .into_par_iter()
                .filter_map(|k| network_residual(&system(coarse[k]), &settings.target).ok().map(|res| (res, k)))
                .reduce_with(pick)
                .ok_or_else(|| Error::InvalidInput("no calibration candidate could be evaluated".into()))?;
            (coarse[best.1], None)
        }
        CalibrationMethod::EquilibriumDistance => {
            let (mut p, mut r, mut x, mut conv) = search(&coarse)?;
            if let Some(step) = settings.refine_step.filter(|&h| h > 0.0 && h < settings.grid_step) {
                let g = settings.grid_step;
                let fine = lattice(r - g, (r + g).min(settings.r_max), x - g, (x + g).min(settings.x_max), step);
                (p, r, x, conv) = search(&fine)?;
            }
            ((p, r, x), Some(conv))
        }
    };
    let (load_p, r, x) = best;
    let network = system(best);
    let network_res = network_residual(&network, &settings.target)?;

    let mut conventions = Vec::new();
    let mut chosen: Option<(f64, SgConvention)> = None;
    for conv in SgConvention::all() {
        let dev = equilibrium_deviation(&TwoBusSystem { convention: conv, ..network }, &settings.target, opts);
        if let Some(d) = dev {
            let allowed = fixed_convention.is_none_or(|c| c == conv);
            if allowed && chosen.is_none_or(|(b, _)| d < b) {
                chosen = Some((d, conv));
            }
        }
        conventions.push(ConventionResidual { convention: conv, deviation: dev });
    }
    let (deviation, convention) =
        chosen.ok_or(Error::NoEquilibrium { residual: f64::NAN, iterations: opts.max_iter })?;
    Ok(CalibrationResult {
        r,
        x,
        load_p,
        convention,
        network_residual: network_res,
        equilibrium_deviation: deviation,
        gate: settings.gate,
        reproduced: deviation <= settings.gate,
        conventions,
    })
}
