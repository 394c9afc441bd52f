//! Analysis runs over a [`GridConfig`] and the reports they produce.
//!
//! Analysis failures are recorded inside the report; only configuration
//! problems abort a run.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assembly::{wellposedness_scan, SystemAssembly};
use crate::calibration::{calibrate, CalibrationResult};
use crate::config::{DomainMode, GridConfig};
use crate::coupling::{find_weights, CouplingCertificate};
use crate::dae::{
    classify, continuation_sweep, find_equilibrium, simulate, Classification, ContinuationResult, EquilibriumSet,
    Trajectory,
};
use crate::devices::BusModel;
use crate::dissipativity::{
    verify_dynamic, verify_static, DissipativityCertificate, StorageBounds, Verdict, VerifyMode, DEFAULT_EPSILON,
};
use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::roa::{certify_initial_condition, estimate_level, LevelScan};

/// Threshold on `|det(I + C H_u)|` below which a sample counts as ill-posed.
pub const WELLPOSEDNESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTriple {
    pub r: f64,
    pub x: f64,
    pub load_p: f64,
    pub convention: String,
    pub equilibrium_deviation: f64,
    pub reproduced: bool,
}

impl Provenance {
    pub fn new(config_text: &str, cfg: &GridConfig) -> Self {
        let calibration = cfg.calibration.as_ref().and_then(|c| c.result.as_ref()).map(|r| CalibrationTriple {
            r: r.r,
            x: r.x,
            load_p: r.load_p,
            convention: r.convention.label(),
            equilibrium_deviation: r.equilibrium_deviation,
            reproduced: r.reproduced,
        });
        Self {
            config_sha256: hex::encode(Sha256::digest(config_text.as_bytes())),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            calibration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub bus: usize,
    pub device: String,
    pub dynamic: bool,
    pub domain: DomainMode,
    pub mode: VerifyMode,
    /// Whether this bus's condition (1 for dynamic, 2 for static) holds.
    pub condition_met: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    pub samples: usize,
    pub passed: usize,
    pub marginal: usize,
    pub pass_fraction: f64,
    pub worst_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_point: Option<Vec<f64>>,
    pub failing_count: usize,
    pub exact_cleared: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_bounds: Option<StorageBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DeviceSummary {
    fn empty(bus: usize, model: &BusModel, error: String) -> Self {
        Self {
            bus: bus + 1,
            device: model.type_tag().into(),
            dynamic: model.is_dynamic(),
            domain: DomainMode::default(),
            mode: VerifyMode::Uniform,
            condition_met: false,
            verdict: None,
            samples: 0,
            passed: 0,
            marginal: 0,
            pass_fraction: 0.0,
            worst_margin: f64::NAN,
            worst_point: None,
            failing_count: 0,
            exact_cleared: 0,
            epsilon: None,
            storage_bounds: None,
            error: Some(error),
        }
    }

    fn from_certificate(bus: usize, model: &BusModel, domain: DomainMode, c: &DissipativityCertificate) -> Self {
        let condition_met = match domain {
            DomainMode::Box => c.verdict == Verdict::Pass,
            DomainMode::DissipativeSubset => c.passed > 0,
        };
        Self {
            bus: bus + 1,
            device: model.type_tag().into(),
            dynamic: model.is_dynamic(),
            domain,
            mode: c.mode,
            condition_met,
            verdict: Some(c.verdict),
            samples: c.samples,
            passed: c.passed,
            marginal: c.marginal,
            pass_fraction: c.pass_fraction(),
            worst_margin: c.worst_margin,
            worst_point: c.worst_index.map(|k| c.region.sample(k).iter().copied().collect()),
            failing_count: c.failing_count,
            exact_cleared: c.exact_cleared,
            epsilon: c.epsilon,
            storage_bounds: c.bounds,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary {
    pub feasible: bool,
    pub weights: Vec<f64>,
    pub lambda_max_k: f64,
    pub strategy: String,
    pub psd_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<CouplingCertificate> for CouplingSummary {
    fn from(c: CouplingCertificate) -> Self {
        Self {
            feasible: c.feasible,
            weights: c.weights,
            lambda_max_k: c.lambda_max_k,
            strategy: c.strategy,
            psd_tol: c.psd_tol,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellposednessSummary {
    pub passed: bool,
    pub samples: usize,
    pub min_abs_det: f64,
    pub failures: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    /// Index of the seed that first reached this point.
    pub seed: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub f_residual: f64,
    pub g_residual: f64,
    pub max_real: f64,
    pub classification: Classification,
    /// Membership in each bus's region `D_i`.
    pub in_region: Vec<bool>,
    pub in_dg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionChecks {
    pub wellposedness: WellposednessSummary,
    pub equilibria_found: usize,
    /// At least one equilibrium lies in every bus region.
    pub equilibrium_in_region: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed_failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallVerdict {
    pub certified: bool,
    pub condition_1: bool,
    pub condition_2: bool,
    pub condition_3: bool,
    pub assumptions: bool,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub provenance: Provenance,
    pub verdict: OverallVerdict,
    pub devices: Vec<DeviceSummary>,
    pub coupling: CouplingSummary,
    pub assumptions: AssumptionChecks,
    pub equilibria: Vec<EquilibriumSummary>,
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Config(e.to_string()))
}

/// Conditions 1 and 2 per bus, in bus order. `only` restricts to one 0-based bus.
pub fn run_verify_device(cfg: &GridConfig, only: Option<usize>) -> Result<Vec<DeviceSummary>> {
    let models = cfg.bus_models()?;
    if let Some(b) = only {
        if b >= models.len() {
            return Err(Error::Config(format!("bus {} outside 1..={}", b + 1, models.len())));
        }
    }
    let mut out = Vec::new();
    for (i, model) in models.iter().enumerate() {
        if only.is_some_and(|b| b != i) {
            continue;
        }
        let Some(cert) = cfg.certificate(i) else {
            out.push(DeviceSummary::empty(i, model, "no certificate configured".into()));
            continue;
        };
        let opts = cfg.verify_options(cert);
        let result = (|| {
            let x = SymmetricMatrix::new(cert.x.to_matrix()?)?;
            let region = cert.region.to_region()?;
            match model {
                BusModel::Dynamic(dev) => {
                    let p = SymmetricMatrix::new(cert.p.as_ref().expect("validated").to_matrix()?)?;
                    verify_dynamic(dev.as_ref(), &p, &x, cert.epsilon.unwrap_or(DEFAULT_EPSILON), &region, opts)
                }
                BusModel::Static(dev) => verify_static(dev.as_ref(), &x, &region, opts.psd_tol),
            }
        })();
        out.push(match result {
            Ok(mut c) => {
                c.bus = Some(i);
                DeviceSummary::from_certificate(i, model, cert.domain, &c)
            }
            Err(e) => DeviceSummary::empty(i, model, e.to_string()),
        });
    }
    Ok(out)
}

/// Condition 3.
pub fn run_verify_coupling(cfg: &GridConfig) -> Result<CouplingSummary> {
    let coupling = cfg.coupling()?;
    let strategy = cfg.weights.strategy();
    let psd_tol = cfg.engine.psd_tol;
    let result = cfg.supply_matrices().and_then(|xs| find_weights(&xs, &coupling, &strategy, psd_tol));
    Ok(match result {
        Ok(c) => c.into(),
        Err(e) => CouplingSummary {
            feasible: false,
            weights: vec![],
            lambda_max_k: f64::NAN,
            strategy: strategy.name().into(),
            psd_tol,
            error: Some(e.to_string()),
        },
    })
}

/// Equilibria from every configured seed, deduplicated, with region membership.
pub fn run_equilibria(cfg: &GridConfig) -> Result<(Vec<EquilibriumSummary>, Vec<String>)> {
    let assembly = cfg.assembly()?;
    let predicate = cfg.region_predicate()?;
    let opts = cfg.engine.newton();
    let mut set = EquilibriumSet::new();
    let mut seeds_of = Vec::new();
    let mut failures = Vec::new();
    for (k, seed) in cfg.equilibria.iter().flat_map(|e| e.seeds.iter()).enumerate() {
        let (x, u) = seed.vectors();
        match find_equilibrium(&assembly, &x, &u, opts) {
            Ok(eq) => {
                if set.insert(eq).1 {
                    seeds_of.push(k);
                }
            }
            Err(e) => failures.push(format!("seed {k}: {e}")),
        }
    }
    let list = set
        .points()
        .iter()
        .zip(seeds_of)
        .map(|(eq, seed)| {
            let in_region = predicate.bus_flags(&assembly, &eq.x, &eq.u);
            EquilibriumSummary {
                seed,
                x: eq.x.iter().copied().collect(),
                u: eq.u.iter().copied().collect(),
                f_residual: eq.f_residual,
                g_residual: eq.g_residual,
                max_real: eq.max_real,
                classification: classify(eq.max_real, cfg.engine.eig_tol),
                in_dg: in_region.iter().all(|&b| b),
                in_region,
            }
        })
        .collect();
    Ok((list, failures))
}

/// `det(I + C H_u)` at the equilibria and at uniform random draws from the certificate boxes.
fn wellposedness(
    cfg: &GridConfig,
    assembly: &SystemAssembly,
    equilibria: &[EquilibriumSummary],
    seed: u64,
) -> Result<WellposednessSummary> {
    let mut points: Vec<(DVector<f64>, DVector<f64>)> =
        equilibria.iter().map(|e| (DVector::from_column_slice(&e.x), DVector::from_column_slice(&e.u))).collect();
    let regions: Option<Vec<_>> =
        (0..cfg.bus_count()).map(|i| cfg.certificate(i).map(|c| c.region.to_region())).collect();
    if let Some(regions) = regions {
        let regions = regions.into_iter().collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..cfg.engine.wellposedness_samples {
            let mut x = DVector::zeros(assembly.state_dim());
            let mut u = DVector::zeros(assembly.port_dim());
            for (i, r) in regions.iter().enumerate() {
                let z: Vec<f64> = (0..r.dim()).map(|a| rng.random_range(r.lower()[a]..=r.upper()[a])).collect();
                let xr = assembly.state_range(i);
                let nx = xr.len();
                x.rows_mut(xr.start, nx).copy_from_slice(&z[..nx]);
                let ur = assembly.port_range(i);
                u.rows_mut(ur.start, ur.len()).copy_from_slice(&z[nx..]);
            }
            points.push((x, u));
        }
    }
    let rep = wellposedness_scan(assembly, points.iter().map(|(x, u)| (x, u)), WELLPOSEDNESS_TOL);
    Ok(WellposednessSummary {
        passed: rep.passed(),
        samples: rep.samples,
        min_abs_det: rep.min_abs_det,
        failures: rep.failures.len(),
        tol: rep.tol,
    })
}

/// Conditions 1 to 3, assumption checks and equilibrium membership.
pub fn run_certify(cfg: &GridConfig, config_text: &str, seed: u64) -> Result<CertificationReport> {
    let assembly = cfg.assembly()?;
    let devices = run_verify_device(cfg, None)?;
    let coupling = run_verify_coupling(cfg)?;
    let (equilibria, seed_failures) = run_equilibria(cfg)?;
    let wellposedness = wellposedness(cfg, &assembly, &equilibria, seed)?;

    let condition = |dynamic: bool| devices.iter().filter(|d| d.dynamic == dynamic).all(|d| d.condition_met);
    let (c1, c2, c3) = (condition(true), condition(false), coupling.feasible);
    let equilibrium_in_region = equilibria.iter().any(|e| e.in_dg);
    let assumptions_ok = wellposedness.passed && equilibrium_in_region;
    let certified = c1 && c2 && c3 && assumptions_ok;
    let statement = if certified {
        let stable: Vec<String> = equilibria.iter().filter(|e| e.in_dg).map(|e| format!("seed {}", e.seed)).collect();
        format!(
            "conditions 1-3 hold; every isolated equilibrium in D_G is asymptotically stable ({})",
            stable.join(", ")
        )
    } else {
        let mut missing = Vec::new();
        for (ok, what) in [
            (c1, "condition 1 (dynamic devices)"),
            (c2, "condition 2 (static devices)"),
            (c3, "condition 3 (coupling)"),
            (wellposedness.passed, "well-posedness"),
            (equilibrium_in_region, "equilibrium in region"),
        ] {
            if !ok {
                missing.push(what);
            }
        }
        format!("not certified: {} failed", missing.join(", "))
    };
    Ok(CertificationReport {
        provenance: Provenance::new(config_text, cfg),
        verdict: OverallVerdict {
            certified,
            condition_1: c1,
            condition_2: c2,
            condition_3: c3,
            assumptions: assumptions_ok,
            statement,
        },
        devices,
        coupling,
        assumptions: AssumptionChecks {
            wellposedness,
            equilibria_found: equilibria.len(),
            equilibrium_in_region,
            seed_failures,
        },
        equilibria,
    })
}

pub fn run_simulate(cfg: &GridConfig) -> Result<Trajectory> {
    let sim = cfg.simulate.as_ref().ok_or_else(|| Error::Config("[simulate] section is required".into()))?;
    let assembly = cfg.assembly()?;
    simulate(
        &assembly,
        &DVector::from_column_slice(&sim.x0),
        &DVector::from_column_slice(&sim.u_guess),
        cfg.engine.sim_options(),
        &sim.events,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditionSummary {
    pub x0: Vec<f64>,
    pub certified: bool,
    pub predicate: bool,
    pub storage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoaSummary {
    pub weights: Vec<f64>,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_bar: Option<f64>,
    pub boundary_count: usize,
    pub inside_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmin: Option<Vec<f64>>,
    pub touches_grid_edge: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial_conditions: Vec<InitialConditionSummary>,
}

/// Weights from `[weights].p` if given, otherwise from the coupling search.
pub fn resolve_weights(cfg: &GridConfig) -> Result<Vec<f64>> {
    if let Some(p) = &cfg.weights.p {
        return Ok(p.clone());
    }
    let c = run_verify_coupling(cfg)?;
    match c.error {
        Some(e) => Err(Error::InvalidInput(format!("no weights available: {e}"))),
        None => Ok(c.weights),
    }
}

pub fn run_roa(cfg: &GridConfig) -> Result<(LevelScan, RoaSummary)> {
    let roa = cfg.roa.as_ref().ok_or_else(|| Error::Config("[roa] section is required".into()))?;
    let assembly = cfg.assembly()?;
    let predicate = cfg.region_predicate()?;
    let weights = resolve_weights(cfg)?;
    let grid = roa.grid.to_region()?;
    let u_guess = DVector::from_column_slice(&roa.u_guess);
    let opts = cfg.engine.newton();
    let scan = estimate_level(&assembly, &predicate, &weights, &grid, &u_guess, opts)?;
    let mut summary = RoaSummary {
        weights: weights.clone(),
        samples: scan.samples.len(),
        l_bar: None,
        boundary_count: 0,
        inside_count: scan.samples.iter().filter(|s| s.predicate).count(),
        argmin: None,
        touches_grid_edge: false,
        error: None,
        initial_conditions: vec![],
    };
    match &scan.estimate {
        Ok(est) => {
            summary.l_bar = Some(est.l_bar);
            summary.boundary_count = est.boundary_count;
            summary.argmin = Some(est.argmin.iter().copied().collect());
            summary.touches_grid_edge = est.touches_grid_edge;
            for x0 in &roa.initial_conditions {
                let v = certify_initial_condition(
                    &assembly,
                    &predicate,
                    &weights,
                    est.l_bar,
                    &DVector::from_column_slice(x0),
                    &u_guess,
                    roa.margin,
                    opts,
                );
                summary.initial_conditions.push(match v {
                    Ok(v) => InitialConditionSummary {
                        x0: x0.clone(),
                        certified: v.certified,
                        predicate: v.predicate,
                        storage: v.storage,
                        error: None,
                    },
                    Err(e) => InitialConditionSummary {
                        x0: x0.clone(),
                        certified: false,
                        predicate: false,
                        storage: f64::NAN,
                        error: Some(e.to_string()),
                    },
                });
            }
        }
        Err(e) => summary.error = Some(e.to_string()),
    }
    Ok((scan, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certified_window: Option<(f64, f64)>,
    pub bus_windows: Vec<Option<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigen_window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_high: Option<f64>,
}

pub fn run_sweep(cfg: &GridConfig) -> Result<(ContinuationResult, SweepSummary)> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| Error::Config("[sweep] section is required".into()))?;
    let assembly = cfg.assembly()?;
    let predicate = cfg.region_predicate()?;
    let (x, u) = sw.seed.vectors();
    let res =
        continuation_sweep(&assembly, &x, &u, (sw.s_min, sw.s_max), sw.step, Some(&predicate), cfg.engine.newton())?;
    let summary = SweepSummary {
        points: res.points.len(),
        certified_window: res.certified_window(),
        bus_windows: (0..cfg.bus_count()).map(|i| res.bus_window(i)).collect(),
        eigen_window: res.eigen_window(),
        truncated_low: res.truncated_low,
        truncated_high: res.truncated_high,
    };
    Ok((res, summary))
}

/// Runs the calibration and returns it with a copy of the config that has it applied.
pub fn run_calibrate(cfg: &GridConfig) -> Result<(CalibrationResult, GridConfig)> {
    let cal = cfg.calibration.as_ref().ok_or_else(|| Error::Config("[calibration] section is required".into()))?;
    let base = cfg.as_two_bus()?;
    let result = calibrate(&base, &cal.settings, cfg.engine.newton())?;
    let mut updated = cfg.clone();
    updated.apply_calibration(&result)?;
    Ok((result, updated))
}
