//! TOML grid description: network, devices, certificates and run settings.
//!
//! Bus numbers are 1-based in the file and 0-based everywhere else. Matrices
//! are row-major arrays of arrays. Validation errors name the offending key
//! path (`devices[1].params`); syntax errors carry the parser's line/column.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::SystemAssembly;
use crate::calibration::{CalibrationResult, CalibrationSettings};
use crate::coupling::WeightStrategy;
use crate::dae::{LoadEvent, NewtonOptions, SimOptions};
use crate::devices::{
    pq_load, sg_flux_decay, BusModel, LinearLag, LinearStatic, PortConvention, PqLoadParams, SgConvention, SgParams,
};
use crate::dissipativity::{VerifyMode, VerifyOptions, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::linalg::{Rows, SymmetricMatrix, DEFAULT_PSD_TOL};
use crate::network::{AdmittanceNetwork, Branch, NetworkCoupling, Shunt};
use crate::region::BoxRegion;
use crate::roa::{BusPredicate, RegionPredicate, DEFAULT_LEVEL_MARGIN};
use crate::twobus::TwoBusSystem;

fn err(path: impl std::fmt::Display, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub network: NetworkConfig,
    pub devices: Vec<DeviceConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<CertificateConfig>,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<EquilibriaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roa: Option<RoaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
}

/// Either an admittance network (`buses` + `branches`) or an explicit coupling matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub buses: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branches: Vec<Branch>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shunts: Vec<Shunt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_matrix: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port_dims: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeviceConfig {
    SgFluxDecay {
        bus: usize,
        params: SgParams,
        #[serde(default = "literal_convention")]
        convention: SgConvention,
    },
    PqLoad {
        bus: usize,
        params: PqLoadParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        i_min: Option<f64>,
    },
    LinearLag {
        bus: usize,
        tau: f64,
        gain: f64,
        #[serde(default = "one")]
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        port: Option<PortConvention>,
    },
    LinearStatic {
        bus: usize,
        gain: Rows,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        port: Option<PortConvention>,
    },
}

impl DeviceConfig {
    pub fn bus(&self) -> usize {
        match self {
            DeviceConfig::SgFluxDecay { bus, .. }
            | DeviceConfig::PqLoad { bus, .. }
            | DeviceConfig::LinearLag { bus, .. }
            | DeviceConfig::LinearStatic { bus, .. } => *bus,
        }
    }
}

fn literal_convention() -> SgConvention {
    SgConvention::LITERAL
}

fn one() -> usize {
    1
}

/// How the sampled box relates to the certified region `D_i`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainMode {
    /// `D_i` is the part of the box where the matrix condition holds; non-empty suffices.
    #[default]
    DissipativeSubset,
    /// `D_i` is the whole box; every sample must pass.
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub samples: Vec<usize>,
}

impl RegionConfig {
    pub fn to_region(&self) -> Result<BoxRegion> {
        BoxRegion::new(self.lower.clone(), self.upper.clone(), self.samples.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    pub bus: usize,
    /// Storage matrix; omitted for static devices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Rows>,
    pub x: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Box over `(x_i, u_i)` for dynamic buses, over `u_i` for static ones.
    pub region: RegionConfig,
    #[serde(default)]
    pub domain: DomainMode,
    #[serde(default = "uniform")]
    pub mode: VerifyMode,
}

fn uniform() -> VerifyMode {
    VerifyMode::Uniform
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Fixed,
    #[default]
    Search,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default)]
    pub mode: WeightMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
}

impl WeightsConfig {
    pub fn strategy(&self) -> WeightStrategy {
        match self.mode {
            WeightMode::Fixed => WeightStrategy::Fixed { p: self.p.clone().unwrap_or_default() },
            WeightMode::Search => WeightStrategy::Auto { p: self.p.clone() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub dt: f64,
    pub t_end: f64,
    pub alg_tol: f64,
    pub max_newton: usize,
    pub psd_tol: f64,
    pub eig_tol: f64,
    /// Random `(x, u)` draws for the well-posedness scan.
    pub wellposedness_samples: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 100.0,
            alg_tol: 1e-10,
            max_newton: 50,
            psd_tol: DEFAULT_PSD_TOL,
            eig_tol: crate::dae::EIG_TOL,
            wellposedness_samples: 1000,
        }
    }
}

impl EngineConfig {
    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions { tol: self.alg_tol, max_iter: self.max_newton }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions { t_end: self.t_end, dt: self.dt, newton: self.newton() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seed {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl Seed {
    pub fn vectors(&self) -> (DVector<f64>, DVector<f64>) {
        (DVector::from_column_slice(&self.x), DVector::from_column_slice(&self.u))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaConfig {
    pub seeds: Vec<Seed>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub x0: Vec<f64>,
    pub u_guess: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<LoadEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoaConfig {
    /// State grid.
    pub grid: RegionConfig,
    pub u_guess: Vec<f64>,
    #[serde(default = "level_margin")]
    pub margin: f64,
    /// Initial conditions to certify against the estimated level.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial_conditions: Vec<Vec<f64>>,
}

fn level_margin() -> f64 {
    DEFAULT_LEVEL_MARGIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub s_min: f64,
    pub s_max: f64,
    pub step: f64,
    pub seed: Seed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub settings: CalibrationSettings,
    /// Outcome of a previous run, already applied to `[network]` and `[[devices]]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<CalibrationResult>,
}

impl GridConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: GridConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| err(path.display(), e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn bus_count(&self) -> usize {
        self.network.buses
    }

    fn bus_index(&self, path: &str, bus: usize) -> Result<usize> {
        if bus == 0 || bus > self.bus_count() {
            return Err(err(path, format!("bus {bus} outside 1..={}", self.bus_count())));
        }
        Ok(bus - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.bus_count();
        if n == 0 {
            return Err(err("network.buses", "must be positive"));
        }
        let net = &self.network;
        match (&net.coupling_matrix, &net.port_dims) {
            (Some(_), None) | (None, Some(_)) => {
                return Err(err("network", "coupling_matrix and port_dims must be given together"));
            }
            (Some(_), Some(dims)) => {
                if !net.branches.is_empty() || !net.shunts.is_empty() {
                    return Err(err("network", "an explicit coupling_matrix excludes branches and shunts"));
                }
                if dims.len() != n {
                    return Err(err("network.port_dims", format!("expected {n} entries, got {}", dims.len())));
                }
            }
            (None, None) => {
                for (k, b) in net.branches.iter().enumerate() {
                    for (end, bus) in [("from", b.from), ("to", b.to)] {
                        self.bus_index(&format!("network.branches[{k}].{end}"), bus)?;
                    }
                }
                for (k, s) in net.shunts.iter().enumerate() {
                    self.bus_index(&format!("network.shunts[{k}].bus"), s.bus)?;
                }
            }
        }

        let mut seen = vec![false; n];
        for (k, d) in self.devices.iter().enumerate() {
            let i = self.bus_index(&format!("devices[{k}].bus"), d.bus())?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(err(format!("devices[{k}].bus"), format!("bus {} already has a device", d.bus())));
            }
            self.build_device(k).map_err(|e| err(format!("devices[{k}]"), e))?;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(err("devices", format!("bus {} has no device", missing + 1)));
        }

        let mut cert_seen = vec![false; n];
        for (k, c) in self.certificates.iter().enumerate() {
            let i = self.bus_index(&format!("certificates[{k}].bus"), c.bus)?;
            if std::mem::replace(&mut cert_seen[i], true) {
                return Err(err(format!("certificates[{k}].bus"), format!("bus {} certified twice", c.bus)));
            }
            self.check_certificate(k).map_err(|e| err(format!("certificates[{k}]"), e))?;
        }

        if let Some(p) = &self.weights.p {
            if p.len() != n || p.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(err("weights.p", format!("need {n} positive weights")));
            }
        } else if self.weights.mode == WeightMode::Fixed {
            return Err(err("weights.p", "required when mode = \"fixed\""));
        }

        let e = &self.engine;
        if !(e.dt > 0.0) || !(e.t_end > 0.0) || !(e.alg_tol > 0.0) || e.max_newton == 0 {
            return Err(err("engine", "dt, t_end, alg_tol and max_newton must be positive"));
        }
        if !(e.psd_tol >= 0.0) || !(e.eig_tol >= 0.0) {
            return Err(err("engine", "tolerances must be non-negative"));
        }

        let (nx, nu) = self.dims()?;
        let check_len = |path: &str, v: &[f64], want: usize| {
            if v.len() != want {
                Err(err(path, format!("expected {want} entries, got {}", v.len())))
            } else {
                Ok(())
            }
        };
        if let Some(eq) = &self.equilibria {
            for (k, s) in eq.seeds.iter().enumerate() {
                check_len(&format!("equilibria.seeds[{k}].x"), &s.x, nx)?;
                check_len(&format!("equilibria.seeds[{k}].u"), &s.u, nu)?;
            }
        }
        if let Some(sim) = &self.simulate {
            check_len("simulate.x0", &sim.x0, nx)?;
            check_len("simulate.u_guess", &sim.u_guess, nu)?;
            for (k, ev) in sim.events.iter().enumerate() {
                if !(ev.time >= 0.0) || !(ev.scale > 0.0) {
                    return Err(err(format!("simulate.events[{k}]"), "need time >= 0 and scale > 0"));
                }
            }
        }
        if let Some(roa) = &self.roa {
            roa.grid.to_region().map_err(|e| err("roa.grid", e))?;
            check_len("roa.grid.lower", &roa.grid.lower, nx)?;
            check_len("roa.u_guess", &roa.u_guess, nu)?;
            for (k, x0) in roa.initial_conditions.iter().enumerate() {
                check_len(&format!("roa.initial_conditions[{k}]"), x0, nx)?;
            }
        }
        if let Some(sw) = &self.sweep {
            if !(sw.s_min > 0.0 && sw.s_min <= 1.0 && sw.s_max >= 1.0 && sw.step > 0.0) {
                return Err(err("sweep", "need 0 < s_min <= 1 <= s_max and step > 0"));
            }
            check_len("sweep.seed.x", &sw.seed.x, nx)?;
            check_len("sweep.seed.u", &sw.seed.u, nu)?;
        }
        Ok(())
    }

    fn build_device(&self, k: usize) -> Result<BusModel> {
        Ok(match &self.devices[k] {
            DeviceConfig::SgFluxDecay { params, convention, .. } => {
                BusModel::Dynamic(Arc::new(sg_flux_decay(*params, *convention)?))
            }
            DeviceConfig::PqLoad { params, i_min, .. } => {
                let mut load = pq_load(*params)?;
                if let Some(i) = i_min {
                    if !(*i > 0.0) {
                        return Err(Error::InvalidInput("i_min must be positive".into()));
                    }
                    load = load.with_i_min(*i);
                }
                BusModel::Static(Arc::new(load))
            }
            DeviceConfig::LinearLag { tau, gain, dim, port, .. } => {
                let mut lag = LinearLag::new(*tau, *gain, *dim)?;
                if let Some(p) = port {
                    lag = lag.with_port(*p);
                }
                BusModel::Dynamic(Arc::new(lag))
            }
            DeviceConfig::LinearStatic { gain, port, .. } => {
                let mut dev = LinearStatic::new(gain.to_matrix()?)?;
                if let Some(p) = port {
                    dev = dev.with_port(*p);
                }
                BusModel::Static(Arc::new(dev))
            }
        })
    }

    /// Devices in bus order.
    pub fn bus_models(&self) -> Result<Vec<BusModel>> {
        let mut order: Vec<usize> = (0..self.devices.len()).collect();
        order.sort_by_key(|&k| self.devices[k].bus());
        order.into_iter().map(|k| self.build_device(k)).collect()
    }

    fn dims(&self) -> Result<(usize, usize)> {
        let models = self.bus_models()?;
        Ok((models.iter().map(BusModel::state_dim).sum(), models.iter().map(BusModel::port_dim).sum()))
    }

    pub fn coupling(&self) -> Result<NetworkCoupling> {
        let net = &self.network;
        if let (Some(c), Some(dims)) = (&net.coupling_matrix, &net.port_dims) {
            return NetworkCoupling::explicit(c.to_matrix()?, dims.clone());
        }
        let to0 = |b: usize| b - 1;
        let branches: Vec<Branch> =
            net.branches.iter().map(|b| Branch { from: to0(b.from), to: to0(b.to), ..*b }).collect();
        let shunts: Vec<Shunt> = net.shunts.iter().map(|s| Shunt { bus: to0(s.bus), ..*s }).collect();
        let adm = AdmittanceNetwork::from_branches(self.bus_count(), &branches, &shunts)?;
        let ports: Vec<PortConvention> = self.bus_models()?.iter().map(BusModel::port).collect();
        NetworkCoupling::from_network(&adm, &ports)
    }

    pub fn assembly(&self) -> Result<SystemAssembly> {
        SystemAssembly::new(self.bus_models()?, self.coupling()?)
    }

    fn check_certificate(&self, k: usize) -> Result<()> {
        let c = &self.certificates[k];
        let model = self.build_device(self.device_index(c.bus)?)?;
        let (n, m) = (model.state_dim(), model.port_dim());
        let x = c.x.to_matrix()?;
        if x.shape() != (2 * m, 2 * m) {
            return Err(err("x", format!("must be {0}x{0}", 2 * m)));
        }
        let region = c.region.to_region().map_err(|e| err("region", e))?;
        match model {
            BusModel::Dynamic(_) => {
                let p = c.p.as_ref().ok_or_else(|| err("p", "required for a dynamic device"))?.to_matrix()?;
                if p.shape() != (n, n) {
                    return Err(err("p", format!("must be {n}x{n}")));
                }
                if region.dim() != n + m {
                    return Err(err("region", format!("needs {} axes over (x_i, u_i)", n + m)));
                }
                if let Some(eps) = c.epsilon {
                    if !(eps > 0.0) {
                        return Err(err("epsilon", "must be positive"));
                    }
                }
            }
            BusModel::Static(_) => {
                if c.p.is_some() || c.epsilon.is_some() {
                    return Err(err("p", "static devices take only x and region"));
                }
                if region.dim() != m {
                    return Err(err("region", format!("needs {m} axes over u_i")));
                }
            }
        }
        Ok(())
    }

    fn device_index(&self, bus: usize) -> Result<usize> {
        self.devices
            .iter()
            .position(|d| d.bus() == bus)
            .ok_or_else(|| err("devices", format!("no device on bus {bus}")))
    }

    /// Certificate for 0-based bus `i`, if any.
    pub fn certificate(&self, i: usize) -> Option<&CertificateConfig> {
        self.certificates.iter().find(|c| c.bus == i + 1)
    }

    pub fn verify_options(&self, cert: &CertificateConfig) -> VerifyOptions {
        VerifyOptions { mode: cert.mode, psd_tol: self.engine.psd_tol }
    }

    /// `X_i` per bus in bus order; every bus must be certified.
    pub fn supply_matrices(&self) -> Result<Vec<SymmetricMatrix>> {
        (0..self.bus_count())
            .map(|i| {
                let c = self
                    .certificate(i)
                    .ok_or_else(|| err("certificates", format!("bus {} has no certificate", i + 1)))?;
                SymmetricMatrix::new(c.x.to_matrix()?)
            })
            .collect()
    }

    /// Dissipative-region predicate `D_G`; uncertified buses impose nothing.
    pub fn region_predicate(&self) -> Result<RegionPredicate> {
        let models = self.bus_models()?;
        let buses = models
            .iter()
            .enumerate()
            .map(|(i, model)| {
                let Some(c) = self.certificate(i) else { return Ok(BusPredicate::Free) };
                let x = SymmetricMatrix::new(c.x.to_matrix()?)?;
                let region = Some(c.region.to_region()?);
                Ok(match model {
                    BusModel::Dynamic(_) => BusPredicate::Dynamic {
                        p: SymmetricMatrix::new(c.p.as_ref().expect("validated").to_matrix()?)?,
                        x,
                        epsilon: c.epsilon.unwrap_or(DEFAULT_EPSILON),
                        region,
                    },
                    BusModel::Static(_) => BusPredicate::Static { x, region },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RegionPredicate::new(buses).with_tol(self.engine.psd_tol))
    }

    /// The config read as the two-bus generator/load benchmark, if it has that shape.
    pub fn as_two_bus(&self) -> Result<TwoBusSystem> {
        let shape = || err("network", "calibration needs a generator on bus 1, a PQ load on bus 2 and one line");
        if self.bus_count() != 2 || self.network.branches.len() != 1 || !self.network.shunts.is_empty() {
            return Err(shape());
        }
        let dev = |bus| self.devices.iter().find(|d| d.bus() == bus);
        let (
            Some(DeviceConfig::SgFluxDecay { params, convention, .. }),
            Some(DeviceConfig::PqLoad { params: load, .. }),
        ) = (dev(1), dev(2))
        else {
            return Err(shape());
        };
        let line = self.network.branches[0];
        if line.b != 0.0 {
            return Err(shape());
        }
        Ok(TwoBusSystem { sg: *params, convention: *convention, load: *load, r: line.r, x: line.x })
    }

    /// Writes a calibration outcome into the line, load, generator convention and `[calibration]`.
    pub fn apply_calibration(&mut self, result: &CalibrationResult) -> Result<()> {
        self.as_two_bus()?;
        let line = &mut self.network.branches[0];
        line.r = result.r;
        line.x = result.x;
        for d in &mut self.devices {
            match d {
                DeviceConfig::SgFluxDecay { convention, .. } => *convention = result.convention,
                DeviceConfig::PqLoad { params, .. } => params.p = result.load_p,
                _ => {}
            }
        }
        if let Some(c) = &mut self.calibration {
            c.result = Some(result.clone());
        }
        self.validate()
    }
}

/// Dense vector from a config list.
pub fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Dense matrix from config rows.
pub fn matrix(rows: &Rows) -> Result<DMatrix<f64>> {
    rows.to_matrix()
}
