//! Whole-system evaluators for the semi-explicit DAE
//! `ẋ = F(x, u)`, `0 = g(x, u) = u + C h(x, u)`.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::devices::BusModel;
use crate::error::{Error, Result};
use crate::linalg::block_diag;
use crate::network::NetworkCoupling;

#[derive(Debug, Clone)]
pub struct SystemAssembly {
    buses: Vec<BusModel>,
    coupling: Arc<NetworkCoupling>,
    state_offsets: Vec<usize>,
    port_offsets: Vec<usize>,
    n: usize,
    m: usize,
    load_scale: f64,
}

/// Block-diagonal device Jacobians stacked over buses.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemJacobians {
    pub fx: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub hx: DMatrix<f64>,
    pub hu: DMatrix<f64>,
}

impl SystemAssembly {
    pub fn new(buses: Vec<BusModel>, coupling: NetworkCoupling) -> Result<Self> {
        if buses.len() != coupling.port_dims().len() {
            return Err(Error::DimensionMismatch(format!(
                "{} devices for a {}-bus coupling",
                buses.len(),
                coupling.port_dims().len()
            )));
        }
        for (i, (bus, &dim)) in buses.iter().zip(coupling.port_dims()).enumerate() {
            if bus.port_dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "bus {i}: device port dim {} but coupling expects {dim}",
                    bus.port_dim()
                )));
            }
        }
        let mut state_offsets = Vec::with_capacity(buses.len());
        let mut port_offsets = Vec::with_capacity(buses.len());
        let (mut n, mut m) = (0, 0);
        for bus in &buses {
            state_offsets.push(n);
            port_offsets.push(m);
            n += bus.state_dim();
            m += bus.port_dim();
        }
        Ok(Self { buses, coupling: Arc::new(coupling), state_offsets, port_offsets, n, m, load_scale: 1.0 })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn port_dim(&self) -> usize {
        self.m
    }

    pub fn buses(&self) -> &[BusModel] {
        &self.buses
    }

    pub fn coupling(&self) -> &NetworkCoupling {
        &self.coupling
    }

    pub fn load_scale(&self) -> f64 {
        self.load_scale
    }

    pub fn state_range(&self, bus: usize) -> Range<usize> {
        let o = self.state_offsets[bus];
        o..o + self.buses[bus].state_dim()
    }

    pub fn port_range(&self, bus: usize) -> Range<usize> {
        let o = self.port_offsets[bus];
        o..o + self.buses[bus].port_dim()
    }

    pub fn bus_state(&self, bus: usize, x: &DVector<f64>) -> DVector<f64> {
        let r = self.state_range(bus);
        x.rows(r.start, r.len()).into_owned()
    }

    pub fn bus_port(&self, bus: usize, u: &DVector<f64>) -> DVector<f64> {
        let r = self.port_range(bus);
        u.rows(r.start, r.len()).into_owned()
    }

    /// Same system with every scalable static device set to demand scale `s`.
    pub fn with_load_scale(&self, s: f64) -> Result<Self> {
        let mut buses = Vec::with_capacity(self.buses.len());
        for bus in &self.buses {
            let next = match bus {
                BusModel::Static(dev) => match dev.rescaled(s) {
                    Some(scaled) => BusModel::Static(scaled?),
                    None => bus.clone(),
                },
                BusModel::Dynamic(_) => bus.clone(),
            };
            buses.push(next);
        }
        Ok(Self { buses, load_scale: s, ..self.clone() })
    }

    fn check_dims(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        if x.len() != self.n || u.len() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "expected x in R^{} and u in R^{}, got {} and {}",
                self.n,
                self.m,
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }

    pub fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(x, u)?;
        let mut out = DVector::zeros(self.n);
        for (i, bus) in self.buses.iter().enumerate() {
            if let BusModel::Dynamic(dev) = bus {
                let r = self.state_range(i);
                out.rows_mut(r.start, r.len()).copy_from(&dev.f(&self.bus_state(i, x), &self.bus_port(i, u)));
            }
        }
        Ok(out)
    }

    pub fn h(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(x, u)?;
        let mut out = DVector::zeros(self.m);
        for (i, bus) in self.buses.iter().enumerate() {
            let ui = self.bus_port(i, u);
            let yi = match bus {
                BusModel::Dynamic(dev) => dev.h(&self.bus_state(i, x), &ui),
                BusModel::Static(dev) => dev.h(&ui)?,
            };
            let r = self.port_range(i);
            out.rows_mut(r.start, r.len()).copy_from(&yi);
        }
        Ok(out)
    }

    /// `g(x, u) = u + C h(x, u)`.
    pub fn g(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(u + self.coupling.c() * self.h(x, u)?)
    }

    pub fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<SystemJacobians> {
        self.check_dims(x, u)?;
        let k = self.buses.len();
        let (mut fx, mut fu, mut hx, mut hu) =
            (Vec::with_capacity(k), Vec::with_capacity(k), Vec::with_capacity(k), Vec::with_capacity(k));
        for (i, bus) in self.buses.iter().enumerate() {
            let ui = self.bus_port(i, u);
            match bus {
                BusModel::Dynamic(dev) => {
                    let j = dev.jacobians(&self.bus_state(i, x), &ui);
                    fx.push(j.fx);
                    fu.push(j.fu);
                    hx.push(j.hx);
                    hu.push(j.hu);
                }
                BusModel::Static(dev) => {
                    let mi = dev.port_dim();
                    fx.push(DMatrix::zeros(0, 0));
                    fu.push(DMatrix::zeros(0, mi));
                    hx.push(DMatrix::zeros(mi, 0));
                    hu.push(dev.h_u(&ui)?);
                }
            }
        }
        Ok(SystemJacobians { fx: block_diag(&fx), fu: block_diag(&fu), hx: block_diag(&hx), hu: block_diag(&hu) })
    }

    /// `(g_x, g_u) = (C H_x, I + C H_u)`.
    pub fn g_jacobians(&self, jac: &SystemJacobians) -> (DMatrix<f64>, DMatrix<f64>) {
        let c = self.coupling.c();
        (c * &jac.hx, DMatrix::identity(self.m, self.m) + c * &jac.hu)
    }
}

/// `u + C h(x, u)`.
pub fn g_residual(assembly: &SystemAssembly, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    assembly.g(x, u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellposednessReport {
    pub samples: usize,
    pub min_abs_det: f64,
    pub argmin: Option<usize>,
    /// Sample indices with `|det| ≤ tol` or a failed device evaluation.
    pub failures: Vec<usize>,
    pub tol: f64,
}

impl WellposednessReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.samples > 0
    }
}

/// Evaluates `det(I + C H_u)` at every `(x, u)` sample.
pub fn wellposedness_scan<'a, I>(assembly: &SystemAssembly, samples: I, tol: f64) -> WellposednessReport
where
    I: IntoIterator<Item = (&'a DVector<f64>, &'a DVector<f64>)>,
{
    let mut report =
        WellposednessReport { samples: 0, min_abs_det: f64::INFINITY, argmin: None, failures: vec![], tol };
    for (k, (x, u)) in samples.into_iter().enumerate() {
        report.samples += 1;
        let det = assembly.jacobians(x, u).map(|j| assembly.g_jacobians(&j).1.determinant().abs());
        match det {
            Ok(d) => {
                if d < report.min_abs_det {
                    report.min_abs_det = d;
                    report.argmin = Some(k);
                }
                if !(d > tol) {
                    report.failures.push(k);
                }
            }
            Err(_) => report.failures.push(k),
        }
    }
    report
}
