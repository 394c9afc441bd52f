//! Linear test devices.

use nalgebra::{DMatrix, DVector};

use super::{DeviceJacobians, DynamicDevice, PortConvention, StaticDevice};
use crate::error::{Error, Result};

/// `ẋ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    port: PortConvention,
}

impl LinearStateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if !a.is_square() || n == 0 || m == 0 {
            return Err(Error::DimensionMismatch("A must be square and non-empty, B must have columns".into()));
        }
        if b.nrows() != n || c.shape() != (m, n) || d.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "state-space shapes: A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        if [&a, &b, &c, &d].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("state-space matrices must be finite".into()));
        }
        Ok(Self { a, b, c, d, port: PortConvention::VoltageInCurrentOut })
    }

    pub fn with_port(mut self, port: PortConvention) -> Self {
        self.port = port;
        self
    }

    pub fn matrices(&self) -> (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>) {
        (&self.a, &self.b, &self.c, &self.d)
    }
}

impl DynamicDevice for LinearStateSpace {
    fn type_tag(&self) -> &'static str {
        "linear_state_space"
    }

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn port_dim(&self) -> usize {
        self.b.ncols()
    }

    fn port(&self) -> PortConvention {
        self.port
    }

    fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    fn h(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.d * u
    }

    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DeviceJacobians {
        DeviceJacobians { fx: self.a.clone(), fu: self.b.clone(), hx: self.c.clone(), hu: self.d.clone() }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![("state_dim", self.state_dim() as f64), ("port_dim", self.port_dim() as f64)]
    }
}

/// First-order lag `ẋ = (−x + gain·u)/tau`, `y = x`, applied per port channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLag {
    tau: f64,
    gain: f64,
    inner: LinearStateSpace,
}

/// Scalar lag device.
pub fn linear_lag_device(tau: f64, gain: f64) -> Result<LinearLag> {
    LinearLag::new(tau, gain, 1)
}

impl LinearLag {
    pub fn new(tau: f64, gain: f64, dim: usize) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() || !gain.is_finite() {
            return Err(Error::InvalidInput(format!("lag needs tau > 0 and finite gain, got tau={tau}, gain={gain}")));
        }
        if dim == 0 {
            return Err(Error::InvalidInput("lag dimension must be positive".into()));
        }
        let id = DMatrix::<f64>::identity(dim, dim);
        let inner =
            LinearStateSpace::new(&id * (-1.0 / tau), &id * (gain / tau), id.clone(), DMatrix::zeros(dim, dim))?;
        Ok(Self { tau, gain, inner })
    }

    pub fn with_port(mut self, port: PortConvention) -> Self {
        self.inner = self.inner.with_port(port);
        self
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }
}

impl DynamicDevice for LinearLag {
    fn type_tag(&self) -> &'static str {
        "linear_lag"
    }

    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn port_dim(&self) -> usize {
        self.inner.port_dim()
    }

    fn port(&self) -> PortConvention {
        self.inner.port()
    }

    fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.inner.f(x, u)
    }

    fn h(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.inner.h(x, u)
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> DeviceJacobians {
        self.inner.jacobians(x, u)
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![("tau", self.tau), ("gain", self.gain)]
    }
}

/// Memoryless linear map `y = R u`; `R = I` gives the identity device.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStatic {
    r: DMatrix<f64>,
    port: PortConvention,
}

impl LinearStatic {
    pub fn new(r: DMatrix<f64>) -> Result<Self> {
        if !r.is_square() || r.nrows() == 0 {
            return Err(Error::DimensionMismatch("static gain must be square and non-empty".into()));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("static gain must be finite".into()));
        }
        Ok(Self { r, port: PortConvention::CurrentInVoltageOut })
    }

    pub fn identity(dim: usize) -> Self {
        Self { r: DMatrix::identity(dim, dim), port: PortConvention::CurrentInVoltageOut }
    }

    pub fn with_port(mut self, port: PortConvention) -> Self {
        self.port = port;
        self
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.r
    }
}

impl StaticDevice for LinearStatic {
    fn type_tag(&self) -> &'static str {
        "linear_static"
    }

    fn port_dim(&self) -> usize {
        self.r.nrows()
    }

    fn port(&self) -> PortConvention {
        self.port
    }

    fn h(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.r.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "static device expects {} inputs, got {}",
                self.r.ncols(),
                u.len()
            )));
        }
        Ok(&self.r * u)
    }

    fn h_u(&self, _u: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.r.clone())
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![("port_dim", self.r.nrows() as f64)]
    }
}
