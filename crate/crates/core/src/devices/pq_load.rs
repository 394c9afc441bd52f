//! Constant-power load. The port consumes the drawn current `a = −(I_D, I_Q)`
//! and returns the terminal voltage `V = s·(P + jQ) / conj(a)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{PortConvention, StaticDevice};
use crate::error::{Error, Result};

/// Smallest drawn-current magnitude the load map accepts.
pub const DEFAULT_I_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PqLoadParams {
    pub p: f64,
    pub q: f64,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl PqLoadParams {
    pub fn new(p: f64, q: f64) -> Self {
        Self { p, q, scale: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p.is_finite() || !self.q.is_finite() {
            return Err(Error::InvalidInput("load powers must be finite".into()));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidInput(format!("load scale must be > 0, got {}", self.scale)));
        }
        Ok(())
    }

    /// Scaled complex power `s·(P + jQ)`.
    pub fn power(&self) -> Complex64 {
        Complex64::new(self.p, self.q) * self.scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PqLoad {
    params: PqLoadParams,
    i_min: f64,
}

pub fn pq_load(params: PqLoadParams) -> Result<PqLoad> {
    params.validate()?;
    Ok(PqLoad { params, i_min: DEFAULT_I_MIN })
}

impl PqLoad {
    pub fn with_i_min(mut self, i_min: f64) -> Self {
        self.i_min = i_min;
        self
    }

    pub fn load_params(&self) -> &PqLoadParams {
        &self.params
    }

    /// Same load with a different scale factor.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        let params = PqLoadParams { scale, ..self.params };
        params.validate()?;
        Ok(Self { params, i_min: self.i_min })
    }

    fn current(&self, u: &DVector<f64>) -> Result<Complex64> {
        if u.len() != 2 {
            return Err(Error::DimensionMismatch(format!("PQ load expects a 2-vector input, got {}", u.len())));
        }
        let a = Complex64::new(u[0], u[1]);
        let magnitude = a.norm();
        if !(magnitude >= self.i_min) {
            return Err(Error::SingularLoad { magnitude, i_min: self.i_min });
        }
        Ok(a)
    }

    /// `|V·conj(a) − s(P+jQ)|` for a candidate voltage.
    pub fn balance_residual(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let a = Complex64::new(u[0], u[1]);
        let v = Complex64::new(v[0], v[1]);
        (v * a.conj() - self.params.power()).norm()
    }
}

impl StaticDevice for PqLoad {
    fn type_tag(&self) -> &'static str {
        "pq_load"
    }

    fn port_dim(&self) -> usize {
        2
    }

    fn port(&self) -> PortConvention {
        PortConvention::CurrentInVoltageOut
    }

    fn h(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let a = self.current(u)?;
        let v = self.params.power() / a.conj();
        Ok(DVector::from_vec(vec![v.re, v.im]))
    }

    fn h_u(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        // V depends on conj(a) only: dV = w·d(conj a), w = −S/conj(a)².
        let a = self.current(u)?;
        let w = -self.params.power() / (a.conj() * a.conj());
        Ok(DMatrix::from_row_slice(2, 2, &[w.re, w.im, w.im, -w.re]))
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![("p", self.params.p), ("q", self.params.q), ("scale", self.params.scale), ("i_min", self.i_min)]
    }

    fn rescaled(&self, scale: f64) -> Option<Result<Arc<dyn StaticDevice>>> {
        Some(self.scaled(scale).map(|l| Arc::new(l) as Arc<dyn StaticDevice>))
    }
}
