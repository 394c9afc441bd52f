//! Bus devices: dynamic (`ẋ = f(x,u)`, `y = h(x,u)`) and static (`y = h(u)`).

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;

mod linear;
mod pq_load;
mod sg;

pub use linear::{linear_lag_device, LinearLag, LinearStateSpace, LinearStatic};
pub use pq_load::{pq_load, PqLoad, PqLoadParams, DEFAULT_I_MIN};
pub use sg::{sg_flux_decay, FieldAxis, FrameOffset, IntegralSign, SgConvention, SgFluxDecay, SgParams};

/// Which port variable a bus consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortConvention {
    /// `u = (V_D, V_Q)`, `y = −(I_D, I_Q)`.
    VoltageInCurrentOut,
    /// `u = −(I_D, I_Q)`, `y = (V_D, V_Q)`.
    CurrentInVoltageOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceJacobians {
    pub fx: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub hx: DMatrix<f64>,
    pub hu: DMatrix<f64>,
}

pub trait DynamicDevice: Debug + Send + Sync {
    fn type_tag(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn port_dim(&self) -> usize;
    fn port(&self) -> PortConvention;
    fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn h(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> DeviceJacobians;
    fn params(&self) -> Vec<(&'static str, f64)>;
}

pub trait StaticDevice: Debug + Send + Sync {
    fn type_tag(&self) -> &'static str;
    fn port_dim(&self) -> usize;
    fn port(&self) -> PortConvention;
    fn h(&self, u: &DVector<f64>) -> Result<DVector<f64>>;
    fn h_u(&self, u: &DVector<f64>) -> Result<DMatrix<f64>>;
    fn params(&self) -> Vec<(&'static str, f64)>;

    /// Copy of the device with its demand scaled to `scale`; `None` when the device has no demand.
    fn rescaled(&self, _scale: f64) -> Option<Result<Arc<dyn StaticDevice>>> {
        None
    }
}

/// A device attached to one bus.
#[derive(Debug, Clone)]
pub enum BusModel {
    Dynamic(Arc<dyn DynamicDevice>),
    Static(Arc<dyn StaticDevice>),
}

impl BusModel {
    pub fn port_dim(&self) -> usize {
        match self {
            BusModel::Dynamic(d) => d.port_dim(),
            BusModel::Static(s) => s.port_dim(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            BusModel::Dynamic(d) => d.state_dim(),
            BusModel::Static(_) => 0,
        }
    }

    pub fn port(&self) -> PortConvention {
        match self {
            BusModel::Dynamic(d) => d.port(),
            BusModel::Static(s) => s.port(),
        }
    }

    pub fn type_tag(&self) -> &'static str {
        match self {
            BusModel::Dynamic(d) => d.type_tag(),
            BusModel::Static(s) => s.type_tag(),
        }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self, BusModel::Dynamic(_))
    }
}
