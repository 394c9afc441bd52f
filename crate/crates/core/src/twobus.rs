//! Two-bus benchmark: a flux-decay generator on bus 1 feeding a constant-PQ
//! load on bus 2 through one series line `r + jx`.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assembly::SystemAssembly;
use crate::devices::{pq_load, sg_flux_decay, BusModel, PortConvention, PqLoadParams, SgConvention, SgParams};
use crate::error::Result;
use crate::linalg::SymmetricMatrix;
use crate::network::{AdmittanceNetwork, Branch, NetworkCoupling};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBusSystem {
    pub sg: SgParams,
    pub convention: SgConvention,
    pub load: PqLoadParams,
    pub r: f64,
    pub x: f64,
}

impl TwoBusSystem {
    pub fn coupling(&self) -> Result<NetworkCoupling> {
        let net = AdmittanceNetwork::from_branches(2, &[Branch { from: 0, to: 1, r: self.r, x: self.x, b: 0.0 }], &[])?;
        NetworkCoupling::from_network(&net, &[PortConvention::VoltageInCurrentOut, PortConvention::CurrentInVoltageOut])
    }

    pub fn assembly(&self) -> Result<SystemAssembly> {
        let sg = sg_flux_decay(self.sg, self.convention)?;
        let load = pq_load(self.load)?;
        SystemAssembly::new(vec![BusModel::Dynamic(Arc::new(sg)), BusModel::Static(Arc::new(load))], self.coupling()?)
    }
}

/// Operating point given as `(δ, ω, E'q)`, generator terminal voltage and load current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEquilibrium {
    pub x: [f64; 3],
    pub u1: [f64; 2],
    pub u2: [f64; 2],
}

impl ReferenceEquilibrium {
    pub fn state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    pub fn ports(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.u1[0], self.u1[1], self.u2[0], self.u2[1]])
    }

    /// Max-abs deviation over `(x, u1, u2)`.
    pub fn deviation(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (x - self.state()).amax().max((u - self.ports()).amax())
    }
}

/// Two-bus benchmark data: certificates, operating points and experiment outcomes.
pub mod reference {
    use super::*;

    pub const EQ1: ReferenceEquilibrium =
        ReferenceEquilibrium { x: [0.1527, 0.0, 1.0118], u1: [1.0, 0.0], u2: [0.4018, -0.1175] };
    pub const EQ2: ReferenceEquilibrium =
        ReferenceEquilibrium { x: [0.1231, 0.0, 0.4757], u1: [0.3443, -0.1701], u2: [0.6664, -1.1001] };

    /// Initial state of the transient run.
    pub const X0: [f64; 3] = [0.16, 0.02, 0.92];
    /// Critical storage level of the region-of-attraction estimate.
    pub const LEVEL: f64 = 0.2104;
    /// Load-scale windows: generator region, load region, eigen-stable upper end.
    pub const GENERATOR_WINDOW: (f64, f64) = (0.901, 1.075);
    pub const LOAD_WINDOW: (f64, f64) = (0.787, 1.153);
    pub const EIGEN_UPPER: f64 = 1.564;

    /// Stated load demand.
    pub const LOAD: PqLoadParams = PqLoadParams { p: 0.5, q: 0.1, scale: 1.0 };

    pub const P1: [[f64; 3]; 3] = [[92.44, 28.52, -36.55], [28.52, 82.60, 54.99], [-36.55, 54.99, 1000.0]];
    pub const X1: [[f64; 4]; 4] = [
        [103.62, -97.64, -510.82, -92.69],
        [-97.64, -33.48, 98.23, -4.92],
        [-510.82, 98.23, 1000.0, -7.11],
        [-92.69, -4.92, -7.11, 6.89],
    ];
    pub const X2: [[f64; 4]; 4] = [
        [-990.65, 60.05, -503.64, 100.99],
        [60.05, -5.89, -73.28, -6.23],
        [-503.64, -73.28, -107.64, 93.60],
        [100.99, -6.23, 93.60, 29.41],
    ];

    fn sym<const N: usize>(a: &[[f64; N]; N]) -> SymmetricMatrix {
        let rows: Vec<Vec<f64>> = a.iter().map(|r| r.to_vec()).collect();
        SymmetricMatrix::from_rows(&rows).expect("finite constant")
    }

    pub fn p1() -> SymmetricMatrix {
        sym(&P1)
    }

    pub fn x1() -> SymmetricMatrix {
        sym(&X1)
    }

    pub fn x2() -> SymmetricMatrix {
        sym(&X2)
    }
}
