//! Third-order flux-decay synchronous generator with an integral frequency term.
//!
//! State `x = (δ, ω, E'q)`, input `u = (V_D, V_Q)` in the common frame, output
//! `y = −(I_D, I_Q)` (negated current injection). The machine-frame quantities
//! are obtained by rotating the common frame by `−θ(δ)`:
//!
//! ```text
//! V_d + jV_q = e^{−jθ}(V_D + jV_Q)
//! I_d = −V_q / x_q,   I_q = (V_d − E'q) / x'_d
//! Pᵉ  = E'q I_d + (x'_d − x_q) I_d I_q
//! δ̇ = ω
//! M ω̇ = −D ω − Pᵉ + Pᵐ ± K_I δ
//! T'_d0 Ė'q = −E'q + I_field (x_d − x'_d) + E_f
//! ```
//!
//! The rotation offset, the machine-frame current driving the field equation
//! and the sign of the integral term are configured by [`SgConvention`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::{DeviceJacobians, DynamicDevice, PortConvention};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgParams {
    pub m: f64,
    pub d: f64,
    pub t_d0: f64,
    pub x_d: f64,
    pub x_q: f64,
    pub x_d_prime: f64,
    pub p_m: f64,
    pub e_f: f64,
    pub k_i: f64,
}

impl SgParams {
    /// Two-bus benchmark machine (per unit).
    pub fn benchmark() -> Self {
        Self { m: 0.41, d: 0.3, t_d0: 5.4, x_d: 0.67, x_q: 0.40, x_d_prime: 0.13, p_m: 0.48, e_f: 1.11, k_i: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.m, self.d, self.t_d0, self.x_d, self.x_q, self.x_d_prime, self.p_m, self.e_f, self.k_i];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("SG parameters must be finite".into()));
        }
        let checks = [
            (self.m > 0.0, "M > 0"),
            (self.t_d0 > 0.0, "T'_d0 > 0"),
            (self.x_q > 0.0, "x_q > 0"),
            (self.x_d_prime > 0.0, "x'_d > 0"),
            (self.k_i >= 0.0, "K_I >= 0"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::InvalidInput(format!("SG parameter constraint violated: {what}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameOffset {
    /// θ(δ) = δ
    Delta,
    /// θ(δ) = δ − π/2
    DeltaMinusHalfPi,
}

impl FrameOffset {
    fn offset(self) -> f64 {
        match self {
            FrameOffset::Delta => 0.0,
            FrameOffset::DeltaMinusHalfPi => -FRAC_PI_2,
        }
    }
}

/// Machine-frame current component that drives the field-voltage equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldAxis {
    D,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralSign {
    /// `+K_I δ` in the swing equation.
    Positive,
    /// `−K_I δ` in the swing equation.
    Negative,
}

impl IntegralSign {
    fn sign(self) -> f64 {
        match self {
            IntegralSign::Positive => 1.0,
            IntegralSign::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgConvention {
    pub frame: FrameOffset,
    pub field_axis: FieldAxis,
    pub integral_sign: IntegralSign,
}

impl SgConvention {
    /// The equations exactly as written: θ = δ, field driven by `I_d`, `+K_I δ`.
    pub const LITERAL: SgConvention =
        SgConvention { frame: FrameOffset::Delta, field_axis: FieldAxis::D, integral_sign: IntegralSign::Positive };

    pub fn all() -> Vec<SgConvention> {
        let mut out = Vec::with_capacity(8);
        for frame in [FrameOffset::Delta, FrameOffset::DeltaMinusHalfPi] {
            for field_axis in [FieldAxis::D, FieldAxis::Q] {
                for integral_sign in [IntegralSign::Positive, IntegralSign::Negative] {
                    out.push(SgConvention { frame, field_axis, integral_sign });
                }
            }
        }
        out
    }

    pub fn label(&self) -> String {
        let frame = match self.frame {
            FrameOffset::Delta => "theta=delta",
            FrameOffset::DeltaMinusHalfPi => "theta=delta-pi/2",
        };
        let axis = match self.field_axis {
            FieldAxis::D => "field=I_d",
            FieldAxis::Q => "field=I_q",
        };
        let sign = match self.integral_sign {
            IntegralSign::Positive => "+K_I*delta",
            IntegralSign::Negative => "-K_I*delta",
        };
        format!("{frame},{axis},{sign}")
    }
}

impl Default for SgConvention {
    fn default() -> Self {
        Self::LITERAL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgFluxDecay {
    params: SgParams,
    convention: SgConvention,
}

/// Machine-frame quantities and their gradients with respect to `(δ, E'q, V_D, V_Q)`.
struct MachineState {
    i_d: f64,
    i_q: f64,
    p_e: f64,
    i_cd: f64,
    i_cq: f64,
    g_id: [f64; 4],
    g_iq: [f64; 4],
    g_pe: [f64; 4],
    g_icd: [f64; 4],
    g_icq: [f64; 4],
}

impl SgFluxDecay {
    pub fn params_struct(&self) -> &SgParams {
        &self.params
    }

    pub fn convention(&self) -> SgConvention {
        self.convention
    }

    fn machine(&self, delta: f64, eq: f64, vd_c: f64, vq_c: f64) -> MachineState {
        let p = &self.params;
        let theta = delta + self.convention.frame.offset();
        let (s, c) = theta.sin_cos();
        let v_d = c * vd_c + s * vq_c;
        let v_q = -s * vd_c + c * vq_c;
        // gradients of V_d, V_q w.r.t. (δ, E, V_D, V_Q); dθ/dδ = 1
        let g_vd = [v_q, 0.0, c, s];
        let g_vq = [-v_d, 0.0, -s, c];

        let i_d = -v_q / p.x_q;
        let i_q = (v_d - eq) / p.x_d_prime;
        let g_id = g_vq.map(|g| -g / p.x_q);
        let mut g_iq = g_vd.map(|g| g / p.x_d_prime);
        g_iq[1] -= 1.0 / p.x_d_prime;

        let k = p.x_d_prime - p.x_q;
        let p_e = eq * i_d + k * i_d * i_q;
        let mut g_pe = [0.0; 4];
        for j in 0..4 {
            g_pe[j] = (eq + k * i_q) * g_id[j] + k * i_d * g_iq[j];
        }
        g_pe[1] += i_d;

        // back to the common frame: I_D + jI_Q = e^{jθ}(I_d + jI_q)
        let i_cd = c * i_d - s * i_q;
        let i_cq = s * i_d + c * i_q;
        let mut g_icd = [0.0; 4];
        let mut g_icq = [0.0; 4];
        for j in 0..4 {
            g_icd[j] = c * g_id[j] - s * g_iq[j];
            g_icq[j] = s * g_id[j] + c * g_iq[j];
        }
        g_icd[0] += -s * i_d - c * i_q;
        g_icq[0] += c * i_d - s * i_q;

        MachineState { i_d, i_q, p_e, i_cd, i_cq, g_id, g_iq, g_pe, g_icd, g_icq }
    }

    /// Electrical power `Pᵉ` at a state/input pair.
    pub fn electrical_power(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.machine(x[0], x[2], u[0], u[1]).p_e
    }

    /// Machine-frame currents `(I_d, I_q)`.
    pub fn machine_currents(&self, x: &DVector<f64>, u: &DVector<f64>) -> (f64, f64) {
        let m = self.machine(x[0], x[2], u[0], u[1]);
        (m.i_d, m.i_q)
    }
}

/// Flux-decay synchronous generator with the given parameters and frame convention.
pub fn sg_flux_decay(params: SgParams, convention: SgConvention) -> Result<SgFluxDecay> {
    params.validate()?;
    Ok(SgFluxDecay { params, convention })
}

impl DynamicDevice for SgFluxDecay {
    fn type_tag(&self) -> &'static str {
        "sg_flux_decay"
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn port_dim(&self) -> usize {
        2
    }

    fn port(&self) -> PortConvention {
        PortConvention::VoltageInCurrentOut
    }

    fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let (delta, omega, eq) = (x[0], x[1], x[2]);
        let m = self.machine(delta, eq, u[0], u[1]);
        let i_field = match self.convention.field_axis {
            FieldAxis::D => m.i_d,
            FieldAxis::Q => m.i_q,
        };
        let ks = self.convention.integral_sign.sign() * p.k_i;
        DVector::from_vec(vec![
            omega,
            (-p.d * omega - m.p_e + p.p_m + ks * delta) / p.m,
            (-eq + i_field * (p.x_d - p.x_d_prime) + p.e_f) / p.t_d0,
        ])
    }

    fn h(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let m = self.machine(x[0], x[2], u[0], u[1]);
        DVector::from_vec(vec![-m.i_cd, -m.i_cq])
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> DeviceJacobians {
        let p = &self.params;
        let m = self.machine(x[0], x[2], u[0], u[1]);
        let g_field = match self.convention.field_axis {
            FieldAxis::D => m.g_id,
            FieldAxis::Q => m.g_iq,
        };
        let ks = self.convention.integral_sign.sign() * p.k_i;
        let xd_diff = p.x_d - p.x_d_prime;

        // z = (δ, E, V_D, V_Q); x = (δ, ω, E); u = (V_D, V_Q)
        let mut fx = DMatrix::zeros(3, 3);
        fx[(0, 1)] = 1.0;
        fx[(1, 0)] = (-m.g_pe[0] + ks) / p.m;
        fx[(1, 1)] = -p.d / p.m;
        fx[(1, 2)] = -m.g_pe[1] / p.m;
        fx[(2, 0)] = g_field[0] * xd_diff / p.t_d0;
        fx[(2, 2)] = (-1.0 + g_field[1] * xd_diff) / p.t_d0;

        let mut fu = DMatrix::zeros(3, 2);
        for j in 0..2 {
            fu[(1, j)] = -m.g_pe[2 + j] / p.m;
            fu[(2, j)] = g_field[2 + j] * xd_diff / p.t_d0;
        }

        let mut hx = DMatrix::zeros(2, 3);
        hx[(0, 0)] = -m.g_icd[0];
        hx[(0, 2)] = -m.g_icd[1];
        hx[(1, 0)] = -m.g_icq[0];
        hx[(1, 2)] = -m.g_icq[1];

        let mut hu = DMatrix::zeros(2, 2);
        for j in 0..2 {
            hu[(0, j)] = -m.g_icd[2 + j];
            hu[(1, j)] = -m.g_icq[2 + j];
        }
        DeviceJacobians { fx, fu, hx, hu }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        let p = &self.params;
        vec![
            ("m", p.m),
            ("d", p.d),
            ("t_d0", p.t_d0),
            ("x_d", p.x_d),
            ("x_q", p.x_q),
            ("x_d_prime", p.x_d_prime),
            ("p_m", p.p_m),
            ("e_f", p.e_f),
            ("k_i", p.k_i),
        ]
    }
}
