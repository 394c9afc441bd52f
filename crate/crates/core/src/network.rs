//! Linear voltage–current network: admittance assembly, port bookkeeping and
//! the constant coupling matrix `C` with `u = −C y` on the algebraic manifold.
//!
//! Port vectors are stacked per bus, `u = col(u_1, …, u_N)`, each power bus
//! contributing `(·_D, ·_Q)`. Network-side vectors are stacked by axis,
//! `col(V_D1..V_DN, V_Q1..V_QN)`, matching `[I_D; I_Q] = M_Y [V_D; V_Q]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::devices::PortConvention;
use crate::error::{Error, Result};
use crate::linalg::condition_number;

/// Largest condition number of `A_I + M_Y A_V` accepted when forming `C`.
pub const MAX_CONDITION: f64 = 1e12;

/// Series branch `r + jx` with optional total line charging `b` split evenly between ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b: f64,
}

/// Shunt admittance `g + jb` at a bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shunt {
    pub bus: usize,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub b: f64,
}

/// Bus admittance matrix `Y = G + jB` (buses indexed from 0).
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceNetwork {
    g: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl AdmittanceNetwork {
    pub fn from_gb(g: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() || g.shape() != b.shape() || g.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "G and B must be equal non-empty square matrices, got {:?} and {:?}",
                g.shape(),
                b.shape()
            )));
        }
        Ok(Self { g, b })
    }

    pub fn from_branches(n: usize, branches: &[Branch], shunts: &[Shunt]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("network needs at least one bus".into()));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); n * n];
        for (k, br) in branches.iter().enumerate() {
            if br.from >= n || br.to >= n || br.from == br.to {
                return Err(Error::InvalidInput(format!("branch {k}: bad endpoints {} -> {}", br.from, br.to)));
            }
            let z = Complex64::new(br.r, br.x);
            if !(z.norm() > 0.0) || !z.is_finite() || !br.b.is_finite() {
                return Err(Error::InvalidInput(format!("branch {k}: impedance must be finite and non-zero")));
            }
            let ys = z.inv();
            let ysh = Complex64::new(0.0, br.b / 2.0);
            let (i, j) = (br.from, br.to);
            y[i * n + i] += ys + ysh;
            y[j * n + j] += ys + ysh;
            y[i * n + j] -= ys;
            y[j * n + i] -= ys;
        }
        for (k, sh) in shunts.iter().enumerate() {
            if sh.bus >= n {
                return Err(Error::InvalidInput(format!("shunt {k}: bus {} out of range", sh.bus)));
            }
            y[sh.bus * n + sh.bus] += Complex64::new(sh.g, sh.b);
        }
        let g = DMatrix::from_fn(n, n, |i, j| y[i * n + j].re);
        let b = DMatrix::from_fn(n, n, |i, j| y[i * n + j].im);
        Ok(Self { g, b })
    }

    pub fn bus_count(&self) -> usize {
        self.g.nrows()
    }

    pub fn conductance(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn susceptance(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// `M_Y = [[G, −B], [B, G]]`.
pub fn build_my(net: &AdmittanceNetwork) -> DMatrix<f64> {
    let n = net.bus_count();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&net.g);
    m.view_mut((0, n), (n, n)).copy_from(&(-&net.b));
    m.view_mut((n, 0), (n, n)).copy_from(&net.b);
    m.view_mut((n, n), (n, n)).copy_from(&net.g);
    m
}

/// Placement matrices with `A_I u + B_I y = col(−I_D, −I_Q)` and `A_V u + B_V y = col(V_D, V_Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PortPermutations {
    pub a_i: DMatrix<f64>,
    pub b_i: DMatrix<f64>,
    pub a_v: DMatrix<f64>,
    pub b_v: DMatrix<f64>,
}

impl PortPermutations {
    /// `[[A_I, B_I], [A_V, B_V]]`, a permutation of `col(u, y)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n2 = self.a_i.nrows();
        let mut m = DMatrix::zeros(2 * n2, 2 * n2);
        m.view_mut((0, 0), (n2, n2)).copy_from(&self.a_i);
        m.view_mut((0, n2), (n2, n2)).copy_from(&self.b_i);
        m.view_mut((n2, 0), (n2, n2)).copy_from(&self.a_v);
        m.view_mut((n2, n2), (n2, n2)).copy_from(&self.b_v);
        m
    }
}

pub fn build_port_permutations(conventions: &[PortConvention]) -> PortPermutations {
    let n = conventions.len();
    let z = || DMatrix::<f64>::zeros(2 * n, 2 * n);
    let (mut a_i, mut b_i, mut a_v, mut b_v) = (z(), z(), z(), z());
    for (bus, conv) in conventions.iter().enumerate() {
        let (cur, volt) = match conv {
            PortConvention::VoltageInCurrentOut => (&mut b_i, &mut a_v),
            PortConvention::CurrentInVoltageOut => (&mut a_i, &mut b_v),
        };
        for axis in 0..2 {
            cur[(axis * n + bus, 2 * bus + axis)] = 1.0;
            volt[(axis * n + bus, 2 * bus + axis)] = 1.0;
        }
    }
    PortPermutations { a_i, b_i, a_v, b_v }
}

/// `C = (A_I + M_Y A_V)⁻¹ (B_I + M_Y B_V)` and the condition number of the inverted matrix.
pub fn build_c(net: &AdmittanceNetwork, conventions: &[PortConvention]) -> Result<(DMatrix<f64>, f64)> {
    if conventions.len() != net.bus_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} port conventions for {} buses",
            conventions.len(),
            net.bus_count()
        )));
    }
    let my = build_my(net);
    let perms = build_port_permutations(conventions);
    let lhs = &perms.a_i + &my * &perms.a_v;
    let rhs = &perms.b_i + &my * &perms.b_v;
    let cond = condition_number(&lhs);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllPosedNetwork { cond });
    }
    let inv = lhs.try_inverse().ok_or(Error::IllPosedNetwork { cond: f64::INFINITY })?;
    Ok((inv * rhs, cond))
}

/// `P_π` with `P_π col(u, y) = col(u_1, y_1, …, u_N, y_N)`.
pub fn interleave_permutation(port_dims: &[usize]) -> DMatrix<f64> {
    let m: usize = port_dims.iter().sum();
    let mut p = DMatrix::zeros(2 * m, 2 * m);
    let mut off = 0;
    for &mi in port_dims {
        for k in 0..mi {
            p[(2 * off + k, off + k)] = 1.0;
            p[(2 * off + mi + k, m + off + k)] = 1.0;
        }
        off += mi;
    }
    p
}

/// Constant interconnection data shared by assembly, coupling and RoA code.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCoupling {
    c: DMatrix<f64>,
    p_pi: DMatrix<f64>,
    port_dims: Vec<usize>,
    my: Option<DMatrix<f64>>,
    permutations: Option<PortPermutations>,
    cond: Option<f64>,
}

impl NetworkCoupling {
    pub fn from_network(net: &AdmittanceNetwork, conventions: &[PortConvention]) -> Result<Self> {
        let (c, cond) = build_c(net, conventions)?;
        let port_dims = vec![2; conventions.len()];
        Ok(Self {
            c,
            p_pi: interleave_permutation(&port_dims),
            port_dims,
            my: Some(build_my(net)),
            permutations: Some(build_port_permutations(conventions)),
            cond: Some(cond),
        })
    }

    /// Coupling given directly by `C`, for non-electrical test interconnections.
    pub fn explicit(c: DMatrix<f64>, port_dims: Vec<usize>) -> Result<Self> {
        let m: usize = port_dims.iter().sum();
        if c.shape() != (m, m) || m == 0 || port_dims.contains(&0) {
            return Err(Error::DimensionMismatch(format!("C is {:?}, port dims {:?}", c.shape(), port_dims)));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("C must be finite".into()));
        }
        Ok(Self { p_pi: interleave_permutation(&port_dims), c, port_dims, my: None, permutations: None, cond: None })
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn p_pi(&self) -> &DMatrix<f64> {
        &self.p_pi
    }

    pub fn port_dims(&self) -> &[usize] {
        &self.port_dims
    }

    pub fn port_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Offset of bus `i`'s port block in the stacked port vector.
    pub fn port_offset(&self, bus: usize) -> usize {
        self.port_dims[..bus].iter().sum()
    }

    pub fn my(&self) -> Option<&DMatrix<f64>> {
        self.my.as_ref()
    }

    pub fn permutations(&self) -> Option<&PortPermutations> {
        self.permutations.as_ref()
    }

    pub fn condition(&self) -> Option<f64> {
        self.cond
    }
}
