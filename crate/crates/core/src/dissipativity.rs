//! Delta-dissipativity checks with Krasovskii storage `S = fᵀPf` and the
//! quadratic supply `w = col(u̇, ẏ)ᵀ X col(u̇, ẏ)`.
//!
//! Along solutions `Ṡ = fᵀ(J_xᵀP + PJ_x)f + 2fᵀPJ_u u̇` and
//! `col(u̇, ẏ) = T col(f, u̇)` with `T = [[0, I], [H_x, H_u]]`, so
//! `Ṡ − w + ε‖f‖² = col(f, u̇)ᵀ Q col(f, u̇)` where
//!
//! ```text
//! Q = [[J_xᵀP + PJ_x + εI, PJ_u], [J_uᵀP, 0]] − TᵀXT.
//! ```
//!
//! `Q ⪯ 0` at a point gives the dissipation inequality for every `u̇`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::devices::{DeviceJacobians, DynamicDevice, StaticDevice};
use crate::error::{Error, Result};
use crate::linalg::{SymmetricMatrix, DEFAULT_PSD_TOL};
use crate::region::BoxRegion;

/// Dissipation rate coefficient used when none is configured.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Caps the failing-sample index list kept in a certificate.
pub const MAX_LISTED_FAILURES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassKQuadratic {
    pub a: f64,
}

impl ClassKQuadratic {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidInput(format!("class-K coefficient must be > 0, got {a}")));
        }
        Ok(Self { a })
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.a * r * r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    Uniform,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Partial,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub mode: VerifyMode,
    pub psd_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { mode: VerifyMode::Uniform, psd_tol: DEFAULT_PSD_TOL }
    }
}

/// Class-K bounds `α r² ≤ S ≤ β r²`, `γ r²` implied by a storage matrix and ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageBounds {
    pub alpha: ClassKQuadratic,
    pub beta: ClassKQuadratic,
    pub gamma: ClassKQuadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityCertificate {
    pub bus: Option<usize>,
    pub p: Option<SymmetricMatrix>,
    pub x: SymmetricMatrix,
    pub epsilon: Option<f64>,
    pub region: BoxRegion,
    pub mode: VerifyMode,
    pub psd_tol: f64,
    pub verdict: Verdict,
    pub samples: usize,
    pub passed: usize,
    pub marginal: usize,
    /// Smallest slack over samples: `−λmax(Q)` (dynamic) or `λmin` of the static matrix.
    pub worst_margin: f64,
    pub worst_index: Option<usize>,
    pub failing: Vec<usize>,
    pub failing_count: usize,
    /// Uniform failures that the exact per-sample test clears (exact mode only).
    pub exact_cleared: usize,
    pub bounds: Option<StorageBounds>,
}

impl DissipativityCertificate {
    pub fn pass_fraction(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.passed as f64 / self.samples as f64
        }
    }
}

fn check_dims(j: &DeviceJacobians, p: &SymmetricMatrix, x: &SymmetricMatrix) -> Result<(usize, usize)> {
    let n = j.fx.nrows();
    let m = j.fu.ncols();
    if p.dim() != n || x.dim() != 2 * m {
        return Err(Error::DimensionMismatch(format!(
            "P is {0}x{0} and X is {1}x{1}; device has n = {n}, m = {m}",
            p.dim(),
            x.dim()
        )));
    }
    Ok((n, m))
}

/// `Q` from precomputed Jacobians.
pub fn build_q_from_jacobians(
    j: &DeviceJacobians,
    p: &SymmetricMatrix,
    x: &SymmetricMatrix,
    epsilon: f64,
) -> Result<SymmetricMatrix> {
    let (n, m) = check_dims(j, p, x)?;
    let pm = p.as_matrix();
    let mut top = DMatrix::zeros(n + m, n + m);
    let pjx = pm * &j.fx;
    let ff = pjx.transpose() + &pjx + DMatrix::identity(n, n) * epsilon;
    let fu = pm * &j.fu;
    top.view_mut((0, 0), (n, n)).copy_from(&ff);
    top.view_mut((0, n), (n, m)).copy_from(&fu);
    top.view_mut((n, 0), (m, n)).copy_from(&fu.transpose());
    let mut t = DMatrix::zeros(2 * m, n + m);
    t.view_mut((0, n), (m, m)).fill_with_identity();
    t.view_mut((m, 0), (m, n)).copy_from(&j.hx);
    t.view_mut((m, n), (m, m)).copy_from(&j.hu);
    SymmetricMatrix::new(top - t.transpose() * x.as_matrix() * t)
}

pub fn build_q(
    dev: &dyn DynamicDevice,
    p: &SymmetricMatrix,
    x: &SymmetricMatrix,
    epsilon: f64,
    state: &DVector<f64>,
    input: &DVector<f64>,
) -> Result<SymmetricMatrix> {
    if state.len() != dev.state_dim() || input.len() != dev.port_dim() {
        return Err(Error::DimensionMismatch("point does not match device dimensions".into()));
    }
    build_q_from_jacobians(&dev.jacobians(state, input), p, x, epsilon)
}

/// `[I; H_u]ᵀ X [I; H_u]`.
pub fn static_matrix(hu: &DMatrix<f64>, x: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let m = hu.nrows();
    if !hu.is_square() || x.dim() != 2 * m {
        return Err(Error::DimensionMismatch(format!("H_u is {:?}, X is {}x{}", hu.shape(), x.dim(), x.dim())));
    }
    let mut s = DMatrix::zeros(2 * m, m);
    s.view_mut((0, 0), (m, m)).fill_with_identity();
    s.view_mut((m, 0), (m, m)).copy_from(hu);
    SymmetricMatrix::new(s.transpose() * x.as_matrix() * s)
}

/// Slack `−λmax(Q)` at one `(x, u)`; non-negative means the point passes.
pub fn dynamic_slack(
    dev: &dyn DynamicDevice,
    p: &SymmetricMatrix,
    x: &SymmetricMatrix,
    epsilon: f64,
    state: &DVector<f64>,
    input: &DVector<f64>,
) -> Result<f64> {
    Ok(-build_q(dev, p, x, epsilon, state, input)?.lambda_extremes().1)
}

/// Slack `λmin([I; H_u]ᵀ X [I; H_u])` at one input.
pub fn static_slack(dev: &dyn StaticDevice, x: &SymmetricMatrix, input: &DVector<f64>) -> Result<f64> {
    Ok(static_matrix(&dev.h_u(input)?, x)?.lambda_extremes().0)
}

/// Supremum over `u̇` of `col(f, u̇)ᵀ Q col(f, u̇)` and a maximizing `u̇`.
///
/// Returns `(+∞, None)` when the supremum is unbounded.
pub fn worst_case_deficit(q: &SymmetricMatrix, f: &DVector<f64>, tol: f64) -> (f64, Option<DVector<f64>>) {
    let n = f.len();
    let qm = q.as_matrix();
    let m = qm.nrows() - n;
    let qff = qm.view((0, 0), (n, n));
    let qfu = qm.view((0, n), (n, m));
    let quu = qm.view((n, n), (m, m)).into_owned();
    let base = f.dot(&(qff * f));
    if m == 0 {
        return (base, Some(DVector::zeros(0)));
    }
    let b = qfu.transpose() * f;
    let eig = SymmetricEigen::new(quu);
    let scale = 1.0 + b.norm();
    let mut sup = base;
    let mut udot = DVector::zeros(m);
    for k in 0..m {
        let lam = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        let c = v.dot(&b);
        if lam > tol {
            return (f64::INFINITY, None);
        }
        if lam >= -tol {
            if c.abs() > tol * scale {
                return (f64::INFINITY, None);
            }
            continue;
        }
        // sup_t 2ct + λt² = −c²/λ at t = −c/λ
        sup -= c * c / lam;
        udot += v * (-c / lam);
    }
    (sup, Some(udot))
}

/// Class-K bounds from `P` and ε.
pub fn storage_bounds(p: &SymmetricMatrix, epsilon: f64) -> Result<StorageBounds> {
    let (lo, hi) = p.lambda_extremes();
    Ok(StorageBounds {
        alpha: ClassKQuadratic::new(lo)?,
        beta: ClassKQuadratic::new(hi)?,
        gamma: ClassKQuadratic::new(epsilon)?,
    })
}

fn validate_storage(p: &SymmetricMatrix, epsilon: f64) -> Result<()> {
    let lambda_min = p.lambda_extremes().0;
    if !(lambda_min > 0.0) {
        return Err(Error::InvalidStorage { lambda_min });
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok(())
}

struct SampleResult {
    slack: f64,
    pass: bool,
    exact_cleared: bool,
}

fn summarize(
    results: Vec<SampleResult>,
    psd_tol: f64,
) -> (Verdict, usize, usize, f64, Option<usize>, Vec<usize>, usize, usize) {
    let samples = results.len();
    let mut passed = 0;
    let mut marginal = 0;
    let mut worst = f64::INFINITY;
    let mut worst_index = None;
    let mut failing = Vec::new();
    let mut failing_count = 0;
    let mut cleared = 0;
    for (k, r) in results.iter().enumerate() {
        if r.pass {
            passed += 1;
            if r.slack.abs() <= psd_tol {
                marginal += 1;
            }
        } else {
            failing_count += 1;
            if failing.len() < MAX_LISTED_FAILURES {
                failing.push(k);
            }
        }
        if r.exact_cleared {
            cleared += 1;
        }
        // NaN slack (failed evaluation) ranks worst
        let s = if r.slack.is_nan() { f64::NEG_INFINITY } else { r.slack };
        if s < worst {
            worst = s;
            worst_index = Some(k);
        }
    }
    let verdict = if samples > 0 && passed == samples {
        Verdict::Pass
    } else if passed > 0 {
        Verdict::Partial
    } else {
        Verdict::Fail
    };
    (verdict, passed, marginal, worst, worst_index, failing, failing_count, cleared)
}

/// Checks the dynamic dissipation inequality on every sample of a box in `(x, u)` space.
pub fn verify_dynamic(
    dev: &dyn DynamicDevice,
    p: &SymmetricMatrix,
    x: &SymmetricMatrix,
    epsilon: f64,
    region: &BoxRegion,
    opts: VerifyOptions,
) -> Result<DissipativityCertificate> {
    validate_storage(p, epsilon)?;
    let n = dev.state_dim();
    let m = dev.port_dim();
    if region.dim() != n + m {
        return Err(Error::DimensionMismatch(format!("region has {} axes, device needs {}", region.dim(), n + m)));
    }
    let count = region.checked_len()?;
    let tol = opts.psd_tol;
    let results: Vec<SampleResult> = (0..count)
        .into_par_iter()
        .map(|k| {
            let z = region.sample(k);
            let xs = z.rows(0, n).into_owned();
            let us = z.rows(n, m).into_owned();
            let q = match build_q(dev, p, x, epsilon, &xs, &us) {
                Ok(q) => q,
                Err(_) => return SampleResult { slack: f64::NAN, pass: false, exact_cleared: false },
            };
            let slack = -q.lambda_extremes().1;
            if slack >= -tol {
                return SampleResult { slack, pass: true, exact_cleared: false };
            }
            if opts.mode == VerifyMode::Exact {
                let f = dev.f(&xs, &us);
                let (sup, _) = worst_case_deficit(&q, &f, tol);
                if sup <= tol * (1.0 + f.norm_squared()) {
                    return SampleResult { slack, pass: true, exact_cleared: true };
                }
            }
            SampleResult { slack, pass: false, exact_cleared: false }
        })
        .collect();
    let (verdict, passed, marginal, worst_margin, worst_index, failing, failing_count, exact_cleared) =
        summarize(results, tol);
    Ok(DissipativityCertificate {
        bus: None,
        p: Some(p.clone()),
        x: x.clone(),
        epsilon: Some(epsilon),
        region: region.clone(),
        mode: opts.mode,
        psd_tol: tol,
        verdict,
        samples: count,
        passed,
        marginal,
        worst_margin,
        worst_index,
        failing,
        failing_count,
        exact_cleared,
        bounds: Some(storage_bounds(p, epsilon)?),
    })
}

/// Checks `[I; H_u]ᵀ X [I; H_u] ⪰ 0` on every sample of a box in `u` space.
pub fn verify_static(
    dev: &dyn StaticDevice,
    x: &SymmetricMatrix,
    region: &BoxRegion,
    psd_tol: f64,
) -> Result<DissipativityCertificate> {
    let m = dev.port_dim();
    if region.dim() != m || x.dim() != 2 * m {
        return Err(Error::DimensionMismatch(format!(
            "static device with m = {m}: region has {} axes, X is {}x{}",
            region.dim(),
            x.dim(),
            x.dim()
        )));
    }
    let count = region.checked_len()?;
    let results: Vec<SampleResult> = (0..count)
        .into_par_iter()
        .map(|k| match static_slack(dev, x, &region.sample(k)) {
            Ok(slack) => SampleResult { slack, pass: slack >= -psd_tol, exact_cleared: false },
            Err(_) => SampleResult { slack: f64::NAN, pass: false, exact_cleared: false },
        })
        .collect();
    let (verdict, passed, marginal, worst_margin, worst_index, failing, failing_count, _) = summarize(results, psd_tol);
    Ok(DissipativityCertificate {
        bus: None,
        p: None,
        x: x.clone(),
        epsilon: None,
        region: region.clone(),
        mode: VerifyMode::Uniform,
        psd_tol,
        verdict,
        samples: count,
        passed,
        marginal,
        worst_margin,
        worst_index,
        failing,
        failing_count,
        exact_cleared: 0,
        bounds: None,
    })
}

/// Weighted aggregation of per-device quadratic class-K bounds:
/// `α = min p_i a_i`, `β = Σ p_i b_i`, `γ = min p_i c_i`.
pub fn aggregate_class_k(
    p: &[f64],
    alphas: &[ClassKQuadratic],
    betas: &[ClassKQuadratic],
    gammas: &[ClassKQuadratic],
) -> Result<(ClassKQuadratic, ClassKQuadratic, ClassKQuadratic)> {
    if p.is_empty() {
        return Err(Error::InvalidInput("aggregation needs at least one subsystem".into()));
    }
    if alphas.len() != p.len() || betas.len() != p.len() || gammas.len() != p.len() {
        return Err(Error::DimensionMismatch("weights and class-K lists differ in length".into()));
    }
    if p.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidInput("weights must be positive".into()));
    }
    let min_of = |ks: &[ClassKQuadratic]| p.iter().zip(ks).map(|(w, k)| w * k.a).fold(f64::INFINITY, f64::min);
    let beta: f64 = p.iter().zip(betas).map(|(w, k)| w * k.a).sum();
    Ok((ClassKQuadratic::new(min_of(alphas))?, ClassKQuadratic::new(beta)?, ClassKQuadratic::new(min_of(gammas))?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceOutcome {
    pub holds: bool,
    /// Largest `Ṡ − w + ε‖f‖²` over the tried `u̇`.
    pub worst_deficit: f64,
    pub worst_udot: DVector<f64>,
    pub draws: usize,
}

/// Evaluates `Ṡ ≤ w − ε‖ẋ‖²` directly for random `u̇`, `u̇ = 0` and, when the
/// `u̇` block is negative definite, the maximizing `u̇`.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_dissipation_check(
    dev: &dyn DynamicDevice,
    p: &SymmetricMatrix,
    x: &SymmetricMatrix,
    epsilon: f64,
    state: &DVector<f64>,
    input: &DVector<f64>,
    udot_samples: usize,
    seed: u64,
) -> Result<BruteForceOutcome> {
    let j = dev.jacobians(state, input);
    check_dims(&j, p, x)?;
    let m = dev.port_dim();
    let f = dev.f(state, input);
    let pm = p.as_matrix();
    let xm = x.as_matrix();

    let deficit = |udot: &DVector<f64>| {
        let fdot = &j.fx * &f + &j.fu * udot;
        let s_dot = 2.0 * f.dot(&(pm * &fdot));
        let ydot = &j.hx * &f + &j.hu * udot;
        let mut v = DVector::zeros(2 * m);
        v.rows_mut(0, m).copy_from(udot);
        v.rows_mut(m, m).copy_from(&ydot);
        let w = v.dot(&(xm * &v));
        let d = s_dot - w + epsilon * f.norm_squared();
        let tol = 1e-8 * (1.0 + f.norm_squared() + udot.norm_squared());
        (d, tol)
    };

    let mut candidates = vec![DVector::zeros(m)];
    let q = build_q_from_jacobians(&j, p, x, epsilon)?;
    if let (_, Some(u_star)) = worst_case_deficit(&q, &f, 0.0) {
        candidates.push(u_star);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..udot_samples {
        let dir = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mag = 10f64.powf(rng.random_range(-3.0..3.0));
        candidates.push(dir * mag);
    }

    let mut out =
        BruteForceOutcome { holds: true, worst_deficit: f64::NEG_INFINITY, worst_udot: DVector::zeros(m), draws: 0 };
    for udot in candidates {
        let (d, tol) = deficit(&udot);
        out.draws += 1;
        if d > out.worst_deficit {
            out.worst_deficit = d;
            out.worst_udot = udot.clone();
        }
        if !(d <= tol) {
            out.holds = false;
        }
    }
    Ok(out)
}
