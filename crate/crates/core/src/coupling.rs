//! Interconnection condition: positive weights `p` with
//! `K(p) = [−C; I]ᵀ P_πᵀ blkdiag(p_i X_i) P_π [−C; I] ⪯ 0`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, SymmetricMatrix};
use crate::network::NetworkCoupling;

/// Upper bound on the number of lattice points a grid search may visit.
pub const GRID_CAP: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightStrategy {
    Fixed {
        p: Vec<f64>,
    },
    Grid {
        p_lo: f64,
        p_hi: f64,
        points_per_axis: usize,
    },
    Subgradient {
        iterations: usize,
        step: f64,
    },
    /// Fixed weights if given, then subgradient, then grid.
    Auto {
        p: Option<Vec<f64>>,
    },
}

impl WeightStrategy {
    pub fn default_grid() -> Self {
        WeightStrategy::Grid { p_lo: 1e-2, p_hi: 1e2, points_per_axis: 41 }
    }

    pub fn default_subgradient() -> Self {
        WeightStrategy::Subgradient { iterations: 500, step: 0.5 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightStrategy::Fixed { .. } => "fixed",
            WeightStrategy::Grid { .. } => "grid",
            WeightStrategy::Subgradient { .. } => "subgradient",
            WeightStrategy::Auto { .. } => "auto",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingCertificate {
    pub weights: Vec<f64>,
    pub lambda_max_k: f64,
    pub feasible: bool,
    pub strategy: String,
    pub psd_tol: f64,
}

/// Per-bus pieces `K_i = Eᵢᵀ X_i Eᵢ` with `Eᵢ` the rows of `P_π [−C; I]` for bus `i`.
pub struct CouplingTerms {
    terms: Vec<DMatrix<f64>>,
}

impl CouplingTerms {
    pub fn new(xs: &[SymmetricMatrix], coupling: &NetworkCoupling) -> Result<Self> {
        let dims = coupling.port_dims();
        if xs.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!("{} supply matrices for {} buses", xs.len(), dims.len())));
        }
        for (i, (x, &mi)) in xs.iter().zip(dims).enumerate() {
            if x.dim() != 2 * mi {
                return Err(Error::DimensionMismatch(format!(
                    "bus {i}: X is {0}x{0}, expected {1}x{1}",
                    x.dim(),
                    2 * mi
                )));
            }
        }
        let m = coupling.port_dim();
        let mut stack = DMatrix::zeros(2 * m, m);
        stack.view_mut((0, 0), (m, m)).copy_from(&(-coupling.c()));
        stack.view_mut((m, 0), (m, m)).fill_with_identity();
        let e = coupling.p_pi() * stack;
        let mut terms = Vec::with_capacity(xs.len());
        let mut row = 0;
        for (x, &mi) in xs.iter().zip(dims) {
            let ei = e.rows(row, 2 * mi);
            terms.push(ei.transpose() * x.as_matrix() * ei);
            row += 2 * mi;
        }
        Ok(Self { terms })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn matrix(&self, p: &[f64]) -> Result<SymmetricMatrix> {
        if p.len() != self.terms.len() {
            return Err(Error::DimensionMismatch(format!("{} weights for {} buses", p.len(), self.terms.len())));
        }
        let mut k = DMatrix::zeros(self.terms[0].nrows(), self.terms[0].ncols());
        for (w, t) in p.iter().zip(&self.terms) {
            k += t * *w;
        }
        SymmetricMatrix::new(k)
    }

    fn lambda_max(&self, p: &[f64]) -> f64 {
        self.matrix(p).map(|k| k.lambda_extremes().1).unwrap_or(f64::INFINITY)
    }

    /// `∂λmax/∂p_i = vᵀ K_i v` for the top eigenvector `v`.
    fn subgradient(&self, p: &[f64]) -> (f64, DVector<f64>) {
        let (lam, v) = self.matrix(p).expect("dimensions checked").top_eigenpair();
        let g = DVector::from_iterator(self.terms.len(), self.terms.iter().map(|t| v.dot(&(t * &v))));
        (lam, g)
    }
}

pub fn coupling_matrix(p: &[f64], xs: &[SymmetricMatrix], coupling: &NetworkCoupling) -> Result<SymmetricMatrix> {
    if p.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("coupling weights must be positive".into()));
    }
    CouplingTerms::new(xs, coupling)?.matrix(p)
}

/// Euclidean projection onto `{p : p_i ≥ lo, Σp = total}`.
fn project_simplex(v: &DVector<f64>, total: f64, lo: f64) -> DVector<f64> {
    let n = v.len();
    let budget = total - lo * n as f64;
    let shifted: Vec<f64> = v.iter().map(|x| x - lo).collect();
    let mut sorted = shifted.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - budget) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    DVector::from_iterator(n, shifted.iter().map(|s| (s - theta).max(0.0) + lo))
}

fn normalize(p: &[f64]) -> Vec<f64> {
    let n = p.len() as f64;
    let s: f64 = p.iter().sum();
    p.iter().map(|w| w * n / s).collect()
}

fn run_fixed(terms: &CouplingTerms, p: &[f64]) -> Result<(Vec<f64>, f64)> {
    if p.len() != terms.len() {
        return Err(Error::DimensionMismatch(format!("{} fixed weights for {} buses", p.len(), terms.len())));
    }
    if p.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("coupling weights must be positive".into()));
    }
    Ok((p.to_vec(), terms.lambda_max(p)))
}

fn run_subgradient(terms: &CouplingTerms, iterations: usize, step: f64) -> (Vec<f64>, f64) {
    let n = terms.len();
    let total = n as f64;
    let lo = 1e-6;
    let mut p = DVector::from_element(n, 1.0);
    let mut best = (p.iter().copied().collect::<Vec<_>>(), f64::INFINITY);
    for k in 0..iterations {
        let (lam, g) = terms.subgradient(p.as_slice());
        if lam < best.1 {
            best = (p.iter().copied().collect(), lam);
        }
        // only the component tangent to Σp = N moves the iterate
        let mean = g.mean();
        let g = g.map(|v| v - mean);
        let gn = g.norm();
        if gn < 1e-15 {
            break;
        }
        let alpha = step * total / ((k + 1) as f64).sqrt();
        p = project_simplex(&(&p - g * (alpha / gn)), total, lo);
    }
    let (lam, _) = terms.subgradient(p.as_slice());
    if lam < best.1 {
        best = (p.iter().copied().collect(), lam);
    }
    best
}

fn run_grid(terms: &CouplingTerms, p_lo: f64, p_hi: f64, points: usize) -> Result<(Vec<f64>, f64)> {
    if !(p_lo > 0.0) || !(p_hi > p_lo) || points == 0 {
        return Err(Error::InvalidInput(format!(
            "grid needs 0 < p_lo < p_hi and points > 0, got {p_lo}, {p_hi}, {points}"
        )));
    }
    let n = terms.len();
    // the first weight is fixed by the normalization, so only n − 1 axes are searched
    let axes = n.saturating_sub(1) as u32;
    let count = (points as u128).checked_pow(axes).unwrap_or(u128::MAX);
    if count > GRID_CAP as u128 {
        return Err(Error::RegionTooLarge { count, cap: GRID_CAP as u128 });
    }
    let axis: Vec<f64> = (0..points)
        .map(|k| {
            if points == 1 {
                1.0
            } else {
                (p_lo.ln() + (p_hi.ln() - p_lo.ln()) * k as f64 / (points - 1) as f64).exp()
            }
        })
        .collect();
    let best = (0..count as usize)
        .into_par_iter()
        .map(|mut k| {
            let mut p = vec![1.0; n];
            for w in p.iter_mut().skip(1).rev() {
                *w = axis[k % points];
                k /= points;
            }
            let p = normalize(&p);
            let lam = terms.lambda_max(&p);
            (p, lam)
        })
        .reduce_with(|a, b| if b.1 < a.1 { b } else { a })
        .expect("non-empty grid");
    Ok(best)
}

/// Searches for weights making `K(p) ⪯ 0`; infeasibility is reported, not raised.
pub fn find_weights(
    xs: &[SymmetricMatrix],
    coupling: &NetworkCoupling,
    strategy: &WeightStrategy,
    psd_tol: f64,
) -> Result<CouplingCertificate> {
    let terms = CouplingTerms::new(xs, coupling)?;
    let finish = |(weights, lambda_max_k): (Vec<f64>, f64), name: &str| CouplingCertificate {
        weights,
        lambda_max_k,
        feasible: lambda_max_k <= psd_tol,
        strategy: name.to_string(),
        psd_tol,
    };
    match strategy {
        WeightStrategy::Fixed { p } => Ok(finish(run_fixed(&terms, p)?, "fixed")),
        WeightStrategy::Subgradient { iterations, step } => {
            Ok(finish(run_subgradient(&terms, *iterations, *step), "subgradient"))
        }
        WeightStrategy::Grid { p_lo, p_hi, points_per_axis } => {
            Ok(finish(run_grid(&terms, *p_lo, *p_hi, *points_per_axis)?, "grid"))
        }
        WeightStrategy::Auto { p } => {
            let mut best: Option<CouplingCertificate> = None;
            let mut consider = |c: CouplingCertificate| {
                let done = c.feasible;
                if best.as_ref().is_none_or(|b| c.lambda_max_k < b.lambda_max_k) {
                    best = Some(c);
                }
                done
            };
            if let Some(p) = p {
                if consider(finish(run_fixed(&terms, p)?, "fixed")) {
                    return Ok(best.expect("set above"));
                }
            }
            if consider(finish(run_subgradient(&terms, 500, 0.5), "subgradient")) {
                return Ok(best.expect("set above"));
            }
            if let Ok(g) = run_grid(&terms, 1e-2, 1e2, 41) {
                consider(finish(g, "grid"));
            }
            Ok(best.expect("subgradient always runs"))
        }
    }
}

/// `K(p)` for block-diagonal supply matrices and an explicit `C`, without a network object.
pub fn coupling_matrix_explicit(
    p: &[f64],
    xs: &[SymmetricMatrix],
    c: &DMatrix<f64>,
    p_pi: &DMatrix<f64>,
) -> Result<SymmetricMatrix> {
    let m = c.nrows();
    if !c.is_square() || p_pi.shape() != (2 * m, 2 * m) || p.len() != xs.len() {
        return Err(Error::DimensionMismatch("C, P_π and weights disagree".into()));
    }
    let blocks: Vec<DMatrix<f64>> = xs.iter().zip(p).map(|(x, w)| x.as_matrix() * *w).collect();
    let mut stack = DMatrix::zeros(2 * m, m);
    stack.view_mut((0, 0), (m, m)).copy_from(&(-c));
    stack.view_mut((m, 0), (m, m)).fill_with_identity();
    let e = p_pi * stack;
    let bd = block_diag(&blocks);
    if bd.nrows() != 2 * m {
        return Err(Error::DimensionMismatch("supply matrices do not cover the ports".into()));
    }
    SymmetricMatrix::new(e.transpose() * bd * e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_coupling() -> NetworkCoupling {
        NetworkCoupling::explicit(DMatrix::from_element(1, 1, 1.0), vec![1]).unwrap()
    }

    fn passivity() -> SymmetricMatrix {
        SymmetricMatrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap()
    }

    #[test]
    fn scalar_passivity_feedback() {
        let k = coupling_matrix(&[1.0], &[passivity()], &scalar_coupling()).unwrap();
        assert!((k.as_matrix()[(0, 0)] + 1.0).abs() < 1e-15);
        let cert =
            find_weights(&[passivity()], &scalar_coupling(), &WeightStrategy::Fixed { p: vec![1.0] }, 1e-9).unwrap();
        assert!(cert.feasible);
        assert_eq!(cert.lambda_max_k, -1.0);
    }

    #[test]
    fn homogeneous_in_weights() {
        let c = DMatrix::from_row_slice(2, 2, &[0.3, -1.0, 1.0, 0.2]);
        let coupling = NetworkCoupling::explicit(c, vec![1, 1]).unwrap();
        let xs = [passivity(), SymmetricMatrix::from_rows(&[vec![-1.0, 0.2], vec![0.2, 0.5]]).unwrap()];
        let k1 = coupling_matrix(&[0.7, 1.9], &xs, &coupling).unwrap();
        let k3 = coupling_matrix(&[2.1, 5.7], &xs, &coupling).unwrap();
        assert!((k1.as_matrix() * 3.0 - k3.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn explicit_form_agrees() {
        let c = DMatrix::from_row_slice(2, 2, &[0.3, -1.0, 1.0, 0.2]);
        let coupling = NetworkCoupling::explicit(c.clone(), vec![1, 1]).unwrap();
        let xs = [passivity(), SymmetricMatrix::from_rows(&[vec![-1.0, 0.2], vec![0.2, 0.5]]).unwrap()];
        let a = coupling_matrix(&[0.4, 1.6], &xs, &coupling).unwrap();
        let b = coupling_matrix_explicit(&[0.4, 1.6], &xs, &c, coupling.p_pi()).unwrap();
        assert!((a.as_matrix() - b.as_matrix()).amax() < 1e-14);
    }

    #[test]
    fn positive_supply_is_infeasible() {
        let c = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let coupling = NetworkCoupling::explicit(c, vec![1, 1]).unwrap();
        let xs = [SymmetricMatrix::identity(2), SymmetricMatrix::identity(2)];
        for s in
            [WeightStrategy::default_subgradient(), WeightStrategy::default_grid(), WeightStrategy::Auto { p: None }]
        {
            let cert = find_weights(&xs, &coupling, &s, 1e-9).unwrap();
            assert!(!cert.feasible);
            assert!(cert.lambda_max_k > 0.0);
        }
    }

    #[test]
    fn search_finds_unbalanced_weights() {
        // Two passive-ish ports whose feasible weights are far from equal.
        let c = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let coupling = NetworkCoupling::explicit(c, vec![1, 1]).unwrap();
        let x1 = SymmetricMatrix::from_rows(&[vec![-0.1, 2.0], vec![2.0, -1.0]]).unwrap();
        let x2 = SymmetricMatrix::from_rows(&[vec![-1.0, 0.25], vec![0.25, -0.1]]).unwrap();
        let xs = [x1, x2];
        let eq = find_weights(&xs, &coupling, &WeightStrategy::Fixed { p: vec![1.0, 1.0] }, 1e-9).unwrap();
        assert!(!eq.feasible);
        for s in [WeightStrategy::default_subgradient(), WeightStrategy::default_grid()] {
            let cert = find_weights(&xs, &coupling, &s, 1e-9).unwrap();
            assert!(cert.feasible, "{s:?}: {}", cert.lambda_max_k);
            let sum: f64 = cert.weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-9);
            let again = coupling_matrix(&cert.weights, &xs, &coupling).unwrap();
            assert!(again.lambda_extremes().1 <= 1e-9);
        }
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&DVector::from_vec(vec![3.0, -1.0]), 2.0, 0.0);
        assert_eq!(p.as_slice(), &[2.0, 0.0]);
        let p = project_simplex(&DVector::from_vec(vec![1.2, 1.0]), 2.0, 0.0);
        assert!((p[0] - 1.1).abs() < 1e-15 && (p[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn grid_cap_enforced() {
        let coupling = NetworkCoupling::explicit(DMatrix::identity(5, 5), vec![1; 5]).unwrap();
        let xs = vec![passivity(); 5];
        let s = WeightStrategy::Grid { p_lo: 0.1, p_hi: 10.0, points_per_axis: 100 };
        assert!(matches!(find_weights(&xs, &coupling, &s, 1e-9), Err(Error::RegionTooLarge { .. })));
    }
}
