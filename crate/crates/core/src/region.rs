use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the number of grid samples a region may enumerate.
pub const DEFAULT_SAMPLE_CAP: u128 = 20_000_000;

/// Axis-aligned box with a uniform grid per axis.
///
/// Samples are enumerated row-major: the last axis varies fastest. With `k`
/// samples on an axis the grid contains both endpoints; a single sample sits
/// at the lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
    samples_per_axis: Vec<usize>,
    #[serde(skip, default = "default_cap")]
    cap: u128,
}

fn default_cap() -> u128 {
    DEFAULT_SAMPLE_CAP
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, samples_per_axis: Vec<usize>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidInput("region must have at least one axis".into()));
        }
        if lower.len() != upper.len() || lower.len() != samples_per_axis.len() {
            return Err(Error::DimensionMismatch(format!(
                "region bounds/samples lengths differ: {} / {} / {}",
                lower.len(),
                upper.len(),
                samples_per_axis.len()
            )));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidInput(format!("axis {k}: need finite lower < upper, got [{lo}, {hi}]")));
            }
        }
        if samples_per_axis.contains(&0) {
            return Err(Error::InvalidInput("samples per axis must be positive".into()));
        }
        Ok(Self { lower, upper, samples_per_axis, cap: DEFAULT_SAMPLE_CAP })
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn samples_per_axis(&self) -> &[usize] {
        &self.samples_per_axis
    }

    pub fn count(&self) -> u128 {
        self.samples_per_axis.iter().map(|&s| s as u128).product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    pub fn axis_value(&self, axis: usize, idx: usize) -> f64 {
        let n = self.samples_per_axis[axis];
        if n == 1 {
            return self.lower[axis];
        }
        if idx + 1 == n {
            return self.upper[axis];
        }
        let t = idx as f64 / (n - 1) as f64;
        self.lower[axis] + t * (self.upper[axis] - self.lower[axis])
    }

    /// Multi-index of the flat sample index `k`.
    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            let n = self.samples_per_axis[axis];
            idx[axis] = k % n;
            k /= n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.samples_per_axis).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn sample(&self, k: usize) -> DVector<f64> {
        let idx = self.multi_index(k);
        DVector::from_iterator(self.dim(), idx.iter().enumerate().map(|(a, &i)| self.axis_value(a, i)))
    }

    /// Deterministic row-major enumeration of every grid point.
    pub fn enumerate_samples(&self) -> Result<impl Iterator<Item = DVector<f64>> + '_> {
        let count = self.checked_len()?;
        Ok((0..count).map(move |k| self.sample(k)))
    }

    /// Number of samples, or `RegionTooLarge` when above the cap.
    pub fn checked_len(&self) -> Result<usize> {
        let count = self.count();
        if count > self.cap {
            return Err(Error::RegionTooLarge { count, cap: self.cap });
        }
        Ok(count as usize)
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &BoxRegion) -> BoxRegion {
        let cat = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<_>>();
        BoxRegion {
            lower: cat(&self.lower, &other.lower),
            upper: cat(&self.upper, &other.upper),
            samples_per_axis: self.samples_per_axis.iter().chain(&other.samples_per_axis).copied().collect(),
            cap: self.cap.min(other.cap),
        }
    }
}
