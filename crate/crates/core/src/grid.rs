//! Uniform evaluation axes and trapezoid quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform grid `origin + i * step` for `i in 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformAxis {
    pub origin: f64,
    pub step: f64,
    pub count: usize,
}

impl UniformAxis {
    pub fn new(origin: f64, step: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("evaluation grid has no points".into()));
        }
        if !(step > 0.0) || !step.is_finite() || !origin.is_finite() {
            return Err(Error::invalid(format!("grid step must be positive and finite, got {step}")));
        }
        Ok(UniformAxis { origin, step, count })
    }

    /// `count` points spanning `[lo, hi]` inclusive.
    pub fn spanning(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::Config(format!("a spanning grid needs at least 2 points, got {count}")));
        }
        if !(hi > lo) {
            return Err(Error::invalid(format!("grid bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        Self::new(lo, (hi - lo) / (count - 1) as f64, count)
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.step
    }

    pub fn last(&self) -> f64 {
        self.point(self.count - 1)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.origin && x <= self.last()
    }

    /// Composite trapezoid weight of point `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if self.count == 1 {
            return 0.0;
        }
        if i == 0 || i + 1 == self.count {
            0.5 * self.step
        } else {
            self.step
        }
    }

    /// Trapezoid rule applied to values tabulated on this axis.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.count);
        values.iter().enumerate().map(|(i, v)| v * self.weight(i)).sum()
    }

    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        (0..self.count).map(|i| f(self.point(i)) * self.weight(i)).sum()
    }

    pub(crate) fn approx_eq(&self, other: &UniformAxis) -> bool {
        let tol = 1e-12 * (1.0 + self.origin.abs().max(self.step));
        self.count == other.count
            && (self.origin - other.origin).abs() <= tol
            && (self.step - other.step).abs() <= 1e-12 * self.step
    }
}
