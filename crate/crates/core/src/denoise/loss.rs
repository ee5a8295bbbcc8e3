use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LossKind {
    Squared,
    Absolute,
    /// `values[i * symbols.len() + j] = Λ(symbols[i], symbols[j])`; arguments
    /// snap to the nearest symbol.
    Table { symbols: Vec<f64>, values: Vec<f64> },
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "squared" | "l2" | "mse" => Ok(LossKind::Squared),
            "absolute" | "l1" | "abs" => Ok(LossKind::Absolute),
            other => Err(Error::Parse(format!(
                "unknown loss '{other}' (expected squared or absolute)"
            ))),
        }
    }
}

/// Bounded loss on the clean interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFunction {
    pub kind: LossKind,
    pub lo: f64,
    pub hi: f64,
}

impl LossFunction {
    pub fn new(kind: LossKind, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("loss range [{lo}, {hi}] is empty")));
        }
        if let LossKind::Table { symbols, values } = &kind {
            if symbols.is_empty() || values.len() != symbols.len() * symbols.len() {
                return Err(Error::LengthMismatch {
                    expected: symbols.len() * symbols.len(),
                    actual: values.len(),
                });
            }
            if symbols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("loss table symbols must be strictly increasing"));
            }
            if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::invalid("loss table values must be finite and non-negative"));
            }
        }
        Ok(LossFunction { kind, lo, hi })
    }

    pub fn squared(lo: f64, hi: f64) -> Self {
        LossFunction {
            kind: LossKind::Squared,
            lo,
            hi,
        }
    }

    pub fn absolute(lo: f64, hi: f64) -> Self {
        LossFunction {
            kind: LossKind::Absolute,
            lo,
            hi,
        }
    }

    pub fn is_squared(&self) -> bool {
        matches!(self.kind, LossKind::Squared)
    }

    #[inline]
    pub fn eval(&self, x: f64, xhat: f64) -> f64 {
        match &self.kind {
            LossKind::Squared => (x - xhat) * (x - xhat),
            LossKind::Absolute => (x - xhat).abs(),
            LossKind::Table { symbols, values } => {
                let m = symbols.len();
                values[snap(symbols, x) * m + snap(symbols, xhat)]
            }
        }
    }

    /// Upper bound of the loss over `[lo, hi]^2`.
    pub fn lambda_max(&self) -> f64 {
        let w = self.hi - self.lo;
        match &self.kind {
            LossKind::Squared => w * w,
            LossKind::Absolute => w,
            LossKind::Table { values, .. } => values.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Lipschitz constant in the first argument over `[lo, hi]`; `None` for
    /// tables, which are piecewise constant.
    pub fn lipschitz(&self) -> Option<f64> {
        match self.kind {
            LossKind::Squared => Some(2.0 * (self.hi - self.lo)),
            LossKind::Absolute => Some(1.0),
            LossKind::Table { .. } => None,
        }
    }

    /// `sup |Λ(x, y) - Λ(x', y)|` over `|x - x'| <= delta`.
    pub fn modulus(&self, delta: f64) -> f64 {
        match self.lipschitz() {
            Some(l) => (l * delta).min(self.lambda_max()),
            None => self.lambda_max(),
        }
    }
}

fn snap(symbols: &[f64], x: f64) -> usize {
    let pos = symbols.partition_point(|&s| s < x);
    if pos == 0 {
        0
    } else if pos == symbols.len() || x - symbols[pos - 1] <= symbols[pos] - x {
        pos - 1
    } else {
        pos
    }
}

/// `(1/n) sum_i Λ(x_i, xhat_i)`.
pub fn cumulative_loss(x: &[f64], xhat: &[f64], loss: &LossFunction) -> Result<f64> {
    if x.len() != xhat.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: xhat.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("no symbols to score"));
    }
    Ok(x.iter().zip(xhat).map(|(a, b)| loss.eval(*a, *b)).sum::<f64>() / x.len() as f64)
}
