//! Bayes envelope and Bayes response.

use rayon::prelude::*;

use super::loss::LossFunction;
use crate::channels::{ChannelMatrix, ChannelModel, OutputQuantizer};
use crate::error::{Error, Result};
use crate::inversion::{QuantizedPmf, TuplePmf};

/// Costs within this relative distance of the best count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Where observation likelihoods come from.
#[derive(Debug, Clone)]
pub enum Likelihood {
    Channel(ChannelModel),
    /// A quantized channel: the likelihood of `y` given support symbol `i`
    /// is `matrix(i, level(y))`.
    Quantized {
        matrix: ChannelMatrix,
        quantizer: OutputQuantizer,
    },
}

impl Likelihood {
    fn log_into(&self, y: f64, support: &[f64], out: &mut [f64]) {
        match self {
            Likelihood::Channel(c) => {
                for (o, &a) in out.iter_mut().zip(support) {
                    *o = c.log_pdf(a, y);
                }
            }
            Likelihood::Quantized { matrix, quantizer } => {
                let z = quantizer.level(y);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = matrix.get(i, z).ln();
                }
            }
        }
    }
}

/// Loss between every support symbol and every candidate reconstruction.
#[derive(Debug, Clone)]
pub struct LossTable {
    candidates: Vec<f64>,
    values: Vec<f64>,
    squared: bool,
}

impl LossTable {
    pub fn new(loss: &LossFunction, support: &[f64], candidates: &[f64]) -> Self {
        let values = support
            .iter()
            .flat_map(|&a| candidates.iter().map(move |&c| loss.eval(a, c)))
            .collect();
        LossTable {
            candidates: candidates.to_vec(),
            values,
            squared: loss.is_squared() && candidates.windows(2).all(|w| w[0] < w[1]),
        }
    }

    /// Candidate minimising `sum_a Λ(a, c) w_a`, ties to the smallest index.
    pub fn choose(&self, support: &[f64], weights: &[f64]) -> usize {
        let m = self.candidates.len();
        if self.squared && weights.iter().all(|w| *w >= 0.0) {
            let total: f64 = weights.iter().sum();
            let mean = support.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / total;
            let i = nearest_sorted(&self.candidates, mean);
            // the neighbour across the mean may be tied up to rounding
            let j = if self.candidates[i] <= mean { i + 1 } else { i.wrapping_sub(1) };
            if j >= m {
                return i;
            }
            let cost = |c: f64| support.iter().zip(weights).map(|(a, w)| (a - c) * (a - c) * w).sum::<f64>();
            let (ci, cj) = (cost(self.candidates[i]), cost(self.candidates[j]));
            let tol = TIE_TOLERANCE * ci.abs().max(cj.abs());
            return if (ci - cj).abs() <= tol { i.min(j) } else { i };
        }
        let mut costs = vec![0.0; m];
        for (row, &w) in self.values.chunks(m).zip(weights) {
            if w != 0.0 {
                for (c, l) in costs.iter_mut().zip(row) {
                    *c += l * w;
                }
            }
        }
        argmin_with_ties(&costs)
    }
}

impl LossTable {
    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }
}

fn nearest_sorted(sorted: &[f64], x: f64) -> usize {
    let pos = sorted.partition_point(|&s| s < x);
    if pos == 0 {
        0
    } else if pos == sorted.len() || x - sorted[pos - 1] <= sorted[pos] - x {
        pos - 1
    } else {
        pos
    }
}

/// Smallest index whose value is within [`TIE_TOLERANCE`] (relative to the
/// largest magnitude) of the minimum.
pub fn argmin_with_ties(costs: &[f64]) -> usize {
    let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = costs.iter().fold(0.0_f64, |s, c| s.max(c.abs()));
    let tol = TIE_TOLERANCE * scale;
    costs.iter().position(|&c| c <= min + tol).unwrap_or(0)
}

/// `min_{c in candidates} sum_a Λ(a, c) F(a)` and its minimiser.
pub fn bayes_envelope_with(
    support: &[f64],
    masses: &[f64],
    candidates: &[f64],
    loss: &LossFunction,
) -> (f64, usize) {
    let costs: Vec<f64> = candidates
        .iter()
        .map(|&c| support.iter().zip(masses).map(|(&a, &p)| loss.eval(a, c) * p).sum())
        .collect();
    let i = argmin_with_ties(&costs);
    (costs[i], i)
}

/// Bayes envelope over the pmf's own symbols.
pub fn bayes_envelope(pmf: &QuantizedPmf, loss: &LossFunction) -> f64 {
    bayes_envelope_with(pmf.symbols(), &pmf.masses, pmf.symbols(), loss).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Response {
    /// Index into the candidates.
    pub index: usize,
    /// Every likelihood weight vanished; the prior mode was returned.
    pub degenerate: bool,
}

/// Posterior weights `P(a) f(y | a)` scaled by a common positive factor, or
/// `None` when they all vanish.
fn posterior(log_lik: &[f64], masses: &[f64]) -> Option<Vec<f64>> {
    let shift = log_lik
        .iter()
        .zip(masses)
        .filter(|(_, p)| **p != 0.0)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return None;
    }
    let w: Vec<f64> = log_lik
        .iter()
        .zip(masses)
        .map(|(l, p)| if *p == 0.0 { 0.0 } else { p * (l - shift).exp() })
        .collect();
    w.iter().any(|v| *v != 0.0).then_some(w)
}

/// Symbol-by-symbol rule `y -> argmin_c sum_a Λ(a, c) f(y | a) P(a)`.
///
/// Masses may be negative or fail to sum to one.
#[derive(Debug, Clone)]
pub struct DenoiserRule {
    support: Vec<f64>,
    masses: Vec<f64>,
    likelihood: Likelihood,
    table: LossTable,
    fallback: usize,
}

impl DenoiserRule {
    pub fn new(
        support: Vec<f64>,
        masses: Vec<f64>,
        candidates: &[f64],
        likelihood: Likelihood,
        loss: &LossFunction,
    ) -> Result<Self> {
        if support.len() != masses.len() {
            return Err(Error::LengthMismatch {
                expected: support.len(),
                actual: masses.len(),
            });
        }
        if candidates.is_empty() || support.is_empty() {
            return Err(Error::Empty("rule needs symbols"));
        }
        let table = LossTable::new(loss, &support, candidates);
        // prior mode, mapped to its best candidate
        let mode = (0..masses.len()).fold(0, |b, i| if masses[i] > masses[b] { i } else { b });
        let mut point = vec![0.0; masses.len()];
        point[mode] = 1.0;
        let fallback = table.choose(&support, &point);
        Ok(DenoiserRule {
            support,
            masses,
            likelihood,
            table,
            fallback,
        })
    }

    /// Rule over the pmf's own symbols through a continuous channel.
    pub fn from_pmf(pmf: &QuantizedPmf, channel: &ChannelModel, loss: &LossFunction) -> Result<Self> {
        Self::new(
            pmf.symbols().to_vec(),
            pmf.masses.clone(),
            pmf.symbols(),
            Likelihood::Channel(channel.clone()),
            loss,
        )
    }

    pub fn candidates(&self) -> &[f64] {
        &self.table.candidates
    }

    pub fn table(&self) -> &LossTable {
        &self.table
    }

    pub fn respond(&self, y: f64) -> Response {
        let mut ll = vec![0.0; self.support.len()];
        self.likelihood.log_into(y, &self.support, &mut ll);
        match posterior(&ll, &self.masses) {
            Some(w) => Response {
                index: self.table.choose(&self.support, &w),
                degenerate: false,
            },
            None => Response {
                index: self.fallback,
                degenerate: true,
            },
        }
    }

    pub fn apply(&self, y: f64) -> f64 {
        self.table.candidates[self.respond(y).index]
    }

    /// Reconstructions of every observation and the number of degenerate ones.
    pub fn apply_all(&self, ys: &[f64]) -> (Vec<f64>, usize) {
        let responses: Vec<Response> = ys.par_iter().map(|&y| self.respond(y)).collect();
        let degenerate = responses.iter().filter(|r| r.degenerate).count();
        (
            responses.iter().map(|r| self.table.candidates[r.index]).collect(),
            degenerate,
        )
    }
}

/// Order-k rule: a context tuple is mapped to
/// `argmin_c sum_{u} Λ(u_centre, c) P(u) prod_s f(y_s | u_s)`.
#[derive(Debug, Clone)]
pub struct TupleRule {
    support: Vec<f64>,
    width: usize,
    center: usize,
    /// Non-zero entries: support indices of every slot, then the mass.
    entries: Vec<(Vec<u32>, f64)>,
    likelihood: Likelihood,
    table: LossTable,
    fallback: usize,
}

impl TupleRule {
    pub fn new(
        support: Vec<f64>,
        width: usize,
        center: usize,
        entries: Vec<(Vec<u32>, f64)>,
        candidates: &[f64],
        likelihood: Likelihood,
        loss: &LossFunction,
    ) -> Result<Self> {
        if center >= width {
            return Err(Error::invalid(format!("centre slot {center} outside tuple width {width}")));
        }
        if entries.iter().any(|(u, _)| u.len() != width || u.iter().any(|&i| i as usize >= support.len())) {
            return Err(Error::invalid("tuple entry does not match the support"));
        }
        let table = LossTable::new(loss, &support, candidates);
        let mut marginal = vec![0.0; support.len()];
        for (u, p) in &entries {
            marginal[u[center] as usize] += p;
        }
        let mode = (0..marginal.len()).fold(0, |b, i| if marginal[i] > marginal[b] { i } else { b });
        let mut point = vec![0.0; support.len()];
        point[mode] = 1.0;
        let fallback = table.choose(&support, &point);
        Ok(TupleRule {
            support,
            width,
            center,
            entries,
            likelihood,
            table,
            fallback,
        })
    }

    /// Rule from a dense tuple pmf over its grid symbols.
    pub fn from_tuple_pmf(
        pmf: &TuplePmf,
        center: usize,
        likelihood: Likelihood,
        loss: &LossFunction,
    ) -> Result<Self> {
        let m = pmf.grid.len();
        let entries = pmf
            .masses
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != 0.0)
            .map(|(flat, &p)| {
                let mut u = vec![0u32; pmf.dim];
                let mut rest = flat;
                for s in (0..pmf.dim).rev() {
                    u[s] = (rest % m) as u32;
                    rest /= m;
                }
                (u, p)
            })
            .collect();
        Self::new(
            pmf.grid.symbols().to_vec(),
            pmf.dim,
            center,
            entries,
            pmf.grid.symbols(),
            likelihood,
            loss,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn candidates(&self) -> &[f64] {
        &self.table.candidates
    }

    pub fn respond(&self, tuple: &[f64]) -> Response {
        debug_assert_eq!(tuple.len(), self.width);
        let m = self.support.len();
        let mut lik = vec![0.0; self.width * m];
        for (s, &y) in tuple.iter().enumerate() {
            let row = &mut lik[s * m..(s + 1) * m];
            self.likelihood.log_into(y, &self.support, row);
            let shift = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !shift.is_finite() {
                return Response {
                    index: self.fallback,
                    degenerate: true,
                };
            }
            for v in row.iter_mut() {
                *v = (*v - shift).exp();
            }
        }
        let mut w = vec![0.0; m];
        for (u, p) in &self.entries {
            let mut prod = *p;
            for (s, &i) in u.iter().enumerate() {
                prod *= lik[s * m + i as usize];
            }
            w[u[self.center] as usize] += prod;
        }
        if w.iter().all(|v| *v == 0.0) {
            return Response {
                index: self.fallback,
                degenerate: true,
            };
        }
        Response {
            index: self.table.choose(&self.support, &w),
            degenerate: false,
        }
    }

    pub fn apply(&self, tuple: &[f64]) -> f64 {
        self.table.candidates[self.respond(tuple).index]
    }
}
