//! Discrete-universal-denoiser bridge.
//!
//! With a finite clean alphabet and a histogram density whose bins refine the
//! output quantizer, the kernel pipeline reduces to the count-based discrete
//! denoiser. [`equivalence_check`] runs both on the same data and compares
//! every reconstruction.

use serde::{Deserialize, Serialize};

use crate::channels::{ChannelMatrix, ChannelModel, OutputQuantizer};
use crate::denoise::{partition_subsequences, DenoiserRule, Likelihood, LossFunction, LossTable, TupleRule};
use crate::density::{histogram_estimate, DensityEstimate, Quadrature};
use crate::error::{Error, Result};
use crate::inversion::{KroneckerPower, DenseOperator, LinearOperator};

/// Condition numbers above this make count inversion meaningless.
pub const CONDITION_LIMIT: f64 = 1e12;

const DENSE_CAP: usize = 10_000_000;

/// Output levels of every sample.
pub fn quantize_outputs(y: &[f64], quantizer: &OutputQuantizer) -> Vec<usize> {
    y.iter().map(|&v| quantizer.level(v)).collect()
}

/// Counts of `(2k+1)`-tuples of output levels, dense and row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountStatistics {
    pub levels: usize,
    pub k: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl CountStatistics {
    /// Counts the windows centred at the 1-based positions `centers`.
    pub fn from_levels(z: &[usize], levels: usize, k: usize, centers: &[usize]) -> Result<Self> {
        let width = 2 * k + 1;
        let states = checked_states(levels, width)?;
        let mut counts = vec![0u64; states];
        for &c in centers {
            if c < k + 1 || c + k > z.len() {
                return Err(Error::invalid(format!("window centre {c} leaves the sequence")));
            }
            counts[flat_index(&z[c - 1 - k..c + k], levels)] += 1;
        }
        Ok(CountStatistics {
            levels,
            k,
            counts,
            total: centers.len() as u64,
        })
    }

    pub fn get(&self, tuple: &[usize]) -> u64 {
        self.counts[flat_index(tuple, self.levels)]
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

fn checked_states(levels: usize, width: usize) -> Result<usize> {
    let states = (levels as u128).pow(width as u32);
    if states > DENSE_CAP as u128 {
        return Err(Error::AlphabetCap {
            states: states.min(usize::MAX as u128) as usize,
            cap: DENSE_CAP,
        });
    }
    Ok(states as usize)
}

fn flat_index(tuple: &[usize], levels: usize) -> usize {
    tuple.iter().fold(0, |acc, &z| acc * levels + z)
}

/// Level-tuple pmf of a histogram estimate whose bins refine the quantizer
/// cells.
///
/// Bin masses are turned back into integer counts first, so the result is
/// bit-identical to direct counting.
pub fn histogram_pmf(estimate: &DensityEstimate, quantizer: &OutputQuantizer) -> Result<Vec<f64>> {
    if estimate.quadrature() != Quadrature::Midpoint {
        return Err(Error::Misaligned("estimate is not a histogram".into()));
    }
    let n = estimate.sample_count();
    if n == 0 {
        return Err(Error::Empty("histogram holds no samples"));
    }
    let h = estimate.bandwidth();
    let ratio = quantizer.alpha / h;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
        return Err(Error::Misaligned(format!(
            "bin width {h} does not divide the cell width {}",
            quantizer.alpha
        )));
    }
    for axis in estimate.axes() {
        let offset = (quantizer.first_boundary - (axis.origin - 0.5 * h)) / h;
        if (offset - offset.round()).abs() > 1e-6 {
            return Err(Error::Misaligned(format!(
                "bin edges are offset by {:.3e} bins from the cell boundaries",
                offset - offset.round()
            )));
        }
    }
    let dim = estimate.dim();
    let m = quantizer.levels;
    let states = checked_states(m, dim)?;
    let axis_levels: Vec<Vec<usize>> = estimate
        .axes()
        .iter()
        .map(|a| (0..a.count).map(|j| quantizer.level(a.point(j))).collect())
        .collect();
    let scale = h.powi(dim as i32) * n as f64;
    let mut counts = vec![0u64; states];
    let mut idx = vec![0usize; dim];
    for &v in estimate.values() {
        let c = (v * scale).round() as u64;
        if c > 0 {
            let flat = idx.iter().enumerate().fold(0, |acc, (d, &j)| acc * m + axis_levels[d][j]);
            counts[flat] += c;
        }
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < estimate.axes()[d].count {
                break;
            }
            idx[d] = 0;
        }
    }
    let total: u64 = counts.iter().sum();
    if total != n as u64 {
        return Err(Error::Misaligned(format!("recovered {total} of {n} samples")));
    }
    Ok(counts.iter().map(|&c| c as f64 / n as f64).collect())
}

/// `r (Π^{-1})^{⊗d}`: the signed input pmf whose image through the channel
/// is the level-tuple pmf `r`. Also returns the condition number of `Π`.
pub fn count_inversion(r: &[f64], dim: usize, matrix: &ChannelMatrix) -> Result<(Vec<f64>, f64)> {
    let m = matrix.size();
    let states = checked_states(m, dim)?;
    if r.len() != states {
        return Err(Error::LengthMismatch {
            expected: states,
            actual: r.len(),
        });
    }
    let (inv, condition) = matrix.inverse()?;
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::SingularMatrix { condition });
    }
    let op = KroneckerPower {
        factor: DenseOperator {
            rows: m,
            cols: m,
            data: inv,
        },
        dim,
    };
    Ok((op.apply_transpose(r), condition))
}

/// Parameters of [`equivalence_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceConfig {
    pub k: usize,
    pub levels: usize,
    pub alpha: f64,
    /// Histogram bins per quantizer cell.
    pub refinement: usize,
    /// First clean symbol; the channel's lower input bound when absent.
    pub origin: Option<f64>,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        EquivalenceConfig {
            k: 0,
            levels: 2,
            alpha: 1.0,
            refinement: 1,
            origin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    #[serde(rename = "match")]
    pub matched: bool,
    #[serde(rename = "positions-checked")]
    pub positions_checked: usize,
    #[serde(rename = "first-mismatch")]
    pub first_mismatch: Option<usize>,
    pub mismatches: usize,
    #[serde(rename = "condition-number")]
    pub condition_number: f64,
}

/// Symbols, quantizer and channel matrix of the discrete problem.
pub struct DiscreteSetup {
    pub symbols: Vec<f64>,
    pub quantizer: OutputQuantizer,
    pub matrix: ChannelMatrix,
}

impl DiscreteSetup {
    pub fn new(channel: &ChannelModel, config: &EquivalenceConfig) -> Result<Self> {
        let origin = config.origin.unwrap_or(channel.input_range().0);
        let symbols: Vec<f64> = (0..config.levels).map(|i| origin + i as f64 * config.alpha).collect();
        let quantizer = OutputQuantizer::centered(origin, config.alpha, config.levels)?;
        let matrix = channel.discretize(&symbols, &quantizer)?;
        Ok(DiscreteSetup {
            symbols,
            quantizer,
            matrix,
        })
    }
}

/// Reconstruction indices from the kernel pipeline run with histogram
/// densities and the quantized likelihood.
pub fn pipeline_responses(
    y: &[f64],
    setup: &DiscreteSetup,
    loss: &LossFunction,
    k: usize,
    refinement: usize,
) -> Result<Vec<usize>> {
    let q = &setup.quantizer;
    let h = q.alpha / refinement.max(1) as f64;
    let likelihood = Likelihood::Quantized {
        matrix: setup.matrix.clone(),
        quantizer: *q,
    };
    let single = histogram_estimate(y, 1, h, q.first_boundary)?;
    let (masses, _) = count_inversion(&histogram_pmf(&single, q)?, 1, &setup.matrix)?;
    let rule = DenoiserRule::new(setup.symbols.clone(), masses, &setup.symbols, likelihood.clone(), loss)?;
    let mut out: Vec<usize> = y.iter().map(|&v| rule.respond(v).index).collect();
    let width = 2 * k + 1;
    if k == 0 || y.len() < width {
        return Ok(out);
    }
    let m = setup.symbols.len();
    let plan = partition_subsequences(y.len(), k)?;
    for centers in plan.subsequences() {
        if centers.is_empty() {
            continue;
        }
        let tuples: Vec<f64> = centers.iter().flat_map(|&c| y[c - 1 - k..c + k].iter().cloned()).collect();
        let est = histogram_estimate(&tuples, width, h, q.first_boundary)?;
        let (masses, _) = count_inversion(&histogram_pmf(&est, q)?, width, &setup.matrix)?;
        let entries = masses
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != 0.0)
            .map(|(flat, &p)| (unflatten(flat, m, width), p))
            .collect();
        let rule = TupleRule::new(
            setup.symbols.clone(),
            width,
            k,
            entries,
            &setup.symbols,
            likelihood.clone(),
            loss,
        )?;
        for &c in centers {
            out[c - 1] = rule.respond(&y[c - 1 - k..c + k]).index;
        }
    }
    Ok(out)
}

fn unflatten(mut flat: usize, m: usize, width: usize) -> Vec<u32> {
    let mut u = vec![0u32; width];
    for s in (0..width).rev() {
        u[s] = (flat % m) as u32;
        flat /= m;
    }
    u
}

/// Reconstruction indices from the count-based discrete denoiser:
/// `argmin_c sum_a Λ(a, c) Π(a, z_0) [Π^{-T} m(z_{-k..-1}, ., z_{1..k})](a)`.
pub fn discrete_responses(y: &[f64], setup: &DiscreteSetup, loss: &LossFunction, k: usize) -> Result<Vec<usize>> {
    let m = setup.symbols.len();
    let z = quantize_outputs(y, &setup.quantizer);
    let (inv, condition) = setup.matrix.inverse()?;
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::SingularMatrix { condition });
    }
    let table = LossTable::new(loss, &setup.symbols, &setup.symbols);
    // w[a] = sum_b inv[b][a] v[b]
    let inv_t = |v: &[f64]| -> Vec<f64> { (0..m).map(|a| (0..m).map(|b| inv[b * m + a] * v[b]).sum()).collect() };
    let decide = |q: &[f64], fallback: usize, z0: usize| -> usize {
        let w: Vec<f64> = (0..m).map(|a| setup.matrix.get(a, z0) * q[a]).collect();
        if w.iter().all(|v| *v == 0.0) {
            fallback
        } else {
            table.choose(&setup.symbols, &w)
        }
    };
    let fallback_for = |q: &[f64]| -> usize {
        let mode = (0..m).fold(0, |b, i| if q[i] > q[b] { i } else { b });
        let mut point = vec![0.0; m];
        point[mode] = 1.0;
        table.choose(&setup.symbols, &point)
    };

    let all: Vec<usize> = (1..=y.len()).collect();
    let single = CountStatistics::from_levels(&z, m, 0, &all)?;
    let q0 = inv_t(&single.frequencies());
    let fb0 = fallback_for(&q0);
    let mut out: Vec<usize> = z.iter().map(|&z0| decide(&q0, fb0, z0)).collect();
    let width = 2 * k + 1;
    if k == 0 || y.len() < width {
        return Ok(out);
    }
    let plan = partition_subsequences(y.len(), k)?;
    for centers in plan.subsequences() {
        if centers.is_empty() {
            continue;
        }
        let stats = CountStatistics::from_levels(&z, m, k, centers)?;
        let n = stats.total as f64;
        // centre marginal of the inverted tuple pmf, for the fallback
        let mut centre = vec![0.0; m];
        for (flat, &c) in stats.counts.iter().enumerate() {
            centre[(flat / m.pow(k as u32)) % m] += c as f64;
        }
        let centre: Vec<f64> = centre.iter().map(|c| c / n).collect();
        let fb = fallback_for(&inv_t(&centre));
        let mut tuple = vec![0usize; width];
        let mut v = vec![0.0; m];
        for &c in centers {
            tuple.copy_from_slice(&z[c - 1 - k..c + k]);
            let z0 = tuple[k];
            for (b, vb) in v.iter_mut().enumerate() {
                tuple[k] = b;
                *vb = stats.get(&tuple) as f64 / n;
            }
            out[c - 1] = decide(&inv_t(&v), fb, z0);
        }
    }
    Ok(out)
}

/// Runs both denoisers on `y` and compares every reconstruction.
pub fn equivalence_check(
    y: &[f64],
    channel: &ChannelModel,
    loss: &LossFunction,
    config: &EquivalenceConfig,
) -> Result<EquivalenceReport> {
    if config.refinement == 0 {
        return Err(Error::invalid("refinement must be at least 1"));
    }
    let setup = DiscreteSetup::new(channel, config)?;
    let (_, condition) = setup.matrix.inverse()?;
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::SingularMatrix { condition });
    }
    if y.is_empty() {
        return Ok(EquivalenceReport {
            matched: true,
            positions_checked: 0,
            first_mismatch: None,
            mismatches: 0,
            condition_number: condition,
        });
    }
    let a = pipeline_responses(y, &setup, loss, config.k, config.refinement)?;
    let b = discrete_responses(y, &setup, loss, config.k)?;
    let mismatched: Vec<usize> = (0..y.len()).filter(|&i| a[i] != b[i]).collect();
    Ok(EquivalenceReport {
        matched: mismatched.is_empty(),
        positions_checked: y.len(),
        first_mismatch: mismatched.first().map(|i| i + 1),
        mismatches: mismatched.len(),
        condition_number: condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use rand::Rng;

    fn bsc_like(n: usize, seed: u64) -> (ChannelModel, Vec<f64>) {
        let ch = ChannelModel::awgn(0.4, 0.0, 1.0).unwrap();
        let mut rng = SeedStream::new(seed).rng(0);
        let y = (0..n)
            .map(|_| {
                let x = if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 };
                ch.sample(x, &mut rng).unwrap()
            })
            .collect();
        (ch, y)
    }

    #[test]
    fn boundary_values_go_up() {
        let q = OutputQuantizer::centered(0.0, 1.0, 3).unwrap();
        assert_eq!(quantize_outputs(&[-7.0, 0.5, 1.49, 1.5, 40.0], &q), vec![0, 1, 1, 2, 2]);
    }

    #[test]
    fn histogram_pmf_matches_direct_counts() {
        let (_, y) = bsc_like(997, 3);
        let q = OutputQuantizer::centered(0.0, 0.5, 3).unwrap();
        let z = quantize_outputs(&y, &q);
        for refinement in [1usize, 2, 5] {
            let est = histogram_estimate(&y, 1, 0.5 / refinement as f64, q.first_boundary).unwrap();
            let all: Vec<usize> = (1..=y.len()).collect();
            let direct = CountStatistics::from_levels(&z, 3, 0, &all).unwrap().frequencies();
            assert_eq!(histogram_pmf(&est, &q).unwrap(), direct);
        }
        let off = histogram_estimate(&y, 1, 0.5, q.first_boundary + 0.1).unwrap();
        assert!(matches!(histogram_pmf(&off, &q), Err(Error::Misaligned(_))));
        let coarse = histogram_estimate(&y, 1, 0.3, q.first_boundary).unwrap();
        assert!(matches!(histogram_pmf(&coarse, &q), Err(Error::Misaligned(_))));
    }

    #[test]
    fn count_inversion_recovers_the_input() {
        let m = ChannelMatrix::from_rows(2, vec![0.9, 0.1, 0.2, 0.8], 1.0).unwrap();
        let x = [0.25, 0.75];
        let r = [0.25 * 0.9 + 0.75 * 0.2, 0.25 * 0.1 + 0.75 * 0.8];
        let (q, cond) = count_inversion(&r, 1, &m).unwrap();
        assert!((q[0] - x[0]).abs() < 1e-14 && (q[1] - x[1]).abs() < 1e-14);
        assert!(cond > 1.0);
        let (q2, _) = count_inversion(&[0.1, 0.2, 0.3, 0.4], 2, &m).unwrap();
        assert!((q2.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let singular = ChannelMatrix::from_rows(2, vec![0.5, 0.5, 0.5, 0.5], 1.0).unwrap();
        assert!(matches!(count_inversion(&r, 1, &singular), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn both_paths_agree() {
        let (ch, y) = bsc_like(3000, 11);
        let loss = LossFunction::squared(0.0, 1.0);
        for k in [0, 1] {
            for refinement in [1, 3] {
                let cfg = EquivalenceConfig {
                    k,
                    levels: 2,
                    alpha: 1.0,
                    refinement,
                    origin: None,
                };
                let report = equivalence_check(&y, &ch, &loss, &cfg).unwrap();
                assert!(report.matched, "k={k} r={refinement}: {report:?}");
                assert_eq!(report.positions_checked, 3000);
            }
        }
    }

    #[test]
    fn empty_and_short_inputs() {
        let ch = ChannelModel::awgn(0.4, 0.0, 1.0).unwrap();
        let loss = LossFunction::absolute(0.0, 1.0);
        let cfg = EquivalenceConfig {
            k: 1,
            ..Default::default()
        };
        let r = equivalence_check(&[], &ch, &loss, &cfg).unwrap();
        assert!(r.matched && r.positions_checked == 0);
        let r = equivalence_check(&[0.2, 0.9], &ch, &loss, &cfg).unwrap();
        assert!(r.matched && r.positions_checked == 2);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["match"], true);
        assert!(json.get("condition-number").is_some());
    }
}
