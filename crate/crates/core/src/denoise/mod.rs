//! Symbol-by-symbol and sliding-window denoisers, and the genie benchmarks
//! they are measured against.

pub mod context;
pub mod loss;
pub mod rule;

use std::collections::HashMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use context::{partition_subsequences, ContextLayout, ContextShape, SubsequencePlan};
pub use loss::{cumulative_loss, LossFunction, LossKind};
pub use rule::{bayes_envelope, bayes_envelope_with, DenoiserRule, Likelihood, LossTable, Response, TupleRule};

use crate::channels::ChannelModel;
use crate::density::{
    histogram_estimate, kde, lcv_bandwidth, silverman_bandwidth, DensityEstimate, KdeMethod, Kernel, KernelKind,
    DEFAULT_GRID_1D, DEFAULT_GRID_3D, KERNEL_CUTOFF,
};
use crate::error::{Error, Result};
use crate::grid::UniformAxis;
use crate::inversion::{
    invert_channel, invert_tuples, InversionOptions, PrimalDualOptions, QuantizedPmf, SupportGrid, TuplePmf,
};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthPolicy {
    #[default]
    Silverman,
    /// Leave-one-out likelihood cross-validation around the Silverman width.
    Lcv,
    Fixed(f64),
}

impl FromStr for BandwidthPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" | "silverman" => Ok(BandwidthPolicy::Silverman),
            "lcv" | "cv" => Ok(BandwidthPolicy::Lcv),
            other => match other.parse::<f64>() {
                Ok(h) if h > 0.0 && h.is_finite() => Ok(BandwidthPolicy::Fixed(h)),
                _ => Err(Error::Parse(format!(
                    "bandwidth '{s}' is neither auto, lcv nor a positive number"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityMethod {
    #[default]
    Kernel,
    /// Histogram with the given bin width.
    Histogram(f64),
}

/// Resolves a bandwidth for `dim`-vectors; falls back to `range_width / 100`
/// when the samples cannot support a rule.
pub fn choose_bandwidth(
    samples: &[f64],
    dim: usize,
    policy: BandwidthPolicy,
    kernel: KernelKind,
    range_width: f64,
) -> Result<(f64, bool)> {
    let n = samples.len() / dim.max(1);
    let pilot = if n < 2 {
        crate::density::Bandwidth {
            h: range_width / 100.0,
            fell_back: true,
        }
    } else {
        silverman_bandwidth(samples, dim, range_width)?
    };
    match policy {
        BandwidthPolicy::Fixed(h) => Ok((h, false)),
        BandwidthPolicy::Silverman => Ok((pilot.h, pilot.fell_back)),
        BandwidthPolicy::Lcv if pilot.fell_back => Ok((pilot.h, true)),
        BandwidthPolicy::Lcv => {
            let kernel = Kernel::new(kernel, dim)?;
            Ok((lcv_bandwidth(samples, &kernel, pilot.h, DEFAULT_GRID_1D)?, false))
        }
    }
}

/// Axis spanning the channel's effective output range and the samples plus
/// the kernel cutoff.
fn estimation_axis(samples: &[f64], channel: &ChannelModel, h: f64, count: usize) -> Result<UniformAxis> {
    let (mut lo, mut hi) = channel.output_range();
    for &v in samples {
        lo = lo.min(v - KERNEL_CUTOFF * h);
        hi = hi.max(v + KERNEL_CUTOFF * h);
    }
    UniformAxis::spanning(lo, hi, count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolwiseOptions {
    /// Support step; `None` uses `(b - a) / 32`.
    pub delta_support: Option<f64>,
    /// Level step of the mass quantizer.
    pub level_step: f64,
    pub kernel: KernelKind,
    pub bandwidth: BandwidthPolicy,
    pub grid_points: usize,
    pub kde_method: KdeMethod,
    pub density: DensityMethod,
    pub inversion: InversionOptions,
}

impl Default for SymbolwiseOptions {
    fn default() -> Self {
        SymbolwiseOptions {
            delta_support: None,
            level_step: 1.0 / 256.0,
            kernel: KernelKind::Gaussian,
            bandwidth: BandwidthPolicy::Silverman,
            grid_points: DEFAULT_GRID_1D,
            kde_method: KdeMethod::Auto,
            density: DensityMethod::Kernel,
            inversion: InversionOptions::default(),
        }
    }
}

impl SymbolwiseOptions {
    pub fn support_grid(&self, channel: &ChannelModel) -> Result<SupportGrid> {
        let (a, b) = channel.input_range();
        SupportGrid::new(a, b, self.delta_support.unwrap_or((b - a) / 32.0))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SymbolwiseDiagnostics {
    pub bandwidth: f64,
    pub bandwidth_fell_back: bool,
    pub lp_objective: f64,
    pub lp_gap: f64,
    pub lp_iterations: usize,
    pub raw_pmf: QuantizedPmf,
    pub pmf: QuantizedPmf,
    pub degenerate: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Denoised<D> {
    pub estimate: Vec<f64>,
    pub diagnostics: D,
}

/// First pass: density estimate of `y`.
pub fn estimate_output_density(
    y: &[f64],
    channel: &ChannelModel,
    opts: &SymbolwiseOptions,
) -> Result<(DensityEstimate, f64, bool)> {
    let (a, b) = channel.input_range();
    match opts.density {
        DensityMethod::Kernel => {
            let (h, fell_back) = choose_bandwidth(y, 1, opts.bandwidth, opts.kernel, b - a)?;
            let axis = estimation_axis(y, channel, h, opts.grid_points)?;
            let f = kde(y, &Kernel::new(opts.kernel, 1)?, h, &[axis], opts.kde_method)?;
            Ok((f, h, fell_back))
        }
        DensityMethod::Histogram(width) => Ok((histogram_estimate(y, 1, width, a)?, width, false)),
    }
}

/// Estimates the output density, invert the channel, quantize
/// the masses, then apply the Bayes response at every position.
pub fn denoise_symbolwise(
    y: &[f64],
    channel: &ChannelModel,
    loss: &LossFunction,
    opts: &SymbolwiseOptions,
) -> Result<Denoised<SymbolwiseDiagnostics>> {
    if y.is_empty() {
        return Err(Error::Empty("no observations"));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("observation {bad} is not finite")));
    }
    let grid = opts.support_grid(channel)?;
    let (f_hat, h, fell_back) = estimate_output_density(y, channel, opts)?;
    let mut inversion = opts.inversion;
    if inversion.match_kernel.is_some() {
        inversion.match_kernel = Some(opts.kernel);
    }
    let lp = invert_channel(&f_hat, channel, &grid, opts.level_step, &inversion)?;
    let rule = DenoiserRule::from_pmf(&lp.pmf, channel, loss)?;
    let (estimate, degenerate) = rule.apply_all(y);
    if degenerate > 0 {
        log::warn!("{degenerate} observations had vanishing likelihood under every symbol");
    }
    Ok(Denoised {
        estimate,
        diagnostics: SymbolwiseDiagnostics {
            bandwidth: h,
            bandwidth_fell_back: fell_back,
            lp_objective: lp.objective,
            lp_gap: lp.gap,
            lp_iterations: lp.iterations,
            raw_pmf: lp.raw,
            pmf: lp.pmf,
            degenerate,
        },
    })
}

/// Prior over context tuples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuplePrior {
    /// Tuple-alphabet channel inversion.
    #[default]
    Full,
    /// Independent coordinates sharing the symbol-by-symbol pmf. This
    /// approximation sits outside the convergence guarantees of the
    /// method: context then carries no information and the rule reduces to
    /// the symbol-by-symbol rule at the centre.
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingOptions {
    pub k: usize,
    /// Used for the border positions, and as the starting point of tuple
    /// inversion.
    pub base: SymbolwiseOptions,
    /// Support step of tuple symbols; `None` uses the base step.
    pub context_delta: Option<f64>,
    pub context_grid_points: usize,
    pub prior: TuplePrior,
    pub solver: PrimalDualOptions,
}

impl Default for SlidingOptions {
    fn default() -> Self {
        SlidingOptions {
            k: 1,
            base: SymbolwiseOptions::default(),
            context_delta: None,
            context_grid_points: DEFAULT_GRID_3D,
            prior: TuplePrior::Full,
            solver: PrimalDualOptions {
                max_iterations: 500,
                relative_gap: 1e-3,
                check_every: 25,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassDiagnostics {
    pub centers: usize,
    pub bandwidth: f64,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlidingDiagnostics {
    pub base: SymbolwiseDiagnostics,
    pub classes: Vec<ClassDiagnostics>,
    pub border_positions: usize,
}

/// Spreads fine-grid masses onto a coarser grid: symbol `c_i` collects the
/// fine symbols in `(c_{i-1}, c_i]`.
fn coarsen(pmf: &QuantizedPmf, coarse: &SupportGrid) -> Vec<f64> {
    let mut out = vec![0.0; coarse.len()];
    for (&s, &m) in pmf.symbols().iter().zip(&pmf.masses) {
        let i = coarse.symbols().partition_point(|&c| c < s).min(coarse.len() - 1);
        out[i] += m.max(0.0);
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    } else {
        out.iter_mut().for_each(|v| *v = 1.0 / coarse.len() as f64);
    }
    out
}

/// Reconstructions `(position, value)` of one context class.
type ClassOutcome = (Vec<(usize, f64)>, ClassDiagnostics);

/// Largest tuple density grid.
pub const CONTEXT_GRID_CAP: usize = 1 << 22;

/// `requested` points per axis, reduced so the full grid stays within
/// [`CONTEXT_GRID_CAP`].
pub fn context_axis_points(requested: usize, width: usize) -> usize {
    let mut per_axis = requested.max(2);
    while per_axis > 2 && (per_axis as u128).pow(width as u32) > CONTEXT_GRID_CAP as u128 {
        per_axis -= 1;
    }
    if per_axis < requested {
        log::warn!("tuple density grid reduced to {per_axis} points per axis for width {width}");
    }
    per_axis
}

/// Sliding-window denoiser over an arbitrary context layout. Each class of
/// non-overlapping neighbourhoods gets its own tuple density estimate,
/// inversion and rule; positions without a full context use the
/// symbol-by-symbol rule.
pub fn denoise_sliding(
    y: &[f64],
    layout: &ContextLayout,
    channel: &ChannelModel,
    loss: &LossFunction,
    opts: &SlidingOptions,
) -> Result<Denoised<SlidingDiagnostics>> {
    if layout.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: layout.len(),
            actual: y.len(),
        });
    }
    let base = denoise_symbolwise(y, channel, loss, &opts.base)?;
    let mut estimate = base.estimate.clone();
    let (a, b) = channel.input_range();
    let width = layout.width();

    let per_class: Vec<Result<ClassOutcome>> = match opts.prior {
        TuplePrior::Product => {
            // context factors out of the posterior; see TuplePrior::Product
            let rule = DenoiserRule::from_pmf(&base.diagnostics.pmf, channel, loss)?;
            layout
                .classes()
                .iter()
                .map(|class| {
                    let mut degenerate = 0;
                    let out = class
                        .iter()
                        .map(|&c| {
                            let r = rule.respond(y[c]);
                            degenerate += r.degenerate as usize;
                            (c, rule.candidates()[r.index])
                        })
                        .collect();
                    Ok((
                        out,
                        ClassDiagnostics {
                            centers: class.len(),
                            bandwidth: 0.0,
                            objective: f64::NAN,
                            gap: f64::NAN,
                            iterations: 0,
                            converged: true,
                            degenerate,
                        },
                    ))
                })
                .collect()
        }
        TuplePrior::Full => {
            let grid = SupportGrid::new(a, b, opts.context_delta.or(opts.base.delta_support).unwrap_or((b - a) / 32.0))?;
            let states = grid.len().saturating_pow(width as u32);
            if states > crate::inversion::TUPLE_STATE_CAP {
                return Err(Error::AlphabetCap {
                    states,
                    cap: crate::inversion::TUPLE_STATE_CAP,
                });
            }
            let per_axis = context_axis_points(opts.context_grid_points, width);
            let start = TuplePmf::product(
                &QuantizedPmf::new(grid.clone(), coarsen(&base.diagnostics.raw_pmf, &grid))?,
                width,
            );
            layout
                .classes()
                .par_iter()
                .enumerate()
                .map(|(ci, class)| {
                    if class.is_empty() {
                        return Ok((
                            Vec::new(),
                            ClassDiagnostics {
                                centers: 0,
                                bandwidth: 0.0,
                                objective: 0.0,
                                gap: 0.0,
                                iterations: 0,
                                converged: true,
                                degenerate: 0,
                            },
                        ));
                    }
                    let tuples = layout.tuples(y, ci);
                    let (h, _) = choose_bandwidth(&tuples, width, opts.base.bandwidth, opts.base.kernel, b - a)?;
                    let axis = estimation_axis(&tuples, channel, h, per_axis)?;
                    let f = kde(
                        &tuples,
                        &Kernel::new(opts.base.kernel, width)?,
                        h,
                        &vec![axis; width],
                        opts.base.kde_method,
                    )?;
                    let sol = invert_tuples(
                        &f,
                        channel,
                        &grid,
                        opts.base.level_step,
                        Some(&start.masses),
                        opts.base.inversion.match_kernel.map(|_| opts.base.kernel),
                        &opts.solver,
                    )?;
                    let rule = TupleRule::from_tuple_pmf(
                        &sol.pmf,
                        layout.center_slot(),
                        Likelihood::Channel(channel.clone()),
                        loss,
                    )?;
                    let mut buf = vec![0.0; width];
                    let mut degenerate = 0;
                    let out = class
                        .iter()
                        .map(|&c| {
                            layout.gather(y, c, &mut buf);
                            let r = rule.respond(&buf);
                            degenerate += r.degenerate as usize;
                            (c, rule.candidates()[r.index])
                        })
                        .collect();
                    Ok((
                        out,
                        ClassDiagnostics {
                            centers: class.len(),
                            bandwidth: h,
                            objective: sol.objective,
                            gap: sol.gap,
                            iterations: sol.iterations,
                            converged: sol.converged,
                            degenerate,
                        },
                    ))
                })
                .collect()
        }
    };

    let mut classes = Vec::with_capacity(per_class.len());
    let mut interior = 0;
    for result in per_class {
        let (values, diag) = result?;
        interior += values.len();
        for (c, v) in values {
            estimate[c] = v;
        }
        classes.push(diag);
    }
    Ok(Denoised {
        estimate,
        diagnostics: SlidingDiagnostics {
            base: base.diagnostics,
            classes,
            border_positions: y.len() - interior,
        },
    })
}

/// Order-k sliding-window denoiser over a one-dimensional sequence.
pub fn denoise_sequence_sliding(
    y: &[f64],
    channel: &ChannelModel,
    loss: &LossFunction,
    opts: &SlidingOptions,
) -> Result<Denoised<SlidingDiagnostics>> {
    if opts.k == 0 {
        return Err(Error::invalid("sliding-window order must be at least 1"));
    }
    let layout = ContextLayout::sequence(y.len(), opts.k)?;
    denoise_sliding(y, &layout, channel, loss, opts)
}

/// Distinct values of `x` (sorted) with their relative frequencies.
fn empirical(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut values: Vec<f64> = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    for v in sorted {
        if values.last() == Some(&v) {
            *masses.last_mut().unwrap() += 1.0;
        } else {
            values.push(v);
            masses.push(1.0);
        }
    }
    let n = x.len() as f64;
    masses.iter_mut().for_each(|m| *m /= n);
    (values, masses)
}

/// Symbol-by-symbol minimum loss: the expected loss of the Bayes response
/// to the true empirical distribution of `x`, restricted to reconstructions
/// in `grid`, integrated over `quadrature`.
pub fn genie_d0(
    x: &[f64],
    channel: &ChannelModel,
    loss: &LossFunction,
    grid: &SupportGrid,
    quadrature: &UniformAxis,
) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty("no clean symbols"));
    }
    let (lo, hi) = channel.input_range();
    if let Some(&bad) = x.iter().find(|v| !(**v >= lo && **v <= hi)) {
        return Err(Error::Domain { value: bad, lo, hi });
    }
    let (values, masses) = empirical(x);
    let rule = DenoiserRule::new(
        values.clone(),
        masses.clone(),
        grid.symbols(),
        Likelihood::Channel(channel.clone()),
        loss,
    )?;
    let total: f64 = (0..quadrature.count)
        .into_par_iter()
        .map(|i| {
            let yv = quadrature.point(i);
            let xhat = rule.apply(yv);
            let expected: f64 = values
                .iter()
                .zip(&masses)
                .map(|(&a, &p)| p * channel.pdf(a, yv) * loss.eval(a, xhat))
                .sum();
            expected * quadrature.weight(i)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total)
}

/// Number of quadrature points used when none is given.
pub const GENIE_QUADRATURE_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenieEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub replications: usize,
    /// Set when fewer than two replications were run, so no error bar exists.
    pub wide: bool,
}

/// Order-k sliding-window minimum loss. `k = 0` integrates exactly;
/// otherwise the Bayes response to the true tuple distribution of `x` is
/// scored on `replications` independent channel draws.
pub fn genie_dk(
    x: &[f64],
    channel: &ChannelModel,
    loss: &LossFunction,
    k: usize,
    grid: &SupportGrid,
    replications: usize,
    seeds: SeedStream,
) -> Result<GenieEstimate> {
    if k == 0 {
        let q = channel.quadrature_grid(GENIE_QUADRATURE_POINTS)?;
        return Ok(GenieEstimate {
            value: genie_d0(x, channel, loss, grid, &q)?,
            standard_error: 0.0,
            replications: 0,
            wide: false,
        });
    }
    let n = x.len();
    if n < 2 * k + 1 {
        return Err(Error::invalid(format!("sequence of length {n} is shorter than one window")));
    }
    let width = 2 * k + 1;
    let (values, _) = empirical(x);
    let index_of = |v: f64| values.partition_point(|&s| s < v) as u32;
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    for c in k..n - k {
        *counts.entry(x[c - k..=c + k].iter().map(|&v| index_of(v)).collect()).or_default() += 1;
    }
    let centers = (n - 2 * k) as f64;
    let mut entries: Vec<(Vec<u32>, f64)> = counts.into_iter().map(|(u, c)| (u, c as f64 / centers)).collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let rule = TupleRule::new(
        values,
        width,
        k,
        entries,
        grid.symbols(),
        Likelihood::Channel(channel.clone()),
        loss,
    )?;
    let losses: Vec<f64> = (0..replications.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = seeds.rng(r as u64);
            let y: Vec<f64> = x.iter().map(|&v| channel.sample_unchecked(v, &mut rng)).collect();
            (k..n - k)
                .map(|c| loss.eval(x[c], rule.apply(&y[c - k..=c + k])))
                .sum::<f64>()
                / centers
        })
        .collect();
    let r = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / r;
    let se = if losses.len() > 1 {
        (losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (r - 1.0) / r).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(GenieEstimate {
        value: mean,
        standard_error: se,
        replications: losses.len(),
        wide: losses.len() < 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(x: &[f64], channel: &ChannelModel, seed: u64) -> Vec<f64> {
        let mut rng = SeedStream::new(seed).rng(0);
        x.iter().map(|&v| channel.sample(v, &mut rng).unwrap()).collect()
    }

    #[test]
    fn near_noiseless_channel_quantizes() {
        let channel = ChannelModel::awgn(1e-3, 0.0, 1.0).unwrap();
        let grid = SupportGrid::new(0.0, 1.0, 0.125).unwrap();
        let x: Vec<f64> = (0..400).map(|i| grid.symbols()[(i * 7) % grid.len()]).collect();
        let y = noisy(&x, &channel, 3);
        let opts = SymbolwiseOptions {
            delta_support: Some(0.125),
            level_step: 1e-6,
            ..Default::default()
        };
        let out = denoise_symbolwise(&y, &channel, &LossFunction::squared(0.0, 1.0), &opts).unwrap();
        for (yi, xi) in y.iter().zip(&out.estimate) {
            assert_eq!(*xi, grid.symbols()[grid.nearest(*yi)]);
        }
    }

    #[test]
    fn single_observation() {
        let channel = ChannelModel::awgn(0.1, 0.0, 1.0).unwrap();
        let out = denoise_symbolwise(&[0.4], &channel, &LossFunction::squared(0.0, 1.0), &Default::default()).unwrap();
        assert_eq!(out.estimate.len(), 1);
        assert!(out.diagnostics.bandwidth_fell_back);
    }

    #[test]
    fn genie_constant_is_zero() {
        let channel = ChannelModel::awgn(0.3, 0.0, 1.0).unwrap();
        let grid = SupportGrid::new(0.0, 1.0, 0.25).unwrap();
        let q = channel.quadrature_grid(2048).unwrap();
        let d0 = genie_d0(&[0.5; 100], &channel, &LossFunction::squared(0.0, 1.0), &grid, &q).unwrap();
        assert!(d0.abs() < 1e-12);
    }

    #[test]
    fn genie_uninformative_channel() {
        let channel = ChannelModel::awgn(100.0, 0.0, 1.0).unwrap();
        let grid = SupportGrid::new(0.0, 1.0, 0.25).unwrap();
        let q = channel.quadrature_grid(4096).unwrap();
        let x: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let d0 = genie_d0(&x, &channel, &LossFunction::squared(0.0, 1.0), &grid, &q).unwrap();
        assert!((d0 - 0.25).abs() < 1e-4, "{d0}");
    }

    #[test]
    fn genie_finer_grid_never_worse() {
        let channel = ChannelModel::awgn(0.3, 0.0, 1.0).unwrap();
        let q = channel.quadrature_grid(4096).unwrap();
        let x: Vec<f64> = (0..90).map(|i| [0.1, 0.45, 0.9][i % 3]).collect();
        let loss = LossFunction::squared(0.0, 1.0);
        let coarse = genie_d0(&x, &channel, &loss, &SupportGrid::new(0.0, 1.0, 0.25).unwrap(), &q).unwrap();
        let fine = genie_d0(&x, &channel, &loss, &SupportGrid::new(0.0, 1.0, 0.125).unwrap(), &q).unwrap();
        assert!(fine <= coarse + 1e-9, "{fine} > {coarse}");
    }

    #[test]
    fn genie_dk_order_zero_matches_d0() {
        let channel = ChannelModel::awgn(0.3, 0.0, 1.0).unwrap();
        let grid = SupportGrid::new(0.0, 1.0, 0.25).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i % 3) as f64 / 2.0).collect();
        let loss = LossFunction::squared(0.0, 1.0);
        let q = channel.quadrature_grid(GENIE_QUADRATURE_POINTS).unwrap();
        let d0 = genie_d0(&x, &channel, &loss, &grid, &q).unwrap();
        let dk = genie_dk(&x, &channel, &loss, 0, &grid, 1, SeedStream::new(1)).unwrap();
        assert!((d0 - dk.value).abs() < 1e-6);
    }

    #[test]
    fn bandwidth_policy_parses() {
        assert_eq!("auto".parse::<BandwidthPolicy>().unwrap(), BandwidthPolicy::Silverman);
        assert_eq!("0.5".parse::<BandwidthPolicy>().unwrap(), BandwidthPolicy::Fixed(0.5));
        assert!("-1".parse::<BandwidthPolicy>().is_err());
    }
}
