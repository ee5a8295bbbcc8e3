//! Channel inversion: recovering a quantized input distribution from an
//! output density estimate by L1 projection through the channel.

pub mod primal_dual;
pub mod simplex;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channels::ChannelModel;
use crate::channels::ChannelKind;
use crate::density::{DensityEstimate, Kernel, KernelKind, Quadrature};
use crate::grid::UniformAxis;
use crate::error::{Error, Result};

pub use primal_dual::{DenseOperator, KroneckerPower, LinearOperator, PrimalDualOptions};
pub use simplex::PivotRule;

/// Largest tuple alphabet accepted by [`invert_tuples`].
pub const TUPLE_STATE_CAP: usize = 100_000;

/// Symbols `a, a + delta, ...` on `[a, b]`, closed off with `b` when the
/// interval is not a whole number of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportGrid {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    symbols: Vec<f64>,
}

impl SupportGrid {
    pub fn new(a: f64, b: f64, delta: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(format!("support interval [{a}, {b}] is empty")));
        }
        if !(delta > 0.0) || delta > b - a {
            return Err(Error::invalid(format!("step {delta} must lie in (0, {}]", b - a)));
        }
        let ratio = (b - a) / delta;
        let steps = (ratio + 1e-9).floor() as usize;
        let mut symbols: Vec<f64> = (0..=steps).map(|i| a + i as f64 * delta).collect();
        if (ratio - steps as f64).abs() <= 1e-9 {
            *symbols.last_mut().unwrap() = b;
        } else {
            symbols.push(b);
        }
        Ok(SupportGrid { a, b, delta, symbols })
    }

    pub fn symbols(&self) -> &[f64] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Index of the nearest symbol; ties go to the smaller one.
    pub fn nearest(&self, x: f64) -> usize {
        let pos = self.symbols.partition_point(|&s| s < x);
        if pos == 0 {
            return 0;
        }
        if pos == self.symbols.len() {
            return pos - 1;
        }
        if x - self.symbols[pos - 1] <= self.symbols[pos] - x {
            pos - 1
        } else {
            pos
        }
    }
}

/// Masses on a [`SupportGrid`], possibly rounded to multiples of a level step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedPmf {
    pub grid: SupportGrid,
    pub masses: Vec<f64>,
    /// Level step of the last rounding, 0 when unrounded.
    pub level_step: f64,
    pub normalized: bool,
}

impl QuantizedPmf {
    pub fn new(grid: SupportGrid, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: masses.len(),
            });
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::invalid("masses must be finite and non-negative"));
        }
        let normalized = (masses.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        Ok(QuantizedPmf {
            grid,
            masses,
            level_step: 0.0,
            normalized,
        })
    }

    pub fn point_mass(grid: SupportGrid, index: usize) -> Self {
        let mut masses = vec![0.0; grid.len()];
        masses[index] = 1.0;
        QuantizedPmf {
            grid,
            masses,
            level_step: 0.0,
            normalized: true,
        }
    }

    pub fn symbols(&self) -> &[f64] {
        self.grid.symbols()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Index of the largest mass; ties go to the smallest symbol.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, m) in self.masses.iter().enumerate() {
            if *m > self.masses[best] {
                best = i;
            }
        }
        best
    }

    pub fn cdf(&self) -> StepCdf {
        StepCdf::from_masses(self.symbols(), &self.masses)
    }

    /// `symbol,mass` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["symbol", "mass"])?;
        for (s, m) in self.symbols().iter().zip(&self.masses) {
            w.write_record([s.to_string(), m.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<pmf csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

/// Sorts `samples` and returns the mass each symbol receives: symbol `a_i`
/// collects `(a_{i-1}, a_i]` and `a_0` collects everything up to `a_0`.
pub fn quantize_support(samples: &[f64], grid: &SupportGrid) -> Result<QuantizedPmf> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to quantize"));
    }
    let mut counts = vec![0usize; grid.len()];
    for &x in samples {
        if !(x >= grid.a && x <= grid.b) {
            return Err(Error::Domain {
                value: x,
                lo: grid.a,
                hi: grid.b,
            });
        }
        counts[grid.symbols().partition_point(|&s| s < x)] += 1;
    }
    let n = samples.len() as f64;
    let masses = counts.iter().map(|&c| c as f64 / n).collect();
    QuantizedPmf::new(grid.clone(), masses)
}

/// Rounds `m` to the nearest multiple of `step`, halves away from zero.
pub fn round_to_level(m: f64, step: f64) -> f64 {
    let q = m / step;
    // absorbs representation error such as 0.05 / 0.1 = 0.49999999999999994
    let guarded = q + q.signum() * 1e-9;
    guarded.round() * step
}

pub fn quantize_levels(pmf: &QuantizedPmf, step: f64) -> Result<QuantizedPmf> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid(format!("level step {step} must lie in (0, 1]")));
    }
    Ok(QuantizedPmf {
        grid: pmf.grid.clone(),
        masses: pmf.masses.iter().map(|&m| round_to_level(m, step)).collect(),
        level_step: step,
        normalized: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Simplex,
    PrimalDual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionOptions {
    pub solver: SolverKind,
    pub pivot: PivotRule,
    /// Simplex pivots, or primal-dual iterations. `None` picks a size-based cap.
    pub max_iterations: Option<usize>,
    pub alphabet_cap: usize,
    /// Stopping tolerance of the primal-dual solver.
    pub relative_gap: f64,
    /// Kernel the output density was smoothed with. When set (and the
    /// estimate carries a bandwidth), each channel column is convolved with
    /// the same kernel so the fit targets the expected estimate.
    pub match_kernel: Option<KernelKind>,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions {
            solver: SolverKind::Simplex,
            pivot: PivotRule::Bland,
            max_iterations: None,
            alphabet_cap: 1025,
            relative_gap: 1e-4,
            match_kernel: Some(KernelKind::Gaussian),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LpSolution {
    /// Minimiser before level rounding.
    pub raw: QuantizedPmf,
    /// Minimiser after level rounding.
    pub pmf: QuantizedPmf,
    /// Weighted L1 residual of the raw minimiser.
    pub objective: f64,
    /// Per output grid point weighted absolute residuals.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Objective minus a dual lower bound.
    pub gap: f64,
    pub solver: SolverKind,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    objective: f64,
    iterations: usize,
    gap: f64,
    solver: SolverKind,
    level_step: f64,
    raw_total: f64,
    total: f64,
    masses_file: &'a str,
}

impl LpSolution {
    /// Writes the rounded pmf as CSV and a JSON sidecar next to it
    /// (`<path>.json`).
    pub fn save(&self, path: &Path) -> Result<()> {
        self.pmf.save_csv(path)?;
        let sidecar = Sidecar {
            objective: self.objective,
            iterations: self.iterations,
            gap: self.gap,
            solver: self.solver,
            level_step: self.pmf.level_step,
            raw_total: self.raw.total(),
            total: self.pmf.total(),
            masses_file: path.file_name().and_then(|s| s.to_str()).unwrap_or(""),
        };
        let mut json_path = path.as_os_str().to_owned();
        json_path.push(".json");
        let json_path = std::path::PathBuf::from(json_path);
        let f = std::fs::File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
        serde_json::to_writer_pretty(f, &sidecar)?;
        Ok(())
    }
}

/// Conditional densities `f(y_i | a_j)` on `axis` (row-major, points by
/// symbols), optionally convolved with a kernel of bandwidth `h`.
pub fn channel_columns(
    channel: &ChannelModel,
    symbols: &[f64],
    axis: &UniformAxis,
    smoothing: Option<(KernelKind, f64)>,
) -> Vec<f64> {
    let m = symbols.len();
    let mut data = vec![0.0; axis.count * m];
    for (j, &a) in symbols.iter().enumerate() {
        let column = column_values(channel, a, axis, smoothing);
        for (i, v) in column.into_iter().enumerate() {
            data[i * m + j] = v;
        }
    }
    data
}

fn column_values(channel: &ChannelModel, a: f64, axis: &UniformAxis, smoothing: Option<(KernelKind, f64)>) -> Vec<f64> {
    let Some((kind, h)) = smoothing.filter(|(_, h)| *h > 0.0) else {
        return axis.points().into_iter().map(|y| channel.pdf(a, y)).collect();
    };
    // Gaussian families stay Gaussian under a Gaussian kernel
    if kind == KernelKind::Gaussian {
        let mean = match channel.kind() {
            ChannelKind::AdditiveGaussian { .. } => Some(a),
            ChannelKind::MultiplicativeGaussian { mean, .. } => Some(a * mean),
            _ => None,
        };
        if let Some(mu) = mean {
            let sd = (channel.spread(a).powi(2) + h * h).sqrt();
            return axis
                .points()
                .into_iter()
                .map(|y| crate::channels::normal_pdf(y, mu, sd))
                .collect();
        }
    }
    let kernel = Kernel::new(kind, 1).expect("dimension 1");
    let (lo, hi) = channel.conditional_support(a);
    let step = (channel.spread(a).min(h) / 4.0).max((hi - lo) / 4096.0);
    let count = (((hi - lo) / step).ceil() as usize + 1).max(2);
    let nodes = UniformAxis::spanning(lo, hi, count).expect("non-empty support");
    let mass: Vec<f64> = (0..count)
        .map(|l| channel.pdf(a, nodes.point(l)) * nodes.weight(l))
        .collect();
    let reach = kernel.radius() * h;
    axis.points()
        .into_iter()
        .map(|y| {
            let first = (((y - reach - lo) / nodes.step).floor().max(0.0) as usize).min(count);
            let last = (((y + reach - lo) / nodes.step).ceil().max(0.0) as usize + 1).min(count);
            (first..last)
                .map(|l| mass[l] * kernel.eval_1d((y - nodes.point(l)) / h))
                .sum::<f64>()
                / h
        })
        .collect()
}

fn smoothing_for(f_hat: &DensityEstimate, opts: &InversionOptions) -> Option<(KernelKind, f64)> {
    match (opts.match_kernel, f_hat.quadrature()) {
        (Some(kind), Quadrature::Trapezoid) if f_hat.bandwidth() > 0.0 => Some((kind, f_hat.bandwidth())),
        _ => None,
    }
}

/// Weighted system `w_i f(y_i | a_j)`, `w_i f_hat(y_i)` on the first axis of `f_hat`.
fn weighted_system(
    f_hat: &DensityEstimate,
    channel: &ChannelModel,
    symbols: &[f64],
    opts: &InversionOptions,
) -> (DenseOperator, Vec<f64>) {
    let axis = f_hat.axis();
    let weights = f_hat.weights();
    let m = symbols.len();
    let mut data = channel_columns(channel, symbols, axis, smoothing_for(f_hat, opts));
    for (row, w) in data.chunks_mut(m).zip(&weights) {
        row.iter_mut().for_each(|v| *v *= w);
    }
    let d = f_hat.values().iter().zip(&weights).map(|(v, w)| v * w).collect();
    (
        DenseOperator {
            rows: axis.count,
            cols: m,
            data,
        },
        d,
    )
}

fn check_support(grid: &SupportGrid, channel: &ChannelModel) -> Result<()> {
    let (lo, hi) = channel.input_range();
    if grid.a < lo - 1e-9 || grid.b > hi + 1e-9 {
        return Err(Error::Domain {
            value: if grid.a < lo { grid.a } else { grid.b },
            lo,
            hi,
        });
    }
    Ok(())
}

/// Solves `min_{p in simplex} sum_i w_i |f_hat(y_i) - sum_j f(y_i | a_j) p_j|`
/// on the grid of `f_hat`, then rounds masses to multiples of `level_step`.
pub fn invert_channel(
    f_hat: &DensityEstimate,
    channel: &ChannelModel,
    grid: &SupportGrid,
    level_step: f64,
    opts: &InversionOptions,
) -> Result<LpSolution> {
    if f_hat.dim() != 1 {
        return Err(Error::invalid("invert_channel needs a one-dimensional density"));
    }
    if grid.len() > opts.alphabet_cap {
        return Err(Error::AlphabetCap {
            states: grid.len(),
            cap: opts.alphabet_cap,
        });
    }
    check_support(grid, channel)?;
    let (op, d) = weighted_system(f_hat, channel, grid.symbols(), opts);
    let (p, iterations, dual) = match opts.solver {
        SolverKind::Simplex => {
            let cap = opts.max_iterations.unwrap_or(50 * (op.rows + grid.len()));
            let s = simplex::solve_l1_simplex(&op.data, &d, op.rows, op.cols, opts.pivot, cap)?;
            let dual = primal_dual::dual_bound(&op, &d, &s.duals);
            (s.p, s.iterations, dual)
        }
        SolverKind::PrimalDual => {
            let pd = PrimalDualOptions {
                max_iterations: opts.max_iterations.unwrap_or(PrimalDualOptions::default().max_iterations),
                relative_gap: opts.relative_gap,
                ..Default::default()
            };
            let out = primal_dual::solve_l1_primal_dual(&op, &d, None, &pd);
            if !out.converged {
                return Err(Error::SolverNonConvergence {
                    iterations: out.iterations,
                    detail: format!("primal {:.6e}, dual bound {:.6e}", out.primal, out.dual),
                });
            }
            (out.p, out.iterations, out.dual)
        }
    };
    let kp = op.apply(&p);
    let residuals: Vec<f64> = kp.iter().zip(&d).map(|(a, b)| (a - b).abs()).collect();
    let objective: f64 = residuals.iter().sum();
    let total: f64 = p.iter().sum();
    let raw = QuantizedPmf {
        grid: grid.clone(),
        masses: p,
        level_step: 0.0,
        normalized: (total - 1.0).abs() <= 1e-9,
    };
    let pmf = quantize_levels(&raw, level_step)?;
    Ok(LpSolution {
        raw,
        pmf,
        objective,
        residuals,
        iterations,
        gap: (objective - dual).max(0.0),
        solver: opts.solver,
    })
}

/// Right-continuous step distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    points: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StepCdf {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let w = vec![1.0 / samples.len().max(1) as f64; samples.len()];
        Self::from_masses(&sorted, &w)
    }

    /// `points` must be sorted. Negative masses are ignored; the result is
    /// rescaled to total mass one.
    pub fn from_masses(points: &[f64], masses: &[f64]) -> Self {
        let total: f64 = masses.iter().map(|m| m.max(0.0)).sum();
        let mut out_p: Vec<f64> = Vec::with_capacity(points.len());
        let mut out_c: Vec<f64> = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for (&x, &m) in points.iter().zip(masses) {
            acc += m.max(0.0) / total.max(f64::MIN_POSITIVE);
            if out_p.last() == Some(&x) {
                *out_c.last_mut().unwrap() = acc;
            } else {
                out_p.push(x);
                out_c.push(acc);
            }
        }
        StepCdf {
            points: out_p,
            cumulative: out_c,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.points.partition_point(|&p| p <= x) {
            0 => 0.0,
            i => self.cumulative[i - 1],
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// `sup_x |F(x) - G(x)|`.
pub fn kolmogorov_distance(f: &StepCdf, g: &StepCdf) -> f64 {
    f.points
        .iter()
        .chain(&g.points)
        .map(|&x| (f.eval(x) - g.eval(x)).abs())
        .fold(0.0, f64::max)
}

// does G(x) <= F(x + eps) + eps hold for all x
fn below_shifted(g: &StepCdf, f: &StepCdf, eps: f64) -> bool {
    const SLACK: f64 = 1e-12;
    let check = |x: f64| g.eval(x) <= f.eval(x + eps + SLACK) + eps + SLACK;
    g.points.iter().all(|&x| check(x)) && f.points.iter().all(|&p| check(p - eps))
}

/// Smallest `eps` with `F(x - eps) - eps <= G(x) <= F(x + eps) + eps` for all
/// `x`, by bisection to within `1e-6`.
pub fn levy_distance(f: &StepCdf, g: &StepCdf) -> f64 {
    let ok = |eps: f64| below_shifted(g, f, eps) && below_shifted(f, g, eps);
    if ok(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Masses over `(2k+1)`-tuples of symbols, row-major with the first
/// coordinate slowest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuplePmf {
    pub grid: SupportGrid,
    pub dim: usize,
    pub masses: Vec<f64>,
}

impl TuplePmf {
    /// Product of a one-dimensional pmf with itself.
    pub fn product(pmf: &QuantizedPmf, dim: usize) -> Self {
        let mut masses = vec![1.0];
        for _ in 0..dim {
            masses = masses
                .iter()
                .flat_map(|a| pmf.masses.iter().map(move |b| a * b))
                .collect();
        }
        TuplePmf {
            grid: pmf.grid.clone(),
            dim,
            masses,
        }
    }

    /// Marginal of coordinate `slot`.
    pub fn marginal(&self, slot: usize) -> Vec<f64> {
        let m = self.grid.len();
        let stride = m.pow((self.dim - 1 - slot) as u32);
        let mut out = vec![0.0; m];
        for (flat, p) in self.masses.iter().enumerate() {
            out[(flat / stride) % m] += p;
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TupleSolution {
    pub pmf: TuplePmf,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Tuple version of [`invert_channel`] on a product grid, using the
/// Kronecker structure of the memoryless channel. Runs the primal-dual
/// solver; a non-converged result is returned with its certified gap.
pub fn invert_tuples(
    f_hat: &DensityEstimate,
    channel: &ChannelModel,
    grid: &SupportGrid,
    level_step: f64,
    start: Option<&[f64]>,
    smoothing: Option<KernelKind>,
    opts: &PrimalDualOptions,
) -> Result<TupleSolution> {
    let smoothing = smoothing
        .filter(|_| f_hat.bandwidth() > 0.0 && f_hat.quadrature() == Quadrature::Trapezoid)
        .map(|k| (k, f_hat.bandwidth()));
    let dim = f_hat.dim();
    let states = grid
        .len()
        .checked_pow(dim as u32)
        .filter(|s| *s <= TUPLE_STATE_CAP)
        .ok_or(Error::AlphabetCap {
            states: grid.len().saturating_pow(dim as u32),
            cap: TUPLE_STATE_CAP,
        })?;
    check_support(grid, channel)?;
    let axis = f_hat.axes()[0];
    if f_hat.axes().iter().any(|a| !a.approx_eq(&axis)) {
        return Err(Error::GridMismatch("tuple inversion needs identical axes".into()));
    }
    // per-axis weights; the product weight of a grid point factorises
    let m = grid.len();
    let mut data = channel_columns(channel, grid.symbols(), &axis, smoothing);
    for (i, row) in data.chunks_mut(m).enumerate() {
        let w = match f_hat.quadrature() {
            Quadrature::Trapezoid => axis.weight(i),
            Quadrature::Midpoint => axis.step,
        };
        row.iter_mut().for_each(|v| *v *= w);
    }
    let op = KroneckerPower {
        factor: DenseOperator {
            rows: axis.count,
            cols: m,
            data,
        },
        dim,
    };
    let d: Vec<f64> = f_hat.values().iter().zip(f_hat.weights()).map(|(v, w)| v * w).collect();
    if let Some(s) = start {
        if s.len() != states {
            return Err(Error::LengthMismatch {
                expected: states,
                actual: s.len(),
            });
        }
    }
    let out = primal_dual::solve_l1_primal_dual(&op, &d, start, opts);
    if !out.converged {
        log::warn!(
            "tuple inversion stopped after {} iterations with gap {:.3e} (objective {:.3e})",
            out.iterations,
            out.primal - out.dual,
            out.primal
        );
    }
    let masses = out.p.iter().map(|&v| round_to_level(v, level_step)).collect();
    Ok(TupleSolution {
        pmf: TuplePmf {
            grid: grid.clone(),
            dim,
            masses,
        },
        objective: out.primal,
        gap: (out.primal - out.dual).max(0.0),
        iterations: out.iterations,
        converged: out.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UniformAxis;

    #[test]
    fn support_grid_closes_with_b() {
        let g = SupportGrid::new(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.symbols().len(), 5);
        assert_eq!(*g.symbols().last().unwrap(), 1.0);
        let g = SupportGrid::new(0.0, 1.0, 0.25).unwrap();
        assert_eq!(g.symbols(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = SupportGrid::new(0.0, 255.0, 16.0).unwrap();
        assert_eq!(g.len(), 17);
        assert!(SupportGrid::new(0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn quantize_support_examples() {
        let g = SupportGrid::new(0.0, 1.0, 0.25).unwrap();
        let samples: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let p = quantize_support(&samples, &g).unwrap();
        let expected = [0.0, 0.2, 0.3, 0.2, 0.3];
        for (a, b) in p.masses.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(p.normalized);
        assert_eq!(quantize_support(&[1.0, 1.0], &g).unwrap().masses, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(quantize_support(&[0.0], &g).unwrap().masses, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(quantize_support(&[1.5], &g).is_err());
    }

    #[test]
    fn quantize_levels_examples() {
        let g = SupportGrid::new(0.0, 1.0, 1.0).unwrap();
        let p = QuantizedPmf::new(g.clone(), vec![0.14, 0.86]).unwrap();
        let q = quantize_levels(&p, 0.1).unwrap();
        assert!((q.masses[0] - 0.1).abs() < 1e-15 && (q.masses[1] - 0.9).abs() < 1e-15);
        let p = QuantizedPmf::new(g.clone(), vec![0.05, 0.95]).unwrap();
        let q = quantize_levels(&p, 0.1).unwrap();
        assert!((q.masses[0] - 0.1).abs() < 1e-15 && (q.masses[1] - 1.0).abs() < 1e-15);
        assert!(!q.normalized);
        let p = QuantizedPmf::new(g, vec![0.123456789, 0.876543211]).unwrap();
        let q = quantize_levels(&p, 1e-9).unwrap();
        for (a, b) in q.masses.iter().zip(&p.masses) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_mixture_is_recovered() {
        let channel = ChannelModel::awgn(0.1, 0.0, 1.0).unwrap();
        let grid = SupportGrid::new(0.0, 1.0, 0.125).unwrap();
        let truth: Vec<f64> = vec![0.0, 0.3, 0.0, 0.0, 0.25, 0.0, 0.0, 0.45, 0.0];
        let axis = UniformAxis::spanning(-0.6, 1.6, 512).unwrap();
        let f = DensityEstimate::tabulate(axis, |y| {
            grid.symbols().iter().zip(&truth).map(|(&a, p)| p * channel.pdf(a, y)).sum()
        })
        .unwrap();
        let sol = invert_channel(&f, &channel, &grid, 1e-9, &InversionOptions::default()).unwrap();
        assert!(sol.objective < 1e-7, "{}", sol.objective);
        for (a, b) in sol.raw.masses.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((sol.objective - sol.residuals.iter().sum::<f64>()).abs() < 1e-12);
        assert!(sol.gap <= 1e-7, "gap {} obj {}", sol.gap, sol.objective);
    }

    #[test]
    fn levy_examples() {
        let f = StepCdf::from_samples(&[0.0]);
        assert_eq!(levy_distance(&f, &f), 0.0);
        for t in [0.1, 0.37, 0.8] {
            let g = StepCdf::from_samples(&[t]);
            assert!((levy_distance(&f, &g) - t).abs() < 1e-6);
            assert!((levy_distance(&g, &f) - t).abs() < 1e-6);
        }
    }

    #[test]
    fn tuple_inversion_matches_product() {
        let channel = ChannelModel::awgn(0.15, 0.0, 1.0).unwrap();
        let grid = SupportGrid::new(0.0, 1.0, 0.5).unwrap();
        let p1 = [0.2, 0.5, 0.3];
        let axis = UniformAxis::spanning(-0.7, 1.7, 40).unwrap();
        let mix = |y: f64| -> f64 { grid.symbols().iter().zip(&p1).map(|(&a, p)| p * channel.pdf(a, y)).sum() };
        let f = DensityEstimate::tabulate_nd(vec![axis; 2], |y| mix(y[0]) * mix(y[1])).unwrap();
        let sol = invert_tuples(
            &f,
            &channel,
            &grid,
            1e-9,
            None,
            None,
            &PrimalDualOptions {
                relative_gap: 1e-7,
                max_iterations: 50_000,
                ..Default::default()
            },
        )
        .unwrap();
        let marginal = sol.pmf.marginal(0);
        for (a, b) in marginal.iter().zip(p1) {
            assert!((a - b).abs() < 1e-3, "{marginal:?}");
        }
    }
}
