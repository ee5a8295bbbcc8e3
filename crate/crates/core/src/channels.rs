//! Memoryless channel models.
//!
//! A channel is a family of conditional densities `f(y | x)` indexed by the
//! clean input `x` in a closed interval `[a, b]`. Besides density evaluation
//! and sampling, this module provides the continuity modulus `xi_delta` and
//! the reduction of a channel to an `M x M` transition matrix under a uniform
//! output quantizer.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::UniformAxis;

/// Smallest Rayleigh scale and multiplicative spread; keeps `x = 0` non-degenerate.
pub const SCALE_FLOOR: f64 = 1e-3;

/// Points on the input axis over which `xi_delta` maximizes.
pub const XI_INPUT_POINTS: usize = 256;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelKind {
    AdditiveGaussian { sigma: f64 },
    MultiplicativeGaussian { mean: f64, sigma: f64 },
    /// Rayleigh output with scale `B(x) = x * slope`.
    InputScaledRayleigh { slope: f64 },
    Custom(TabulatedChannel),
}

/// Conditional densities given as a table: one row per input symbol over a
/// shared observation grid. Inputs between two symbols use the linear
/// mixture of the neighbouring rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedChannel {
    symbols: Vec<f64>,
    observations: Vec<f64>,
    densities: Vec<Vec<f64>>,
    // cumulative trapezoid mass at each observation point, per row
    cumulative: Vec<Vec<f64>>,
}

/// A memoryless channel restricted to inputs in `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    kind: ChannelKind,
    lo: f64,
    hi: f64,
}

impl ChannelModel {
    pub fn new(kind: ChannelKind, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(format!("input range [{lo}, {hi}] is not a closed interval")));
        }
        match &kind {
            ChannelKind::AdditiveGaussian { sigma } => positive("sigma", *sigma)?,
            ChannelKind::MultiplicativeGaussian { mean, sigma } => {
                positive("sigma", *sigma)?;
                if !mean.is_finite() {
                    return Err(Error::invalid("mean must be finite"));
                }
            }
            ChannelKind::InputScaledRayleigh { slope } => positive("slope", *slope)?,
            ChannelKind::Custom(t) => {
                let (s0, s1) = (t.symbols[0], t.symbols[t.symbols.len() - 1]);
                if lo < s0 - 1e-12 || hi > s1 + 1e-12 {
                    return Err(Error::invalid(format!(
                        "input range [{lo}, {hi}] exceeds the tabulated symbols [{s0}, {s1}]"
                    )));
                }
            }
        }
        Ok(ChannelModel { kind, lo, hi })
    }

    pub fn awgn(sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(ChannelKind::AdditiveGaussian { sigma }, lo, hi)
    }

    pub fn multiplicative(mean: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(ChannelKind::MultiplicativeGaussian { mean, sigma }, lo, hi)
    }

    pub fn rayleigh(slope: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(ChannelKind::InputScaledRayleigh { slope }, lo, hi)
    }

    /// Parses `name:key=val,key=val` (see [`ChannelSpec`]) over `[lo, hi]`.
    pub fn from_spec(spec: &str, lo: f64, hi: f64) -> Result<Self> {
        let spec: ChannelSpec = spec.parse()?;
        spec.build(lo, hi)
    }

    pub fn kind(&self) -> &ChannelKind {
        &self.kind
    }

    pub fn input_range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn check(&self, x: f64) -> Result<()> {
        if x.is_nan() || x < self.lo || x > self.hi {
            Err(Error::Domain {
                value: x,
                lo: self.lo,
                hi: self.hi,
            })
        } else {
            Ok(())
        }
    }

    /// `f(y | x)`, validating that `x` lies in the input range.
    pub fn conditional_density(&self, x: f64, y: f64) -> Result<f64> {
        self.check(x)?;
        Ok(self.pdf(x, y))
    }

    /// `f(y | x)` without the range check.
    pub fn pdf(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            ChannelKind::AdditiveGaussian { sigma } => normal_pdf(y, x, *sigma),
            ChannelKind::MultiplicativeGaussian { mean, sigma } => {
                normal_pdf(y, x * mean, mult_spread(x, *sigma))
            }
            ChannelKind::InputScaledRayleigh { slope } => rayleigh_pdf(y, rayleigh_scale(x, *slope)),
            ChannelKind::Custom(t) => t.pdf(x, y),
        }
    }

    /// `ln f(y | x)`; `-inf` where the density vanishes.
    pub fn log_pdf(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            ChannelKind::AdditiveGaussian { sigma } => normal_log_pdf(y, x, *sigma),
            ChannelKind::MultiplicativeGaussian { mean, sigma } => {
                normal_log_pdf(y, x * mean, mult_spread(x, *sigma))
            }
            ChannelKind::InputScaledRayleigh { slope } => {
                let b = rayleigh_scale(x, *slope);
                if y <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    y.ln() - 2.0 * b.ln() - y * y / (2.0 * b * b)
                }
            }
            ChannelKind::Custom(t) => t.pdf(x, y).ln(),
        }
    }

    /// `P(Y <= y | x)`.
    pub fn cdf(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            ChannelKind::AdditiveGaussian { sigma } => normal_cdf((y - x) / sigma),
            ChannelKind::MultiplicativeGaussian { mean, sigma } => {
                normal_cdf((y - x * mean) / mult_spread(x, *sigma))
            }
            ChannelKind::InputScaledRayleigh { slope } => {
                if y <= 0.0 {
                    0.0
                } else {
                    let b = rayleigh_scale(x, *slope);
                    -(-(y * y) / (2.0 * b * b)).exp_m1()
                }
            }
            ChannelKind::Custom(t) => t.cdf(x, y),
        }
    }

    /// One draw from `F(. | x)`.
    pub fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64> {
        self.check(x)?;
        Ok(self.sample_unchecked(x, rng))
    }

    pub(crate) fn sample_unchecked<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        match &self.kind {
            ChannelKind::AdditiveGaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                x + sigma * z
            }
            ChannelKind::MultiplicativeGaussian { mean, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                x * mean + mult_spread(x, *sigma) * z
            }
            ChannelKind::InputScaledRayleigh { slope } => {
                let b = rayleigh_scale(x, *slope);
                // inverse CDF; 1 - u avoids ln(0)
                let u: f64 = rng.random();
                b * (-2.0 * (1.0 - u).ln()).sqrt()
            }
            ChannelKind::Custom(t) => t.sample(x, rng),
        }
    }

    /// Conditional standard deviation at input `x`.
    pub fn spread(&self, x: f64) -> f64 {
        match &self.kind {
            ChannelKind::AdditiveGaussian { sigma } => *sigma,
            ChannelKind::MultiplicativeGaussian { sigma, .. } => mult_spread(x, *sigma),
            ChannelKind::InputScaledRayleigh { slope } => {
                rayleigh_scale(x, *slope) * ((4.0 - PI) / 2.0).sqrt()
            }
            ChannelKind::Custom(t) => t.spread(x),
        }
    }

    /// Largest conditional standard deviation over the input range.
    pub fn max_spread(&self) -> f64 {
        match &self.kind {
            ChannelKind::AdditiveGaussian { sigma } => *sigma,
            ChannelKind::Custom(t) => t
                .symbols
                .iter()
                .filter(|s| **s >= self.lo && **s <= self.hi)
                .map(|s| t.spread(*s))
                .fold(t.spread(self.lo).max(t.spread(self.hi)), f64::max),
            _ => self.spread(self.lo).max(self.spread(self.hi)),
        }
    }

    /// Interval carrying all but a negligible part of `F(. | x)`.
    pub fn conditional_support(&self, x: f64) -> (f64, f64) {
        match &self.kind {
            ChannelKind::AdditiveGaussian { sigma } => (x - 8.0 * sigma, x + 8.0 * sigma),
            ChannelKind::MultiplicativeGaussian { mean, sigma } => {
                let s = mult_spread(x, *sigma);
                (x * mean - 8.0 * s, x * mean + 8.0 * s)
            }
            ChannelKind::InputScaledRayleigh { slope } => (0.0, 7.0 * rayleigh_scale(x, *slope)),
            ChannelKind::Custom(t) => (t.observations[0], t.observations[t.observations.len() - 1]),
        }
    }

    /// Effective output range for inputs in `[a, b]`: six conditional
    /// standard deviations beyond the extreme conditional means, clipped to
    /// the support of the family.
    pub fn output_range(&self) -> (f64, f64) {
        let s = self.max_spread();
        match &self.kind {
            ChannelKind::AdditiveGaussian { .. } => (self.lo - 6.0 * s, self.hi + 6.0 * s),
            ChannelKind::MultiplicativeGaussian { mean, .. } => {
                let (m0, m1) = (self.lo * mean, self.hi * mean);
                (m0.min(m1) - 6.0 * s, m0.max(m1) + 6.0 * s)
            }
            ChannelKind::InputScaledRayleigh { slope } => {
                let b = rayleigh_scale(self.lo.abs().max(self.hi.abs()), *slope);
                (0.0, b * (PI / 2.0).sqrt() + 6.0 * s)
            }
            ChannelKind::Custom(t) => (t.observations[0], t.observations[t.observations.len() - 1]),
        }
    }

    /// Uniform quadrature grid over [`Self::output_range`].
    pub fn quadrature_grid(&self, count: usize) -> Result<UniformAxis> {
        let (lo, hi) = self.output_range();
        UniformAxis::spanning(lo, hi, count)
    }

    /// Continuity modulus: the largest L1 distance between conditional
    /// densities of inputs at most `delta` apart.
    ///
    /// The outer supremum runs over [`XI_INPUT_POINTS`] equally spaced inputs;
    /// partners are the other grid inputs within `delta` together with the
    /// two points exactly `delta` away (clamped to the range).
    pub fn xi_delta(&self, delta: f64, quadrature: &UniformAxis) -> Result<f64> {
        if quadrature.count < 2 {
            return Err(Error::Config("quadrature grid for xi_delta is empty".into()));
        }
        if !(delta >= 0.0) {
            return Err(Error::invalid(format!("delta must be non-negative, got {delta}")));
        }
        if delta > self.hi - self.lo + 1e-12 {
            return Err(Error::invalid(format!(
                "delta {delta} exceeds the input range width {}",
                self.hi - self.lo
            )));
        }
        if delta == 0.0 || self.hi == self.lo {
            return Ok(0.0);
        }
        let xs = if self.hi > self.lo {
            UniformAxis::spanning(self.lo, self.hi, XI_INPUT_POINTS)?.points()
        } else {
            vec![self.lo]
        };
        let ys = quadrature.points();
        let table: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| ys.iter().map(|&y| self.pdf(x, y)).collect())
            .collect();
        let l1 = |u: &[f64], v: &[f64]| -> f64 {
            u.iter()
                .zip(v)
                .enumerate()
                .map(|(i, (p, q))| (p - q).abs() * quadrature.weight(i))
                .sum()
        };
        let mut best = 0.0_f64;
        for (i, &x) in xs.iter().enumerate() {
            for j in (i + 1)..xs.len() {
                if xs[j] - x > delta + 1e-12 {
                    break;
                }
                best = best.max(l1(&table[i], &table[j]));
            }
            for partner in [x - delta, x + delta] {
                let p = partner.clamp(self.lo, self.hi);
                if p == x {
                    continue;
                }
                let row: Vec<f64> = ys.iter().map(|&y| self.pdf(p, y)).collect();
                best = best.max(l1(&table[i], &row));
            }
        }
        Ok(best)
    }

    /// Transition matrix between input symbols and quantized output levels.
    /// Entry `(i, j)` is the probability that `quantizer` maps the output to
    /// level `j` given input `symbols[i]`; the two end levels absorb the tails.
    pub fn discretize(&self, symbols: &[f64], quantizer: &OutputQuantizer) -> Result<ChannelMatrix> {
        let m = symbols.len();
        if m < 2 {
            return Err(Error::invalid("a channel matrix needs at least two input symbols"));
        }
        if quantizer.levels != m {
            return Err(Error::invalid(format!(
                "quantizer has {} levels but the input alphabet has {m} symbols",
                quantizer.levels
            )));
        }
        for &s in symbols {
            self.check(s)?;
        }
        let mut entries = vec![0.0; m * m];
        for (i, &x) in symbols.iter().enumerate() {
            let mut prev = 0.0;
            for j in 0..m {
                let upper = if j + 1 == m { 1.0 } else { self.cdf(x, quantizer.boundary(j)) };
                entries[i * m + j] = (upper - prev).max(0.0);
                prev = upper;
            }
        }
        Ok(ChannelMatrix {
            m,
            entries,
            alpha: quantizer.alpha,
        })
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

#[inline]
fn rayleigh_scale(x: f64, slope: f64) -> f64 {
    (x * slope).max(SCALE_FLOOR)
}

#[inline]
fn mult_spread(x: f64, sigma: f64) -> f64 {
    (x.abs() * sigma).max(SCALE_FLOOR)
}

#[inline]
pub(crate) fn normal_pdf(y: f64, mean: f64, sd: f64) -> f64 {
    let z = (y - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

#[inline]
fn normal_log_pdf(y: f64, mean: f64, sd: f64) -> f64 {
    let z = (y - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

#[inline]
fn rayleigh_pdf(y: f64, b: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        y / (b * b) * (-(y * y) / (2.0 * b * b)).exp()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

impl TabulatedChannel {
    /// Rows are renormalized to unit trapezoid mass on the observation grid.
    pub fn new(symbols: Vec<f64>, observations: Vec<f64>, densities: Vec<Vec<f64>>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Empty("custom channel has no input symbols"));
        }
        if observations.len() < 2 {
            return Err(Error::Config("custom channel needs at least two observation points".into()));
        }
        if symbols.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parse("custom channel symbols must be strictly increasing".into()));
        }
        if observations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parse("observation grid must be strictly increasing".into()));
        }
        if densities.len() != symbols.len() {
            return Err(Error::LengthMismatch {
                expected: symbols.len(),
                actual: densities.len(),
            });
        }
        let mut normalized = Vec::with_capacity(densities.len());
        let mut cumulative = Vec::with_capacity(densities.len());
        for row in densities {
            if row.len() != observations.len() {
                return Err(Error::LengthMismatch {
                    expected: observations.len(),
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Parse("densities must be finite and non-negative".into()));
            }
            let cum = cumulative_trapezoid(&observations, &row);
            let total = *cum.last().unwrap();
            if !(total > 0.0) {
                return Err(Error::Parse("a custom channel row has zero mass".into()));
            }
            normalized.push(row.iter().map(|v| v / total).collect::<Vec<_>>());
            cumulative.push(cum.iter().map(|v| v / total).collect());
        }
        Ok(TabulatedChannel {
            symbols,
            observations,
            densities: normalized,
            cumulative,
        })
    }

    /// Reads the CSV layout: a header row whose first cell is a label and
    /// whose remaining cells are observation points, then one row per input
    /// symbol holding the symbol followed by its density values.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut records = reader.records();
        let header = records
            .next()
            .ok_or(Error::Empty("custom channel table"))??;
        let observations = header
            .iter()
            .skip(1)
            .map(parse_f64)
            .collect::<Result<Vec<_>>>()?;
        let mut symbols = Vec::new();
        let mut densities = Vec::new();
        for rec in records {
            let rec = rec?;
            let mut cells = rec.iter();
            let sym = parse_f64(cells.next().ok_or(Error::Empty("custom channel row"))?)?;
            symbols.push(sym);
            densities.push(cells.map(parse_f64).collect::<Result<Vec<_>>>()?);
        }
        Self::new(symbols, observations, densities)
    }

    pub fn symbols(&self) -> &[f64] {
        &self.symbols
    }

    /// Neighbouring rows and the weight of the upper one.
    fn bracket(&self, x: f64) -> (usize, usize, f64) {
        let n = self.symbols.len();
        if x <= self.symbols[0] || n == 1 {
            return (0, 0, 0.0);
        }
        if x >= self.symbols[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let hi = self.symbols.partition_point(|s| *s <= x);
        let lo = hi - 1;
        let t = (x - self.symbols[lo]) / (self.symbols[hi] - self.symbols[lo]);
        (lo, hi, t)
    }

    fn row_pdf(&self, row: usize, y: f64) -> f64 {
        let obs = &self.observations;
        if y < obs[0] || y > obs[obs.len() - 1] {
            return 0.0;
        }
        let k = obs.partition_point(|o| *o <= y).clamp(1, obs.len() - 1);
        let (y0, y1) = (obs[k - 1], obs[k]);
        let (f0, f1) = (self.densities[row][k - 1], self.densities[row][k]);
        f0 + (f1 - f0) * (y - y0) / (y1 - y0)
    }

    fn row_cdf(&self, row: usize, y: f64) -> f64 {
        let obs = &self.observations;
        if y <= obs[0] {
            return 0.0;
        }
        if y >= obs[obs.len() - 1] {
            return 1.0;
        }
        let k = obs.partition_point(|o| *o <= y).clamp(1, obs.len() - 1);
        let y0 = obs[k - 1];
        let f0 = self.densities[row][k - 1];
        let fy = self.row_pdf(row, y);
        self.cumulative[row][k - 1] + 0.5 * (f0 + fy) * (y - y0)
    }

    fn pdf(&self, x: f64, y: f64) -> f64 {
        let (lo, hi, t) = self.bracket(x);
        (1.0 - t) * self.row_pdf(lo, y) + t * self.row_pdf(hi, y)
    }

    fn cdf(&self, x: f64, y: f64) -> f64 {
        let (lo, hi, t) = self.bracket(x);
        (1.0 - t) * self.row_cdf(lo, y) + t * self.row_cdf(hi, y)
    }

    fn row_moments(&self, row: usize) -> (f64, f64) {
        let obs = &self.observations;
        let f = &self.densities[row];
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 1..obs.len() {
            let w = 0.5 * (obs[k] - obs[k - 1]);
            m1 += w * (f[k - 1] * obs[k - 1] + f[k] * obs[k]);
            m2 += w * (f[k - 1] * obs[k - 1] * obs[k - 1] + f[k] * obs[k] * obs[k]);
        }
        (m1, m2)
    }

    fn spread(&self, x: f64) -> f64 {
        let (lo, hi, t) = self.bracket(x);
        let (a1, a2) = self.row_moments(lo);
        let (b1, b2) = self.row_moments(hi);
        let m1 = (1.0 - t) * a1 + t * b1;
        let m2 = (1.0 - t) * a2 + t * b2;
        (m2 - m1 * m1).max(0.0).sqrt()
    }

    fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let (lo, hi, t) = self.bracket(x);
        let row = if rng.random::<f64>() < t { hi } else { lo };
        let u: f64 = rng.random();
        let cum = &self.cumulative[row];
        let k = cum.partition_point(|c| *c < u).clamp(1, cum.len() - 1);
        let obs = &self.observations;
        let (y0, y1) = (obs[k - 1], obs[k]);
        let (f0, f1) = (self.densities[row][k - 1], self.densities[row][k]);
        let target = (u - cum[k - 1]).max(0.0);
        let w = y1 - y0;
        let slope = (f1 - f0) / w;
        // mass on [y0, y0 + s] is f0*s + slope*s^2/2
        let s = if slope.abs() < 1e-14 {
            if f0 > 0.0 {
                target / f0
            } else {
                0.5 * w
            }
        } else {
            let disc = (f0 * f0 + 2.0 * slope * target).max(0.0);
            (disc.sqrt() - f0) / slope
        };
        y0 + s.clamp(0.0, w)
    }
}

fn cumulative_trapezoid(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..xs.len() {
        acc += 0.5 * (fs[k] + fs[k - 1]) * (xs[k] - xs[k - 1]);
        out.push(acc);
    }
    out
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("expected a number, found {s:?}")))
}

/// Parsed form of the `name:key=val,key=val` channel mini-grammar.
///
/// Recognized names: `awgn` (`sigma`), `mult` / `multiplicative`
/// (`mean`, default 1, and `sigma`), `rayleigh` (`slope`, default 35/256) and
/// `custom` (`path` to a CSV table).
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    Awgn { sigma: f64 },
    Multiplicative { mean: f64, sigma: f64 },
    Rayleigh { slope: f64 },
    Custom { path: String },
}

impl ChannelSpec {
    pub fn build(&self, lo: f64, hi: f64) -> Result<ChannelModel> {
        let kind = match self {
            ChannelSpec::Awgn { sigma } => ChannelKind::AdditiveGaussian { sigma: *sigma },
            ChannelSpec::Multiplicative { mean, sigma } => ChannelKind::MultiplicativeGaussian {
                mean: *mean,
                sigma: *sigma,
            },
            ChannelSpec::Rayleigh { slope } => ChannelKind::InputScaledRayleigh { slope: *slope },
            ChannelSpec::Custom { path } => ChannelKind::Custom(TabulatedChannel::from_csv(Path::new(path))?),
        };
        ChannelModel::new(kind, lo, hi)
    }
}

impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params: Vec<(&str, &str)> = Vec::new();
        for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("channel parameter {part:?} is not key=value")))?;
            params.push((k.trim(), v.trim()));
        }
        let get = |key: &str| -> Result<Option<f64>> {
            params
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| parse_f64(v))
                .transpose()
        };
        let allow = |keys: &[&str]| -> Result<()> {
            match params.iter().find(|(k, _)| !keys.contains(k)) {
                Some((k, _)) => Err(Error::Parse(format!("unknown parameter {k:?} for channel {name:?}"))),
                None => Ok(()),
            }
        };
        let required = |key: &str| -> Result<f64> {
            get(key)?.ok_or_else(|| Error::Parse(format!("channel {name:?} requires {key}=...")))
        };
        match name.trim() {
            "awgn" | "gaussian" => {
                allow(&["sigma"])?;
                Ok(ChannelSpec::Awgn { sigma: required("sigma")? })
            }
            "mult" | "multiplicative" => {
                allow(&["mean", "sigma"])?;
                Ok(ChannelSpec::Multiplicative {
                    mean: get("mean")?.unwrap_or(1.0),
                    sigma: required("sigma")?,
                })
            }
            "rayleigh" => {
                allow(&["slope"])?;
                Ok(ChannelSpec::Rayleigh {
                    slope: get("slope")?.unwrap_or(35.0 / 256.0),
                })
            }
            "custom" => {
                allow(&["path"])?;
                let path = params
                    .iter()
                    .find(|(k, _)| *k == "path")
                    .map(|(_, v)| v.to_string())
                    .ok_or_else(|| Error::Parse("channel \"custom\" requires path=...".into()))?;
                Ok(ChannelSpec::Custom { path })
            }
            other => Err(Error::Parse(format!("unknown channel {other:?}"))),
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelSpec::Awgn { sigma } => write!(f, "awgn:sigma={sigma}"),
            ChannelSpec::Multiplicative { mean, sigma } => write!(f, "mult:mean={mean},sigma={sigma}"),
            ChannelSpec::Rayleigh { slope } => write!(f, "rayleigh:slope={slope}"),
            ChannelSpec::Custom { path } => write!(f, "custom:path={path}"),
        }
    }
}

/// Uniform output quantizer with `levels` cells: interior cells of width
/// `alpha`, the two end cells unbounded. A value on a boundary belongs to the
/// upper cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputQuantizer {
    pub first_boundary: f64,
    pub alpha: f64,
    pub levels: usize,
}

impl OutputQuantizer {
    pub fn new(first_boundary: f64, alpha: f64, levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::invalid(format!("quantizer needs at least 2 levels, got {levels}")));
        }
        positive("alpha", alpha)?;
        Ok(OutputQuantizer {
            first_boundary,
            alpha,
            levels,
        })
    }

    /// Cells centred on the symbols `origin + i * alpha`, `i < levels`.
    pub fn centered(origin: f64, alpha: f64, levels: usize) -> Result<Self> {
        Self::new(origin + 0.5 * alpha, alpha, levels)
    }

    /// Lower edge of cell `j + 1`.
    #[inline]
    pub fn boundary(&self, j: usize) -> f64 {
        self.first_boundary + j as f64 * self.alpha
    }

    pub fn level(&self, y: f64) -> usize {
        let guess = ((y - self.first_boundary) / self.alpha).floor() + 1.0;
        let mut lvl = if guess.is_nan() || guess <= 0.0 {
            0
        } else {
            (guess as usize).min(self.levels - 1)
        };
        // settle rounding against the exact boundary values
        while lvl > 0 && y < self.boundary(lvl - 1) {
            lvl -= 1;
        }
        while lvl + 1 < self.levels && y >= self.boundary(lvl) {
            lvl += 1;
        }
        lvl
    }
}

/// Row-stochastic `M x M` transition matrix of a quantized channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    m: usize,
    entries: Vec<f64>,
    alpha: f64,
}

impl ChannelMatrix {
    /// Builds a matrix from row-major entries; rows must be distributions.
    pub fn from_rows(m: usize, entries: Vec<f64>, alpha: f64) -> Result<Self> {
        if entries.len() != m * m {
            return Err(Error::LengthMismatch {
                expected: m * m,
                actual: entries.len(),
            });
        }
        if entries.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::invalid("channel matrix entries must lie in [0, 1]"));
        }
        for i in 0..m {
            let s: f64 = entries[i * m..(i + 1) * m].iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("row {i} of the channel matrix sums to {s}")));
            }
        }
        Ok(ChannelMatrix { m, entries, alpha })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting, together
    /// with the 1-norm condition number.
    pub fn inverse(&self) -> Result<(Vec<f64>, f64)> {
        let m = self.m;
        let mut a = self.entries.clone();
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let pivot = (col..m)
                .max_by(|&r, &s| a[r * m + col].abs().total_cmp(&a[s * m + col].abs()))
                .unwrap();
            if a[pivot * m + col].abs() < 1e-300 {
                return Err(Error::SingularMatrix {
                    condition: f64::INFINITY,
                });
            }
            if pivot != col {
                for c in 0..m {
                    a.swap(pivot * m + c, col * m + c);
                    inv.swap(pivot * m + c, col * m + c);
                }
            }
            let p = a[col * m + col];
            for c in 0..m {
                a[col * m + c] /= p;
                inv[col * m + c] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r * m + col];
                if f == 0.0 {
                    continue;
                }
                for c in 0..m {
                    a[r * m + c] -= f * a[col * m + c];
                    inv[r * m + c] -= f * inv[col * m + c];
                }
            }
        }
        let norm1 = |v: &[f64]| -> f64 {
            (0..m)
                .map(|c| (0..m).map(|r| v[r * m + c].abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let condition = norm1(&self.entries) * norm1(&inv);
        Ok((inv, condition))
    }
}
