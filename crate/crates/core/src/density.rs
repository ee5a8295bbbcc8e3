//! Density estimation of the noisy marginal.
//!
//! Kernel estimates `f(y) = 1/(n h^d) sum_i K((y - Y_i)/h)` with product
//! kernels, cubic histogram estimates, bandwidth rules, and the L1 distance
//! between two estimates tabulated on the same grid.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::context::partition_subsequences;
use crate::error::{Error, Result};
use crate::grid::UniformAxis;

/// Default evaluation points per axis for one-dimensional estimates.
pub const DEFAULT_GRID_1D: usize = 512;
/// Default evaluation points per axis for three-dimensional estimates.
pub const DEFAULT_GRID_3D: usize = 64;
/// Kernel windows are cut this many bandwidths from the centre.
pub const KERNEL_CUTOFF: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Gaussian,
    Epanechnikov,
    /// Uniform on `[-1/2, 1/2]`.
    Box,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "box" => Ok(KernelKind::Box),
            other => Err(Error::Parse(format!("unknown kernel {other:?}"))),
        }
    }
}

/// Product kernel over `dim` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kind: KernelKind,
    pub dim: usize,
}

impl Kernel {
    pub fn new(kind: KernelKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("kernel dimension must be positive"));
        }
        Ok(Kernel { kind, dim })
    }

    pub fn gaussian(dim: usize) -> Self {
        Kernel {
            kind: KernelKind::Gaussian,
            dim,
        }
    }

    /// One-dimensional factor.
    #[inline]
    pub fn eval_1d(&self, u: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
            KernelKind::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelKind::Box => {
                // half height at the jump keeps the kernel symmetric and
                // trapezoid sums exact
                let a = u.abs();
                if a < 0.5 {
                    1.0
                } else if a == 0.5 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// Mass of the 1-D factor below `u`.
    pub fn cdf_1d(&self, u: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => crate::channels::normal_cdf(u),
            KernelKind::Epanechnikov => {
                let t = u.clamp(-1.0, 1.0);
                0.5 + 0.75 * (t - t * t * t / 3.0)
            }
            KernelKind::Box => (u + 0.5).clamp(0.0, 1.0),
        }
    }

    /// Value used at a grid point `u` for cells `s` bandwidths wide. Compact
    /// kernels are averaged over the cell so grid sums keep unit mass; the
    /// Gaussian is sampled at `u`.
    #[inline]
    pub fn grid_value(&self, u: f64, s: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => self.eval_1d(u),
            _ if s > 0.0 => (self.cdf_1d(u + 0.5 * s) - self.cdf_1d(u - 0.5 * s)) / s,
            _ => self.eval_1d(u),
        }
    }

    /// Reach (in bandwidths) of [`Self::grid_value`] for cells `s` wide.
    fn grid_reach(&self, s: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => 10.0,
            _ => self.radius() + 0.5 * s,
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        u.iter().map(|&v| self.eval_1d(v)).product()
    }

    /// Radius (in bandwidths) outside which the 1-D factor is negligible or zero.
    pub fn radius(&self) -> f64 {
        match self.kind {
            KernelKind::Gaussian => KERNEL_CUTOFF,
            KernelKind::Epanechnikov => 1.0,
            KernelKind::Box => 0.5,
        }
    }
}

/// How [`DensityEstimate::integral`] and L1 distances weight grid values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// Composite trapezoid over grid points.
    Trapezoid,
    /// Grid points are cell centres; each carries one full cell.
    Midpoint,
}

/// A density tabulated on a product of uniform axes (row-major, last axis
/// fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    axes: Vec<UniformAxis>,
    values: Vec<f64>,
    bandwidth: f64,
    samples: usize,
    quadrature: Quadrature,
}

impl DensityEstimate {
    pub fn from_values(
        axes: Vec<UniformAxis>,
        values: Vec<f64>,
        bandwidth: f64,
        samples: usize,
        quadrature: Quadrature,
    ) -> Result<Self> {
        let expected: usize = axes.iter().map(|a| a.count).product();
        if axes.is_empty() {
            return Err(Error::invalid("a density needs at least one axis"));
        }
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("density values must be finite and non-negative"));
        }
        Ok(DensityEstimate {
            axes,
            values,
            bandwidth,
            samples,
            quadrature,
        })
    }

    /// Tabulates `f` on a one-dimensional axis.
    pub fn tabulate(axis: UniformAxis, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = axis.points().into_iter().map(f).collect();
        Self::from_values(vec![axis], values, 0.0, 0, Quadrature::Trapezoid)
    }

    /// Tabulates a function of a point on a product grid.
    pub fn tabulate_nd(axes: Vec<UniformAxis>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let total: usize = axes.iter().map(|a| a.count).product();
        let mut point = vec![0.0; axes.len()];
        let mut values = Vec::with_capacity(total);
        for flat in 0..total {
            unflatten(&axes, flat, |d, i| point[d] = axes[d].point(i));
            values.push(f(&point));
        }
        Self::from_values(axes, values, 0.0, 0, Quadrature::Trapezoid)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[UniformAxis] {
        &self.axes
    }

    pub fn axis(&self) -> &UniformAxis {
        &self.axes[0]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample_count(&self) -> usize {
        self.samples
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    /// Quadrature weight of the flat grid index.
    pub fn weight(&self, flat: usize) -> f64 {
        match self.quadrature {
            Quadrature::Midpoint => self.axes.iter().map(|a| a.step).product(),
            Quadrature::Trapezoid => {
                let mut w = 1.0;
                unflatten(&self.axes, flat, |d, i| w *= self.axes[d].weight(i));
                w
            }
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.weight(i)).collect()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().enumerate().map(|(i, v)| v * self.weight(i)).sum()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Multilinear interpolation; zero outside the grid.
    pub fn value_at(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dim());
        let mut corners: Vec<(usize, f64)> = vec![(0, 1.0)];
        let mut stride = self.values.len();
        for (d, axis) in self.axes.iter().enumerate() {
            stride /= axis.count;
            let t = (y[d] - axis.origin) / axis.step;
            if t < 0.0 || t > (axis.count - 1) as f64 {
                return 0.0;
            }
            let i0 = (t.floor() as usize).min(axis.count.saturating_sub(2));
            let frac = if axis.count == 1 { 0.0 } else { t - i0 as f64 };
            let mut next = Vec::with_capacity(corners.len() * 2);
            for &(base, w) in &corners {
                next.push((base + i0 * stride, w * (1.0 - frac)));
                if axis.count > 1 {
                    next.push((base + (i0 + 1) * stride, w * frac));
                }
            }
            corners = next;
        }
        corners.iter().map(|&(i, w)| w * self.values[i]).sum()
    }

    /// One row per grid point: coordinates then value, preceded by a
    /// `#` metadata line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        let q = match self.quadrature {
            Quadrature::Trapezoid => "trapezoid",
            Quadrature::Midpoint => "midpoint",
        };
        let wrap = |e| Error::io("<density csv>", e);
        writeln!(out, "# bandwidth={} samples={} quadrature={q}", self.bandwidth, self.samples).map_err(wrap)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|d| format!("y{d}")).collect();
        header.push("density".into());
        w.write_record(&header)?;
        let mut row = vec![String::new(); self.dim() + 1];
        for (flat, v) in self.values.iter().enumerate() {
            unflatten(&self.axes, flat, |d, i| row[d] = format!("{}", self.axes[d].point(i)));
            row[self.dim()] = format!("{v}");
            w.write_record(&row)?;
        }
        w.flush().map_err(wrap)?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }

    /// Inverse of [`Self::write_csv`]; the metadata line is optional.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut bandwidth = 0.0;
        let mut samples = 0;
        let mut quadrature = Quadrature::Trapezoid;
        let mut first = String::new();
        reader.read_line(&mut first).map_err(|e| Error::io("<density csv>", e))?;
        let mut body = String::new();
        if let Some(meta) = first.trim().strip_prefix('#') {
            for kv in meta.split_whitespace() {
                match kv.split_once('=') {
                    Some(("bandwidth", v)) => bandwidth = v.parse().unwrap_or(0.0),
                    Some(("samples", v)) => samples = v.parse().unwrap_or(0),
                    Some(("quadrature", "midpoint")) => quadrature = Quadrature::Midpoint,
                    _ => {}
                }
            }
        } else {
            body.push_str(&first);
        }
        std::io::Read::read_to_string(&mut reader, &mut body).map_err(|e| Error::io("<density csv>", e))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
        let cols = rdr.headers()?.len();
        if cols < 2 {
            return Err(Error::Parse("density CSV needs coordinate and value columns".into()));
        }
        let dim = cols - 1;
        let mut coords: Vec<Vec<f64>> = vec![Vec::new(); dim];
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            for d in 0..dim {
                coords[d].push(parse(&rec[d])?);
            }
            values.push(parse(&rec[dim])?);
        }
        if values.is_empty() {
            return Err(Error::Empty("density CSV has no rows"));
        }
        let mut axes = Vec::with_capacity(dim);
        for c in &coords {
            let mut u = c.clone();
            u.sort_by(f64::total_cmp);
            u.dedup();
            let axis = if u.len() == 1 {
                UniformAxis::new(u[0], 1.0, 1)?
            } else {
                let axis = UniformAxis::spanning(u[0], u[u.len() - 1], u.len())?;
                let tol = 1e-6 * axis.step;
                if u.iter().enumerate().any(|(i, v)| (v - axis.point(i)).abs() > tol) {
                    return Err(Error::Parse("density CSV coordinates are not a uniform grid".into()));
                }
                axis
            };
            axes.push(axis);
        }
        let expected: usize = axes.iter().map(|a| a.count).product();
        if expected != values.len() {
            return Err(Error::Parse(format!(
                "density CSV has {} rows but its axes imply {expected}",
                values.len()
            )));
        }
        // reorder into row-major layout regardless of row order in the file
        let mut ordered = vec![0.0; expected];
        for (r, v) in values.iter().enumerate() {
            let mut flat = 0;
            for (d, axis) in axes.iter().enumerate() {
                let i = ((coords[d][r] - axis.origin) / axis.step).round() as usize;
                flat = flat * axis.count + i.min(axis.count - 1);
            }
            ordered[flat] = *v;
        }
        Self::from_values(axes, ordered, bandwidth, samples, quadrature)
    }
}

fn parse(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse(format!("expected a number, found {s:?}")))
}

/// Calls `f(axis, index)` for each coordinate of the flat index.
#[inline]
pub(crate) fn unflatten(axes: &[UniformAxis], mut flat: usize, mut f: impl FnMut(usize, usize)) {
    for d in (0..axes.len()).rev() {
        let c = axes[d].count;
        f(d, flat % c);
        flat /= c;
    }
}

/// Result of a bandwidth rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bandwidth {
    pub h: f64,
    /// Set when the samples had no spread and the fallback width was used.
    pub fell_back: bool,
}

/// Silverman's rule `1.06 * sigma * n^(-1/(4+d))`, with `sigma` the average
/// per-axis sample standard deviation. Identical samples fall back to
/// `range_width / 100`.
pub fn silverman_bandwidth(samples: &[f64], dim: usize, range_width: f64) -> Result<Bandwidth> {
    check_samples(samples, dim)?;
    let n = samples.len() / dim;
    if n < 2 {
        return Err(Error::invalid("Silverman's rule needs at least 2 samples"));
    }
    let mut sigma = 0.0;
    for d in 0..dim {
        let col = samples.iter().skip(d).step_by(dim);
        let mean = col.clone().sum::<f64>() / n as f64;
        let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        sigma += var.sqrt();
    }
    sigma /= dim as f64;
    if !(sigma > 0.0) {
        log::warn!("samples have zero spread; bandwidth falls back to range/100");
        return Ok(Bandwidth {
            h: range_width / 100.0,
            fell_back: true,
        });
    }
    Ok(Bandwidth {
        h: 1.06 * sigma * (n as f64).powf(-1.0 / (4.0 + dim as f64)),
        fell_back: false,
    })
}

fn check_samples(samples: &[f64], dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if samples.is_empty() {
        return Err(Error::Empty("no samples"));
    }
    if !samples.len().is_multiple_of(dim) {
        return Err(Error::invalid(format!(
            "{} sample coordinates do not split into {dim}-vectors",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    Ok(())
}

/// Evaluation strategy for [`kde`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KdeMethod {
    /// Exact kernel sums (Gaussian tails beyond 10 bandwidths dropped).
    Direct,
    /// Linear binning onto the grid followed by a truncated convolution.
    Binned,
    /// Binned when the direct cost would be large.
    #[default]
    Auto,
}

/// Per-axis grid covering the samples plus `KERNEL_CUTOFF * h` on each side.
pub fn covering_grid(samples: &[f64], dim: usize, h: f64, count: usize) -> Result<Vec<UniformAxis>> {
    check_samples(samples, dim)?;
    (0..dim)
        .map(|d| {
            let (lo, hi) = samples
                .iter()
                .skip(d)
                .step_by(dim)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
            UniformAxis::spanning(lo - KERNEL_CUTOFF * h, hi + KERNEL_CUTOFF * h, count)
        })
        .collect()
}

/// Kernel density estimate of `dim`-vectors (stored contiguously) on the
/// product grid `axes`.
pub fn kde(
    samples: &[f64],
    kernel: &Kernel,
    h: f64,
    axes: &[UniformAxis],
    method: KdeMethod,
) -> Result<DensityEstimate> {
    let dim = kernel.dim;
    check_samples(samples, dim)?;
    if axes.len() != dim {
        return Err(Error::invalid(format!(
            "kernel has dimension {dim} but the grid has {} axes",
            axes.len()
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    for chunk in samples.chunks(dim) {
        for (d, &v) in chunk.iter().enumerate() {
            if !axes[d].contains(v) {
                return Err(Error::GridCoverage {
                    value: v,
                    lo: axes[d].origin,
                    hi: axes[d].last(),
                });
            }
        }
    }
    let n = samples.len() / dim;
    let total: usize = axes.iter().map(|a| a.count).product();
    let use_binned = match method {
        KdeMethod::Direct => false,
        KdeMethod::Binned => true,
        KdeMethod::Auto => n > 2_000 && (dim > 1 || n.saturating_mul(total) > 20_000_000),
    };
    let values = if use_binned {
        binned_kde(samples, kernel, h, axes)
    } else if dim == 1 {
        direct_kde_1d(samples, kernel, h, &axes[0])
    } else {
        direct_kde_nd(samples, kernel, h, axes)
    };
    debug_assert_eq!(values.len(), total);
    DensityEstimate::from_values(axes.to_vec(), values, h, n, Quadrature::Trapezoid)
}

fn direct_kde_1d(samples: &[f64], kernel: &Kernel, h: f64, axis: &UniformAxis) -> Vec<f64> {
    let n = samples.len() as f64;
    let s = cell_width(axis, h);
    let cut = kernel.grid_reach(s);
    (0..axis.count)
        .into_par_iter()
        .map(|i| {
            let y = axis.point(i);
            let s: f64 = samples
                .iter()
                .map(|&v| {
                    let u = (y - v) / h;
                    if u.abs() > cut {
                        0.0
                    } else {
                        kernel.grid_value(u, s)
                    }
                })
                .sum();
            s / (n * h)
        })
        .collect()
}

fn cell_width(axis: &UniformAxis, h: f64) -> f64 {
    if axis.count > 1 {
        axis.step / h
    } else {
        0.0
    }
}

/// Per-axis kernel windows of one sample: (first grid index, factors).
fn sample_windows(point: &[f64], kernel: &Kernel, h: f64, axes: &[UniformAxis]) -> Vec<(usize, Vec<f64>)> {
    point
        .iter()
        .zip(axes)
        .map(|(&v, axis)| {
            let s = cell_width(axis, h);
            let cut = kernel.grid_reach(s);
            let lo = ((v - cut * h - axis.origin) / axis.step).ceil().max(0.0) as usize;
            let hi = (((v + cut * h - axis.origin) / axis.step).floor().max(-1.0) as isize)
                .min(axis.count as isize - 1);
            let factors: Vec<f64> = if hi < lo as isize {
                Vec::new()
            } else {
                (lo..=hi as usize)
                    .map(|i| kernel.grid_value((axis.point(i) - v) / h, s) / h)
                    .collect()
            };
            (lo, factors)
        })
        .collect()
}

const KDE_BLOCKS: usize = 8;

fn direct_kde_nd(samples: &[f64], kernel: &Kernel, h: f64, axes: &[UniformAxis]) -> Vec<f64> {
    let dim = kernel.dim;
    let n = (samples.len() / dim) as f64;
    let total: usize = axes.iter().map(|a| a.count).product();
    // a fixed block count keeps the summation order independent of the pool
    let points = samples.len() / dim;
    let per_block = points.div_ceil(KDE_BLOCKS).max(1);
    let partials: Vec<Vec<f64>> = samples
        .par_chunks(dim * per_block)
        .map(|block| {
            let mut acc = vec![0.0; total];
            for point in block.chunks(dim) {
                let windows = sample_windows(point, kernel, h, axes);
                accumulate_outer(&windows, axes, &mut acc, 1.0);
            }
            acc
        })
        .collect();
    let mut sum = vec![0.0; total];
    for p in partials {
        sum.iter_mut().zip(p).for_each(|(x, y)| *x += y);
    }
    sum.into_iter().map(|v| v / n).collect()
}

/// Adds `scale * prod_d windows[d]` into the row-major grid.
fn accumulate_outer(windows: &[(usize, Vec<f64>)], axes: &[UniformAxis], acc: &mut [f64], scale: f64) {
    if windows.iter().any(|(_, f)| f.is_empty()) {
        return;
    }
    fn rec(d: usize, windows: &[(usize, Vec<f64>)], axes: &[UniformAxis], base: usize, w: f64, acc: &mut [f64]) {
        let (start, ref f) = windows[d];
        if d + 1 == windows.len() {
            for (j, fv) in f.iter().enumerate() {
                acc[base * axes[d].count + start + j] += w * fv;
            }
        } else {
            for (j, fv) in f.iter().enumerate() {
                rec(d + 1, windows, axes, base * axes[d].count + start + j, w * fv, acc);
            }
        }
    }
    rec(0, windows, axes, 0, scale, acc);
}

/// Linear binning then axis-by-axis convolution with the kernel sampled at
/// grid offsets, cut at the kernel radius.
fn binned_kde(samples: &[f64], kernel: &Kernel, h: f64, axes: &[UniformAxis]) -> Vec<f64> {
    let dim = kernel.dim;
    let n = (samples.len() / dim) as f64;
    let total: usize = axes.iter().map(|a| a.count).product();
    let mut bins = vec![0.0; total];
    for point in samples.chunks(dim) {
        let windows: Vec<(usize, Vec<f64>)> = point
            .iter()
            .zip(axes)
            .map(|(&v, axis)| {
                let t = (v - axis.origin) / axis.step;
                if axis.count == 1 {
                    return (0, vec![1.0]);
                }
                let i0 = (t.floor().max(0.0) as usize).min(axis.count - 2);
                let frac = (t - i0 as f64).clamp(0.0, 1.0);
                (i0, vec![1.0 - frac, frac])
            })
            .collect();
        accumulate_outer(&windows, axes, &mut bins, 1.0);
    }
    let mut grid = bins;
    let mut stride = total;
    for axis in axes {
        stride /= axis.count;
        let s = cell_width(axis, h);
        let reach = match kernel.kind {
            KernelKind::Gaussian => (kernel.radius() * h / axis.step).floor() as isize,
            _ => (kernel.grid_reach(s) * h / axis.step).floor() as isize,
        };
        let taps: Vec<f64> = (-reach..=reach)
            .map(|j| kernel.grid_value(j as f64 * axis.step / h, s) / h)
            .collect();
        let count = axis.count;
        let outer = total / (count * stride);
        let src = grid.clone();
        grid.par_chunks_mut(count * stride).enumerate().for_each(|(o, block)| {
            debug_assert!(o < outer);
            let base = o * count * stride;
            for inner in 0..stride {
                for i in 0..count {
                    let mut s = 0.0;
                    let lo = (i as isize - reach).max(0) as usize;
                    let hi = ((i as isize + reach) as usize).min(count - 1);
                    for j in lo..=hi {
                        let tap = taps[(j as isize - i as isize + reach) as usize];
                        s += tap * src[base + j * stride + inner];
                    }
                    block[i * stride + inner] = s;
                }
            }
        });
    }
    grid.into_iter().map(|v| (v / n).max(0.0)).collect()
}

/// Leave-one-out likelihood cross-validation over a 10-point logarithmic
/// grid of factors in `[1/4, 4]` around `pilot`. The leave-one-out density at
/// each sample is read off the binned estimate.
pub fn lcv_bandwidth(samples: &[f64], kernel: &Kernel, pilot: f64, grid_count: usize) -> Result<f64> {
    let dim = kernel.dim;
    check_samples(samples, dim)?;
    let n = samples.len() / dim;
    if n < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 samples"));
    }
    let k0 = kernel.eval(&vec![0.0; dim]);
    let mut best = (f64::NEG_INFINITY, pilot);
    for step in 0..10 {
        let factor = 0.25 * 16f64.powf(step as f64 / 9.0);
        let h = pilot * factor;
        let axes = covering_grid(samples, dim, h, grid_count)?;
        let est = kde(samples, kernel, h, &axes, KdeMethod::Binned)?;
        let self_term = k0 / h.powi(dim as i32);
        let score: f64 = samples
            .chunks(dim)
            .map(|p| {
                let f = est.value_at(p);
                let loo = ((n as f64) * f - self_term) / (n - 1) as f64;
                loo.max(1e-300).ln()
            })
            .sum();
        if score > best.0 {
            best = (score, h);
        }
    }
    Ok(best.1)
}

/// Cubic histogram estimate with bins `[anchor + j h, anchor + (j+1) h)` on
/// every axis. The returned grid holds bin centres and integrates with the
/// midpoint rule.
pub fn histogram_estimate(samples: &[f64], dim: usize, h: f64, anchor: f64) -> Result<DensityEstimate> {
    check_samples(samples, dim)?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("bin width must be positive, got {h}")));
    }
    let n = samples.len() / dim;
    let bin = |v: f64| -> i64 {
        let mut j = ((v - anchor) / h).floor() as i64;
        while anchor + j as f64 * h > v {
            j -= 1;
        }
        while anchor + (j + 1) as f64 * h <= v {
            j += 1;
        }
        j
    };
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    let indices: Vec<i64> = samples.iter().map(|&v| bin(v)).collect();
    for chunk in indices.chunks(dim) {
        for d in 0..dim {
            lo[d] = lo[d].min(chunk[d]);
            hi[d] = hi[d].max(chunk[d]);
        }
    }
    let axes = (0..dim)
        .map(|d| UniformAxis::new(anchor + (lo[d] as f64 + 0.5) * h, h, (hi[d] - lo[d] + 1) as usize))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = axes.iter().map(|a| a.count).product();
    let mut counts = vec![0u64; total];
    for chunk in indices.chunks(dim) {
        let mut flat = 0usize;
        for d in 0..dim {
            flat = flat * axes[d].count + (chunk[d] - lo[d]) as usize;
        }
        counts[flat] += 1;
    }
    let volume = h.powi(dim as i32);
    let values = counts.iter().map(|&c| c as f64 / (n as f64 * volume)).collect();
    DensityEstimate::from_values(axes, values, h, n, Quadrature::Midpoint)
}

/// Quadrature of `|f - g|` over a shared grid.
pub fn l1_distance(f: &DensityEstimate, g: &DensityEstimate) -> Result<f64> {
    if f.dim() != g.dim() || f.axes.iter().zip(&g.axes).any(|(a, b)| !a.approx_eq(b)) {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", f.axes, g.axes)));
    }
    if f.quadrature != g.quadrature {
        return Err(Error::GridMismatch("quadrature rules differ".into()));
    }
    Ok(f.values
        .iter()
        .zip(&g.values)
        .enumerate()
        .map(|(i, (a, b))| (a - b).abs() * f.weight(i))
        .sum())
}

/// `(2k+1)`-tuples centred on the windows owned by subsequence `index`
/// (1-based), stored contiguously.
pub fn super_symbols(sequence: &[f64], k: usize, index: usize) -> Result<Vec<f64>> {
    let plan = partition_subsequences(sequence.len(), k)?;
    let centers = plan.centers(index)?;
    let mut out = Vec::with_capacity(centers.len() * (2 * k + 1));
    for &c in centers {
        // centres are 1-based
        out.extend_from_slice(&sequence[c - 1 - k..c + k]);
    }
    Ok(out)
}

/// Product-kernel estimate over the super-symbols of one subsequence.
pub fn context_kde(
    sequence: &[f64],
    k: usize,
    index: usize,
    kind: KernelKind,
    h: f64,
    axis: UniformAxis,
    method: KdeMethod,
) -> Result<DensityEstimate> {
    if k == 0 {
        return Err(Error::invalid("context order k must be at least 1"));
    }
    let tuples = super_symbols(sequence, k, index)?;
    let kernel = Kernel::new(kind, 2 * k + 1)?;
    kde(&tuples, &kernel, h, &vec![axis; 2 * k + 1], method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const PHI0: f64 = 0.398_942_280_401_432_7;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn kernels_integrate_to_one() {
        let ax = UniformAxis::spanning(-8.0, 8.0, 160_001).unwrap();
        for kind in [KernelKind::Gaussian, KernelKind::Epanechnikov, KernelKind::Box] {
            let k = Kernel::new(kind, 1).unwrap();
            let mass = ax.integrate_fn(|u| k.eval_1d(u));
            assert!((mass - 1.0).abs() < 1e-6, "{kind:?}: {mass}");
            assert_eq!(k.eval_1d(0.3), k.eval_1d(-0.3));
        }
    }

    #[test]
    fn silverman_examples() {
        let b = silverman_bandwidth(&[0.0, 1.0], 1, 1.0).unwrap();
        let expected = 1.06 * 0.5f64.sqrt() * 2f64.powf(-0.2);
        assert_abs_diff_eq!(b.h, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(b.h, 0.6524, epsilon = 2e-4);

        let s = normals(10_000, 1);
        let b = silverman_bandwidth(&s, 1, 1.0).unwrap();
        let nominal = 1.06 * 10_000f64.powf(-0.2);
        assert_abs_diff_eq!(nominal, 0.1679, epsilon = 1e-4);
        assert!((b.h / nominal - 1.0).abs() < 0.1);

        let flat = silverman_bandwidth(&[3.0; 5], 1, 255.0).unwrap();
        assert!(flat.fell_back);
        assert_abs_diff_eq!(flat.h, 2.55);
        assert!(silverman_bandwidth(&[1.0], 1, 1.0).is_err());
    }

    #[test]
    fn single_point_kernel_peak() {
        let ax = UniformAxis::spanning(-8.0, 8.0, 161).unwrap();
        let f = kde(&[0.0], &Kernel::gaussian(1), 1.0, &[ax], KdeMethod::Direct).unwrap();
        assert_abs_diff_eq!(f.values()[80], PHI0, epsilon = 1e-7);
    }

    #[test]
    fn box_kernel_gap_between_points() {
        let ax = UniformAxis::spanning(-4.0, 4.0, 81).unwrap();
        let k = Kernel::new(KernelKind::Box, 1).unwrap();
        let f = kde(&[-1.0, 1.0], &k, 1.0, &[ax], KdeMethod::Direct).unwrap();
        assert_eq!(f.values()[40], 0.0);
        assert_abs_diff_eq!(f.values()[30], 0.5);
    }

    #[test]
    fn kde_errors() {
        let ax = UniformAxis::spanning(0.0, 1.0, 11).unwrap();
        let k = Kernel::gaussian(1);
        assert!(matches!(kde(&[], &k, 0.1, &[ax], KdeMethod::Direct), Err(Error::Empty(_))));
        assert!(matches!(
            kde(&[2.0], &k, 0.1, &[ax], KdeMethod::Direct),
            Err(Error::GridCoverage { .. })
        ));
        assert!(kde(&[0.5], &k, 0.0, &[ax], KdeMethod::Direct).is_err());
    }

    #[test]
    fn compact_kernels_keep_grid_mass() {
        let s = [0.013, 0.4, 0.41, 0.9];
        let axes = covering_grid(&s, 1, 0.07, 301).unwrap();
        for kind in [KernelKind::Box, KernelKind::Epanechnikov] {
            let k = Kernel::new(kind, 1).unwrap();
            for method in [KdeMethod::Direct, KdeMethod::Binned] {
                let f = kde(&s, &k, 0.07, &axes, method).unwrap();
                assert!((f.integral() - 1.0).abs() < 1e-9, "{kind:?} {method:?} {}", f.integral());
            }
        }
    }

    #[test]
    fn binned_path_tracks_direct() {
        let s = normals(5_000, 3);
        let h = silverman_bandwidth(&s, 1, 1.0).unwrap().h;
        let axes = covering_grid(&s, 1, h, 512).unwrap();
        let k = Kernel::gaussian(1);
        let a = kde(&s, &k, h, &axes, KdeMethod::Direct).unwrap();
        let b = kde(&s, &k, h, &axes, KdeMethod::Binned).unwrap();
        let dev = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3 * a.peak(), "{dev}");
    }

    #[test]
    fn three_dim_point_mass() {
        let ax = UniformAxis::spanning(-6.0, 6.0, 25).unwrap();
        let f = kde(&[0.0, 0.0, 0.0], &Kernel::gaussian(3), 1.0, &[ax; 3], KdeMethod::Direct).unwrap();
        let centre = 12 * 625 + 12 * 25 + 12;
        assert_abs_diff_eq!(f.values()[centre], PHI0.powi(3), epsilon = 1e-9);
        assert_abs_diff_eq!(f.values()[centre], 0.063494, epsilon = 1e-6);
        assert_abs_diff_eq!(f.value_at(&[0.0, 0.0, 0.0]), PHI0.powi(3), epsilon = 1e-9);
    }

    #[test]
    fn histogram_examples() {
        let f = histogram_estimate(&[0.1, 0.2, 0.3, 0.4], 1, 0.5, 0.0).unwrap();
        assert_eq!(f.axis().count, 1);
        assert_abs_diff_eq!(f.values()[0], 2.0);
        assert_abs_diff_eq!(f.axis().origin, 0.25);
        assert_abs_diff_eq!(f.integral(), 1.0);

        let g = histogram_estimate(&[0.25], 1, 0.5, 0.0).unwrap();
        assert_abs_diff_eq!(g.values()[0], 2.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let f = histogram_estimate(&u, 1, 0.1, 0.0).unwrap();
        assert_eq!(f.axis().count, 10);
        assert!(f.values().iter().all(|v| (v - 1.0).abs() < 0.05));
        assert!((f.integral() - 1.0).abs() < 1e-12);
        assert!(histogram_estimate(&[], 1, 0.1, 0.0).is_err());
    }

    #[test]
    fn histogram_edges_are_half_open() {
        let f = histogram_estimate(&[0.0, 0.5, 0.9999], 1, 0.5, 0.0).unwrap();
        assert_eq!(f.axis().count, 2);
        assert_abs_diff_eq!(f.values()[0], 1.0 / 1.5);
        assert_abs_diff_eq!(f.values()[1], 2.0 / 1.5);
    }

    #[test]
    fn l1_examples() {
        let ax = UniformAxis::spanning(-10.0, 110.0, 120_001).unwrap();
        let n0 = DensityEstimate::tabulate(ax, |y| crate::channels::normal_pdf(y, 0.0, 1.0)).unwrap();
        let n100 = DensityEstimate::tabulate(ax, |y| crate::channels::normal_pdf(y, 100.0, 1.0)).unwrap();
        assert_eq!(l1_distance(&n0, &n0).unwrap(), 0.0);
        assert_abs_diff_eq!(l1_distance(&n0, &n100).unwrap(), 2.0, epsilon = 1e-6);

        let ax = UniformAxis::spanning(-1.0, 3.0, 4001).unwrap();
        let u = |lo: f64| move |y: f64| if y > lo && y < lo + 1.0 { 1.0 } else { 0.0 };
        let a = DensityEstimate::tabulate(ax, u(0.0)).unwrap();
        let b = DensityEstimate::tabulate(ax, u(0.5)).unwrap();
        assert_abs_diff_eq!(l1_distance(&a, &b).unwrap(), 1.0, epsilon = 2e-3);

        let other = DensityEstimate::tabulate(UniformAxis::spanning(-1.0, 3.0, 11).unwrap(), u(0.0)).unwrap();
        assert!(matches!(l1_distance(&a, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn super_symbols_stay_in_their_subsequence() {
        let seq: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        assert_eq!(super_symbols(&seq, 1, 1).unwrap(), vec![1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        assert_eq!(super_symbols(&seq, 1, 2).unwrap(), vec![2., 3., 4., 5., 6., 7., 8., 9., 10.]);
        assert_eq!(super_symbols(&seq, 1, 3).unwrap(), vec![3., 4., 5., 6., 7., 8.]);
        assert!(super_symbols(&seq[..2], 1, 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ax = UniformAxis::spanning(-1.0, 1.0, 5).unwrap();
        let f = DensityEstimate::tabulate_nd(vec![ax, ax], |p| (p[0] + 2.0) * (p[1] + 3.0)).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = DensityEstimate::read_csv(buf.as_slice()).unwrap();
        assert_eq!(g.dim(), 2);
        for (a, b) in f.values().iter().zip(g.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
