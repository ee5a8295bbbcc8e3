//! Image corruption, previews and error metrics.

use rayon::prelude::*;

use crate::channels::ChannelModel;
use crate::error::{Error, Result};
use crate::io::Image;
use crate::rng::SeedStream;

/// Positions per noise stream.
const NOISE_CHUNK: usize = 1024;

/// Passes every symbol through the channel. Position `i` draws from stream
/// `i / 1024`, so the output does not depend on the thread count.
pub fn corrupt(x: &[f64], channel: &ChannelModel, seeds: SeedStream) -> Result<Vec<f64>> {
    let (lo, hi) = channel.input_range();
    if let Some(&bad) = x.iter().find(|v| !(**v >= lo && **v <= hi)) {
        return Err(Error::Domain { value: bad, lo, hi });
    }
    let mut y = vec![0.0; x.len()];
    y.par_chunks_mut(NOISE_CHUNK)
        .zip(x.par_chunks(NOISE_CHUNK))
        .enumerate()
        .for_each(|(i, (out, src))| {
            let mut rng = seeds.rng(i as u64);
            for (o, &v) in out.iter_mut().zip(src) {
                *o = channel.sample_unchecked(v, &mut rng);
            }
        });
    Ok(y)
}

/// Real-valued noisy raster.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl NoisyImage {
    /// Rounded and clipped to `[0, maxval]`.
    pub fn preview(&self, maxval: u16) -> Image {
        Image {
            width: self.width,
            height: self.height,
            maxval,
            pixels: self.values.iter().map(|v| v.round().clamp(0.0, maxval as f64)).collect(),
        }
    }
}

pub fn corrupt_image(image: &Image, channel: &ChannelModel, seed: u64) -> Result<NoisyImage> {
    Ok(NoisyImage {
        width: image.width,
        height: image.height,
        values: corrupt(&image.pixels, channel, SeedStream::new(seed))?,
    })
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("nothing to compare"));
    }
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sse / a.len() as f64).sqrt())
}

/// Synthetic 64x64 grey-level crop: a shaded background, a bright disc, a
/// dark block, a striped patch and a soft ramp.
pub fn test_image() -> Image {
    let (w, h) = (64usize, 64usize);
    let mut pixels = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let (rf, cf) = (r as f64, c as f64);
            let mut v = 70.0 + 60.0 * rf / 63.0;
            if (rf - 40.0).powi(2) + (cf - 22.0).powi(2) <= 14.0f64.powi(2) {
                v = 205.0;
            }
            if (8..24).contains(&r) && (36..58).contains(&c) {
                v = 30.0;
            }
            if (46..60).contains(&r) && (40..60).contains(&c) {
                v = if ((r + c) / 3) % 2 == 0 { 95.0 } else { 165.0 };
            }
            if (2..6).contains(&r) {
                v = 240.0 - 3.0 * cf;
            }
            pixels.push(v.round());
        }
    }
    Image {
        width: w,
        height: h,
        maxval: 255,
        pixels,
    }
}

/// Sample mean and its standard error.
pub fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Median of the finite values, or NaN when there are none.
pub fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
