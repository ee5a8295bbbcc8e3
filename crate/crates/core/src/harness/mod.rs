//! Experiment orchestration: sources, corruption, denoising, metrics and
//! result tables.

pub mod image;
pub mod sources;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use image::{corrupt, corrupt_image, median, rmse, test_image, NoisyImage};
pub use sources::{CleanSignal, SourceSpec};

use crate::channels::ChannelModel;
use crate::denoise::{
    cumulative_loss, denoise_sliding, denoise_symbolwise, genie_d0, genie_dk, BandwidthPolicy, ContextLayout,
    ContextShape, LossFunction, LossKind, SlidingOptions, SymbolwiseOptions, GENIE_QUADRATURE_POINTS,
};
use crate::error::{Error, Result};
use crate::inversion::{levy_distance, PrimalDualOptions, StepCdf};
use crate::io::{write_sequence_binary, Image};
use crate::rng::SeedStream;

const SOURCE_TAG: u64 = 1;
const NOISE_TAG: u64 = 2;
const GENIE_TAG: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    /// Support step; `(b - a) / 32` when absent.
    pub delta: Option<f64>,
    pub level_step: f64,
    pub bandwidth: BandwidthPolicy,
    pub grid_points: usize,
    /// Support step of the tuple inversion; `delta` when absent.
    pub context_delta: Option<f64>,
    pub context_shape: ContextShape,
    pub context_grid_points: usize,
    pub tuple_iterations: usize,
    /// Compute the genie benchmark for every row.
    pub genie: bool,
    /// Channel draws for the order-k genie.
    pub genie_replications: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        let sliding = SlidingOptions::default();
        PipelineParams {
            delta: None,
            level_step: 1.0 / 256.0,
            bandwidth: BandwidthPolicy::Silverman,
            grid_points: sliding.base.grid_points,
            context_delta: None,
            context_shape: ContextShape::Window,
            context_grid_points: sliding.context_grid_points,
            tuple_iterations: sliding.solver.max_iterations,
            genie: true,
            genie_replications: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: SourceSpec,
    /// `name:key=val,...`, e.g. `awgn:sigma=0.3`.
    pub channel: String,
    /// Clean range `[a, b]`.
    pub range: [f64; 2],
    #[serde(default = "default_loss")]
    pub loss: String,
    #[serde(default)]
    pub pipeline: PipelineParams,
    /// Sequence lengths; ignored for image sources.
    #[serde(default)]
    pub n_values: Vec<usize>,
    #[serde(default = "default_k_values")]
    pub k_values: Vec<usize>,
    /// Channel realisations per (n, k).
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Clip noisy images to `[0, maxval]` before denoising.
    #[serde(default)]
    pub clip: bool,
    /// Wall times make outputs non-reproducible, so they are opt-in.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_loss() -> String {
    "squared".into()
}

fn default_k_values() -> Vec<usize> {
    vec![0]
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)?;
        // relative paths are relative to the config file
        if let (SourceSpec::ImageFile { path: img }, Some(dir)) = (&mut config.source, path.parent()) {
            if img.is_relative() {
                *img = dir.join(&*img);
            }
        }
        Ok(config)
    }

    pub fn channel_model(&self) -> Result<ChannelModel> {
        ChannelModel::from_spec(&self.channel, self.range[0], self.range[1])
    }

    pub fn loss_function(&self) -> Result<LossFunction> {
        let kind: LossKind = self.loss.parse()?;
        LossFunction::new(kind, self.range[0], self.range[1])
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.range;
        if !(a < b) {
            return Err(Error::Config(format!("range [{a}, {b}] is empty")));
        }
        self.channel_model()?;
        self.loss_function()?;
        self.source.validate(a, b)?;
        let p = &self.pipeline;
        for (name, d) in [("delta", p.delta), ("context_delta", p.context_delta)] {
            if let Some(d) = d {
                if !(d > 0.0 && d <= b - a) {
                    return Err(Error::Config(format!("{name} = {d} outside (0, {}]", b - a)));
                }
            }
        }
        if !(p.level_step > 0.0 && p.level_step <= 1.0) {
            return Err(Error::Config(format!("level_step = {} outside (0, 1]", p.level_step)));
        }
        if !self.source.is_image() && (self.n_values.is_empty() || self.n_values.contains(&0)) {
            return Err(Error::Config("n_values must list positive lengths".into()));
        }
        if self.k_values.is_empty() {
            return Err(Error::Config("k_values is empty".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        Ok(())
    }

    fn symbolwise(&self) -> SymbolwiseOptions {
        SymbolwiseOptions {
            delta_support: self.pipeline.delta,
            level_step: self.pipeline.level_step,
            bandwidth: self.pipeline.bandwidth,
            grid_points: self.pipeline.grid_points,
            ..Default::default()
        }
    }

    fn sliding(&self, k: usize) -> SlidingOptions {
        let defaults = SlidingOptions::default();
        SlidingOptions {
            k,
            base: self.symbolwise(),
            context_delta: self.pipeline.context_delta,
            context_grid_points: self.pipeline.context_grid_points,
            solver: PrimalDualOptions {
                max_iterations: self.pipeline.tuple_iterations,
                ..defaults.solver
            },
            ..defaults
        }
    }
}

/// One (n, k, seed) run. Metrics are NaN and `error` is set when a stage
/// failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub rmse_noisy: f64,
    pub rmse_denoised: f64,
    pub cumulative_loss: f64,
    /// Standard error of the per-symbol losses behind `cumulative_loss`.
    pub loss_standard_error: f64,
    pub genie: f64,
    pub genie_standard_error: f64,
    pub lp_objective: f64,
    pub levy_distance: f64,
    pub wall_time: Option<f64>,
    pub error: Option<String>,
}

impl MetricsRow {
    fn failed(n: usize, k: usize, seed: u64, err: &Error) -> Self {
        MetricsRow {
            n,
            k,
            seed,
            rmse_noisy: f64::NAN,
            rmse_denoised: f64::NAN,
            cumulative_loss: f64::NAN,
            loss_standard_error: f64::NAN,
            genie: f64::NAN,
            genie_standard_error: f64::NAN,
            lp_objective: f64::NAN,
            levy_distance: f64::NAN,
            wall_time: None,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub k: usize,
    pub rows: usize,
    pub failed: usize,
    pub median_rmse_noisy: f64,
    pub median_rmse_denoised: f64,
    pub median_cumulative_loss: f64,
    pub median_genie: f64,
    pub median_loss_minus_genie: f64,
    pub median_abs_loss_minus_genie: f64,
    pub median_levy_distance: f64,
}

/// `(n, value)` points of one k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub k: usize,
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: usize,
    pub failed: usize,
    pub groups: Vec<GroupSummary>,
    pub loss_minus_genie: Vec<Series>,
    pub levy_distance: Vec<Series>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<metrics>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }

    /// Writes `metrics.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("metrics.csv");
        fs::write(&csv_path, self.csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join("summary.json");
        fs::write(&json_path, self.summary_json()?).map_err(|e| Error::io(&json_path, e))
    }
}

struct Job {
    n: usize,
    k: usize,
    replicate: usize,
}

/// Seed of replicate `r`: derived from the master seed, stable across runs.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    let s = SeedStream::new(master).fork(r as u64);
    use rand::RngCore;
    s.rng(0).next_u64()
}

/// Runs every (n, k, seed) combination. Rows run concurrently and come back
/// sorted by n, k and replicate; a failing row is recorded and the rest
/// continue.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let channel = config.channel_model()?;
    let loss = config.loss_function()?;
    let n_values: Vec<usize> = if config.source.is_image() {
        vec![0]
    } else {
        config.n_values.clone()
    };
    let mut jobs = Vec::new();
    for &n in &n_values {
        for &k in &config.k_values {
            for replicate in 0..config.seeds {
                jobs.push(Job { n, k, replicate });
            }
        }
    }
    let master = SeedStream::new(config.seed);
    let rows: Vec<MetricsRow> = jobs
        .par_iter()
        .map(|job| {
            let seed = replicate_seed(config.seed, job.replicate);
            let started = Instant::now();
            let result = run_row(config, &channel, &loss, job, seed, master);
            match result {
                Ok(mut row) => {
                    if config.record_wall_time {
                        row.wall_time = Some(started.elapsed().as_secs_f64());
                    }
                    row
                }
                Err(e) => {
                    log::warn!("row n={} k={} seed={seed} failed: {e}", job.n, job.k);
                    MetricsRow::failed(job.n, job.k, seed, &e)
                }
            }
        })
        .collect();
    let summary = summarize(&rows);
    let out = ExperimentOutput { rows, summary };
    if let Some(dir) = &config.output_dir {
        out.write(dir)?;
    }
    Ok(out)
}

fn run_row(
    config: &ExperimentConfig,
    channel: &ChannelModel,
    loss: &LossFunction,
    job: &Job,
    seed: u64,
    master: SeedStream,
) -> Result<MetricsRow> {
    // the clean signal is fixed across replicates; only the channel varies
    let clean = config.source.generate(job.n, master.fork(SOURCE_TAG))?;
    let x = clean.values();
    let seeds = SeedStream::new(seed);
    let mut y = corrupt(x, channel, seeds.fork(NOISE_TAG))?;
    if config.clip {
        let [a, b] = config.range;
        y.iter_mut().for_each(|v| *v = v.clamp(a, b));
    }
    let sym = config.symbolwise();
    let grid = sym.support_grid(channel)?;
    let (estimate, lp_objective, pmf) = match (job.k, &clean) {
        (0, _) => {
            let out = denoise_symbolwise(&y, channel, loss, &sym)?;
            (out.estimate, out.diagnostics.lp_objective, out.diagnostics.pmf)
        }
        (k, CleanSignal::Sequence(_)) => {
            let layout = ContextLayout::sequence(y.len(), k)?;
            let out = denoise_sliding(&y, &layout, channel, loss, &config.sliding(k))?;
            (out.estimate, out.diagnostics.base.lp_objective, out.diagnostics.base.pmf)
        }
        (k, CleanSignal::Image(img)) => {
            let layout = ContextLayout::raster(img.height, img.width, &config.pipeline.context_shape, k)?;
            let out = denoise_sliding(&y, &layout, channel, loss, &config.sliding(k))?;
            (out.estimate, out.diagnostics.base.lp_objective, out.diagnostics.base.pmf)
        }
    };
    let losses: Vec<f64> = x.iter().zip(&estimate).map(|(a, b)| loss.eval(*a, *b)).collect();
    let (_, loss_se) = image::mean_and_se(losses.iter().cloned());
    let (genie, genie_se) = if !config.pipeline.genie {
        (f64::NAN, f64::NAN)
    } else if job.k == 0 || matches!(clean, CleanSignal::Image(_)) {
        // the genie for image contexts is not a sequence window; score k = 0
        let q = channel.quadrature_grid(GENIE_QUADRATURE_POINTS)?;
        (genie_d0(x, channel, loss, &grid, &q)?, 0.0)
    } else {
        let g = genie_dk(
            x,
            channel,
            loss,
            job.k,
            &grid,
            config.pipeline.genie_replications,
            seeds.fork(GENIE_TAG),
        )?;
        (g.value, g.standard_error)
    };
    if let (Some(dir), CleanSignal::Image(img)) = (&config.output_dir, &clean) {
        save_image_artifacts(dir, img, &y, &estimate, job.k, seed)?;
    }
    Ok(MetricsRow {
        n: x.len(),
        k: job.k,
        seed,
        rmse_noisy: rmse(x, &y)?,
        rmse_denoised: rmse(x, &estimate)?,
        cumulative_loss: cumulative_loss(x, &estimate, loss)?,
        loss_standard_error: loss_se,
        genie,
        genie_standard_error: genie_se,
        lp_objective,
        levy_distance: levy_distance(&StepCdf::from_samples(x), &pmf.cdf()),
        wall_time: None,
        error: None,
    })
}

fn save_image_artifacts(dir: &Path, img: &Image, noisy: &[f64], denoised: &[f64], k: usize, seed: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = format!("seed-{seed:016x}");
    let write = |name: String, bytes: Vec<u8>| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    };
    write(format!("{stem}-noisy.bin"), write_sequence_binary(noisy))?;
    let preview = NoisyImage {
        width: img.width,
        height: img.height,
        values: noisy.to_vec(),
    }
    .preview(img.maxval);
    write(format!("{stem}-noisy.pgm"), crate::io::write_pgm(&preview))?;
    let out = Image::new(img.width, img.height, img.maxval, denoised.to_vec())?;
    write(format!("{stem}-k{k}-denoised.pgm"), crate::io::write_pgm(&out))
}

pub fn summarize(rows: &[MetricsRow]) -> Summary {
    let mut keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.n, r.k)).collect();
    keys.sort();
    keys.dedup();
    let groups: Vec<GroupSummary> = keys
        .iter()
        .map(|&(n, k)| {
            let g: Vec<&MetricsRow> = rows.iter().filter(|r| r.n == n && r.k == k).collect();
            let med = |f: &dyn Fn(&MetricsRow) -> f64| median(g.iter().map(|r| f(r)));
            GroupSummary {
                n,
                k,
                rows: g.len(),
                failed: g.iter().filter(|r| r.error.is_some()).count(),
                median_rmse_noisy: med(&|r| r.rmse_noisy),
                median_rmse_denoised: med(&|r| r.rmse_denoised),
                median_cumulative_loss: med(&|r| r.cumulative_loss),
                median_genie: med(&|r| r.genie),
                median_loss_minus_genie: med(&|r| r.cumulative_loss - r.genie),
                median_abs_loss_minus_genie: med(&|r| (r.cumulative_loss - r.genie).abs()),
                median_levy_distance: med(&|r| r.levy_distance),
            }
        })
        .collect();
    let mut ks: Vec<usize> = keys.iter().map(|p| p.1).collect();
    ks.sort();
    ks.dedup();
    let series = |f: fn(&GroupSummary) -> f64| -> Vec<Series> {
        ks.iter()
            .map(|&k| Series {
                k,
                points: groups.iter().filter(|g| g.k == k).map(|g| (g.n, f(g))).collect(),
            })
            .collect()
    };
    Summary {
        rows: rows.len(),
        failed: rows.iter().filter(|r| r.error.is_some()).count(),
        loss_minus_genie: series(|g| g.median_loss_minus_genie),
        levy_distance: series(|g| g.median_levy_distance),
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic_config() -> ExperimentConfig {
        ExperimentConfig {
            source: SourceSpec::Periodic {
                pattern: vec![0.25, 0.75, 0.75, 0.25, 0.5],
            },
            channel: "awgn:sigma=0.3".into(),
            range: [0.0, 1.0],
            loss: "squared".into(),
            pipeline: PipelineParams {
                delta: Some(0.125),
                grid_points: 256,
                ..Default::default()
            },
            n_values: vec![300, 600],
            k_values: vec![0],
            seeds: 3,
            seed: 17,
            output_dir: None,
            clip: false,
            record_wall_time: false,
        }
    }

    #[test]
    fn rows_cover_the_sweep_and_repeat_exactly() {
        let cfg = periodic_config();
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.rows.len(), 6);
        assert_eq!(a.summary.groups.len(), 2);
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.csv().unwrap(), b.csv().unwrap());
        assert_eq!(a.summary_json().unwrap(), b.summary_json().unwrap());
        for row in &a.rows {
            assert!(row.error.is_none());
            assert!(row.cumulative_loss >= 0.0 && row.cumulative_loss <= 1.0);
            assert!(row.genie <= row.cumulative_loss + 3.0 * row.loss_standard_error);
        }
    }

    #[test]
    fn failing_rows_are_recorded() {
        let mut cfg = periodic_config();
        cfg.n_values = vec![2, 300];
        cfg.k_values = vec![1];
        cfg.seeds = 1;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows[0].error.is_some());
        assert_eq!(out.summary.failed, 1);
    }

    #[test]
    fn config_validation() {
        let mut cfg = periodic_config();
        cfg.pipeline.delta = Some(2.0);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = periodic_config();
        cfg.pipeline.level_step = 0.0;
        assert!(cfg.validate().is_err());
        let json = r#"{"source": {"kind": "constant", "value": 0.5}, "channel": "awgn:sigma=0.1",
                       "range": [0, 1], "n_values": [10], "bogus": 1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }
}
