use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Continuous, Normal};

use udenoise_core::channels::ChannelModel;
use udenoise_core::denoise::{
    bayes_envelope_with, estimate_output_density, partition_subsequences, LossFunction, SymbolwiseOptions,
};
use udenoise_core::density::{covering_grid, kde, silverman_bandwidth, KdeMethod};
use udenoise_core::dude::{equivalence_check, EquivalenceConfig};
use udenoise_core::harness::{median, run_experiment, ExperimentConfig, ExperimentOutput};
use udenoise_core::inversion::invert_channel;
use udenoise_core::rng::SeedStream;
use udenoise_core::{Kernel, KernelKind, OutputQuantizer, UniformAxis};

/// Written to the stdout handle directly so the line shows even when the
/// harness captures output.
fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id} {name}: {verdict} ({detail})");
    let _ = out.flush();
}

fn normal(mean: f64, sd: f64) -> Normal {
    Normal::new(mean, sd).unwrap()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

const PATTERN: [f64; 6] = [0.2, 0.8, 0.8, 0.2, 0.8, 0.5];

fn periodic(n: usize) -> Vec<f64> {
    PATTERN.iter().cycle().take(n).cloned().collect()
}

fn frequencies(x: &[f64]) -> Vec<(f64, f64)> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for v in x {
        *counts.entry(v.to_bits()).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(b, c)| (f64::from_bits(b), c as f64 / x.len() as f64))
        .collect()
}

fn awgn_noise(x: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + sigma * z
        })
        .collect()
}

#[test]
fn kde_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let start = Instant::now();
    let h = silverman_bandwidth(&samples, 1, 8.0).unwrap().h;
    let axes = covering_grid(&samples, 1, h, 512).unwrap();
    let f = kde(&samples, &Kernel::gaussian(1), h, &axes, KdeMethod::Auto).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let phi = normal(0.0, 1.0);
    let axis = f.axis();
    let l1: f64 = (0..axis.count)
        .map(|i| axis.weight(i) * (f.values()[i] - phi.pdf(axis.point(i))).abs())
        .sum();

    let sigma = 0.3;
    let channel = ChannelModel::awgn(sigma, 0.0, 1.0).unwrap();
    let opts = SymbolwiseOptions::default();
    let medians: Vec<f64> = [1_000usize, 10_000, 100_000]
        .iter()
        .map(|&n| {
            let x = periodic(n);
            let mix: Vec<(Normal, f64)> = frequencies(&x).into_iter().map(|(a, p)| (normal(a, sigma), p)).collect();
            let j: Vec<f64> = (0..20u64)
                .map(|seed| {
                    let y = awgn_noise(&x, sigma, 1000 * n as u64 + seed);
                    let (f, _, _) = estimate_output_density(&y, &channel, &opts).unwrap();
                    let axis = f.axis();
                    (0..axis.count)
                        .map(|i| {
                            let t: f64 = mix.iter().map(|(d, p)| p * d.pdf(axis.point(i))).sum();
                            axis.weight(i) * (f.values()[i] - t).abs()
                        })
                        .sum()
                })
                .collect();
            median(j.into_iter())
        })
        .collect();

    let pass = l1 < 0.06 && elapsed < 5.0 && strictly_decreasing(&medians);
    report(
        1,
        "KDE consistency",
        pass,
        format!("L1 {l1:.4} in {elapsed:.3}s, median J_n {medians:.4?}"),
    );
    assert!(pass);
}

#[test]
fn channel_inversion_recovery() {
    let n = 100_000;
    let sigma = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 0.75 } else { 0.25 }).collect();
    let y = awgn_noise(&x, sigma, 22);
    let start = Instant::now();
    let channel = ChannelModel::awgn(sigma, 0.0, 1.0).unwrap();
    let opts = SymbolwiseOptions {
        delta_support: Some(1.0 / 32.0),
        level_step: 1.0 / 256.0,
        ..SymbolwiseOptions::default()
    };
    let grid = opts.support_grid(&channel).unwrap();
    let (f_hat, h, _) = estimate_output_density(&y, &channel, &opts).unwrap();
    let lp = invert_channel(&f_hat, &channel, &grid, opts.level_step, &opts.inversion).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    // Oracle: empirical masses on the 33-point grid, rounded to 1/256.
    let mut truth = vec![0.0; 33];
    for v in &x {
        truth[(v * 32.0).round() as usize] += 1.0 / n as f64;
    }
    for m in truth.iter_mut() {
        *m = (*m * 256.0).round() / 256.0;
    }
    let tv = 0.5 * truth.iter().zip(&lp.pmf.masses).map(|(a, b)| (a - b).abs()).sum::<f64>();

    // Gaussian columns smoothed by a Gaussian kernel stay Gaussian.
    let sd = (sigma * sigma + h * h).sqrt();
    let columns: Vec<Normal> = (0..33).map(|j| normal(j as f64 / 32.0, sd)).collect();
    let axis = f_hat.axis();
    let brute: f64 = (0..axis.count)
        .map(|i| {
            let yi = axis.point(i);
            let model: f64 = columns.iter().zip(&lp.raw.masses).map(|(c, p)| c.pdf(yi) * p).sum();
            axis.weight(i) * (f_hat.values()[i] - model).abs()
        })
        .sum();
    let rel = (lp.objective - brute).abs() / brute.abs().max(f64::MIN_POSITIVE);

    let pass = tv < 0.05 && rel <= 1e-7 && elapsed < 60.0;
    report(
        2,
        "channel inversion",
        pass,
        format!("TV {tv:.4}, objective {:.6e} vs {brute:.6e} (rel {rel:.1e}), {elapsed:.2}s", lp.objective),
    );
    assert!(pass);
}

fn periodic_run() -> &'static ExperimentOutput {
    static RUN: OnceLock<ExperimentOutput> = OnceLock::new();
    RUN.get_or_init(|| {
        let config: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "source": {"kind": "periodic", "pattern": PATTERN},
            "channel": "awgn:sigma=0.3",
            "range": [0.0, 1.0],
            "n_values": [1000, 10000, 100000],
            "seeds": 10,
            "seed": 31,
        }))
        .unwrap();
        run_experiment(&config).unwrap()
    })
}

fn per_n<F: Fn(&udenoise_core::harness::MetricsRow) -> f64>(out: &ExperimentOutput, f: F) -> Vec<f64> {
    [1000usize, 10_000, 100_000]
        .iter()
        .map(|&n| median(out.rows.iter().filter(|r| r.n == n).map(&f)))
        .collect()
}

#[test]
fn levy_distance_trend() {
    let out = periodic_run();
    let failed = out.rows.iter().filter(|r| r.error.is_some()).count();
    let levy = per_n(out, |r| r.levy_distance);
    let pass = failed == 0 && strictly_decreasing(&levy);
    report(3, "Levy distance trend", pass, format!("medians {levy:.4?}, {failed} failed rows"));
    assert!(pass);
}

/// Expected squared loss of the Bayes response to the empirical distribution
/// of `x` through AWGN, with reconstructions restricted to `candidates`.
fn oracle_d0(x: &[f64], sigma: f64, candidates: &[f64]) -> f64 {
    let freq = frequencies(x);
    let lo = freq[0].0 - 12.0 * sigma;
    let hi = freq[freq.len() - 1].0 + 12.0 * sigma;
    let steps = 40_000;
    let dy = (hi - lo) / steps as f64;
    let comps: Vec<(f64, f64, Normal)> = freq.iter().map(|&(a, p)| (a, p, normal(a, sigma))).collect();
    let mut total = 0.0;
    for i in 0..=steps {
        let y = lo + i as f64 * dy;
        let w: Vec<(f64, f64)> = comps.iter().map(|(a, p, d)| (*a, p * d.pdf(y))).collect();
        let best = candidates
            .iter()
            .map(|&c| w.iter().map(|(a, q)| q * (a - c) * (a - c)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let trap = if i == 0 || i == steps { 0.5 } else { 1.0 };
        total += trap * dy * best;
    }
    total
}

#[test]
fn loss_approaches_genie() {
    let out = periodic_run();
    let candidates: Vec<f64> = (0..=32).map(|j| j as f64 / 32.0).collect();
    let mut genie_gap: f64 = 0.0;
    let mut signed = Vec::new();
    let mut abs = Vec::new();
    for &n in &[1000usize, 10_000, 100_000] {
        let d0 = oracle_d0(&periodic(n), 0.3, &candidates);
        let rows: Vec<_> = out.rows.iter().filter(|r| r.n == n).collect();
        for r in &rows {
            genie_gap = genie_gap.max((r.genie - d0).abs());
        }
        signed.push(median(rows.iter().map(|r| r.cumulative_loss - d0)));
        abs.push(median(rows.iter().map(|r| (r.cumulative_loss - d0).abs())));
    }
    let pass = strictly_decreasing(&abs) && signed[2] < 0.01 && genie_gap < 1e-6;
    report(
        4,
        "loss minus genie",
        pass,
        format!("median L-D0 {signed:.5?}, median |L-D0| {abs:.5?}, harness genie off by {genie_gap:.1e}"),
    );
    assert!(pass);
}

#[test]
fn dude_equivalence() {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut all = true;
    for (levels, k, seed) in [(4usize, 0usize, 51u64), (2, 1, 52)] {
        let channel = ChannelModel::awgn(0.6, 0.0, (levels - 1) as f64).unwrap();
        let mut rng = SeedStream::new(seed).rng(0);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random_range(0..levels) as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| channel.sample(v, &mut rng).unwrap()).collect();
        let config = EquivalenceConfig {
            k,
            levels,
            alpha: 1.0,
            refinement: 2,
            origin: None,
        };
        let loss = LossFunction::squared(0.0, (levels - 1) as f64);
        let outcome = equivalence_check(&y, &channel, &loss, &config).unwrap();
        all &= outcome.matched;
        lines.push(format!("M={levels} k={k}: {} positions, match {}", outcome.positions_checked, outcome.matched));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = all && elapsed < 30.0;
    report(5, "DUDE equivalence", pass, format!("{}; {elapsed:.2}s", lines.join("; ")));
    assert!(pass);
}

fn image_config(channel: &str, k: &[usize]) -> ExperimentConfig {
    serde_json::from_value(serde_json::json!({
        "source": {"kind": "test-image"},
        "channel": channel,
        "range": [0.0, 255.0],
        "k_values": k,
        "seed": 5,
        "pipeline": {"context_delta": 17.0, "genie": false}
    }))
    .unwrap()
}

#[test]
fn image_awgn_direction() {
    let start = Instant::now();
    let out = run_experiment(&image_config("awgn:sigma=20", &[0, 1])).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let row = |k| out.rows.iter().find(|r| r.k == k).unwrap();
    let (r0, r1) = (row(0), row(1));
    let pass = r0.rmse_denoised < r0.rmse_noisy && r1.rmse_denoised <= r0.rmse_denoised + 0.5 && elapsed < 600.0;
    report(
        6,
        "image AWGN",
        pass,
        format!(
            "noisy {:.3}, k=0 {:.3}, k=1 {:.3}, {elapsed:.1}s",
            r0.rmse_noisy, r0.rmse_denoised, r1.rmse_denoised
        ),
    );
    assert!(pass);
}

#[test]
fn image_rayleigh() {
    let out = run_experiment(&image_config("rayleigh:slope=0.13671875", &[0])).unwrap();
    let r = &out.rows[0];
    let pass = r.rmse_denoised <= r.rmse_noisy / 2.0;
    report(
        7,
        "image Rayleigh",
        pass,
        format!("noisy {:.3}, denoised {:.3}", r.rmse_noisy, r.rmse_denoised),
    );
    assert!(pass);
}

fn envelope_concavity() -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = rng.random_range(2..12);
        let support: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
        let draw = |rng: &mut ChaCha8Rng| {
            let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect::<Vec<f64>>()
        };
        let (p, q) = (draw(&mut rng), draw(&mut rng));
        let lambda = rng.random::<f64>();
        let loss = if rng.random::<bool>() {
            LossFunction::squared(0.0, 1.0)
        } else {
            LossFunction::absolute(0.0, 1.0)
        };
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let u = |w: &[f64]| bayes_envelope_with(&support, w, &support, &loss).0;
        let slack = lambda * u(&p) + (1.0 - lambda) * u(&q) - u(&mix);
        worst = worst.max(slack);
        if slack > 1e-9 {
            violations += 1;
        }
    }
    (violations, worst)
}

fn partitions_exact() -> usize {
    let mut bad = 0;
    for k in 0..=5usize {
        let width = 2 * k + 1;
        for n in width..=1000 {
            let plan = partition_subsequences(n, k).unwrap();
            let mut seen = vec![0u8; n + 1];
            let mut ok = plan.len() == width;
            for sub in plan.subsequences() {
                ok &= sub.windows(2).all(|w| w[1] - w[0] == width);
                for &c in sub {
                    seen[c] += 1;
                }
            }
            ok &= (1..=n).all(|c| seen[c] == u8::from(c > k && c + k <= n));
            if !ok {
                bad += 1;
            }
        }
        if n_too_short_is_rejected(k) {
            continue;
        }
        bad += 1;
    }
    bad
}

fn n_too_short_is_rejected(k: usize) -> bool {
    (1..2 * k + 1).all(|n| partition_subsequences(n, k).is_err())
}

fn normalization_failures() -> Vec<String> {
    let mut failures = Vec::new();
    let channels = [
        ChannelModel::awgn(20.0, 0.0, 255.0).unwrap(),
        ChannelModel::multiplicative(1.0, 0.2, 0.0, 255.0).unwrap(),
        ChannelModel::rayleigh(35.0 / 256.0, 0.0, 255.0).unwrap(),
        ChannelModel::awgn(0.3, 0.0, 1.0).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    for ch in &channels {
        let (lo, hi) = ch.input_range();
        for _ in 0..100 {
            let x = lo + (hi - lo) * rng.random::<f64>();
            let (y0, y1) = ch.conditional_support(x);
            let q = UniformAxis::spanning(y0, y1, 20_001).unwrap();
            let mass = q.integrate_fn(|y| ch.pdf(x, y));
            if (mass - 1.0).abs() > 1e-6 {
                failures.push(format!("{:?} at x={x}: {mass}", ch.kind()));
                break;
            }
        }
        let quantizer = OutputQuantizer::centered(lo, (hi - lo) / 7.0, 8).unwrap();
        let symbols: Vec<f64> = (0..8).map(|i| lo + i as f64 * (hi - lo) / 7.0).collect();
        let matrix = ch.discretize(&symbols, &quantizer).unwrap();
        for i in 0..8 {
            let s: f64 = matrix.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                failures.push(format!("{:?} matrix row {i}: {s}", ch.kind()));
            }
        }
    }
    for kind in [KernelKind::Gaussian, KernelKind::Epanechnikov, KernelKind::Box] {
        let kernel = Kernel::new(kind, 1).unwrap();
        let steps = 2_000_000;
        let r = kernel.radius();
        let du = 2.0 * r / steps as f64;
        let mass: f64 = (0..=steps)
            .map(|i| {
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                w * du * kernel.eval_1d(-r + i as f64 * du)
            })
            .sum();
        if (mass - 1.0).abs() > 1e-6 {
            failures.push(format!("{kind:?} kernel mass {mass}"));
        }
        for (n, seed) in [(50usize, 1u64), (5000, 2)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<f64> = (0..n).map(|_| 3.0 * rng.random::<f64>().powi(3)).collect();
            let h = silverman_bandwidth(&samples, 1, 3.0).unwrap().h;
            let axes = covering_grid(&samples, 1, h, 512).unwrap();
            for method in [KdeMethod::Direct, KdeMethod::Binned] {
                let f = kde(&samples, &kernel, h, &axes, method).unwrap();
                if (f.integral() - 1.0).abs() > 1e-4 {
                    failures.push(format!("{kind:?} {method:?} kde mass {}", f.integral()));
                }
            }
        }
    }
    failures
}

fn outputs_identical() -> bool {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let config: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "source": {"kind": "markov-chain", "states": [0.1, 0.5, 0.9], "switch": 0.05},
            "channel": "awgn:sigma=0.25",
            "range": [0.0, 1.0],
            "n_values": [2000, 5000],
            "k_values": [0, 1],
            "seeds": 2,
            "seed": 83,
            "pipeline": {"context_grid_points": 24, "tuple_iterations": 100},
            "output_dir": dir.path(),
        }))
        .unwrap();
        run_experiment(&config).unwrap();
        let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
        (read("metrics.csv"), read("summary.json"))
    };
    run() == run()
}

#[test]
fn property_suites() {
    let (violations, worst) = envelope_concavity();
    let partition_errors = partitions_exact();
    let norm = normalization_failures();
    let identical = outputs_identical();
    let pass = violations == 0 && partition_errors == 0 && norm.is_empty() && identical;
    report(
        8,
        "property suites",
        pass,
        format!(
            "concavity violations {violations} (worst slack {worst:.1e}), partition errors {partition_errors}, \
             normalization {norm:?}, byte-identical {identical}"
        ),
    );
    assert!(pass);
}
