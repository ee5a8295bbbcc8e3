use std::path::Path;
use std::process::{Command, Output};

use udenoise_core::channels::ChannelModel;
use udenoise_core::io::{load_sequence, save_sequence};
use udenoise_core::rng::SeedStream;

fn udenoise(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_udenoise"))
        .args(args)
        .current_dir(dir)
        .env_remove("UDENOISE_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn noisy(x: &[f64], channel: &ChannelModel, seed: u64) -> Vec<f64> {
    let mut rng = SeedStream::new(seed).rng(0);
    x.iter().map(|&v| channel.sample(v, &mut rng).unwrap()).collect()
}

#[test]
fn no_arguments_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = udenoise(&[], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("Usage: udenoise"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = udenoise(&["density", "--in", "a.csv", "--out", "f.csv", "--frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--frobnicate"));

    let out = udenoise(
        &["density", "--in", "a.csv", "--out", "f.csv", "--bandwidth", "0.1", "--histogram", "0.2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("--bandwidth") && err.contains("--histogram"), "{err}");

    let out = udenoise(&["denoise", "--in", "a.csv", "--channel", "awgn:sigma=1", "--out", "b.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--range"));

    let out = udenoise(&["invert", "--density", "f.csv", "--channel", "laplace:b=1", "--range", "0:1", "--out", "p.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("laplace"));

    let out = Command::new(env!("CARGO_BIN_EXE_udenoise"))
        .args(["benchmark", "--config", "c.json"])
        .env("UDENOISE_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = udenoise(&["density", "--in", "missing.csv", "--out", "f.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing.csv"));
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let expected: [(&str, &[&str]); 5] = [
        ("density", &["--in", "--kernel", "--bandwidth", "--histogram", "--grid-points", "--out", "--threads", "--seed"]),
        ("invert", &["--density", "--channel", "--range", "--Delta", "--delta", "--kernel", "--solver", "--pivot", "--out"]),
        ("denoise", &["--in", "--channel", "--range", "--loss", "--k", "--Delta", "--delta", "--context-Delta", "--out", "--metrics"]),
        ("benchmark", &["--config", "--out-dir"]),
        ("dude-check", &["--in", "--M", "--alpha", "--k", "--channel", "--refinement"]),
    ];
    for (cmd, flags) in expected {
        let out = udenoise(&[cmd, "--help"], dir.path());
        assert_eq!(out.status.code(), Some(0));
        let text = stdout(&out);
        for flag in flags {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
        assert!(text.contains("[default: ") || cmd == "benchmark", "{cmd} --help shows no defaults");
    }
}

#[test]
fn near_noiseless_denoise_reproduces_quantized_input() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<f64> = [0.25, 0.5, 0.75, 0.75, 0.25].iter().cycle().take(3000).cloned().collect();
    let channel = ChannelModel::awgn(1e-3, 0.0, 1.0).unwrap();
    save_sequence(&noisy(&x, &channel, 3), &dir.path().join("noisy.csv")).unwrap();
    let out = udenoise(
        &[
            "denoise", "--in", "noisy.csv", "--channel", "awgn:sigma=0.001", "--range", "0:1", "--out", "clean.csv",
            "--metrics", "m.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(load_sequence(&dir.path().join("clean.csv")).unwrap(), x);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(m["n"], 3000);
}

#[test]
fn image_denoise_with_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (24, 20);
    let clean: Vec<f64> = (0..w * h).map(|i| if (i % w) < w / 2 { 64.0 } else { 192.0 }).collect();
    let img = udenoise_core::io::Image::new(w, h, 255, clean.clone()).unwrap();
    img.save(&dir.path().join("clean.pgm")).unwrap();
    let channel = ChannelModel::awgn(20.0, 0.0, 255.0).unwrap();
    let y = udenoise_core::io::Image::new(w, h, 255, noisy(&clean, &channel, 4)).unwrap();
    y.save(&dir.path().join("noisy.pgm")).unwrap();
    let out = udenoise(
        &["denoise", "--in", "noisy.pgm", "--channel", "awgn:sigma=20", "--clean", "clean.pgm", "--out", "d.pgm"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let m: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let (noisy_rmse, denoised) = (m["rmse-noisy"].as_f64().unwrap(), m["rmse-denoised"].as_f64().unwrap());
    assert!(denoised < noisy_rmse, "{denoised} vs {noisy_rmse}");
    let back = udenoise_core::io::Image::load(&dir.path().join("d.pgm")).unwrap();
    assert_eq!((back.width, back.height), (w, h));
}

#[test]
fn density_then_invert_recovers_two_points() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<f64> = [0.25, 0.75].iter().cycle().take(20_000).cloned().collect();
    let channel = ChannelModel::awgn(0.1, 0.0, 1.0).unwrap();
    save_sequence(&noisy(&x, &channel, 5), &dir.path().join("y.bin")).unwrap();
    let out = udenoise(&["density", "--in", "y.bin", "--kernel", "gaussian", "--bandwidth", "auto", "--out", "f.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = udenoise(
        &[
            "invert", "--density", "f.csv", "--channel", "awgn:sigma=0.1", "--range", "0:1", "--Delta", "0.03125",
            "--delta", "0.00390625", "--out", "pmf.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("pmf.csv")).unwrap();
    let masses: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (s, m) = l.split_once(',').unwrap();
            (s.parse().unwrap(), m.parse().unwrap())
        })
        .collect();
    assert_eq!(masses.len(), 33);
    let near = |c: f64| masses.iter().filter(|(s, _)| (s - c).abs() < 0.07).map(|(_, m)| m).sum::<f64>();
    assert!(near(0.25) > 0.45 && near(0.75) > 0.45, "{masses:?}");
    assert!(dir.path().join("pmf.csv.json").is_file());
}

#[test]
fn dude_check_matches_on_generated_instance() {
    let dir = tempfile::tempdir().unwrap();
    let channel = ChannelModel::awgn(0.25, 0.0, 0.75).unwrap();
    let mut rng = SeedStream::new(6).rng(1);
    let x: Vec<f64> = (0..4000).map(|i| 0.25 * ((i * 7 + i / 13) % 4) as f64).collect();
    let y: Vec<f64> = x.iter().map(|&v| channel.sample(v, &mut rng).unwrap()).collect();
    save_sequence(&y, &dir.path().join("seq.csv")).unwrap();
    let out = udenoise(&["dude-check", "--in", "seq.csv", "--M", "4", "--alpha", "0.25", "--k", "0"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).lines().any(|l| l == "match: true"), "{}", stdout(&out));
}

#[test]
fn benchmark_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "source": {"kind": "two-point", "low": 0.2, "high": 0.8, "p": 0.3},
        "channel": "awgn:sigma=0.3",
        "range": [0.0, 1.0],
        "n_values": [1500],
        "k_values": [0, 1],
        "seeds": 2,
        "pipeline": {"context_grid_points": 24, "tuple_iterations": 60, "genie_replications": 2}
    });
    std::fs::write(dir.path().join("exp.json"), config.to_string()).unwrap();
    let run = |seed: &str, threads: &str, out: &str| {
        let o = udenoise(
            &["--threads", threads, "--seed", seed, "benchmark", "--config", "exp.json", "--out-dir", out],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (stdout(&o), std::fs::read(dir.path().join(out).join("metrics.csv")).unwrap())
    };
    let a = run("9", "1", "a");
    let b = run("9", "2", "b");
    assert_eq!(a, b);
    assert_ne!(a.1, run("10", "1", "c").1);
}
