#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tailrisk")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(
        o.status.success(),
        "tailrisk {args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn normal(rng: &mut StdRng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Minute-by-minute prices for `days` sessions of 390 minutes with a
/// persistent daily volatility level.
pub fn write_intraday(path: &Path, days: usize, seed: u64) -> PathBuf {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    writeln!(f, "date,minute,price,high,low").unwrap();
    let start = chrono::NaiveDate::from_ymd_opt(2010, 1, 4).unwrap();
    let mut logp = 100f64.ln();
    let mut lvol = 0.0f64;
    for d in 0..days {
        lvol = 0.95 * lvol + 0.25 * normal(&mut rng);
        let sd = 0.01 * lvol.exp() / 390f64.sqrt();
        let date = start + chrono::Duration::days(d as i64);
        logp += 0.004 * normal(&mut rng);
        for m in 0..=390u32 {
            let prev = logp;
            if m > 0 {
                logp += sd * normal(&mut rng);
            }
            let wiggle = sd * 0.3 * rng.random::<f64>();
            let hi = prev.max(logp) + wiggle;
            let lo = prev.min(logp) - wiggle;
            writeln!(f, "{date},{m},{},{},{}", logp.exp(), hi.exp(), lo.exp()).unwrap();
        }
    }
    f.flush().unwrap();
    path.to_path_buf()
}

/// Every output listed in `dir/manifest.json`.
pub fn manifest_outputs(dir: &Path) -> Vec<String> {
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

/// Replays `dir/manifest.json` into `dir2` and lists outputs that differ.
pub fn replay_diff(dir: &Path, dir2: &Path) -> Vec<String> {
    let manifest = dir.join("manifest.json");
    run_ok(&["replay", manifest.to_str().unwrap(), "--out", dir2.to_str().unwrap()]);
    let a = manifest_outputs(dir);
    let b = manifest_outputs(dir2);
    let mut diff = Vec::new();
    if a != b {
        diff.push(format!("output lists differ: {a:?} vs {b:?}"));
    }
    for name in &a {
        if std::fs::read(dir.join(name)).ok() != std::fs::read(dir2.join(name)).ok() {
            diff.push(name.clone());
        }
    }
    diff
}
