//! Acceptance criteria 1-10, one PASS/FAIL line each. Exits non-zero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spi_core::detection::{MonitorConfig, Provenance, SourceConfig};
use spi_core::experiment::{preset, run_sweep, ExperimentResult, SweepConfig};
use spi_core::metrics::{format_db, mse, psnr_from_mse};
use spi_core::patterns::{random_pattern_set, PatternSet};
use spi_core::prelude::*;

type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn naive_reconstruction(patterns: &PatternSet, bucket: &[f64]) -> Vec<f64> {
    let k = patterns.count();
    (0..patterns.pixels())
        .map(|x| {
            let mut mean = 0.0;
            for i in 0..k {
                mean += patterns.pattern(i)[x] as f64;
            }
            mean /= k as f64;
            let mut acc = 0.0;
            for (i, b) in bucket.iter().enumerate() {
                acc += (patterns.pattern(i)[x] as f64 - mean) * b;
            }
            acc / k as f64
        })
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2020);
    let mut worst = 0.0f64;
    for instance in 0..20 {
        let patterns = random_pattern_set(8, 64, rng.random()).unwrap();
        let target = ImageGrid::square(8, (0..64).map(|_| rng.random::<f64>()).collect()).unwrap();
        let measured = measure_cgi(
            &target,
            &patterns,
            &DisturbanceModel::global(rng.random_range(-10.0..10.0)),
            &SourceConfig::default(),
            instance,
        )
        .unwrap()
        .bucket();
        let random: Vec<f64> = (0..64).map(|_| rng.random_range(-100.0..100.0)).collect();
        for bucket in [measured, random] {
            let series = MeasurementSeries::new(
                bucket.clone(),
                None,
                Method::Cgi,
                Provenance {
                    seed: instance,
                    model_digest: String::new(),
                },
            );
            let got = reconstruct(&patterns, &series).unwrap();
            let want = naive_reconstruction(&patterns, &bucket);
            // pixels that nearly cancel carry the oracle's own rounding, so
            // errors are relative to the image peak
            let peak = want.iter().fold(f64::MIN_POSITIVE, |m, w| m.max(w.abs()));
            for (g, w) in got.grid.values().iter().zip(&want) {
                worst = worst.max((g - w).abs() / peak);
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max error relative to peak {worst:.2e} (limit 1e-12)"),
    )
}

fn letters_64() -> (ImageGrid, PatternSet) {
    (
        builtin_target("letters", 64).unwrap(),
        hadamard_pattern_set(64).unwrap(),
    )
}

fn exact_recovery() -> Outcome {
    let (target, patterns) = letters_64();
    let source = SourceConfig::default();
    let series = measure_cgi(&target, &patterns, &DisturbanceModel::none(), &source, 1).unwrap();
    let rec = reconstruct(&patterns, &series).unwrap();
    let scale = source.intensity_i0 / 4.0;
    let mut worst = 0.0f64;
    for (&o, &t) in rec.grid.values().iter().zip(target.values()).skip(1) {
        let want = source.intensity_i0 * t / 4.0;
        // zero-valued pixels are measured against the image scale
        worst = worst.max((o - want).abs() / if want == 0.0 { scale } else { want.abs() });
    }
    let gray = normalize_to_gray(&rec).unwrap();
    let p = psnr(&gray, &to_gray_levels(&target), 8, &rec.excluded).unwrap();
    let pass = worst <= 1e-10 && rec.excluded == [0] && (p == f64::INFINITY || p >= 120.0);
    outcome(
        pass,
        format!("max relative error {worst:.2e}, psnr {}", format_db(p)),
    )
}

fn cgi_spc_equivalence() -> Outcome {
    let (target, patterns) = letters_64();
    let none = DisturbanceModel::none();
    let source = SourceConfig::default();
    let cgi = measure_cgi(&target, &patterns, &none, &source, 1).unwrap();
    let spc = measure_spc(
        &target,
        &patterns,
        &none,
        &source,
        &MonitorConfig::default(),
        1,
    )
    .unwrap();
    let gc = normalize_to_gray(&reconstruct(&patterns, &cgi).unwrap()).unwrap();
    let gs = normalize_to_gray(&reconstruct(&patterns, &spc).unwrap()).unwrap();
    let worst = gc
        .values()
        .iter()
        .zip(gs.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    outcome(
        worst <= 1e-9,
        format!("max abs difference {worst:.2e} gray levels (limit 1e-9)"),
    )
}

fn quiet(config: SweepConfig) -> SweepConfig {
    SweepConfig {
        write_images: false,
        out_dir: None,
        ..config
    }
}

fn means(result: &ExperimentResult, method: Method) -> Vec<f64> {
    result
        .aggregates
        .iter()
        .filter(|a| a.method == method)
        .map(|a| a.psnr_mean_db)
        .collect()
}

fn non_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

fn render(v: &[f64]) -> String {
    v.iter()
        .map(|&x| format_db(x))
        .collect::<Vec<_>>()
        .join(" ")
}

fn fig2_ordering(fig2: &ExperimentResult) -> Outcome {
    let cgi = means(fig2, Method::Cgi);
    let spc = means(fig2, Method::Spc);
    let ordered = cgi.len() == 6 && spc.len() == 6 && spc.iter().zip(&cgi).all(|(s, c)| s > c);
    let pass = ordered && non_decreasing(&cgi) && non_decreasing(&spc);
    outcome(
        pass,
        format!("cgi [{}] spc [{}]", render(&cgi), render(&spc)),
    )
}

fn local_vs_global(fig2: &ExperimentResult) -> Outcome {
    let local = run_sweep(&quiet(SweepConfig {
        sweep_values: vec![-5.0, 0.0],
        ..preset("fig3").unwrap()
    }))
    .unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for eps in [-5.0, 0.0] {
        for method in [Method::Cgi, Method::Spc] {
            let l = local.mean_psnr(eps, method).unwrap();
            let g = fig2.mean_psnr(eps, method).unwrap();
            pass &= l <= g;
            detail.push(format!(
                "{method}@{eps}dB local {} <= global {}",
                format_db(l),
                format_db(g)
            ));
        }
    }
    outcome(pass, detail.join(", "))
}

fn fig4_trend() -> Outcome {
    let fig4 = run_sweep(&quiet(preset("fig4").unwrap())).unwrap();
    let cgi = means(&fig4, Method::Cgi);
    let spc = means(&fig4, Method::Spc);
    let falls = cgi[5] < cgi[0] && spc[5] < spc[0];
    let ordered = spc.iter().zip(&cgi).all(|(s, c)| s >= c);
    outcome(
        falls && ordered,
        format!("cgi [{}] spc [{}]", render(&cgi), render(&spc)),
    )
}

fn correction_exactness(fig5: &ExperimentResult) -> Outcome {
    let baseline = run_sweep(&quiet(SweepConfig {
        methods: vec![Method::Spc],
        ..preset("fig2")
            .map(|c| SweepConfig {
                disturbance: DisturbanceModel::none(),
                sweep_values: vec![0.0],
                ..c
            })
            .unwrap()
    }))
    .unwrap();
    let case_c = 3.0;
    let mut exact = true;
    for seed in 1..=5u64 {
        let row = |result: &ExperimentResult, value: f64, method: Method| {
            result
                .rows
                .iter()
                .find(|r| r.sweep_value == value && r.method == method && r.seed == seed)
                .unwrap()
                .psnr_db
        };
        let base = row(&baseline, 0.0, Method::Spc);
        let corrected = row(fig5, case_c, Method::SpcCorrected);
        exact &= corrected >= base - 0.01;
    }
    let corrected = fig5.mean_psnr(case_c, Method::SpcCorrected).unwrap();
    let raw = fig5.mean_psnr(case_c, Method::Spc).unwrap();
    let base = baseline.mean_psnr(0.0, Method::Spc).unwrap();
    let margin = corrected - raw;
    outcome(
        exact && margin >= 3.0,
        format!(
            "corrected {} vs noiseless {} (per seed, -0.01 dB), margin over spc {} dB (limit 3)",
            format_db(corrected),
            format_db(base),
            format_db(margin)
        ),
    )
}

fn correction_non_harm(fig5: &ExperimentResult) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (case, label) in [(1.0, "a"), (2.0, "b"), (4.0, "d")] {
        let raw = fig5.mean_psnr(case, Method::Spc).unwrap();
        let corrected = fig5.mean_psnr(case, Method::SpcCorrected).unwrap();
        pass &= corrected >= raw - 0.5;
        detail.push(format!(
            "({label}) {} -> {}",
            format_db(raw),
            format_db(corrected)
        ));
    }
    outcome(pass, detail.join(", "))
}

fn run_fig2_cli(dir: &Path, threads: &str) -> (Vec<u8>, Vec<u8>) {
    let status = Command::new(env!("CARGO_BIN_EXE_spi"))
        .args([
            "preset",
            "fig2",
            "--seeds",
            "1,2,3",
            "--threads",
            threads,
            "--out",
        ])
        .arg(dir)
        .env_remove("SPI_OUT_DIR")
        .output()
        .expect("spawn spi");
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    (
        fs::read(dir.join("fig2_rows.csv")).unwrap(),
        fs::read(dir.join("fig2_aggregate.csv")).unwrap(),
    )
}

fn psnr_by_row(csv: &[u8]) -> BTreeMap<String, f64> {
    String::from_utf8_lossy(csv)
        .lines()
        .skip(1)
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            (fields[..4].join(","), fields[4].parse::<f64>().unwrap())
        })
        .collect()
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let first = run_fig2_cli(&root.path().join("a"), "1");
    let second = run_fig2_cli(&root.path().join("b"), "1");
    let eight = run_fig2_cli(&root.path().join("c"), "8");
    let identical = first == second;
    let (one, many) = (psnr_by_row(&first.0), psnr_by_row(&eight.0));
    let mut worst = 0.0f64;
    let same_rows = one.len() == 36 && one.keys().eq(many.keys());
    for (key, a) in &one {
        let b = many[key];
        if a != &b {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        identical && same_rows && worst <= 1e-9,
        format!(
            "repeat byte-identical: {identical}, 1 vs 8 threads max |dPSNR| {worst:.2e} dB over {} rows",
            one.len()
        ),
    )
}

fn metric_examples() -> Outcome {
    let full = ImageGrid::filled(8, 8, 255.0);
    let zero = ImageGrid::filled(8, 8, 0.0);
    let m = mse(&full, &zero, &[]).unwrap();
    let at_max = psnr_from_mse(m, 8);
    let at_one = psnr_from_mse(1.0, 8);
    let at_zero = psnr(&full, &full, 8, &[]).unwrap();
    let pass = m == 65025.0
        && at_max.abs() <= 1e-12
        && (at_one - 48.1308).abs() <= 1e-4
        && format_db(at_zero) == "inf";
    outcome(
        pass,
        format!(
            "mse 65025 -> {} dB, mse 1 -> {} dB, mse 0 -> {}",
            format_db(at_max),
            format_db(at_one),
            format_db(at_zero)
        ),
    )
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            o.pass = false;
            o.detail.push_str(&format!("; exceeded {limit:?}"));
        }
    }
    (o, elapsed)
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let start = Instant::now();
    let fig2 = run_sweep(&quiet(preset("fig2").unwrap())).unwrap();
    let fig2_elapsed = start.elapsed();
    let fig5 = run_sweep(&quiet(preset("fig5").unwrap())).unwrap();

    let criteria: Vec<(&str, Option<Duration>, Check)> = vec![
        ("oracle equivalence", secs(1), Box::new(oracle_equivalence)),
        ("exact recovery", secs(10), Box::new(exact_recovery)),
        (
            "cgi/spc equivalence",
            secs(20),
            Box::new(cgi_spc_equivalence),
        ),
        (
            "global ordering and monotonicity",
            None,
            Box::new(|| {
                let mut o = fig2_ordering(&fig2);
                o.detail
                    .push_str(&format!("; sweep took {:.1}s", fig2_elapsed.as_secs_f64()));
                if fig2_elapsed > Duration::from_secs(180) {
                    o.pass = false;
                    o.detail.push_str(", exceeded 180s");
                }
                o
            }),
        ),
        (
            "local at least as severe as global",
            secs(120),
            Box::new(|| local_vs_global(&fig2)),
        ),
        ("fluctuation trend", None, Box::new(fig4_trend)),
        (
            "correction exactness",
            None,
            Box::new(|| correction_exactness(&fig5)),
        ),
        (
            "correction non-harm",
            None,
            Box::new(|| correction_non_harm(&fig5)),
        ),
        ("determinism", None, Box::new(determinism)),
        ("metric examples", None, Box::new(metric_examples)),
    ];

    let mut failures = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let (o, elapsed) = timed(limit, check);
        failures += usize::from(!o.pass);
        println!(
            "criterion {:>2} {}: {} ({:.1}s) {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            elapsed.as_secs_f64(),
            o.detail
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
