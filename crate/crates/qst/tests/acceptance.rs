//! Acceptance gate: one test per release criterion, each printing a PASS line
//! with the measured numbers (run with `--nocapture` to see them).
//!
//! The fine-grid pilot and the large Monte Carlo batch are shared across
//! criteria through `OnceLock` fixtures so the expensive work runs once.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::process::Command;
use std::sync::OnceLock;

use rayon::prelude::*;

use qst::chernoff::chernoff_majorant;
use qst::levelcount::optimize_level;
use qst::mesh::StepCDF;
use qst::report::read_step_cdf_csv;
use qst::simulator::{
    enumerate_trunc_s, sample_tn, sample_trunc_s, stream_key, SplitMix64, TreeLabels,
};
use qst::verify::{ks_distance, run_all, VerifyLevel};

const MEAN_FLOOR: f64 = 3.38629; // 2 + 2 ln 2
const PRIOR_MEAN_UPPER: f64 = 9.5185;
const BATCH_SEED: u64 = 20260823;

struct Pilot {
    u_bounds: Vec<f64>,
    final_cdf: StepCDF,
    printed_u: f64,
}

fn run_pilot(n: &str, m: &str) -> Pilot {
    let dir = tempfile::tempdir().unwrap();
    let cdf_path = dir.path().join("cdf.csv");
    let trace_path = dir.path().join("trace.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_qst"))
        .args([
            "mesh-bound", "--A", "10", "--N", n, "--M", m, "--iterations", "50",
            "--out-path", cdf_path.to_str().unwrap(),
            "--trace-path", trace_path.to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed_u: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    let u_bounds: Vec<f64> = std::fs::read_to_string(&trace_path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("m,"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let final_cdf =
        read_step_cdf_csv(BufReader::new(std::fs::File::open(&cdf_path).unwrap())).unwrap();
    Pilot { u_bounds, final_cdf, printed_u }
}

fn coarse_pilot() -> &'static Pilot {
    static PILOT: OnceLock<Pilot> = OnceLock::new();
    PILOT.get_or_init(|| run_pilot("100", "100"))
}

fn fine_pilot() -> &'static Pilot {
    static PILOT: OnceLock<Pilot> = OnceLock::new();
    PILOT.get_or_init(|| run_pilot("10000", "10000"))
}

/// 10^5 replicates of T_n/n at n = 10^6, in replicate-index order.
fn big_batch() -> &'static Vec<f64> {
    static BATCH: OnceLock<Vec<f64>> = OnceLock::new();
    BATCH.get_or_init(|| {
        (0..100_000u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = SplitMix64::new(stream_key(BATCH_SEED, i));
                sample_tn(1_000_000, &mut rng) as f64 / 1e6
            })
            .collect()
    })
}

#[test]
fn criterion_1_coarse_pilot() {
    let pilot = coarse_pilot();
    let u50 = pilot.u_bounds[49];
    assert!((4.29..=4.40).contains(&u50), "U_50 = {u50}");
    assert!((pilot.printed_u - u50).abs() < 1e-4);
    println!("ACCEPTANCE 1 PASS: coarse pilot U_50 = {u50:.6}");
}

#[test]
fn criterion_2_fine_pilot() {
    let pilot = fine_pilot();
    let u50 = pilot.u_bounds[49];
    assert!((4.04..=4.15).contains(&u50), "U_50 = {u50}");
    for w in pilot.u_bounds[5..].windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "bounds increased late: {w:?}");
    }
    println!("ACCEPTANCE 2 PASS: fine pilot U_50 = {u50:.6}, nonincreasing after iteration 5");
}

#[test]
fn criterion_3_soundness_floor() {
    for (name, pilot) in [("coarse", coarse_pilot()), ("fine", fine_pilot())] {
        for (i, &u) in pilot.u_bounds.iter().enumerate() {
            assert!(u >= MEAN_FLOOR, "{name} U_{} = {u} below floor", i + 1);
            if i >= 5 {
                assert!(u <= PRIOR_MEAN_UPPER, "{name} U_{} = {u} above prior bound", i + 1);
            }
        }
    }
    println!(
        "ACCEPTANCE 3 PASS: all bounds in [{MEAN_FLOOR}, {PRIOR_MEAN_UPPER}] (upper after iteration 5)"
    );
}

#[test]
fn criterion_4_monte_carlo_consistency() {
    let samples = &big_batch()[..10_000];
    let reps = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / reps;
    let fine = fine_pilot();
    let u50 = fine.u_bounds[49];
    assert!(mean >= 3.386 && mean <= u50 + 0.05, "mean {mean} vs U_50 {u50}");

    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut worst = f64::NEG_INFINITY;
    for (k, &l) in fine.final_cdf.values.iter().enumerate() {
        let x = fine.final_cdf.x_grid[k];
        let f_hat = sorted.partition_point(|&s| s <= x) as f64 / reps;
        let se = (f_hat * (1.0 - f_hat) / reps).sqrt();
        // Rule-of-three floor where the empirical CDF is still 0.
        let slack = (3.0 * se).max(3.0 / reps);
        assert!(l <= f_hat + slack, "mesh {l} above ECDF {f_hat} at x={x}");
        worst = worst.max(l - f_hat);
    }
    println!(
        "ACCEPTANCE 4 PASS: mean T_n/n = {mean:.4} in [3.386, {:.4}], ECDF dominates mesh \
         (worst gap {worst:.2e})",
        u50 + 0.05
    );
}

#[test]
fn criterion_5_tail_ordering() {
    let mut sorted = big_batch().clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let reps = sorted.len() as f64;
    let mut report = Vec::new();
    for t in [6.0f64, 7.0, 8.0] {
        let above = sorted.len() - sorted.partition_point(|&s| s <= t);
        let p_hat = above as f64 / reps;
        let se = (p_hat * (1.0 - p_hat) / reps).sqrt();
        let majorant = chernoff_majorant(t).unwrap().majorant;
        assert!(
            p_hat + 3.0 * se <= majorant,
            "t={t}: {p_hat} + 3*{se} above {majorant}"
        );
        report.push(format!("t={t}: {p_hat:.2e} <= {majorant:.2e}"));
    }
    println!("ACCEPTANCE 5 PASS: {}", report.join(", "));
}

#[test]
fn criterion_6_rate_bracket() {
    for t in [20.0f64, 50.0, 100.0, 200.0] {
        let lower = chernoff_majorant(t).unwrap().rate_lower;
        let upper = optimize_level(t).unwrap().rate_upper_numeric;
        assert!(lower <= upper, "t={t}: {lower} > {upper}");
        let core = t * t.ln();
        let corridor = 2.0 * t * t.ln().ln();
        assert!((lower - core).abs() <= corridor, "t={t}: lower off corridor");
        assert!((upper - core).abs() <= corridor, "t={t}: upper off corridor");
    }
    println!("ACCEPTANCE 6 PASS: rate bounds bracket t ln t within 2 t ln ln t for four t values");
}

#[test]
fn criterion_7_small_instance_oracles() {
    let mut rng = SplitMix64::new(77);
    for _ in 0..1000 {
        assert_eq!(sample_tn(2, &mut rng), 1);
    }
    let reps = 300_000u64;
    let sum: u64 = (0..reps).map(|_| sample_tn(3, &mut rng)).sum();
    let mean = sum as f64 / reps as f64;
    let se = (2.0f64 / 9.0 / reps as f64).sqrt();
    assert!((mean - 8.0 / 3.0).abs() < 3.0 * se, "E[T_3] estimate {mean}");

    for m in 0..=14u32 {
        for i in 0..1000u64 {
            let labels = TreeLabels::for_replicate(101, i);
            assert_eq!(
                sample_trunc_s(m, 0.0, &labels).value,
                enumerate_trunc_s(m, &labels),
                "m={m} tree={i}"
            );
        }
    }

    // Distributional recursion: a fresh draw of the depth-(m+1) supremum
    // against one recursion step over independent depth-m pairs.
    let reps = 20_000u64;
    for m in [3u32, 6, 9] {
        let tag = u64::from(m) << 32;
        let mut direct: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|i| sample_trunc_s(m + 1, 0.0, &TreeLabels::for_replicate(301 ^ tag, i)).value)
            .collect();
        let mut recursed: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|i| {
                let x1 = sample_trunc_s(m, 0.0, &TreeLabels::for_replicate(401 ^ tag, i)).value;
                let x2 = sample_trunc_s(m, 0.0, &TreeLabels::for_replicate(501 ^ tag, i)).value;
                let u = SplitMix64::new(stream_key(601 ^ tag, i)).unit();
                1.0 + (u * x1).max((1.0 - u) * x2)
            })
            .collect();
        direct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        recursed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ks_distance(&direct, &recursed);
        let threshold = 1.63 * (2.0 / reps as f64).sqrt();
        assert!(d <= threshold, "m={m}: KS {d} above {threshold}");
    }
    println!(
        "ACCEPTANCE 7 PASS: T_2 exact, E[T_3] = {mean:.5}, branch-and-bound exact to m=14, \
         recursion KS ok for m in {{3,6,9}}"
    );
}

#[test]
fn criterion_8_invariant_suites() {
    let results = run_all(VerifyLevel::Full, 424242);
    let mut lines = BTreeMap::new();
    for r in &results {
        lines.insert(r.name, r.passed);
        assert!(r.passed, "{}: {}", r.name, r.detail);
    }
    println!(
        "ACCEPTANCE 8 PASS: {} invariant groups under the full verification level ({:?})",
        results.len(),
        lines.keys().collect::<Vec<_>>()
    );
}
