//! Monte Carlo cross-checks that pit the samplers against closed-form
//! expectations and the analytic tail bounds, plus file-format roundtrips.

use std::io::BufReader;

use qst::chernoff::chernoff_majorant;
use qst::simulator::{
    ecdf_tail, read_samples_binary, run_batch, write_samples_binary, write_samples_csv,
    SimConfig, SimKind,
};

#[test]
fn t3_batch_mean_matches_enumeration() {
    let batch = run_batch(&SimConfig {
        kind: SimKind::TnOverN { n: 3 },
        replicates: 300_000,
        seed: 42,
    })
    .unwrap();
    // T_3 is 2 w.p. 1/3 and 3 w.p. 2/3; samples come divided by n = 3.
    let mean_t3 = batch.mean * 3.0;
    let se = (2.0f64 / 9.0 / 300_000.0).sqrt();
    assert!((mean_t3 - 8.0 / 3.0).abs() < 3.0 * se, "mean {mean_t3}");
    assert!(batch.samples.iter().all(|&s| s == 2.0 / 3.0 || s == 1.0));
}

#[test]
fn trunc_m1_mean_at_million_replicates() {
    let batch = run_batch(&SimConfig {
        kind: SimKind::TruncatedS { m: 1, prune_epsilon: 0.0 },
        replicates: 1_000_000,
        seed: 1,
    })
    .unwrap();
    assert!((batch.mean - 1.75).abs() < 0.001, "mean {}", batch.mean);
    assert!((batch.variance - 1.0 / 48.0).abs() < 0.001);
}

#[test]
fn trunc_tail_below_majorant() {
    // S^(m) <= S stochastically, so its tail must stay below the Chernoff
    // majorant for S at every threshold.
    let batch = run_batch(&SimConfig {
        kind: SimKind::TruncatedS { m: 25, prune_epsilon: 0.0 },
        replicates: 50_000,
        seed: 9,
    })
    .unwrap();
    for t in [6.0f64, 6.5, 7.0, 8.0] {
        let (p_hat, half) = ecdf_tail(&batch, t);
        let majorant = chernoff_majorant(t).unwrap().majorant;
        assert!(
            p_hat + 1.5 * half <= majorant,
            "t={t}: {p_hat} + {half} vs {majorant}"
        );
    }
}

#[test]
fn tn_tail_matches_trunc_tail_roughly() {
    // T_n/n and S^(m) approximate the same limit from below; their tail
    // estimates at a moderate threshold should agree within a few points.
    let tn = run_batch(&SimConfig {
        kind: SimKind::TnOverN { n: 100_000 },
        replicates: 20_000,
        seed: 3,
    })
    .unwrap();
    let trunc = run_batch(&SimConfig {
        kind: SimKind::TruncatedS { m: 40, prune_epsilon: 0.0 },
        replicates: 20_000,
        seed: 4,
    })
    .unwrap();
    for t in [4.0f64, 5.0, 6.0] {
        let (p1, h1) = ecdf_tail(&tn, t);
        let (p2, h2) = ecdf_tail(&trunc, t);
        assert!(
            (p1 - p2).abs() <= 3.0 * (h1 + h2) + 0.01,
            "t={t}: {p1} vs {p2}"
        );
    }
}

#[test]
fn csv_and_binary_exports_agree() {
    let batch = run_batch(&SimConfig {
        kind: SimKind::TruncatedS { m: 8, prune_epsilon: 0.0 },
        replicates: 500,
        seed: 11,
    })
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let bin_path = dir.path().join("samples.bin");
    let csv_path = dir.path().join("samples.csv");
    write_samples_binary(&batch, std::fs::File::create(&bin_path).unwrap()).unwrap();
    write_samples_csv(&batch, std::fs::File::create(&csv_path).unwrap()).unwrap();

    let bin = read_samples_binary(BufReader::new(std::fs::File::open(&bin_path).unwrap())).unwrap();
    assert_eq!(bin, batch.samples);

    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sample"));
    let parsed: Vec<f64> = lines.map(|l| l.parse().unwrap()).collect();
    assert_eq!(parsed.len(), batch.samples.len());
    for (a, b) in parsed.iter().zip(&batch.samples) {
        assert!((a - b).abs() <= 1e-15 * b.abs());
    }
}
