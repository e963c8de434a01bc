//! Cross-module invariant suites behind `verify`: each group checks one
//! mathematical guarantee of the bound machinery, either analytically or
//! against the Monte Carlo oracle, and reports a single pass/fail line.
//!
//! `Quick` shrinks replicate counts and instance sizes to stay under a
//! minute; `Full` runs the desk-scale versions.

use rayon::prelude::*;

use crate::analytic::small_ball;
use crate::chernoff::{barrier_check, chernoff_majorant, g_theta, scalar_iteration};
use crate::levelcount::{mu_sandwich, pair_count, pjl_upper};
use crate::mesh::{
    apply_k_lower, apply_k_quadrature, apply_q, eval_l0, iterate, GridRule, MeshConfig, StepCDF,
};
use crate::simulator::{
    ecdf_at, level_count_sample, run_batch, sample_tn, sample_trunc_s, SimConfig, SimKind,
    SplitMix64, TreeLabels,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyLevel {
    Quick,
    Full,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = Result<String, String>;

fn gamma_small_ball_sandwich(level: VerifyLevel) -> Check {
    let (m_max, steps) = match level {
        VerifyLevel::Quick => (50, 100),
        VerifyLevel::Full => (100, 400),
    };
    let mut worst = 0.0f64;
    for m in 1..=m_max {
        for i in 0..=steps {
            let x = i as f64 / steps as f64;
            let s = small_ball(m, x).map_err(|e| e.to_string())?;
            if s.lower > s.point + 1e-12 || s.point > s.upper + 1e-12 {
                return Err(format!("sandwich violated at m={m} x={x}: {s:?}"));
            }
            worst = worst.max(s.lower - s.point).max(s.point - s.upper);
        }
    }
    Ok(format!("m <= {m_max}, worst margin {worst:.2e}"))
}

fn mgf_barrier_identity(_level: VerifyLevel) -> Check {
    let mut theta = 1e-6;
    let mut worst = 0.0f64;
    while theta <= 6.0 {
        let b = barrier_check(theta);
        if !b.satisfied {
            return Err(format!("barrier inequality failed at theta={theta}"));
        }
        if let Some(x) = b.x_theta {
            let g = g_theta(theta, x).map_err(|e| e.to_string())?;
            let rel = (g - (x - 1.0)).abs() / x;
            if rel > 1e-10 {
                return Err(format!("identity off by {rel:.2e} at theta={theta}"));
            }
            worst = worst.max(rel);
        }
        theta *= 1.2;
    }
    Ok(format!("worst relative identity error {worst:.2e}"))
}

fn mgf_iterate_domination(level: VerifyLevel) -> Check {
    let steps = match level {
        VerifyLevel::Quick => 300,
        VerifyLevel::Full => 3000,
    };
    for theta in [0.05, 0.1, 0.5, 1.0, 2.0, 5.0] {
        let barrier = 2.0 * f64::exp(theta);
        let seq = scalar_iteration(theta, steps).map_err(|e| e.to_string())?;
        if let Some((k, &a)) = seq.iter().enumerate().find(|&(_, &a)| a > barrier + 1e-12) {
            return Err(format!("iterate {k} at theta={theta} exceeds barrier: {a}"));
        }
    }
    Ok(format!("{steps} steps below the barrier for six theta values"))
}

/// Exponential path sum of `steps` tree edges starting at `node`, turning
/// right exactly at depth `branch_at` (or never, for the all-left path).
fn path_sum(labels: &TreeLabels, steps: u32, branch_at: Option<u32>) -> f64 {
    let mut node = 1u64;
    let mut sum = 0.0;
    for depth in 0..steps {
        let xi = labels.xi(node);
        if branch_at == Some(depth) {
            sum -= (1.0 - xi).ln();
            node = 2 * node + 1;
        } else {
            sum -= xi.ln();
            node = 2 * node;
        }
    }
    sum
}

fn pair_probability_mc(level: VerifyLevel, seed: u64) -> Check {
    let (j_max, reps) = match level {
        VerifyLevel::Quick => (4u32, 20_000u64),
        VerifyLevel::Full => (6, 100_000),
    };
    for j in 2..=j_max {
        for ell in 0..j {
            for a in [0.7f64, 1.0] {
                let bound = pjl_upper(j, ell, a).map_err(|e| e.to_string())?.exp();
                let hits: u64 = (0..reps)
                    .into_par_iter()
                    .map(|i| {
                        let labels = TreeLabels::for_replicate(seed ^ (u64::from(j) << 32), i);
                        // Canonical ordered pair with the LCA at depth ell:
                        // shared all-left prefix, split there, all-left after.
                        let sv = path_sum(&labels, j, None);
                        let sw = path_sum(&labels, j, Some(ell));
                        u64::from(sv <= a && sw <= a)
                    })
                    .sum();
                let p_hat = hits as f64 / reps as f64;
                let se = (p_hat * (1.0 - p_hat) / reps as f64).sqrt();
                if p_hat > bound + 3.0 * se + 1e-9 {
                    return Err(format!(
                        "pair probability {p_hat} exceeds bound {bound} at j={j} ell={ell} a={a}"
                    ));
                }
            }
        }
    }
    Ok(format!("j <= {j_max}, {reps} replicates per pair"))
}

fn level_mean_mc(level: VerifyLevel, seed: u64) -> Check {
    let (j_max, reps) = match level {
        VerifyLevel::Quick => (5u32, 20_000u64),
        VerifyLevel::Full => (6, 100_000),
    };
    for j in 2..=j_max {
        for a in [0.5f64, 1.0] {
            let t = (j as f64 + 1.0) * (-a).exp();
            let params = mu_sandwich(j, t).map_err(|e| e.to_string())?;
            let counts: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|i| {
                    let labels = TreeLabels::for_replicate(seed ^ (u64::from(j) << 40), i);
                    level_count_sample(j, params.a, &labels) as f64
                })
                .collect();
            let mean = counts.iter().sum::<f64>() / reps as f64;
            let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
                / (reps as f64 - 1.0);
            let se = (var / reps as f64).sqrt();
            let (lo, hi) = (params.log_mu_lower.exp(), params.log_mu_upper.exp());
            if mean + 3.0 * se < lo || mean - 3.0 * se > hi {
                return Err(format!(
                    "level mean {mean} outside sandwich [{lo}, {hi}] at j={j} a={a}"
                ));
            }
        }
    }
    Ok(format!("j <= {j_max}, {reps} replicates per level"))
}

fn pair_count_enumeration(_level: VerifyLevel) -> Check {
    // Count ordered pairs of depth-j vertices with LCA depth ell by brute
    // force over j-bit path labels.
    for j in 1..=6u32 {
        for ell in 0..j {
            let mut count = 0u128;
            for v in 0..(1u32 << j) {
                for w in 0..(1u32 << j) {
                    let lca = if v == w {
                        j
                    } else {
                        (v ^ w).leading_zeros() - (32 - j)
                    };
                    if lca == ell {
                        count += 1;
                    }
                }
            }
            if count != pair_count(j, ell) {
                return Err(format!(
                    "pair count mismatch at j={j} ell={ell}: {count} vs {}",
                    pair_count(j, ell)
                ));
            }
        }
    }
    Ok("exhaustive match for j <= 6".into())
}

/// Random nondecreasing step function with values in [0, cap].
fn random_step(n: usize, cap: f64, rng: &mut SplitMix64) -> Vec<f64> {
    let incs: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
    let total: f64 = incs.iter().sum::<f64>() + rng.unit() * n as f64;
    let scale = cap / total;
    let mut acc = 0.0;
    incs.iter()
        .map(|d| {
            acc += d;
            acc * scale
        })
        .collect()
}

fn operator_conservative_vs_bracket(level: VerifyLevel, seed: u64) -> Check {
    let (n, m, trials) = match level {
        VerifyLevel::Quick => (40usize, 30usize, 3u64),
        VerifyLevel::Full => (80, 60, 8),
    };
    let config = MeshConfig { a: 10.0, n, m, iterations: 1, grid_rule: GridRule::Uniform };
    let (x_grid, u_grid) = config.grids();
    let mut rng = SplitMix64::new(seed ^ 0xC0FF_EE);
    for trial in 0..=trials {
        // Trial 0 uses the Chernoff CDF; the rest are random monotone steps.
        let values: Vec<f64> = if trial == 0 {
            (0..n).map(|k| eval_l0(x_grid[k])).collect()
        } else {
            random_step(n, rng.unit(), &mut rng)
        };
        let l = StepCDF::new(x_grid.clone(), values).map_err(|e| e.to_string())?;
        for k in (0..n).step_by((n / 8).max(1)) {
            let x = x_grid[k];
            let q = apply_q(|y| l.eval(y), &u_grid, x).map_err(|e| e.to_string())?;
            let (_, upper) =
                apply_k_quadrature(|y| l.eval(y), 1.0, x, 64 * m).map_err(|e| e.to_string())?;
            if q > upper + 1e-12 {
                return Err(format!(
                    "discretized value {q} above bracketing upper {upper} at x={x} trial={trial}"
                ));
            }
        }
    }
    Ok(format!("{} random inputs plus the Chernoff CDF", trials))
}

fn operator_order_preservation(level: VerifyLevel, seed: u64) -> Check {
    let (n, m, trials) = match level {
        VerifyLevel::Quick => (40usize, 40usize, 10u64),
        VerifyLevel::Full => (80, 80, 30),
    };
    let config = MeshConfig { a: 10.0, n, m, iterations: 1, grid_rule: GridRule::Uniform };
    let (x_grid, u_grid) = config.grids();
    let mut rng = SplitMix64::new(seed ^ 0x0DE2);
    for trial in 0..trials {
        let g_vals = random_step(n, 0.5 + 0.5 * rng.unit(), &mut rng);
        // H adds nonnegative, monotone headroom so G <= H pointwise.
        let extra = random_step(n, 1.0, &mut rng);
        let h_vals: Vec<f64> = g_vals
            .iter()
            .zip(&extra)
            .map(|(g, e)| (g + e * (1.0 - g)).min(1.0))
            .collect();
        let g = StepCDF::new(x_grid.clone(), g_vals).map_err(|e| e.to_string())?;
        let h = StepCDF::new(x_grid.clone(), h_vals).map_err(|e| e.to_string())?;
        let gq = apply_k_lower(&g, &u_grid).map_err(|e| e.to_string())?;
        let hq = apply_k_lower(&h, &u_grid).map_err(|e| e.to_string())?;
        for k in 0..n {
            if gq.values[k] > hq.values[k] + 1e-12 {
                return Err(format!(
                    "order broken at trial {trial}, grid index {k}: {} > {}",
                    gq.values[k], hq.values[k]
                ));
            }
        }
    }
    Ok(format!("{trials} random monotone pairs"))
}

fn u_grid_refinement(level: VerifyLevel, seed: u64) -> Check {
    let (n, m, trials) = match level {
        VerifyLevel::Quick => (40usize, 25usize, 5u64),
        VerifyLevel::Full => (80, 50, 15),
    };
    let config = MeshConfig { a: 10.0, n, m, iterations: 1, grid_rule: GridRule::Uniform };
    let (x_grid, _) = config.grids();
    let coarse: Vec<f64> = (0..=m).map(|r| r as f64 / m as f64).collect();
    let fine: Vec<f64> = (0..=2 * m).map(|r| r as f64 / (2 * m) as f64).collect();
    let mut rng = SplitMix64::new(seed ^ 0xF1FE);
    for trial in 0..trials {
        let l = StepCDF::new(x_grid.clone(), random_step(n, rng.unit(), &mut rng))
            .map_err(|e| e.to_string())?;
        for k in (0..n).step_by(3) {
            let x = x_grid[k];
            let vc = apply_q(|y| l.eval(y), &coarse, x).map_err(|e| e.to_string())?;
            let vf = apply_q(|y| l.eval(y), &fine, x).map_err(|e| e.to_string())?;
            if vf < vc - 1e-12 {
                return Err(format!(
                    "refined sum {vf} below coarse {vc} at x={x} trial={trial}"
                ));
            }
        }
    }
    Ok(format!("{trials} random inputs, nested grids M and 2M"))
}

fn cdf_below_ecdf(level: VerifyLevel, seed: u64) -> Check {
    let (n_keys, reps) = match level {
        VerifyLevel::Quick => (10_000u64, 2_000u64),
        VerifyLevel::Full => (100_000, 10_000),
    };
    let config = MeshConfig { a: 10.0, n: 100, m: 100, iterations: 30, grid_rule: GridRule::Uniform };
    let trace = iterate(&config).map_err(|e| e.to_string())?;
    let batch = run_batch(&SimConfig {
        kind: SimKind::TnOverN { n: n_keys },
        replicates: reps,
        seed,
    })
    .map_err(|e| e.to_string())?;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..config.n {
        let x = trace.final_cdf.x_grid[k];
        let l = trace.final_cdf.values[k];
        let f_hat = ecdf_at(&batch, x);
        // Rule-of-three floor: with f_hat = 0 the binomial s.e. is also 0,
        // yet the true CDF may be as large as ~3/R at this confidence.
        let se = (f_hat * (1.0 - f_hat) / reps as f64).sqrt();
        let slack = (3.0 * se).max(3.0 / reps as f64);
        worst = worst.max(l - f_hat);
        if l > f_hat + slack {
            return Err(format!(
                "mesh value {l} above empirical CDF {f_hat} + 3 s.e. at x={x}"
            ));
        }
    }
    Ok(format!(
        "n={n_keys}, {reps} replicates, worst (mesh - ECDF) = {worst:.3e}"
    ))
}

/// Two-sample Kolmogorov-Smirnov distance of sorted samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        // Consume all ties at the next value before comparing the ECDFs.
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn recursion_ks(level: VerifyLevel, seed: u64) -> Check {
    let reps = match level {
        VerifyLevel::Quick => 10_000u64,
        VerifyLevel::Full => 50_000,
    };
    let mut worst = 0.0f64;
    for m in [3u32, 6, 9] {
        // Direct S^(m+1) draws versus one recursion step applied to
        // independent S^(m) pairs. Pairing must be by replicate index, not by
        // rank, so the pair stays independent.
        let mut direct: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|i| {
                let labels = TreeLabels::for_replicate(seed ^ 0xD1 ^ (u64::from(m) << 48), i);
                sample_trunc_s(m + 1, 0.0, &labels).value
            })
            .collect();
        let mut recursed: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|i| {
                let left = TreeLabels::for_replicate(seed ^ 0xA2 ^ (u64::from(m) << 48), i);
                let right = TreeLabels::for_replicate(seed ^ 0xB3 ^ (u64::from(m) << 48), i);
                let x1 = sample_trunc_s(m, 0.0, &left).value;
                let x2 = sample_trunc_s(m, 0.0, &right).value;
                let mut rng = SplitMix64::new(
                    crate::simulator::stream_key(seed ^ 0xC4 ^ (u64::from(m) << 48), i),
                );
                let u = rng.unit();
                1.0 + (u * x1).max((1.0 - u) * x2)
            })
            .collect();
        direct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        recursed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ks_distance(&direct, &recursed);
        // Two-sample 99% threshold: 1.63 sqrt((n1+n2)/(n1 n2)).
        let threshold = 1.63 * (2.0 / reps as f64).sqrt();
        worst = worst.max(d / threshold);
        if d > threshold {
            return Err(format!("KS distance {d:.4} above {threshold:.4} at m={m}"));
        }
    }
    Ok(format!(
        "{reps} replicates per side, worst distance at {:.0}% of threshold",
        100.0 * worst
    ))
}

fn tail_ordering_analytic(_level: VerifyLevel) -> Check {
    // Nontrivial majorant decays past 2e, and the rate lower bound matches
    // -ln(majorant) wherever the majorant is below 1.
    let mut prev = 1.0f64;
    let mut t = 2.0 * std::f64::consts::E;
    while t <= 60.0 {
        let row = chernoff_majorant(t).map_err(|e| e.to_string())?;
        if row.majorant > prev + 1e-15 {
            return Err(format!("majorant increases at t={t}"));
        }
        if row.majorant < 1.0 && (row.rate_lower + row.majorant.ln()).abs() > 1e-8 {
            return Err(format!("rate/majorant mismatch at t={t}"));
        }
        prev = row.majorant;
        t += 0.25;
    }
    Ok("majorant nonincreasing and consistent with its rate on [2e, 60]".into())
}

fn tn_oracles(_level: VerifyLevel, seed: u64) -> Check {
    let mut rng = SplitMix64::new(seed ^ 0x7A11);
    for _ in 0..1000 {
        if sample_tn(2, &mut rng) != 1 {
            return Err("T_2 != 1".into());
        }
    }
    let reps = 300_000u64;
    let sum: u64 = (0..reps).map(|_| sample_tn(3, &mut rng)).sum();
    let mean = sum as f64 / reps as f64;
    let se = (2.0f64 / 9.0 / reps as f64).sqrt();
    if (mean - 8.0 / 3.0).abs() > 3.0 * se {
        return Err(format!("E[T_3] estimate {mean} off 8/3 by > 3 s.e."));
    }
    Ok(format!("T_2 exact, E[T_3] = {mean:.5} vs 8/3"))
}

pub fn run_all(level: VerifyLevel, seed: u64) -> Vec<CheckResult> {
    let checks: Vec<(&'static str, Check)> = vec![
        ("gamma-small-ball-sandwich", gamma_small_ball_sandwich(level)),
        ("mgf-barrier-identity", mgf_barrier_identity(level)),
        ("mgf-iterate-domination", mgf_iterate_domination(level)),
        ("pair-probability-mc", pair_probability_mc(level, seed)),
        ("level-mean-mc", level_mean_mc(level, seed)),
        ("pair-count-enumeration", pair_count_enumeration(level)),
        ("tail-majorant-shape", tail_ordering_analytic(level)),
        ("small-instance-oracles", tn_oracles(level, seed)),
        ("operator-conservative-vs-bracket", operator_conservative_vs_bracket(level, seed)),
        ("operator-order-preservation", operator_order_preservation(level, seed)),
        ("u-grid-refinement", u_grid_refinement(level, seed)),
        ("cdf-below-ecdf", cdf_below_ecdf(level, seed)),
        ("recursion-ks", recursion_ks(level, seed)),
    ];
    checks
        .into_iter()
        .map(|(name, outcome)| match outcome {
            Ok(detail) => CheckResult { name, passed: true, detail },
            Err(detail) => CheckResult { name, passed: false, detail },
        })
        .collect()
}
