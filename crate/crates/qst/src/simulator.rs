//! Monte Carlo oracle: exact worst-case Quickselect cost `T_n` via the random
//! size-recursion tree, truncated weighted path suprema `S^(m)` via
//! branch-and-bound on a counter-keyed label tree, and seeded batch drivers
//! with ECDF summaries.
//!
//! Reproducibility contract: replicate `i` of a batch draws from a stream
//! derived only from `(seed, i)`, and `S^(m)` label trees assign each tree
//! node a label derived only from `(stream key, node index)`. Results are
//! therefore identical across runs and thread counts.

use std::io::{self, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-batch sample memory cap (bytes).
const MEMORY_CAP_BYTES: u64 = 2 << 30;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("replicate count {0} exceeds the sample memory cap")]
    ResourceCap(u64),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed binary sample file")]
    MalformedBinary,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn to_unit(bits: u64) -> f64 {
    // 53 mantissa bits, uniform on [0,1).
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential counter-based generator (SplitMix64).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(key: u64) -> Self {
        Self { state: key }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform draw on [0,1).
    pub fn unit(&mut self) -> f64 {
        to_unit(self.next_u64())
    }
}

/// Stream key for replicate `index` under `seed`.
pub fn stream_key(seed: u64, index: u64) -> u64 {
    mix(seed ^ mix(index.wrapping_mul(GOLDEN).wrapping_add(1)))
}

/// Random label tree with one Unif(0,1) label per vertex, keyed by the
/// vertex's heap index (root = 1). Labels are a pure function of
/// `(key, node)`, so traversal order and pruning never change the tree.
#[derive(Debug, Clone, Copy)]
pub struct TreeLabels {
    key: u64,
}

impl TreeLabels {
    pub fn new(key: u64) -> Self {
        Self { key }
    }

    pub fn for_replicate(seed: u64, index: u64) -> Self {
        Self::new(stream_key(seed, index))
    }

    /// Label of the vertex with heap index `node >= 1`.
    pub fn xi(&self, node: u64) -> f64 {
        to_unit(mix(self.key.wrapping_add(mix(node.wrapping_mul(GOLDEN)))))
    }
}

/// One `T_n` draw: worst-case comparisons over all target ranks, via the
/// size-recursion tree. A node of size `s >= 2` draws a pivot rank
/// `J = 1 + floor(s xi)` and spawns children of sizes `J-1` and `s-J`; the
/// returned value is the maximum over root-to-leaf paths of the per-node
/// costs `s - 1`.
///
/// Explicit-stack DFS; memory is proportional to the tree depth.
pub fn sample_tn(n: u64, rng: &mut SplitMix64) -> u64 {
    let mut best = 0u64;
    let mut stack: Vec<(u64, u64)> = Vec::new();
    let mut s = n;
    let mut acc = 0u64;
    loop {
        while s >= 3 {
            acc += s - 1;
            let j = (((s as f64) * rng.unit()) as u64 + 1).min(s);
            stack.push((s - j, acc));
            s = j - 1;
        }
        // Size 2 always costs one more comparison; sizes 0/1 cost nothing.
        let leaf = acc + if s == 2 { 1 } else { 0 };
        if leaf > best {
            best = leaf;
        }
        match stack.pop() {
            Some((ns, nacc)) => {
                s = ns;
                acc = nacc;
            }
            None => return best,
        }
    }
}

/// A truncated-supremum draw, with its exactness record.
#[derive(Debug, Clone, Copy)]
pub struct TruncSample {
    pub value: f64,
    /// False when epsilon-pruning may have shaved the supremum.
    pub exact: bool,
    /// Upper bound on the shaved amount (0 when exact).
    pub deficit_bound: f64,
}

/// `S^(m)` on one label tree: supremum over the `2^m` depth-`m` paths of the
/// cumulative-weight partial sums, by branch-and-bound.
///
/// A node at depth `r` carrying weight `w` and prefix sum `p` (including `w`)
/// cannot improve on `p + w (m - r)`, since every deeper weight on its subtree
/// is at most `w`; subtrees failing that test are cut exactly. With
/// `prune_epsilon > 0`, subtrees with `w < prune_epsilon` are also cut, which
/// can shave at most `prune_epsilon (m - r)` from the result; the returned
/// record then carries `exact = false` and the deficit bound.
pub fn sample_trunc_s(m: u32, prune_epsilon: f64, labels: &TreeLabels) -> TruncSample {
    debug_assert!(m <= 60, "node indices use u64");
    let mf = m as f64;
    let mut best = 0.0f64;
    let mut exact = true;
    let mut deficit = 0.0f64;
    // (heap index, depth, weight, prefix sum including this node)
    let mut stack: Vec<(u64, u32, f64, f64)> = vec![(1, 0, 1.0, 1.0)];
    while let Some((node, r, w, p)) = stack.pop() {
        if p > best {
            best = p;
        }
        if r == m {
            continue;
        }
        let rem = mf - r as f64;
        if p + w * rem <= best {
            continue;
        }
        if prune_epsilon > 0.0 && w < prune_epsilon {
            exact = false;
            deficit = deficit.max(prune_epsilon * rem);
            continue;
        }
        let xi = labels.xi(node);
        let (wl, wr) = (w * xi, w * (1.0 - xi));
        // Explore the heavier child first for tighter pruning.
        if wl >= wr {
            stack.push((2 * node + 1, r + 1, wr, p + wr));
            stack.push((2 * node, r + 1, wl, p + wl));
        } else {
            stack.push((2 * node, r + 1, wl, p + wl));
            stack.push((2 * node + 1, r + 1, wr, p + wr));
        }
    }
    TruncSample {
        value: best,
        exact,
        deficit_bound: if exact { 0.0 } else { deficit },
    }
}

/// Reference oracle for [`sample_trunc_s`]: full enumeration of all `2^m`
/// depth-`m` paths on the same label tree. Exponential; intended for m <= ~20.
pub fn enumerate_trunc_s(m: u32, labels: &TreeLabels) -> f64 {
    fn walk(labels: &TreeLabels, node: u64, r: u32, m: u32, w: f64, p: f64) -> f64 {
        if r == m {
            return p;
        }
        let xi = labels.xi(node);
        let (wl, wr) = (w * xi, w * (1.0 - xi));
        let left = walk(labels, 2 * node, r + 1, m, wl, p + wl);
        let right = walk(labels, 2 * node + 1, r + 1, m, wr, p + wr);
        left.max(right)
    }
    walk(labels, 1, 0, m, 1.0, 1.0)
}

/// Number of depth-`j` vertices of one label tree whose exponential path sum
/// `S_j(v) = sum -ln(factor)` stays at or below `a`.
///
/// This is the level count driving the second-moment tail bound; exposed for
/// the Monte Carlo cross-checks of those bounds.
pub fn level_count_sample(j: u32, a: f64, labels: &TreeLabels) -> u64 {
    debug_assert!(j >= 1 && j <= 30);
    let mut count = 0u64;
    // (heap index, depth, path sum); prune once the sum exceeds a, since the
    // increments -ln(factor) are nonnegative.
    let mut stack: Vec<(u64, u32, f64)> = vec![(1, 0, 0.0)];
    while let Some((node, r, s)) = stack.pop() {
        if r == j {
            count += 1;
            continue;
        }
        let xi = labels.xi(node);
        let sl = s - xi.ln();
        let sr = s - (1.0 - xi).ln();
        if sl <= a {
            stack.push((2 * node, r + 1, sl));
        }
        if sr <= a {
            stack.push((2 * node + 1, r + 1, sr));
        }
    }
    count
}

/// Walks the greedy max-weight path of a fresh size-recursion tree, checking
/// the multiplicative floor sandwich `n W_r - r <= N_r <= n W_r` at every
/// depth until the subproblem size hits zero. Returns the first violating
/// depth, if any. Comparisons carry a tiny slack for the accumulated
/// floating-point rounding in `W_r`.
pub fn sandwich_check(n: u64, rng: &mut SplitMix64) -> Result<(), u32> {
    let mut size = n;
    let mut w = 1.0f64;
    let mut r = 0u32;
    while size > 0 {
        let nw = n as f64 * w;
        let slack = 1e-9 * nw.max(1.0);
        if (size as f64) > nw + slack || (size as f64) < nw - r as f64 - slack {
            return Err(r);
        }
        let xi = rng.unit();
        let u = xi.max(1.0 - xi);
        size = (size as f64 * u) as u64;
        w *= u;
        r += 1;
    }
    Ok(())
}

/// What a batch samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SimKind {
    /// `T_n / n` for a fixed key count `n`.
    TnOverN { n: u64 },
    /// `S^(m)` with optional epsilon-pruning.
    TruncatedS { m: u32, prune_epsilon: f64 },
}

/// Seeded Monte Carlo batch descriptor.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    pub kind: SimKind,
    pub replicates: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.replicates == 0 {
            return Err(SimError::InvalidConfig("replicates must be >= 1".into()));
        }
        match self.kind {
            SimKind::TnOverN { n } if n == 0 => {
                Err(SimError::InvalidConfig("n must be >= 1".into()))
            }
            SimKind::TruncatedS { m, .. } if m > 60 => {
                Err(SimError::InvalidConfig("m must be <= 60".into()))
            }
            SimKind::TruncatedS { prune_epsilon, .. } if prune_epsilon < 0.0 => {
                Err(SimError::InvalidConfig("prune_epsilon must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Batch result: sorted samples with summary statistics.
#[derive(Debug, Clone)]
pub struct SimBatch {
    pub config: SimConfig,
    /// Sorted ascending; doubles as the ECDF support.
    pub samples: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// All truncated-S draws were exact (vacuously true for TnOverN).
    pub all_exact: bool,
}

/// Runs `replicates` independent draws, each on its own `(seed, index)`
/// stream; bit-reproducible regardless of thread count.
pub fn run_batch(config: &SimConfig) -> Result<SimBatch, SimError> {
    config.validate()?;
    if config.replicates.saturating_mul(8) > MEMORY_CAP_BYTES {
        return Err(SimError::ResourceCap(config.replicates));
    }
    let reps = config.replicates;
    let (mut samples, all_exact) = match config.kind {
        SimKind::TnOverN { n } => {
            let v: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|i| {
                    let mut rng = SplitMix64::new(stream_key(config.seed, i));
                    sample_tn(n, &mut rng) as f64 / n as f64
                })
                .collect();
            (v, true)
        }
        SimKind::TruncatedS { m, prune_epsilon } => {
            let v: Vec<(f64, bool)> = (0..reps)
                .into_par_iter()
                .map(|i| {
                    let labels = TreeLabels::for_replicate(config.seed, i);
                    let s = sample_trunc_s(m, prune_epsilon, &labels);
                    (s.value, s.exact)
                })
                .collect();
            let exact = v.iter().all(|&(_, e)| e);
            (v.into_iter().map(|(x, _)| x).collect(), exact)
        }
    };
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let variance = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    Ok(SimBatch {
        config: *config,
        samples,
        mean,
        variance,
        all_exact,
    })
}

/// Empirical `P(sample > t)` with a 95% normal-approximation half-width.
pub fn ecdf_tail(batch: &SimBatch, t: f64) -> (f64, f64) {
    let above = batch.samples.len() - batch.samples.partition_point(|&x| x <= t);
    let n = batch.samples.len() as f64;
    let p = above as f64 / n;
    (p, 1.96 * (p * (1.0 - p) / n).sqrt())
}

/// Empirical `P(sample <= x)`.
pub fn ecdf_at(batch: &SimBatch, x: f64) -> f64 {
    batch.samples.partition_point(|&s| s <= x) as f64 / batch.samples.len() as f64
}

/// One-column CSV export (`sample` header).
pub fn write_samples_csv<W: Write>(batch: &SimBatch, mut w: W) -> Result<(), SimError> {
    writeln!(w, "sample")?;
    for s in &batch.samples {
        writeln!(w, "{s}")?;
    }
    Ok(())
}

/// Little-endian binary export: u64 count prefix, then f64 samples.
pub fn write_samples_binary<W: Write>(batch: &SimBatch, mut w: W) -> Result<(), SimError> {
    w.write_all(&(batch.samples.len() as u64).to_le_bytes())?;
    for s in &batch.samples {
        w.write_all(&s.to_le_bytes())?;
    }
    Ok(())
}

/// Reads the binary sample format back.
pub fn read_samples_binary<R: Read>(mut r: R) -> Result<Vec<f64>, SimError> {
    let mut count = [0u8; 8];
    r.read_exact(&mut count).map_err(|_| SimError::MalformedBinary)?;
    let count = u64::from_le_bytes(count) as usize;
    let mut out = Vec::with_capacity(count.min(1 << 24));
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf).map_err(|_| SimError::MalformedBinary)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}
