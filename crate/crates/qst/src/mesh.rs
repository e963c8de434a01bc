//! Monotone CDF iteration scheme for the mean upper bound: step-function
//! lower approximations of the limit CDF, the conservative discretized
//! fixed-point operator, and the per-iteration mean bound
//! `U_m = 2 + int_2^A (1 - L_m) + tail`.
//!
//! Soundness over speed at the rounding level: every quadrature sum feeding a
//! lower CDF value is compensated (Neumaier) and then rounded down one ulp,
//! and every term of `U_m` is rounded up one ulp. This is not certified
//! interval arithmetic, but it removes accumulation error as a soundness
//! concern.
//!
//! The hot path (`iterate`) runs a table-driven kernel that precomputes, once
//! per configuration, the grid index or tail value of every operator argument
//! `(x_k - 1)/u_{r+1}` and `(x_k - 1)/(1 - u_r)`. The kernel is bitwise
//! identical to the generic [`apply_q`] path (same divisions, same term
//! order, same compensated sum), which a unit test pins down.

use rayon::prelude::*;
use thiserror::Error;

use crate::analytic::tail_integral_bound;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
}

/// Tail-rule descriptor written to CSV footers.
pub const TAIL_RULE: &str = "max(last_value,chernoff_lower_cdf)";

/// Nondecreasing step function on `[2, A)` with the standard extensions:
/// 0 below 2, `max(last value, L0(x))` at and above `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCDF {
    /// Strictly increasing, `x_grid[0] = 2`, `x_grid[N] = A`; length `N + 1`.
    pub x_grid: Vec<f64>,
    /// Value on `[x_k, x_{k+1})`; length `N`, nondecreasing, in `[0, 1]`.
    pub values: Vec<f64>,
}

impl StepCDF {
    pub fn new(x_grid: Vec<f64>, values: Vec<f64>) -> Result<Self, MeshError> {
        let cdf = Self { x_grid, values };
        cdf.validate()?;
        Ok(cdf)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if self.x_grid.len() < 3 || self.values.len() + 1 != self.x_grid.len() {
            return Err(MeshError::Domain("grid/value length mismatch".into()));
        }
        if self.x_grid[0] != 2.0 {
            return Err(MeshError::Domain("x-grid must start at 2".into()));
        }
        if !self.x_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(MeshError::Domain("x-grid must be strictly increasing".into()));
        }
        let monotone = self.values.windows(2).all(|w| w[0] <= w[1]);
        let in_range = self.values.iter().all(|&v| (0.0..=1.0).contains(&v));
        if !monotone || !in_range {
            return Err(MeshError::Domain("values must be nondecreasing in [0,1]".into()));
        }
        Ok(())
    }

    /// Truncation point `A`.
    pub fn a(&self) -> f64 {
        *self.x_grid.last().unwrap()
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < 2.0 {
            return 0.0;
        }
        if x >= self.a() {
            return self.values[self.values.len() - 1].max(eval_l0(x));
        }
        let k = self.x_grid.partition_point(|&g| g <= x) - 1;
        self.values[k]
    }
}

/// Mesh spacing rule; only uniform grids for now.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GridRule {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshConfig {
    pub a: f64,
    pub n: usize,
    pub m: usize,
    pub iterations: usize,
    pub grid_rule: GridRule,
}

impl MeshConfig {
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.a <= 2.0 {
            return Err(MeshError::Domain("A must exceed 2".into()));
        }
        if self.n < 2 || self.m < 2 {
            return Err(MeshError::Domain("N and M must be at least 2".into()));
        }
        if self.iterations == 0 {
            return Err(MeshError::Domain("iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Uniform grids: `x_k = 2 + k (A-2)/N`, `u_r = r/M`, endpoints exact.
    pub fn grids(&self) -> (Vec<f64>, Vec<f64>) {
        let mut x_grid: Vec<f64> = (0..=self.n)
            .map(|k| 2.0 + (self.a - 2.0) * k as f64 / self.n as f64)
            .collect();
        x_grid[self.n] = self.a;
        let mut u_grid: Vec<f64> = (0..=self.m).map(|r| r as f64 / self.m as f64).collect();
        u_grid[self.m] = 1.0;
        (x_grid, u_grid)
    }
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub config: MeshConfig,
    /// `U_1 .. U_iterations`.
    pub u_bounds: Vec<f64>,
    pub final_cdf: StepCDF,
    /// Whether the first iterate dominated the initial CDF on the whole grid;
    /// this is the hypothesis under which iterates increase in m.
    pub l1_dominates_l0: bool,
}

/// Clamped Chernoff lower CDF `max(0, 1 - exp(-x ln(x/2) + x))` for `x >= 2`,
/// zero below 2. Strictly positive exactly for `x > 2e`.
pub fn eval_l0(x: f64) -> f64 {
    if x < 2.0 {
        return 0.0;
    }
    let exponent = -x * (x / 2.0).ln() + x;
    if exponent >= 0.0 {
        0.0
    } else {
        -exponent.exp_m1()
    }
}

fn check_u_grid(u_grid: &[f64]) -> Result<(), MeshError> {
    let ok = u_grid.len() >= 3
        && u_grid[0] == 0.0
        && *u_grid.last().unwrap() == 1.0
        && u_grid.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(MeshError::Domain("u-grid must be 0 = u_0 < ... < u_M = 1".into()))
    }
}

/// Discretized lower quadrature of the CDF fixed-point operator at `x`:
/// `sum_r (u_{r+1} - u_r) L((x-1)/u_{r+1}) L((x-1)/(1-u_r))`.
///
/// Compensated sum, rounded down one ulp and clamped at 0, so the result
/// never exceeds the exact quadrature value.
pub fn apply_q<L: Fn(f64) -> f64>(l: L, u_grid: &[f64], x: f64) -> Result<f64, MeshError> {
    if x < 2.0 {
        return Err(MeshError::Domain(format!("operator argument {x} below support")));
    }
    check_u_grid(u_grid)?;
    let c = x - 1.0;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for r in 0..u_grid.len() - 1 {
        let f1 = l(c / u_grid[r + 1]);
        let f2 = l(c / (1.0 - u_grid[r]));
        let term = (u_grid[r + 1] - u_grid[r]) * f1 * f2;
        let t = sum + term;
        comp += if sum.abs() >= term.abs() {
            (sum - t) + term
        } else {
            (term - t) + sum
        };
        sum = t;
    }
    Ok((sum + comp).next_down().max(0.0))
}

/// One conservative operator application on the grid: value `k` is the
/// quadrature at `x_k`. Non-monotone output aborts — it would indicate a
/// quadrature bug, and clamping could mask an unsound bound.
pub fn apply_k_lower(l: &StepCDF, u_grid: &[f64]) -> Result<StepCDF, MeshError> {
    l.validate()?;
    let n = l.values.len();
    let values = (0..n)
        .map(|k| apply_q(|y| l.eval(y), u_grid, l.x_grid[k]))
        .collect::<Result<Vec<f64>, _>>()?;
    for k in 1..n {
        if values[k] < values[k - 1] {
            return Err(MeshError::InternalInconsistency(format!(
                "operator output decreases at grid index {k}"
            )));
        }
    }
    Ok(StepCDF { x_grid: l.x_grid.clone(), values })
}

/// Two-sided Riemann bracketing of the exact operator
/// `(KL)(x) = int_0^1 L((x-1)/u) L((x-1)/(1-u)) du` on a uniform grid of
/// `subdivisions` cells. The integrand is unimodal in neither factor but each
/// factor is monotone in `u`, so opposite corner products bracket every cell;
/// the `u = 0` and `u = 1` corner arguments are infinite and use `sup`.
pub fn apply_k_quadrature<L: Fn(f64) -> f64>(
    l: L,
    sup: f64,
    x: f64,
    subdivisions: usize,
) -> Result<(f64, f64), MeshError> {
    if x < 2.0 {
        return Err(MeshError::Domain(format!("operator argument {x} below support")));
    }
    if subdivisions < 2 {
        return Err(MeshError::Domain("need at least 2 subdivisions".into()));
    }
    let m = subdivisions;
    let c = x - 1.0;
    let u = |r: usize| r as f64 / m as f64;
    let mut lower = 0.0f64;
    let mut upper = 0.0f64;
    for r in 0..m {
        let du = u(r + 1) - u(r);
        // Factor 1 decreases in u, factor 2 increases; the product of the two
        // small corners bounds below, the two large corners above.
        lower += du * l(c / u(r + 1)) * l(c / (1.0 - u(r)));
        let hi1 = if r == 0 { sup } else { l(c / u(r)) };
        let hi2 = if r + 1 == m { sup } else { l(c / (1.0 - u(r + 1))) };
        upper += du * hi1 * hi2;
    }
    Ok((lower.next_down().max(0.0), upper.next_up()))
}

/// Mean upper bound from a step CDF truncated at `A = x_N`:
/// `2 + sum_k (x_{k+1} - x_k)(1 - v_k) + tail`, every term and partial sum
/// rounded up one ulp.
pub fn mean_upper(l: &StepCDF) -> Result<f64, MeshError> {
    l.validate()?;
    let a = l.a();
    let tail = tail_integral_bound(a)
        .map_err(|e| MeshError::Domain(e.to_string()))?
        .next_up();
    let mut acc = 0.0f64;
    for k in 0..l.values.len() {
        let term = ((l.x_grid[k + 1] - l.x_grid[k]) * (1.0 - l.values[k])).next_up();
        acc = (acc + term).next_up();
    }
    Ok(((2.0 + acc).next_up() + tail).next_up())
}

/// Precomputed per-`(k, r)` operator arguments for the hot loop.
///
/// For row `k`, only `r` in `[lo, hi)` can contribute (outside, one factor's
/// argument is below 2 and the factor vanishes). Within the window, factor 1
/// takes its tail value (stored `L0` sample) for `r < ra1` and a grid lookup
/// for `r >= ra1`; factor 2 symmetrically with boundary `ra2`. Divisions are
/// performed once here with the same expressions as [`apply_q`], so lookups
/// reproduce its factors bit for bit.
struct KernelRow {
    lo: usize,
    hi: usize,
    ra1: usize,
    ra2: usize,
    t1: Vec<f64>,
    idx1: Vec<u32>,
    idx2: Vec<u32>,
    t2: Vec<f64>,
}

struct Kernel {
    rows: Vec<KernelRow>,
    du: Vec<f64>,
}

impl Kernel {
    fn build(x_grid: &[f64], u_grid: &[f64]) -> Kernel {
        let n = x_grid.len() - 1;
        let m = u_grid.len() - 1;
        let a = x_grid[n];
        let du: Vec<f64> = (0..m).map(|r| u_grid[r + 1] - u_grid[r]).collect();
        let locate = |y: f64| -> u32 {
            // Same cell as partition_point(|g| g <= y) - 1, found arithmetically.
            let h = (a - 2.0) / n as f64;
            let mut k = (((y - 2.0) / h) as usize).min(n - 1);
            while k + 1 < n && x_grid[k + 1] <= y {
                k += 1;
            }
            while k > 0 && x_grid[k] > y {
                k -= 1;
            }
            debug_assert!(x_grid[k] <= y && y < x_grid[k + 1]);
            k as u32
        };
        let rows = (0..n)
            .into_par_iter()
            .map(|k| {
                let c = x_grid[k] - 1.0;
                // Factor-1 argument c/u_{r+1} is nonincreasing in r; factor-2
                // argument c/(1-u_r) is nondecreasing. Locate the zone
                // boundaries on the actually computed quotients.
                let y1 = |r: usize| c / u_grid[r + 1];
                let y2 = |r: usize| c / (1.0 - u_grid[r]);
                let r01 = (0..m).find(|&r| y1(r) < 2.0).unwrap_or(m);
                let ra1 = (0..m).find(|&r| y1(r) < a).unwrap_or(m);
                let r02 = (0..m).find(|&r| y2(r) >= 2.0).unwrap_or(m);
                let ra2 = (0..m).find(|&r| y2(r) >= a).unwrap_or(m);
                let lo = r02.min(r01);
                let hi = r01;
                let ra1 = ra1.clamp(lo, hi);
                let ra2 = ra2.clamp(lo, hi);
                KernelRow {
                    lo,
                    hi,
                    ra1,
                    ra2,
                    t1: (lo..ra1).map(|r| eval_l0(y1(r))).collect(),
                    idx1: (ra1..hi).map(|r| locate(y1(r))).collect(),
                    idx2: (lo..ra2).map(|r| locate(y2(r))).collect(),
                    t2: (ra2..hi).map(|r| eval_l0(y2(r))).collect(),
                }
            })
            .collect();
        Kernel { rows, du }
    }

    /// One operator application; bitwise equal to [`apply_k_lower`] on the
    /// same grids.
    fn apply(&self, values: &[f64]) -> Result<Vec<f64>, MeshError> {
        let v_last = values[values.len() - 1];
        let out: Vec<f64> = self
            .rows
            .par_iter()
            .map(|row| {
                let mut sum = 0.0f64;
                let mut comp = 0.0f64;
                for r in row.lo..row.hi {
                    let f1 = if r < row.ra1 {
                        v_last.max(row.t1[r - row.lo])
                    } else {
                        values[row.idx1[r - row.ra1] as usize]
                    };
                    let f2 = if r < row.ra2 {
                        values[row.idx2[r - row.lo] as usize]
                    } else {
                        v_last.max(row.t2[r - row.ra2])
                    };
                    let term = self.du[r] * f1 * f2;
                    let t = sum + term;
                    comp += if sum.abs() >= term.abs() {
                        (sum - t) + term
                    } else {
                        (term - t) + sum
                    };
                    sum = t;
                }
                (sum + comp).next_down().max(0.0)
            })
            .collect();
        for k in 1..out.len() {
            if out[k] < out[k - 1] {
                return Err(MeshError::InternalInconsistency(format!(
                    "operator output decreases at grid index {k}"
                )));
            }
        }
        Ok(out)
    }
}

/// Full iteration: sample the Chernoff CDF on the grid, apply the
/// conservative operator `iterations` times, record the mean bound after each
/// application. Deterministic for a given config, independent of thread count.
pub fn iterate(config: &MeshConfig) -> Result<IterationTrace, MeshError> {
    config.validate()?;
    let (x_grid, u_grid) = config.grids();
    let l0_values: Vec<f64> = (0..config.n).map(|k| eval_l0(x_grid[k])).collect();
    let kernel = Kernel::build(&x_grid, &u_grid);
    let mut current = StepCDF { x_grid, values: l0_values.clone() };
    let mut u_bounds = Vec::with_capacity(config.iterations);
    let mut l1_dominates_l0 = false;
    for step in 0..config.iterations {
        current.values = kernel.apply(&current.values)?;
        if step == 0 {
            l1_dominates_l0 = current
                .values
                .iter()
                .zip(&l0_values)
                .all(|(v1, v0)| v1 >= v0);
        }
        u_bounds.push(mean_upper(&current)?);
    }
    Ok(IterationTrace { config: *config, u_bounds, final_cdf: current, l1_dominates_l0 })
}
