//! Special-function primitives shared by the bound computations: exact Erlang
//! CDF, Gamma small-ball sandwich, log-factorial, and the explicit
//! tail-integral bound used to close the mean estimate at the truncation point.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticError {
    #[error("small-ball bound requires x in [0,1], got {0}")]
    SmallBallDomain(f64),
    #[error("tail integral bound requires A > 2, got {0}")]
    TailDomain(f64),
}

/// Two-sided bound `e^{-x} x^m/m! <= P(Gamma(m,1) <= x) <= x^m/m!`,
/// valid for integer shape `m >= 1` and `x` in `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallBallSandwich {
    pub m: u32,
    pub x: f64,
    pub lower: f64,
    pub point: f64,
    pub upper: f64,
}

/// ln(n!), by exact summation of logarithms.
///
/// The Stirling closed form is available separately as [`stirling_approx`];
/// this function never uses it.
pub fn log_factorial(n: u64) -> f64 {
    // Compensated (Neumaier) sum: the plain sum drifts by ~1e-7 already for
    // n in the hundreds of thousands, visible against the Stirling bound.
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    for k in 2..=n {
        let term = (k as f64).ln();
        let t = acc + term;
        comp += if acc.abs() >= term.abs() {
            (acc - t) + term
        } else {
            (term - t) + acc
        };
        acc = t;
    }
    acc + comp
}

/// Stirling approximation `n ln n - n + (1/2) ln(2 pi n)`, for `n >= 1`.
pub fn stirling_approx(n: u64) -> f64 {
    let n = n as f64;
    n * n.ln() - n + 0.5 * (2.0 * std::f64::consts::PI * n).ln()
}

/// Erlang CDF `P(Gamma(m,1) <= x) = 1 - e^{-x} sum_{k<m} x^k/k!` for integer
/// shape `m >= 1`.
///
/// For `x < m + 1` the complementary closed form cancels catastrophically
/// (the result is tiny while the sum is near `e^x`), so the lower series
/// `e^{-x} sum_{k>=m} x^k/k!` is used there instead.
pub fn gamma_cdf(m: u32, x: f64) -> f64 {
    debug_assert!(m >= 1);
    if x <= 0.0 {
        return 0.0;
    }
    if x < m as f64 + 1.0 {
        log_gamma_cdf(m, x).exp()
    } else {
        // Complement sum is moderate here; no cancellation.
        let mut term = (-x).exp();
        let mut q = term;
        for k in 1..m {
            term *= x / k as f64;
            q += term;
        }
        (-q).ln_1p().exp()
    }
}

/// ln P(Gamma(m,1) <= x); `-inf` at `x = 0`.
///
/// Needed in log-scale because `mu_j = 2^j F_j(a)` underflows long before the
/// saddle level is reached (j close to t close to 100).
pub fn log_gamma_cdf(m: u32, x: f64) -> f64 {
    debug_assert!(m >= 1);
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x < m as f64 + 1.0 {
        // P(Gamma(m,1)<=x) = e^{-x} sum_{k>=m} x^k/k!
        //                  = e^{-x} x^m/m! * sum_{i>=0} x^i m!/(m+i)!
        let log_t0 = -x + m as f64 * x.ln() - log_factorial(m as u64);
        let mut sum = 1.0;
        let mut term = 1.0;
        let mut i = 1u64;
        loop {
            term *= x / (m as f64 + i as f64);
            sum += term;
            if term < sum * 1e-17 || i > 10_000 {
                break;
            }
            i += 1;
        }
        log_t0 + sum.ln()
    } else {
        gamma_cdf(m, x).ln()
    }
}

/// Small-ball sandwich at `(m, x)` with the exact CDF as midpoint.
pub fn small_ball(m: u32, x: f64) -> Result<SmallBallSandwich, AnalyticError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(AnalyticError::SmallBallDomain(x));
    }
    let log_xm = if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        m as f64 * x.ln() - log_factorial(m as u64)
    };
    let lower = (log_xm - x).exp();
    let point = gamma_cdf(m, x);
    let upper = log_xm.exp().min(1.0);
    Ok(SmallBallSandwich { m, x, lower, point, upper })
}

/// `exp(-A ln(A/2) + A) / ln(A/2)`, an upper bound on
/// `int_A^inf exp(-x ln(x/2) + x) dx`, for `A > 2`.
pub fn tail_integral_bound(a: f64) -> Result<f64, AnalyticError> {
    if a <= 2.0 {
        return Err(AnalyticError::TailDomain(a));
    }
    let log_half = (a / 2.0).ln();
    Ok((-a * log_half + a).exp() / log_half)
}
