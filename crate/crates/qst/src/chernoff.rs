//! MGF barrier machinery: the scalar comparison map `G_theta`, the explicit
//! barrier `x_theta = exp(2 e^theta)`, and the pointwise Chernoff majorant for
//! the upper tail together with its rate-function lower bound.
//!
//! All barrier-scale quantities are carried in log-scale; `x_theta` overflows
//! linear `f64` already for theta around 1.87.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChernoffError {
    #[error("G_theta requires x >= 1, got {0}")]
    GDomain(f64),
    #[error("Chernoff majorant is stated for t > 2, got {0}")]
    TDomain(f64),
    #[error("scalar iteration left the representable log-scale range at step {0}")]
    Overflow(usize),
}

/// Outcome of checking `G_theta(x_theta) <= x_theta` at the explicit barrier.
///
/// `x_theta` is kept as `log_x_theta = 2 e^theta`; the linear field is
/// populated only while it is representable.
#[derive(Debug, Clone, Copy)]
pub struct BarrierCheck {
    pub theta: f64,
    pub log_x_theta: f64,
    pub x_theta: Option<f64>,
    /// ln G_theta(x_theta), via the identity G_theta(x_theta) = x_theta - 1.
    pub log_g_at_barrier: f64,
    pub satisfied: bool,
}

/// One row of the explicit tail majorant table.
#[derive(Debug, Clone, Copy)]
pub struct ChernoffRow {
    pub t: f64,
    /// Optimal Chernoff parameter ln(t/2).
    pub theta_star: f64,
    /// min(1, exp(-t ln(t/2) + t)), an upper bound on P(S > t).
    pub majorant: f64,
    /// t ln t - (1 + ln 2) t = -ln(majorant) whenever the majorant is nontrivial.
    pub rate_lower: f64,
}

/// `G_theta(x) = 2 e^theta (x-1)/ln x` on `[1, inf)`, with the continuity
/// value `2 e^theta` at `x = 1`.
pub fn g_theta(theta: f64, x: f64) -> Result<f64, ChernoffError> {
    if x < 1.0 {
        return Err(ChernoffError::GDomain(x));
    }
    let scale = 2.0 * theta.exp();
    let ratio = if x - 1.0 < 1e-8 {
        // (x-1)/ln x -> 1 + (x-1)/2 as x -> 1; avoids 0/0.
        1.0 + (x - 1.0) / 2.0
    } else {
        (x - 1.0) / x.ln()
    };
    Ok(scale * ratio)
}

/// Checks the barrier inequality at `x_theta = exp(2 e^theta)`.
///
/// The proof-level identity `G_theta(x_theta) = x_theta - 1` is used directly,
/// so `satisfied` holds for every positive theta.
pub fn barrier_check(theta: f64) -> BarrierCheck {
    let log_x_theta = 2.0 * theta.exp();
    let x_theta = if log_x_theta < 700.0 {
        Some(log_x_theta.exp())
    } else {
        None
    };
    // ln(x_theta - 1) = log_x_theta + ln(1 - exp(-log_x_theta)).
    let log_g_at_barrier = log_x_theta + (-(-log_x_theta).exp()).ln_1p();
    BarrierCheck {
        theta,
        log_x_theta,
        x_theta,
        log_g_at_barrier,
        satisfied: log_g_at_barrier <= log_x_theta,
    }
}

/// Iterates `a_{k+1} = G_theta(a_k)` from `a_0 = e^theta` in log-scale,
/// returning `ln a_0, ..., ln a_n`.
///
/// Every iterate must stay below the barrier `x_theta`; the sequence is the
/// numerical realization of the MGF domination argument.
pub fn scalar_iteration(theta: f64, n_steps: usize) -> Result<Vec<f64>, ChernoffError> {
    let log_scale = std::f64::consts::LN_2 + theta;
    let mut seq = Vec::with_capacity(n_steps + 1);
    let mut log_a = theta; // ln psi_0(theta) = theta
    seq.push(log_a);
    for step in 0..n_steps {
        // ln G(a) = ln 2 + theta + ln(a - 1) - ln ln a, all from ln a.
        let log_am1 = if log_a < 700.0 {
            log_a.exp_m1().ln()
        } else {
            log_a + (-(-log_a).exp()).ln_1p()
        };
        log_a = log_scale + log_am1 - log_a.ln();
        if !log_a.is_finite() {
            return Err(ChernoffError::Overflow(step + 1));
        }
        seq.push(log_a);
    }
    Ok(seq)
}

/// Explicit tail majorant and rate lower bound at `t > 2`.
pub fn chernoff_majorant(t: f64) -> Result<ChernoffRow, ChernoffError> {
    if t <= 2.0 {
        return Err(ChernoffError::TDomain(t));
    }
    let theta_star = (t / 2.0).ln();
    let exponent = -t * theta_star + t;
    Ok(ChernoffRow {
        t,
        theta_star,
        majorant: exponent.exp().min(1.0),
        rate_lower: t * t.ln() - (1.0 + std::f64::consts::LN_2) * t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_theta_continuity_and_values() {
        for theta in [0.1, 1.0, 3.0] {
            let g = g_theta(theta, 1.0).unwrap();
            assert!((g - 2.0 * theta.exp()).abs() < 1e-14);
        }
        let e = std::f64::consts::E;
        assert!((g_theta(0.0, e).unwrap() - 2.0 * (e - 1.0)).abs() < 1e-12);
        assert!((g_theta(0.0, e).unwrap() - 3.43656).abs() < 1e-5);
        let g = g_theta(std::f64::consts::LN_2, e * e).unwrap();
        assert!((g - 2.0 * (e * e - 1.0)).abs() < 1e-12);
        assert!(g_theta(1.0, 0.99).is_err());
    }

    #[test]
    fn barrier_identity_log_grid() {
        // G_theta(x_theta) = x_theta - 1, relative tolerance 1e-10 in
        // log-space, over a log-grid of theta.
        let mut theta = 1e-6;
        while theta <= 5.0 {
            let b = barrier_check(theta);
            assert!(b.satisfied, "theta={theta}");
            if let Some(x) = b.x_theta {
                let g = g_theta(theta, x).unwrap();
                assert!(
                    (g - (x - 1.0)).abs() <= 1e-10 * x,
                    "theta={theta}: g={g} x-1={}",
                    x - 1.0
                );
            }
            theta *= 1.3;
        }
    }

    #[test]
    fn barrier_examples() {
        let b = barrier_check(5.0f64.ln());
        assert!((b.log_x_theta - 10.0).abs() < 1e-12);
        assert!(b.satisfied);
        let b = barrier_check(1e-9);
        assert!((b.x_theta.unwrap() - (2.0f64).exp()).abs() < 1e-3);
        assert!(b.satisfied);
        let b = barrier_check(5.0);
        assert!((b.log_x_theta - 2.0 * (5.0f64).exp()).abs() < 1e-9);
        assert!(b.log_x_theta > 296.0 && b.log_x_theta < 298.0);
        assert!(b.satisfied && b.log_g_at_barrier.is_finite());
    }

    #[test]
    fn scalar_iteration_first_step_and_domination() {
        // a_1 = G_{0.5}(e^{0.5}) = 2 e^{0.5} (e^{0.5}-1)/0.5, direct substitution.
        let seq = scalar_iteration(0.5, 1).unwrap();
        let a1 = 2.0 * 0.5f64.exp() * (0.5f64.exp() - 1.0) / 0.5;
        assert!((seq[1].exp() - a1).abs() < 1e-12);

        // Long run stays under the barrier and is monotone.
        let seq = scalar_iteration(0.5, 200).unwrap();
        let barrier = 2.0 * 0.5f64.exp();
        for w in seq.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        for &a in &seq {
            assert!(a <= barrier + 1e-12);
        }
        assert!(seq[200].exp() <= barrier.exp() + 1e-9);

        // Tiny theta: iterates of essentially G_0 from 1, all below e^2.
        let seq = scalar_iteration(1e-9, 10).unwrap();
        for &a in &seq {
            assert!(a <= 2.0 + 1e-6);
        }
    }

    #[test]
    fn scalar_iteration_no_overflow_at_large_theta() {
        let seq = scalar_iteration(5.0, 10_000).unwrap();
        let barrier = 2.0 * 5.0f64.exp();
        for &a in &seq {
            assert!(a.is_finite() && a <= barrier + 1e-9);
        }
    }

    #[test]
    fn majorant_examples() {
        let row = chernoff_majorant(10.0).unwrap();
        assert!((row.theta_star - 5.0f64.ln()).abs() < 1e-15);
        assert!((row.majorant - (-10.0 * 5.0f64.ln() + 10.0).exp()).abs() < 1e-18);
        assert!((row.majorant - 2.2556e-3).abs() < 1e-7);
        assert!((row.rate_lower - 6.09438).abs() < 1e-5);
        assert!((row.rate_lower + row.majorant.ln()).abs() < 1e-10);

        // Boundary of nontriviality at t = 2e.
        let row = chernoff_majorant(2.0 * std::f64::consts::E).unwrap();
        assert!((row.majorant - 1.0).abs() < 1e-12);
        assert!(row.rate_lower.abs() < 1e-10);

        // Clamp branch below 2e.
        let row = chernoff_majorant(4.0).unwrap();
        assert_eq!(row.majorant, 1.0);

        assert!(chernoff_majorant(2.0).is_err());
        assert!(chernoff_majorant(1.5).is_err());
    }

    #[test]
    fn closed_form_theta_is_the_infimum() {
        // inf over a fine theta-grid of exp(-theta t + 2 e^theta) matches the
        // closed form within 1e-6 relative.
        for t in [6.0, 8.0, 10.0, 20.0, 50.0] {
            let closed = chernoff_majorant(t).unwrap();
            let mut best = f64::INFINITY;
            let mut theta = 1e-4;
            while theta < 5.0 {
                best = best.min(-theta * t + 2.0 * theta.exp());
                theta += 1e-5;
            }
            let exact = -t * (t / 2.0).ln() + t;
            assert!(best >= exact - 1e-12, "grid beat the closed form at t={t}");
            assert!(
                (best.exp() / closed.majorant.min(exact.exp()) - 1.0).abs() < 1e-6,
                "t={t}"
            );
        }
    }
}
