//! Bounds for the Quickselect worst-case limit law.
//!
//! The limit variable `S` of `T_n / n` (worst-case comparison count over all
//! target ranks, normalized) solves `S = 1 + max(U S', (1-U) S'')` in
//! distribution. This crate computes:
//!
//! - rigorous upper bounds on `E[S]` by iterating a conservative discretized
//!   CDF operator ([`mesh`]),
//! - an explicit Chernoff tail majorant and rate-function lower bound
//!   ([`chernoff`]),
//! - a second-moment tail lower bound from level counts of the weight tree
//!   ([`levelcount`]),
//! - a seeded Monte Carlo oracle for `T_n` and truncated path suprema
//!   ([`simulator`]), used to cross-check everything ([`verify`]).

pub mod analytic;
pub mod chernoff;
pub mod levelcount;
pub mod mesh;
pub mod report;
pub mod simulator;
pub mod verify;
