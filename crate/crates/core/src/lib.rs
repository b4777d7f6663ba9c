//! Distributed global minimization of univariate objectives with Chebyshev
//! proxies, privacy-preserving push-sum dissemination over time-varying
//! digraphs, and analytic plus empirical data-privacy bounds.
//!
//! The pipeline each agent runs:
//!
//! 1. agree on the feasible interval by max/min consensus ([`consensus::max_consensus_interval`]);
//! 2. build a local proxy by adaptive Chebyshev interpolation ([`cheb::adaptive_interpolate`]);
//! 3. average the coefficient vectors through the perturbed, blockwise push-sum
//!    protocol with distributed stopping ([`consensus::run_dissemination`]);
//! 4. minimize the recovered proxy ([`polyopt::minimize_proxy`]).
//!
//! [`runner::run_prcpoa`] strings these together and checks the answer
//! against a brute-force oracle.

pub mod cheb;
pub mod cli;
pub mod consensus;
pub mod error;
pub mod netsim;
pub mod polyopt;
pub mod privacy;
pub mod rng;
pub mod runner;
pub mod stats;

pub use cheb::{ChebProxy, Interval, ObjectiveFn};
pub use error::{Error, Result};
