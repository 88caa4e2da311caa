//! Path-specific causal influence for finite discrete structural causal models.
//!
//! The library has two halves that validate each other:
//!
//! - An **exact oracle**: brute-force enumeration of the counterfactual laws
//!   produced by information-transfer interventions on a five-variable SCM
//!   `W -> A -> Z -> M -> Y`, including the covariance decomposition of the
//!   total causal influence into path-specific components and the analogous
//!   decomposition of the average treatment effect for binary exposures.
//! - A **semiparametric estimator**: cross-fitted one-step estimators built
//!   from the canonical gradients of the target functionals, with Wald
//!   confidence intervals.
//!
//! The [`verify`] module turns the structural guarantees (sharp nulls,
//! monotonicity, additivity, second-order von Mises remainders, CI coverage)
//! into seeded, falsifiable experiments; the `pathflux` binary exposes
//! simulation, oracle evaluation, estimation, and verification as subcommands.
//!
//! ```
//! use pathflux::{builtin, estimator, oracle};
//!
//! let scm = builtin::scm_t1();
//! let truth = oracle::path_decomposition(&scm)?;
//! let data = scm.sample(4000, 1)?;
//! let est = estimator::decompose_paths(&data, &estimator::EstimateConfig::default())?;
//! assert!((est.theta.point - est.component_sum()).abs() < 1e-12);
//! assert!(est.theta.covers(truth.theta));
//! # Ok::<(), pathflux::Error>(())
//! ```

#![forbid(unsafe_code)]

pub mod builtin;
pub mod cli;
pub mod eif;
pub mod error;
pub mod estimator;
pub mod identify;
pub mod nuisance;
pub mod oracle;
pub mod rng;
pub mod scm;
pub mod target;
pub mod verify;

pub use error::{Error, Result};
pub use scm::{Dataset, DiscreteScm, JointLaw};
pub use target::{Target, Weight};
