//! Low-switching-cost least-squares value iteration (LSVI-UCB) for episodic
//! linear MDPs.
//!
//! The crate provides:
//! - [`covariance`]: per-level feature covariance matrices with rank-1
//!   updates, incremental inverse and log-determinant tracking, and the
//!   PSD-domination criterion that gates policy switches.
//! - [`mdp`]: finite linear MDP environments, tabular MDPs with the
//!   canonical-basis embedding, random instance generators, and an exact
//!   dynamic-programming planner.
//! - [`hard_instance`]: the combination-lock instance family used to
//!   demonstrate the switching-cost lower bound.
//! - [`agent`]: the low-switching LSVI-UCB agent and an always-switch
//!   baseline.
//! - [`metrics`]: regret curves, global/local switching costs and scaling
//!   fits.
//! - [`experiment`]: configuration-driven experiment runner backing the CLI.

pub mod agent;
pub mod covariance;
pub mod error;
pub mod experiment;
pub mod hard_instance;
pub mod jsonfmt;
pub mod mdp;
pub mod metrics;

pub use error::{Error, Result};
