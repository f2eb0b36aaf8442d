//! Episodic MDP environments and an exact dynamic-programming planner.
//!
//! Environments are finite linear MDPs: transition kernels and rewards are
//! linear in a known d-dimensional feature map. Tabular MDPs embed via the
//! canonical basis. All specs are immutable after construction and validated
//! against the model's norm and stochasticity assumptions.

mod dp;
mod linear;
mod random;
mod tabular;

pub use dp::{optimal_values, policy_value, ValueTables};
pub use linear::{HardInstanceMeta, LinearMdpSpec};
pub use random::random_linear;
pub use tabular::{embed_tabular, random_tabular, TabularMdpSpec};

use crate::covariance::FeatureVec;
use crate::error::{Error, Result};

/// Kernel/reward validity tolerance.
pub const KERNEL_TOL: f64 = 1e-9;

/// One rolled-out episode: states `x_1..x_{H+1}`, actions, rewards and the
/// executed features `phi(x_h, a_h)`.
#[derive(Debug, Clone)]
pub struct EpisodeTrajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub features: Vec<FeatureVec>,
}

impl EpisodeTrajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.states.len() != horizon + 1
            || self.actions.len() != horizon
            || self.rewards.len() != horizon
            || self.features.len() != horizon
        {
            return Err(Error::InvalidParameter(
                "trajectory lengths inconsistent with horizon".into(),
            ));
        }
        if self.rewards.iter().any(|r| !(-KERNEL_TOL..=1.0 + KERNEL_TOL).contains(r)) {
            return Err(Error::InvalidParameter("reward outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Samples an index from `probs` by inverse CDF on a single uniform draw.
pub(crate) fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.max(0.0);
        if u < acc {
            return i;
        }
    }
    // Roundoff can leave acc slightly below 1; land on the last positive entry.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}
