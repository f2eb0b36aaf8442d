//! Random linear MDP instances beyond the tabular embedding.
//!
//! Construction: per level, sample `d` anchor distributions over states and
//! take them as the coordinates of `mu_h`; every feature is a point on the
//! probability simplex (so each kernel row is a convex mixture of the anchors
//! and `||phi|| <= 1` holds automatically); reward vectors have entries in
//! [0, 1], which keeps every reward inside [0, 1].

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::LinearMdpSpec;
use crate::covariance::FeatureVec;
use crate::error::{Error, Result};

fn dirichlet(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|e| e / total).collect()
}

/// Seeded random linear MDP with `n_actions` feasible actions at every state.
pub fn random_linear(
    d: usize,
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    seed: u64,
) -> Result<LinearMdpSpec> {
    if d == 0 || horizon == 0 || n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidParameter(
            "d, H, n_states, n_actions must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // anchors[h][j] is a distribution over states; mu_h(x')[j] = anchors[h][j][x'].
    let anchors: Vec<Vec<Vec<f64>>> = (0..horizon)
        .map(|_| (0..d).map(|_| dirichlet(n_states, &mut rng)).collect())
        .collect();
    let measures = (0..horizon)
        .map(|h| {
            (0..n_states)
                .map(|x| DVector::from_fn(d, |j, _| anchors[h][j][x]))
                .collect()
        })
        .collect();
    let features = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| FeatureVec::from_slice(&dirichlet(d, &mut rng)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let reward_vecs = (0..horizon)
        .map(|_| DVector::from_fn(d, |_, _| rng.random::<f64>()))
        .collect();

    // Construction is closed under the invariants; a failure here is a bug
    // and must surface, not loop.
    LinearMdpSpec::new(d, horizon, features, measures, reward_vecs, 0, None)
}
