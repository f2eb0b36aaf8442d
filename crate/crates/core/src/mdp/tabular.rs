//! Tabular MDPs and their canonical-basis embedding into linear MDPs
//! (`d = S * A`, `phi(s, a) = e_(s,a)`).

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{LinearMdpSpec, KERNEL_TOL};
use crate::covariance::FeatureVec;
use crate::error::{Error, Result};

/// Explicit tabular MDP: per-level transition tensor and reward matrix.
#[derive(Debug, Clone)]
pub struct TabularMdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    /// `transitions[h][s][a][s']`.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `rewards[h][s][a]` in [0, 1].
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub initial_state: usize,
}

impl TabularMdpSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n_states == 0 || self.n_actions == 0 || self.horizon == 0 {
            return fail("S, A, H must be >= 1".into());
        }
        if self.initial_state >= self.n_states {
            return fail("initial state out of range".into());
        }
        if self.transitions.len() != self.horizon || self.rewards.len() != self.horizon {
            return fail("per-level tables must match horizon".into());
        }
        for h in 0..self.horizon {
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    let row = &self.transitions[h][s][a];
                    if row.len() != self.n_states {
                        return fail(format!("transition row ({h},{s},{a}) wrong length"));
                    }
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > KERNEL_TOL
                        || row.iter().any(|&p| !(0.0..=1.0 + KERNEL_TOL).contains(&p))
                    {
                        return fail(format!("transition row ({h},{s},{a}) not stochastic"));
                    }
                    let r = self.rewards[h][s][a];
                    if !(0.0..=1.0).contains(&r) {
                        return fail(format!("reward ({h},{s},{a}) = {r} outside [0, 1]"));
                    }
                }
            }
        }
        Ok(())
    }

    /// One environment transition, sampled the same way as the linear form
    /// (single uniform draw, inverse CDF).
    pub fn step(
        &self,
        level: usize,
        state: usize,
        action: usize,
        rng: &mut impl Rng,
    ) -> Result<(f64, usize)> {
        if level >= self.horizon || state >= self.n_states || action >= self.n_actions {
            return Err(Error::InvalidParameter("step out of range".into()));
        }
        let reward = self.rewards[level][state][action];
        let next = super::sample_categorical(&self.transitions[level][state][action], rng.random());
        Ok((reward, next))
    }
}

/// Canonical-basis embedding: `d = S * A`, `phi(s,a) = e_(s,a)`,
/// `mu_h(x')[(s,a)] = P_h(x'|s,a)`, `theta_h[(s,a)] = r_h(s,a)`.
pub fn embed_tabular(spec: &TabularMdpSpec) -> Result<LinearMdpSpec> {
    spec.validate()?;
    let (s_n, a_n, horizon) = (spec.n_states, spec.n_actions, spec.horizon);
    let d = s_n * a_n;
    let index = |s: usize, a: usize| s * a_n + a;

    let features = (0..s_n)
        .map(|s| (0..a_n).map(|a| FeatureVec::basis(d, index(s, a))).collect())
        .collect();
    let measures = (0..horizon)
        .map(|h| {
            (0..s_n)
                .map(|xp| {
                    DVector::from_fn(d, |i, _| {
                        let (s, a) = (i / a_n, i % a_n);
                        spec.transitions[h][s][a][xp]
                    })
                })
                .collect()
        })
        .collect();
    let reward_vecs = (0..horizon)
        .map(|h| {
            DVector::from_fn(d, |i, _| {
                let (s, a) = (i / a_n, i % a_n);
                spec.rewards[h][s][a]
            })
        })
        .collect();
    LinearMdpSpec::new(
        d,
        horizon,
        features,
        measures,
        reward_vecs,
        spec.initial_state,
        None,
    )
}

/// Seeded random tabular MDP. Each transition row has `ceil(sparsity * S)`
/// nonzero entries drawn from a symmetric Dirichlet; rewards are uniform in
/// [0, 1].
pub fn random_tabular(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    sparsity: f64,
    seed: u64,
) -> Result<TabularMdpSpec> {
    if n_states == 0 || n_actions == 0 || horizon == 0 {
        return Err(Error::InvalidParameter("S, A, H must be >= 1".into()));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sparsity must be in (0, 1], got {sparsity}"
        )));
    }
    let support = ((sparsity * n_states as f64).ceil() as usize).clamp(1, n_states);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let mut transitions = vec![vec![vec![vec![0.0; n_states]; n_actions]; n_states]; horizon];
    let mut rewards = vec![vec![vec![0.0; n_actions]; n_states]; horizon];
    for level in transitions.iter_mut() {
        for per_state in level.iter_mut() {
            for row in per_state.iter_mut() {
                let idx = sample(&mut rng, n_states, support);
                // Symmetric Dirichlet(1) via normalized Exp(1) draws.
                let mut total = 0.0;
                let draws: Vec<f64> = (0..support)
                    .map(|_| {
                        let e = -(1.0 - rng.random::<f64>()).ln();
                        total += e;
                        e
                    })
                    .collect();
                for (slot, e) in idx.into_iter().zip(draws) {
                    row[slot] = e / total;
                }
            }
        }
    }
    for level in rewards.iter_mut() {
        for per_state in level.iter_mut() {
            for r in per_state.iter_mut() {
                *r = rng.random::<f64>();
            }
        }
    }
    let spec = TabularMdpSpec {
        n_states,
        n_actions,
        horizon,
        transitions,
        rewards,
        initial_state: 0,
    };
    spec.validate()?;
    Ok(spec)
}
