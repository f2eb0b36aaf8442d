//! Combination-lock linear MDP family (dimension `d = 4*d0`, horizon
//! `H = 2*H0`).
//!
//! The agent starts at `u` and alternates between `u` (odd steps, `d0`
//! actions) and a lock state `s_{t,i}` (even steps, single action). Entering
//! the correct lock state at every stage `t <= h*` leads to the rewarding
//! sink `v` at step `2*h* + 1`; a single wrong action falls into the
//! absorbing trap `w`. Only `v` pays reward, so `V_1*(u) = H - 2*h*` and any
//! fixed wrong policy earns nothing.
//!
//! Feature layout (0-based coordinates in `R^{4*d0}`):
//! - `phi(u, a_j) = e_j` for `j in [0, d0)`,
//! - `phi(s_{t,i}, ~a) = e_{2*d0 + i}` (independent of the stage `t`),
//! - `phi(v, ~a) = e_{3*d0}`, `phi(w, ~a) = e_{4*d0 - 1}`,
//! - coordinates `[d0, 2*d0)` and `(3*d0, 4*d0 - 1)` are unused by features.
//!
//! Because lock features are stage-independent, transition behavior is keyed
//! off the step index: the per-level measures make the lock coordinate
//! `2*d0 + i` act as "stage `h/2` lock state `i`" at even level `h`, which
//! realizes the lock without changing any feature vector.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::covariance::FeatureVec;
use crate::error::{Error, Result};
use crate::mdp::{EpisodeTrajectory, HardInstanceMeta, LinearMdpSpec};

/// Either a fixed value or "sample from the instance distribution".
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Draw<T> {
    Fixed(T),
    Sample,
}

/// Parameters of a combination-lock instance.
#[derive(Debug, Clone)]
pub struct HardInstanceParams {
    /// Action count at `u`; `d = 4 * d0`. Must be >= 2.
    pub d0: usize,
    /// Lock depth budget; `H = 2 * h0`.
    pub h0: usize,
    /// Reward depth `h*` in `1..=h0`, or sampled uniformly.
    pub h_star: Draw<usize>,
    /// Correct action indices (0-based, length `h*`), or sampled uniformly.
    pub correct_actions: Draw<Vec<usize>>,
    /// Block index in {0, 1} for the extra coordinate recorded on the
    /// `v`-entry measure; block 1 is dead by construction, block 0 would
    /// collide with `phi(u, .)` and is dropped (see metadata).
    pub j_star: usize,
    pub seed: u64,
}

impl HardInstanceParams {
    pub fn sampled(d0: usize, h0: usize, seed: u64) -> Self {
        HardInstanceParams {
            d0,
            h0,
            h_star: Draw::Sample,
            correct_actions: Draw::Sample,
            j_star: 1,
            seed,
        }
    }

    pub fn fixed(d0: usize, h0: usize, h_star: usize, correct_actions: Vec<usize>) -> Self {
        HardInstanceParams {
            d0,
            h0,
            h_star: Draw::Fixed(h_star),
            correct_actions: Draw::Fixed(correct_actions),
            j_star: 1,
            seed: 0,
        }
    }
}

/// State indexing inside the generated spec.
#[derive(Debug, Clone, Copy)]
pub struct HardInstanceLayout {
    pub d0: usize,
    pub h0: usize,
}

impl HardInstanceLayout {
    pub fn from_meta(meta: &HardInstanceMeta) -> Self {
        HardInstanceLayout {
            d0: meta.d0,
            h0: meta.h0,
        }
    }

    /// Lock state for stage `t` (0-based) and index `i`.
    pub fn lock_state(&self, t: usize, i: usize) -> usize {
        t * self.d0 + i
    }

    pub fn decode_lock(&self, state: usize) -> Option<(usize, usize)> {
        (state < self.h0 * self.d0).then(|| (state / self.d0, state % self.d0))
    }

    pub fn u(&self) -> usize {
        self.h0 * self.d0
    }

    pub fn v(&self) -> usize {
        self.h0 * self.d0 + 1
    }

    pub fn w(&self) -> usize {
        self.h0 * self.d0 + 2
    }

    pub fn n_states(&self) -> usize {
        self.h0 * self.d0 + 3
    }
}

/// Builds the lock as a validated linear MDP.
pub fn build_hard_instance(params: &HardInstanceParams) -> Result<LinearMdpSpec> {
    let d0 = params.d0;
    let h0 = params.h0;
    if d0 < 2 || h0 == 0 {
        return Err(Error::InvalidParameter("need d0 >= 2 and H0 >= 1".into()));
    }
    if params.j_star > 1 {
        return Err(Error::InvalidParameter("j_star must be 0 or 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
    let h_star = match &params.h_star {
        Draw::Fixed(h) => *h,
        Draw::Sample => rng.random_range(1..=h0),
    };
    if !(1..=h0).contains(&h_star) {
        return Err(Error::InvalidParameter(format!(
            "h_star {h_star} outside 1..={h0}"
        )));
    }
    let correct: Vec<usize> = match &params.correct_actions {
        Draw::Fixed(v) => v.clone(),
        Draw::Sample => (0..h_star).map(|_| rng.random_range(0..d0)).collect(),
    };
    if correct.len() != h_star || correct.iter().any(|&i| i >= d0) {
        return Err(Error::InvalidParameter(
            "correct_actions must have length h_star with indices in [0, d0)".into(),
        ));
    }

    let d = 4 * d0;
    let horizon = 2 * h0;
    let layout = HardInstanceLayout { d0, h0 };

    // Feature coordinates.
    let lock_coord = |i: usize| 2 * d0 + i;
    let v_coord = 3 * d0;
    let w_coord = 4 * d0 - 1;

    let mut features: Vec<Vec<FeatureVec>> = Vec::with_capacity(layout.n_states());
    for t in 0..h0 {
        for i in 0..d0 {
            debug_assert_eq!(features.len(), layout.lock_state(t, i));
            features.push(vec![FeatureVec::basis(d, lock_coord(i))]);
        }
    }
    features.push((0..d0).map(|j| FeatureVec::basis(d, j)).collect()); // u
    features.push(vec![FeatureVec::basis(d, v_coord)]); // v
    features.push(vec![FeatureVec::basis(d, w_coord)]); // w

    let mut reconciliations = vec![
        "lock transitions keyed off the step index (features are stage-independent)".into(),
        "feature coordinates read 0-based: lock block [2*d0, 3*d0), v at 3*d0, w at 4*d0 - 1"
            .into(),
        "v-entry measure attached to the level of the transition into v (step 2*h*)".into(),
    ];
    if params.j_star == 0 {
        reconciliations.push(
            "j_star = 0 selects the block used by phi(u, .); the extra coordinate is dropped \
             to keep kernel rows stochastic"
                .into(),
        );
    }

    // Per-level measures. mu_h(x')[c] is the probability of landing in x'
    // when the executed feature is e_c at 0-based level h (step h + 1).
    let mut measures: Vec<Vec<DVector<f64>>> = Vec::with_capacity(horizon);
    for level in 0..horizon {
        let step = level + 1; // 1-based step index
        let mut mu = vec![DVector::<f64>::zeros(d); layout.n_states()];
        // Sinks absorb at every level.
        mu[layout.v()][v_coord] = 1.0;
        mu[layout.w()][w_coord] = 1.0;
        if step % 2 == 1 {
            // From u: action a_j enters the stage-t lock state j.
            let t = step / 2; // 0-based stage
            for j in 0..d0 {
                mu[layout.lock_state(t, j)][j] = 1.0;
            }
            // Lock features are unreachable at odd steps; trap them.
            for i in 0..d0 {
                mu[layout.w()][lock_coord(i)] = 1.0;
            }
        } else {
            // From a lock state at stage t (1-based): the correct index
            // returns to u, or enters v at stage h*; everything else traps.
            let t = step / 2;
            for i in 0..d0 {
                if t <= h_star && i == correct[t - 1] {
                    if t == h_star {
                        mu[layout.v()][lock_coord(i)] = 1.0;
                    } else {
                        mu[layout.u()][lock_coord(i)] = 1.0;
                    }
                } else {
                    mu[layout.w()][lock_coord(i)] = 1.0;
                }
            }
            // u's action features are unreachable at even steps; trap them.
            mu[layout.w()].rows_mut(0, d0).fill(1.0);
            if t == h_star && params.j_star == 1 {
                // Dead coordinate in block 1 recording the j* variant's extra
                // index on the v-entry measure; no feature touches it.
                mu[layout.v()][d0 + correct[h_star - 1]] = 1.0;
            }
        }
        measures.push(mu);
    }

    // Reward 1 exactly at v.
    let reward_vecs = (0..horizon)
        .map(|_| {
            let mut theta = DVector::zeros(d);
            theta[v_coord] = 1.0;
            theta
        })
        .collect();

    let meta = HardInstanceMeta {
        d0,
        h0,
        h_star,
        correct_actions: correct,
        j_star: params.j_star,
        reconciliations,
    };
    LinearMdpSpec::new(
        d,
        horizon,
        features,
        measures,
        reward_vecs,
        layout.u(),
        Some(meta),
    )
    .map_err(|e| {
        Error::InvariantViolation(format!("hard-instance construction produced invalid spec: {e}"))
    })
}

/// Counts distinct wrong lock states (off the correct path) visited across
/// the given traces of a single run on the instance.
pub fn count_distinct_prefixes(
    traces: &[EpisodeTrajectory],
    meta: &HardInstanceMeta,
) -> Result<usize> {
    let layout = HardInstanceLayout::from_meta(meta);
    let horizon = 2 * meta.h0;
    let mut seen = std::collections::BTreeSet::new();
    for trace in traces {
        if trace.horizon() != horizon {
            return Err(Error::Contract(
                "trace horizon does not match the instance".into(),
            ));
        }
        for &state in &trace.states {
            if state >= layout.n_states() {
                return Err(Error::Contract("trace state outside the instance".into()));
            }
            if let Some((t, i)) = layout.decode_lock(state) {
                let on_path = t < meta.h_star && meta.correct_actions[t] == i;
                if !on_path {
                    seen.insert(state);
                }
            }
        }
    }
    Ok(seen.len())
}
