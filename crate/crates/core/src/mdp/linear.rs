//! Finite linear MDP specification: `P_h(x'|x,a) = <phi(x,a), mu_h(x')>` and
//! `r_h(x,a) = <phi(x,a), theta_h>`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::KERNEL_TOL;
use crate::covariance::FeatureVec;
use crate::error::{Error, Result};

/// Schema version for the JSON spec format.
pub const SPEC_VERSION: u32 = 1;

/// Provenance block attached to combination-lock instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardInstanceMeta {
    pub d0: usize,
    pub h0: usize,
    pub h_star: usize,
    pub correct_actions: Vec<usize>,
    pub j_star: usize,
    pub reconciliations: Vec<String>,
}

/// Full generative description of a finite linear MDP.
#[derive(Debug, Clone)]
pub struct LinearMdpSpec {
    d: usize,
    horizon: usize,
    n_states: usize,
    /// Feasible action count per state.
    actions_per_state: Vec<usize>,
    /// `features[x][a] = phi(x, a)`.
    features: Vec<Vec<FeatureVec>>,
    /// `measures[h][x'] = mu_h(x')`, so `P_h(x'|x,a) = <phi(x,a), mu_h(x')>`.
    measures: Vec<Vec<DVector<f64>>>,
    /// `reward_vecs[h] = theta_h`.
    reward_vecs: Vec<DVector<f64>>,
    initial_state: usize,
    hard_instance_meta: Option<HardInstanceMeta>,
}

impl LinearMdpSpec {
    /// Builds and validates a spec.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d: usize,
        horizon: usize,
        features: Vec<Vec<FeatureVec>>,
        measures: Vec<Vec<DVector<f64>>>,
        reward_vecs: Vec<DVector<f64>>,
        initial_state: usize,
        hard_instance_meta: Option<HardInstanceMeta>,
    ) -> Result<Self> {
        let n_states = features.len();
        let actions_per_state = features.iter().map(Vec::len).collect();
        let spec = LinearMdpSpec {
            d,
            horizon,
            n_states,
            actions_per_state,
            features,
            measures,
            reward_vecs,
            initial_state,
            hard_instance_meta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self, state: usize) -> usize {
        self.actions_per_state[state]
    }

    pub fn max_actions(&self) -> usize {
        self.actions_per_state.iter().copied().max().unwrap_or(0)
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn hard_instance_meta(&self) -> Option<&HardInstanceMeta> {
        self.hard_instance_meta.as_ref()
    }

    pub fn feature(&self, state: usize, action: usize) -> &FeatureVec {
        &self.features[state][action]
    }

    pub fn measure(&self, level: usize, state: usize) -> &DVector<f64> {
        &self.measures[level][state]
    }

    /// Expected reward `r_h(x, a)`; `level` is 0-based.
    pub fn reward(&self, level: usize, state: usize, action: usize) -> f64 {
        self.features[state][action]
            .as_vector()
            .dot(&self.reward_vecs[level])
    }

    /// Transition probabilities over successor states; `level` is 0-based.
    pub fn transition_probs(&self, level: usize, state: usize, action: usize) -> Vec<f64> {
        let phi = self.features[state][action].as_vector();
        (0..self.n_states)
            .map(|x| phi.dot(&self.measures[level][x]))
            .collect()
    }

    /// One environment transition at 0-based `level`: returns the reward and
    /// the sampled successor (inverse CDF on one uniform draw).
    pub fn step(
        &self,
        level: usize,
        state: usize,
        action: usize,
        rng: &mut impl Rng,
    ) -> Result<(f64, usize)> {
        if level >= self.horizon {
            return Err(Error::InvalidParameter(format!(
                "level {level} out of range for horizon {}",
                self.horizon
            )));
        }
        if state >= self.n_states || action >= self.actions_per_state[state] {
            return Err(Error::InvalidParameter(format!(
                "infeasible state-action ({state}, {action})"
            )));
        }
        let reward = self.reward(level, state, action);
        let probs = self.transition_probs(level, state, action);
        let next = super::sample_categorical(&probs, rng.random::<f64>());
        Ok((reward, next))
    }

    /// Checks the model assumptions: feature and measure norms, stochastic
    /// kernels and rewards in [0, 1].
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        if self.d == 0 || self.horizon == 0 || self.n_states == 0 {
            return fail("d, H and state count must be >= 1".into());
        }
        if self.initial_state >= self.n_states {
            return fail("initial state out of range".into());
        }
        if self.features.len() != self.n_states {
            return fail("feature table size mismatch".into());
        }
        if self.measures.len() != self.horizon || self.reward_vecs.len() != self.horizon {
            return fail("measures/reward_vecs must have one entry per level".into());
        }
        for (x, row) in self.features.iter().enumerate() {
            if row.is_empty() {
                return fail(format!("state {x} has no feasible actions"));
            }
            for (a, phi) in row.iter().enumerate() {
                if phi.dim() != self.d {
                    return fail(format!("phi({x},{a}) has wrong dimension"));
                }
                // FeatureVec construction already bounds the norm.
            }
        }
        let sqrt_d = (self.d as f64).sqrt();
        for (h, theta) in self.reward_vecs.iter().enumerate() {
            if theta.len() != self.d {
                return fail(format!("theta_{h} has wrong dimension"));
            }
            if theta.norm() > sqrt_d + KERNEL_TOL {
                return fail(format!("||theta_{h}|| exceeds sqrt(d)"));
            }
        }
        for (h, level) in self.measures.iter().enumerate() {
            if level.len() != self.n_states {
                return fail(format!("measures at level {h} must cover all states"));
            }
            for (x, mu) in level.iter().enumerate() {
                if mu.len() != self.d {
                    return fail(format!("mu_{h}({x}) has wrong dimension"));
                }
                if mu.norm() > sqrt_d + KERNEL_TOL {
                    return fail(format!("||mu_{h}({x})|| exceeds sqrt(d)"));
                }
            }
        }
        for h in 0..self.horizon {
            for x in 0..self.n_states {
                for a in 0..self.actions_per_state[x] {
                    let r = self.reward(h, x, a);
                    if !(-KERNEL_TOL..=1.0 + KERNEL_TOL).contains(&r) {
                        return fail(format!("r_{h}({x},{a}) = {r} outside [0, 1]"));
                    }
                    let probs = self.transition_probs(h, x, a);
                    let mut total = 0.0;
                    for (xp, p) in probs.iter().enumerate() {
                        if !(-KERNEL_TOL..=1.0 + KERNEL_TOL).contains(p) {
                            return fail(format!(
                                "P_{h}({xp}|{x},{a}) = {p} outside [0, 1]"
                            ));
                        }
                        total += p;
                    }
                    if (total - 1.0).abs() > KERNEL_TOL {
                        return fail(format!(
                            "kernel row ({x},{a}) at level {h} sums to {total}"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Serializes to the versioned JSON spec format (17-significant-digit
    /// floats).
    pub fn to_json(&self) -> Result<String> {
        crate::jsonfmt::to_string_17sig_pretty(&SpecJson::from(self))
    }

    /// Parses and validates a spec from the JSON format.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: SpecJson = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("spec parse error at {}: {}", e.path(), e)))?;
        raw.try_into()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecJson {
    spec_version: u32,
    d: usize,
    #[serde(rename = "H")]
    horizon: usize,
    features: Vec<Vec<Vec<f64>>>,
    measures: Vec<Vec<Vec<f64>>>,
    reward_vecs: Vec<Vec<f64>>,
    initial_state: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hard_instance_meta: Option<HardInstanceMeta>,
}

impl From<&LinearMdpSpec> for SpecJson {
    fn from(spec: &LinearMdpSpec) -> Self {
        SpecJson {
            spec_version: SPEC_VERSION,
            d: spec.d,
            horizon: spec.horizon,
            features: spec
                .features
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|phi| phi.as_vector().iter().copied().collect())
                        .collect()
                })
                .collect(),
            measures: spec
                .measures
                .iter()
                .map(|lvl| lvl.iter().map(|mu| mu.iter().copied().collect()).collect())
                .collect(),
            reward_vecs: spec
                .reward_vecs
                .iter()
                .map(|t| t.iter().copied().collect())
                .collect(),
            initial_state: spec.initial_state,
            hard_instance_meta: spec.hard_instance_meta.clone(),
        }
    }
}

impl TryFrom<SpecJson> for LinearMdpSpec {
    type Error = Error;

    fn try_from(raw: SpecJson) -> Result<Self> {
        if raw.spec_version != SPEC_VERSION {
            return Err(Error::Config(format!(
                "unsupported spec_version {} (expected {SPEC_VERSION})",
                raw.spec_version
            )));
        }
        let features = raw
            .features
            .into_iter()
            .map(|row| row.iter().map(|v| FeatureVec::from_slice(v)).collect())
            .collect::<Result<Vec<Vec<FeatureVec>>>>()?;
        let measures = raw
            .measures
            .into_iter()
            .map(|lvl| lvl.into_iter().map(DVector::from_vec).collect())
            .collect();
        let reward_vecs = raw.reward_vecs.into_iter().map(DVector::from_vec).collect();
        LinearMdpSpec::new(
            raw.d,
            raw.horizon,
            features,
            measures,
            reward_vecs,
            raw.initial_state,
            raw.hard_instance_meta,
        )
    }
}
