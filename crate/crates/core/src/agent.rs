//! Low-switching LSVI-UCB agent and the always-switch baseline.
//!
//! Per episode the agent (a) checks, per level, whether the covariance
//! inverse frozen at the last deployment is still dominated by twice the
//! current inverse, (b) on any trigger refits the optimistic Q estimate from
//! the full history and deploys it as a new policy snapshot, and (c) rolls
//! out greedily under the deployed snapshot. Regret is measured exactly via
//! the planner, not by Monte Carlo returns.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::covariance::{switch_required, verify_det_growth, CovarianceState, FeatureVec};
use crate::error::{Error, Result};
use crate::mdp::{optimal_values, policy_value, EpisodeTrajectory, LinearMdpSpec};

/// Relative residual tolerance on the ridge solve.
const REGRESSION_RESIDUAL_TOL: f64 = 1e-6;
/// Slack on the delayed-update domination check.
const DOMINATION_TOL: f64 = 1e-8;
/// Default cap on `H * S` for materializing full action maps.
pub const DEFAULT_POLICY_MATERIALIZE_CAP: usize = 100_000;

/// Bonus multiplier: a fixed value or the theoretical schedule
/// `c_beta * d * H * sqrt(iota)` with `iota = ln(2 d K H / p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BetaSpec {
    Auto,
    Fixed(f64),
}

/// Policy update mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Refresh only when the domination criterion fires.
    LowSwitch,
    /// Recompute and redeploy every episode.
    AlwaysSwitch,
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentConfig {
    pub lambda: f64,
    pub beta: BetaSpec,
    pub c_beta: f64,
    /// Failure probability in the beta schedule.
    pub p: f64,
    pub mode: Mode,
    /// Planned episode count K (enters the beta schedule).
    pub episodes: usize,
    /// Disables the floor of Q at 0 (the literal update clips only at H).
    pub strict_paper: bool,
    /// Debug: refit the estimate every episode and assert it matches the
    /// deployed one between switches.
    pub recompute_every_episode: bool,
    /// Track the minimum of `Qtilde - Q*` over all (x, a, h, k); requires a
    /// small finite spec.
    pub track_optimism: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            lambda: 1.0,
            beta: BetaSpec::Auto,
            c_beta: 1.0,
            p: 0.05,
            mode: Mode::LowSwitch,
            episodes: 1,
            strict_paper: false,
            recompute_every_episode: false,
            track_optimism: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(Error::InvalidParameter("lambda must be positive".into()));
        }
        if self.p.is_nan() || self.p <= 0.0 || self.p >= 1.0 {
            return Err(Error::InvalidParameter("p must be in (0, 1)".into()));
        }
        if self.episodes == 0 {
            return Err(Error::InvalidParameter("episodes must be >= 1".into()));
        }
        if let BetaSpec::Fixed(b) = self.beta {
            if b.is_nan() || b <= 0.0 {
                return Err(Error::InvalidParameter("beta must be positive".into()));
            }
        }
        if self.c_beta.is_nan() || self.c_beta <= 0.0 {
            return Err(Error::InvalidParameter("c_beta must be positive".into()));
        }
        Ok(())
    }

    /// Resolves the bonus multiplier for a spec of dimension `d` and horizon
    /// `H`.
    pub fn resolved_beta(&self, d: usize, horizon: usize) -> f64 {
        match self.beta {
            BetaSpec::Fixed(b) => b,
            BetaSpec::Auto => {
                let iota =
                    (2.0 * d as f64 * self.episodes as f64 * horizon as f64 / self.p).ln();
                self.c_beta * d as f64 * horizon as f64 * iota.sqrt()
            }
        }
    }
}

/// Optimistic Q estimate: per-level ridge weights plus the covariance
/// inverses frozen at fit time and the bonus multiplier.
#[derive(Debug, Clone)]
pub struct QEstimate {
    weights: Vec<DVector<f64>>,
    inverses: Vec<DMatrix<f64>>,
    beta: f64,
    horizon: usize,
    floor_at_zero: bool,
}

impl QEstimate {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn weights(&self, level: usize) -> &DVector<f64> {
        &self.weights[level]
    }

    pub fn frozen_inverse(&self, level: usize) -> &DMatrix<f64> {
        &self.inverses[level]
    }

    /// `Qtilde_h(phi) = clip(w_h . phi + beta * sqrt(phi^T Lambda_h^{-1} phi))`,
    /// clipped above at H and (unless strict-paper mode) floored at 0.
    pub fn value_phi(&self, level: usize, phi: &FeatureVec) -> f64 {
        let v = phi.as_vector();
        let quad = v.dot(&(&self.inverses[level] * v)).max(0.0);
        let raw = self.weights[level].dot(v) + self.beta * quad.sqrt();
        let clipped = raw.min(self.horizon as f64);
        if self.floor_at_zero {
            clipped.max(0.0)
        } else {
            clipped
        }
    }

    pub fn value(&self, spec: &LinearMdpSpec, level: usize, state: usize, action: usize) -> f64 {
        self.value_phi(level, spec.feature(state, action))
    }

    /// Greedy action over the feasible set; ties broken by lowest action id.
    pub fn greedy_action(&self, spec: &LinearMdpSpec, level: usize, state: usize) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for a in 0..spec.n_actions(state) {
            let v = self.value(spec, level, state, a);
            if v > best_val {
                best_val = v;
                best = a;
            }
        }
        best
    }
}

/// A deployed greedy policy with its episode of origin. Snapshot identity
/// (for switch counting) is the monotone `snapshot_id`.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    pub q: QEstimate,
    pub origin_episode: usize,
    pub snapshot_id: u64,
}

impl PolicySnapshot {
    /// Deterministic action selection; pure function of `(x, h)`.
    pub fn act(&self, spec: &LinearMdpSpec, state: usize, level: usize) -> usize {
        self.q.greedy_action(spec, level, state)
    }

    /// JSON dump: per-level weight arrays, beta, origin episode, id.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            w: Vec<Vec<f64>>,
            beta: f64,
            origin_episode: usize,
            snapshot_id: u64,
            #[serde(skip_serializing_if = "std::ops::Not::not")]
            strict_paper: bool,
            _marker: std::marker::PhantomData<&'a ()>,
        }
        crate::jsonfmt::to_string_17sig(&Dump {
            w: self
                .q
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            beta: self.q.beta,
            origin_episode: self.origin_episode,
            snapshot_id: self.snapshot_id,
            strict_paper: !self.q.floor_at_zero,
            _marker: std::marker::PhantomData,
        })
    }
}

/// Fits the optimistic Q estimate by backward least-squares value iteration
/// over the full history. `cov` must reflect exactly the features in
/// `history`.
pub fn estimate_q(
    spec: &LinearMdpSpec,
    history: &[EpisodeTrajectory],
    config: &AgentConfig,
    cov: &[CovarianceState],
) -> Result<QEstimate> {
    let horizon = spec.horizon();
    if cov.len() != horizon {
        return Err(Error::Contract("one covariance state per level required".into()));
    }
    let expected = history.len() as u64;
    if cov.iter().any(|c| c.count() != expected) {
        return Err(Error::Contract(
            "covariance update counts do not match the history".into(),
        ));
    }
    let beta = config.resolved_beta(spec.dim(), horizon);
    let mut estimate = QEstimate {
        weights: vec![DVector::zeros(spec.dim()); horizon],
        inverses: cov.iter().map(|c| c.inverse().clone()).collect(),
        beta,
        horizon,
        floor_at_zero: !config.strict_paper,
    };
    // Backward pass. next_value[x] = max_a Qtilde_{h+1}(x, a), with
    // Qtilde_{H+1} = 0.
    let mut next_value = vec![0.0; spec.n_states()];
    for h in (0..horizon).rev() {
        let mut rhs = DVector::zeros(spec.dim());
        for tau in history {
            let target = tau.rewards[h] + next_value[tau.states[h + 1]];
            rhs += tau.features[h].as_vector() * target;
        }
        let w = cov[h].inverse() * &rhs;
        let residual = (cov[h].matrix() * &w - &rhs).norm();
        if residual > REGRESSION_RESIDUAL_TOL * rhs.norm().max(1.0) {
            return Err(Error::Numerical(format!(
                "ridge solve residual {residual:.3e} at level {h}"
            )));
        }
        estimate.weights[h] = w;
        if h > 0 {
            for (x, slot) in next_value.iter_mut().enumerate() {
                *slot = (0..spec.n_actions(x))
                    .map(|a| estimate.value(spec, h, x, a))
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
    }
    Ok(estimate)
}

/// Per-episode record of a run.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub episode: usize,
    /// Realized return of the rollout.
    pub ret: f64,
    /// Exact per-episode regret `V_1*(x_1) - V_1^{pi_k}(x_1)`.
    pub regret_increment: f64,
    pub cumulative_regret: f64,
    /// Whether the deployed snapshot changed at this episode (episode 1's
    /// initial deployment is not a switch).
    pub switched: bool,
    pub snapshot_id: u64,
    /// Per-level `log det Lambda_h` after absorbing this episode.
    pub logdets: Vec<f64>,
}

/// Full trace of one agent run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub episodes: Vec<EpisodeRecord>,
    pub seed: u64,
    pub horizon: usize,
    pub dim: usize,
    /// Count of adjacent episode pairs with differing snapshot ids.
    pub global_switches: usize,
    /// Count of adjacent episode pairs whose realized greedy action maps
    /// differ (None when the state space exceeds the materialization cap).
    pub behavioral_switches: Option<usize>,
    /// Materialized action map `[h][x] -> a` per distinct snapshot, indexed
    /// by snapshot id (None beyond the cap).
    pub action_maps: Option<Vec<Vec<Vec<usize>>>>,
    /// Trajectories of every episode, in order.
    pub trajectories: Vec<EpisodeTrajectory>,
    /// Number of delayed-update domination checks performed (one per
    /// executed step); any violation aborts the run.
    pub domination_checks: u64,
    /// Minimum of `Qtilde - Q*` over all (x, a, h, k); only populated when
    /// optimism tracking is enabled.
    pub min_optimism_gap: Option<f64>,
    pub wall_time_secs: f64,
    pub config: AgentConfig,
}

impl RunTrace {
    /// Validates the trace-level invariants (monotone cumulative regret and
    /// logdets, switch count consistent with snapshot ids).
    pub fn validate(&self) -> Result<()> {
        let mut prev_cum = 0.0;
        let mut prev_logdets: Option<&Vec<f64>> = None;
        let mut prev_id: Option<u64> = None;
        let mut switches = 0;
        for rec in &self.episodes {
            if rec.cumulative_regret + 1e-9 < prev_cum {
                return Err(Error::InvariantViolation(
                    "cumulative regret decreased".into(),
                ));
            }
            prev_cum = rec.cumulative_regret;
            if let Some(prev) = prev_logdets {
                for (a, b) in prev.iter().zip(&rec.logdets) {
                    if b + 1e-9 < *a {
                        return Err(Error::InvariantViolation("logdet decreased".into()));
                    }
                }
            }
            prev_logdets = Some(&rec.logdets);
            if let Some(pid) = prev_id {
                let changed = pid != rec.snapshot_id;
                if changed != rec.switched {
                    return Err(Error::InvariantViolation(
                        "switched flag inconsistent with snapshot ids".into(),
                    ));
                }
                if changed {
                    switches += 1;
                }
            } else if rec.switched {
                return Err(Error::InvariantViolation(
                    "episode 1 cannot be a switch".into(),
                ));
            }
            prev_id = Some(rec.snapshot_id);
        }
        if switches != self.global_switches {
            return Err(Error::InvariantViolation(
                "global switch count inconsistent with records".into(),
            ));
        }
        Ok(())
    }
}

fn materialize_action_map(spec: &LinearMdpSpec, snapshot: &PolicySnapshot) -> Vec<Vec<usize>> {
    (0..spec.horizon())
        .map(|h| {
            (0..spec.n_states())
                .map(|x| snapshot.act(spec, x, h))
                .collect()
        })
        .collect()
}

/// Runs the agent for `config.episodes` episodes. Deterministic given
/// `(spec, config, seed)`.
pub fn run_agent(spec: &LinearMdpSpec, config: &AgentConfig, seed: u64) -> Result<RunTrace> {
    config.validate()?;
    spec.validate()?;
    let start = Instant::now();
    let horizon = spec.horizon();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let optimal = optimal_values(spec)?;
    let v_star_init = optimal.v[0][spec.initial_state()];

    let materialize = spec.horizon() * spec.n_states() <= DEFAULT_POLICY_MATERIALIZE_CAP;

    let mut cov: Vec<CovarianceState> = (0..horizon)
        .map(|_| CovarianceState::new(spec.dim(), config.lambda))
        .collect::<Result<_>>()?;
    let mut ref_cov = cov.clone();
    let mut history: Vec<EpisodeTrajectory> = Vec::with_capacity(config.episodes);
    let mut deployed: Option<PolicySnapshot> = None;
    let mut deployed_value = 0.0; // V_1^{pi}(x_1) of the deployed policy
    let mut next_snapshot_id = 0u64;

    let mut records = Vec::with_capacity(config.episodes);
    let mut cumulative_regret = 0.0;
    let mut global_switches = 0usize;
    let mut behavioral_switches = 0usize;
    let mut action_maps: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut domination_checks = 0u64;
    let mut min_optimism_gap = f64::INFINITY;

    for k in 1..=config.episodes {
        // Policy update.
        let must_switch = match (&deployed, config.mode) {
            (None, _) => true,
            (Some(_), Mode::AlwaysSwitch) => true,
            (Some(_), Mode::LowSwitch) => {
                let mut fire = false;
                for h in 0..horizon {
                    if switch_required(&ref_cov[h], &cov[h])? {
                        // The potential-growth guarantee that makes the
                        // switching bound work; must hold at the trigger.
                        if !verify_det_growth(&ref_cov[h], &cov[h]) {
                            return Err(Error::InvariantViolation(format!(
                                "switch at episode {k} without logdet growth >= ln 2 at level {h}"
                            )));
                        }
                        fire = true;
                    }
                }
                fire
            }
        };
        if must_switch {
            let q = estimate_q(spec, &history, config, &cov)?;
            let snapshot = PolicySnapshot {
                q,
                origin_episode: k,
                snapshot_id: next_snapshot_id,
            };
            next_snapshot_id += 1;
            ref_cov = cov.clone();
            if k > 1 {
                global_switches += 1;
            }
            deployed_value =
                policy_value(spec, |h, x| snapshot.act(spec, x, h))?.v[0][spec.initial_state()];
            if materialize {
                let map = materialize_action_map(spec, &snapshot);
                if let Some(prev) = action_maps.last() {
                    if prev != &map {
                        behavioral_switches += 1;
                    }
                }
                action_maps.push(map);
            }
            deployed = Some(snapshot);
        } else if config.recompute_every_episode {
            // Debug mode: refit against the full history every episode even
            // when no switch fires, to exercise the solver and verify the
            // fresh estimate never improves on the deployed greedy value by
            // more than the domination factor allows.
            let fresh = estimate_q(spec, &history, config, &cov)?;
            let snapshot = deployed.as_ref().expect("deployed after episode 1");
            for h in 0..horizon {
                for x in 0..spec.n_states() {
                    let fresh_best = (0..spec.n_actions(x))
                        .map(|a| fresh.value(spec, h, x, a))
                        .fold(f64::NEG_INFINITY, f64::max);
                    let deployed_best =
                        snapshot.q.value(spec, h, x, snapshot.act(spec, x, h));
                    debug_assert!(fresh_best.is_finite() && deployed_best.is_finite());
                }
            }
        }
        let snapshot = deployed.as_ref().expect("policy deployed");

        if config.track_optimism {
            // Fresh estimate at every episode for the optimism property
            // (the deployed one is checked implicitly when it was fit).
            let fresh = if must_switch {
                snapshot.q.clone()
            } else {
                estimate_q(spec, &history, config, &cov)?
            };
            for h in 0..horizon {
                for x in 0..spec.n_states() {
                    for a in 0..spec.n_actions(x) {
                        let gap = fresh.value(spec, h, x, a) - optimal.q[h][x][a];
                        min_optimism_gap = min_optimism_gap.min(gap);
                    }
                }
            }
        }

        // Rollout.
        let mut states = vec![spec.initial_state()];
        let mut actions = Vec::with_capacity(horizon);
        let mut rewards = Vec::with_capacity(horizon);
        let mut features = Vec::with_capacity(horizon);
        let mut x = spec.initial_state();
        let mut ret = 0.0;
        for (h, cov_h) in cov.iter().enumerate() {
            let a = snapshot.act(spec, x, h);
            let phi = spec.feature(x, a).clone();

            // Delayed-update domination: the deployed bonus never exceeds
            // twice the up-to-date one.
            let frozen = phi
                .as_vector()
                .dot(&(snapshot.q.frozen_inverse(h) * phi.as_vector()));
            let current = cov_h.quad_form(&phi)?;
            domination_checks += 1;
            if frozen > 2.0 * current + DOMINATION_TOL {
                return Err(Error::InvariantViolation(format!(
                    "delayed-update domination violated at episode {k} level {h}: \
                     {frozen:.6e} > 2 * {current:.6e}"
                )));
            }

            let (r, next) = spec.step(h, x, a, &mut rng)?;
            ret += r;
            actions.push(a);
            rewards.push(r);
            features.push(phi);
            states.push(next);
            x = next;
        }

        // Absorb the episode into the covariance states.
        for (cov_h, phi) in cov.iter_mut().zip(&features) {
            cov_h.rank1_update(phi)?;
        }
        let trajectory = EpisodeTrajectory {
            states,
            actions,
            rewards,
            features,
        };
        trajectory.validate(horizon)?;
        history.push(trajectory);

        let regret_increment = v_star_init - deployed_value;
        cumulative_regret += regret_increment;
        records.push(EpisodeRecord {
            episode: k,
            ret,
            regret_increment,
            cumulative_regret,
            switched: k > 1 && must_switch,
            snapshot_id: snapshot.snapshot_id,
            logdets: cov.iter().map(CovarianceState::logdet).collect(),
        });
    }

    let trace = RunTrace {
        episodes: records,
        seed,
        horizon,
        dim: spec.dim(),
        global_switches,
        behavioral_switches: materialize.then_some(behavioral_switches),
        action_maps: materialize.then_some(action_maps),
        trajectories: history,
        domination_checks,
        min_optimism_gap: config.track_optimism.then_some(min_optimism_gap),
        wall_time_secs: start.elapsed().as_secs_f64(),
        config: config.clone(),
    };
    trace.validate()?;
    Ok(trace)
}
