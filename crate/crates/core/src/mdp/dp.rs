//! Exact dynamic-programming planner: optimal values by backward induction
//! and exact evaluation of a fixed policy.

use super::LinearMdpSpec;
use crate::error::{Error, Result};

/// Exact value tables; `v` has `H + 1` levels with `v[H]` identically zero.
#[derive(Debug, Clone)]
pub struct ValueTables {
    /// `v[h][x]`, 0-based levels.
    pub v: Vec<Vec<f64>>,
    /// `q[h][x][a]`.
    pub q: Vec<Vec<Vec<f64>>>,
}

fn backward_induction(
    spec: &LinearMdpSpec,
    mut pick: impl FnMut(usize, usize, &[f64]) -> Result<f64>,
) -> Result<ValueTables> {
    let horizon = spec.horizon();
    let n = spec.n_states();
    let mut v = vec![Vec::new(); horizon + 1];
    v[horizon] = vec![0.0; n];
    let mut q = vec![Vec::new(); horizon];
    for h in (0..horizon).rev() {
        let mut v_h = vec![0.0; n];
        let mut q_h = vec![Vec::new(); n];
        for x in 0..n {
            let qs: Vec<f64> = (0..spec.n_actions(x))
                .map(|a| {
                    let expected: f64 = spec
                        .transition_probs(h, x, a)
                        .iter()
                        .zip(&v[h + 1])
                        .map(|(p, vn)| p * vn)
                        .sum();
                    spec.reward(h, x, a) + expected
                })
                .collect();
            v_h[x] = pick(h, x, &qs)?;
            q_h[x] = qs;
        }
        v[h] = v_h;
        q[h] = q_h;
    }
    Ok(ValueTables { v, q })
}

/// `V*` and `Q*` by exact backward induction; ties in the max broken by the
/// lowest action id.
pub fn optimal_values(spec: &LinearMdpSpec) -> Result<ValueTables> {
    backward_induction(spec, |_, _, qs| {
        Ok(qs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    })
}

/// Exact evaluation of a fixed deterministic policy `(level, state) -> action`
/// (0-based level).
pub fn policy_value(
    spec: &LinearMdpSpec,
    mut policy: impl FnMut(usize, usize) -> usize,
) -> Result<ValueTables> {
    backward_induction(spec, |h, x, qs| {
        let a = policy(h, x);
        qs.get(a).copied().ok_or_else(|| {
            Error::Contract(format!("policy picked infeasible action {a} at ({h}, {x})"))
        })
    })
}
