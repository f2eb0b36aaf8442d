//! Switching-cost metrics, scaling fits, and replicate statistics.
//!
//! Two switching costs are tracked. The *global* cost counts episodes where
//! the deployed policy changed; the *local* cost counts, per `(level, state)`
//! pair, how often the prescribed action changed across consecutive episodes,
//! summed over all pairs. On the materialized action maps the two satisfy
//! `N_global_behavioral <= N_local <= S * H * N_global_behavioral`.

use serde::Serialize;

use crate::agent::RunTrace;
use crate::error::{Error, Result};

/// Cap on `H * S` beyond which full action maps are not materialized.
pub const LOCAL_COST_CAP: usize = 100_000;

/// Global switching cost from a snapshot-id sequence: number of adjacent
/// pairs with differing ids.
pub fn global_switching_cost(ids: &[u64]) -> usize {
    ids.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Global switching cost counted on realized behavior: number of adjacent
/// episode pairs whose full action maps differ anywhere. Never exceeds the
/// id-based count, since ids can change without the greedy map changing.
pub fn behavioral_global_cost(maps: &[&Vec<Vec<usize>>]) -> usize {
    maps.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Local switching cost: per `(level, state)` pair, count adjacent episode
/// pairs where that pair's action changed, summed over all pairs.
pub fn local_switching_cost(maps: &[&Vec<Vec<usize>>]) -> Result<usize> {
    let Some(first) = maps.first() else {
        return Ok(0);
    };
    let pairs: usize = first.iter().map(Vec::len).sum();
    if pairs > LOCAL_COST_CAP {
        return Err(Error::InvalidParameter(format!(
            "state-level pair count {pairs} exceeds the materialization cap"
        )));
    }
    let mut total = 0;
    for w in maps.windows(2) {
        for (row_a, row_b) in w[0].iter().zip(w[1].iter()) {
            total += row_a
                .iter()
                .zip(row_b.iter())
                .filter(|(a, b)| a != b)
                .count();
        }
    }
    Ok(total)
}

/// Per-episode action maps of a run: the deployed snapshot's map at each
/// episode, as references into the trace's distinct-map table.
pub fn episode_maps(trace: &RunTrace) -> Option<Vec<&Vec<Vec<usize>>>> {
    let maps = trace.action_maps.as_ref()?;
    Some(
        trace
            .episodes
            .iter()
            .map(|rec| &maps[rec.snapshot_id as usize])
            .collect(),
    )
}

/// Switching-cost report for one run, including the sandwich check
/// `N_gl <= N_loc <= S * H * N_gl` on behavioral counts.
#[derive(Debug, Clone, Serialize)]
pub struct SwitchReport {
    pub episodes: usize,
    /// Id-based global count.
    pub global: usize,
    /// Behavior-based global count (None when maps were not materialized).
    pub global_behavioral: Option<usize>,
    pub local: Option<usize>,
    /// `global / (d * H * ln K)` — the headline low-switching ratio.
    pub bound_ratio: f64,
    pub sandwich_holds: Option<bool>,
}

pub fn switch_report(trace: &RunTrace) -> Result<SwitchReport> {
    let k = trace.episodes.len();
    let denom = trace.dim as f64 * trace.horizon as f64 * (k.max(2) as f64).ln();
    let (global_behavioral, local, sandwich_holds) = match episode_maps(trace) {
        Some(maps) => {
            let n_gl = behavioral_global_cost(&maps);
            let n_loc = local_switching_cost(&maps)?;
            let pairs: usize = maps
                .first()
                .map(|m| m.iter().map(Vec::len).sum())
                .unwrap_or(0);
            let holds = n_gl <= n_loc && n_loc <= pairs * n_gl;
            (Some(n_gl), Some(n_loc), Some(holds))
        }
        None => (None, None, None),
    };
    Ok(SwitchReport {
        episodes: k,
        global: trace.global_switches,
        global_behavioral,
        local,
        bound_ratio: trace.global_switches as f64 / denom,
        sandwich_holds,
    })
}

/// Least-squares fit of `y ~ a + b * ln(k)`. Returns `(a, b)`.
pub fn fit_log_linear(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    fit_linear(
        &points
            .iter()
            .map(|&(k, y)| {
                if k <= 0.0 {
                    Err(Error::InvalidParameter("k must be positive".into()))
                } else {
                    Ok((k.ln(), y))
                }
            })
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Least-squares fit of `y ~ c * k^b` via regression in log-log space.
/// Returns `(c, b)`; requires strictly positive inputs.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let logs = points
        .iter()
        .map(|&(k, y)| {
            if k <= 0.0 || y <= 0.0 {
                Err(Error::InvalidParameter(
                    "power-law fit needs positive points".into(),
                ))
            } else {
                Ok((k.ln(), y.ln()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let (a, b) = fit_linear(&logs)?;
    Ok((a.exp(), b))
}

fn fit_linear(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(
            "linear fit needs at least two points".into(),
        ));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "linear fit needs at least two distinct abscissae".into(),
        ));
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let b = sxy / sxx;
    Ok((mean_y - b * mean_x, b))
}

/// Mean / standard deviation / extrema over replicate values.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single replicate).
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

/// Aggregate over replicate traces (identical config, differing seeds).
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateSummary {
    pub n: usize,
    /// Per-episode mean cumulative regret.
    pub mean_cumulative_regret: Vec<f64>,
    /// Per-episode standard error of cumulative regret (0 for n = 1).
    pub stderr_cumulative_regret: Vec<f64>,
    pub min_global_switches: usize,
    pub median_global_switches: f64,
    pub max_global_switches: usize,
    /// Mean of per-trace `global / (d * H * ln K)` ratios.
    pub mean_bound_ratio: f64,
}

/// Per-episode regret statistics and switch aggregates over replicates.
/// All traces must share episode count, spec shape, and agent config.
pub fn replicate_summary(traces: &[RunTrace]) -> Result<ReplicateSummary> {
    let Some(first) = traces.first() else {
        return Err(Error::InvalidParameter("no traces".into()));
    };
    let k = first.episodes.len();
    let reference = crate::jsonfmt::to_string_17sig(&first.config)?;
    for t in traces {
        if t.episodes.len() != k || t.dim != first.dim || t.horizon != first.horizon {
            return Err(Error::InvalidParameter(
                "replicate traces differ in shape".into(),
            ));
        }
        if crate::jsonfmt::to_string_17sig(&t.config)? != reference {
            return Err(Error::InvalidParameter(
                "replicate traces differ in agent config".into(),
            ));
        }
    }
    let n = traces.len();
    let mut mean = vec![0.0; k];
    let mut stderr = vec![0.0; k];
    for i in 0..k {
        let vals: Vec<f64> = traces
            .iter()
            .map(|t| t.episodes[i].cumulative_regret)
            .collect();
        let s = replicate_stats(&vals)?;
        mean[i] = s.mean;
        stderr[i] = if n > 1 { s.std_dev / (n as f64).sqrt() } else { 0.0 };
    }
    let mut switches: Vec<usize> = traces.iter().map(|t| t.global_switches).collect();
    switches.sort_unstable();
    let median = if n % 2 == 1 {
        switches[n / 2] as f64
    } else {
        (switches[n / 2 - 1] + switches[n / 2]) as f64 / 2.0
    };
    let mut ratio_total = 0.0;
    for t in traces {
        ratio_total += switch_report(t)?.bound_ratio;
    }
    Ok(ReplicateSummary {
        n,
        mean_cumulative_regret: mean,
        stderr_cumulative_regret: stderr,
        min_global_switches: switches[0],
        median_global_switches: median,
        max_global_switches: switches[n - 1],
        mean_bound_ratio: ratio_total / n as f64,
    })
}

pub fn replicate_stats(values: &[f64]) -> Result<ReplicateStats> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("no replicate values".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
    } else {
        0.0
    };
    Ok(ReplicateStats {
        n,
        mean,
        std_dev: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{run_agent, AgentConfig};
    use crate::mdp::{embed_tabular, random_tabular};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn global_cost_counts_id_changes() {
        assert_eq!(global_switching_cost(&[]), 0);
        assert_eq!(global_switching_cost(&[0]), 0);
        assert_eq!(global_switching_cost(&[0, 0, 1, 1, 2]), 2);
        assert_eq!(global_switching_cost(&[0, 1, 0, 1]), 3);
    }

    #[test]
    #[allow(clippy::needless_range_loop)] // the oracle is a literal double loop
    fn local_cost_matches_brute_force_on_random_maps() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let (h, s, episodes) = (3usize, 4usize, 40usize);
        let maps: Vec<Vec<Vec<usize>>> = (0..episodes)
            .map(|_| {
                (0..h)
                    .map(|_| (0..s).map(|_| rng.random_range(0..3)).collect())
                    .collect()
            })
            .collect();
        let refs: Vec<&Vec<Vec<usize>>> = maps.iter().collect();
        // Brute force: loop over every pair independently.
        let mut expected = 0;
        for lvl in 0..h {
            for x in 0..s {
                for e in 1..episodes {
                    if maps[e][lvl][x] != maps[e - 1][lvl][x] {
                        expected += 1;
                    }
                }
            }
        }
        assert_eq!(local_switching_cost(&refs).unwrap(), expected);
        // Sandwich on this synthetic stream.
        let n_gl = behavioral_global_cost(&refs);
        assert!(n_gl <= expected && expected <= s * h * n_gl);
    }

    #[test]
    fn behavioral_never_exceeds_id_count() {
        // Two distinct ids with the same action map: id-based count 1,
        // behavioral count 0.
        let map = vec![vec![0usize, 1], vec![1, 0]];
        let refs = vec![&map, &map];
        assert_eq!(behavioral_global_cost(&refs), 0);
        assert_eq!(global_switching_cost(&[0, 1]), 1);
    }

    #[test]
    fn log_linear_fit_recovers_noiseless_coefficients() {
        let points: Vec<(f64, f64)> = [100.0, 500.0, 2000.0, 10_000.0]
            .iter()
            .map(|&k: &f64| (k, 3.5 + 2.0 * k.ln()))
            .collect();
        let (a, b) = fit_log_linear(&points).unwrap();
        assert!((a - 3.5).abs() < 1e-9);
        assert!((b - 2.0).abs() < 1e-9);
    }

    #[test]
    fn power_law_fit_recovers_sqrt_scaling() {
        let points: Vec<(f64, f64)> = [500.0, 1000.0, 2000.0, 4000.0, 8000.0]
            .iter()
            .map(|&k: &f64| (k, 5.0 * k.sqrt()))
            .collect();
        let (c, b) = fit_power_law(&points).unwrap();
        assert!((c - 5.0).abs() < 1e-9);
        assert!((b - 0.5).abs() < 1e-12);
    }

    #[test]
    fn power_law_fit_tolerates_multiplicative_jitter() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let points: Vec<(f64, f64)> = [500.0, 1000.0, 2000.0, 4000.0, 8000.0]
            .iter()
            .map(|&k: &f64| {
                let jitter = 1.0 + 0.05 * (2.0 * rng.random::<f64>() - 1.0);
                (k, 5.0 * k.sqrt() * jitter)
            })
            .collect();
        let (_, b) = fit_power_law(&points).unwrap();
        assert!((b - 0.5).abs() < 0.05, "slope {b}");
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        assert!(fit_log_linear(&[(10.0, 1.0)]).is_err());
        assert!(fit_log_linear(&[(0.0, 1.0), (2.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(10.0, -1.0), (20.0, 2.0)]).is_err());
        assert!(fit_linear(&[(3.0, 1.0), (3.0, 2.0)]).is_err());
    }

    #[test]
    fn replicate_stats_basics() {
        let s = replicate_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.n, 4);
        assert!((s.mean - 2.5).abs() < 1e-15);
        assert!((s.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        assert!(replicate_stats(&[]).is_err());
        assert_eq!(replicate_stats(&[7.0]).unwrap().std_dev, 0.0);
    }

    #[test]
    fn replicate_summary_single_trace_equals_trace() {
        let spec = embed_tabular(&random_tabular(3, 2, 3, 1.0, 2).unwrap()).unwrap();
        let config = AgentConfig {
            episodes: 100,
            c_beta: 0.05,
            ..AgentConfig::default()
        };
        let trace = run_agent(&spec, &config, 0).unwrap();
        let summary = replicate_summary(std::slice::from_ref(&trace)).unwrap();
        for (m, e) in summary
            .mean_cumulative_regret
            .iter()
            .zip(&trace.episodes)
        {
            assert_eq!(*m, e.cumulative_regret);
        }
        assert!(summary.stderr_cumulative_regret.iter().all(|&s| s == 0.0));
        assert_eq!(summary.min_global_switches, trace.global_switches);
        assert_eq!(summary.max_global_switches, trace.global_switches);
    }

    #[test]
    fn replicate_summary_identical_seeds_zero_stderr() {
        let spec = embed_tabular(&random_tabular(3, 2, 3, 1.0, 2).unwrap()).unwrap();
        let config = AgentConfig {
            episodes: 50,
            c_beta: 0.05,
            ..AgentConfig::default()
        };
        let a = run_agent(&spec, &config, 7).unwrap();
        let b = run_agent(&spec, &config, 7).unwrap();
        let summary = replicate_summary(&[a, b]).unwrap();
        assert!(summary.stderr_cumulative_regret.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn replicate_summary_envelope_and_mismatch_rejection() {
        let spec = embed_tabular(&random_tabular(3, 2, 3, 1.0, 2).unwrap()).unwrap();
        let config = AgentConfig {
            episodes: 80,
            c_beta: 0.05,
            ..AgentConfig::default()
        };
        let traces: Vec<_> = (0..10)
            .map(|s| run_agent(&spec, &config, s).unwrap())
            .collect();
        let summary = replicate_summary(&traces).unwrap();
        // Mean regret stays within the pointwise min/max envelope.
        for (i, m) in summary.mean_cumulative_regret.iter().enumerate() {
            let lo = traces
                .iter()
                .map(|t| t.episodes[i].cumulative_regret)
                .fold(f64::INFINITY, f64::min);
            let hi = traces
                .iter()
                .map(|t| t.episodes[i].cumulative_regret)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(lo - 1e-12 <= *m && *m <= hi + 1e-12);
        }
        // Mismatched configs are rejected.
        let other_config = AgentConfig {
            episodes: 80,
            c_beta: 0.06,
            ..AgentConfig::default()
        };
        let other = run_agent(&spec, &other_config, 0).unwrap();
        assert!(replicate_summary(&[traces[0].clone(), other]).is_err());
    }

    #[test]
    fn switch_report_sandwich_on_real_runs() {
        for seed in 0..5 {
            let spec = embed_tabular(&random_tabular(3, 2, 3, 1.0, seed).unwrap()).unwrap();
            let config = AgentConfig {
                episodes: 400,
                c_beta: 0.02,
                ..AgentConfig::default()
            };
            let trace = run_agent(&spec, &config, seed).unwrap();
            let report = switch_report(&trace).unwrap();
            assert_eq!(report.sandwich_holds, Some(true));
            assert!(report.global_behavioral.unwrap() <= report.global);
            assert_eq!(
                report.global,
                global_switching_cost(
                    &trace
                        .episodes
                        .iter()
                        .map(|e| e.snapshot_id)
                        .collect::<Vec<_>>()
                )
            );
        }
    }
}
