//! Configuration-driven experiment runner: parse a JSON config, build the
//! environment, execute the `K_schedule x seeds` grid of runs (optionally in
//! parallel), and write per-run trace CSVs plus summary and scaling-fit JSON.
//!
//! All artifacts are deterministic functions of the config: no timestamps,
//! stable file names, and CSV floats in shortest round-trip form, so reruns
//! are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{run_agent, AgentConfig, BetaSpec, Mode, RunTrace};
use crate::error::{Error, Result};
use crate::hard_instance::{build_hard_instance, Draw, HardInstanceParams};
use crate::mdp::{embed_tabular, random_linear, random_tabular, LinearMdpSpec};
use crate::metrics::{replicate_summary, switch_report, ReplicateSummary, SwitchReport};

fn default_n_actions() -> usize {
    2
}

fn default_lambda() -> f64 {
    1.0
}

fn default_p() -> f64 {
    0.05
}

fn default_c_beta() -> f64 {
    1.0
}

fn default_mode() -> Mode {
    Mode::LowSwitch
}

/// Environment selector of an experiment config.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "snake_case")]
pub enum EnvironmentConfig {
    TabularRandom {
        s: usize,
        a: usize,
        h: usize,
        sparsity: f64,
        #[serde(default)]
        seed: u64,
    },
    LinearRandom {
        d: usize,
        h: usize,
        n_states: usize,
        #[serde(default = "default_n_actions")]
        n_actions: usize,
        #[serde(default)]
        seed: u64,
    },
    HardInstance {
        d0: usize,
        h0: usize,
        #[serde(default)]
        h_star: Option<usize>,
        #[serde(default)]
        j_star: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    FromFile {
        path: PathBuf,
    },
}

impl EnvironmentConfig {
    /// Constructs the linear MDP this environment config describes.
    pub fn build(&self) -> Result<LinearMdpSpec> {
        match self {
            EnvironmentConfig::TabularRandom {
                s,
                a,
                h,
                sparsity,
                seed,
            } => embed_tabular(&random_tabular(*s, *a, *h, *sparsity, *seed)?),
            EnvironmentConfig::LinearRandom {
                d,
                h,
                n_states,
                n_actions,
                seed,
            } => random_linear(*d, *h, *n_states, *n_actions, *seed),
            EnvironmentConfig::HardInstance {
                d0,
                h0,
                h_star,
                j_star,
                seed,
            } => {
                let params = HardInstanceParams {
                    d0: *d0,
                    h0: *h0,
                    h_star: h_star.map_or(Draw::Sample, Draw::Fixed),
                    correct_actions: Draw::Sample,
                    j_star: j_star.unwrap_or(1),
                    seed: *seed,
                };
                build_hard_instance(&params)
            }
            EnvironmentConfig::FromFile { path } => {
                let text = fs::read_to_string(path)?;
                LinearMdpSpec::from_json(&text)
            }
        }
    }
}

/// Agent section of an experiment config; `episodes` is filled in per
/// K-schedule entry, so beta's `iota` is recomputed for every K.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Fixed bonus multiplier; omitted means the theoretical schedule.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_c_beta")]
    pub c_beta: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub strict_paper: bool,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            lambda: default_lambda(),
            beta: None,
            c_beta: default_c_beta(),
            p: default_p(),
            mode: default_mode(),
            strict_paper: false,
        }
    }
}

impl AgentSection {
    pub fn to_agent_config(&self, episodes: usize) -> AgentConfig {
        AgentConfig {
            lambda: self.lambda,
            beta: self.beta.map_or(BetaSpec::Auto, BetaSpec::Fixed),
            c_beta: self.c_beta,
            p: self.p,
            mode: self.mode,
            episodes,
            strict_paper: self.strict_paper,
            recompute_every_episode: false,
            track_optimism: false,
        }
    }
}

/// Top-level experiment config. Unknown keys are rejected.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(alias = "K_schedule")]
    pub k_schedule: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for the run grid; 0 or omitted means all cores.
    #[serde(default)]
    pub parallelism: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_schedule.is_empty() {
            return Err(Error::Config("k_schedule must be nonempty".into()));
        }
        if self.k_schedule.contains(&0) {
            return Err(Error::Config("k_schedule entries must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        // Surface agent parameter errors at parse time, not mid-run.
        self.agent
            .to_agent_config(self.k_schedule[0])
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Strict parse of the config schema, with the JSON path of any failure in
/// the error message.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Config(format!("{} (at {})", e.inner(), e.path())))?;
    config.validate()?;
    Ok(config)
}

/// Renders a trace as CSV: header
/// `episode,return,regret_increment,cumulative_regret,switched,snapshot_id,logdet_h1,...,logdet_hH`,
/// `switched` as 1/0, floats in shortest round-trip decimal, `\n` newlines
/// including after the final row.
pub fn trace_to_csv(trace: &RunTrace) -> String {
    let mut out = String::from("episode,return,regret_increment,cumulative_regret,switched,snapshot_id");
    for h in 1..=trace.horizon {
        let _ = write!(out, ",logdet_h{h}");
    }
    out.push('\n');
    for rec in &trace.episodes {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            rec.episode,
            rec.ret,
            rec.regret_increment,
            rec.cumulative_regret,
            u8::from(rec.switched),
            rec.snapshot_id
        );
        for v in &rec.logdets {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
struct RunSummary {
    k: usize,
    seed: u64,
    beta: f64,
    final_cumulative_regret: f64,
    switch_report: SwitchReport,
}

#[derive(Debug, Serialize)]
struct KSummary {
    k: usize,
    runs: Vec<RunSummary>,
    replicates: ReplicateSummary,
}

#[derive(Debug, Serialize)]
struct FitSummary {
    /// `(K, mean global switches)` and `(K, mean final regret)` points.
    switch_points: Vec<(f64, f64)>,
    regret_points: Vec<(f64, f64)>,
    /// Coefficients of `N_switch ~ a + b ln K` (None with < 3 distinct K).
    switch_fit: Option<(f64, f64)>,
    /// `(c, slope)` of `Regret ~ c K^slope` (None with < 3 distinct K or
    /// nonpositive regrets).
    regret_fit: Option<(f64, f64)>,
}

/// Result of a completed experiment.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub runs: usize,
    pub csv_files: Vec<PathBuf>,
}

/// Executes the full run grid and writes artifacts into
/// `config.output_dir`. Byte-identical on rerun with the same config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let output_dir = config
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("output_dir required (config field or --output)".into()))?;
    let spec = config.environment.build()?;
    spec.validate()?;
    fs::create_dir_all(&output_dir)?;

    let grid: Vec<(usize, u64)> = config
        .k_schedule
        .iter()
        .flat_map(|&k| config.seeds.iter().map(move |&s| (k, s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    log::info!(
        "running {} runs ({} K values x {} seeds) on {} threads",
        grid.len(),
        config.k_schedule.len(),
        config.seeds.len(),
        pool.current_num_threads()
    );
    let traces: Vec<RunTrace> = pool.install(|| {
        grid.par_iter()
            .map(|&(k, seed)| run_agent(&spec, &config.agent.to_agent_config(k), seed))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut csv_files = Vec::with_capacity(grid.len());
    for ((k, seed), trace) in grid.iter().zip(&traces) {
        let path = output_dir.join(format!("trace_K{k}_seed{seed}.csv"));
        fs::write(&path, trace_to_csv(trace))?;
        csv_files.push(path);
    }

    // Per-K replicate summaries.
    let mut k_summaries = Vec::new();
    let mut switch_points = Vec::new();
    let mut regret_points = Vec::new();
    let per_seed = config.seeds.len();
    for (i, &k) in config.k_schedule.iter().enumerate() {
        let block = &traces[i * per_seed..(i + 1) * per_seed];
        let mut runs = Vec::new();
        for (trace, &seed) in block.iter().zip(&config.seeds) {
            runs.push(RunSummary {
                k,
                seed,
                beta: config.agent.to_agent_config(k).resolved_beta(spec.dim(), spec.horizon()),
                final_cumulative_regret: trace
                    .episodes
                    .last()
                    .map_or(0.0, |e| e.cumulative_regret),
                switch_report: switch_report(trace)?,
            });
        }
        let replicates = replicate_summary(block)?;
        switch_points.push((
            k as f64,
            block.iter().map(|t| t.global_switches as f64).sum::<f64>() / per_seed as f64,
        ));
        regret_points.push((
            k as f64,
            runs.iter().map(|r| r.final_cumulative_regret).sum::<f64>() / per_seed as f64,
        ));
        k_summaries.push(KSummary { k, runs, replicates });
    }

    let distinct_k = config.k_schedule.len() >= 3
        && config.k_schedule.windows(2).all(|w| w[0] != w[1]);
    let fits = FitSummary {
        switch_fit: distinct_k
            .then(|| crate::metrics::fit_log_linear(&switch_points))
            .transpose()?,
        regret_fit: if distinct_k && regret_points.iter().all(|p| p.1 > 0.0) {
            Some(crate::metrics::fit_power_law(&regret_points)?)
        } else {
            None
        },
        switch_points,
        regret_points,
    };

    #[derive(Serialize)]
    struct Summary<'a> {
        environment: &'a EnvironmentConfig,
        agent: &'a AgentSection,
        seeds: &'a [u64],
        per_k: &'a [KSummary],
    }
    fs::write(
        output_dir.join("summary.json"),
        crate::jsonfmt::to_string_17sig_pretty(&Summary {
            environment: &config.environment,
            agent: &config.agent,
            seeds: &config.seeds,
            per_k: &k_summaries,
        })?,
    )?;
    fs::write(
        output_dir.join("scaling_fit.json"),
        crate::jsonfmt::to_string_17sig_pretty(&fits)?,
    )?;

    Ok(ExperimentOutcome {
        output_dir,
        runs: grid.len(),
        csv_files,
    })
}

/// Loads, parses, and validates a spec file; returns the spec for
/// pretty-printing.
pub fn inspect_spec(path: &Path) -> Result<LinearMdpSpec> {
    let text = fs::read_to_string(path)?;
    let spec = LinearMdpSpec::from_json(&text)?;
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "environment": {"type": "tabular_random", "s": 2, "a": 2, "h": 2, "sparsity": 1.0},
        "k_schedule": [100],
        "seeds": [0]
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let config = parse_config(MINIMAL).unwrap();
        assert_eq!(config.agent.lambda, 1.0);
        assert_eq!(config.agent.p, 0.05);
        assert_eq!(config.agent.c_beta, 1.0);
        assert_eq!(config.agent.mode, Mode::LowSwitch);
        assert!(config.agent.beta.is_none());
        assert_eq!(config.parallelism, 0);
        assert!(config.output_dir.is_none());
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let bad = r#"{
            "environment": {"type": "tabular_random", "s": 2, "a": 2, "h": 2, "sparsity": 1.0},
            "k_schedule": [100],
            "seeds": [0],
            "bogus": 1
        }"#;
        let err = parse_config(bad).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let bad_env = r#"{
            "environment": {"type": "tabular_random", "s": 2, "a": 2, "h": 2, "sparsity": 1.0, "oops": 3},
            "k_schedule": [100],
            "seeds": [0]
        }"#;
        let err = parse_config(bad_env).unwrap_err().to_string();
        assert!(err.contains("oops") && err.contains("environment"), "{err}");
    }

    #[test]
    fn empty_schedules_rejected() {
        let no_k = r#"{
            "environment": {"type": "tabular_random", "s": 2, "a": 2, "h": 2, "sparsity": 1.0},
            "k_schedule": [],
            "seeds": [0]
        }"#;
        assert!(parse_config(no_k).is_err());
        let no_seeds = r#"{
            "environment": {"type": "tabular_random", "s": 2, "a": 2, "h": 2, "sparsity": 1.0},
            "k_schedule": [10],
            "seeds": []
        }"#;
        assert!(parse_config(no_seeds).is_err());
    }

    #[test]
    fn smoke_run_writes_ten_row_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = parse_config(MINIMAL).unwrap();
        config.k_schedule = vec![10];
        config.output_dir = Some(dir.path().to_path_buf());
        let started = std::time::Instant::now();
        let outcome = run_experiment(&config).unwrap();
        assert!(started.elapsed().as_secs_f64() < 1.0);
        assert_eq!(outcome.runs, 1);
        let csv = fs::read_to_string(&outcome.csv_files[0]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11); // header + 10 episodes
        assert!(lines[0].starts_with("episode,return,regret_increment,cumulative_regret,switched,snapshot_id,logdet_h1,logdet_h2"));
        assert!(csv.ends_with('\n') && !csv.contains('\r'));
    }

    #[test]
    fn rerun_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut config = parse_config(MINIMAL).unwrap();
        config.k_schedule = vec![50, 100];
        config.seeds = vec![0, 1];
        config.agent.c_beta = 0.05;
        let mut bytes = Vec::new();
        for dir in [&dir_a, &dir_b] {
            config.output_dir = Some(dir.path().to_path_buf());
            let outcome = run_experiment(&config).unwrap();
            let mut all = Vec::new();
            for f in &outcome.csv_files {
                all.push(fs::read(f).unwrap());
            }
            all.push(fs::read(dir.path().join("summary.json")).unwrap());
            all.push(fs::read(dir.path().join("scaling_fit.json")).unwrap());
            bytes.push(all);
        }
        assert_eq!(bytes[0], bytes[1]);
    }

    #[test]
    fn csv_floats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = parse_config(MINIMAL).unwrap();
        config.k_schedule = vec![30];
        config.agent.c_beta = 0.05;
        config.output_dir = Some(dir.path().to_path_buf());
        let outcome = run_experiment(&config).unwrap();
        let csv = fs::read_to_string(&outcome.csv_files[0]).unwrap();
        for line in csv.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            // Shortest round-trip: parse and re-render reproduces the text.
            for idx in [1usize, 2, 3, 6, 7] {
                let v: f64 = fields[idx].parse().unwrap();
                assert_eq!(format!("{v}"), fields[idx]);
            }
        }
    }

    #[test]
    fn hard_instance_and_from_file_environments() {
        let env = EnvironmentConfig::HardInstance {
            d0: 2,
            h0: 2,
            h_star: Some(1),
            j_star: None,
            seed: 0,
        };
        let spec = env.build().unwrap();
        spec.validate().unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.json");
        fs::write(&path, spec.to_json().unwrap()).unwrap();
        let loaded = EnvironmentConfig::FromFile { path: path.clone() }.build().unwrap();
        assert_eq!(loaded.to_json().unwrap(), spec.to_json().unwrap());
        assert_eq!(
            inspect_spec(&path).unwrap().to_json().unwrap(),
            spec.to_json().unwrap()
        );
    }

    #[test]
    fn scaling_fit_emitted_with_three_distinct_k() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = parse_config(MINIMAL).unwrap();
        config.k_schedule = vec![50, 100, 200];
        config.agent.c_beta = 0.05;
        config.output_dir = Some(dir.path().to_path_buf());
        run_experiment(&config).unwrap();
        let fits: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("scaling_fit.json")).unwrap())
                .unwrap();
        assert!(fits["switch_fit"].is_array());
        assert_eq!(fits["switch_points"].as_array().unwrap().len(), 3);
    }
}
