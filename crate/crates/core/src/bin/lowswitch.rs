//! Command-line entry point.
//!
//! Subcommands: `run` (configuration-driven experiment sweep), `lemmas`
//! (standalone determinant-lemma property sweep), `inspect` (validate and
//! pretty-print a spec file). `LOWSWITCH_LOG` controls log verbosity.
//! Exit codes: 0 success, 1 config error, 2 runtime invariant violation,
//! 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use lowswitch::covariance::{switch_required, verify_det_growth, CovarianceState, FeatureVec};
use lowswitch::experiment::{inspect_spec, parse_config, run_experiment};
use lowswitch::{Error, Result};

#[derive(Parser)]
#[command(name = "lowswitch", version, about = "Low-switching LSVI-UCB experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep from a JSON config.
    Run {
        /// Path to the experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads for the run grid (overrides the config; 0 = all cores).
        #[arg(long)]
        parallelism: Option<usize>,
        /// Literal update rule: clip Q only at H, no floor at 0.
        #[arg(long)]
        strict_paper: bool,
        /// Parse the config and build the environment, then exit.
        #[arg(long)]
        validate_only: bool,
    },
    /// Determinant-lemma property sweep on random unit-feature streams.
    Lemmas {
        /// Number of randomized streams.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Feature dimension.
        #[arg(long, default_value_t = 8)]
        dim: usize,
        /// Base RNG seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Validate a spec file and pretty-print it.
    Inspect {
        /// Path to the spec file (JSON).
        #[arg(long)]
        spec: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("LOWSWITCH_LOG")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; malformed invocations are
            // config errors (exit 1), not clap's default usage code.
            let code: u8 = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            output,
            parallelism,
            strict_paper,
            validate_only,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = parse_config(&text)?;
            if let Some(dir) = output {
                cfg.output_dir = Some(dir);
            }
            if let Some(n) = parallelism {
                cfg.parallelism = n;
            }
            if strict_paper {
                cfg.agent.strict_paper = true;
            }
            if validate_only {
                let spec = cfg.environment.build()?;
                spec.validate()?;
                println!(
                    "config ok: d={} H={} states={} runs={}",
                    spec.dim(),
                    spec.horizon(),
                    spec.n_states(),
                    cfg.k_schedule.len() * cfg.seeds.len()
                );
                return Ok(());
            }
            let outcome = run_experiment(&cfg)?;
            println!(
                "wrote {} trace files, summary.json, scaling_fit.json to {}",
                outcome.csv_files.len(),
                outcome.output_dir.display()
            );
            Ok(())
        }
        Command::Lemmas { trials, dim, seed } => lemma_sweep(trials, dim, seed),
        Command::Inspect { spec } => {
            let spec = inspect_spec(&spec)?;
            println!(
                "valid spec: d={} H={} states={} max_actions={} initial_state={}",
                spec.dim(),
                spec.horizon(),
                spec.n_states(),
                spec.max_actions(),
                spec.initial_state()
            );
            println!("{}", spec.to_json()?);
            Ok(())
        }
    }
}

/// Random unit vector via Box-Muller normals.
fn random_unit(dim: usize, rng: &mut impl Rng) -> FeatureVec {
    loop {
        let entries: Vec<f64> = (0..dim)
            .map(|_| {
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let norm = entries.iter().map(|e| e * e).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return FeatureVec::from_slice(
                &entries.iter().map(|e| e / norm).collect::<Vec<_>>(),
            )
            .expect("unit vector within norm bound");
        }
    }
}

/// Streams random unit features through covariance states and asserts, on
/// every trial, (a) the switch criterion implies a log-determinant jump of
/// at least ln 2 and (b) the log-determinant growth bound
/// `logdet <= d ln d + d ln(K + lambda)`.
fn lemma_sweep(trials: usize, dim: usize, seed: u64) -> Result<()> {
    if trials == 0 || dim == 0 {
        return Err(Error::Config("trials and dim must be >= 1".into()));
    }
    let mut switch_events = 0u64;
    for trial in 0..trials {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(trial as u64));
        let mut cur = CovarianceState::new(dim, 1.0)?;
        let mut reference = cur.clone();
        let updates = rng.random_range(1..200usize);
        for _ in 0..updates {
            cur.rank1_update(&random_unit(dim, &mut rng))?;
            if switch_required(&reference, &cur)? {
                switch_events += 1;
                if !verify_det_growth(&reference, &cur) {
                    return Err(Error::InvariantViolation(format!(
                        "trial {trial}: switch without logdet growth >= ln 2 \
                         (gap {:.6e})",
                        cur.logdet() - reference.logdet()
                    )));
                }
                reference = cur.clone();
            }
        }
        let bound = dim as f64 * (dim as f64).ln() + dim as f64 * (updates as f64 + 1.0).ln();
        if cur.logdet() > bound + 1e-6 {
            return Err(Error::InvariantViolation(format!(
                "trial {trial}: logdet {:.6} exceeds bound {bound:.6} after {updates} updates",
                cur.logdet()
            )));
        }
    }
    println!(
        "lemma sweep ok: {trials} trials, dim {dim}, {switch_events} switch events, \
         0 violations"
    );
    Ok(())
}
