use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ppm_attack::attacker::{AttackerConfig, ResetScope, DEFAULT_MAX_ATTEMPTS, DEFAULT_SAMPLES};
use ppm_attack::harness::{
    fit_linear, mean_times_by_n, run_ensemble, run_trial_observed, EnsembleStats, SuccessRule,
    TimeColumn, TrialConfig, TrialResult,
};
use ppm_attack::io::{belief_log_file, read_results, transcript_file, write_results};
use ppm_attack::ppm::PpmConfig;
use ppm_attack::protocol::{run_key_exchange, DEFAULT_MAX_OUTER};
use ppm_attack::{rng, Error};

/// Permutation parity machine key exchange and a probabilistic attack on it.
#[derive(Debug, Parser)]
#[command(name = "ppm-attack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the A/B synchronisation alone.
    Exchange {
        /// Inputs per hidden unit.
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        machine: MachineArgs,
        /// Write the public transcript as CSV.
        #[arg(long, value_name = "PATH")]
        transcript: Option<PathBuf>,
    },
    /// Run one key exchange with the attacker listening.
    Attack {
        /// Inputs per hidden unit.
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        machine: MachineArgs,
        #[command(flatten)]
        attack: AttackArgs,
        /// Write the public transcript as CSV.
        #[arg(long, value_name = "PATH")]
        transcript: Option<PathBuf>,
        /// Write the attacker's belief at every outer-round boundary.
        #[arg(long, value_name = "PATH")]
        belief_log: Option<PathBuf>,
        /// Write the trial as a one-row results CSV.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run an ensemble of attacked exchanges for each N in a list.
    Sweep {
        /// Comma-separated inputs per hidden unit, e.g. 2,4,6.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[command(flatten)]
        machine: MachineArgs,
        #[command(flatten)]
        attack: AttackArgs,
        /// Trials per N. Trial i uses seed splitmix64(seed + (i+1)*0x9E3779B97F4A7C15).
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Results CSV.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Fit t = a*N + b to the per-N mean times of a results CSV.
    Regress {
        /// Results CSV written by `sweep`.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Time to fit.
        #[arg(long, value_enum)]
        column: Column,
    },
}

#[derive(Debug, Args)]
struct MachineArgs {
    /// Hidden units.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// State vector length.
    #[arg(long, default_value_t = 128)]
    g: usize,
    /// Seed of the run (base seed for sweeps).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Outer rounds after which an unsynchronised run is aborted.
    #[arg(long, default_value_t = DEFAULT_MAX_OUTER)]
    max_outer: usize,
}

#[derive(Debug, Args)]
struct AttackArgs {
    /// Accepted candidates per inner round (M).
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Consecutive rejected candidates before a belief entry is reset.
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    max_attempts: u64,
    /// Belief entries a reset may pick from.
    #[arg(long, value_enum, default_value_t = Scope::Global)]
    reset_scope: Scope,
    /// When a break counts as a successful attack.
    #[arg(long, value_enum, default_value_t = Rule::AtOrBeforeSync)]
    success_rule: Rule,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scope {
    /// Most extreme entry of the whole belief.
    Global,
    /// Most extreme entry among those the failing round selects.
    Selected,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Rule {
    /// t_b <= t_s.
    AtOrBeforeSync,
    /// t_b < t_s.
    BeforeSync,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Column {
    Ts,
    Tb,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Csv { .. } | Error::Observer(_) | Error::Shape(_) => 3,
        Error::InvalidConfig(_) | Error::IndexOutOfRange { .. } | Error::Degenerate(_) => 4,
        Error::Sequencing(_) => 1,
    }
}

fn machine(n: usize, m: &MachineArgs) -> Result<PpmConfig, Error> {
    let config = PpmConfig::new(n, m.k, m.g)?;
    if m.max_outer == 0 {
        return Err(Error::InvalidConfig("--max-outer must be at least 1".into()));
    }
    if let Some(w) = config.warning() {
        eprintln!("warning: {w}");
    }
    Ok(config)
}

fn trial_config(config: PpmConfig, m: &MachineArgs, a: &AttackArgs) -> Result<TrialConfig, Error> {
    let mut attack = AttackerConfig::new(a.samples, a.max_attempts)?;
    attack.reset_scope = match a.reset_scope {
        Scope::Global => ResetScope::Global,
        Scope::Selected => ResetScope::Selected,
    };
    Ok(TrialConfig {
        ppm: config,
        attack,
        max_outer: m.max_outer,
        seed: m.seed,
        success_rule: match a.success_rule {
            Rule::AtOrBeforeSync => SuccessRule::AtOrBeforeSync,
            Rule::BeforeSync => SuccessRule::BeforeSync,
        },
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

fn print_trial(r: &TrialResult) {
    println!(
        "N={} K={} G={} seed={} t_s={} t_b={} success={} aborted={} reason={} inner_rounds={} resets={} elapsed={:.2}s",
        r.n,
        r.k,
        r.g,
        r.seed,
        opt(r.t_s),
        opt(r.t_b),
        r.success,
        r.aborted,
        opt(r.abort_reason),
        r.inner_rounds_total,
        r.resets,
        r.elapsed
    );
}

fn print_stats(n: usize, s: &EnsembleStats) {
    println!(
        "N={n:<3} runs={:<4} discarded={:<3} mean_ts={:.3} sd_ts={:.3} mean_tb={:.3} sd_tb={:.3} P_s={:.3}",
        s.n_runs, s.n_discarded, s.mean_ts, s.std_ts, s.mean_tb, s.std_tb, s.p_success
    );
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Exchange { n, machine: m, transcript } => {
            let config = machine(n, &m)?;
            let rng = rng::stream(m.seed, rng::PROTOCOL_STREAM);
            let outcome = match transcript {
                Some(path) => {
                    let mut w = transcript_file(&path, &config)?;
                    let o = run_key_exchange(config, rng, m.max_outer, &mut w)?;
                    w.finish().map_err(|e| Error::Io { path, source: e })?;
                    o
                }
                None => run_key_exchange(config, rng, m.max_outer, &mut ())?,
            };
            println!(
                "N={n} K={} G={} seed={} t_s={} aborted={} reason={} inner_rounds={}",
                m.k,
                m.g,
                m.seed,
                opt(outcome.t_s),
                outcome.aborted,
                opt(outcome.abort_reason),
                outcome.total_inner_rounds
            );
        }
        Command::Attack { n, machine: m, attack, transcript, belief_log, out } => {
            let cfg = trial_config(machine(n, &m)?, &m, &attack)?;
            let mut tw = transcript.as_deref().map(|p| transcript_file(p, &cfg.ppm)).transpose()?;
            let mut bw = belief_log.as_deref().map(belief_log_file).transpose()?;
            let result = match (&mut tw, &mut bw) {
                (Some(t), Some(b)) => run_trial_observed(&cfg, t, b)?,
                (Some(t), None) => run_trial_observed(&cfg, t, &mut ())?,
                (None, Some(b)) => run_trial_observed(&cfg, &mut (), b)?,
                (None, None) => run_trial_observed(&cfg, &mut (), &mut ())?,
            };
            if let (Some(t), Some(path)) = (tw, transcript) {
                t.finish().map_err(|e| Error::Io { path, source: e })?;
            }
            if let Some(b) = bw {
                b.finish()?;
            }
            if let Some(path) = out {
                write_results(std::slice::from_ref(&result), &path)?;
            }
            print_trial(&result);
        }
        Command::Sweep { n, machine: m, attack, runs, out } => {
            if runs == 0 {
                return Err(Error::InvalidConfig("--runs must be at least 1".into()));
            }
            let configs = n
                .iter()
                .map(|&n| trial_config(machine(n, &m)?, &m, &attack))
                .collect::<Result<Vec<_>, _>>()?;
            let mut all = Vec::new();
            for cfg in &configs {
                let (results, stats) = run_ensemble(cfg, runs, m.seed)?;
                print_stats(cfg.ppm.n(), &stats);
                all.extend(results);
            }
            write_results(&all, &out)?;
        }
        Command::Regress { input, column } => {
            let results = read_results(&input)?;
            let column = match column {
                Column::Ts => TimeColumn::Ts,
                Column::Tb => TimeColumn::Tb,
            };
            let points = mean_times_by_n(&results, column);
            let fit = fit_linear(&points)?;
            for (n, t) in &points {
                println!("N={n} mean={t:.4}");
            }
            println!("a={:.6} +- {:.6}", fit.a, fit.stderr_a);
            println!("b={:.6} +- {:.6}", fit.b, fit.stderr_b);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
