//! Trials and ensembles: a key exchange with the attacker listening, judged
//! by a referee that can see A's state.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacker::{Attacker, AttackerConfig, Belief, BreakReport};
use crate::error::{Error, Result};
use crate::ppm::PpmConfig;
use crate::protocol::{AbortReason, KeyExchange, RoundObserver, DEFAULT_MAX_OUTER};
use crate::rng;

/// When a run with a break counts as a successful attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SuccessRule {
    /// `t_b ≤ t_s`: the guess matched no later than the parties synchronised.
    #[default]
    AtOrBeforeSync,
    /// `t_b < t_s`.
    BeforeSync,
}

impl SuccessRule {
    fn holds(self, t_b: usize, t_s: usize) -> bool {
        match self {
            SuccessRule::AtOrBeforeSync => t_b <= t_s,
            SuccessRule::BeforeSync => t_b < t_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialConfig {
    pub ppm: PpmConfig,
    pub attack: AttackerConfig,
    pub max_outer: usize,
    pub seed: u64,
    pub success_rule: SuccessRule,
}

impl TrialConfig {
    pub fn new(ppm: PpmConfig, seed: u64) -> Self {
        Self {
            ppm,
            attack: AttackerConfig::default(),
            max_outer: DEFAULT_MAX_OUTER,
            seed,
            success_rule: SuccessRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_outer == 0 {
            return Err(Error::InvalidConfig("max_outer must be at least 1".into()));
        }
        self.attack.validate()
    }
}

/// Outcome of one trial. Serialises to one row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub run_id: u64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "G")]
    pub g: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub max_outer: usize,
    pub seed: u64,
    pub t_s: Option<usize>,
    pub t_b: Option<usize>,
    pub success: bool,
    pub aborted: bool,
    pub abort_reason: Option<AbortReason>,
    pub inner_rounds_total: u64,
    #[serde(skip)]
    pub resets: u64,
    /// Wall-clock seconds.
    #[serde(skip)]
    pub elapsed: f64,
}

impl TrialResult {
    /// Neither the parties nor the attacker reached their goal before the
    /// run ended. Such runs carry no information about either time.
    pub fn discarded(&self) -> bool {
        self.t_s.is_none() && self.t_b.is_none()
    }
}

/// Receives the attacker's belief at the start and after every transfer.
pub trait BeliefSink {
    fn record(&mut self, outer_index: usize, belief: &Belief) -> Result<()>;
}

impl BeliefSink for () {
    fn record(&mut self, _: usize, _: &Belief) -> Result<()> {
        Ok(())
    }
}

impl BeliefSink for Vec<(usize, Belief)> {
    fn record(&mut self, outer_index: usize, belief: &Belief) -> Result<()> {
        self.push((outer_index, belief.clone()));
        Ok(())
    }
}

pub fn run_trial(cfg: &TrialConfig) -> Result<TrialResult> {
    run_trial_observed(cfg, &mut (), &mut ())
}

/// Runs one trial, forwarding the public transcript and the belief
/// snapshots.
///
/// The attacker is conditioned on every round until its guess first matches
/// A's state; after that it is no longer consulted. A break found right
/// after a transfer is dated to the outer round that just completed, one
/// found within a round to the outer round in progress.
pub fn run_trial_observed<O, B>(
    cfg: &TrialConfig,
    transcript: &mut O,
    beliefs: &mut B,
) -> Result<TrialResult>
where
    O: RoundObserver + ?Sized,
    B: BeliefSink + ?Sized,
{
    cfg.validate()?;
    let start = Instant::now();
    let mut exchange = KeyExchange::new(cfg.ppm, rng::stream(cfg.seed, rng::PROTOCOL_STREAM));
    let mut attack_rng = rng::stream(cfg.seed, rng::ATTACKER_STREAM);
    let mut attacker = Attacker::new(cfg.ppm, cfg.attack)?;
    let mut report = BreakReport::default();
    let mut resets = 0;
    beliefs.record(0, attacker.belief())?;

    let (t_s, abort_reason) = loop {
        let step = exchange.step()?;
        transcript.observe(&step.record).map_err(|e| Error::Observer(e.to_string()))?;

        if report.t_b.is_none() {
            let update = attacker.process_round(&step.record, &mut attack_rng)?;
            resets += update.resets;
            debug_assert_eq!(update.transferred, step.commit.is_some());
            let a_state = exchange.party_a().state();
            match step.commit {
                Some(c) if update.transferred => {
                    beliefs.record(c.completed_outer, attacker.belief())?;
                    report.check(attacker.belief(), a_state, c.completed_outer);
                }
                _ => {
                    report.check(attacker.belief(), a_state, step.record.input.outer_index);
                }
            }
        }

        let Some(c) = step.commit else { continue };
        if c.synchronized {
            break (Some(c.completed_outer), None);
        } else if c.antiparallel {
            break (None, Some(AbortReason::Antiparallel));
        } else if c.completed_outer >= cfg.max_outer {
            break (None, Some(AbortReason::CapReached));
        }
    };

    let t_b = report.t_b;
    let success = match (t_b, t_s) {
        (Some(b), Some(s)) => cfg.success_rule.holds(b, s),
        (Some(_), None) => true,
        (None, _) => false,
    };
    Ok(TrialResult {
        run_id: 0,
        n: cfg.ppm.n(),
        k: cfg.ppm.k(),
        g: cfg.ppm.g(),
        m: cfg.attack.m_samples,
        max_outer: cfg.max_outer,
        seed: cfg.seed,
        t_s,
        t_b,
        success,
        aborted: abort_reason.is_some(),
        abort_reason,
        inner_rounds_total: exchange.total_inner_rounds(),
        resets,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

/// Aggregates of an ensemble.
///
/// Time statistics use runs that synchronised; `t_b` statistics use those of
/// them that also recorded a break. The success probability is taken over
/// runs that are not discarded (see [`TrialResult::discarded`]).
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n_runs: usize,
    pub n_discarded: usize,
    pub n_success: usize,
    pub n_failed: usize,
    pub mean_ts: f64,
    pub std_ts: f64,
    pub mean_tb: f64,
    pub std_tb: f64,
    pub p_success: f64,
}

/// Sample mean and standard deviation (`n − 1` denominator); NaN where
/// undefined.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl EnsembleStats {
    pub fn from_results(results: &[TrialResult]) -> Self {
        let mut sorted: Vec<&TrialResult> = results.iter().collect();
        sorted.sort_by_key(|r| r.run_id);

        let ts: Vec<f64> = sorted.iter().filter_map(|r| r.t_s).map(|t| t as f64).collect();
        let tb: Vec<f64> = sorted
            .iter()
            .filter(|r| r.t_s.is_some())
            .filter_map(|r| r.t_b)
            .map(|t| t as f64)
            .collect();
        let n_discarded = sorted.iter().filter(|r| r.discarded()).count();
        let n_success = sorted.iter().filter(|r| r.success).count();
        let n_runs = sorted.len();
        let n_failed = n_runs - n_discarded - n_success;
        let (mean_ts, std_ts) = mean_std(&ts);
        let (mean_tb, std_tb) = mean_std(&tb);
        let decided = n_runs - n_discarded;
        let p_success = if decided == 0 { f64::NAN } else { n_success as f64 / decided as f64 };
        Self { n_runs, n_discarded, n_success, n_failed, mean_ts, std_ts, mean_tb, std_tb, p_success }
    }
}

/// Runs `runs` trials of `template`, trial `i` seeded with
/// [`rng::trial_seed`]`(base_seed, i)` and numbered `run_id = i`. Results
/// come back ordered by `run_id` whatever the execution order.
pub fn run_ensemble(
    template: &TrialConfig,
    runs: usize,
    base_seed: u64,
) -> Result<(Vec<TrialResult>, EnsembleStats)> {
    template.validate()?;
    let results = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = TrialConfig { seed: rng::trial_seed(base_seed, i), ..*template };
            run_trial(&cfg).map(|r| TrialResult { run_id: i, ..r })
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = EnsembleStats::from_results(&results);
    Ok((results, stats))
}

/// Least-squares line `t = a N + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionFit {
    pub a: f64,
    pub b: f64,
    pub stderr_a: f64,
    pub stderr_b: f64,
}

/// Ordinary least squares over `(N, t)` points. Standard errors come from
/// the residual variance with `n − 2` degrees of freedom and are NaN for
/// two points.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<RegressionFit> {
    let n = points.len() as f64;
    let distinct = {
        let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    };
    if distinct < 2 {
        return Err(Error::Degenerate(format!(
            "linear fit needs at least 2 distinct abscissae, got {distinct}"
        )));
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let a = sxy / sxx;
    let b = mean_y - a * mean_x;
    let (stderr_a, stderr_b) = if points.len() > 2 {
        let ssr: f64 = points.iter().map(|p| (p.1 - a * p.0 - b).powi(2)).sum();
        let s2 = ssr / (n - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / n + mean_x * mean_x / sxx)).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(RegressionFit { a, b, stderr_a, stderr_b })
}

/// Which time a regression is run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeColumn {
    Ts,
    Tb,
}

/// Per-`N` mean times of the runs that enter the statistics, ascending in
/// `N`.
pub fn mean_times_by_n(results: &[TrialResult], column: TimeColumn) -> Vec<(f64, f64)> {
    let mut ns: Vec<usize> = results.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .filter_map(|n| {
            let subset: Vec<TrialResult> = results.iter().filter(|r| r.n == n).cloned().collect();
            let stats = EnsembleStats::from_results(&subset);
            let mean = match column {
                TimeColumn::Ts => stats.mean_ts,
                TimeColumn::Tb => stats.mean_tb,
            };
            mean.is_finite().then_some((n as f64, mean))
        })
        .collect()
}
