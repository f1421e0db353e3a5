//! Probabilistic attack on the key exchange.
//!
//! The eavesdropper keeps, for every bit of A's state, an estimate of the
//! probability that the bit is 0. Within an outer round each public
//! observation `(X, π, τ^A)` refines the estimates of the bits π selects:
//! candidate weights are drawn from the current belief and kept only if
//! they reproduce A's output, and the kept fraction of zeros becomes the new
//! estimate. When no candidate can be found the most extreme estimate is
//! returned to 1/2. At the end of an outer round the belief about the new
//! state (A's buffered first-unit bits) is computed analytically from a
//! binomial approximation of each first hidden unit's local field.

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;

use crate::error::{Error, Result};
use crate::ppm::{majority, PiMatrix, PpmConfig, RoundInput, StateVector};
use crate::protocol::RoundRecord;

pub const DEFAULT_SAMPLES: usize = 1_000;
pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;

/// Per-bit probabilities that A's state bit is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Neutral prior: every bit is 0 with probability 1/2.
    pub fn uniform(g: usize) -> Self {
        Self(vec![0.5; g])
    }

    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if let Some(pos) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Shape(format!(
                "probability {} at position {pos} is outside [0, 1]",
                probs[pos]
            )));
        }
        Ok(Self(probs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Total distance from the neutral hypothesis.
    pub fn polarization(&self) -> f64 {
        self.0.iter().map(|p| (p - 0.5).abs()).sum()
    }
}

/// Neutral prior of length `g`.
pub fn init_belief(g: usize) -> Belief {
    Belief::uniform(g)
}

/// Which belief entries a reset may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResetScope {
    /// Any of the `G` entries.
    #[default]
    Global,
    /// Only the entries selected by the round that failed.
    Selected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackerConfig {
    /// Accepted candidates per inner round (`M`).
    pub m_samples: usize,
    /// Consecutive rejections that trigger a reset.
    pub max_attempts: u64,
    pub reset_scope: ResetScope,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        Self {
            m_samples: DEFAULT_SAMPLES,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            reset_scope: ResetScope::Global,
        }
    }
}

impl AttackerConfig {
    pub fn new(m_samples: usize, max_attempts: u64) -> Result<Self> {
        let cfg = Self { m_samples, max_attempts, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_samples == 0 || self.max_attempts == 0 {
            return Err(Error::InvalidConfig(format!(
                "samples and max attempts must be at least 1 (got {} and {})",
                self.m_samples, self.max_attempts
            )));
        }
        if self.m_samples > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!("samples {} too large", self.m_samples)));
        }
        Ok(())
    }
}

/// Bits for the distinct state indices a round selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialAssignment {
    /// Distinct 0-based state indices, ascending.
    pub indices: Vec<usize>,
    pub bits: Vec<u8>,
}

/// Accepted candidates of one round, reduced to per-index zero counts.
///
/// The marginal update only needs how often each index was 0 among the
/// accepted candidates, so individual candidates are not retained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    /// Distinct 0-based state indices, ascending.
    pub indices: Vec<usize>,
    pub zero_counts: Vec<u32>,
    pub samples: usize,
    /// Candidates drawn to collect `samples`, rejected ones included.
    pub attempts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sampling {
    Complete(SampleSet),
    /// `max_attempts` consecutive candidates were rejected.
    ResetNeeded { attempts: u64 },
}

/// Round data rearranged for repeated candidate evaluation.
struct RoundPlan {
    n: usize,
    k: usize,
    distinct: Vec<usize>,
    /// Position in `distinct` of every π entry, row-major.
    slots: Vec<usize>,
    x: Vec<u8>,
}

impl RoundPlan {
    fn new(round: &RoundInput) -> Self {
        let distinct = round.pi.distinct();
        let slots = round
            .pi
            .entries()
            .iter()
            .map(|e| distinct.binary_search(e).expect("entry is among distinct indices"))
            .collect();
        Self {
            n: round.pi.rows(),
            k: round.pi.cols(),
            distinct,
            slots,
            x: round.x.row_major().to_vec(),
        }
    }

    fn output(&self, bits: &[u8]) -> u8 {
        let mut tau = 0;
        for j in 0..self.k {
            let mut h = 0;
            for i in 0..self.n {
                let e = i * self.k + j;
                h += usize::from(self.x[e] ^ bits[self.slots[e]]);
            }
            tau ^= majority(h, self.n);
        }
        tau
    }
}

fn zero_draws(belief: &Belief, indices: &[usize]) -> Vec<Bernoulli> {
    indices
        .iter()
        .map(|&i| Bernoulli::new(belief.0[i]).expect("belief entries lie in [0, 1]"))
        .collect()
}

#[inline]
fn draw_into<R: Rng + ?Sized>(draws: &[Bernoulli], bits: &mut [u8], rng: &mut R) {
    for (bit, d) in bits.iter_mut().zip(draws) {
        *bit = u8::from(!d.sample(rng));
    }
}

/// One candidate: an independent draw per distinct index π selects, 0 with
/// probability `p_i`. An index repeated in π gets a single draw.
pub fn sample_candidate<R: Rng + ?Sized>(
    belief: &Belief,
    pi: &PiMatrix,
    rng: &mut R,
) -> Result<PartialAssignment> {
    pi.check_range(belief.len())?;
    let indices = pi.distinct();
    let draws = zero_draws(belief, &indices);
    let mut bits = vec![0; indices.len()];
    draw_into(&draws, &mut bits, rng);
    Ok(PartialAssignment { indices, bits })
}

/// Draws candidates until `M` of them reproduce `tau_a` on the round, or
/// until `max_attempts` consecutive candidates fail.
pub fn collect_valid_samples<R: Rng + ?Sized>(
    belief: &Belief,
    round: &RoundInput,
    tau_a: u8,
    cfg: &AttackerConfig,
    config: &PpmConfig,
    rng: &mut R,
) -> Result<Sampling> {
    cfg.validate()?;
    round.check_shape(config)?;
    if belief.len() != config.g() {
        return Err(Error::Shape(format!(
            "belief has {} entries, machine expects G={}",
            belief.len(),
            config.g()
        )));
    }
    let plan = RoundPlan::new(round);
    let d = plan.distinct.len();
    let m = cfg.m_samples;

    // A fully collapsed selection yields the same candidate on every draw,
    // so the attempt loop's result is known in advance.
    if plan.distinct.iter().all(|&i| belief.0[i] == 0.0 || belief.0[i] == 1.0) {
        let bits: Vec<u8> = plan.distinct.iter().map(|&i| u8::from(belief.0[i] == 0.0)).collect();
        if plan.output(&bits) != tau_a {
            return Ok(Sampling::ResetNeeded { attempts: cfg.max_attempts });
        }
        let zero_counts = bits.iter().map(|&b| if b == 0 { m as u32 } else { 0 }).collect();
        return Ok(Sampling::Complete(SampleSet {
            indices: plan.distinct,
            zero_counts,
            samples: m,
            attempts: m as u64,
        }));
    }

    let draws = zero_draws(belief, &plan.distinct);
    let mut bits = vec![0u8; d];
    let mut zero_counts = vec![0u32; d];
    let mut accepted = 0usize;
    let mut attempts = 0u64;
    let mut failures = 0u64;
    while accepted < m {
        draw_into(&draws, &mut bits, rng);
        attempts += 1;
        if plan.output(&bits) == tau_a {
            accepted += 1;
            failures = 0;
            for (c, &b) in zero_counts.iter_mut().zip(&bits) {
                *c += u32::from(b == 0);
            }
        } else {
            failures += 1;
            if failures >= cfg.max_attempts {
                return Ok(Sampling::ResetNeeded { attempts });
            }
        }
    }
    Ok(Sampling::Complete(SampleSet { indices: plan.distinct, zero_counts, samples: m, attempts }))
}

/// Sets every selected entry to its relative frequency of zeros among the
/// accepted candidates; entries π does not select are left as they are.
pub fn update_marginals(belief: &mut Belief, samples: &SampleSet, pi: &PiMatrix) -> Result<()> {
    if samples.samples == 0 {
        return Err(Error::Shape("empty sample set".into()));
    }
    if samples.indices != pi.distinct() || samples.zero_counts.len() != samples.indices.len() {
        return Err(Error::Shape("sample set does not cover the indices π selects".into()));
    }
    pi.check_range(belief.len())?;
    let m = samples.samples as f64;
    for (&i, &zeros) in samples.indices.iter().zip(&samples.zero_counts) {
        belief.0[i] = f64::from(zeros) / m;
    }
    Ok(())
}

fn most_collapsed(belief: &Belief, candidates: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in candidates {
        let dist = (belief.0[i] - 0.5).abs();
        if best.is_none_or(|(_, d)| dist > d) {
            best = Some((i, dist));
        }
    }
    best.map(|(i, _)| i)
}

/// Returns the entry farthest from 1/2 (lowest index on ties) to 1/2 and
/// reports its 0-based index.
pub fn reset_most_collapsed(belief: &mut Belief) -> usize {
    assert!(!belief.is_empty(), "reset on an empty belief");
    let i = most_collapsed(belief, 0..belief.len()).expect("belief is non-empty");
    belief.0[i] = 0.5;
    i
}

/// Like [`reset_most_collapsed`], restricted to `indices`.
pub fn reset_most_collapsed_among(belief: &mut Belief, indices: &[usize]) -> Option<usize> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let i = most_collapsed(belief, sorted.into_iter())?;
    belief.0[i] = 0.5;
    Some(i)
}

/// Thresholded guess: bit 0 where `p > 1/2`, bit 1 otherwise.
pub fn most_probable_state(belief: &Belief) -> StateVector {
    let bits = belief.0.iter().map(|&p| u8::from(p <= 0.5)).collect();
    StateVector::from_bits(bits).expect("threshold bits are binary")
}

/// Average probability that a bit of the vector local field is 1:
/// `(1/N) Σ [x_i p_{π_i} + (1 − x_i)(1 − p_{π_i})]` over one hidden unit.
pub fn mean_field_prob(belief: &Belief, x_col: &[u8], pi_col: &[usize]) -> Result<f64> {
    if x_col.len() != pi_col.len() || x_col.is_empty() {
        return Err(Error::Shape(format!(
            "input column has {} bits, index column has {}",
            x_col.len(),
            pi_col.len()
        )));
    }
    let mut sum = 0.0;
    for (&x, &idx) in x_col.iter().zip(pi_col) {
        let p = *belief
            .0
            .get(idx)
            .ok_or(Error::IndexOutOfRange { index: idx + 1, len: belief.len() })?;
        sum += if x == 1 { p } else { 1.0 - p };
    }
    Ok((sum / x_col.len() as f64).clamp(0.0, 1.0))
}

/// Binomial lower tail `Σ_{n=0}^{⌊N/2⌋} C(N,n) q^n (1−q)^{N−n}`: the
/// probability that a hidden unit stays at 0 when each of its `N` field bits
/// is 1 independently with probability `q`.
///
/// Terms are summed in log space, which keeps the result accurate for large
/// `N` where `(1−q)^N` or `q^N` would underflow.
pub fn hidden_zero_prob(q: f64, n: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Shape(format!("probability {q} is outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::Shape("hidden unit needs at least one input".into()));
    }
    let limit = n / 2;
    if q == 0.0 {
        return Ok(1.0);
    }
    if q == 1.0 {
        return Ok(0.0);
    }
    let (ln_q, ln_1q) = (q.ln(), (-q).ln_1p());
    let mut ln_choose = 0.0;
    let mut log_terms = Vec::with_capacity(limit + 1);
    for m in 0..=limit {
        log_terms.push(ln_choose + m as f64 * ln_q + (n - m) as f64 * ln_1q);
        ln_choose += ((n - m) as f64 / (m + 1) as f64).ln();
    }
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_terms.iter().map(|t| (t - max).exp()).sum();
    Ok((max + sum.ln()).exp().clamp(0.0, 1.0))
}

/// Belief about the next state vector: entry `k` is the probability that
/// A's first hidden unit was 0 in the `k`-th agreeing round, evaluated under
/// `belief_minus`.
pub fn transfer_outer(
    belief_minus: &Belief,
    agreed_rounds: &[RoundInput],
    config: &PpmConfig,
) -> Result<Belief> {
    if agreed_rounds.len() != config.g() {
        return Err(Error::Sequencing(format!(
            "transfer needs {} agreeing rounds, got {}",
            config.g(),
            agreed_rounds.len()
        )));
    }
    let probs = agreed_rounds
        .iter()
        .map(|round| {
            let x: Vec<u8> = round.x.column(0).collect();
            let pi: Vec<usize> = round.pi.column(0).collect();
            hidden_zero_prob(mean_field_prob(belief_minus, &x, &pi)?, config.n())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Belief(probs))
}

/// What one observed round did to the attacker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundUpdate {
    pub resets: u64,
    pub attempts: u64,
    /// The round closed an outer round and the belief now describes the next
    /// state vector.
    pub transferred: bool,
}

/// Eavesdropper state across a transcript.
#[derive(Debug, Clone)]
pub struct Attacker {
    config: PpmConfig,
    cfg: AttackerConfig,
    belief: Belief,
    agreed_rounds: Vec<RoundInput>,
    resets_performed: u64,
}

impl Attacker {
    pub fn new(config: PpmConfig, cfg: AttackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            config,
            cfg,
            belief: init_belief(config.g()),
            agreed_rounds: Vec::with_capacity(config.g()),
            resets_performed: 0,
        })
    }

    /// Starts from an arbitrary belief instead of the neutral prior.
    pub fn with_belief(config: PpmConfig, cfg: AttackerConfig, belief: Belief) -> Result<Self> {
        if belief.len() != config.g() {
            return Err(Error::Shape(format!(
                "belief has {} entries, machine expects G={}",
                belief.len(),
                config.g()
            )));
        }
        Ok(Self { belief, ..Self::new(config, cfg)? })
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn agreed_rounds(&self) -> &[RoundInput] {
        &self.agreed_rounds
    }

    pub fn resets_performed(&self) -> u64 {
        self.resets_performed
    }

    pub fn guess(&self) -> StateVector {
        most_probable_state(&self.belief)
    }

    /// Conditions the belief on `τ^A` of the round (agreeing or not), and
    /// on an outer-round boundary replaces it by the transferred belief.
    pub fn process_round<R: Rng + ?Sized>(
        &mut self,
        record: &RoundRecord,
        rng: &mut R,
    ) -> Result<RoundUpdate> {
        let round = &record.input;
        let mut update = RoundUpdate::default();
        loop {
            match collect_valid_samples(
                &self.belief,
                round,
                record.tau_a,
                &self.cfg,
                &self.config,
                rng,
            )? {
                Sampling::Complete(samples) => {
                    update.attempts += samples.attempts;
                    update_marginals(&mut self.belief, &samples, &round.pi)?;
                    break;
                }
                Sampling::ResetNeeded { attempts } => {
                    update.attempts += attempts;
                    update.resets += 1;
                    self.resets_performed += 1;
                    match self.cfg.reset_scope {
                        ResetScope::Global => {
                            reset_most_collapsed(&mut self.belief);
                        }
                        ResetScope::Selected => {
                            reset_most_collapsed_among(&mut self.belief, round.pi.entries());
                        }
                    }
                }
            }
        }

        if record.agreed {
            if self.agreed_rounds.len() >= self.config.g() {
                return Err(Error::Sequencing("more agreeing rounds than buffer slots".into()));
            }
            self.agreed_rounds.push(round.clone());
            if self.agreed_rounds.len() == self.config.g() {
                self.belief = transfer_outer(&self.belief, &self.agreed_rounds, &self.config)?;
                self.agreed_rounds.clear();
                update.transferred = true;
            }
        }
        Ok(update)
    }
}

/// First outer round at which the thresholded belief matched A's state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BreakReport {
    pub t_b: Option<usize>,
    pub guessed: Option<StateVector>,
}

impl BreakReport {
    /// Records a break at `outer_index` if none is recorded yet and the
    /// guess matches `true_state`. Returns whether a break is on record.
    pub fn check(&mut self, belief: &Belief, true_state: &StateVector, outer_index: usize) -> bool {
        if self.t_b.is_none() {
            let guess = most_probable_state(belief);
            if &guess == true_state {
                self.t_b = Some(outer_index);
                self.guessed = Some(guess);
            }
        }
        self.t_b.is_some()
    }
}

pub fn check_break(
    report: &mut BreakReport,
    attacker: &Attacker,
    true_state: &StateVector,
    outer_index: usize,
) -> bool {
    report.check(attacker.belief(), true_state, outer_index)
}
