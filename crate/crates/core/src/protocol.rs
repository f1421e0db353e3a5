//! Two-party synchronisation by mutual agreement.
//!
//! Each inner round publishes fresh random `X` and π. Both parties evaluate
//! their machines and publish their outputs; on agreement each one appends
//! the state of its first hidden unit to a private buffer. A full buffer of
//! `G` bits replaces the state vector, which completes an outer round.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ppm::{evaluate, BitGrid, PiMatrix, PpmConfig, StateVector};

pub use crate::ppm::RoundInput;

/// Cap on outer rounds when none is given.
pub const DEFAULT_MAX_OUTER: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartyLabel {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Party {
    label: PartyLabel,
    state: StateVector,
    buffer: Vec<u8>,
}

impl Party {
    pub fn new(label: PartyLabel, state: StateVector) -> Self {
        let g = state.len();
        Self { label, state, buffer: Vec::with_capacity(g) }
    }

    pub fn label(&self) -> PartyLabel {
        self.label
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn buffer(&self) -> &[u8] {
        &self.buffer
    }

    fn buffer_full(&self) -> bool {
        self.buffer.len() >= self.state.len()
    }
}

/// One inner round as seen on the public channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRecord {
    pub input: RoundInput,
    pub tau_a: u8,
    pub tau_b: u8,
    pub agreed: bool,
    /// Buffer length of either party after this round.
    pub buffer_len_after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    CapReached,
    Antiparallel,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbortReason::CapReached => "cap_reached",
            AbortReason::Antiparallel => "antiparallel",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    /// Completed outer rounds when the states first matched.
    pub t_s: Option<usize>,
    pub aborted: bool,
    pub abort_reason: Option<AbortReason>,
    pub total_inner_rounds: u64,
}

pub type ObserverError = Box<dyn std::error::Error + Send + Sync>;

/// Receives every public round record, in order.
pub trait RoundObserver {
    fn observe(&mut self, record: &RoundRecord) -> Result<(), ObserverError>;
}

impl RoundObserver for () {
    fn observe(&mut self, _: &RoundRecord) -> Result<(), ObserverError> {
        Ok(())
    }
}

impl RoundObserver for Vec<RoundRecord> {
    fn observe(&mut self, record: &RoundRecord) -> Result<(), ObserverError> {
        self.push(record.clone());
        Ok(())
    }
}

impl<O: RoundObserver + ?Sized> RoundObserver for &mut O {
    fn observe(&mut self, record: &RoundRecord) -> Result<(), ObserverError> {
        (**self).observe(record)
    }
}

/// Party with uniformly random state and an empty buffer.
pub fn init_party<R: Rng + ?Sized>(config: &PpmConfig, label: PartyLabel, rng: &mut R) -> Party {
    let bits = (0..config.g()).map(|_| u8::from(rng.random::<bool>())).collect();
    Party::new(label, StateVector::from_bits(bits).expect("random bits are binary"))
}

/// Fresh public round data: every π entry uniform on `1..=G`, every input
/// bit uniform, all independent.
pub fn generate_round<R: Rng + ?Sized>(
    config: &PpmConfig,
    rng: &mut R,
    outer_index: usize,
    inner_index: usize,
) -> RoundInput {
    let (n, k, g) = (config.n(), config.k(), config.g());
    let pi = (0..n * k).map(|_| rng.random_range(0..g)).collect();
    let x = (0..n * k).map(|_| u8::from(rng.random::<bool>())).collect();
    RoundInput {
        x: BitGrid::from_row_major(n, k, x).expect("shape and bits are valid"),
        pi: PiMatrix::from_zero_based(n, k, pi),
        outer_index,
        inner_index,
    }
}

/// Evaluates both parties on `round` and buffers their first hidden unit on
/// agreement. States are left untouched.
pub fn inner_round(
    a: &mut Party,
    b: &mut Party,
    round: RoundInput,
    config: &PpmConfig,
) -> Result<RoundRecord> {
    if a.buffer_full() || b.buffer_full() {
        return Err(Error::Sequencing("inner round on a full buffer; commit was missed".into()));
    }
    let ea = evaluate(&a.state, &round, config)?;
    let eb = evaluate(&b.state, &round, config)?;
    let agreed = ea.output == eb.output;
    if agreed {
        a.buffer.push(ea.hidden_states[0]);
        b.buffer.push(eb.hidden_states[0]);
    }
    Ok(RoundRecord {
        input: round,
        tau_a: ea.output,
        tau_b: eb.output,
        agreed,
        buffer_len_after: a.buffer.len(),
    })
}

/// Replaces the state with the full buffer; the k-th buffered bit becomes
/// state bit k.
pub fn outer_round_commit(party: &mut Party) -> Result<()> {
    if party.buffer.len() != party.state.len() {
        return Err(Error::Sequencing(format!(
            "commit with {} of {} buffered bits",
            party.buffer.len(),
            party.state.len()
        )));
    }
    let buffer = std::mem::replace(&mut party.buffer, Vec::with_capacity(party.state.len()));
    party.state = StateVector::from_bits(buffer)?;
    Ok(())
}

pub fn is_synchronized(a: &Party, b: &Party) -> bool {
    a.state == b.state
}

pub fn is_antiparallel(a: &Party, b: &Party) -> bool {
    a.state.len() == b.state.len()
        && a.state.bits().iter().zip(b.state.bits()).all(|(x, y)| x != y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Commit {
    /// Outer rounds completed, including this one.
    pub completed_outer: usize,
    pub synchronized: bool,
    pub antiparallel: bool,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub record: RoundRecord,
    /// Present when this round filled the buffers and the parties committed.
    pub commit: Option<Commit>,
}

/// A running key exchange, advanced one inner round at a time.
///
/// The session keeps running after synchronisation if stepped further; the
/// stopping rule belongs to [`KeyExchange::run`] or to the caller.
#[derive(Debug, Clone)]
pub struct KeyExchange<R> {
    config: PpmConfig,
    rng: R,
    a: Party,
    b: Party,
    outer: usize,
    inner: usize,
    total_inner: u64,
}

impl<R: Rng> KeyExchange<R> {
    /// Draws A's state, then B's, from `rng`, which then supplies the rounds.
    pub fn new(config: PpmConfig, mut rng: R) -> Self {
        let a = init_party(&config, PartyLabel::A, &mut rng);
        let b = init_party(&config, PartyLabel::B, &mut rng);
        Self::with_parties(config, a, b, rng)
    }

    pub fn with_parties(config: PpmConfig, a: Party, b: Party, rng: R) -> Self {
        Self { config, rng, a, b, outer: 1, inner: 0, total_inner: 0 }
    }

    pub fn config(&self) -> &PpmConfig {
        &self.config
    }

    pub fn party_a(&self) -> &Party {
        &self.a
    }

    pub fn party_b(&self) -> &Party {
        &self.b
    }

    pub fn completed_outer(&self) -> usize {
        self.outer - 1
    }

    pub fn total_inner_rounds(&self) -> u64 {
        self.total_inner
    }

    pub fn step(&mut self) -> Result<Step> {
        self.inner += 1;
        self.total_inner += 1;
        let round = generate_round(&self.config, &mut self.rng, self.outer, self.inner);
        let record = inner_round(&mut self.a, &mut self.b, round, &self.config)?;

        let commit = if record.buffer_len_after == self.config.g() {
            outer_round_commit(&mut self.a)?;
            outer_round_commit(&mut self.b)?;
            let c = Commit {
                completed_outer: self.outer,
                synchronized: is_synchronized(&self.a, &self.b),
                antiparallel: is_antiparallel(&self.a, &self.b),
            };
            self.outer += 1;
            self.inner = 0;
            Some(c)
        } else {
            None
        };
        Ok(Step { record, commit })
    }

    /// Runs until the states match, turn antiparallel, or `max_outer` outer
    /// rounds complete. Every record reaches `observer` before the stop.
    pub fn run<O: RoundObserver + ?Sized>(
        mut self,
        max_outer: usize,
        observer: &mut O,
    ) -> Result<RunOutcome> {
        if max_outer == 0 {
            return Err(Error::InvalidConfig("max_outer must be at least 1".into()));
        }
        loop {
            let step = self.step()?;
            observer.observe(&step.record).map_err(|e| Error::Observer(e.to_string()))?;
            let Some(c) = step.commit else { continue };
            let stop = if c.synchronized {
                Some(None)
            } else if c.antiparallel {
                Some(Some(AbortReason::Antiparallel))
            } else if c.completed_outer >= max_outer {
                Some(Some(AbortReason::CapReached))
            } else {
                None
            };
            if let Some(reason) = stop {
                return Ok(RunOutcome {
                    t_s: reason.is_none().then_some(c.completed_outer),
                    aborted: reason.is_some(),
                    abort_reason: reason,
                    total_inner_rounds: self.total_inner,
                });
            }
        }
    }
}

pub fn run_key_exchange<R: Rng, O: RoundObserver + ?Sized>(
    config: PpmConfig,
    rng: R,
    max_outer: usize,
    observer: &mut O,
) -> Result<RunOutcome> {
    KeyExchange::new(config, rng).run(max_outer, observer)
}
