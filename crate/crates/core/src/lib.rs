//! Permutation parity machine key exchange and a probabilistic attack on it.
//!
//! * [`ppm`] evaluates a single machine.
//! * [`protocol`] runs two machines through inner and outer rounds until
//!   their state vectors match.
//! * [`attacker`] listens to the public rounds and estimates A's state.
//! * [`harness`] runs seeded trials and ensembles and computes their
//!   statistics; [`io`] holds the transcript, belief and results formats.

pub mod attacker;
pub mod error;
pub mod harness;
pub mod io;
pub mod ppm;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
