//! Permutation parity machine evaluation.
//!
//! A machine with `K` hidden units of `N` inputs each draws its weights from
//! a private binary state vector of length `G` through a public index matrix
//! π. Hidden unit `j` XORs its inputs with its weights, fires when more than
//! half of the resulting bits are set, and the machine outputs the parity of
//! all hidden units.
//!
//! Grids are `N × K` and stored row-major: entry `(i, j)` lives at
//! `i * K + j`, so column `j` holds the receptive field of hidden unit `j`.
//! Indices are 0-based in memory; π is 1-based at every external boundary.

use crate::error::{Error, Result};

/// Machine dimensions: `n` inputs per hidden unit, `k` hidden units, `g`
/// state bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PpmConfig {
    n: usize,
    k: usize,
    g: usize,
}

impl PpmConfig {
    pub fn new(n: usize, k: usize, g: usize) -> Result<Self> {
        if n == 0 || k == 0 || g == 0 {
            return Err(Error::InvalidConfig(format!(
                "N, K and G must all be at least 1 (got N={n}, K={k}, G={g})"
            )));
        }
        Ok(Self { n, k, g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn g(&self) -> usize {
        self.g
    }

    /// The machine is meant to run with `G` much larger than `K·N`. Returns a
    /// warning message when that does not hold; the configuration stays
    /// usable.
    pub fn warning(&self) -> Option<String> {
        (self.g <= self.k * self.n).then(|| {
            format!(
                "G={} does not exceed K*N={}; weights will overlap heavily",
                self.g,
                self.k * self.n
            )
        })
    }
}

fn check_bits(bits: &[u8]) -> Result<()> {
    match bits.iter().position(|&b| b > 1) {
        Some(pos) => Err(Error::Shape(format!(
            "element {pos} is {} but bits must be 0 or 1",
            bits[pos]
        ))),
        None => Ok(()),
    }
}

/// Private binary state of a machine.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateVector(Vec<u8>);

impl StateVector {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        check_bits(&bits)?;
        Ok(Self(bits))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    /// Bit at 0-based position `index`.
    pub fn get(&self, index: usize) -> Option<u8> {
        self.0.get(index).copied()
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| b ^ 1).collect())
    }
}

/// `N × K` grid of bits, used for inputs `X`, weights `W` and vector fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitGrid {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

pub type InputMatrix = BitGrid;

impl BitGrid {
    /// Builds a grid from row-major bits.
    pub fn from_row_major(rows: usize, cols: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} grid needs {} bits, got {}",
                rows * cols,
                bits.len()
            )));
        }
        check_bits(&bits)?;
        Ok(Self { rows, cols, bits })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, bits: vec![0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.bits[row * self.cols + col]
    }

    pub fn row_major(&self) -> &[u8] {
        &self.bits
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = u8> + '_ {
        self.bits[col..].iter().step_by(self.cols).copied()
    }
}

/// `N × K` matrix of state-vector indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PiMatrix {
    rows: usize,
    cols: usize,
    // 0-based
    entries: Vec<usize>,
}

impl PiMatrix {
    /// Builds π from row-major 1-based indices. Range against `G` is checked
    /// where the matrix meets a state vector.
    pub fn from_one_based(rows: usize, cols: usize, entries: Vec<usize>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} index matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        let entries = entries
            .into_iter()
            .map(|e| e.checked_sub(1).ok_or(Error::IndexOutOfRange { index: 0, len: 0 }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows, cols, entries })
    }

    pub(crate) fn from_zero_based(rows: usize, cols: usize, entries: Vec<usize>) -> Self {
        debug_assert_eq!(entries.len(), rows * cols);
        Self { rows, cols, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// 0-based state index at `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> usize {
        self.entries[row * self.cols + col]
    }

    /// 0-based state indices in row-major order.
    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn one_based(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e + 1)
    }

    /// 0-based state indices feeding hidden unit `col`.
    pub fn column(&self, col: usize) -> impl Iterator<Item = usize> + '_ {
        self.entries[col..].iter().step_by(self.cols).copied()
    }

    /// Distinct 0-based indices, ascending.
    pub fn distinct(&self) -> Vec<usize> {
        let mut d = self.entries.clone();
        d.sort_unstable();
        d.dedup();
        d
    }

    pub fn check_range(&self, g: usize) -> Result<()> {
        match self.entries.iter().find(|&&e| e >= g) {
            Some(&e) => Err(Error::IndexOutOfRange { index: e + 1, len: g }),
            None => Ok(()),
        }
    }
}

/// Public data of one inner round.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RoundInput {
    pub x: InputMatrix,
    pub pi: PiMatrix,
    /// 1-based outer round this input belongs to.
    pub outer_index: usize,
    /// 1-based position within the outer round, counting every inner round.
    pub inner_index: usize,
}

impl RoundInput {
    pub fn check_shape(&self, config: &PpmConfig) -> Result<()> {
        let (n, k) = (config.n(), config.k());
        if self.x.rows() != n || self.x.cols() != k {
            return Err(Error::Shape(format!(
                "input matrix is {}x{}, machine expects {n}x{k}",
                self.x.rows(),
                self.x.cols()
            )));
        }
        if self.pi.rows() != n || self.pi.cols() != k {
            return Err(Error::Shape(format!(
                "index matrix is {}x{}, machine expects {n}x{k}",
                self.pi.rows(),
                self.pi.cols()
            )));
        }
        self.pi.check_range(config.g())
    }
}

/// Every intermediate quantity of one machine evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub weights: BitGrid,
    pub vector_fields: BitGrid,
    pub scalar_fields: Vec<usize>,
    pub hidden_states: Vec<u8>,
    pub output: u8,
}

/// `w[i][j] = s[π[i][j]]`.
pub fn select_weights(state: &StateVector, pi: &PiMatrix) -> Result<BitGrid> {
    pi.check_range(state.len())?;
    let bits = pi.entries().iter().map(|&idx| state.0[idx]).collect();
    Ok(BitGrid { rows: pi.rows(), cols: pi.cols(), bits })
}

/// Scalar local field and state of one hidden unit.
///
/// The unit fires only on a strict majority: a tie `h = N/2` gives 0.
pub fn hidden_unit_state(x: &[u8], w: &[u8]) -> Result<(usize, u8)> {
    if x.len() != w.len() {
        return Err(Error::Shape(format!(
            "input column has {} bits, weight column has {}",
            x.len(),
            w.len()
        )));
    }
    let h = x.iter().zip(w).filter(|(a, b)| (*a ^ *b) & 1 == 1).count();
    Ok((h, majority(h, x.len())))
}

#[inline]
pub(crate) fn majority(h: usize, n: usize) -> u8 {
    u8::from(2 * h > n)
}

/// Parity of the hidden states.
pub fn ppm_output(hidden_states: &[u8]) -> u8 {
    hidden_states.iter().fold(0, |acc, s| acc ^ (s & 1))
}

pub fn evaluate(state: &StateVector, round: &RoundInput, config: &PpmConfig) -> Result<Evaluation> {
    if state.len() != config.g() {
        return Err(Error::Shape(format!(
            "state vector has {} bits, machine expects G={}",
            state.len(),
            config.g()
        )));
    }
    round.check_shape(config)?;
    let weights = select_weights(state, &round.pi)?;
    let (n, k) = (config.n(), config.k());

    let fields: Vec<u8> = round
        .x
        .row_major()
        .iter()
        .zip(weights.row_major())
        .map(|(x, w)| x ^ w)
        .collect();
    let vector_fields = BitGrid { rows: n, cols: k, bits: fields };

    let scalar_fields: Vec<usize> = (0..k)
        .map(|j| vector_fields.column(j).map(usize::from).sum())
        .collect();
    let hidden_states: Vec<u8> = scalar_fields.iter().map(|&h| majority(h, n)).collect();
    let output = ppm_output(&hidden_states);

    Ok(Evaluation { weights, vector_fields, scalar_fields, hidden_states, output })
}
