//! File formats: round transcripts, belief snapshots and results CSV.
//!
//! Transcript rows are
//! `outer_index,inner_index,tau_a,tau_b,agreed,pi_1_1,…,pi_N_K,x_1_1,…,x_N_K`
//! with π (1-based) and `X` in row-major order. Belief rows are the outer
//! round index followed by the `G` probabilities in scientific notation with
//! ten significant digits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::attacker::Belief;
use crate::error::{Error, Result};
use crate::harness::{BeliefSink, TrialResult};
use crate::ppm::{BitGrid, PiMatrix, PpmConfig, RoundInput};
use crate::protocol::{ObserverError, RoundObserver, RoundRecord};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn transcript_header(config: &PpmConfig) -> String {
    let mut cols = vec!["outer_index", "inner_index", "tau_a", "tau_b", "agreed"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for prefix in ["pi", "x"] {
        for i in 1..=config.n() {
            for j in 1..=config.k() {
                cols.push(format!("{prefix}_{i}_{j}"));
            }
        }
    }
    cols.join(",")
}

pub fn transcript_line(record: &RoundRecord) -> String {
    let mut line = format!(
        "{},{},{},{},{}",
        record.input.outer_index, record.input.inner_index, record.tau_a, record.tau_b, record.agreed
    );
    for p in record.input.pi.one_based() {
        line.push(',');
        line.push_str(&p.to_string());
    }
    for x in record.input.x.row_major() {
        line.push(',');
        line.push(if *x == 1 { '1' } else { '0' });
    }
    line
}

/// Writes round records as they are observed.
pub struct TranscriptWriter<W: Write> {
    out: W,
}

impl<W: Write> TranscriptWriter<W> {
    pub fn new(mut out: W, config: &PpmConfig) -> std::io::Result<Self> {
        writeln!(out, "{}", transcript_header(config))?;
        Ok(Self { out })
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> RoundObserver for TranscriptWriter<W> {
    fn observe(&mut self, record: &RoundRecord) -> Result<(), ObserverError> {
        writeln!(self.out, "{}", transcript_line(record))?;
        Ok(())
    }
}

/// Transcript writer on a new file at `path`.
pub fn transcript_file(path: &Path, config: &PpmConfig) -> Result<TranscriptWriter<BufWriter<File>>> {
    TranscriptWriter::new(create(path)?, config).map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str, line: usize) -> Result<T> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| Error::Shape(format!("transcript line {line}: bad or missing {what}")))
}

fn parse_bit(field: Option<&str>, what: &str, line: usize) -> Result<u8> {
    match parse_field::<u8>(field, what, line)? {
        b @ (0 | 1) => Ok(b),
        b => Err(Error::Shape(format!("transcript line {line}: {what} is {b}, not a bit"))),
    }
}

/// Reads a transcript back. `buffer_len_after` is reconstructed by counting
/// agreements, wrapping at `G`.
pub fn read_transcript<R: BufRead>(input: R, config: &PpmConfig) -> Result<Vec<RoundRecord>> {
    let (n, k, g) = (config.n(), config.k(), config.g());
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io("<transcript>", e))?
        .ok_or_else(|| Error::Shape("empty transcript".into()))?;
    if header.trim_end() != transcript_header(config) {
        return Err(Error::Shape("transcript header does not match the machine".into()));
    }

    let mut records = Vec::new();
    let mut buffered = 0;
    for (lineno, line) in lines.enumerate().map(|(i, l)| (i + 2, l)) {
        let line = line.map_err(|e| Error::io("<transcript>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 + 2 * n * k {
            return Err(Error::Shape(format!(
                "transcript line {lineno}: {} fields, expected {}",
                fields.len(),
                5 + 2 * n * k
            )));
        }
        let mut f = fields.iter().copied();
        let outer_index = parse_field(f.next(), "outer_index", lineno)?;
        let inner_index = parse_field(f.next(), "inner_index", lineno)?;
        let tau_a = parse_bit(f.next(), "tau_a", lineno)?;
        let tau_b = parse_bit(f.next(), "tau_b", lineno)?;
        let agreed: bool = parse_field(f.next(), "agreed", lineno)?;
        let pi = (0..n * k)
            .map(|_| parse_field(f.next(), "pi", lineno))
            .collect::<Result<Vec<usize>>>()?;
        let x = (0..n * k).map(|_| parse_bit(f.next(), "x", lineno)).collect::<Result<Vec<_>>>()?;
        let input = RoundInput {
            x: BitGrid::from_row_major(n, k, x)?,
            pi: PiMatrix::from_one_based(n, k, pi)?,
            outer_index,
            inner_index,
        };
        input.check_shape(config)?;
        if agreed != (tau_a == tau_b) {
            return Err(Error::Shape(format!("transcript line {lineno}: agreed flag contradicts outputs")));
        }
        if agreed {
            buffered += 1;
        }
        records.push(RoundRecord { input, tau_a, tau_b, agreed, buffer_len_after: buffered });
        if buffered == g {
            buffered = 0;
        }
    }
    Ok(records)
}

pub fn read_transcript_file(path: &Path, config: &PpmConfig) -> Result<Vec<RoundRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_transcript(BufReader::new(file), config)
}

pub fn belief_line(outer_index: usize, belief: &Belief) -> String {
    let mut line = outer_index.to_string();
    for p in belief.probs() {
        line.push_str(&format!(",{p:.9e}"));
    }
    line
}

/// Belief snapshots, one line per outer-round boundary.
pub struct BeliefLog<W: Write> {
    out: W,
    path: PathBuf,
}

impl<W: Write> BeliefLog<W> {
    pub fn new(out: W, path: impl Into<PathBuf>) -> Self {
        Self { out, path: path.into() }
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.out)
    }
}

impl<W: Write> BeliefSink for BeliefLog<W> {
    fn record(&mut self, outer_index: usize, belief: &Belief) -> Result<()> {
        writeln!(self.out, "{}", belief_line(outer_index, belief)).map_err(|e| Error::io(&self.path, e))
    }
}

pub fn belief_log_file(path: &Path) -> Result<BeliefLog<BufWriter<File>>> {
    Ok(BeliefLog::new(create(path)?, path))
}

/// Writes the results CSV, replacing any existing file.
pub fn write_results(results: &[TrialResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    if results.is_empty() {
        w.write_record(RESULT_COLUMNS).map_err(|e| Error::csv(path, e))?;
    }
    for r in results {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const RESULT_COLUMNS: [&str; 13] = [
    "run_id",
    "N",
    "K",
    "G",
    "M",
    "max_outer",
    "seed",
    "t_s",
    "t_b",
    "success",
    "aborted",
    "abort_reason",
    "inner_rounds_total",
];

pub fn read_results(path: &Path) -> Result<Vec<TrialResult>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = r.headers().map_err(|e| Error::csv(path, e))?;
    if header.iter().ne(RESULT_COLUMNS) {
        return Err(Error::Shape(format!("{}: unexpected results header", path.display())));
    }
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| Error::csv(path, e))
}
