//! Decade coarse-graining.
//!
//! A token's decade frequency is the equal-weight mean over the decade's ten
//! calendar years of `match_count / total_match_count`, with absent years
//! counting as zero. Yearly ratios are accumulated as exact 96-bit fixed-point
//! fractions, so the table does not depend on record order or on how input
//! was split into shards.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::divergence::Distribution;
use crate::ingest::{CorpusTotals, YearRecord};
use crate::numeric::compensated_sum;

pub const TABLE_MAGIC: &[u8; 8] = b"NGDECTBL";
pub const TABLE_FORMAT_VERSION: u32 = 1;

const FRACTION_BITS: u32 = 96;
const YEARS_PER_DECADE: usize = 10;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no usable corpus total for year {0}")]
    MissingTotals(i32),
    #[error("empty decade range")]
    EmptyRange,
    #[error("decade {0} has no frequency mass")]
    EmptyDecade(Decade),
    #[error("decade {0} is outside the table range")]
    UnknownDecade(Decade),
    #[error("{0} is not a decade start year")]
    InvalidDecade(i32),
    #[error("token {token:?} has {count} matches in {year}, above the year total {total}")]
    CountExceedsTotal {
        token: String,
        year: i32,
        count: u64,
        total: u64,
    },
    #[error("table format version {found} is newer than supported version {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt table: {0}")]
    CorruptTable(String),
    #[error("invalid table rows: {0}")]
    InvalidRows(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A calendar decade, identified by its start year: `Decade(1820)` is 1820–1829.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct Decade(i32);

impl Decade {
    pub fn new(start_year: i32) -> Result<Self, CorpusError> {
        if start_year.rem_euclid(10) != 0 {
            return Err(CorpusError::InvalidDecade(start_year));
        }
        Ok(Decade(start_year))
    }

    pub fn containing(year: i32) -> Self {
        Decade(year - year.rem_euclid(10))
    }

    pub fn start_year(self) -> i32 {
        self.0
    }

    pub fn end_year(self) -> i32 {
        self.0 + 9
    }

    pub fn years(self) -> std::ops::RangeInclusive<i32> {
        self.0..=self.0 + 9
    }

    /// The decade `n` decades later (or earlier, for negative `n`).
    pub fn offset(self, n: i32) -> Self {
        Decade(self.0 + 10 * n)
    }
}

impl TryFrom<i32> for Decade {
    type Error = CorpusError;
    fn try_from(v: i32) -> Result<Self, Self::Error> {
        Decade::new(v)
    }
}

impl From<Decade> for i32 {
    fn from(d: Decade) -> i32 {
        d.0
    }
}

impl fmt::Display for Decade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

impl FromStr for Decade {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim().trim_end_matches('s');
        let year: i32 = digits.parse().map_err(|_| format!("not a decade: {s:?}"))?;
        Decade::new(year).map_err(|e| e.to_string())
    }
}

/// Inclusive, contiguous run of decades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecadeRange {
    first: Decade,
    last: Decade,
}

impl DecadeRange {
    pub fn new(first: Decade, last: Decade) -> Result<Self, CorpusError> {
        if first > last {
            return Err(CorpusError::EmptyRange);
        }
        Ok(DecadeRange { first, last })
    }

    /// Decades fully covering `first_year..=last_year`.
    pub fn from_years(first_year: i32, last_year: i32) -> Result<Self, CorpusError> {
        Self::new(Decade::containing(first_year), Decade::containing(last_year))
    }

    /// The 1820s through the 1990s.
    pub fn default_analysis() -> Self {
        DecadeRange { first: Decade(1820), last: Decade(1990) }
    }

    pub fn first(&self) -> Decade {
        self.first
    }

    pub fn last(&self) -> Decade {
        self.last
    }

    pub fn len(&self) -> usize {
        ((self.last.0 - self.first.0) / 10 + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, d: Decade) -> bool {
        self.first <= d && d <= self.last
    }

    pub fn index_of(&self, d: Decade) -> Option<usize> {
        self.contains(d).then(|| ((d.0 - self.first.0) / 10) as usize)
    }

    pub fn get(&self, index: usize) -> Option<Decade> {
        (index < self.len()).then(|| self.first.offset(index as i32))
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = Decade> + ExactSizeIterator + '_ {
        (0..self.len()).map(move |i| self.first.offset(i as i32))
    }

    pub fn first_year(&self) -> i32 {
        self.first.start_year()
    }

    pub fn last_year(&self) -> i32 {
        self.last.end_year()
    }
}

impl fmt::Display for DecadeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.first, self.last)
    }
}

/// Exact `floor(count / total * 2^96)` for `count <= total`.
fn fixed_fraction(count: u64, total: u64) -> u128 {
    debug_assert!(count <= total && total > 0);
    let total = u128::from(total);
    let mut rem = u128::from(count);
    let mut acc: u128 = 0;
    // 32 bits of quotient per step; rem < total < 2^64 keeps rem << 32 in range
    for _ in 0..FRACTION_BITS / 32 {
        rem <<= 32;
        acc = (acc << 32) | (rem / total);
        rem %= total;
    }
    if count as u128 == total {
        1u128 << FRACTION_BITS
    } else {
        acc
    }
}

fn fixed_to_decade_mean(sum: u128) -> f64 {
    const SCALE: f64 = (YEARS_PER_DECADE as f64) * (1u128 << FRACTION_BITS) as f64;
    sum as f64 / SCALE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    decade: u16,
    sum: u128,
}

/// Accumulates year records into per-decade sums.
///
/// Builders over disjoint or overlapping record sets can be merged; the
/// merged result is identical whatever the merge order.
#[derive(Debug, Clone)]
pub struct DecadeTableBuilder {
    range: DecadeRange,
    denominators: Vec<u64>,
    rows: HashMap<String, Vec<Slot>>,
}

impl DecadeTableBuilder {
    /// Fails with `MissingTotals` if any year of the range lacks a nonzero total.
    pub fn new(totals: &CorpusTotals, range: DecadeRange) -> Result<Self, CorpusError> {
        let denominators = (range.first_year()..=range.last_year())
            .map(|y| match totals.get(y) {
                Some(t) if t.match_count > 0 => Ok(t.match_count),
                _ => Err(CorpusError::MissingTotals(y)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DecadeTableBuilder {
            range,
            denominators,
            rows: HashMap::new(),
        })
    }

    pub fn range(&self) -> DecadeRange {
        self.range
    }

    fn contribution(&self, record: &YearRecord) -> Result<Option<(u16, u128)>, CorpusError> {
        if record.match_count == 0
            || record.year < self.range.first_year()
            || record.year > self.range.last_year()
        {
            return Ok(None);
        }
        let offset = (record.year - self.range.first_year()) as usize;
        let total = self.denominators[offset];
        if record.match_count > total {
            return Err(CorpusError::CountExceedsTotal {
                token: record.token.clone(),
                year: record.year,
                count: record.match_count,
                total,
            });
        }
        let decade = (offset / YEARS_PER_DECADE) as u16;
        Ok(Some((decade, fixed_fraction(record.match_count, total))))
    }

    /// Adds one record. Records outside the range or with zero matches are ignored.
    pub fn add(&mut self, record: YearRecord) -> Result<(), CorpusError> {
        if let Some((decade, frac)) = self.contribution(&record)? {
            add_slot(self.rows.entry(record.token).or_default(), decade, frac);
        }
        Ok(())
    }

    pub fn add_ref(&mut self, record: &YearRecord) -> Result<(), CorpusError> {
        if let Some((decade, frac)) = self.contribution(record)? {
            let slots = match self.rows.get_mut(record.token.as_str()) {
                Some(s) => s,
                None => self.rows.entry(record.token.clone()).or_default(),
            };
            add_slot(slots, decade, frac);
        }
        Ok(())
    }

    /// Folds another builder's sums into this one. Both must share a range
    /// and totals.
    pub fn merge(&mut self, other: DecadeTableBuilder) {
        assert_eq!(self.range, other.range, "merging builders over different ranges");
        assert_eq!(self.denominators, other.denominators, "merging builders over different totals");
        for (token, slots) in other.rows {
            match self.rows.get_mut(&token) {
                None => {
                    self.rows.insert(token, slots);
                }
                Some(mine) => {
                    for s in slots {
                        add_slot(mine, s.decade, s.sum);
                    }
                }
            }
        }
    }

    pub fn finish(self) -> DecadeTable {
        let n = self.range.len();
        let mut rows: Vec<(String, Vec<Slot>)> = self.rows.into_iter().collect();
        rows.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut tokens = Vec::with_capacity(rows.len());
        let mut freqs = Vec::with_capacity(rows.len() * n);
        for (token, slots) in rows {
            let start = freqs.len();
            freqs.resize(start + n, 0.0);
            for s in slots {
                freqs[start + s.decade as usize] = fixed_to_decade_mean(s.sum);
            }
            tokens.push(token);
        }
        DecadeTable::from_parts(self.range, tokens, freqs)
    }
}

fn add_slot(slots: &mut Vec<Slot>, decade: u16, frac: u128) {
    // shards are sorted by token then year, so the common case is the tail
    if let Some(last) = slots.last_mut() {
        if last.decade == decade {
            last.sum += frac;
            return;
        }
        if last.decade < decade {
            slots.push(Slot { decade, sum: frac });
            return;
        }
    }
    match slots.binary_search_by_key(&decade, |s| s.decade) {
        Ok(i) => slots[i].sum += frac,
        Err(i) => slots.insert(i, Slot { decade, sum: frac }),
    }
}

/// Builds the decade table from a record sequence in one pass.
pub fn build_decade_table<I>(
    records: I,
    totals: &CorpusTotals,
    range: DecadeRange,
) -> Result<DecadeTable, CorpusError>
where
    I: IntoIterator<Item = YearRecord>,
{
    let mut builder = DecadeTableBuilder::new(totals, range)?;
    for r in records {
        builder.add(r)?;
    }
    Ok(builder.finish())
}

/// Immutable token × decade table of mean relative frequencies.
///
/// Rows are sorted by token bytes. Absent tokens have frequency zero; every
/// stored row has at least one nonzero decade.
#[derive(Debug, Clone, PartialEq)]
pub struct DecadeTable {
    range: DecadeRange,
    tokens: Vec<String>,
    freqs: Vec<f64>,
    vocabulary: Vec<usize>,
    mass: Vec<f64>,
}

impl DecadeTable {
    fn from_parts(range: DecadeRange, tokens: Vec<String>, freqs: Vec<f64>) -> Self {
        let n = range.len();
        let mut vocabulary = vec![0usize; n];
        for row in freqs.chunks_exact(n) {
            for (v, f) in vocabulary.iter_mut().zip(row) {
                if *f > 0.0 {
                    *v += 1;
                }
            }
        }
        let mass = (0..n)
            .map(|d| compensated_sum(freqs.iter().skip(d).step_by(n).copied()))
            .collect();
        DecadeTable { range, tokens, freqs, vocabulary, mass }
    }

    /// Builds a table from explicit rows (one frequency per decade of `range`).
    /// Rows may come in any order; all-zero rows are dropped.
    pub fn from_rows<I>(range: DecadeRange, rows: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let n = range.len();
        let mut rows: Vec<(String, Vec<f64>)> = rows.into_iter().collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut tokens = Vec::with_capacity(rows.len());
        let mut freqs = Vec::with_capacity(rows.len() * n);
        for (token, row) in rows {
            if row.len() != n {
                return Err(CorpusError::InvalidRows(format!(
                    "row {token:?} has {} values, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|f| !f.is_finite() || *f < 0.0 || *f > 1.0) {
                return Err(CorpusError::InvalidRows(format!("row {token:?} has a value outside [0, 1]")));
            }
            if tokens.last() == Some(&token) {
                return Err(CorpusError::InvalidRows(format!("duplicate token {token:?}")));
            }
            if row.iter().all(|f| *f == 0.0) {
                continue;
            }
            tokens.push(token);
            freqs.extend(row);
        }
        Ok(Self::from_parts(range, tokens, freqs))
    }

    pub fn range(&self) -> DecadeRange {
        self.range
    }

    pub fn decades(&self) -> impl DoubleEndedIterator<Item = Decade> + ExactSizeIterator + '_ {
        self.range.iter()
    }

    pub fn num_decades(&self) -> usize {
        self.range.len()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token_index(&self, token: &str) -> Option<usize> {
        self.tokens.binary_search_by(|t| t.as_str().cmp(token)).ok()
    }

    pub fn decade_index(&self, d: Decade) -> Result<usize, CorpusError> {
        self.range.index_of(d).ok_or(CorpusError::UnknownDecade(d))
    }

    /// All decade frequencies of row `index`.
    pub fn row(&self, index: usize) -> &[f64] {
        let n = self.range.len();
        &self.freqs[index * n..(index + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.tokens
            .iter()
            .map(String::as_str)
            .zip(self.freqs.chunks_exact(self.range.len()))
    }

    /// Raw decade frequency; zero for unknown tokens or decades.
    pub fn frequency(&self, token: &str, d: Decade) -> f64 {
        match (self.token_index(token), self.range.index_of(d)) {
            (Some(t), Some(di)) => self.row(t)[di],
            _ => 0.0,
        }
    }

    /// `(token, frequency)` for every token nonzero in decade column `di`.
    pub fn column(&self, di: usize) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.rows().map(move |(t, r)| (t, r[di])).filter(|(_, f)| *f > 0.0)
    }

    pub fn vocabulary_size(&self, d: Decade) -> Result<usize, CorpusError> {
        Ok(self.vocabulary[self.decade_index(d)?])
    }

    /// Sum of stored raw frequencies in a decade.
    pub fn mass(&self, d: Decade) -> Result<f64, CorpusError> {
        Ok(self.mass[self.decade_index(d)?])
    }

    pub(crate) fn mass_at(&self, di: usize) -> f64 {
        self.mass[di]
    }
}

/// Renormalizes one decade of raw frequencies to a probability distribution.
pub fn normalize(table: &DecadeTable, d: Decade) -> Result<Distribution, CorpusError> {
    let di = table.decade_index(d)?;
    let mass = table.mass_at(di);
    if mass <= 0.0 {
        return Err(CorpusError::EmptyDecade(d));
    }
    let entries = table.column(di).map(|(t, f)| (t.to_owned(), f / mass)).collect();
    Ok(Distribution::from_sorted_unchecked(entries))
}

/// Writes the binary cache format and returns its SHA-256 checksum (hex).
///
/// Layout, little-endian: magic `NGDECTBL`, `u32` version, `i32` first decade,
/// `u32` decade count, `u64` token count, then per token a `u32` byte length,
/// the UTF-8 bytes and one `f64` per decade; finally the SHA-256 of all
/// preceding bytes.
pub fn save_table<W: Write>(table: &DecadeTable, mut sink: W) -> Result<String, CorpusError> {
    let bytes = encode_table(table, TABLE_FORMAT_VERSION);
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(hex::encode(&bytes[bytes.len() - CHECKSUM_LEN..]))
}

pub(crate) fn encode_table(table: &DecadeTable, version: u32) -> Vec<u8> {
    let n = table.num_decades();
    let mut out = Vec::with_capacity(32 + table.len() * (16 + 8 * n));
    out.extend_from_slice(TABLE_MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&table.range.first().start_year().to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(table.len() as u64).to_le_bytes());
    for (token, row) in table.rows() {
        out.extend_from_slice(&(token.len() as u32).to_le_bytes());
        out.extend_from_slice(token.as_bytes());
        for f in row {
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Checksum (hex SHA-256) that `save_table` would report for this table.
pub fn table_checksum(table: &DecadeTable) -> String {
    let bytes = encode_table(table, TABLE_FORMAT_VERSION);
    hex::encode(&bytes[bytes.len() - CHECKSUM_LEN..])
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| CorpusError::CorruptTable("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CorpusError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Reads a table written by [`save_table`], returning it with its checksum.
pub fn load_table<R: Read>(mut source: R) -> Result<(DecadeTable, String), CorpusError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < TABLE_MAGIC.len() + 4 || &bytes[..TABLE_MAGIC.len()] != TABLE_MAGIC {
        return Err(CorpusError::CorruptTable("missing magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("length checked"));
    if version > TABLE_FORMAT_VERSION {
        return Err(CorpusError::VersionMismatch { found: version, supported: TABLE_FORMAT_VERSION });
    }
    if bytes.len() < 28 + CHECKSUM_LEN {
        return Err(CorpusError::CorruptTable("truncated header".into()));
    }
    let (payload, stored) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(payload).as_slice() != stored {
        return Err(CorpusError::CorruptTable("checksum mismatch".into()));
    }

    let mut cur = Cursor { bytes: payload, pos: 12 };
    let first = i32::from_le_bytes(cur.array()?);
    let n = u32::from_le_bytes(cur.array()?) as usize;
    let count = u64::from_le_bytes(cur.array()?);
    let first = Decade::new(first).map_err(|_| CorpusError::CorruptTable("bad first decade".into()))?;
    if n == 0 {
        return Err(CorpusError::CorruptTable("zero decades".into()));
    }
    let range = DecadeRange::new(first, first.offset(n as i32 - 1))?;

    let mut tokens: Vec<String> = Vec::new();
    let mut freqs = Vec::new();
    for _ in 0..count {
        let len = u32::from_le_bytes(cur.array()?) as usize;
        let token = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| CorpusError::CorruptTable("token is not UTF-8".into()))?
            .to_owned();
        if tokens.last().is_some_and(|prev| *prev >= token) {
            return Err(CorpusError::CorruptTable("tokens not strictly sorted".into()));
        }
        for _ in 0..n {
            let f = f64::from_le_bytes(cur.array()?);
            if !f.is_finite() || f < 0.0 {
                return Err(CorpusError::CorruptTable(format!("bad frequency for {token:?}")));
            }
            freqs.push(f);
        }
        tokens.push(token);
    }
    if cur.pos != payload.len() {
        return Err(CorpusError::CorruptTable("trailing bytes".into()));
    }
    Ok((DecadeTable::from_parts(range, tokens, freqs), hex::encode(stored)))
}

/// Writes nonzero cells as `token<TAB>decade_start<TAB>relative_frequency`.
///
/// Frequencies use the shortest decimal that round-trips to the same `f64`.
pub fn write_tsv<W: Write>(table: &DecadeTable, mut sink: W) -> io::Result<()> {
    for (token, row) in table.rows() {
        for (d, f) in table.decades().zip(row) {
            if *f > 0.0 {
                writeln!(sink, "{token}\t{}\t{f:?}", d.start_year())?;
            }
        }
    }
    sink.flush()
}
