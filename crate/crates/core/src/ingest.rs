//! Streaming readers for Google Books Ngram v2 1-gram shards and total-counts files.
//!
//! Shards are `token<TAB>year<TAB>match_count<TAB>volume_count` lines, optionally
//! gzip-compressed. The totals file is a whitespace-separated list of
//! `year,match_count,page_count,volume_count` entries.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use flate2::bufread::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default accepted year bounds for shard records.
pub const DEFAULT_YEAR_BOUNDS: (i32, i32) = (1500, 2100);

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("malformed totals entry {entry:?}: {reason}")]
    MalformedEntry { entry: String, reason: String },
    #[error("duplicate year {0} in totals")]
    DuplicateYear(i32),
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("gzip decompression failed: {0}")]
    Decompress(io::Error),
}

/// One n-gram/year observation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct YearRecord {
    pub token: String,
    pub year: i32,
    pub match_count: u64,
    pub volume_count: u64,
}

impl YearRecord {
    /// Renders the record as a shard line, without the trailing newline.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.token, self.year, self.match_count, self.volume_count
        )
    }
}

impl fmt::Display for YearRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

/// Parses one shard line (no trailing newline).
pub fn parse_line(line: &str) -> Result<YearRecord, IngestError> {
    let malformed = |why: &str| IngestError::MalformedLine(format!("{why}: {line:?}"));

    let mut fields = line.split('\t');
    let (Some(token), Some(year), Some(matches), Some(volumes), None) = (
        fields.next(),
        fields.next(),
        fields.next(),
        fields.next(),
        fields.next(),
    ) else {
        return Err(malformed("expected 4 tab-separated fields"));
    };
    if token.is_empty() {
        return Err(malformed("empty token"));
    }
    if token.contains('\n') || token.contains('\r') {
        return Err(malformed("token contains a line break"));
    }
    let year: i32 = parse_decimal(year).ok_or_else(|| malformed("bad year"))?;
    let match_count: u64 = parse_decimal(matches).ok_or_else(|| malformed("bad match_count"))?;
    let volume_count: u64 = parse_decimal(volumes).ok_or_else(|| malformed("bad volume_count"))?;
    if volume_count > match_count {
        return Err(malformed("volume_count exceeds match_count"));
    }
    Ok(YearRecord {
        token: token.to_owned(),
        year,
        match_count,
        volume_count,
    })
}

/// Parses a raw line; invalid UTF-8 makes the line malformed.
pub fn parse_line_bytes(line: &[u8]) -> Result<YearRecord, IngestError> {
    match std::str::from_utf8(line) {
        Ok(s) => parse_line(s),
        Err(_) => Err(IngestError::MalformedLine(format!(
            "invalid UTF-8: {}",
            String::from_utf8_lossy(line)
        ))),
    }
}

// `str::parse` accepts a leading '+', which the shard format never uses.
fn parse_decimal<T: std::str::FromStr>(s: &str) -> Option<T> {
    if s.is_empty() || !s.bytes().enumerate().all(|(i, b)| b.is_ascii_digit() || (i == 0 && b == b'-')) {
        return None;
    }
    s.parse().ok()
}

/// Four-digit tokens naming a year, e.g. "1984".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearPattern {
    pub min: u16,
    pub max: u16,
}

impl Default for YearPattern {
    fn default() -> Self {
        YearPattern { min: 1500, max: 2099 }
    }
}

impl YearPattern {
    pub fn matches(&self, token: &str) -> bool {
        let b = token.as_bytes();
        if b.len() != 4 || !b.iter().all(u8::is_ascii_digit) {
            return false;
        }
        let value = b.iter().fold(0u16, |acc, d| acc * 10 + u16::from(d - b'0'));
        (self.min..=self.max).contains(&value)
    }
}

/// True for part-of-speech annotated grams (`run_VERB`) and bare tag
/// placeholders (`_NOUN_`, `_START_`).
pub fn is_pos_tagged(token: &str) -> bool {
    let b = token.as_bytes();
    // bare placeholder: _TAG_
    if b.len() >= 3 && b[0] == b'_' && b[b.len() - 1] == b'_' {
        let inner = &b[1..b.len() - 1];
        if inner.iter().all(|&c| c.is_ascii_uppercase() || c == b'_') && inner.iter().any(u8::is_ascii_uppercase) {
            return true;
        }
    }
    // suffix: ..._TAG
    let tail = b.iter().rev().take_while(|c| c.is_ascii_uppercase()).count();
    tail > 0 && tail < b.len() && b[b.len() - tail - 1] == b'_'
}

/// Token-level inclusion rules applied during ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFilter {
    pub exclude_pos_tagged: bool,
    /// Drop year-like tokens at ingest time. Off by default: year exclusion
    /// normally happens per threshold in flux reports.
    pub exclude_year_tokens: bool,
    pub year_token_pattern: YearPattern,
    pub custom_exclusions: Vec<String>,
}

impl Default for TokenFilter {
    fn default() -> Self {
        TokenFilter {
            exclude_pos_tagged: true,
            exclude_year_tokens: false,
            year_token_pattern: YearPattern::default(),
            custom_exclusions: Vec::new(),
        }
    }
}

impl TokenFilter {
    /// Filter that keeps every token.
    pub fn keep_all() -> Self {
        TokenFilter {
            exclude_pos_tagged: false,
            ..TokenFilter::default()
        }
    }

    pub fn compile(&self) -> CompiledFilter {
        CompiledFilter {
            exclude_pos_tagged: self.exclude_pos_tagged,
            year_tokens: self.exclude_year_tokens.then_some(self.year_token_pattern),
            exclusions: self.custom_exclusions.iter().cloned().collect(),
        }
    }

    pub fn accepts(&self, token: &str) -> bool {
        self.compile().accepts(token)
    }
}

/// A [`TokenFilter`] with its exclusion list hashed for per-line checks.
#[derive(Debug, Clone)]
pub struct CompiledFilter {
    exclude_pos_tagged: bool,
    year_tokens: Option<YearPattern>,
    exclusions: HashSet<String>,
}

impl CompiledFilter {
    pub fn accepts(&self, token: &str) -> bool {
        if self.exclude_pos_tagged && is_pos_tagged(token) {
            return false;
        }
        if self.year_tokens.is_some_and(|p| p.matches(token)) {
            return false;
        }
        !self.exclusions.contains(token)
    }
}

/// Line accounting for one or more streamed shards.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines_read: u64,
    pub kept: u64,
    pub filtered: u64,
    pub malformed: u64,
    /// 1-based line number of the first malformed line, if any.
    pub first_malformed_line: Option<u64>,
}

impl IngestStats {
    pub fn merge(&mut self, other: &IngestStats) {
        self.lines_read += other.lines_read;
        self.kept += other.kept;
        self.filtered += other.filtered;
        self.malformed += other.malformed;
        self.first_malformed_line = self.first_malformed_line.or(other.first_malformed_line);
    }

    pub fn is_conserved(&self) -> bool {
        self.lines_read == self.kept + self.filtered + self.malformed
    }
}

/// Iterator over the accepted records of one shard.
///
/// Malformed lines are counted and skipped; only I/O failures surface as
/// errors, after which the stream ends.
pub struct RecordStream<R> {
    reader: R,
    filter: CompiledFilter,
    year_range: (i32, i32),
    stats: IngestStats,
    buf: Vec<u8>,
    failed: bool,
}

impl<R: BufRead> RecordStream<R> {
    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn into_stats(self) -> IngestStats {
        self.stats
    }

    fn read_line(&mut self) -> io::Result<bool> {
        self.buf.clear();
        let n = self.reader.read_until(b'\n', &mut self.buf)?;
        if n == 0 {
            return Ok(false);
        }
        if self.buf.last() == Some(&b'\n') {
            self.buf.pop();
            if self.buf.last() == Some(&b'\r') {
                self.buf.pop();
            }
        }
        Ok(true)
    }
}

impl<R: BufRead> Iterator for RecordStream<R> {
    type Item = Result<YearRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            match self.read_line() {
                Ok(false) => return None,
                Ok(true) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(classify_io(e)));
                }
            }
            self.stats.lines_read += 1;
            let record = match parse_line_bytes(&self.buf) {
                Ok(r) => r,
                Err(_) => {
                    self.stats.malformed += 1;
                    self.stats.first_malformed_line.get_or_insert(self.stats.lines_read);
                    continue;
                }
            };
            let (lo, hi) = self.year_range;
            if record.year < lo || record.year > hi || !self.filter.accepts(&record.token) {
                self.stats.filtered += 1;
                continue;
            }
            self.stats.kept += 1;
            return Some(Ok(record));
        }
    }
}

fn classify_io(e: io::Error) -> IngestError {
    // flate2 reports corrupt gzip data as InvalidInput/InvalidData
    match e.kind() {
        io::ErrorKind::InvalidInput | io::ErrorKind::InvalidData => IngestError::Decompress(e),
        _ => IngestError::Io(e),
    }
}

/// Streams records from an already-decompressed shard.
pub fn stream_records<R: BufRead>(
    reader: R,
    filter: &TokenFilter,
    year_range: (i32, i32),
) -> RecordStream<R> {
    RecordStream {
        reader,
        filter: filter.compile(),
        year_range,
        stats: IngestStats::default(),
        buf: Vec::with_capacity(128),
        failed: false,
    }
}

/// Wraps a byte source, transparently decompressing it when it starts with
/// the gzip magic bytes.
pub fn open_source<'a, R: Read + 'a>(source: R) -> io::Result<Box<dyn BufRead + 'a>> {
    let mut reader = BufReader::with_capacity(1 << 16, source);
    let head = reader.fill_buf()?;
    if head.starts_with(&GZIP_MAGIC) {
        Ok(Box::new(BufReader::with_capacity(1 << 16, MultiGzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

pub fn open_path(path: &Path) -> io::Result<Box<dyn BufRead>> {
    open_source(File::open(path)?)
}

/// Per-year corpus size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearTotal {
    pub match_count: u64,
    pub volume_count: u64,
}

/// Per-year total counts: the relative-frequency denominators.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusTotals {
    years: BTreeMap<i32, YearTotal>,
}

impl CorpusTotals {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, year: i32, total: YearTotal) -> Result<(), IngestError> {
        if self.years.insert(year, total).is_some() {
            return Err(IngestError::DuplicateYear(year));
        }
        Ok(())
    }

    pub fn get(&self, year: i32) -> Option<&YearTotal> {
        self.years.get(&year)
    }

    /// A year is empty when it has no entry or a zero match total.
    pub fn is_empty_year(&self, year: i32) -> bool {
        self.years.get(&year).is_none_or(|t| t.match_count == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, &YearTotal)> + '_ {
        self.years.iter().map(|(y, t)| (*y, t))
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    /// Writes the whitespace-separated totals format (page counts as 0).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (year, t) in &self.years {
            out.push_str(&format!("{year},{},0,{}\n", t.match_count, t.volume_count));
        }
        out
    }
}

/// Parses a total-counts file. The page count column is read and discarded.
pub fn parse_totals<R: Read>(mut source: R) -> Result<CorpusTotals, IngestError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut totals = CorpusTotals::new();
    for entry in text.split_whitespace() {
        let bad = |reason: &str| IngestError::MalformedEntry {
            entry: entry.to_owned(),
            reason: reason.to_owned(),
        };
        let fields: Vec<&str> = entry.split(',').collect();
        if fields.len() != 4 {
            return Err(bad("expected year,match_count,page_count,volume_count"));
        }
        let year: i32 = parse_decimal(fields[0]).ok_or_else(|| bad("bad year"))?;
        let match_count: u64 = parse_decimal(fields[1]).ok_or_else(|| bad("bad match_count"))?;
        let _pages: u64 = parse_decimal(fields[2]).ok_or_else(|| bad("bad page_count"))?;
        let volume_count: u64 = parse_decimal(fields[3]).ok_or_else(|| bad("bad volume_count"))?;
        totals.insert(year, YearTotal { match_count, volume_count })?;
    }
    Ok(totals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Cursor, Write};

    fn rec(token: &str, year: i32, m: u64, v: u64) -> YearRecord {
        YearRecord { token: token.into(), year, match_count: m, volume_count: v }
    }

    #[test]
    fn parses_four_field_line() {
        assert_eq!(parse_line("flux\t1890\t120\t37").unwrap(), rec("flux", 1890, 120, 37));
        assert_eq!(parse_line(",\t1995\t905000\t4200").unwrap(), rec(",", 1995, 905000, 4200));
    }

    #[test]
    fn rejects_bad_lines() {
        for line in [
            "flux\t1890\t120",
            "flux\t1890\t120\t37\textra",
            "\t1890\t120\t37",
            "flux\t18x0\t120\t37",
            "flux\t1890\t+120\t37",
            "flux\t1890\t120\t-1",
            "flux\t1890\t10\t37",
            "",
        ] {
            assert!(matches!(parse_line(line), Err(IngestError::MalformedLine(_))), "{line:?}");
        }
        assert!(parse_line_bytes(b"fl\xffux\t1890\t1\t1").is_err());
    }

    #[test]
    fn pos_tags() {
        assert!(is_pos_tagged("run_VERB"));
        assert!(is_pos_tagged("_NOUN_"));
        assert!(is_pos_tagged("_START_"));
        assert!(is_pos_tagged("the_DET"));
        assert!(!is_pos_tagged("run"));
        assert!(!is_pos_tagged("_"));
        assert!(!is_pos_tagged("NASA"));
        assert!(!is_pos_tagged("snake_case"));
        assert!(is_pos_tagged("_VERB"));
    }

    #[test]
    fn year_pattern_bounds() {
        let p = YearPattern::default();
        assert!(p.matches("1500"));
        assert!(p.matches("2099"));
        assert!(!p.matches("1499"));
        assert!(!p.matches("2100"));
        assert!(!p.matches("199"));
        assert!(!p.matches("1990s"));
    }

    #[test]
    fn stream_filters_out_of_range_years() {
        let data = "a\t1819\t1\t1\nb\t1820\t2\t1\nc\t1999\t3\t1\n";
        let mut s = stream_records(Cursor::new(data), &TokenFilter::default(), (1820, 1999));
        let got: Vec<_> = s.by_ref().map(Result::unwrap).collect();
        assert_eq!(got.len(), 2);
        assert_eq!(
            *s.stats(),
            IngestStats { lines_read: 3, kept: 2, filtered: 1, malformed: 0, first_malformed_line: None }
        );
    }

    #[test]
    fn stream_drops_pos_tagged_by_default() {
        let data = "run_VERB\t1900\t5\t5\nrun\t1900\t5\t5\n";
        let filter = TokenFilter::default();
        let got: Vec<_> = stream_records(Cursor::new(data), &filter, (1500, 2100))
            .map(Result::unwrap)
            .collect();
        assert_eq!(got, vec![rec("run", 1900, 5, 5)]);

        let keep = TokenFilter::keep_all();
        assert_eq!(stream_records(Cursor::new(data), &keep, (1500, 2100)).count(), 2);
    }

    #[test]
    fn custom_exclusions_and_year_tokens() {
        let filter = TokenFilter {
            exclude_year_tokens: true,
            custom_exclusions: vec!["foo".into()],
            ..TokenFilter::default()
        };
        assert!(!filter.accepts("foo"));
        assert!(!filter.accepts("1984"));
        assert!(filter.accepts("bar"));
    }

    #[test]
    fn empty_stream() {
        let mut s = stream_records(Cursor::new(""), &TokenFilter::default(), (1500, 2100));
        assert!(s.next().is_none());
        assert_eq!(*s.stats(), IngestStats::default());
    }

    #[test]
    fn malformed_lines_are_counted() {
        let data = "a\t1900\t1\t1\ngarbage\nb\t1900\t1\t1\r\n\n";
        let mut s = stream_records(Cursor::new(data), &TokenFilter::default(), (1500, 2100));
        assert_eq!(s.by_ref().count(), 2);
        let st = s.stats();
        assert_eq!((st.lines_read, st.kept, st.malformed), (4, 2, 2));
        assert_eq!(st.first_malformed_line, Some(2));
        assert!(st.is_conserved());
    }

    #[test]
    fn gzip_is_detected() {
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
        enc.write_all(b"a\t1900\t1\t1\nb\t1901\t2\t2\n").unwrap();
        let gz = enc.finish().unwrap();
        let reader = open_source(Cursor::new(gz)).unwrap();
        let filter = TokenFilter::default();
        let got: Vec<_> = stream_records(reader, &filter, (1500, 2100)).map(Result::unwrap).collect();
        assert_eq!(got, vec![rec("a", 1900, 1, 1), rec("b", 1901, 2, 2)]);
    }

    #[test]
    fn corrupt_gzip_is_a_decompress_failure() {
        let mut bytes = vec![0x1f, 0x8b, 8, 0, 0, 0, 0, 0, 0, 0xff];
        bytes.extend_from_slice(&[0xde, 0xad, 0xbe, 0xef, 0x00, 0x11]);
        let reader = open_source(Cursor::new(bytes)).unwrap();
        let filter = TokenFilter::default();
        let results: Vec<_> = stream_records(reader, &filter, (1500, 2100)).collect();
        assert_eq!(results.len(), 1);
        assert!(matches!(results[0], Err(IngestError::Decompress(_)) | Err(IngestError::Io(_))));
    }

    #[test]
    fn totals_parse() {
        let t = parse_totals(Cursor::new("1890,1000,50,10 1891,2000,80,15")).unwrap();
        assert_eq!(t.get(1890), Some(&YearTotal { match_count: 1000, volume_count: 10 }));
        assert_eq!(t.get(1891), Some(&YearTotal { match_count: 2000, volume_count: 15 }));
        assert_eq!(t.len(), 2);

        assert!(matches!(
            parse_totals(Cursor::new("1890,1000,50,10 1890,9,9,9")),
            Err(IngestError::DuplicateYear(1890))
        ));
        assert!(parse_totals(Cursor::new("")).unwrap().is_empty());
        assert!(matches!(
            parse_totals(Cursor::new("1890,1000,50")),
            Err(IngestError::MalformedEntry { .. })
        ));
        // real totals files lead with a tab and separate entries by tabs
        let t = parse_totals(Cursor::new(" \t1505,32059,231,1\t1507,49586,477,1\t")).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn totals_flag_empty_years() {
        let t = parse_totals(Cursor::new("1900,0,0,0 1901,5,1,1")).unwrap();
        assert!(t.is_empty_year(1900));
        assert!(!t.is_empty_year(1901));
        assert!(t.is_empty_year(1902));
    }
}
