//! Deterministic synthetic corpora with known ground truth.
//!
//! A script combines a stationary Zipf background with scripted tokens whose
//! relative frequency follows a fixed trajectory between a birth and a death
//! year. Every year has the same declared corpus total `T`; a scripted token
//! with frequency `f` gets `round(f * T)` matches, and background token `k`
//! gets `round(T * w_k * (1 - S))`, where `w_k = k^-s / H(N, s)` and `S` is
//! the scripted mass alive that year. Relative frequencies are therefore
//! known analytically up to one count quantum `1 / T`.
//!
//! Script files are line-oriented `key = value` text; `#` starts a comment:
//!
//! ```text
//! zipf.exponent   = 1.0
//! zipf.vocabulary = 100000
//! zipf.year_total = 1000000000
//! # token = <name> <birth year> <death year> <peak frequency> <constant|ramp|rise-fall>
//! token = jeans 1950 1999 2e-5 ramp
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::io::{self, Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Decade;
use crate::divergence::Distribution;
use crate::flux::{crossing, CrossingDirection};
use crate::ingest::{CorpusTotals, YearRecord, YearTotal};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("script line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// Peak frequency every year alive.
    Constant,
    /// Linear rise, reaching the peak in the death year.
    Ramp,
    /// Symmetric triangle peaking midway between birth and death.
    RiseFall,
}

impl FromStr for Shape {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant" => Ok(Shape::Constant),
            "ramp" => Ok(Shape::Ramp),
            "rise-fall" => Ok(Shape::RiseFall),
            _ => Err(format!("unknown shape {s:?}")),
        }
    }
}

impl Shape {
    fn name(self) -> &'static str {
        match self {
            Shape::Constant => "constant",
            Shape::Ramp => "ramp",
            Shape::RiseFall => "rise-fall",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedToken {
    pub name: String,
    pub birth: i32,
    pub death: i32,
    pub peak: f64,
    pub shape: Shape,
}

impl ScriptedToken {
    /// Analytic relative frequency in `year`.
    pub fn frequency(&self, year: i32) -> f64 {
        if year < self.birth || year > self.death {
            return 0.0;
        }
        let span = f64::from(self.death - self.birth);
        let at = f64::from(year - self.birth);
        match self.shape {
            Shape::Constant => self.peak,
            Shape::Ramp => self.peak * (at + 1.0) / (span + 1.0),
            Shape::RiseFall => {
                let half = span / 2.0 + 1.0;
                self.peak * (1.0 - (at - span / 2.0).abs() / half)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipfBackground {
    pub exponent: f64,
    pub vocabulary: usize,
    /// Declared corpus size per year, `T`.
    pub year_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScript {
    pub background: ZipfBackground,
    pub tokens: Vec<ScriptedToken>,
}

/// Name of background token `k` (1-based rank).
pub fn background_name(rank: usize) -> String {
    format!("zipf{rank}")
}

impl TrajectoryScript {
    pub fn background_only(exponent: f64, vocabulary: usize, year_total: u64) -> Self {
        TrajectoryScript {
            background: ZipfBackground { exponent, vocabulary, year_total },
            tokens: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScript(m));
        let bg = &self.background;
        if !(bg.exponent > 0.0 && bg.exponent.is_finite()) {
            return bad(format!("Zipf exponent must be positive, got {}", bg.exponent));
        }
        if bg.vocabulary == 0 {
            return bad("Zipf vocabulary must be at least 1".into());
        }
        if bg.year_total == 0 || bg.year_total > (1 << 53) {
            return bad(format!("year total {} outside 1..=2^53", bg.year_total));
        }
        let mut names = HashSet::new();
        for t in &self.tokens {
            if t.name.is_empty() || t.name.contains(['\t', '\n', '\r', ' ']) {
                return bad(format!("token name {:?} is empty or contains whitespace", t.name));
            }
            if let Some(rank) = t.name.strip_prefix("zipf").and_then(|r| r.parse::<usize>().ok()) {
                if (1..=bg.vocabulary).contains(&rank) {
                    return bad(format!("token {:?} collides with a background token", t.name));
                }
            }
            if !names.insert(t.name.as_str()) {
                return bad(format!("duplicate token {:?}", t.name));
            }
            if t.birth > t.death {
                return bad(format!("token {:?} dies before it is born", t.name));
            }
            if !(t.peak > 0.0 && t.peak < 1.0) {
                return bad(format!("token {:?} peak {} outside (0, 1)", t.name, t.peak));
            }
        }
        let (lo, hi) = self.scripted_years();
        if let Some(y) = (lo..=hi).find(|&y| self.scripted_mass(y) >= 1.0) {
            return bad(format!("scripted mass reaches 1 in {y}"));
        }
        Ok(())
    }

    fn scripted_years(&self) -> (i32, i32) {
        let lo = self.tokens.iter().map(|t| t.birth).min().unwrap_or(0);
        let hi = self.tokens.iter().map(|t| t.death).max().unwrap_or(-1);
        (lo, hi)
    }

    /// Total analytic frequency of scripted tokens in `year`.
    pub fn scripted_mass(&self, year: i32) -> f64 {
        self.tokens.iter().map(|t| t.frequency(year)).sum()
    }

    /// Normalized Zipf weights `w_k`, index 0 holding rank 1.
    pub fn zipf_weights(&self) -> Vec<f64> {
        let s = self.background.exponent;
        let raw: Vec<f64> = (1..=self.background.vocabulary).map(|k| (k as f64).powf(-s)).collect();
        // smallest terms first
        let h: f64 = raw.iter().rev().sum();
        raw.into_iter().map(|x| x / h).collect()
    }

    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut exponent = None;
        let mut vocabulary = None;
        let mut year_total = None;
        let mut tokens = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| SynthError::Parse { line: i + 1, message: m };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err("expected key = value".into()))?;
            match key {
                "zipf.exponent" => exponent = Some(value.parse::<f64>().map_err(|e| err(e.to_string()))?),
                "zipf.vocabulary" => vocabulary = Some(value.parse::<usize>().map_err(|e| err(e.to_string()))?),
                "zipf.year_total" => year_total = Some(value.parse::<u64>().map_err(|e| err(e.to_string()))?),
                "token" => {
                    let f: Vec<&str> = value.split_whitespace().collect();
                    let [name, birth, death, peak, shape] = f[..] else {
                        return Err(err("token needs: name birth death peak shape".into()));
                    };
                    tokens.push(ScriptedToken {
                        name: name.to_owned(),
                        birth: birth.parse().map_err(|_| err(format!("bad birth year {birth:?}")))?,
                        death: death.parse().map_err(|_| err(format!("bad death year {death:?}")))?,
                        peak: peak.parse().map_err(|_| err(format!("bad peak {peak:?}")))?,
                        shape: shape.parse().map_err(err)?,
                    });
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        let missing = |k: &str| SynthError::InvalidScript(format!("missing {k}"));
        let script = TrajectoryScript {
            background: ZipfBackground {
                exponent: exponent.ok_or_else(|| missing("zipf.exponent"))?,
                vocabulary: vocabulary.ok_or_else(|| missing("zipf.vocabulary"))?,
                year_total: year_total.ok_or_else(|| missing("zipf.year_total"))?,
            },
            tokens,
        };
        script.validate()?;
        Ok(script)
    }

    pub fn to_text(&self) -> String {
        let bg = &self.background;
        let mut out = format!(
            "zipf.exponent = {:?}\nzipf.vocabulary = {}\nzipf.year_total = {}\n",
            bg.exponent, bg.vocabulary, bg.year_total
        );
        for t in &self.tokens {
            let _ = writeln!(out, "token = {} {} {} {:?} {}", t.name, t.birth, t.death, t.peak, t.shape.name());
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum TokenRef {
    Background(usize),
    Scripted(usize),
}

/// A generated corpus: records are produced lazily, token by token in a
/// seed-determined order, each token's years ascending.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    script: TrajectoryScript,
    years: (i32, i32),
    weights: Vec<f64>,
    background_scale: Vec<f64>,
    order: Vec<TokenRef>,
}

/// Builds the corpus for `years` (inclusive). Identical inputs give
/// identical output.
pub fn generate(script: &TrajectoryScript, years: (i32, i32), seed: u64) -> Result<SyntheticCorpus, SynthError> {
    script.validate()?;
    if years.0 > years.1 {
        return Err(SynthError::InvalidScript(format!("empty year range {}-{}", years.0, years.1)));
    }
    let mut order: Vec<TokenRef> = (0..script.background.vocabulary)
        .map(TokenRef::Background)
        .chain((0..script.tokens.len()).map(TokenRef::Scripted))
        .collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let background_scale = (years.0..=years.1).map(|y| 1.0 - script.scripted_mass(y)).collect();
    Ok(SyntheticCorpus {
        script: script.clone(),
        years,
        weights: script.zipf_weights(),
        background_scale,
        order,
    })
}

impl SyntheticCorpus {
    pub fn totals(&self) -> CorpusTotals {
        let mut totals = CorpusTotals::new();
        let t = self.script.background.year_total;
        for y in self.years.0..=self.years.1 {
            totals
                .insert(y, YearTotal { match_count: t, volume_count: (t / 1000).max(1) })
                .expect("years are distinct");
        }
        totals
    }

    fn token_name(&self, r: TokenRef) -> String {
        match r {
            TokenRef::Background(k) => background_name(k + 1),
            TokenRef::Scripted(j) => self.script.tokens[j].name.clone(),
        }
    }

    fn count(&self, r: TokenRef, year: i32) -> u64 {
        let t = self.script.background.year_total as f64;
        let f = match r {
            TokenRef::Background(k) => self.weights[k] * self.background_scale[(year - self.years.0) as usize],
            TokenRef::Scripted(j) => self.script.tokens[j].frequency(year),
        };
        (t * f).round() as u64
    }

    pub fn records(&self) -> impl Iterator<Item = YearRecord> + '_ {
        self.order.iter().flat_map(move |&r| {
            let token = self.token_name(r);
            (self.years.0..=self.years.1).filter_map(move |year| {
                let match_count = self.count(r, year);
                (match_count > 0).then(|| YearRecord {
                    token: token.clone(),
                    year,
                    match_count,
                    volume_count: match_count.div_ceil(4),
                })
            })
        })
    }

    /// Streams the shard as TSV bytes.
    pub fn shard_reader(&self) -> ShardReader<impl Iterator<Item = YearRecord> + '_> {
        ShardReader { records: self.records(), buf: Vec::new(), pos: 0 }
    }

    pub fn write_shard<W: Write>(&self, mut sink: W) -> io::Result<()> {
        io::copy(&mut self.shard_reader(), &mut sink)?;
        sink.flush()
    }
}

/// Renders records as shard lines on demand.
pub struct ShardReader<I> {
    records: I,
    buf: Vec<u8>,
    pos: usize,
}

impl<I: Iterator<Item = YearRecord>> Read for ShardReader<I> {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if self.pos == self.buf.len() {
            self.buf.clear();
            self.pos = 0;
            for r in self.records.by_ref() {
                writeln!(self.buf, "{}\t{}\t{}\t{}", r.token, r.year, r.match_count, r.volume_count)?;
                if self.buf.len() >= 1 << 16 {
                    break;
                }
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

/// Expected crossings computed from the script's trajectories alone.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleFlux {
    pub upward: BTreeSet<String>,
    pub downward: BTreeSet<String>,
    /// Tokens whose decade value lies within one count quantum of the
    /// threshold in either decade; their pipeline outcome is not asserted.
    pub guarded: BTreeSet<String>,
}

/// Analytic decade-mean frequencies for every token of the script.
pub fn oracle_decade_frequencies(script: &TrajectoryScript, decade: Decade) -> BTreeMap<String, f64> {
    let years: Vec<i32> = decade.years().collect();
    let weights = script.zipf_weights();
    let scale: f64 = years.iter().map(|&y| 1.0 - script.scripted_mass(y)).sum::<f64>() / 10.0;
    let mut out: BTreeMap<String, f64> = weights
        .iter()
        .enumerate()
        .map(|(k, w)| (background_name(k + 1), w * scale))
        .collect();
    for t in &script.tokens {
        let f = years.iter().map(|&y| t.frequency(y)).sum::<f64>() / 10.0;
        out.insert(t.name.clone(), f);
    }
    out
}

pub fn oracle_flux(script: &TrajectoryScript, threshold: f64, pair: (Decade, Decade)) -> OracleFlux {
    let quantum = 1.0 / script.background.year_total as f64;
    let first = oracle_decade_frequencies(script, pair.0);
    let second = oracle_decade_frequencies(script, pair.1);
    let mut out = OracleFlux::default();
    for (token, f1) in first {
        let f2 = second[&token];
        if (f1 - threshold).abs() <= quantum || (f2 - threshold).abs() <= quantum {
            out.guarded.insert(token);
            continue;
        }
        match crossing(f1, f2, threshold) {
            Some(CrossingDirection::Upward) => {
                out.upward.insert(token);
            }
            Some(CrossingDirection::Downward) => {
                out.downward.insert(token);
            }
            None => {}
        }
    }
    out
}

/// Double-double accumulator (Knuth two-sum), for oracle sums.
#[derive(Debug, Clone, Copy, Default)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    fn add(self, x: f64) -> Self {
        let s = self.hi + x;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x - bp);
        let lo = self.lo + err;
        let hi = s + lo;
        DoubleDouble { hi, lo: lo - (hi - s) }
    }

    fn add_dd(self, o: DoubleDouble) -> Self {
        self.add(o.hi).add(o.lo)
    }

    fn neg(self) -> Self {
        DoubleDouble { hi: -self.hi, lo: -self.lo }
    }

    fn half(self) -> Self {
        DoubleDouble { hi: self.hi / 2.0, lo: self.lo / 2.0 }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

fn entropy_dd(probs: impl Iterator<Item = f64>) -> DoubleDouble {
    probs
        .filter(|p| *p > 0.0)
        .fold(DoubleDouble::default(), |acc, p| acc.add(-p * p.log2()))
}

/// `H(M) - ½[H(P) + H(Q)]` evaluated directly from three entropies with
/// double-double accumulation. Test oracle for the decomposed divergence.
pub fn oracle_jsd(p: &Distribution, q: &Distribution) -> f64 {
    let mut union: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (t, x) in p.iter() {
        union.entry(t).or_default().0 = x;
    }
    for (t, x) in q.iter() {
        union.entry(t).or_default().1 = x;
    }
    let h_m = entropy_dd(union.values().map(|(a, b)| 0.5 * a + 0.5 * b));
    let h_p = entropy_dd(p.iter().map(|e| e.1));
    let h_q = entropy_dd(q.iter().map(|e| e.1));
    h_m.add_dd(h_p.add_dd(h_q).half().neg()).value()
}
