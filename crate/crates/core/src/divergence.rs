//! Shannon entropy, Jensen-Shannon divergence and its per-token decomposition.
//!
//! All logarithms are base 2, so divergences are in bits and lie in `[0, 1]`.
//!
//! The divergence between `P` and `Q` splits into one non-negative term per
//! token, `m * C(r)`, where `m = (p + q) / 2` is the token's mixture
//! probability, `r = p / m`, and
//!
//! ```text
//! C(r) = ½ [ r log2 r + (2 - r) log2 (2 - r) ]
//! ```
//!
//! is the share of `m` the token contributes. `C` is convex, symmetric about
//! `r = 1`, zero there, and reaches 1 when the token is absent from one side.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Decade, DecadeTable};
use crate::numeric::{compensated_sum, xlog2x, CompensatedSum};

#[derive(Debug, Error)]
pub enum DivergenceError {
    #[error("both probabilities are zero")]
    BothZero,
    #[error("decade {0} has no frequency mass")]
    EmptyDecade(Decade),
    #[error("gap of {gap} decades needs at least {} decades, table has {available}", gap + 1)]
    InsufficientDecades { gap: usize, available: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// A probability distribution over tokens, stored sorted by token with
/// strictly positive probabilities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Distribution {
    entries: Vec<(String, f64)>,
}

impl Distribution {
    /// Normalizes non-negative weights. Zero weights are dropped; duplicate
    /// tokens are an error.
    pub fn from_weights<I, S>(weights: I) -> Result<Self, DivergenceError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut entries: Vec<(String, f64)> = Vec::new();
        for (t, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(DivergenceError::InvalidDistribution(format!("weight {w} is not a finite non-negative number")));
            }
            if w > 0.0 {
                entries.push((t.into(), w));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(DivergenceError::InvalidDistribution(format!("duplicate token {:?}", w[0].0)));
        }
        let total = compensated_sum(entries.iter().map(|e| e.1));
        if total <= 0.0 {
            return Err(DivergenceError::InvalidDistribution("no positive weight".into()));
        }
        for e in &mut entries {
            e.1 /= total;
        }
        Ok(Distribution { entries })
    }

    pub(crate) fn from_sorted_unchecked(entries: Vec<(String, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|e| e.1 > 0.0));
        Distribution { entries }
    }

    pub fn get(&self, token: &str) -> f64 {
        self.entries
            .binary_search_by(|e| e.0.as_str().cmp(token))
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.entries.iter().map(|(t, p)| (t.as_str(), *p))
    }

    /// Number of tokens with nonzero probability.
    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.entries.iter().map(|e| e.1))
    }
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn shannon_entropy(dist: &Distribution) -> f64 {
    let h = -compensated_sum(dist.iter().map(|(_, p)| xlog2x(p)));
    h.max(0.0)
}

/// `C(r)`, the fraction of a token's mixture probability that it contributes.
pub fn divergence_share(r: f64) -> f64 {
    share_from_offset(r - 1.0)
}

/// `C(1 + d)`. Symmetric in `d`; the series branch avoids cancellation when
/// the two probabilities are close.
fn share_from_offset(d: f64) -> f64 {
    let a = d.abs();
    if a < 0.1 {
        share_series(a)
    } else {
        share_closed(a)
    }
}

// ½[(1+a)log(1+a) + (1-a)log(1-a)] = Σ_k a^(2k) / (2k(2k-1))
fn share_series(a: f64) -> f64 {
    let a2 = a * a;
    let mut term = a2;
    let mut sum = 0.0;
    for k in 1..=10 {
        let k = k as f64;
        sum += term / (2.0 * k * (2.0 * k - 1.0));
        term *= a2;
    }
    sum / std::f64::consts::LN_2
}

fn share_closed(a: f64) -> f64 {
    (0.5 * (xlog2x(1.0 + a) + xlog2x(1.0 - a))).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Rising,
    Falling,
    Flat,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Rising => "rising",
            Direction::Falling => "falling",
            Direction::Flat => "flat",
        })
    }
}

/// One token's term of the divergence between two distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub p: f64,
    pub q: f64,
    /// Mixture probability `(p + q) / 2`.
    pub m: f64,
    /// `p / m`, in `[0, 2]`.
    pub r: f64,
    /// Contribution in bits, `m * C(r)`.
    pub value: f64,
    pub direction: Direction,
}

pub fn word_contribution(p: f64, q: f64) -> Result<Contribution, DivergenceError> {
    if !(p >= 0.0 && q >= 0.0) {
        return Err(DivergenceError::InvalidDistribution(format!("negative probability ({p}, {q})")));
    }
    if p == 0.0 && q == 0.0 {
        return Err(DivergenceError::BothZero);
    }
    Ok(contribution_unchecked(p, q))
}

fn contribution_unchecked(p: f64, q: f64) -> Contribution {
    let m = (p + q) / 2.0;
    let r = p / m;
    let value = if p == q {
        0.0
    } else {
        (m * share_from_offset((p - q) / (p + q))).min(m)
    };
    let direction = match q.partial_cmp(&p) {
        Some(Ordering::Greater) => Direction::Rising,
        Some(Ordering::Less) => Direction::Falling,
        _ => Direction::Flat,
    };
    Contribution { p, q, m, r, value, direction }
}

/// Jensen-Shannon divergence in bits, summed token by token over the union
/// of both supports.
pub fn jsd(p: &Distribution, q: &Distribution) -> f64 {
    let mut sum = CompensatedSum::new();
    merge_join(p, q, |_, a, b| sum.add(contribution_unchecked(a, b).value));
    sum.value()
}

/// Visits the union support of two sorted distributions in token order.
pub(crate) fn merge_join<'a>(p: &'a Distribution, q: &'a Distribution, mut visit: impl FnMut(&'a str, f64, f64)) {
    let (mut i, mut j) = (0, 0);
    let (pe, qe) = (&p.entries, &q.entries);
    while i < pe.len() || j < qe.len() {
        let ord = match (pe.get(i), qe.get(j)) {
            (Some(a), Some(b)) => a.0.cmp(&b.0),
            (Some(_), None) => Ordering::Less,
            _ => Ordering::Greater,
        };
        match ord {
            Ordering::Less => {
                visit(&pe[i].0, pe[i].1, 0.0);
                i += 1;
            }
            Ordering::Greater => {
                visit(&qe[j].0, 0.0, qe[j].1);
                j += 1;
            }
            Ordering::Equal => {
                visit(&pe[i].0, pe[i].1, qe[j].1);
                i += 1;
                j += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenContribution {
    pub token: String,
    #[serde(flatten)]
    pub contribution: Contribution,
}

/// Ranked divergence decomposition between two decades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub from: Decade,
    pub to: Decade,
    pub total_jsd: f64,
    /// Share of `total_jsd` from rising tokens; `None` when the decades are
    /// identical and there is no divergence to apportion.
    pub rising_fraction: Option<f64>,
    /// Number of tokens with a nonzero contribution, before truncation.
    pub contributing_tokens: usize,
    /// Nonzero contributions, largest first, ties broken by token.
    pub contributions: Vec<TokenContribution>,
}

impl DivergenceReport {
    /// Rising fraction as text, with `NoDivergence` for identical decades.
    pub fn rising_fraction_label(&self) -> String {
        fraction_label(self.rising_fraction)
    }
}

pub fn fraction_label(f: Option<f64>) -> String {
    match f {
        Some(f) => format!("{f}"),
        None => "NoDivergence".to_owned(),
    }
}

/// Per-token contributions for one decade pair, in table (token) order,
/// including flat tokens. Tokens absent from both decades are skipped.
pub(crate) fn pair_contributions(
    table: &DecadeTable,
    from: Decade,
    to: Decade,
) -> Result<Vec<(&str, Contribution)>, DivergenceError> {
    let (i, j) = (table.decade_index(from)?, table.decade_index(to)?);
    let (mi, mj) = (table.mass(from)?, table.mass(to)?);
    if mi <= 0.0 {
        return Err(DivergenceError::EmptyDecade(from));
    }
    if mj <= 0.0 {
        return Err(DivergenceError::EmptyDecade(to));
    }
    let tokens = table.tokens();
    Ok((0..table.len())
        .into_par_iter()
        .filter_map(|t| {
            let row = table.row(t);
            let (p, q) = (row[i] / mi, row[j] / mj);
            (p > 0.0 || q > 0.0).then(|| (tokens[t].as_str(), contribution_unchecked(p, q)))
        })
        .collect())
}

pub(crate) fn rank_desc(a: &(&str, Contribution), b: &(&str, Contribution)) -> Ordering {
    b.1.value.total_cmp(&a.1.value).then_with(|| a.0.cmp(b.0))
}

/// Decomposes the divergence between two decades of the table.
///
/// Totals and the rising fraction use every token; `top_k` only truncates
/// the ranked list.
pub fn contribution_report(
    table: &DecadeTable,
    from: Decade,
    to: Decade,
    top_k: Option<usize>,
) -> Result<DivergenceReport, DivergenceError> {
    let all = pair_contributions(table, from, to)?;
    let total_jsd = compensated_sum(all.iter().map(|c| c.1.value));
    let rising = compensated_sum(
        all.iter()
            .filter(|c| c.1.direction == Direction::Rising)
            .map(|c| c.1.value),
    );
    let mut ranked: Vec<_> = all.into_iter().filter(|c| c.1.value > 0.0).collect();
    ranked.par_sort_unstable_by(rank_desc);
    let contributing_tokens = ranked.len();
    if let Some(k) = top_k {
        ranked.truncate(k);
    }
    Ok(DivergenceReport {
        from,
        to,
        total_jsd,
        rising_fraction: (total_jsd > 0.0).then(|| rising / total_jsd),
        contributing_tokens,
        contributions: ranked
            .into_iter()
            .map(|(t, c)| TokenContribution { token: t.to_owned(), contribution: c })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisingFractionPoint {
    pub from: Decade,
    pub to: Decade,
    pub total_jsd: f64,
    pub rising_fraction: Option<f64>,
}

/// Rising fraction for every decade pair `gap` decades apart, ordered by the
/// earlier decade.
pub fn rising_fraction_series(table: &DecadeTable, gap: usize) -> Result<Vec<RisingFractionPoint>, DivergenceError> {
    let available = table.num_decades();
    if gap == 0 || available < gap + 1 {
        return Err(DivergenceError::InsufficientDecades { gap, available });
    }
    let decades: Vec<Decade> = table.decades().collect();
    decades
        .windows(gap + 1)
        .map(|w| {
            let (from, to) = (w[0], w[gap]);
            let r = contribution_report(table, from, to, Some(0))?;
            Ok(RisingFractionPoint { from, to, total_jsd: r.total_jsd, rising_fraction: r.rising_fraction })
        })
        .collect()
}
