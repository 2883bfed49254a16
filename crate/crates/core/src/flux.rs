//! Tokens crossing fixed relative-frequency thresholds between decades.
//!
//! A token is *above* a threshold θ in a decade when its raw decade frequency
//! is `>= θ`. It crosses upward between two decades when `f1 < θ <= f2` and
//! downward when `f2 < θ <= f1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Decade, DecadeTable};
use crate::divergence::{pair_contributions, rank_desc, DivergenceError};
use crate::ingest::YearPattern;
use crate::numeric::compensated_sum;

#[derive(Debug, Error)]
pub enum FluxError {
    #[error("threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("rank {rank} is outside 1..={vocabulary} for {decade}")]
    RankOutOfRange { rank: usize, vocabulary: usize, decade: Decade },
    #[error("thresholds must be distinct")]
    DuplicateThreshold,
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Largest threshold at which `Auto` year exclusion switches on.
pub const AUTO_EXCLUDE_YEARS_MAX_THRESHOLD: f64 = 1e-5;

/// When to drop year-like tokens (`"1984"`) from flux reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YearExclusion {
    /// On for thresholds of 10⁻⁵ and below.
    #[default]
    Auto,
    On,
    Off,
}

impl YearExclusion {
    pub fn applies_at(self, threshold: f64) -> bool {
        match self {
            YearExclusion::On => true,
            YearExclusion::Off => false,
            // tolerate 1e-5 arriving as e.g. 0.1 * 1e-4
            YearExclusion::Auto => threshold <= AUTO_EXCLUDE_YEARS_MAX_THRESHOLD * (1.0 + 1e-9),
        }
    }
}

impl std::str::FromStr for YearExclusion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(YearExclusion::Auto),
            "on" => Ok(YearExclusion::On),
            "off" => Ok(YearExclusion::Off),
            _ => Err(format!("expected auto, on or off, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingDirection {
    Upward,
    Downward,
}

/// Crossing direction under the boundary rule, if any.
pub fn crossing(f1: f64, f2: f64, threshold: f64) -> Option<CrossingDirection> {
    if f1 < threshold && threshold <= f2 {
        Some(CrossingDirection::Upward)
    } else if f2 < threshold && threshold <= f1 {
        Some(CrossingDirection::Downward)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCrossing {
    pub token: String,
    pub f1: f64,
    pub f2: f64,
    pub threshold: f64,
    pub direction: CrossingDirection,
    /// The token's divergence term between the two normalized decades, in bits.
    pub jsd_contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    pub from: Decade,
    pub to: Decade,
    pub threshold: f64,
    pub years_excluded: bool,
    pub upward: Vec<ThresholdCrossing>,
    pub downward: Vec<ThresholdCrossing>,
    pub upward_count: usize,
    pub downward_count: usize,
    pub pair_jsd: f64,
    /// Share of `pair_jsd` carried by all reported crossings, in percent.
    pub percent_of_pair_jsd: f64,
}

fn check_threshold(threshold: f64) -> Result<(), FluxError> {
    if threshold.is_finite() && threshold > 0.0 {
        Ok(())
    } else {
        Err(FluxError::InvalidThreshold(threshold))
    }
}

/// Lists every token crossing `threshold` between `from` and `to`, each list
/// sorted by divergence contribution (largest first, ties by token).
pub fn threshold_flux(
    table: &DecadeTable,
    from: Decade,
    to: Decade,
    threshold: f64,
    exclude_years: bool,
) -> Result<FluxReport, FluxError> {
    check_threshold(threshold)?;
    let years = YearPattern::default();
    let (i, j) = (table.decade_index(from)?, table.decade_index(to)?);
    let contributions = pair_contributions(table, from, to)?;
    let pair_jsd = compensated_sum(contributions.iter().map(|c| c.1.value));

    let mut upward = Vec::new();
    let mut downward = Vec::new();
    for (token, c) in contributions {
        if exclude_years && years.matches(token) {
            continue;
        }
        // the contribution carries normalized probabilities; crossings use raw frequencies
        let row = table.row(table.token_index(token).expect("token from table"));
        let (f1, f2) = (row[i], row[j]);
        if let Some(direction) = crossing(f1, f2, threshold) {
            let list = match direction {
                CrossingDirection::Upward => &mut upward,
                CrossingDirection::Downward => &mut downward,
            };
            list.push((token, c, f1, f2, direction));
        }
    }
    let crossing_jsd = compensated_sum(upward.iter().chain(&downward).map(|x| x.1.value));
    let finish = |mut v: Vec<(&str, crate::divergence::Contribution, f64, f64, CrossingDirection)>| {
        v.sort_by(|a, b| rank_desc(&(a.0, a.1), &(b.0, b.1)));
        v.into_iter()
            .map(|(token, c, f1, f2, direction)| ThresholdCrossing {
                token: token.to_owned(),
                f1,
                f2,
                threshold,
                direction,
                jsd_contribution: c.value,
            })
            .collect::<Vec<_>>()
    };
    let (upward, downward) = (finish(upward), finish(downward));
    Ok(FluxReport {
        from,
        to,
        threshold,
        years_excluded: exclude_years,
        upward_count: upward.len(),
        downward_count: downward.len(),
        upward,
        downward,
        pair_jsd,
        percent_of_pair_jsd: if pair_jsd > 0.0 {
            (100.0 * crossing_jsd / pair_jsd).clamp(0.0, 100.0)
        } else {
            0.0
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxVolume {
    pub from: Decade,
    pub to: Decade,
    pub threshold: f64,
    pub years_excluded: bool,
    pub upward: usize,
    pub downward: usize,
}

/// Crossing counts for every consecutive decade pair and every threshold.
/// Rows are ordered by decade pair, then by threshold as given.
pub fn flux_volume_series(
    table: &DecadeTable,
    thresholds: &[f64],
    policy: YearExclusion,
) -> Result<Vec<FluxVolume>, FluxError> {
    for (k, t) in thresholds.iter().enumerate() {
        check_threshold(*t)?;
        if thresholds[..k].contains(t) {
            return Err(FluxError::DuplicateThreshold);
        }
    }
    let years = YearPattern::default();
    let decades: Vec<Decade> = table.decades().collect();
    let mut out = Vec::new();
    for (i, pair) in decades.windows(2).enumerate() {
        for &threshold in thresholds {
            let exclude = policy.applies_at(threshold);
            let (mut up, mut down) = (0, 0);
            for (token, row) in table.rows() {
                if exclude && years.matches(token) {
                    continue;
                }
                match crossing(row[i], row[i + 1], threshold) {
                    Some(CrossingDirection::Upward) => up += 1,
                    Some(CrossingDirection::Downward) => down += 1,
                    None => {}
                }
            }
            out.push(FluxVolume {
                from: pair[0],
                to: pair[1],
                threshold,
                years_excluded: exclude,
                upward: up,
                downward: down,
            });
        }
    }
    Ok(out)
}

/// Number of tokens whose raw frequency in `decade` is at least `threshold`.
pub fn count_above(table: &DecadeTable, decade: Decade, threshold: f64) -> Result<usize, FluxError> {
    check_threshold(threshold)?;
    let di = table.decade_index(decade)?;
    Ok(table.rows().filter(|(_, r)| r[di] >= threshold).count())
}

/// Tokens at or above `threshold` in `decade`, most frequent first.
pub fn tokens_above(table: &DecadeTable, decade: Decade, threshold: f64) -> Result<Vec<(String, f64)>, FluxError> {
    check_threshold(threshold)?;
    let di = table.decade_index(decade)?;
    let mut v: Vec<(String, f64)> = table
        .column(di)
        .filter(|(_, f)| *f >= threshold)
        .map(|(t, f)| (t.to_owned(), f))
        .collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(v)
}

/// Raw frequency of the `rank`-th most frequent token (1-based; ties broken
/// by token bytes).
pub fn rank_threshold_frequency(table: &DecadeTable, decade: Decade, rank: usize) -> Result<f64, FluxError> {
    let di = table.decade_index(decade)?;
    let mut freqs: Vec<(&str, f64)> = table.column(di).collect();
    let vocabulary = freqs.len();
    if rank == 0 || rank > vocabulary {
        return Err(FluxError::RankOutOfRange { rank, vocabulary, decade });
    }
    let by_rank = |a: &(&str, f64), b: &(&str, f64)| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0));
    let (_, nth, _) = freqs.select_nth_unstable_by(rank - 1, by_rank);
    Ok(nth.1)
}
