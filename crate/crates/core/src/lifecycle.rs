//! Word birth and death rates under a finite observation window.
//!
//! A token's birth (death) decade is the first (last) decade of the window in
//! which its frequency reaches `median_fraction` times its median nonzero
//! frequency over the window. Births and deaths per decade are normalized by
//! that decade's vocabulary size. Because the window end caps every token's
//! last qualifying decade, deaths pile up in the final decades of whatever
//! window is chosen; [`boundary_experiment`] runs the same analysis under
//! several end points to expose this.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Decade, DecadeTable};

#[derive(Debug, Error)]
pub enum LifecycleError {
    #[error("token {0:?} has no nonzero frequency in the window")]
    AbsentToken(String),
    #[error("window {first}-{last} needs at least two decades")]
    WindowTooSmall { first: Decade, last: Decade },
    #[error("window {first}-{last} is outside the table range")]
    WindowOutOfRange { first: Decade, last: Decade },
    #[error("endpoint {0} is outside the table range")]
    EndpointOutOfRange(Decade),
    #[error("median fraction must lie strictly between 0 and 1, got {0}")]
    InvalidMedianFraction(f64),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub const DEFAULT_MEDIAN_FRACTION: f64 = 1.0 / 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifecycleConfig {
    pub window_start: Decade,
    pub window_end: Decade,
    pub median_fraction: f64,
    /// Skip tokens with any nonzero frequency before the window start.
    pub exclude_pre_window: bool,
    /// Count a decade when `f >= fraction * median` (otherwise `>`).
    pub inclusive_threshold: bool,
}

impl LifecycleConfig {
    pub fn new(window_start: Decade, window_end: Decade) -> Self {
        LifecycleConfig {
            window_start,
            window_end,
            median_fraction: DEFAULT_MEDIAN_FRACTION,
            exclude_pre_window: true,
            inclusive_threshold: true,
        }
    }

    pub fn with_median_fraction(mut self, fraction: f64) -> Self {
        self.median_fraction = fraction;
        self
    }

    fn validate(&self, table: &DecadeTable) -> Result<(usize, usize), LifecycleError> {
        if !(self.median_fraction > 0.0 && self.median_fraction < 1.0) {
            return Err(LifecycleError::InvalidMedianFraction(self.median_fraction));
        }
        let (first, last) = (self.window_start, self.window_end);
        let range = table.range();
        let (Some(s), Some(e)) = (range.index_of(first), range.index_of(last)) else {
            return Err(LifecycleError::WindowOutOfRange { first, last });
        };
        if e <= s {
            return Err(LifecycleError::WindowTooSmall { first, last });
        }
        Ok((s, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifecycleDecade {
    pub decade: Decade,
    pub births: usize,
    pub deaths: usize,
    pub unique_words: usize,
    pub birth_rate: f64,
    pub death_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleResult {
    pub config: LifecycleConfig,
    /// True when the table starts at the window start, so no token can be
    /// seen appearing before it.
    pub pre_window_exclusion_vacuous: bool,
    pub eligible_tokens: usize,
    pub decades: Vec<LifecycleDecade>,
}

fn median_of_nonzero(values: &[f64]) -> Option<f64> {
    let mut nz: Vec<f64> = values.iter().copied().filter(|f| *f > 0.0).collect();
    if nz.is_empty() {
        return None;
    }
    nz.sort_by(f64::total_cmp);
    let n = nz.len();
    Some(if n % 2 == 1 {
        nz[n / 2]
    } else {
        (nz[n / 2 - 1] + nz[n / 2]) / 2.0
    })
}

/// Median of a token's nonzero decade frequencies within `[first, last]`;
/// an even count averages the two middle values.
pub fn median_frequency(table: &DecadeTable, token: &str, first: Decade, last: Decade) -> Result<f64, LifecycleError> {
    let (s, e) = (table.decade_index(first)?, table.decade_index(last)?);
    let idx = table
        .token_index(token)
        .ok_or_else(|| LifecycleError::AbsentToken(token.to_owned()))?;
    let row = table.row(idx);
    median_of_nonzero(&row[s..=e.max(s)]).ok_or_else(|| LifecycleError::AbsentToken(token.to_owned()))
}

/// Birth and death decade offsets (relative to the window start) for one
/// token row, or `None` if the token is not eligible.
fn token_lifecycle(row: &[f64], s: usize, e: usize, config: &LifecycleConfig) -> Option<(usize, usize)> {
    if config.exclude_pre_window && row[..s].iter().any(|f| *f > 0.0) {
        return None;
    }
    let window = &row[s..=e];
    if window.iter().filter(|f| **f > 0.0).count() < 2 {
        return None;
    }
    let threshold = config.median_fraction * median_of_nonzero(window)?;
    let above = |f: &f64| {
        if config.inclusive_threshold {
            *f >= threshold
        } else {
            *f > threshold
        }
    };
    let birth = window.iter().position(above)?;
    let death = window.iter().rposition(above)?;
    Some((birth, death))
}

pub fn birth_death(table: &DecadeTable, config: &LifecycleConfig) -> Result<LifecycleResult, LifecycleError> {
    let (s, e) = config.validate(table)?;
    let n = e - s + 1;
    let zero = || (0usize, vec![0usize; n], vec![0usize; n]);
    let (eligible, births, deaths) = (0..table.len())
        .into_par_iter()
        .fold(zero, |(mut k, mut b, mut d), t| {
            if let Some((born, died)) = token_lifecycle(table.row(t), s, e, config) {
                k += 1;
                b[born] += 1;
                d[died] += 1;
            }
            (k, b, d)
        })
        .reduce(zero, |(k1, mut b1, mut d1), (k2, b2, d2)| {
            b1.iter_mut().zip(b2).for_each(|(x, y)| *x += y);
            d1.iter_mut().zip(d2).for_each(|(x, y)| *x += y);
            (k1 + k2, b1, d1)
        });

    let decades = (0..n)
        .map(|k| {
            let decade = config.window_start.offset(k as i32);
            let unique_words = table.vocabulary_size(decade)?;
            let rate = |c: usize| if unique_words == 0 { 0.0 } else { c as f64 / unique_words as f64 };
            Ok(LifecycleDecade {
                decade,
                births: births[k],
                deaths: deaths[k],
                unique_words,
                birth_rate: rate(births[k]),
                death_rate: rate(deaths[k]),
            })
        })
        .collect::<Result<Vec<_>, LifecycleError>>()?;

    Ok(LifecycleResult {
        config: *config,
        pre_window_exclusion_vacuous: s == 0,
        eligible_tokens: eligible,
        decades,
    })
}

/// Runs [`birth_death`] over `[base.window_start, endpoint]` for each endpoint.
/// Medians are recomputed per window.
pub fn boundary_experiment(
    table: &DecadeTable,
    base: &LifecycleConfig,
    endpoints: &[Decade],
) -> Result<Vec<(Decade, LifecycleResult)>, LifecycleError> {
    endpoints
        .iter()
        .map(|&end| {
            if !table.range().contains(end) {
                return Err(LifecycleError::EndpointOutOfRange(end));
            }
            let config = LifecycleConfig { window_end: end, ..*base };
            Ok((end, birth_death(table, &config)?))
        })
        .collect()
}
