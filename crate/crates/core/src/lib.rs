//! Lexical change measurement on decade-aggregated 1-gram counts.
//!
//! Pipeline: [`ingest`] streams shard records and year totals, [`corpus`]
//! folds them into decade frequency tables, and [`divergence`], [`flux`] and
//! [`lifecycle`] run the analyses. [`synth`] builds corpora with known
//! answers for testing.

pub mod cli;
pub mod corpus;
pub mod divergence;
pub mod flux;
pub mod ingest;
pub mod lifecycle;
pub mod numeric;
pub mod svg;
pub mod synth;
