//! Command-line front end.
//!
//! Every command writes CSV and JSON; `--format svg` adds a chart. CSV files
//! open with `#` comment lines carrying the command, the resolved
//! configuration and the table checksum; JSON files embed the same fields.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{load_table, save_table, Decade, DecadeRange, DecadeTable, DecadeTableBuilder};
use crate::divergence::{contribution_report, fraction_label, rising_fraction_series, Direction};
use crate::flux::{count_above, flux_volume_series, rank_threshold_frequency, threshold_flux, YearExclusion};
use crate::ingest::{open_path, parse_totals, stream_records, CorpusTotals, IngestStats, TokenFilter};
use crate::lifecycle::{boundary_experiment, LifecycleConfig, DEFAULT_MEDIAN_FRACTION};
use crate::svg::{self, Panel, Series};
use crate::synth::{generate, TrajectoryScript};

pub const TABLE_FILE: &str = "table.ngt";
pub const DEFAULT_THRESHOLDS: [f64; 6] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

/// Inclusive year span written `1820-1999`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearSpan {
    pub first: i32,
    pub last: i32,
}

impl FromStr for YearSpan {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once('-').ok_or_else(|| format!("expected FIRST-LAST, got {s:?}"))?;
        let first = a.trim().parse().map_err(|_| format!("bad year {a:?}"))?;
        let last = b.trim().parse().map_err(|_| format!("bad year {b:?}"))?;
        if first > last {
            return Err(format!("empty span {s:?}"));
        }
        Ok(YearSpan { first, last })
    }
}

impl Serialize for YearSpan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}-{}", self.first, self.last))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Parser)]
#[command(name = "ngram-flux", version, about = "Decade-level lexical change analysis of 1-gram counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate shards into a decade table cache.
    Build(BuildArgs),
    /// Report per-year corpus totals on a log scale.
    Totals(TotalsArgs),
    /// Rising-fraction series for decade pairs a fixed gap apart.
    Jsd(JsdArgs),
    /// Ranked divergence contributions between two decades.
    Contributions(ContributionsArgs),
    /// Tokens crossing a frequency threshold between two decades.
    Flux(FluxArgs),
    /// Crossing counts for every consecutive pair and threshold.
    FluxVolumes(FluxVolumesArgs),
    /// Frequency at fixed ranks and counts above fixed thresholds per decade.
    RankThresholds(RankThresholdsArgs),
    /// Birth and death rates under several end-of-window decades.
    Lifecycle(LifecycleArgs),
    /// Generate a synthetic shard and totals file from a trajectory script.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    /// Output directory, created if missing. Not recorded in reports.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
    /// CSV and JSON are always written; add `svg` for a chart.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Csv, Format::Json])]
    pub format: Vec<Format>,
}

#[derive(Debug, Args, Serialize)]
pub struct TableArgs {
    /// Decade table cache written by `build`.
    #[arg(long)]
    pub table: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    /// 1-gram shard files, plain or gzip.
    #[arg(long, num_args = 1.., required = true)]
    pub shards: Vec<PathBuf>,
    #[arg(long)]
    pub totals: PathBuf,
    #[arg(long, default_value = "1820-1999")]
    pub range: YearSpan,
    /// Keep part-of-speech tagged tokens such as `run_VERB`.
    #[arg(long)]
    pub keep_pos_tagged: bool,
    /// Drop four-digit year tokens at ingest.
    #[arg(long)]
    pub exclude_year_tokens: bool,
    /// Extra tokens to drop, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    /// Directory for the table cache and ingest statistics.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TotalsArgs {
    #[arg(long)]
    pub totals: PathBuf,
    /// Restrict to these years.
    #[arg(long)]
    pub range: Option<YearSpan>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct JsdArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// Distance between compared decades, in decades.
    #[arg(long, default_value_t = 1)]
    pub gap: usize,
    /// Contributions kept per pair in the JSON report.
    #[arg(long, default_value_t = 60)]
    pub top_k: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ContributionsArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long)]
    pub from: Decade,
    #[arg(long)]
    pub to: Decade,
    #[arg(long, default_value_t = 60)]
    pub top_k: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FluxArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long)]
    pub threshold: f64,
    #[arg(long)]
    pub from: Decade,
    #[arg(long)]
    pub to: Decade,
    #[arg(long, default_value = "auto")]
    pub exclude_years: YearExclusion,
    /// Crossings listed per direction; counts cover all of them.
    #[arg(long, default_value_t = 60)]
    pub top_k: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FluxVolumesArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long = "threshold", value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS)]
    pub thresholds: Vec<f64>,
    #[arg(long, default_value = "auto")]
    pub exclude_years: YearExclusion,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RankThresholdsArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 10, 100, 1000])]
    pub ranks: Vec<usize>,
    #[arg(long = "threshold", value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS)]
    pub thresholds: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct LifecycleArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// First decade of every window; defaults to the table's first decade.
    #[arg(long)]
    pub window_start: Option<Decade>,
    #[arg(long, value_delimiter = ',', default_values_t = [Decade::containing(1950), Decade::containing(1970), Decade::containing(1990)])]
    pub endpoints: Vec<Decade>,
    #[arg(long, default_value_t = DEFAULT_MEDIAN_FRACTION)]
    pub median_fraction: f64,
    /// Also count tokens already present before the window.
    #[arg(long)]
    pub include_pre_window: bool,
    /// Require `f > fraction * median` rather than `>=`.
    #[arg(long)]
    pub strict_threshold: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long, default_value = "1820-1999")]
    pub range: YearSpan,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gzip the shard.
    #[arg(long)]
    pub gzip: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => bail!("{e}"),
    };
    match &cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Totals(a) => cmd_totals(a),
        Command::Jsd(a) => cmd_jsd(a),
        Command::Contributions(a) => cmd_contributions(a),
        Command::Flux(a) => cmd_flux(a),
        Command::FluxVolumes(a) => cmd_flux_volumes(a),
        Command::RankThresholds(a) => cmd_rank_thresholds(a),
        Command::Lifecycle(a) => cmd_lifecycle(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn read_totals(path: &Path) -> Result<CorpusTotals> {
    let source = open_path(path).with_context(|| format!("MissingTotals: cannot open totals file {}", path.display()))?;
    parse_totals(source).with_context(|| format!("totals file {}", path.display()))
}

fn open_table(args: &TableArgs) -> Result<(DecadeTable, String)> {
    let file = File::open(&args.table).with_context(|| format!("cannot open table cache {}", args.table.display()))?;
    load_table(std::io::BufReader::new(file)).with_context(|| format!("table cache {}", args.table.display()))
}

/// Writes `bytes` via a sibling temporary file so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
}

fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

struct Emitter<'a> {
    command: &'static str,
    config: serde_json::Value,
    checksum: Option<String>,
    output: &'a OutputArgs,
}

impl<'a> Emitter<'a> {
    fn new(command: &'static str, config: &impl Serialize, checksum: Option<String>, output: &'a OutputArgs) -> Result<Self> {
        fs::create_dir_all(&output.out).with_context(|| format!("cannot create {}", output.out.display()))?;
        Ok(Emitter { command, config: serde_json::to_value(config)?, checksum, output })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.output.out.join(name)
    }

    fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut buf = format!("# command: {}\n# config: {}\n", self.command, self.config);
        if let Some(c) = &self.checksum {
            buf.push_str(&format!("# table_checksum: {c}\n"));
        }
        let mut w = csv::Writer::from_writer(buf.into_bytes());
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        write_atomic(&self.path(name), &w.into_inner()?)
    }

    fn json(&self, name: &str, results: &impl Serialize) -> Result<()> {
        let doc = serde_json::json!({
            "command": self.command,
            "config": self.config,
            "table_checksum": self.checksum,
            "results": results,
        });
        let mut bytes = serde_json::to_vec_pretty(&doc)?;
        bytes.push(b'\n');
        write_atomic(&self.path(name), &bytes)
    }

    fn svg(&self, name: &str, panels: impl FnOnce() -> Vec<Panel>) -> Result<()> {
        if !self.output.format.contains(&Format::Svg) {
            return Ok(());
        }
        let note = format!(
            "command: {} config: {} table_checksum: {}",
            self.command,
            self.config,
            self.checksum.as_deref().unwrap_or("none")
        );
        write_atomic(&self.path(name), svg::render(&note, &panels()).as_bytes())
    }
}

#[derive(Serialize)]
struct ShardStats {
    path: PathBuf,
    #[serde(flatten)]
    stats: IngestStats,
}

fn build_shard(path: &Path, filter: &TokenFilter, totals: &CorpusTotals, range: DecadeRange) -> Result<(DecadeTableBuilder, IngestStats)> {
    let source = open_path(path).with_context(|| format!("cannot open shard {}", path.display()))?;
    let mut builder = DecadeTableBuilder::new(totals, range)?;
    let mut stream = stream_records(source, filter, (range.first_year(), range.last_year()));
    while let Some(record) = stream.next() {
        let line = stream.stats().lines_read;
        let record = record.with_context(|| format!("{}: read failed after line {line}", path.display()))?;
        builder.add(record).with_context(|| format!("{}:{line}", path.display()))?;
    }
    Ok((builder, stream.into_stats()))
}

pub fn cmd_build(a: &BuildArgs) -> Result<()> {
    let totals = read_totals(&a.totals)?;
    let range = DecadeRange::from_years(a.range.first, a.range.last)?;
    let filter = TokenFilter {
        exclude_pos_tagged: !a.keep_pos_tagged,
        exclude_year_tokens: a.exclude_year_tokens,
        custom_exclusions: a.exclude.clone(),
        ..TokenFilter::default()
    };
    let parts: Vec<(DecadeTableBuilder, IngestStats)> =
        a.shards.par_iter().map(|p| build_shard(p, &filter, &totals, range)).collect::<Result<_>>()?;
    let mut builder = DecadeTableBuilder::new(&totals, range)?;
    let mut overall = IngestStats::default();
    let mut per_shard = Vec::new();
    for ((b, stats), path) in parts.into_iter().zip(&a.shards) {
        builder.merge(b);
        overall.merge(&stats);
        per_shard.push(ShardStats { path: path.clone(), stats });
    }
    let table = builder.finish();

    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let mut bytes = Vec::new();
    let checksum = save_table(&table, &mut bytes)?;
    write_atomic(&a.out.join(TABLE_FILE), &bytes)?;
    let summary = serde_json::json!({
        "command": "build",
        "config": a,
        "table_checksum": checksum,
        "results": {
            "tokens": table.len(),
            "decades": table.num_decades(),
            "total": overall,
            "shards": per_shard,
        },
    });
    let mut text = serde_json::to_vec_pretty(&summary)?;
    text.push(b'\n');
    write_atomic(&a.out.join("ingest-stats.json"), &text)?;
    eprintln!(
        "{} tokens over {} decades; {} lines read, {} kept, {} filtered, {} malformed",
        table.len(),
        table.num_decades(),
        overall.lines_read,
        overall.kept,
        overall.filtered,
        overall.malformed
    );
    Ok(())
}

pub fn cmd_totals(a: &TotalsArgs) -> Result<()> {
    let totals = read_totals(&a.totals)?;
    let rows: Vec<(i32, u64, u64)> = totals
        .iter()
        .filter(|(y, _)| a.range.is_none_or(|r| (r.first..=r.last).contains(y)))
        .map(|(y, t)| (y, t.match_count, t.volume_count))
        .collect();
    let log = |m: u64| if m > 0 { Some((m as f64).log10()) } else { None };
    let out = Emitter::new("totals", a, None, &a.output)?;
    out.csv(
        "totals.csv",
        &["year", "match_count", "volume_count", "log10_match_count"],
        rows.iter().map(|&(y, m, v)| vec![y.to_string(), m.to_string(), v.to_string(), log(m).map(fmt_f).unwrap_or_default()]),
    )?;
    let json: Vec<_> = rows
        .iter()
        .map(|&(y, m, v)| serde_json::json!({"year": y, "match_count": m, "volume_count": v, "log10_match_count": log(m)}))
        .collect();
    out.json("totals.json", &json)?;
    out.svg("totals.svg", || {
        vec![Panel::Lines {
            title: "Total 1-gram counts".into(),
            x_label: "year".into(),
            y_label: "log10 count".into(),
            series: vec![Series {
                name: "match count".into(),
                points: rows.iter().filter_map(|&(y, m, _)| Some((f64::from(y), log(m)?))).collect(),
            }],
        }]
    })
}

pub fn cmd_jsd(a: &JsdArgs) -> Result<()> {
    let (table, checksum) = open_table(&a.table)?;
    let series = rising_fraction_series(&table, a.gap)?;
    let pairs: Vec<_> = series
        .par_iter()
        .map(|p| contribution_report(&table, p.from, p.to, Some(a.top_k)))
        .collect::<Result<_, _>>()?;
    let out = Emitter::new("jsd", a, Some(checksum), &a.output)?;
    out.csv(
        "jsd.csv",
        &["from", "to", "total_jsd", "rising_fraction"],
        series.iter().map(|p| {
            vec![p.from.to_string(), p.to.to_string(), fmt_f(p.total_jsd), fraction_label(p.rising_fraction)]
        }),
    )?;
    out.json("jsd.json", &pairs)?;
    out.svg("jsd.svg", || {
        vec![Panel::Lines {
            title: format!("Rising share of divergence, gap {}", a.gap),
            x_label: "earlier decade".into(),
            y_label: "rising fraction".into(),
            series: vec![Series {
                name: "rising fraction".into(),
                points: series
                    .iter()
                    .filter_map(|p| Some((f64::from(p.from.start_year()), p.rising_fraction?)))
                    .collect(),
            }],
        }]
    })
}

pub fn cmd_contributions(a: &ContributionsArgs) -> Result<()> {
    let (table, checksum) = open_table(&a.table)?;
    let report = contribution_report(&table, a.from, a.to, Some(a.top_k))?;
    let out = Emitter::new("contributions", a, Some(checksum), &a.output)?;
    out.csv(
        "contributions.csv",
        &["token", "p", "q", "contribution_bits", "direction"],
        report.contributions.iter().map(|c| {
            let x = &c.contribution;
            vec![c.token.clone(), fmt_f(x.p), fmt_f(x.q), fmt_f(x.value), x.direction.to_string()]
        }),
    )?;
    out.json("contributions.json", &report)?;
    out.svg("contributions.svg", || {
        vec![Panel::Bars {
            title: format!("Divergence contributions {} to {} (rising right, falling left)", a.from, a.to),
            x_label: "bits".into(),
            bars: report
                .contributions
                .iter()
                .map(|c| {
                    let v = c.contribution.value;
                    (c.token.clone(), if c.contribution.direction == Direction::Falling { -v } else { v })
                })
                .collect(),
        }]
    })
}

pub fn cmd_flux(a: &FluxArgs) -> Result<()> {
    let (table, checksum) = open_table(&a.table)?;
    let mut report = threshold_flux(&table, a.from, a.to, a.threshold, a.exclude_years.applies_at(a.threshold))?;
    report.upward.truncate(a.top_k);
    report.downward.truncate(a.top_k);
    let out = Emitter::new("flux", a, Some(checksum), &a.output)?;
    out.csv(
        "flux.csv",
        &["direction", "token", "f1", "f2", "jsd_contribution"],
        report.upward.iter().map(|c| ("upward", c)).chain(report.downward.iter().map(|c| ("downward", c))).map(|(d, c)| {
            vec![d.to_owned(), c.token.clone(), fmt_f(c.f1), fmt_f(c.f2), fmt_f(c.jsd_contribution)]
        }),
    )?;
    out.json("flux.json", &report)?;
    out.svg("flux.svg", || {
        vec![Panel::Bars {
            title: format!(
                "Crossing {:e}, {} to {}: {} up, {} down",
                a.threshold, a.from, a.to, report.upward_count, report.downward_count
            ),
            x_label: "divergence contribution (bits), upward right, downward left".into(),
            bars: report
                .upward
                .iter()
                .map(|c| (c.token.clone(), c.jsd_contribution))
                .chain(report.downward.iter().map(|c| (c.token.clone(), -c.jsd_contribution)))
                .collect(),
        }]
    })
}

pub fn cmd_flux_volumes(a: &FluxVolumesArgs) -> Result<()> {
    let (table, checksum) = open_table(&a.table)?;
    let rows = flux_volume_series(&table, &a.thresholds, a.exclude_years)?;
    let out = Emitter::new("flux-volumes", a, Some(checksum), &a.output)?;
    out.csv(
        "flux-volumes.csv",
        &["from", "to", "threshold", "years_excluded", "upward", "downward"],
        rows.iter().map(|r| {
            vec![
                r.from.to_string(),
                r.to.to_string(),
                fmt_f(r.threshold),
                r.years_excluded.to_string(),
                r.upward.to_string(),
                r.downward.to_string(),
            ]
        }),
    )?;
    out.json("flux-volumes.json", &rows)?;
    out.svg("flux-volumes.svg", || {
        let series = |up: bool| -> Vec<Series> {
            a.thresholds
                .iter()
                .map(|&t| Series {
                    name: format!("{t:e}"),
                    points: rows
                        .iter()
                        .filter(|r| r.threshold == t)
                        .map(|r| (f64::from(r.to.start_year()), (if up { r.upward } else { r.downward }) as f64))
                        .collect(),
                })
                .collect()
        };
        vec![
            Panel::Lines { title: "Upward crossings".into(), x_label: "later decade".into(), y_label: "tokens".into(), series: series(true) },
            Panel::Lines { title: "Downward crossings".into(), x_label: "later decade".into(), y_label: "tokens".into(), series: series(false) },
        ]
    })
}

pub fn cmd_rank_thresholds(a: &RankThresholdsArgs) -> Result<()> {
    let (table, checksum) = open_table(&a.table)?;
    let mut ranks = Vec::new();
    let mut counts = Vec::new();
    for d in table.decades() {
        for &r in &a.ranks {
            ranks.push((d, r, rank_threshold_frequency(&table, d, r)?));
        }
        for &t in &a.thresholds {
            counts.push((d, t, count_above(&table, d, t)?));
        }
    }
    let out = Emitter::new("rank-thresholds", a, Some(checksum), &a.output)?;
    out.csv(
        "rank-thresholds.csv",
        &["decade", "rank", "frequency"],
        ranks.iter().map(|(d, r, f)| vec![d.to_string(), r.to_string(), fmt_f(*f)]),
    )?;
    out.csv(
        "count-above.csv",
        &["decade", "threshold", "count"],
        counts.iter().map(|(d, t, c)| vec![d.to_string(), fmt_f(*t), c.to_string()]),
    )?;
    let json = serde_json::json!({
        "rank_frequencies": ranks.iter().map(|(d, r, f)| serde_json::json!({"decade": d, "rank": r, "frequency": f})).collect::<Vec<_>>(),
        "count_above": counts.iter().map(|(d, t, c)| serde_json::json!({"decade": d, "threshold": t, "count": c})).collect::<Vec<_>>(),
    });
    out.json("rank-thresholds.json", &json)?;
    out.svg("rank-thresholds.svg", || {
        vec![Panel::Lines {
            title: "Frequency at fixed rank".into(),
            x_label: "decade".into(),
            y_label: "log10 relative frequency".into(),
            series: a
                .ranks
                .iter()
                .map(|&r| Series {
                    name: format!("rank {r}"),
                    points: ranks
                        .iter()
                        .filter(|x| x.1 == r && x.2 > 0.0)
                        .map(|x| (f64::from(x.0.start_year()), x.2.log10()))
                        .collect(),
                })
                .collect(),
        }]
    })
}

pub fn cmd_lifecycle(a: &LifecycleArgs) -> Result<()> {
    let (table, checksum) = open_table(&a.table)?;
    let start = a.window_start.unwrap_or(table.range().first());
    let mut base = LifecycleConfig::new(start, start).with_median_fraction(a.median_fraction);
    base.exclude_pre_window = !a.include_pre_window;
    base.inclusive_threshold = !a.strict_threshold;
    let results = boundary_experiment(&table, &base, &a.endpoints)?;
    let out = Emitter::new("lifecycle", a, Some(checksum), &a.output)?;
    out.csv(
        "lifecycle.csv",
        &["decade", "births", "deaths", "unique_words", "birth_rate", "death_rate", "endpoint"],
        results.iter().flat_map(|(end, r)| {
            r.decades.iter().map(move |d| {
                vec![
                    d.decade.to_string(),
                    d.births.to_string(),
                    d.deaths.to_string(),
                    d.unique_words.to_string(),
                    fmt_f(d.birth_rate),
                    fmt_f(d.death_rate),
                    end.to_string(),
                ]
            })
        }),
    )?;
    let json: Vec<_> = results.iter().map(|(end, r)| serde_json::json!({"endpoint": end, "result": r})).collect();
    out.json("lifecycle.json", &json)?;
    out.svg("lifecycle.svg", || {
        let series = |birth: bool| -> Vec<Series> {
            results
                .iter()
                .map(|(end, r)| Series {
                    name: format!("window ends {end}"),
                    points: r
                        .decades
                        .iter()
                        .map(|d| (f64::from(d.decade.start_year()), if birth { d.birth_rate } else { d.death_rate }))
                        .collect(),
                })
                .collect()
        };
        vec![
            Panel::Lines { title: "Birth rate".into(), x_label: "decade".into(), y_label: "births / vocabulary".into(), series: series(true) },
            Panel::Lines { title: "Death rate".into(), x_label: "decade".into(), y_label: "deaths / vocabulary".into(), series: series(false) },
        ]
    })
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&a.script).with_context(|| format!("cannot read script {}", a.script.display()))?;
    let script = TrajectoryScript::parse(&text).with_context(|| format!("script {}", a.script.display()))?;
    let corpus = generate(&script, (a.range.first, a.range.last), a.seed)?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let name = if a.gzip { "synthetic.tsv.gz" } else { "synthetic.tsv" };
    let shard = a.out.join(name);
    let tmp = shard.with_extension("partial");
    let file = BufWriter::new(File::create(&tmp).with_context(|| format!("cannot write {}", tmp.display()))?);
    if a.gzip {
        let mut gz = flate2::write::GzEncoder::new(file, flate2::Compression::default());
        corpus.write_shard(&mut gz)?;
        gz.finish()?.flush()?;
    } else {
        corpus.write_shard(file)?;
    }
    fs::rename(&tmp, &shard)?;
    write_atomic(&a.out.join("totals.txt"), corpus.totals().to_text().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_span() {
        assert_eq!("1820-1999".parse::<YearSpan>().unwrap(), YearSpan { first: 1820, last: 1999 });
        assert!("1999-1820".parse::<YearSpan>().is_err());
        assert!("1820".parse::<YearSpan>().is_err());
        assert_eq!(serde_json::to_string(&YearSpan { first: 1, last: 2 }).unwrap(), "\"1-2\"");
    }

    #[test]
    fn parses_defaults() {
        let cli = Cli::try_parse_from(["ngram-flux", "flux-volumes", "--table", "t"]).unwrap();
        let Command::FluxVolumes(a) = cli.command else { panic!() };
        assert_eq!(a.thresholds, DEFAULT_THRESHOLDS);
        assert_eq!(a.exclude_years, YearExclusion::Auto);
        assert_eq!(a.output.format, [Format::Csv, Format::Json]);

        let cli = Cli::try_parse_from(["ngram-flux", "lifecycle", "--table", "t", "--format", "svg"]).unwrap();
        let Command::Lifecycle(a) = cli.command else { panic!() };
        assert_eq!(a.endpoints.len(), 3);
        assert_eq!(a.endpoints[2], Decade::new(1990).unwrap());
        assert_eq!(a.median_fraction, 0.05);

        assert!(Cli::try_parse_from(["ngram-flux", "flux", "--table", "t", "--threshold", "1e-4", "--from", "1900", "--to", "1910", "--exclude-years", "maybe"]).is_err());
    }
}
