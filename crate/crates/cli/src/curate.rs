//! `stats`, `curate` and `vqa`: two-pass streaming over a trajectory corpus.
//!
//! Records are processed in fixed-size batches. Within a batch they are
//! prepared in parallel and emitted in a fixed order, so the output does not
//! depend on `--jobs`.

use std::fs::File;
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::Path;

use anyhow::{Context, Result};
use lap_core::curation::{
    make_samples, make_vqa, prepare_record, Counters, NormStats, PipelineConfig, Prepared,
    StatsAccumulator, StatsFile,
};
use lap_core::langact::LanguageAction;
use lap_core::{to_canonical_json, FORMAT_VERSION};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::{self, Output, Rereadable};
use crate::InvariantViolation;

const LINES_PER_JOB: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Training,
    Vqa,
}

#[derive(Serialize)]
struct CountersEvent<'a> {
    event: &'static str,
    command: &'a str,
    #[serde(flatten)]
    counters: &'a Counters,
}

#[derive(Serialize)]
struct ProgressEvent<'a> {
    event: &'static str,
    command: &'a str,
    episodes_read: u64,
    samples_emitted: u64,
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("cannot start worker threads")
}

/// A non-blank input line and where it starts.
struct Line {
    number: usize,
    offset: u64,
    text: String,
}

/// Reads up to `n` non-blank lines. `pos` tracks the 1-based line number of
/// the last line read and the byte offset of the next one.
fn next_batch(reader: &mut dyn BufRead, pos: &mut (usize, u64), n: usize) -> Result<Vec<Line>> {
    let mut batch = Vec::with_capacity(n);
    while batch.len() < n {
        let mut buf = String::new();
        let read = reader
            .read_line(&mut buf)
            .with_context(|| format!("line {}: read failed", pos.0 + 1))?;
        if read == 0 {
            break;
        }
        pos.0 += 1;
        let offset = pos.1;
        pos.1 += read as u64;
        let text = buf.trim_end_matches(['\n', '\r']);
        if !text.trim().is_empty() {
            batch.push(Line {
                number: pos.0,
                offset,
                text: text.to_string(),
            });
        }
    }
    Ok(batch)
}

/// Where one record lives in the input, for the sorted sample pass.
struct IndexEntry {
    episode_id: String,
    line: usize,
    offset: u64,
}

#[derive(Deserialize)]
struct IdOnly {
    episode_id: String,
}

/// Episode id of a line without converting the record; falls back to the
/// full parser so a bad line reports the same error either way.
fn index_entry(line: &Line, config: &PipelineConfig) -> Result<IndexEntry> {
    let episode_id = match serde_json::from_str::<IdOnly>(&line.text) {
        Ok(r) => r.episode_id,
        Err(e) => match prepare_record(&line.text, line.number, config) {
            Err(err) => return Err(err.into()),
            Ok(_) => {
                return Err(InvariantViolation(format!(
                    "line {}: record parsed without an id: {e}",
                    line.number
                ))
                .into())
            }
        },
    };
    Ok(IndexEntry {
        episode_id,
        line: line.number,
        offset: line.offset,
    })
}

fn log_drop(prepared: &Prepared) {
    if let Prepared::Dropped {
        line,
        episode_id,
        reason,
    } = prepared
    {
        log::info!(
            "line {line}: dropped episode {episode_id:?} ({})",
            reason.as_str()
        );
    }
}

fn finish_counters(command: &str, counters: &Counters) -> Result<()> {
    if !counters.reconciles() {
        return Err(InvariantViolation(format!(
            "counters do not reconcile: read {} != emitted {} + dropped {}",
            counters.episodes_read,
            counters.episodes_emitted,
            counters.dropped_total()
        ))
        .into());
    }
    io::report(&CountersEvent {
        event: "counters",
        command,
        counters,
    });
    Ok(())
}

/// Output of the first pass over the input.
struct Scan {
    stats: Option<NormStats>,
    counters: Counters,
    index: Vec<IndexEntry>,
}

/// First pass: normalization statistics (when `with_stats`) and the record
/// index used to emit samples in `(episode_id, t)` order.
fn scan(
    mut reader: Box<dyn BufRead>,
    config: &PipelineConfig,
    pool: &rayon::ThreadPool,
    with_stats: bool,
) -> Result<Scan> {
    let mut acc = StatsAccumulator::new();
    let mut counters = Counters::default();
    let mut index = Vec::new();
    let mut pos = (0, 0);
    let batch_len = LINES_PER_JOB * pool.current_num_threads();
    loop {
        let batch = next_batch(&mut *reader, &mut pos, batch_len)?;
        if batch.is_empty() {
            break;
        }
        if !with_stats {
            let entries: Vec<Result<IndexEntry>> =
                pool.install(|| batch.par_iter().map(|l| index_entry(l, config)).collect());
            for entry in entries {
                index.push(entry?);
            }
            continue;
        }
        let results: Vec<_> = pool.install(|| {
            batch
                .par_iter()
                .map(|line| {
                    prepare_record(&line.text, line.number, config).map(|p| {
                        let mut part = StatsAccumulator::new();
                        if let Prepared::Ready { episode, .. } = &p {
                            part.push_episode(episode);
                        }
                        (p, part)
                    })
                })
                .collect()
        });
        for (line, result) in batch.iter().zip(results) {
            let (prepared, part) = result?;
            log_drop(&prepared);
            counters.record(&prepared, 0);
            acc.merge(part);
            let episode_id = match &prepared {
                Prepared::Ready { episode, .. } => episode.episode_id.clone(),
                Prepared::Dropped { episode_id, .. } => episode_id.clone(),
            };
            index.push(IndexEntry {
                episode_id,
                line: line.number,
                offset: line.offset,
            });
        }
    }
    let stats = if with_stats {
        let stats = acc
            .finish()
            .context("cannot compute normalization statistics")?;
        for (i, d) in stats.state.iter().chain(&stats.action).enumerate() {
            if d.q01.partial_cmp(&d.q99) != Some(std::cmp::Ordering::Less) {
                return Err(InvariantViolation(format!("dimension {i} has q01 >= q99")).into());
            }
        }
        Some(stats)
    } else {
        None
    };
    Ok(Scan {
        stats,
        counters,
        index,
    })
}

pub fn stats(
    input: Option<&Path>,
    output: Option<&Path>,
    config: &PipelineConfig,
    jobs: usize,
) -> Result<()> {
    let pool = thread_pool(jobs)?;
    let scan = scan(io::open_input(input)?, config, &pool, true)?;
    let stats = scan.stats.expect("requested");
    let mut out = Output::create(output)?;
    out.write_line(&to_canonical_json(&stats.to_file()))?;
    finish_counters("stats", &scan.counters)?;
    out.commit()
}

fn load_stats(path: &Path) -> Result<NormStats> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let file: StatsFile = serde_json::from_str(text.trim())
        .with_context(|| format!("{}: not a stats file", path.display()))?;
    if file.format_version != FORMAT_VERSION {
        anyhow::bail!(
            "{}: format version {} does not match {FORMAT_VERSION}",
            path.display(),
            file.format_version
        );
    }
    NormStats::from_file(&file).with_context(|| format!("{}: invalid stats", path.display()))
}

/// Serialized samples for one prepared record.
fn sample_lines(
    kind: Kind,
    prepared: &Prepared,
    stats: &NormStats,
    config: &PipelineConfig,
) -> Result<Vec<String>> {
    let Prepared::Ready { episode, .. } = prepared else {
        return Ok(Vec::new());
    };
    match kind {
        Kind::Training => make_samples(episode, stats, &config.samples)
            .iter()
            .map(|s| {
                if s.target != lap_core::langact::NO_MOVEMENT
                    && LanguageAction::parse(&s.target, s.frame).is_err()
                {
                    return Err(InvariantViolation(format!(
                        "episode {:?} t={}: target {:?} does not parse",
                        s.meta.episode_id, s.meta.t, s.target
                    ))
                    .into());
                }
                Ok(to_canonical_json(s))
            })
            .collect(),
        Kind::Vqa => Ok(make_vqa(episode, stats, &config.samples)
            .iter()
            .map(to_canonical_json)
            .collect()),
    }
}

/// Reads the lines named by `entries`, in that order.
fn read_entries(file: &mut BufReader<File>, entries: &[IndexEntry]) -> Result<Vec<String>> {
    entries
        .iter()
        .map(|e| {
            file.seek(SeekFrom::Start(e.offset))?;
            let mut buf = String::new();
            file.read_line(&mut buf)
                .with_context(|| format!("line {}: read failed", e.line))?;
            Ok(buf.trim_end_matches(['\n', '\r']).to_string())
        })
        .collect()
}

/// Two passes: the first computes statistics (unless a stats file is given)
/// and indexes records; the second emits samples sorted by episode id, then
/// by input line for repeated ids. Only one batch of records is in memory.
pub fn samples(
    kind: Kind,
    input: Option<&Path>,
    output: Option<&Path>,
    stats_path: Option<&Path>,
    config: &PipelineConfig,
    jobs: usize,
) -> Result<()> {
    let command = match kind {
        Kind::Training => "curate",
        Kind::Vqa => "vqa",
    };
    let pool = thread_pool(jobs)?;
    let loaded = stats_path.map(load_stats).transpose()?;
    let source = Rereadable::new(input)?;
    let first = scan(source.open()?, config, &pool, loaded.is_none())?;
    let stats = loaded.or(first.stats).expect("loaded or computed");
    let mut index = first.index;
    index.sort_by(|a, b| (&a.episode_id, a.line).cmp(&(&b.episode_id, b.line)));
    let mut file = BufReader::new(source.open_file()?);

    let mut out = Output::create(output)?;
    let mut counters = Counters::default();
    for entries in index.chunks(LINES_PER_JOB * jobs) {
        let texts = read_entries(&mut file, entries)?;
        let results: Vec<Result<(Prepared, Vec<String>)>> = pool.install(|| {
            entries
                .par_iter()
                .zip(&texts)
                .map(|(entry, text)| {
                    let prepared = prepare_record(text, entry.line, config)?;
                    let lines = sample_lines(kind, &prepared, &stats, config)?;
                    Ok((prepared, lines))
                })
                .collect()
        });
        for result in results {
            let (prepared, lines) = result?;
            log_drop(&prepared);
            counters.record(&prepared, lines.len());
            for line in &lines {
                out.write_line(line)?;
            }
        }
        if log::log_enabled!(log::Level::Info) {
            io::report(&ProgressEvent {
                event: "progress",
                command,
                episodes_read: counters.episodes_read,
                samples_emitted: counters.samples_emitted,
            });
        }
    }
    finish_counters(command, &counters)?;
    out.commit()
}
