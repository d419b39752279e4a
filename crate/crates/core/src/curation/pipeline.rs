//! Per-record pipeline steps shared by the stats and sample passes.

use serde::{Deserialize, Serialize};

use super::ingest::{parse_line, IngestError, IngestOptions, Ingested};
use super::{prepare_episode, Counters, DropReason, Episode, IdleConfig, SampleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub ingest: IngestOptions,
    pub idle: IdleConfig,
    pub samples: SampleConfig,
}

/// An input record after ingestion, idle filtering and the length check.
#[derive(Debug, Clone, PartialEq)]
pub enum Prepared {
    Ready {
        episode: Episode,
        idle_removed: usize,
    },
    Dropped {
        line: usize,
        episode_id: String,
        reason: DropReason,
    },
}

/// Parses one input line and prepares its episode for sampling.
pub fn prepare_record(
    text: &str,
    line: usize,
    config: &PipelineConfig,
) -> Result<Prepared, IngestError> {
    Ok(match parse_line(text, line, &config.ingest)? {
        Ingested::Dropped {
            line,
            episode_id,
            reason,
        } => Prepared::Dropped {
            line,
            episode_id,
            reason,
        },
        Ingested::Episode(ep) => match prepare_episode(&ep, &config.idle, config.samples.horizon) {
            Ok((episode, idle_removed)) => Prepared::Ready {
                episode,
                idle_removed,
            },
            Err(reason) => Prepared::Dropped {
                line,
                episode_id: ep.episode_id,
                reason,
            },
        },
    })
}

impl Counters {
    /// Counts one prepared record and, for ready episodes, the samples it
    /// produced.
    pub fn record(&mut self, prepared: &Prepared, samples: usize) {
        self.episodes_read += 1;
        match prepared {
            Prepared::Ready { idle_removed, .. } => {
                self.episodes_emitted += 1;
                self.idle_steps_removed += *idle_removed as u64;
                self.samples_emitted += samples as u64;
            }
            Prepared::Dropped { reason, .. } => self.drop(*reason),
        }
    }
}
