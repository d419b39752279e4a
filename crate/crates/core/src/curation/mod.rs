//! Trajectory curation: ingestion, normalization statistics, idle filtering
//! and training/VQA sample generation.

mod idle;
mod ingest;
mod pipeline;
mod samples;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{matrix_to_euler, step_delta, Pose, RotationMatrix, Vec3};

pub use idle::{filter_idle, IdleConfig};
pub use ingest::{
    EpisodeReader, IngestError, IngestErrorKind, IngestOptions, Ingested, RotationFormat,
};
pub use pipeline::{prepare_record, PipelineConfig, Prepared};
pub use samples::{
    make_samples, make_vqa, render_prompt, render_vqa_prompt, sample_frame, SampleConfig,
    SampleMeta, TrainingSample, VqaMeta, VqaSample, VQA_QUESTIONS,
};
pub use stats::{
    compute_norm_stats, denormalize, discretize, discretize_state, normalize, quantile_type7,
    state_tokens_text, DimStats, NormStats, StatsAccumulator, StatsError, StatsFile, ACTION_DIM,
    ACTION_DIM_NAMES, MIN_OBSERVATIONS, STATE_DIM, STATE_DIM_NAMES,
};

/// A per-step delta expressed in the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAction {
    pub translation: Vec3,
    pub rotation: RotationMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub t: u64,
    pub pose: Pose,
    /// Recorded delta from this step to the next; derived from poses when absent.
    pub action: Option<StepAction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub episode_id: String,
    pub instruction: String,
    pub steps: Vec<Step>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Base-frame delta from step `k` to step `k + 1`.
    pub fn step_delta(&self, k: usize) -> (Vec3, RotationMatrix) {
        match self.steps[k].action {
            Some(a) => (a.translation, a.rotation),
            None => step_delta(&self.steps[k].pose, &self.steps[k + 1].pose),
        }
    }

    /// Continuous action for step `k`: translation (m), extrinsic XYZ Euler
    /// angles of the rotation (rad), and the gripper state at step `k + 1`.
    pub fn action_vector(&self, k: usize) -> [f64; ACTION_DIM] {
        let (t, r) = self.step_delta(k);
        let e = matrix_to_euler(&r).angles;
        [
            t.x,
            t.y,
            t.z,
            e.roll,
            e.pitch,
            e.yaw,
            self.steps[k + 1].pose.gripper.as_f64(),
        ]
    }
}

/// Idle-filters an episode and checks that at least one chunk of
/// `horizon` steps remains.
pub fn prepare_episode(
    episode: &Episode,
    idle: &IdleConfig,
    horizon: usize,
) -> Result<(Episode, usize), DropReason> {
    let (filtered, removed) = filter_idle(episode, idle)?;
    if filtered.len() <= horizon.max(1) {
        return Err(DropReason::TooShort);
    }
    Ok((filtered, removed))
}

/// Why an episode did not produce samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoInstruction,
    BadRotation,
    BadGripper,
    NonFinite,
    InvalidSteps,
    ActionMismatch,
    AllIdle,
    TooShort,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoInstruction => "no_instruction",
            DropReason::BadRotation => "bad_rotation",
            DropReason::BadGripper => "bad_gripper",
            DropReason::NonFinite => "non_finite",
            DropReason::InvalidSteps => "invalid_steps",
            DropReason::ActionMismatch => "action_mismatch",
            DropReason::AllIdle => "all_idle",
            DropReason::TooShort => "too_short",
        }
    }

    /// Rejections are malformed records as opposed to policy drops.
    pub fn is_rejection(self) -> bool {
        !matches!(
            self,
            DropReason::NoInstruction | DropReason::AllIdle | DropReason::TooShort
        )
    }
}

/// Pipeline counters. `episodes_read == episodes_emitted + Σ dropped`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub episodes_read: u64,
    pub episodes_emitted: u64,
    pub dropped: BTreeMap<DropReason, u64>,
    pub idle_steps_removed: u64,
    pub samples_emitted: u64,
}

impl Counters {
    pub fn drop(&mut self, reason: DropReason) {
        *self.dropped.entry(reason).or_default() += 1;
    }

    pub fn dropped_total(&self) -> u64 {
        self.dropped.values().sum()
    }

    pub fn reconciles(&self) -> bool {
        self.episodes_read == self.episodes_emitted + self.dropped_total()
    }

    pub fn merge(&mut self, other: &Counters) {
        self.episodes_read += other.episodes_read;
        self.episodes_emitted += other.episodes_emitted;
        for (reason, n) in &other.dropped {
            *self.dropped.entry(*reason).or_default() += n;
        }
        self.idle_steps_removed += other.idle_steps_removed;
        self.samples_emitted += other.samples_emitted;
    }
}
