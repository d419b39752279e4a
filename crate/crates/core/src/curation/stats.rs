//! Quantile normalization statistics and state discretization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Episode;
use crate::geometry::Pose;
use crate::FORMAT_VERSION;

pub const STATE_DIM: usize = 10;
pub const ACTION_DIM: usize = 7;

pub const STATE_DIM_NAMES: [&str; STATE_DIM] = [
    "state.x",
    "state.y",
    "state.z",
    "state.r6d_0",
    "state.r6d_1",
    "state.r6d_2",
    "state.r6d_3",
    "state.r6d_4",
    "state.r6d_5",
    "state.gripper",
];

pub const ACTION_DIM_NAMES: [&str; ACTION_DIM] = [
    "action.dx",
    "action.dy",
    "action.dz",
    "action.droll",
    "action.dpitch",
    "action.dyaw",
    "action.gripper",
];

const STATE_GRIPPER: usize = 9;
const ACTION_GRIPPER: usize = 6;

/// Fewest observations per dimension accepted for quantile estimation.
pub const MIN_OBSERVATIONS: usize = 100;

/// Half-width applied to a constant dimension.
pub const DEGENERATE_WIDENING: f64 = 1e-6;

pub const NUM_BINS: u32 = 255;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("dimension {dim} has {n} observations, need at least {MIN_OBSERVATIONS}")]
    InsufficientData { dim: String, n: usize },
    #[error("non-finite observation in {0}")]
    NonFinite(String),
    #[error("invalid stats file: {0}")]
    InvalidFile(String),
}

/// Linear interpolation between order statistics, `h = (n − 1)·p`.
///
/// `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub q01: f64,
    pub q99: f64,
}

impl DimStats {
    const PINNED: DimStats = DimStats { q01: 0.0, q99: 1.0 };
}

/// Maps `[q01, q99]` affinely onto `[−1, 1]`. No clipping.
pub fn normalize(x: f64, s: &DimStats) -> f64 {
    2.0 * (x - s.q01) / (s.q99 - s.q01) - 1.0
}

pub fn denormalize(y: f64, s: &DimStats) -> f64 {
    (y + 1.0) / 2.0 * (s.q99 - s.q01) + s.q01
}

/// Bin label in 1..=255 for a normalized value (clipped to [−1, 1]).
pub fn discretize(normalized: f64) -> u8 {
    let x = normalized.clamp(-1.0, 1.0);
    let idx = 1 + ((x + 1.0) / 2.0 * f64::from(NUM_BINS)).floor() as u32;
    idx.min(NUM_BINS) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub state: [DimStats; STATE_DIM],
    pub action: [DimStats; ACTION_DIM],
    pub n_state_samples: u64,
    pub n_action_samples: u64,
    /// Dimensions that were constant and got widened.
    pub widened: Vec<String>,
}

impl NormStats {
    pub fn normalize_state(&self, v: &[f64; STATE_DIM]) -> [f64; STATE_DIM] {
        std::array::from_fn(|i| normalize(v[i], &self.state[i]))
    }

    pub fn normalize_action(&self, v: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
        std::array::from_fn(|i| normalize(v[i], &self.action[i]))
    }

    pub fn denormalize_action(&self, v: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
        std::array::from_fn(|i| denormalize(v[i], &self.action[i]))
    }

    pub fn to_file(&self) -> StatsFile {
        let dims = self.state.iter().chain(self.action.iter());
        StatsFile {
            format_version: FORMAT_VERSION,
            dim_names: STATE_DIM_NAMES
                .iter()
                .chain(ACTION_DIM_NAMES.iter())
                .map(|s| s.to_string())
                .collect(),
            q01: dims.clone().map(|d| d.q01).collect(),
            q99: dims.map(|d| d.q99).collect(),
            n_samples: self.n_state_samples,
            n_action_samples: self.n_action_samples,
            widened: self.widened.clone(),
        }
    }

    pub fn from_file(file: &StatsFile) -> Result<Self, StatsError> {
        let invalid = |m: &str| StatsError::InvalidFile(m.to_string());
        if file.format_version != FORMAT_VERSION {
            return Err(StatsError::InvalidFile(format!(
                "format_version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let expected: Vec<&str> = STATE_DIM_NAMES
            .iter()
            .chain(ACTION_DIM_NAMES.iter())
            .copied()
            .collect();
        if file
            .dim_names
            .iter()
            .map(String::as_str)
            .ne(expected.iter().copied())
        {
            return Err(invalid("dim_names do not match the state/action layout"));
        }
        if file.q01.len() != expected.len() || file.q99.len() != expected.len() {
            return Err(invalid("quantile arrays have the wrong length"));
        }
        let mut dims = Vec::with_capacity(expected.len());
        for (i, (&q01, &q99)) in file.q01.iter().zip(&file.q99).enumerate() {
            if !(q01.is_finite() && q99.is_finite()) || q01 >= q99 {
                return Err(StatsError::InvalidFile(format!(
                    "bad quantiles for {}",
                    expected[i]
                )));
            }
            dims.push(DimStats { q01, q99 });
        }
        Ok(Self {
            state: std::array::from_fn(|i| dims[i]),
            action: std::array::from_fn(|i| dims[STATE_DIM + i]),
            n_state_samples: file.n_samples,
            n_action_samples: file.n_action_samples,
            widened: file.widened.clone(),
        })
    }
}

/// On-disk stats record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub format_version: u32,
    pub dim_names: Vec<String>,
    pub q01: Vec<f64>,
    pub q99: Vec<f64>,
    pub n_samples: u64,
    #[serde(default)]
    pub n_action_samples: u64,
    #[serde(default)]
    pub widened: Vec<String>,
}

/// Collects per-dimension observations. Accumulators from different shards
/// can be merged in any order; the result is identical because quantiles
/// are taken over the sorted union.
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    state: Vec<Vec<f64>>,
    action: Vec<Vec<f64>>,
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self {
            state: vec![Vec::new(); STATE_DIM],
            action: vec![Vec::new(); ACTION_DIM],
        }
    }

    pub fn push_state(&mut self, v: &[f64; STATE_DIM]) {
        for (col, x) in self.state.iter_mut().zip(v) {
            col.push(*x);
        }
    }

    pub fn push_action(&mut self, v: &[f64; ACTION_DIM]) {
        for (col, x) in self.action.iter_mut().zip(v) {
            col.push(*x);
        }
    }

    pub fn push_episode(&mut self, ep: &Episode) {
        for step in &ep.steps {
            self.push_state(&step.pose.state_vector());
        }
        for k in 0..ep.len().saturating_sub(1) {
            self.push_action(&ep.action_vector(k));
        }
    }

    pub fn merge(&mut self, other: StatsAccumulator) {
        if self.state.is_empty() {
            *self = other;
            return;
        }
        for (a, b) in self.state.iter_mut().zip(other.state) {
            a.extend(b);
        }
        for (a, b) in self.action.iter_mut().zip(other.action) {
            a.extend(b);
        }
    }

    pub fn finish(mut self) -> Result<NormStats, StatsError> {
        if self.state.is_empty() {
            self = Self::new();
        }
        let n_state = self.state[0].len() as u64;
        let n_action = self.action[0].len() as u64;
        let mut widened = Vec::new();
        let mut reduce = |name: &str, col: &mut Vec<f64>| -> Result<DimStats, StatsError> {
            if col.len() < MIN_OBSERVATIONS {
                return Err(StatsError::InsufficientData {
                    dim: name.to_string(),
                    n: col.len(),
                });
            }
            if col.iter().any(|x| !x.is_finite()) {
                return Err(StatsError::NonFinite(name.to_string()));
            }
            col.sort_by(f64::total_cmp);
            let q01 = quantile_type7(col, 0.01);
            let q99 = quantile_type7(col, 0.99);
            // Ranges narrower than the widening are rounding noise around a
            // constant and would otherwise be blown up to ±1.
            if q99 - q01 < 2.0 * DEGENERATE_WIDENING {
                let c = q01 + (q99 - q01) / 2.0;
                log::warn!("{name} is constant at {c}; widening by ±{DEGENERATE_WIDENING}");
                widened.push(name.to_string());
                return Ok(DimStats {
                    q01: c - DEGENERATE_WIDENING,
                    q99: c + DEGENERATE_WIDENING,
                });
            }
            Ok(DimStats { q01, q99 })
        };

        let mut state = [DimStats::PINNED; STATE_DIM];
        for (i, col) in self.state.iter_mut().enumerate() {
            let s = reduce(STATE_DIM_NAMES[i], col)?;
            if i != STATE_GRIPPER {
                state[i] = s;
            }
        }
        let mut action = [DimStats::PINNED; ACTION_DIM];
        for (i, col) in self.action.iter_mut().enumerate() {
            let s = reduce(ACTION_DIM_NAMES[i], col)?;
            if i != ACTION_GRIPPER {
                action[i] = s;
            }
        }
        // Gripper dimensions are pinned regardless of the data.
        widened.retain(|n| {
            n != STATE_DIM_NAMES[STATE_GRIPPER] && n != ACTION_DIM_NAMES[ACTION_GRIPPER]
        });
        Ok(NormStats {
            state,
            action,
            n_state_samples: n_state,
            n_action_samples: n_action,
            widened,
        })
    }
}

pub fn compute_norm_stats<'a>(
    episodes: impl IntoIterator<Item = &'a Episode>,
) -> Result<NormStats, StatsError> {
    let mut acc = StatsAccumulator::new();
    for ep in episodes {
        acc.push_episode(ep);
    }
    acc.finish()
}

pub fn discretize_state(pose: &Pose, stats: &NormStats) -> [u8; STATE_DIM] {
    let normalized = stats.normalize_state(&pose.state_vector());
    normalized.map(discretize)
}

/// Space-separated bin labels, as they appear in prompts.
pub fn state_tokens_text(tokens: &[u8]) -> String {
    tokens
        .iter()
        .map(u8::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}
