//! Removal of idle stretches inside episodes.

use serde::{Deserialize, Serialize};

use super::{DropReason, Episode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdleConfig {
    pub threshold_cm: f64,
    pub threshold_deg: f64,
    pub min_consecutive: usize,
}

impl Default for IdleConfig {
    fn default() -> Self {
        Self {
            threshold_cm: 0.1,
            threshold_deg: 0.1,
            min_consecutive: 5,
        }
    }
}

impl IdleConfig {
    /// Whether step `k` of `ep` moves less than both thresholds.
    /// The final step has no outgoing motion and never counts as idle.
    pub fn is_idle(&self, ep: &Episode, k: usize) -> bool {
        if k + 1 >= ep.len() {
            return false;
        }
        let (t, r) = ep.step_delta(k);
        t.norm() * 100.0 < self.threshold_cm && r.angle().to_degrees() < self.threshold_deg
    }
}

/// Drops every maximal run of at least `min_consecutive` idle steps and
/// renumbers `t` from zero. Returns the filtered episode and the number of
/// removed steps.
///
/// A removed step's pose coincides (within the threshold) with the pose that
/// follows the run, so the surviving deltas stay consistent.
pub fn filter_idle(episode: &Episode, config: &IdleConfig) -> Result<(Episode, usize), DropReason> {
    let n = episode.len();
    let idle: Vec<bool> = (0..n).map(|k| config.is_idle(episode, k)).collect();

    let mut keep = vec![true; n];
    let mut k = 0;
    while k < n {
        if !idle[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && idle[k] {
            k += 1;
        }
        if k - start >= config.min_consecutive.max(1) {
            keep[start..k].iter_mut().for_each(|x| *x = false);
        }
    }

    let mut steps: Vec<_> = episode
        .steps
        .iter()
        .zip(&keep)
        .filter(|(_, &kept)| kept)
        .map(|(s, _)| s.clone())
        .collect();
    let removed = n - steps.len();
    if steps.len() < 2 {
        return Err(DropReason::AllIdle);
    }
    for (i, s) in steps.iter_mut().enumerate() {
        s.t = i as u64;
    }
    Ok((
        Episode {
            episode_id: episode.episode_id.clone(),
            instruction: episode.instruction.clone(),
            steps,
        },
        removed,
    ))
}
