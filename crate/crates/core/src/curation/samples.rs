//! Prompt rendering and sample generation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stats::{discretize_state, state_tokens_text, NormStats, ACTION_DIM};
use super::Episode;
use crate::geometry::{net_delta_from_poses, Frame};
use crate::langact::{encode_flagged, QuantConfig};
use crate::rng::{keyed_rng, Purpose};

/// Question phrasings for motion-prediction VQA. `{frame}` is replaced by
/// "robot base frame" or "end-effector frame".
pub const VQA_QUESTIONS: [&str; 5] = [
    "What movement did the robot make from the first image to the second in the {frame}?",
    "How did the robot move between the first image and the second in the {frame}?",
    "Describe the robot's motion from the first image to the second in the {frame}.",
    "What action takes the robot from the first image to the second, expressed in the {frame}?",
    "Which language-action describes the change between the two images in the {frame}?",
];

fn prompt_frame_name(frame: Frame) -> &'static str {
    match frame {
        Frame::Base => "base frame",
        Frame::EndEffector => "end-effector frame",
    }
}

fn question_frame_name(frame: Frame) -> &'static str {
    match frame {
        Frame::Base => "robot base frame",
        Frame::EndEffector => "end-effector frame",
    }
}

/// `Task: {instruction}, predict the robot's action in the {frame}; State: {tokens}; Answer:`
pub fn render_prompt(instruction: &str, frame: Frame, state_tokens: &str) -> String {
    debug_assert!(!instruction.is_empty());
    format!(
        "Task: {instruction}, predict the robot's action in the {}; State: {state_tokens}; Answer:",
        prompt_frame_name(frame)
    )
}

pub fn render_vqa_prompt(question: &str, state_tokens: &str) -> String {
    format!("Task: {question}; State: {state_tokens}; Answer:")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub horizon: usize,
    pub frame_prob: f64,
    pub seed: u64,
    pub quant: QuantConfig,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            horizon: crate::DEFAULT_HORIZON,
            frame_prob: 0.5,
            seed: 0,
            quant: QuantConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub episode_id: String,
    pub t: u64,
    pub horizon: usize,
    /// Net rotation fell in the gimbal band.
    pub gimbal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub prompt: String,
    pub target: String,
    /// H rows of normalized per-step actions.
    pub chunk: Vec<[f64; ACTION_DIM]>,
    pub frame: Frame,
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaMeta {
    pub episode_id: String,
    pub t: u64,
    pub t_end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaSample {
    pub prompt: String,
    pub question: String,
    pub state_tokens: String,
    pub answer: String,
    pub frame: Frame,
    pub meta: VqaMeta,
}

/// Reference frame for the sample starting at step index `t`.
pub fn sample_frame(seed: u64, episode_id: &str, t: u64, frame_prob: f64) -> Frame {
    let mut rng = keyed_rng(seed, episode_id, t, Purpose::Frame);
    if rng.random::<f64>() < frame_prob {
        Frame::Base
    } else {
        Frame::EndEffector
    }
}

/// Start indices that have a full chunk of `horizon` steps after them.
fn starts(episode: &Episode, horizon: usize) -> std::ops::Range<usize> {
    0..episode.len().saturating_sub(horizon.max(1))
}

pub fn make_samples(
    episode: &Episode,
    stats: &NormStats,
    config: &SampleConfig,
) -> Vec<TrainingSample> {
    let h = config.horizon.max(1);
    starts(episode, h)
        .map(|t| {
            let frame = sample_frame(
                config.seed,
                &episode.episode_id,
                t as u64,
                config.frame_prob,
            );
            let start = &episode.steps[t].pose;
            let end = &episode.steps[t + h].pose;
            let encoded = encode_flagged(&net_delta_from_poses(start, end, frame), &config.quant);
            let tokens = state_tokens_text(&discretize_state(start, stats));
            let chunk = (t..t + h)
                .map(|k| stats.normalize_action(&episode.action_vector(k)))
                .collect();
            TrainingSample {
                prompt: render_prompt(&episode.instruction, frame, &tokens),
                target: encoded.action.to_string(),
                chunk,
                frame,
                meta: SampleMeta {
                    episode_id: episode.episode_id.clone(),
                    t: t as u64,
                    horizon: h,
                    gimbal: encoded.gimbal,
                },
            }
        })
        .collect()
}

/// Motion-prediction pairs between steps `t` and `t + H`. The frame is drawn
/// exactly as in [`make_samples`], so both streams agree on the answer.
pub fn make_vqa(episode: &Episode, stats: &NormStats, config: &SampleConfig) -> Vec<VqaSample> {
    let h = config.horizon.max(1);
    starts(episode, h)
        .map(|t| {
            let frame = sample_frame(
                config.seed,
                &episode.episode_id,
                t as u64,
                config.frame_prob,
            );
            let mut rng = keyed_rng(
                config.seed,
                &episode.episode_id,
                t as u64,
                Purpose::VqaQuestion,
            );
            let template = VQA_QUESTIONS[rng.random_range(0..VQA_QUESTIONS.len())];
            let question = template.replace("{frame}", question_frame_name(frame));
            let start = &episode.steps[t].pose;
            let end = &episode.steps[t + h].pose;
            let answer = encode_flagged(&net_delta_from_poses(start, end, frame), &config.quant)
                .action
                .to_string();
            let state_tokens = state_tokens_text(&discretize_state(start, stats));
            VqaSample {
                prompt: render_vqa_prompt(&question, &state_tokens),
                question,
                state_tokens,
                answer,
                frame,
                meta: VqaMeta {
                    episode_id: episode.episode_id.clone(),
                    t: t as u64,
                    t_end: (t + h) as u64,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "Task: Put the marker into the cup, predict the robot's action in the base frame; State: 20 121 34 144 112 45 235 44 21 255; Answer:";

    #[test]
    fn prompt_matches_reference() {
        let p = render_prompt(
            "Put the marker into the cup",
            Frame::Base,
            "20 121 34 144 112 45 235 44 21 255",
        );
        assert_eq!(p, EXAMPLE);
    }

    #[test]
    fn end_effector_prompt() {
        let p = render_prompt("Open the drawer", Frame::EndEffector, "1 2 3");
        assert_eq!(
            p,
            "Task: Open the drawer, predict the robot's action in the end-effector frame; State: 1 2 3; Answer:"
        );
    }

    #[test]
    fn vqa_prompt_shape() {
        let q = VQA_QUESTIONS[0].replace("{frame}", question_frame_name(Frame::Base));
        assert_eq!(
            q,
            "What movement did the robot make from the first image to the second in the robot base frame?"
        );
        assert_eq!(
            render_vqa_prompt(&q, "5 6"),
            format!("Task: {q}; State: 5 6; Answer:")
        );
    }

    #[test]
    fn frame_probability_extremes() {
        for t in 0..50 {
            assert_eq!(sample_frame(3, "ep", t, 1.0), Frame::Base);
            assert_eq!(sample_frame(3, "ep", t, 0.0), Frame::EndEffector);
        }
    }
}
