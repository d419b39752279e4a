//! Two-action toy task and a momentum-SGD training loop.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FlowBatch, LossWeights, ToyDims, ToyModel};
use crate::geometry::{Frame, NetDelta, Vec3};
use crate::langact::vocab::{Vocab, EOS};
use crate::langact::{encode, QuantConfig};
use crate::rng::{keyed_rng, Purpose};

pub const MAX_PARAMS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub lambda: f64,
    pub horizon: usize,
    pub action_dim: usize,
    /// Euler steps used for the sample-error metric.
    pub sample_steps: usize,
    pub seed: u64,
    pub learning_rate: f64,
    /// Learning rate decays linearly from `learning_rate` to
    /// `learning_rate·final_lr_fraction` over the run.
    pub final_lr_fraction: f64,
    pub momentum: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub flow_hidden: usize,
    /// Magnitude of every action component, in metres.
    pub amplitude: f64,
    pub eval_noise: usize,
    /// Size of the fixed batch used for the initial and final flow loss.
    pub eval_batch: usize,
    pub log_every: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            lambda: 0.8,
            horizon: 4,
            action_dim: 2,
            sample_steps: 10,
            seed: 0,
            learning_rate: 0.02,
            final_lr_fraction: 0.05,
            momentum: 0.9,
            steps: 3000,
            batch_size: 64,
            hidden: 16,
            flow_hidden: 64,
            amplitude: 0.05,
            eval_noise: 8,
            eval_batch: 512,
            log_every: 50,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::InvalidConfig(msg.to_string()));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and non-negative");
        }
        if self.horizon == 0 || self.action_dim == 0 {
            return bad("horizon and action_dim must be positive");
        }
        if self.sample_steps == 0
            || self.batch_size == 0
            || self.eval_noise == 0
            || self.eval_batch == 0
        {
            return bad("sample_steps, batch_size, eval_noise and eval_batch must be positive");
        }
        if self.hidden == 0 || self.flow_hidden == 0 {
            return bad("hidden sizes must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return bad("final_lr_fraction must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return bad("amplitude must be positive");
        }
        let n = ToyModel::zeros(self.dims()).num_params();
        if n > MAX_PARAMS {
            return Err(TrainError::InvalidConfig(format!(
                "model has {n} parameters, limit is {MAX_PARAMS}"
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> ToyDims {
        ToyDims {
            cond: 2,
            hidden: self.hidden,
            vocab: Vocab::new().len(),
            action: self.horizon * self.action_dim,
            flow_hidden: self.flow_hidden,
        }
    }
}

/// Conditioning `[s, frame_flag]` with `s ∈ {−1, +1}`. The target chunk is
/// `s·amplitude` in every component and the language target is the encoded
/// translation `s·amplitude` along x ("move forward 5 cm" / "move backward 5 cm").
#[derive(Debug, Clone)]
pub struct ToyTask {
    pub amplitude: f64,
    pub action: usize,
    targets: [Vec<usize>; 2],
}

impl ToyTask {
    pub fn new(amplitude: f64, action: usize) -> Self {
        let vocab = Vocab::new();
        let target = |s: f64| {
            let mut delta = NetDelta::identity(Frame::Base);
            delta.translation = Vec3::new(s * amplitude, 0.0, 0.0);
            let text = encode(&delta, &QuantConfig::default()).to_string();
            let mut ids = vocab
                .tokenize(&text)
                .expect("encoded text is in the vocabulary");
            ids.push(EOS);
            ids
        };
        Self {
            amplitude,
            action,
            targets: [target(-1.0), target(1.0)],
        }
    }

    pub fn cond(s: f64, frame: Frame) -> Vec<f64> {
        vec![s, if frame == Frame::Base { 1.0 } else { 0.0 }]
    }

    pub fn chunk(&self, s: f64) -> Vec<f64> {
        vec![s * self.amplitude; self.action]
    }

    pub fn lang_target(&self, s: f64) -> &[usize] {
        &self.targets[usize::from(s > 0.0)]
    }

    pub fn batch(&self, rng: &mut impl Rng, size: usize) -> FlowBatch {
        let mut b = FlowBatch {
            cond: Vec::with_capacity(size),
            actions: Vec::with_capacity(size),
            noise: Vec::with_capacity(size),
            tau: Vec::with_capacity(size),
            lang_targets: Vec::with_capacity(size),
        };
        for _ in 0..size {
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let frame = if rng.random::<bool>() {
                Frame::Base
            } else {
                Frame::EndEffector
            };
            b.cond.push(Self::cond(s, frame));
            b.actions.push(self.chunk(s));
            b.noise.push(
                (0..self.action)
                    .map(|_| StandardNormal.sample(rng))
                    .collect(),
            );
            b.tau.push(rng.random::<f64>());
            b.lang_targets.push(self.lang_target(s).to_vec());
        }
        b
    }

    /// Mean L2 distance between Euler samples and the target chunk, over
    /// both signs, both frames, and `noise` draws each.
    pub fn sample_error(&self, model: &ToyModel, steps: usize, seed: u64, noise: usize) -> f64 {
        let mut rng = keyed_rng(seed, "toy-eval", 0, Purpose::Toy);
        let mut total = 0.0;
        let mut count = 0usize;
        for s in [-1.0, 1.0] {
            let target = self.chunk(s);
            for frame in [Frame::Base, Frame::EndEffector] {
                let cond = Self::cond(s, frame);
                for _ in 0..noise {
                    let z: Vec<f64> = (0..self.action)
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect();
                    let x = model.euler_sample(&z, &cond, steps);
                    total += x
                        .iter()
                        .zip(&target)
                        .map(|(x, a)| (x - a).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    count += 1;
                }
            }
        }
        total / count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub fm_loss: f64,
    pub ce_loss: f64,
    pub combined: f64,
    pub sample_err: f64,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid toy config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at step {step}; batch: {batch}")]
    NonFinite { step: usize, batch: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub metrics: Vec<MetricsRecord>,
    /// Flow loss on the fixed evaluation batch before and after training.
    pub initial_fm: f64,
    pub final_fm: f64,
    pub initial_sample_err: f64,
    pub final_sample_err: f64,
}

/// Trains on the toy task. `on_metric` sees each logged record as it is made.
///
/// Logged losses are those of the current training batch before the update.
/// A last record after the final update reports losses on the fixed
/// evaluation batch.
pub fn train_toy(
    config: &ToyConfig,
    mut on_metric: impl FnMut(&MetricsRecord),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let dims = config.dims();
    let task = ToyTask::new(config.amplitude, dims.action);
    let mut model = ToyModel::new(
        dims,
        &mut keyed_rng(config.seed, "toy-init", 0, Purpose::Toy),
    );
    let mut velocity = vec![0.0; model.num_params()];
    let weights = LossWeights::combined(config.lambda);
    let eval =
        |m: &ToyModel| task.sample_error(m, config.sample_steps, config.seed, config.eval_noise);
    let eval_batch = task.batch(
        &mut keyed_rng(config.seed, "toy-eval-batch", 0, Purpose::Toy),
        config.eval_batch,
    );

    let mut metrics = Vec::new();
    let initial_fm = model.fm_loss(&eval_batch);
    let initial_sample_err = eval(&model);
    let non_finite = |step, batch: &FlowBatch| TrainError::NonFinite {
        step,
        batch: serde_json::to_string(batch).unwrap_or_default(),
    };

    for step in 0..config.steps {
        let batch = task.batch(
            &mut keyed_rng(config.seed, "toy-batch", step as u64, Purpose::Toy),
            config.batch_size,
        );
        let (losses, grad) = model.backward(&batch, weights);
        if !losses.combined.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(non_finite(step, &batch));
        }
        if step % config.log_every.max(1) == 0 {
            let record = MetricsRecord {
                step,
                fm_loss: losses.fm,
                ce_loss: losses.ce,
                combined: losses.combined,
                sample_err: if step == 0 {
                    initial_sample_err
                } else {
                    eval(&model)
                },
            };
            on_metric(&record);
            metrics.push(record);
        }
        let progress = step as f64 / config.steps as f64;
        let lr = config.learning_rate * (1.0 - progress * (1.0 - config.final_lr_fraction));
        for ((p, v), g) in model.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
            *v = config.momentum * *v - lr * g;
            *p += *v;
        }
        if !model.all_finite() {
            return Err(non_finite(step, &batch));
        }
    }

    let losses = model.losses(&eval_batch, config.lambda);
    if !losses.combined.is_finite() {
        return Err(non_finite(config.steps, &eval_batch));
    }
    let final_sample_err = eval(&model);
    let record = MetricsRecord {
        step: config.steps,
        fm_loss: losses.fm,
        ce_loss: losses.ce,
        combined: losses.combined,
        sample_err: final_sample_err,
    };
    on_metric(&record);
    metrics.push(record);

    Ok(TrainOutcome {
        model,
        metrics,
        initial_fm,
        final_fm: losses.fm,
        initial_sample_err,
        final_sample_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_targets() {
        let task = ToyTask::new(0.05, 8);
        let vocab = Vocab::new();
        let text = |s| vocab.detokenize(&task.lang_target(s)[..task.lang_target(s).len() - 1]);
        assert_eq!(text(1.0), "move forward 5 cm");
        assert_eq!(text(-1.0), "move backward 5 cm");
        assert_eq!(task.chunk(-1.0), vec![-0.05; 8]);
    }

    #[test]
    fn default_config_is_small() {
        let c = ToyConfig::default();
        c.validate().unwrap();
        assert!(ToyModel::zeros(c.dims()).num_params() <= MAX_PARAMS);
    }

    #[test]
    fn rejects_bad_config() {
        let c = ToyConfig {
            momentum: 1.0,
            ..ToyConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ToyConfig {
            hidden: 400,
            ..ToyConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_from_toml_like_json() {
        let c: ToyConfig = serde_json::from_str(r#"{"lambda": 0.0, "steps": 3}"#).unwrap();
        assert_eq!(c.lambda, 0.0);
        assert_eq!(c.horizon, 4);
        assert!(serde_json::from_str::<ToyConfig>(r#"{"lamda": 1}"#).is_err());
    }
}
