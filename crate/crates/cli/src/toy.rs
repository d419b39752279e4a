//! `train-toy`: trains the toy flow-matching model and writes its metrics
//! trace as JSON lines.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use lap_core::flowtoy::{train_toy, ToyConfig, TrainError};
use lap_core::to_canonical_json;
use serde::Serialize;

use crate::io::{self, Output};
use crate::InvariantViolation;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// TOML file with toy config keys; flags below override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Weight of the language loss.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Euler steps for the sample-error metric.
    #[arg(long)]
    sample_steps: Option<usize>,
    /// Metrics destination, "-" or omitted for stdout.
    #[arg(short, long, value_name = "FILE")]
    output: Option<PathBuf>,
}

impl TrainArgs {
    fn config(&self) -> Result<ToyConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("{}: invalid toy config", path.display()))?
            }
            None => ToyConfig::default(),
        };
        if let Some(v) = self.lambda {
            config.lambda = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.horizon {
            config.horizon = v;
        }
        if let Some(v) = self.steps {
            config.steps = v;
        }
        if let Some(v) = self.sample_steps {
            config.sample_steps = v;
        }
        Ok(config)
    }
}

#[derive(Serialize)]
struct Summary {
    event: &'static str,
    params: usize,
    initial_fm: f64,
    final_fm: f64,
    initial_sample_err: f64,
    final_sample_err: f64,
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let config = args.config()?;
    let mut out = Output::create(args.output.as_deref())?;
    let mut write_err = None;
    let result = train_toy(&config, |m| {
        if write_err.is_none() {
            if let Err(e) = out.write_line(&to_canonical_json(m)) {
                write_err = Some(e);
            }
        }
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    let outcome = match result {
        Ok(o) => o,
        Err(e @ TrainError::InvalidConfig(_)) => return Err(e.into()),
        Err(e @ TrainError::NonFinite { .. }) => {
            return Err(InvariantViolation(e.to_string()).into())
        }
    };
    io::report(&Summary {
        event: "summary",
        params: outcome.model.num_params(),
        initial_fm: outcome.initial_fm,
        final_fm: outcome.final_fm,
        initial_sample_err: outcome.initial_sample_err,
        final_sample_err: outcome.final_sample_err,
    });
    out.commit()
}
