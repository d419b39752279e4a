//! WebAssembly bindings for the static demo page in `www/`.

use lap_core::flowtoy::{euler_path, train_toy, ToyConfig, ToyModel, ToyTask};
use lap_core::geometry::Frame;
use lap_core::langact::{decode, encode_flagged, DeltaRecord, LanguageAction, QuantConfig};
use lap_core::maskgen::{build_mask, TokenLayout};
use lap_core::rng::{keyed_rng, Purpose};
use lap_core::to_canonical_json;
use rand_distr::{Distribution, StandardNormal};
use wasm_bindgen::prelude::*;

const MAX_MASK_TOKENS: usize = 256;

fn frame_from(name: &str) -> Result<Frame, String> {
    match name {
        "base" => Ok(Frame::Base),
        "end_effector" => Ok(Frame::EndEffector),
        _ => Err(format!("unknown frame {name:?}")),
    }
}

/// Encodes one delta record (JSON) as a language-action string.
pub fn encode_record(json: &str) -> Result<String, String> {
    let record: DeltaRecord = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let delta = record.to_delta().map_err(|e| e.to_string())?;
    Ok(encode_flagged(&delta, &QuantConfig::default())
        .action
        .to_string())
}

/// Parses a language-action string into a delta record (JSON).
pub fn decode_text(text: &str, frame: &str) -> Result<String, String> {
    let action =
        LanguageAction::parse(text.trim(), frame_from(frame)?).map_err(|e| e.to_string())?;
    Ok(to_canonical_json(
        &DeltaRecord::from_delta(&decode(&action)).euler_only(),
    ))
}

#[wasm_bindgen]
pub fn encode_delta(json: &str) -> Result<String, JsError> {
    encode_record(json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn decode_action(text: &str, frame: &str) -> Result<String, JsError> {
    decode_text(text, frame).map_err(|e| JsError::new(&e))
}

/// Attention mask as rows of `0`/`1`.
#[wasm_bindgen]
pub fn mask_grid(prefix: usize, lang: usize, act: usize) -> Result<String, JsError> {
    let layout = TokenLayout::new(prefix, lang, act);
    if layout.total() == 0 || layout.total() > MAX_MASK_TOKENS {
        return Err(JsError::new(&format!(
            "total tokens must be in 1..={MAX_MASK_TOKENS}"
        )));
    }
    Ok(build_mask(&layout).to_text_grid())
}

/// A trained toy model whose sampler paths can be drawn.
#[wasm_bindgen]
pub struct ToyDemo {
    model: ToyModel,
    seed: u64,
    metrics: String,
}

#[wasm_bindgen]
impl ToyDemo {
    /// Trains with the default config except for `steps`, `lambda` and `seed`.
    #[wasm_bindgen(constructor)]
    pub fn new(steps: usize, lambda: f64, seed: u64) -> Result<ToyDemo, JsError> {
        let config = ToyConfig {
            steps,
            lambda,
            seed,
            log_every: (steps / 20).max(1),
            ..ToyConfig::default()
        };
        let mut lines = Vec::new();
        let outcome = train_toy(&config, |m| lines.push(to_canonical_json(m)))
            .map_err(|e| JsError::new(&e.to_string()))?;
        Ok(ToyDemo {
            model: outcome.model,
            seed,
            metrics: lines.join("\n"),
        })
    }

    /// Metrics trace as JSON lines.
    pub fn metrics(&self) -> String {
        self.metrics.clone()
    }

    /// JSON array of `n` sampler paths for direction `s` (sign taken) and
    /// frame flag; each path lists the state after every Euler step.
    pub fn paths(&self, s: f64, base_frame: bool, n: usize, steps: usize) -> String {
        let dims = self.model.dims();
        let s = if s < 0.0 { -1.0 } else { 1.0 };
        let frame = if base_frame {
            Frame::Base
        } else {
            Frame::EndEffector
        };
        let h = self.model.features(&ToyTask::cond(s, frame));
        let mut rng = keyed_rng(self.seed, "web-demo", 0, Purpose::Toy);
        let paths: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..dims.action)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                euler_path(&z, steps, |x, tau| self.model.velocity(&h, x, tau))
            })
            .collect();
        serde_json::to_string(&paths).expect("finite floats")
    }
}
