//! `selfcheck`: fast consistency checks over the mask builder, the codec and
//! the prompt template.

use anyhow::Result;
use lap_core::curation::render_prompt;
use lap_core::geometry::{euler_to_matrix, EulerXYZ, Frame, GripperEvent, NetDelta, Vec3};
use lap_core::langact::{decode, encode, LanguageAction, QuantConfig};
use lap_core::maskgen::{build_mask, check_mask, AttentionMask, MaskReport, TokenLayout};
use lap_core::rng::{keyed_rng, Purpose};
use rand::Rng;
use serde::Serialize;

use crate::io;
use crate::InvariantViolation;

const MAX_SEGMENT: usize = 8;

type Check = Box<dyn Fn() -> Result<usize, String>>;

#[derive(Serialize)]
struct CheckEvent {
    event: &'static str,
    check: &'static str,
    cases: usize,
}

/// Expected visibility written out per segment pair.
fn visible(layout: &TokenLayout, q: usize, k: usize) -> bool {
    let lang = layout.n_prefix..layout.n_prefix + layout.n_lang;
    if k < layout.n_prefix {
        return true;
    }
    if q < layout.n_prefix {
        return false;
    }
    if lang.contains(&q) {
        return lang.contains(&k) && k <= q;
    }
    k >= lang.end
}

fn check_masks() -> Result<usize, String> {
    let mut cases = 0;
    for p in 0..=MAX_SEGMENT {
        for l in 0..=MAX_SEGMENT {
            for a in 0..=MAX_SEGMENT {
                let layout = TokenLayout::new(p, l, a);
                let mask = build_mask(&layout);
                let n = layout.total();
                for q in 0..n {
                    for k in 0..n {
                        if mask.get(q, k) != visible(&layout, q, k) {
                            return Err(format!("mask ({p},{l},{a}) wrong at ({q},{k})"));
                        }
                    }
                }
                if check_mask(&mask, &layout) != MaskReport::Ok {
                    return Err(format!("mask ({p},{l},{a}) fails its own check"));
                }
                if AttentionMask::from_packed_bits(n, &mask.to_packed_bits()).as_ref()
                    != Some(&mask)
                {
                    return Err(format!("mask ({p},{l},{a}) does not survive bit packing"));
                }
                cases += 1;
            }
        }
    }
    Ok(cases)
}

fn check_codec(seed: u64, samples: usize) -> Result<usize, String> {
    let quant = QuantConfig::default();
    let mut rng = keyed_rng(seed, "selfcheck-codec", 0, Purpose::SelfCheck);
    let events = [GripperEvent::None, GripperEvent::Open, GripperEvent::Close];
    for i in 0..samples {
        let frame = if rng.random_bool(0.5) {
            Frame::Base
        } else {
            Frame::EndEffector
        };
        let euler = EulerXYZ::new(
            rng.random_range(-3.1..3.1),
            rng.random_range(-1.5..1.5),
            rng.random_range(-3.1..3.1),
        );
        let delta = NetDelta {
            translation: Vec3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ),
            rotation: euler_to_matrix(&euler).map_err(|e| format!("sample {i}: {e}"))?,
            frame,
            gripper_event: events[rng.random_range(0..events.len())],
        };
        let action = encode(&delta, &quant);
        let text = action.to_string();
        let parsed = LanguageAction::parse(&text, frame)
            .map_err(|e| format!("sample {i}: {text:?}: {e}"))?;
        if parsed != action {
            return Err(format!("sample {i}: {text:?} parses to a different action"));
        }
        let decoded = decode(&action);
        let again = encode(&decoded, &quant);
        if again != action {
            return Err(format!("sample {i}: {text:?} re-encodes as {again:?}"));
        }
        let err = (decoded.translation - delta.translation).amax();
        if err > 0.005 + 1e-9 {
            return Err(format!("sample {i}: translation off by {err} m"));
        }
        if decoded.gripper_event != delta.gripper_event {
            return Err(format!("sample {i}: gripper event lost"));
        }
    }
    Ok(samples)
}

fn check_prompts() -> Result<usize, String> {
    let cases = [
        (Frame::Base, "Task: pick up the cup, predict the robot's action in the base frame; State: 1 2; Answer:"),
        (
            Frame::EndEffector,
            "Task: pick up the cup, predict the robot's action in the end-effector frame; State: 1 2; Answer:",
        ),
    ];
    for (frame, expected) in cases {
        let got = render_prompt("pick up the cup", frame, "1 2");
        if got != expected {
            return Err(format!("prompt for {frame}: {got:?}"));
        }
    }
    Ok(cases.len())
}

pub fn run(seed: u64, samples: usize) -> Result<()> {
    let checks: [(&'static str, Check); 3] = [
        ("mask", Box::new(check_masks)),
        ("codec", Box::new(move || check_codec(seed, samples))),
        ("prompt", Box::new(check_prompts)),
    ];
    for (check, f) in checks {
        let cases = f().map_err(|e| InvariantViolation(format!("{check}: {e}")))?;
        io::report(&CheckEvent {
            event: "selfcheck",
            check,
            cases,
        });
    }
    Ok(())
}
