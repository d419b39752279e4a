//! `encode` and `decode`: line-by-line conversion between delta records and
//! language-action strings.

use std::io::BufRead;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use lap_core::geometry::Frame;
use lap_core::langact::{
    decode as decode_action, encode_flagged, DeltaRecord, LanguageAction, QuantConfig,
};
use lap_core::to_canonical_json;

use crate::io::{open_input, Output};

fn for_each_line(input: Option<&Path>, mut f: impl FnMut(usize, &str) -> Result<()>) -> Result<()> {
    let reader = open_input(input)?;
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("line {}: read failed", i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        f(i + 1, line.trim_end_matches('\r'))?;
    }
    Ok(())
}

pub fn encode(
    input: Option<&Path>,
    output: Option<&Path>,
    cm_step: u32,
    degree_step: u32,
) -> Result<()> {
    let quant = QuantConfig {
        cm_step,
        degree_step,
    };
    let mut out = Output::create(output)?;
    for_each_line(input, |n, line| {
        let record: DeltaRecord =
            serde_json::from_str(line).map_err(|e| anyhow!("line {n}: {e}"))?;
        let delta = record.to_delta().map_err(|e| anyhow!("line {n}: {e}"))?;
        let encoded = encode_flagged(&delta, &quant);
        if encoded.gimbal {
            log::warn!("line {n}: pitch within the gimbal band; roll folded into yaw");
        }
        out.write_line(&encoded.action.to_string())
    })?;
    out.commit()
}

pub fn decode(input: Option<&Path>, output: Option<&Path>, frame: Frame) -> Result<()> {
    let mut out = Output::create(output)?;
    for_each_line(input, |n, line| {
        let action =
            LanguageAction::parse(line.trim(), frame).map_err(|e| anyhow!("line {n}: {e}"))?;
        let record = DeltaRecord::from_delta(&decode_action(&action)).euler_only();
        out.write_line(&to_canonical_json(&record))
    })?;
    out.commit()
}
