//! Line-delimited episode records.
//!
//! One JSON object per line:
//!
//! ```json
//! {"episode_id": "ep0", "instruction": "Put the marker into the cup",
//!  "rotation_format": "quat_xyzw", "action_frame": "base",
//!  "steps": [{"t": 0, "pos": [0.4, 0.0, 0.3], "rot": [0, 0, 0, 1], "gripper": 1,
//!             "action": {"translation": [0.01, 0, 0], "rotation": [0, 0, 0, 1]}}]}
//! ```
//!
//! `action` is optional per step; its rotation uses the record's
//! `rotation_format`. `action_frame` declares whether recorded actions are
//! base-frame or end-effector-frame deltas and defaults to `base`.

use std::io::BufRead;

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DropReason, Episode, Step, StepAction};
use crate::geometry::{
    euler_to_matrix, step_delta, EulerXYZ, Frame, GripperState, Pose, RotationMatrix, Vec3,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationFormat {
    QuatXyzw,
    QuatWxyz,
    EulerXyzExtrinsic,
}

#[derive(Debug, Deserialize)]
struct EpisodeRecord {
    episode_id: String,
    #[serde(default)]
    instruction: Option<String>,
    rotation_format: RotationFormat,
    #[serde(default)]
    action_frame: Option<Frame>,
    steps: Vec<StepRecord>,
}

#[derive(Debug, Deserialize)]
struct StepRecord {
    t: u64,
    pos: [f64; 3],
    rot: Vec<f64>,
    gripper: f64,
    #[serde(default)]
    action: Option<ActionRecord>,
}

#[derive(Debug, Deserialize)]
struct ActionRecord {
    translation: [f64; 3],
    rotation: Vec<f64>,
}

/// Accepted quaternion norm range before normalization.
pub const QUAT_NORM_RANGE: (f64, f64) = (0.9, 1.1);

/// Strict-mode tolerances between recorded actions and pose differences.
pub const STRICT_TRANSLATION_TOL_M: f64 = 0.01;
pub const STRICT_ROTATION_TOL_DEG: f64 = 2.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Check recorded actions against pose differences.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestErrorKind {
    Io(String),
    Malformed(String),
}

impl std::fmt::Display for IngestErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IngestErrorKind::Io(m) => write!(f, "read failed: {m}"),
            IngestErrorKind::Malformed(m) => write!(f, "malformed record: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct IngestError {
    pub line: usize,
    pub kind: IngestErrorKind,
}

/// One ingested record.
#[derive(Debug, Clone, PartialEq)]
pub enum Ingested {
    Episode(Episode),
    Dropped {
        line: usize,
        episode_id: String,
        reason: DropReason,
    },
}

/// Streams episodes from line-delimited JSON. Blank lines are skipped.
pub struct EpisodeReader<R> {
    input: R,
    options: IngestOptions,
    line: usize,
    buf: String,
}

impl<R: BufRead> EpisodeReader<R> {
    pub fn new(input: R, options: IngestOptions) -> Self {
        Self {
            input,
            options,
            line: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for EpisodeReader<R> {
    type Item = Result<Ingested, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line += 1;
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return Some(Err(IngestError {
                        line: self.line,
                        kind: IngestErrorKind::Io(e.to_string()),
                    }))
                }
            }
            let text = self.buf.trim_end_matches(['\n', '\r']);
            if text.trim().is_empty() {
                continue;
            }
            return Some(parse_line(text, self.line, &self.options));
        }
    }
}

pub fn parse_line(
    text: &str,
    line: usize,
    options: &IngestOptions,
) -> Result<Ingested, IngestError> {
    let record: EpisodeRecord = serde_json::from_str(text).map_err(|e| IngestError {
        line,
        kind: IngestErrorKind::Malformed(e.to_string()),
    })?;
    let episode_id = record.episode_id.clone();
    Ok(match convert(record, options) {
        Ok(episode) => Ingested::Episode(episode),
        Err(reason) => Ingested::Dropped {
            line,
            episode_id,
            reason,
        },
    })
}

fn rotation(values: &[f64], format: RotationFormat) -> Result<RotationMatrix, DropReason> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DropReason::NonFinite);
    }
    let q = match (format, values) {
        (RotationFormat::QuatXyzw, &[x, y, z, w]) => Quaternion::new(w, x, y, z),
        (RotationFormat::QuatWxyz, &[w, x, y, z]) => Quaternion::new(w, x, y, z),
        (RotationFormat::EulerXyzExtrinsic, &[roll, pitch, yaw]) => {
            return euler_to_matrix(&EulerXYZ::new(roll, pitch, yaw))
                .map_err(|_| DropReason::NonFinite);
        }
        _ => return Err(DropReason::BadRotation),
    };
    let norm = q.norm();
    if !(QUAT_NORM_RANGE.0..=QUAT_NORM_RANGE.1).contains(&norm) {
        return Err(DropReason::BadRotation);
    }
    let m = UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .into_inner();
    RotationMatrix::try_from_matrix(m).map_err(|_| DropReason::BadRotation)
}

fn convert(record: EpisodeRecord, options: &IngestOptions) -> Result<Episode, DropReason> {
    let instruction = record.instruction.unwrap_or_default();
    if instruction.trim().is_empty() {
        return Err(DropReason::NoInstruction);
    }
    if record.steps.len() < 2 {
        return Err(DropReason::InvalidSteps);
    }
    let action_frame = record.action_frame.unwrap_or(Frame::Base);

    let mut steps: Vec<Step> = Vec::with_capacity(record.steps.len());
    for s in &record.steps {
        if let Some(prev) = steps.last() {
            if s.t <= prev.t {
                return Err(DropReason::InvalidSteps);
            }
        }
        if s.pos.iter().any(|v| !v.is_finite()) {
            return Err(DropReason::NonFinite);
        }
        let orientation = rotation(&s.rot, record.rotation_format)?;
        let gripper = GripperState::from_value(s.gripper).ok_or(DropReason::BadGripper)?;
        let pose = Pose::new(Vec3::from(s.pos), orientation, gripper);
        let action = match &s.action {
            None => None,
            Some(a) => {
                if a.translation.iter().any(|v| !v.is_finite()) {
                    return Err(DropReason::NonFinite);
                }
                let t = Vec3::from(a.translation);
                let r = rotation(&a.rotation, record.rotation_format)?;
                Some(match action_frame {
                    Frame::Base => StepAction {
                        translation: t,
                        rotation: r,
                    },
                    // Tool-frame delta applied at this pose, re-expressed in the base frame.
                    Frame::EndEffector => {
                        let rs = pose.orientation;
                        StepAction {
                            translation: rs.rotate(&t),
                            rotation: rs * r * rs.transpose(),
                        }
                    }
                })
            }
        };
        steps.push(Step {
            t: s.t,
            pose,
            action,
        });
    }

    if options.strict {
        check_actions(&steps)?;
    }

    Ok(Episode {
        episode_id: record.episode_id,
        instruction,
        steps,
    })
}

fn check_actions(steps: &[Step]) -> Result<(), DropReason> {
    for pair in steps.windows(2) {
        let Some(action) = pair[0].action else {
            continue;
        };
        let (t, r) = step_delta(&pair[0].pose, &pair[1].pose);
        let dt = (action.translation - t).norm();
        let dr = (action.rotation * r.transpose()).angle().to_degrees();
        if dt > STRICT_TRANSLATION_TOL_M || dr > STRICT_ROTATION_TOL_DEG {
            return Err(DropReason::ActionMismatch);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STEPS: &str = r#"{"episode_id":"ep0","instruction":"pick up the cup","rotation_format":"quat_xyzw","steps":[{"t":0,"pos":[0,0,0],"rot":[0,0,0,1],"gripper":1},{"t":1,"pos":[0.05,0,0],"rot":[0,0,0,1],"gripper":0}]}"#;

    fn ingest(text: &str, strict: bool) -> Vec<Result<Ingested, IngestError>> {
        EpisodeReader::new(text.as_bytes(), IngestOptions { strict }).collect()
    }

    fn dropped_reason(item: &Result<Ingested, IngestError>) -> DropReason {
        match item {
            Ok(Ingested::Dropped { reason, .. }) => *reason,
            other => panic!("expected drop, got {other:?}"),
        }
    }

    #[test]
    fn valid_episode() {
        let items = ingest(TWO_STEPS, false);
        assert_eq!(items.len(), 1);
        let Ok(Ingested::Episode(ep)) = &items[0] else {
            panic!()
        };
        assert_eq!(ep.episode_id, "ep0");
        assert_eq!(ep.steps.len(), 2);
        assert_eq!(ep.steps[1].pose.gripper, GripperState::Closed);
    }

    #[test]
    fn empty_instruction_dropped() {
        let text = TWO_STEPS.replace("pick up the cup", "");
        assert_eq!(
            dropped_reason(&ingest(&text, false)[0]),
            DropReason::NoInstruction
        );
        let missing = TWO_STEPS.replace(r#""instruction":"pick up the cup","#, "");
        assert_eq!(
            dropped_reason(&ingest(&missing, false)[0]),
            DropReason::NoInstruction
        );
    }

    #[test]
    fn unnormalized_quaternion_rejected() {
        let text = TWO_STEPS.replacen("[0,0,0,1]", "[2,0,0,0]", 1);
        assert_eq!(
            dropped_reason(&ingest(&text, false)[0]),
            DropReason::BadRotation
        );
    }

    #[test]
    fn slightly_off_quaternion_is_normalized() {
        let text = TWO_STEPS.replacen("[0,0,0,1]", "[0,0,0,1.05]", 1);
        let Ok(Ingested::Episode(ep)) = &ingest(&text, false)[0] else {
            panic!()
        };
        assert!(ep.steps[0].pose.orientation.is_valid(1e-12));
    }

    #[test]
    fn wxyz_and_euler_formats() {
        let wxyz = TWO_STEPS
            .replace("quat_xyzw", "quat_wxyz")
            .replace("[0,0,0,1]", "[0.7071067811865476,0,0,0.7071067811865476]");
        let euler = TWO_STEPS
            .replace("quat_xyzw", "euler_xyz_extrinsic")
            .replace("[0,0,0,1]", "[0,0,1.5707963267948966]");
        let get = |t: &str| match &ingest(t, false)[0] {
            Ok(Ingested::Episode(ep)) => ep.steps[0].pose.orientation,
            other => panic!("{other:?}"),
        };
        let a = get(&wxyz);
        let b = get(&euler);
        assert!(a.distance(&b) < 1e-12);
        assert!((a.rotate(&Vec3::x()) - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{TWO_STEPS}\n\n{{not json\n");
        let items = ingest(&text, false);
        assert!(items[0].is_ok());
        let err = items[1].as_ref().unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.to_string().starts_with("line 3:"));
    }

    #[test]
    fn non_increasing_steps_rejected() {
        let text = TWO_STEPS.replace(r#""t":1"#, r#""t":0"#);
        assert_eq!(
            dropped_reason(&ingest(&text, false)[0]),
            DropReason::InvalidSteps
        );
    }

    #[test]
    fn bad_gripper_rejected() {
        let text = TWO_STEPS.replace(r#""gripper":0"#, r#""gripper":0.5"#);
        assert_eq!(
            dropped_reason(&ingest(&text, false)[0]),
            DropReason::BadGripper
        );
    }

    #[test]
    fn strict_mode_checks_actions() {
        let good = TWO_STEPS.replacen(
            r#""gripper":1}"#,
            r#""gripper":1,"action":{"translation":[0.052,0,0],"rotation":[0,0,0,1]}}"#,
            1,
        );
        let bad = good.replace("0.052", "0.08");
        assert!(matches!(ingest(&good, true)[0], Ok(Ingested::Episode(_))));
        assert_eq!(
            dropped_reason(&ingest(&bad, true)[0]),
            DropReason::ActionMismatch
        );
        assert!(matches!(ingest(&bad, false)[0], Ok(Ingested::Episode(_))));
    }

    #[test]
    fn end_effector_actions_are_rebased() {
        // Start yawed by +90°: a tool-frame step along +x is a base-frame step along +y.
        let text = r#"{"episode_id":"e","instruction":"x","rotation_format":"euler_xyz_extrinsic","action_frame":"end_effector","steps":[{"t":0,"pos":[0,0,0],"rot":[0,0,1.5707963267948966],"gripper":1,"action":{"translation":[0.05,0,0],"rotation":[0,0,0]}},{"t":1,"pos":[0,0.05,0],"rot":[0,0,1.5707963267948966],"gripper":1}]}"#;
        let Ok(Ingested::Episode(ep)) = &ingest(text, true)[0] else {
            panic!()
        };
        let (t, _) = ep.step_delta(0);
        assert!((t - Vec3::new(0.0, 0.05, 0.0)).norm() < 1e-12);
    }
}
