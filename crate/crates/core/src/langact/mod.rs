//! Codec between net end-effector motions and templated language-actions.
//!
//! A language-action is an ordered list of clauses such as
//! `move left 5 cm; tilt forward 45 degrees; rotate clockwise 20 degrees; open gripper`.
//! Translations are reported in integer centimetres along the base axes
//! (+x forward, +y left, +z up); rotations are the extrinsic XYZ Euler
//! decomposition of the net rotation in integer degrees. Sign words:
//!
//! | angle  | positive            | negative      |
//! |--------|---------------------|---------------|
//! | roll   | `tilt left`         | `tilt right`  |
//! | pitch  | `tilt forward`      | `tilt back`   |
//! | yaw    | `rotate counterclockwise` | `rotate clockwise` |
//!
//! Clauses whose rounded magnitude is zero are omitted. When every clause is
//! omitted the action serializes as [`NO_MOVEMENT`].

mod grammar;
mod record;
pub mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    euler_to_matrix, matrix_to_euler, EulerXYZ, Frame, GripperEvent, NetDelta, Vec3,
};

pub use grammar::{ParseError, ParseErrorKind};
pub use record::{DeltaRecord, RecordError};

/// Serialized form of an action with no clauses.
pub const NO_MOVEMENT: &str = "no movement";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveDirection {
    Forward,
    Backward,
    Left,
    Right,
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TiltDirection {
    Left,
    Right,
    Back,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RotateDirection {
    Clockwise,
    Counterclockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GripperCommand {
    Open,
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Clause {
    Move {
        direction: MoveDirection,
        cm: u32,
    },
    Tilt {
        direction: TiltDirection,
        degrees: u32,
    },
    Rotate {
        direction: RotateDirection,
        degrees: u32,
    },
    Gripper(GripperCommand),
}

/// Position of a clause in the fixed clause order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    MoveX,
    MoveY,
    MoveZ,
    TiltRoll,
    TiltPitch,
    Rotate,
    Gripper,
}

impl Clause {
    pub fn slot(&self) -> Slot {
        match self {
            Clause::Move { direction, .. } => match direction {
                MoveDirection::Forward | MoveDirection::Backward => Slot::MoveX,
                MoveDirection::Left | MoveDirection::Right => Slot::MoveY,
                MoveDirection::Up | MoveDirection::Down => Slot::MoveZ,
            },
            Clause::Tilt { direction, .. } => match direction {
                TiltDirection::Left | TiltDirection::Right => Slot::TiltRoll,
                TiltDirection::Back | TiltDirection::Forward => Slot::TiltPitch,
            },
            Clause::Rotate { .. } => Slot::Rotate,
            Clause::Gripper(_) => Slot::Gripper,
        }
    }

    pub fn magnitude(&self) -> Option<u32> {
        match *self {
            Clause::Move { cm, .. } => Some(cm),
            Clause::Tilt { degrees, .. } | Clause::Rotate { degrees, .. } => Some(degrees),
            Clause::Gripper(_) => None,
        }
    }

    /// Largest magnitude allowed in this clause's direction.
    ///
    /// Roll and yaw live in (−180°, 180°], pitch in [−90°, 90°].
    fn max_magnitude(&self) -> u32 {
        match self {
            Clause::Move { .. } | Clause::Gripper(_) => u32::MAX,
            Clause::Tilt { direction, .. } => match direction {
                TiltDirection::Left => 180,
                TiltDirection::Right => 179,
                TiltDirection::Back | TiltDirection::Forward => 90,
            },
            Clause::Rotate { direction, .. } => match direction {
                RotateDirection::Counterclockwise => 180,
                RotateDirection::Clockwise => 179,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClauseError {
    #[error("clause {0} has zero magnitude")]
    ZeroMagnitude(usize),
    #[error("clause {0} exceeds the canonical angle range")]
    OutOfRange(usize),
    #[error("clause {0} is out of order")]
    OutOfOrder(usize),
    #[error("clause {0} repeats a slot")]
    DuplicateSlot(usize),
}

/// An ordered, canonical list of clauses tagged with its reference frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LanguageAction {
    clauses: Vec<Clause>,
    frame: Frame,
}

impl LanguageAction {
    pub fn new(clauses: Vec<Clause>, frame: Frame) -> Result<Self, ClauseError> {
        validate(&clauses)?;
        Ok(Self { clauses, frame })
    }

    pub fn empty(frame: Frame) -> Self {
        Self {
            clauses: Vec::new(),
            frame,
        }
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Parses the canonical text form. The frame is not part of the text.
    pub fn parse(text: &str, frame: Frame) -> Result<Self, ParseError> {
        grammar::parse(text).map(|clauses| Self { clauses, frame })
    }
}

impl std::fmt::Display for LanguageAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        grammar::write(&self.clauses, f)
    }
}

fn validate(clauses: &[Clause]) -> Result<(), ClauseError> {
    let mut last: Option<Slot> = None;
    for (i, clause) in clauses.iter().enumerate() {
        match clause.magnitude() {
            Some(0) => return Err(ClauseError::ZeroMagnitude(i)),
            Some(m) if m > clause.max_magnitude() => return Err(ClauseError::OutOfRange(i)),
            _ => {}
        }
        let slot = clause.slot();
        if let Some(prev) = last {
            if slot == prev {
                return Err(ClauseError::DuplicateSlot(i));
            }
            if slot < prev {
                return Err(ClauseError::OutOfOrder(i));
            }
        }
        last = Some(slot);
    }
    Ok(())
}

/// Quantization steps. Magnitudes are always whole centimetres and degrees;
/// a step above 1 rounds to multiples of that step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub cm_step: u32,
    pub degree_step: u32,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            cm_step: 1,
            degree_step: 1,
        }
    }
}

/// Rounds half away from zero onto multiples of `step`.
fn quantize(value: f64, step: u32) -> i64 {
    let step = f64::from(step.max(1));
    ((value / step).round() * step) as i64
}

/// Output of [`encode_flagged`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub action: LanguageAction,
    /// The net rotation fell in the gimbal band; roll was folded into yaw.
    pub gimbal: bool,
}

pub fn encode(delta: &NetDelta, quant: &QuantConfig) -> LanguageAction {
    encode_flagged(delta, quant).action
}

pub fn encode_flagged(delta: &NetDelta, quant: &QuantConfig) -> Encoded {
    let mut clauses = Vec::with_capacity(7);
    let t = delta.translation * 100.0;
    let axes = [
        (t.x, MoveDirection::Forward, MoveDirection::Backward),
        (t.y, MoveDirection::Left, MoveDirection::Right),
        (t.z, MoveDirection::Up, MoveDirection::Down),
    ];
    for (value, pos, neg) in axes {
        let q = quantize(value, quant.cm_step);
        if q != 0 {
            let direction = if q > 0 { pos } else { neg };
            clauses.push(Clause::Move {
                direction,
                cm: q.unsigned_abs() as u32,
            });
        }
    }

    let decomposition = matrix_to_euler(&delta.rotation);
    let [roll, pitch, yaw] = decomposition.angles.to_degrees();
    // −180° and +180° are the same rotation; keep the canonical positive one.
    let wrap = |q: i64| if q == -180 { 180 } else { q };
    let roll_q = wrap(quantize(roll, quant.degree_step));
    let pitch_q = quantize(pitch, quant.degree_step);
    let yaw_q = wrap(quantize(yaw, quant.degree_step));

    if roll_q != 0 {
        let direction = if roll_q > 0 {
            TiltDirection::Left
        } else {
            TiltDirection::Right
        };
        clauses.push(Clause::Tilt {
            direction,
            degrees: roll_q.unsigned_abs() as u32,
        });
    }
    if pitch_q != 0 {
        let direction = if pitch_q > 0 {
            TiltDirection::Forward
        } else {
            TiltDirection::Back
        };
        clauses.push(Clause::Tilt {
            direction,
            degrees: pitch_q.unsigned_abs() as u32,
        });
    }
    if yaw_q != 0 {
        let direction = if yaw_q > 0 {
            RotateDirection::Counterclockwise
        } else {
            RotateDirection::Clockwise
        };
        clauses.push(Clause::Rotate {
            direction,
            degrees: yaw_q.unsigned_abs() as u32,
        });
    }

    match delta.gripper_event {
        GripperEvent::Open => clauses.push(Clause::Gripper(GripperCommand::Open)),
        GripperEvent::Close => clauses.push(Clause::Gripper(GripperCommand::Close)),
        GripperEvent::None => {}
    }

    debug_assert!(validate(&clauses).is_ok());
    Encoded {
        action: LanguageAction {
            clauses,
            frame: delta.frame,
        },
        gimbal: decomposition.gimbal,
    }
}

/// Reconstructs the motion implied by the clauses at their integer values.
pub fn decode(action: &LanguageAction) -> NetDelta {
    let mut cm = Vec3::zeros();
    let mut degrees = [0.0f64; 3];
    let mut gripper_event = GripperEvent::None;
    for clause in &action.clauses {
        match *clause {
            Clause::Move { direction, cm: k } => {
                let k = f64::from(k);
                match direction {
                    MoveDirection::Forward => cm.x = k,
                    MoveDirection::Backward => cm.x = -k,
                    MoveDirection::Left => cm.y = k,
                    MoveDirection::Right => cm.y = -k,
                    MoveDirection::Up => cm.z = k,
                    MoveDirection::Down => cm.z = -k,
                }
            }
            Clause::Tilt {
                direction,
                degrees: k,
            } => {
                let k = f64::from(k);
                match direction {
                    TiltDirection::Left => degrees[0] = k,
                    TiltDirection::Right => degrees[0] = -k,
                    TiltDirection::Forward => degrees[1] = k,
                    TiltDirection::Back => degrees[1] = -k,
                }
            }
            Clause::Rotate {
                direction,
                degrees: k,
            } => {
                let k = f64::from(k);
                degrees[2] = match direction {
                    RotateDirection::Counterclockwise => k,
                    RotateDirection::Clockwise => -k,
                };
            }
            Clause::Gripper(GripperCommand::Open) => gripper_event = GripperEvent::Open,
            Clause::Gripper(GripperCommand::Close) => gripper_event = GripperEvent::Close,
        }
    }
    let euler = EulerXYZ::from_degrees(degrees[0], degrees[1], degrees[2]);
    NetDelta {
        translation: cm / 100.0,
        rotation: euler_to_matrix(&euler).expect("integer degrees are finite"),
        frame: action.frame,
        gripper_event,
    }
}
