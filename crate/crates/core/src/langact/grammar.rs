//! Text form of language-actions.
//!
//! ```text
//! action    = "no movement" | clause { "; " clause }
//! clause    = move | tilt | rotate | gripper
//! move      = "move" SP ( "forward" | "backward" | "left" | "right" | "up" | "down" ) SP count SP "cm"
//! tilt      = "tilt" SP ( "left" | "right" | "back" | "forward" ) SP count SP degrees
//! rotate    = "rotate" SP ( "clockwise" | "counterclockwise" ) SP count SP degrees
//! gripper   = ( "open" | "close" ) SP "gripper"
//! degrees   = "degree"  (when count = 1) | "degrees"
//! count     = nonzero-digit { digit }
//! ```
//!
//! Clauses appear in slot order (move x, move y, move z, tilt roll,
//! tilt pitch, rotate, gripper) with at most one clause per slot.

use std::fmt;

use thiserror::Error;

use super::{
    validate, Clause, ClauseError, GripperCommand, MoveDirection, RotateDirection, TiltDirection,
    NO_MOVEMENT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Empty,
    UnknownVerb,
    UnknownDirection,
    BadMagnitude,
    BadUnit,
    MissingToken,
    TrailingToken,
    BadSeparator,
    OutOfOrder,
    DuplicateSlot,
    OutOfRange,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParseErrorKind::Empty => "empty language-action",
            ParseErrorKind::UnknownVerb => "unknown verb",
            ParseErrorKind::UnknownDirection => "unknown direction",
            ParseErrorKind::BadMagnitude => "invalid magnitude",
            ParseErrorKind::BadUnit => "invalid unit",
            ParseErrorKind::MissingToken => "missing token",
            ParseErrorKind::TrailingToken => "unexpected trailing token",
            ParseErrorKind::BadSeparator => "invalid separator",
            ParseErrorKind::OutOfOrder => "clause out of order",
            ParseErrorKind::DuplicateSlot => "duplicate clause",
            ParseErrorKind::OutOfRange => "angle out of range",
        };
        f.write_str(s)
    }
}

/// A grammar violation, located by byte offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}: {token:?}")]
pub struct ParseError {
    pub offset: usize,
    pub token: String,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn new(kind: ParseErrorKind, offset: usize, token: &str) -> Self {
        Self {
            offset,
            token: token.to_string(),
            kind,
        }
    }
}

pub(super) fn write(clauses: &[Clause], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if clauses.is_empty() {
        return f.write_str(NO_MOVEMENT);
    }
    for (i, clause) in clauses.iter().enumerate() {
        if i > 0 {
            f.write_str("; ")?;
        }
        match *clause {
            Clause::Move { direction, cm } => write!(f, "move {} {} cm", move_word(direction), cm)?,
            Clause::Tilt { direction, degrees } => write!(
                f,
                "tilt {} {} {}",
                tilt_word(direction),
                degrees,
                degree_unit(degrees)
            )?,
            Clause::Rotate { direction, degrees } => write!(
                f,
                "rotate {} {} {}",
                rotate_word(direction),
                degrees,
                degree_unit(degrees)
            )?,
            Clause::Gripper(GripperCommand::Open) => f.write_str("open gripper")?,
            Clause::Gripper(GripperCommand::Close) => f.write_str("close gripper")?,
        }
    }
    Ok(())
}

fn degree_unit(k: u32) -> &'static str {
    if k == 1 {
        "degree"
    } else {
        "degrees"
    }
}

fn move_word(d: MoveDirection) -> &'static str {
    match d {
        MoveDirection::Forward => "forward",
        MoveDirection::Backward => "backward",
        MoveDirection::Left => "left",
        MoveDirection::Right => "right",
        MoveDirection::Up => "up",
        MoveDirection::Down => "down",
    }
}

fn tilt_word(d: TiltDirection) -> &'static str {
    match d {
        TiltDirection::Left => "left",
        TiltDirection::Right => "right",
        TiltDirection::Back => "back",
        TiltDirection::Forward => "forward",
    }
}

fn rotate_word(d: RotateDirection) -> &'static str {
    match d {
        RotateDirection::Clockwise => "clockwise",
        RotateDirection::Counterclockwise => "counterclockwise",
    }
}

/// Space-separated words of one clause, each with its absolute byte offset.
struct Words<'a> {
    words: Vec<(usize, &'a str)>,
    next: usize,
    end: usize,
}

impl<'a> Words<'a> {
    fn split(clause: &'a str, base: usize) -> Self {
        let mut words = Vec::new();
        let mut start = 0;
        for (i, ch) in clause.char_indices() {
            if ch == ' ' {
                words.push((base + start, &clause[start..i]));
                start = i + 1;
            }
        }
        words.push((base + start, &clause[start..]));
        Self {
            words,
            next: 0,
            end: base + clause.len(),
        }
    }

    fn take(&mut self) -> Result<(usize, &'a str), ParseError> {
        match self.words.get(self.next) {
            Some(&(offset, word)) => {
                self.next += 1;
                if word.is_empty() {
                    Err(ParseError::new(ParseErrorKind::BadSeparator, offset, word))
                } else {
                    Ok((offset, word))
                }
            }
            None => Err(ParseError::new(ParseErrorKind::MissingToken, self.end, "")),
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.words.get(self.next) {
            Some(&(offset, word)) => {
                Err(ParseError::new(ParseErrorKind::TrailingToken, offset, word))
            }
            None => Ok(()),
        }
    }
}

fn magnitude(offset: usize, word: &str) -> Result<u32, ParseError> {
    let canonical = word.bytes().all(|b| b.is_ascii_digit()) && !word.starts_with('0');
    if !canonical {
        return Err(ParseError::new(ParseErrorKind::BadMagnitude, offset, word));
    }
    word.parse::<u32>()
        .map_err(|_| ParseError::new(ParseErrorKind::BadMagnitude, offset, word))
}

fn parse_clause(words: &mut Words<'_>) -> Result<Clause, ParseError> {
    let (offset, verb) = words.take()?;
    let clause = match verb {
        "move" => {
            let (o, w) = words.take()?;
            let direction = match w {
                "forward" => MoveDirection::Forward,
                "backward" => MoveDirection::Backward,
                "left" => MoveDirection::Left,
                "right" => MoveDirection::Right,
                "up" => MoveDirection::Up,
                "down" => MoveDirection::Down,
                _ => return Err(ParseError::new(ParseErrorKind::UnknownDirection, o, w)),
            };
            let (o, w) = words.take()?;
            let cm = magnitude(o, w)?;
            let (o, w) = words.take()?;
            if w != "cm" {
                return Err(ParseError::new(ParseErrorKind::BadUnit, o, w));
            }
            Clause::Move { direction, cm }
        }
        "tilt" => {
            let (o, w) = words.take()?;
            let direction = match w {
                "left" => TiltDirection::Left,
                "right" => TiltDirection::Right,
                "back" => TiltDirection::Back,
                "forward" => TiltDirection::Forward,
                _ => return Err(ParseError::new(ParseErrorKind::UnknownDirection, o, w)),
            };
            let degrees = angle(words)?;
            Clause::Tilt { direction, degrees }
        }
        "rotate" => {
            let (o, w) = words.take()?;
            let direction = match w {
                "clockwise" => RotateDirection::Clockwise,
                "counterclockwise" => RotateDirection::Counterclockwise,
                _ => return Err(ParseError::new(ParseErrorKind::UnknownDirection, o, w)),
            };
            let degrees = angle(words)?;
            Clause::Rotate { direction, degrees }
        }
        "open" | "close" => {
            let (o, w) = words.take()?;
            if w != "gripper" {
                return Err(ParseError::new(ParseErrorKind::TrailingToken, o, w));
            }
            if verb == "open" {
                Clause::Gripper(GripperCommand::Open)
            } else {
                Clause::Gripper(GripperCommand::Close)
            }
        }
        _ => return Err(ParseError::new(ParseErrorKind::UnknownVerb, offset, verb)),
    };
    words.finish()?;
    Ok(clause)
}

fn angle(words: &mut Words<'_>) -> Result<u32, ParseError> {
    let (o, w) = words.take()?;
    let k = magnitude(o, w)?;
    let (o, w) = words.take()?;
    if w != degree_unit(k) {
        return Err(ParseError::new(ParseErrorKind::BadUnit, o, w));
    }
    Ok(k)
}

pub(super) fn parse(text: &str) -> Result<Vec<Clause>, ParseError> {
    if text.is_empty() {
        return Err(ParseError::new(ParseErrorKind::Empty, 0, ""));
    }
    if text == NO_MOVEMENT {
        return Ok(Vec::new());
    }

    let mut clauses = Vec::new();
    let mut offsets = Vec::new();
    let mut base = 0;
    for (i, piece) in text.split(';').enumerate() {
        let body = if i == 0 {
            piece
        } else {
            match piece.strip_prefix(' ') {
                Some(rest) => {
                    base += 1;
                    rest
                }
                None => return Err(ParseError::new(ParseErrorKind::BadSeparator, base - 1, ";")),
            }
        };
        let mut words = Words::split(body, base);
        offsets.push(base);
        clauses.push(parse_clause(&mut words)?);
        base += body.len() + 1;
    }

    validate(&clauses).map_err(|e| {
        let (kind, index) = match e {
            ClauseError::ZeroMagnitude(i) => (ParseErrorKind::BadMagnitude, i),
            ClauseError::OutOfRange(i) => (ParseErrorKind::OutOfRange, i),
            ClauseError::OutOfOrder(i) => (ParseErrorKind::OutOfOrder, i),
            ClauseError::DuplicateSlot(i) => (ParseErrorKind::DuplicateSlot, i),
        };
        let start = offsets[index];
        let end = text[start..].find(';').map_or(text.len(), |p| start + p);
        ParseError::new(kind, start, &text[start..end])
    })?;
    Ok(clauses)
}

#[cfg(test)]
mod tests {
    use super::super::LanguageAction;
    use super::*;
    use crate::geometry::Frame;

    fn err(text: &str) -> ParseError {
        LanguageAction::parse(text, Frame::Base).unwrap_err()
    }

    #[test]
    fn canonical_strings_round_trip() {
        for s in [
            "move left 5 cm",
            "no movement",
            "tilt back 1 degree",
            "move forward 1 cm; move right 3 cm; move up 1 cm; rotate clockwise 20 degrees",
            "move down 12 cm; tilt left 180 degrees; tilt forward 90 degrees; rotate counterclockwise 2 degrees; open gripper",
            "close gripper",
        ] {
            let la = LanguageAction::parse(s, Frame::Base).unwrap();
            assert_eq!(la.to_string(), s);
        }
    }

    #[test]
    fn empty_input() {
        let e = err("");
        assert_eq!(e.kind, ParseErrorKind::Empty);
        assert_eq!(e.offset, 0);
    }

    #[test]
    fn unknown_direction_is_named() {
        let e = err("move sideways 5 cm");
        assert_eq!(e.kind, ParseErrorKind::UnknownDirection);
        assert_eq!(e.token, "sideways");
        assert_eq!(e.offset, 5);
        assert!(e.to_string().contains("sideways"));
    }

    #[test]
    fn unknown_verb_in_second_clause() {
        let e = err("move left 5 cm; jump up 3 cm");
        assert_eq!(e.kind, ParseErrorKind::UnknownVerb);
        assert_eq!(e.token, "jump");
        assert_eq!(e.offset, 16);
    }

    #[test]
    fn magnitudes_must_be_canonical_integers() {
        for (s, token) in [
            ("move left 5.5 cm", "5.5"),
            ("move left -3 cm", "-3"),
            ("move left 05 cm", "05"),
            ("move left 0 cm", "0"),
            ("move left 99999999999 cm", "99999999999"),
        ] {
            let e = err(s);
            assert_eq!(e.kind, ParseErrorKind::BadMagnitude, "{s}");
            assert_eq!(e.token, token);
        }
    }

    #[test]
    fn unit_agreement() {
        assert_eq!(err("tilt left 1 degrees").kind, ParseErrorKind::BadUnit);
        assert_eq!(err("tilt left 2 degree").kind, ParseErrorKind::BadUnit);
        assert_eq!(err("move up 2 mm").token, "mm");
    }

    #[test]
    fn order_and_duplicates() {
        let e = err("move left 5 cm; move forward 2 cm");
        assert_eq!(e.kind, ParseErrorKind::OutOfOrder);
        assert_eq!(e.offset, 16);
        assert_eq!(e.token, "move forward 2 cm");
        let e = err("move left 5 cm; move right 2 cm");
        assert_eq!(e.kind, ParseErrorKind::DuplicateSlot);
        let e = err("open gripper; close gripper");
        assert_eq!(e.kind, ParseErrorKind::DuplicateSlot);
    }

    #[test]
    fn separators() {
        assert_eq!(
            err("move left 5 cm;move up 1 cm").kind,
            ParseErrorKind::BadSeparator
        );
        assert_eq!(err("move  left 5 cm").kind, ParseErrorKind::BadSeparator);
        assert_eq!(err("move left 5 cm; ").kind, ParseErrorKind::BadSeparator);
        assert_eq!(
            err("move left 5 cm extra").kind,
            ParseErrorKind::TrailingToken
        );
        assert_eq!(err("move left 5").kind, ParseErrorKind::MissingToken);
    }

    #[test]
    fn angle_range() {
        assert_eq!(
            err("tilt forward 91 degrees").kind,
            ParseErrorKind::OutOfRange
        );
        assert_eq!(
            err("rotate clockwise 180 degrees").kind,
            ParseErrorKind::OutOfRange
        );
    }
}
