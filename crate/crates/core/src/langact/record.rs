//! Line-record form of a [`NetDelta`], used by the `encode` / `decode`
//! commands and other callers that exchange deltas as JSON.
//!
//! ```json
//! {"translation":[0.0,0.05,0.0],"euler_xyz":[0.0,0.0,0.0],"frame":"base","gripper_event":"none"}
//! ```
//!
//! Rotation is given either as extrinsic XYZ Euler angles in radians or as a
//! row-major 3×3 matrix; supplying neither means no rotation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    euler_to_matrix, matrix_to_euler, EulerXYZ, Frame, GeometryError, GripperEvent, NetDelta,
    RotationMatrix, Vec3,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaRecord {
    /// Metres, in the named frame.
    pub translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub euler_xyz: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[[f64; 3]; 3]>,
    #[serde(default = "default_frame")]
    pub frame: Frame,
    #[serde(default)]
    pub gripper_event: GripperEvent,
}

fn default_frame() -> Frame {
    Frame::Base
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("give either euler_xyz or rotation, not both")]
    AmbiguousRotation,
    #[error("non-finite translation")]
    NonFinite,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl DeltaRecord {
    pub fn to_delta(&self) -> Result<NetDelta, RecordError> {
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(RecordError::NonFinite);
        }
        let rotation = match (self.euler_xyz, self.rotation) {
            (Some(_), Some(_)) => return Err(RecordError::AmbiguousRotation),
            (Some([r, p, y]), None) => euler_to_matrix(&EulerXYZ::new(r, p, y))?,
            (None, Some(rows)) => {
                let m = nalgebra::Matrix3::from_fn(|i, j| rows[i][j]);
                RotationMatrix::try_from_matrix(m)?
            }
            (None, None) => RotationMatrix::identity(),
        };
        Ok(NetDelta {
            translation: Vec3::from(self.translation),
            rotation,
            frame: self.frame,
            gripper_event: self.gripper_event,
        })
    }

    /// Record carrying both the Euler decomposition and the matrix. Negative
    /// zeros are written as zeros.
    pub fn from_delta(delta: &NetDelta) -> Self {
        let clean = |v: [f64; 3]| v.map(|x| x + 0.0);
        Self {
            translation: clean(delta.translation.into()),
            euler_xyz: Some(clean(matrix_to_euler(&delta.rotation).angles.as_array())),
            rotation: Some(delta.rotation.to_rows().map(clean)),
            frame: delta.frame,
            gripper_event: delta.gripper_event,
        }
    }

    /// Same record with only the Euler angles, as `decode` prints it.
    pub fn euler_only(mut self) -> Self {
        self.rotation = None;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langact::{encode, QuantConfig};

    #[test]
    fn minimal_record_encodes() {
        let rec: DeltaRecord = serde_json::from_str(r#"{"translation":[0,0.05,0]}"#).unwrap();
        let delta = rec.to_delta().unwrap();
        assert_eq!(
            encode(&delta, &QuantConfig::default()).to_string(),
            "move left 5 cm"
        );
    }

    #[test]
    fn matrix_rotation_is_validated() {
        let rec: DeltaRecord =
            serde_json::from_str(r#"{"translation":[0,0,0],"rotation":[[2,0,0],[0,1,0],[0,0,1]]}"#)
                .unwrap();
        assert!(matches!(rec.to_delta(), Err(RecordError::Geometry(_))));
    }

    #[test]
    fn both_rotations_rejected() {
        let rec: DeltaRecord = serde_json::from_str(
            r#"{"translation":[0,0,0],"euler_xyz":[0,0,0],"rotation":[[1,0,0],[0,1,0],[0,0,1]]}"#,
        )
        .unwrap();
        assert_eq!(rec.to_delta(), Err(RecordError::AmbiguousRotation));
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(
            serde_json::from_str::<DeltaRecord>(r#"{"translation":[0,0,0],"spin":1}"#).is_err()
        );
    }

    #[test]
    fn round_trip_through_record() {
        let rec = DeltaRecord {
            translation: [0.1, -0.2, 0.03],
            euler_xyz: Some([0.1, -0.3, 0.5]),
            rotation: None,
            frame: Frame::EndEffector,
            gripper_event: GripperEvent::Close,
        };
        let back = DeltaRecord::from_delta(&rec.to_delta().unwrap()).euler_only();
        assert_eq!(back.frame, rec.frame);
        assert_eq!(back.gripper_event, rec.gripper_event);
        for (a, b) in back.euler_xyz.unwrap().iter().zip(rec.euler_xyz.unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
