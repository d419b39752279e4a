//! SE(3) primitives used throughout the pipeline.
//!
//! Rotations are stored as 3×3 matrices. Euler angles follow the extrinsic
//! XYZ convention: rotate about world x (roll), then world y (pitch), then
//! world z (yaw), so `R = Rz(yaw) · Ry(pitch) · Rx(roll)`. The axis
//! convention is +x forward, +y left, +z up.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance used when validating rotation matrices.
pub const SO3_TOLERANCE: f64 = 1e-9;

/// Width of the gimbal band around |pitch| = π/2, in radians.
pub const GIMBAL_BAND: f64 = 1e-4;

/// Below this norm a 6D column (or its Gram-Schmidt residual) is degenerate.
pub const SIXD_DEGENERACY: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not a rotation (orthonormality error {ortho:.3e}, det {det:.12})")]
    NotRotation { ortho: f64, det: f64 },
    #[error("degenerate 6D rotation: {0}")]
    Degenerate6D(&'static str),
    #[error("empty delta chunk")]
    EmptyChunk,
}

/// A proper rotation matrix (RᵀR = I, det R = +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates `m` against the SO(3) invariants at [`SO3_TOLERANCE`].
    pub fn try_from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("rotation matrix"));
        }
        let ortho = orthonormality_error(&m);
        let det = m.determinant();
        if ortho > SO3_TOLERANCE || (det - 1.0).abs() > SO3_TOLERANCE {
            return Err(GeometryError::NotRotation { ortho, det });
        }
        Ok(Self(m))
    }

    /// Projects an arbitrary non-degenerate matrix onto the closest rotation
    /// via Gram-Schmidt on its first two columns.
    pub fn orthonormalized(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        sixd_to_matrix(&Rotation6D {
            a1: m.column(0).into_owned(),
            a2: m.column(1).into_owned(),
        })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation angle in radians, in [0, π].
    pub fn angle(&self) -> f64 {
        let cos = ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        cos.acos()
    }

    /// Checks the SO(3) invariants at the given tolerance.
    pub fn is_valid(&self, tol: f64) -> bool {
        orthonormality_error(&self.0) <= tol && (self.0.determinant() - 1.0).abs() <= tol
    }

    /// Frobenius distance to another rotation.
    pub fn distance(&self, other: &Self) -> f64 {
        (self.0 - other.0).norm()
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: Self) -> Self::Output {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl std::ops::Mul<&RotationMatrix> for &RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: &RotationMatrix) -> Self::Output {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Max-abs entry of RᵀR − I.
fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// Extrinsic XYZ Euler angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerXYZ {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerXYZ {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }

    pub fn to_degrees(self) -> [f64; 3] {
        [
            self.roll.to_degrees(),
            self.pitch.to_degrees(),
            self.yaw.to_degrees(),
        ]
    }

    pub fn as_array(self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

/// Result of decomposing a rotation matrix into canonical Euler angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDecomposition {
    pub angles: EulerXYZ,
    /// Set when the pitch lies in the gimbal band; roll was pinned to zero.
    pub gimbal: bool,
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn euler_to_matrix(e: &EulerXYZ) -> Result<RotationMatrix, GeometryError> {
    if !(e.roll.is_finite() && e.pitch.is_finite() && e.yaw.is_finite()) {
        return Err(GeometryError::NonFinite("euler angles"));
    }
    Ok(RotationMatrix(
        rot_z(e.yaw) * rot_y(e.pitch) * rot_x(e.roll),
    ))
}

/// Maps an angle from atan2's [−π, π] onto (−π, π].
fn half_open(angle: f64) -> f64 {
    if angle <= -PI {
        angle + 2.0 * PI
    } else {
        angle
    }
}

/// Canonical extrinsic XYZ decomposition.
///
/// Roll and yaw land in (−π, π], pitch in [−π/2, π/2]. Inside the gimbal
/// band (|pitch| > π/2 − [`GIMBAL_BAND`]) roll is set to zero and yaw takes
/// the remaining free angle. Outside the band, yaw and pitch are recovered
/// from `R · Rx(roll)ᵀ`, which keeps the reconstruction accurate even when
/// cos(pitch) is small.
pub fn matrix_to_euler(r: &RotationMatrix) -> EulerDecomposition {
    let m = &r.0;
    let sin_pitch = (-m[(2, 0)]).clamp(-1.0, 1.0);
    let gimbal = sin_pitch.abs() > GIMBAL_BAND.cos();

    if gimbal {
        // R = Rz(yaw)·Ry(±π/2) with zero roll: column 1 is (−sin yaw, cos yaw, 0).
        let yaw = half_open((-m[(0, 1)]).atan2(m[(1, 1)]));
        let pitch = sin_pitch.atan2(m[(2, 1)].hypot(m[(2, 2)]));
        return EulerDecomposition {
            angles: EulerXYZ::new(0.0, pitch, yaw),
            gimbal: true,
        };
    }

    let roll = half_open(m[(2, 1)].atan2(m[(2, 2)]));
    let (sr, cr) = roll.sin_cos();
    // Columns of R·Rx(roll)ᵀ = Rz(yaw)·Ry(pitch).
    let m01 = m[(0, 1)] * cr - m[(0, 2)] * sr;
    let m11 = m[(1, 1)] * cr - m[(1, 2)] * sr;
    let m22 = m[(2, 1)] * sr + m[(2, 2)] * cr;
    let yaw = half_open((-m01).atan2(m11));
    let pitch = (-m[(2, 0)]).atan2(m22).clamp(-FRAC_PI_2, FRAC_PI_2);
    EulerDecomposition {
        angles: EulerXYZ::new(roll, pitch, yaw),
        gimbal: false,
    }
}

/// First two columns of a rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation6D {
    pub a1: Vec3,
    pub a2: Vec3,
}

impl Rotation6D {
    /// Flattened as `[a1.x, a1.y, a1.z, a2.x, a2.y, a2.z]`.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.a1.x, self.a1.y, self.a1.z, self.a2.x, self.a2.y, self.a2.z,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            a1: Vec3::new(v[0], v[1], v[2]),
            a2: Vec3::new(v[3], v[4], v[5]),
        }
    }
}

pub fn matrix_to_6d(r: &RotationMatrix) -> Rotation6D {
    Rotation6D {
        a1: r.0.column(0).into_owned(),
        a2: r.0.column(1).into_owned(),
    }
}

/// Gram-Schmidt back onto SO(3).
pub fn sixd_to_matrix(v: &Rotation6D) -> Result<RotationMatrix, GeometryError> {
    if v.a1.iter().chain(v.a2.iter()).any(|x| !x.is_finite()) {
        return Err(GeometryError::NonFinite("6D rotation"));
    }
    let n1 = v.a1.norm();
    if n1 <= SIXD_DEGENERACY {
        return Err(GeometryError::Degenerate6D("first column has zero norm"));
    }
    let b1 = v.a1 / n1;
    let residual = v.a2 - b1 * b1.dot(&v.a2);
    let n2 = residual.norm();
    if n2 <= SIXD_DEGENERACY {
        return Err(GeometryError::Degenerate6D("columns are parallel"));
    }
    let b2 = residual / n2;
    let b3 = b1.cross(&b2);
    Ok(RotationMatrix(Matrix3::from_columns(&[b1, b2, b3])))
}

/// Sums base-frame translations and left-multiplies rotations:
/// the net rotation is `R_n · … · R_2 · R_1`.
pub fn compose_deltas(
    chunk: &[(Vec3, RotationMatrix)],
) -> Result<(Vec3, RotationMatrix), GeometryError> {
    if chunk.is_empty() {
        return Err(GeometryError::EmptyChunk);
    }
    let mut translation = Vec3::zeros();
    let mut rotation = Matrix3::identity();
    for (t, r) in chunk {
        translation += t;
        rotation = r.0 * rotation;
    }
    Ok((translation, RotationMatrix(rotation)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Base,
    EndEffector,
}

impl Frame {
    pub fn name(self) -> &'static str {
        match self {
            Frame::Base => "base",
            Frame::EndEffector => "end_effector",
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Binary gripper state; open is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GripperState {
    Closed,
    Open,
}

impl GripperState {
    pub fn as_f64(self) -> f64 {
        match self {
            GripperState::Closed => 0.0,
            GripperState::Open => 1.0,
        }
    }

    pub fn from_value(v: f64) -> Option<Self> {
        if v == 0.0 {
            Some(GripperState::Closed)
        } else if v == 1.0 {
            Some(GripperState::Open)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperEvent {
    #[default]
    None,
    Open,
    Close,
}

impl GripperEvent {
    pub fn between(start: GripperState, end: GripperState) -> Self {
        match (start, end) {
            (GripperState::Closed, GripperState::Open) => GripperEvent::Open,
            (GripperState::Open, GripperState::Closed) => GripperEvent::Close,
            _ => GripperEvent::None,
        }
    }
}

/// Absolute end-effector pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: RotationMatrix,
    pub gripper: GripperState,
}

impl Pose {
    pub fn new(position: Vec3, orientation: RotationMatrix, gripper: GripperState) -> Self {
        Self {
            position,
            orientation,
            gripper,
        }
    }

    /// Proprioceptive state vector: position, 6D rotation, gripper.
    pub fn state_vector(&self) -> [f64; 10] {
        let r6 = matrix_to_6d(&self.orientation).to_array();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            r6[0],
            r6[1],
            r6[2],
            r6[3],
            r6[4],
            r6[5],
            self.gripper.as_f64(),
        ]
    }
}

/// Net motion of an action chunk, expressed in a reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetDelta {
    pub translation: Vec3,
    pub rotation: RotationMatrix,
    pub frame: Frame,
    pub gripper_event: GripperEvent,
}

impl NetDelta {
    pub fn identity(frame: Frame) -> Self {
        Self {
            translation: Vec3::zeros(),
            rotation: RotationMatrix::identity(),
            frame,
            gripper_event: GripperEvent::None,
        }
    }
}

/// Relative motion from `start` to `end`.
///
/// Base frame: `p_end − p_start` and `R_end · R_startᵀ`.
/// End-effector frame: `R_startᵀ · (p_end − p_start)` and `R_startᵀ · R_end`.
pub fn net_delta_from_poses(start: &Pose, end: &Pose, frame: Frame) -> NetDelta {
    let dp = end.position - start.position;
    let r_start = &start.orientation.0;
    let r_end = &end.orientation.0;
    let (translation, rotation) = match frame {
        Frame::Base => (dp, r_end * r_start.transpose()),
        Frame::EndEffector => (r_start.transpose() * dp, r_start.transpose() * r_end),
    };
    NetDelta {
        translation,
        rotation: RotationMatrix(rotation),
        frame,
        gripper_event: GripperEvent::between(start.gripper, end.gripper),
    }
}

/// Base-frame per-step delta between consecutive poses.
pub fn step_delta(from: &Pose, to: &Pose) -> (Vec3, RotationMatrix) {
    (
        to.position - from.position,
        RotationMatrix(to.orientation.0 * from.orientation.0.transpose()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn zero_euler_is_identity() {
        let r = euler_to_matrix(&EulerXYZ::default()).unwrap();
        assert_eq!(r, RotationMatrix::identity());
    }

    #[test]
    fn quarter_yaw_maps_x_to_y() {
        let r = euler_to_matrix(&EulerXYZ::new(0.0, 0.0, FRAC_PI_2)).unwrap();
        let v = r.rotate(&Vec3::x());
        assert!((v - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn non_finite_euler_rejected() {
        let err = euler_to_matrix(&EulerXYZ::new(f64::NAN, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, GeometryError::NonFinite(_)));
    }

    #[test]
    fn identity_decomposes_to_zero() {
        let d = matrix_to_euler(&RotationMatrix::identity());
        assert_eq!(d.angles, EulerXYZ::new(0.0, 0.0, 0.0));
        assert!(!d.gimbal);
    }

    #[test]
    fn euler_round_trip() {
        let e = EulerXYZ::new(0.3, -0.2, 0.7);
        let d = matrix_to_euler(&euler_to_matrix(&e).unwrap());
        assert!((d.angles.roll - 0.3).abs() < 1e-9);
        assert!((d.angles.pitch + 0.2).abs() < 1e-9);
        assert!((d.angles.yaw - 0.7).abs() < 1e-9);
    }

    #[test]
    fn roll_of_pi_is_positive() {
        let d = matrix_to_euler(&euler_to_matrix(&EulerXYZ::new(-PI, 0.0, 0.0)).unwrap());
        assert!((d.angles.roll - PI).abs() < 1e-12);
    }

    #[test]
    fn gimbal_branch_pins_roll() {
        let r = euler_to_matrix(&EulerXYZ::new(0.4, FRAC_PI_2, -0.3)).unwrap();
        let d = matrix_to_euler(&r);
        assert!(d.gimbal);
        assert_eq!(d.angles.roll, 0.0);
        assert!((d.angles.pitch - FRAC_PI_2).abs() < 1e-9);
        let back = euler_to_matrix(&d.angles).unwrap();
        assert!(back.distance(&r) < 1e-9);
    }

    #[test]
    fn negative_gimbal_branch() {
        let r = euler_to_matrix(&EulerXYZ::new(-1.1, -FRAC_PI_2, 2.0)).unwrap();
        let d = matrix_to_euler(&r);
        assert!(d.gimbal);
        let back = euler_to_matrix(&d.angles).unwrap();
        assert!(back.distance(&r) < 1e-9);
    }

    #[test]
    fn sixd_of_identity() {
        let v = matrix_to_6d(&RotationMatrix::identity());
        assert_eq!(v.a1, Vec3::x());
        assert_eq!(v.a2, Vec3::y());
    }

    #[test]
    fn gram_schmidt_normalizes() {
        let v = Rotation6D {
            a1: Vec3::new(2.0, 0.0, 0.0),
            a2: Vec3::new(0.5, 1.0, 0.0),
        };
        let r = sixd_to_matrix(&v).unwrap();
        assert!(r.distance(&RotationMatrix::identity()) < 1e-15);
    }

    #[test]
    fn degenerate_sixd_rejected() {
        let zero = Rotation6D {
            a1: Vec3::zeros(),
            a2: Vec3::y(),
        };
        assert!(matches!(
            sixd_to_matrix(&zero),
            Err(GeometryError::Degenerate6D(_))
        ));
        let parallel = Rotation6D {
            a1: Vec3::x(),
            a2: Vec3::new(3.0, 0.0, 0.0),
        };
        assert!(matches!(
            sixd_to_matrix(&parallel),
            Err(GeometryError::Degenerate6D(_))
        ));
    }

    #[test]
    fn translations_sum() {
        let chunk = [
            (Vec3::new(1.0, 0.0, 0.0), RotationMatrix::identity()),
            (Vec3::new(0.0, 2.0, 0.0), RotationMatrix::identity()),
        ];
        let (t, r) = compose_deltas(&chunk).unwrap();
        assert_eq!(t, Vec3::new(1.0, 2.0, 0.0));
        assert_eq!(r, RotationMatrix::identity());
    }

    #[test]
    fn two_eighth_turns_make_a_quarter() {
        let step = euler_to_matrix(&EulerXYZ::new(0.0, 0.0, FRAC_PI_4)).unwrap();
        let (_, r) = compose_deltas(&[(Vec3::zeros(), step), (Vec3::zeros(), step)]).unwrap();
        let d = matrix_to_euler(&r);
        assert!((d.angles.yaw - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn empty_chunk_rejected() {
        assert_eq!(compose_deltas(&[]), Err(GeometryError::EmptyChunk));
    }

    fn pose(p: [f64; 3], yaw: f64, gripper: GripperState) -> Pose {
        Pose::new(
            Vec3::new(p[0], p[1], p[2]),
            euler_to_matrix(&EulerXYZ::new(0.0, 0.0, yaw)).unwrap(),
            gripper,
        )
    }

    #[test]
    fn same_pose_is_zero_delta() {
        let p = pose([0.1, 0.2, 0.3], 0.5, GripperState::Open);
        let d = net_delta_from_poses(&p, &p, Frame::EndEffector);
        assert_eq!(d.translation, Vec3::zeros());
        assert!(d.rotation.distance(&RotationMatrix::identity()) < 1e-15);
        assert_eq!(d.gripper_event, GripperEvent::None);
    }

    #[test]
    fn identity_start_frames_coincide() {
        let a = pose([0.0; 3], 0.0, GripperState::Open);
        let b = pose([0.05, 0.0, 0.0], 0.0, GripperState::Open);
        for frame in [Frame::Base, Frame::EndEffector] {
            let d = net_delta_from_poses(&a, &b, frame);
            assert!((d.translation - Vec3::new(0.05, 0.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn yawed_start_rotates_translation() {
        let a = pose([0.0; 3], FRAC_PI_2, GripperState::Closed);
        let b = pose([0.05, 0.0, 0.0], FRAC_PI_2, GripperState::Open);
        let base = net_delta_from_poses(&a, &b, Frame::Base);
        let ee = net_delta_from_poses(&a, &b, Frame::EndEffector);
        assert!((base.translation - Vec3::new(0.05, 0.0, 0.0)).norm() < 1e-15);
        assert!((ee.translation - Vec3::new(0.0, -0.05, 0.0)).norm() < 1e-15);
        assert_eq!(base.gripper_event, GripperEvent::Open);
    }

    #[test]
    fn try_from_matrix_checks_invariants() {
        assert!(RotationMatrix::try_from_matrix(Matrix3::identity() * 2.0).is_err());
        let reflection = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RotationMatrix::try_from_matrix(reflection).is_err());
        assert!(RotationMatrix::try_from_matrix(rot_y(0.3)).is_ok());
    }
}
