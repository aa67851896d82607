//! Planar three-segment arm with a rotary retina joint.
//!
//! Joints 1..3 drive unit-length segments; joint 4 only rotates the retina,
//! so it enters the orientation but not the lens position.

use std::f64::consts::TAU;

use nalgebra::Matrix3x4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of motors of the arm agent.
pub const N_JOINTS: usize = 4;

/// Segment length in world units.
pub const SEGMENT_LENGTH: f64 = 1.0;

/// Joint angles in radians. Each angle is meaningful modulo 2π.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MotorConfig(pub [f64; N_JOINTS]);

impl MotorConfig {
    pub fn new(joints: [f64; N_JOINTS]) -> Self {
        MotorConfig(joints)
    }

    pub fn joints(&self) -> &[f64; N_JOINTS] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<[f64; N_JOINTS]> for MotorConfig {
    fn from(j: [f64; N_JOINTS]) -> Self {
        MotorConfig(j)
    }
}

/// External configuration of the retina: lens position and optical-axis angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetinaPose {
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
}

impl RetinaPose {
    pub fn new(x: f64, y: f64, alpha: f64) -> Self {
        RetinaPose { x, y, alpha }
    }

    pub fn base_distance(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Axis-aligned rectangle of admissible lens positions.
///
/// `width` extends along x (away from the base), `height` along y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkingSpace {
    pub center: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Default for WorkingSpace {
    fn default() -> Self {
        WorkingSpace {
            center: [1.75, 0.0],
            width: 1.5,
            height: 2.0,
        }
    }
}

impl WorkingSpace {
    pub fn x_range(&self) -> (f64, f64) {
        let h = 0.5 * self.width;
        (self.center[0] - h, self.center[0] + h)
    }

    pub fn y_range(&self) -> (f64, f64) {
        let h = 0.5 * self.height;
        (self.center[1] - h, self.center[1] + h)
    }

    /// Closest and farthest base distance over the closed rectangle.
    pub fn base_distance_bounds(&self) -> (f64, f64) {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        let cx = 0.0_f64.clamp(x0, x1);
        let cy = 0.0_f64.clamp(y0, y1);
        let near = cx.hypot(cy);
        let far = x0.abs().max(x1.abs()).hypot(y0.abs().max(y1.abs()));
        (near, far)
    }

    /// Checks the rectangle is finite and non-empty.
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::invalid("working space must have positive width and height"));
        }
        if !(self.center[0].is_finite() && self.center[1].is_finite()) {
            return Err(Error::invalid("working space center must be finite"));
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate), additionally requiring the rectangle to
    /// sit inside the annulus where every pose has a single closed kernel loop.
    pub fn validate_reachable(&self) -> Result<()> {
        self.validate()?;
        let (near, far) = self.base_distance_bounds();
        if near < SEGMENT_LENGTH || far >= 3.0 * SEGMENT_LENGTH {
            return Err(Error::invalid(format!(
                "working space spans base distances [{near:.3}, {far:.3}], outside [1, 3)"
            )));
        }
        Ok(())
    }
}

/// Orientation and lens position with the orientation left unreduced.
#[inline]
pub(crate) fn pose_unreduced(m: &[f64; N_JOINTS]) -> [f64; 3] {
    let t1 = m[0];
    let t12 = t1 + m[1];
    let t123 = t12 + m[2];
    let x = t1.cos() + t12.cos() + t123.cos();
    let y = t1.sin() + t12.sin() + t123.sin();
    [t123 + m[3], x, y]
}

pub fn forward_kinematics(m: &MotorConfig) -> RetinaPose {
    let [alpha, x, y] = pose_unreduced(&m.0);
    RetinaPose {
        x,
        y,
        alpha: alpha.rem_euclid(TAU),
    }
}

/// Jacobian with rows (∂α/∂m, ∂x/∂m, ∂y/∂m).
pub fn jacobian(m: &MotorConfig) -> Matrix3x4<f64> {
    let t1 = m.0[0];
    let t12 = t1 + m.0[1];
    let t123 = t12 + m.0[2];
    let (s1, c1) = t1.sin_cos();
    let (s12, c12) = t12.sin_cos();
    let (s123, c123) = t123.sin_cos();
    Matrix3x4::new(
        1.0, 1.0, 1.0, 1.0,
        -s1 - s12 - s123, -s12 - s123, -s123, 0.0,
        c1 + c12 + c123, c12 + c123, c123, 0.0,
    )
}

pub fn in_working_space(pose: &RetinaPose, ws: &WorkingSpace) -> bool {
    let (x0, x1) = ws.x_range();
    let (y0, y1) = ws.y_range();
    (x0..=x1).contains(&pose.x) && (y0..=y1).contains(&pose.y)
}

/// Closed-form inverse kinematics used to build deterministic probe families.
///
/// The third segment is placed so that the wrist sits midway through its
/// feasible distance range, and the two-link sub-chain takes the elbow-up
/// branch. Returns `None` outside the open annulus 1 < r < 3.
pub fn inverse_kinematics(pose: &RetinaPose) -> Option<MotorConfig> {
    let r = pose.base_distance();
    if !(r > SEGMENT_LENGTH && r < 3.0 * SEGMENT_LENGTH) {
        return None;
    }
    let heading = pose.y.atan2(pose.x);
    let wrist_r = 0.5 * ((r - 1.0) + (r + 1.0).min(2.0));
    let cos_d = ((r * r + 1.0 - wrist_r * wrist_r) / (2.0 * r)).clamp(-1.0, 1.0);
    let phi = heading + cos_d.acos();
    let wx = pose.x - phi.cos();
    let wy = pose.y - phi.sin();
    let cos_elbow = ((wx * wx + wy * wy - 2.0) / 2.0).clamp(-1.0, 1.0);
    let m2 = cos_elbow.acos();
    let m1 = wy.atan2(wx) - m2.sin().atan2(1.0 + m2.cos());
    let m3 = phi - m1 - m2;
    let m4 = pose.alpha - phi;
    Some(MotorConfig([m1, m2, m3, m4]))
}
