//! Frame conventions and attitude conversions.
//!
//! World and body frames are FLU (x forward, y left, z up). Attitudes use the
//! intrinsic Z-Y-X sequence: `R = Rz(yaw) · Ry(pitch) · Rx(roll)`, mapping
//! body vectors into the world frame. Under this convention a positive pitch
//! tilts the thrust axis toward +x (nose down) and a positive roll tilts it
//! toward −y.

use nalgebra::Matrix3;
use std::f64::consts::{PI, TAU};

use crate::types::{Attitude, Vec3};

/// Body-to-world rotation for a Z-Y-X attitude.
pub fn euler_to_rotation(att: &Attitude) -> Matrix3<f64> {
    let (sr, cr) = att.roll.sin_cos();
    let (sp, cp) = att.pitch.sin_cos();
    let (sy, cy) = att.yaw.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Body z-axis expressed in the world frame, the only direction thrust acts along.
pub fn thrust_axis(att: &Attitude) -> Vec3 {
    let (sr, cr) = att.roll.sin_cos();
    let (sp, cp) = att.pitch.sin_cos();
    let (sy, cy) = att.yaw.sin_cos();
    Vec3::new(cy * sp * cr + sy * sr, sy * sp * cr - cy * sr, cp * cr)
}

/// Rotates the horizontal part of a world vector into the heading frame.
/// The vertical component passes through.
pub fn yaw_rotate_world_to_body(v: &Vec3, yaw: f64) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    Vec3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
}

/// Inverse of [`yaw_rotate_world_to_body`].
pub fn yaw_rotate_body_to_world(v: &Vec3, yaw: f64) -> Vec3 {
    yaw_rotate_world_to_body(v, -yaw)
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Converts Z-Y-X Euler angle rates into body rates (p, q, r).
pub fn euler_rates_to_body_rates(att: &Attitude, roll_rate: f64, pitch_rate: f64, yaw_rate: f64) -> Vec3 {
    let (sr, cr) = att.roll.sin_cos();
    let (sp, cp) = att.pitch.sin_cos();
    Vec3::new(
        roll_rate - yaw_rate * sp,
        pitch_rate * cr + yaw_rate * sr * cp,
        -pitch_rate * sr + yaw_rate * cr * cp,
    )
}

/// Inverse of [`euler_rates_to_body_rates`]; returns (roll, pitch, yaw) rates.
/// Pitch must stay away from ±90°.
pub fn body_rates_to_euler_rates(att: &Attitude, body: &Vec3) -> Vec3 {
    let (sr, cr) = att.roll.sin_cos();
    let (sp, cp) = att.pitch.sin_cos();
    let yaw_rate = (sr * body.y + cr * body.z) / cp;
    Vec3::new(body.x + yaw_rate * sp, cr * body.y - sr * body.z, yaw_rate)
}
