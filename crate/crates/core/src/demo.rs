//! Two-dimensional illustration: an isotropic distribution on two parallel segments,
//! rotated by an unknown angle, whose axes reappear after projecting each point to
//! the unit circle and taking the direction of largest variance.

use nalgebra::{DMatrix, DVector, Rotation2, Vector2};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::rng::rng_from;

#[derive(Debug, Clone, Serialize)]
pub struct CircleDemo {
    pub angle: f64,
    /// Rotated points, one row each.
    #[serde(with = "crate::io::matrix_format")]
    pub points: DMatrix<f64>,
    /// The same points scaled to unit length.
    #[serde(with = "crate::io::matrix_format")]
    pub projected: DMatrix<f64>,
    #[serde(with = "crate::io::vector_format")]
    pub recovered_axis: DVector<f64>,
    /// Angle between the recovered and the true rotated first axis, in `[0, π/2]`.
    pub axis_error: f64,
}

/// Uniform points on `{±1} x [-√3, √3]` (mean zero, identity covariance) rotated by
/// `angle`. The top eigenvector of the second moment of the normalized points
/// estimates the rotated first axis.
pub fn unit_circle_demo(m: usize, angle: f64, seed: u64) -> Result<CircleDemo> {
    if m < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: m });
    }
    let rot = Rotation2::new(angle);
    let mut rng = rng_from(seed, &[0x4349_5243]);
    let half = 3.0_f64.sqrt();
    let mut points = DMatrix::zeros(m, 2);
    let mut projected = DMatrix::zeros(m, 2);
    for i in 0..m {
        let x = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let y = rng.random_range(-half..half);
        let p = rot * Vector2::new(x, y);
        let q = p / p.norm();
        points.set_row(i, &p.transpose());
        projected.set_row(i, &q.transpose());
    }
    let second = projected.transpose() * &projected / m as f64;
    let axis = sym_eigen(&second).vectors.column(0).into_owned();
    let truth = rot * Vector2::x();
    let cos = (axis[0] * truth[0] + axis[1] * truth[1]).abs().min(1.0);
    Ok(CircleDemo {
        angle,
        points,
        projected,
        recovered_axis: axis,
        axis_error: cos.acos(),
    })
}
