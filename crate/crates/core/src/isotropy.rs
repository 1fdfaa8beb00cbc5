//! Empirical moments and the whitening transform applied at every recursion node.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eigen};
use crate::mixture::AffineMap;

/// Sample mean and covariance (divisor `m`).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub count: usize,
}

pub fn estimate_moments(points: &DMatrix<f64>) -> Result<MomentEstimate> {
    let m = points.nrows();
    if m < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: m });
    }
    let mean = points.row_mean().transpose();
    let mut centered = points.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let covariance = linalg::symmetrize(&(centered.transpose() * &centered / m as f64));
    Ok(MomentEstimate {
        mean,
        covariance,
        count: m,
    })
}

/// Eigenvalue floor relative to the largest sample-covariance eigenvalue.
pub const DEFAULT_RELATIVE_FLOOR: f64 = 1e-8;

/// Whitening of a point set by its own moments.
#[derive(Debug, Clone)]
pub struct Whitened {
    pub map: AffineMap,
    pub points: DMatrix<f64>,
    /// Number of covariance directions whose eigenvalue was raised to the floor.
    pub floored: usize,
}

/// Puts `points` in isotropic position with the symmetric whitening
/// `W = Q Λ^{-1/2} Q^T`, `b = -W μ̂`. Eigenvalues below `eps_floor` are replaced by
/// `eps_floor`, so a deficient direction is scaled by `eps_floor^{-1/2}`.
pub fn whiten(points: &DMatrix<f64>, eps_floor: f64) -> Result<Whitened> {
    let (m, n) = points.shape();
    if m < n + 1 {
        return Err(Error::InsufficientSamples { need: n + 1, got: m });
    }
    if !(eps_floor > 0.0) {
        return Err(Error::InvalidArgument(format!("eps_floor must be positive, got {eps_floor}")));
    }
    let moments = estimate_moments(points)?;
    let eig = sym_eigen(&moments.covariance);
    if eig.values.iter().all(|&v| v < eps_floor) {
        return Err(Error::DegenerateCell { floor: eps_floor });
    }
    let floored = eig.values.iter().filter(|&&v| v < eps_floor).count();
    let linear = linalg::sym_apply(&eig, |l| 1.0 / l.max(eps_floor).sqrt());
    let offset = -(&linear * &moments.mean);
    let map = AffineMap { linear, offset };
    let points = map.apply_points(points);
    Ok(Whitened { map, points, floored })
}

/// [`whiten`] with the floor set to `relative * λ_max` of the sample covariance.
pub fn whiten_relative(points: &DMatrix<f64>, relative: f64) -> Result<Whitened> {
    let moments = estimate_moments(points)?;
    let top = sym_eigen(&moments.covariance).values[0];
    if !(top > 0.0) {
        return Err(Error::DegenerateCell { floor: 0.0 });
    }
    whiten(points, relative * top)
}
