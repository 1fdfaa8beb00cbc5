//! Choice of the separating direction from reweighted moments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::reweighting::ReweightedMoments;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    MeanShift,
    Spectral,
}

/// Knobs for the mean-shift branch test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparatorConfig {
    /// `c` in the threshold `sqrt(w_min) / (c * alpha)`.
    pub threshold_constant: f64,
    /// The threshold is raised to at least `z * u_std_error`, so a mean shift that is
    /// indistinguishable from sampling noise is not followed. Zero disables the floor.
    pub noise_z: f64,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        Self {
            threshold_constant: 32.0,
            noise_z: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionChoice {
    #[serde(with = "crate::io::vector_format")]
    pub h: DVector<f64>,
    pub method: Method,
    pub mean_shift_norm: f64,
    pub threshold: f64,
    /// Set when the spectral branch hit a repeated top eigenvalue.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopEigen {
    pub vector: DVector<f64>,
    pub value: f64,
    /// Top eigenvalue has multiplicity > 1 (within `1e-10` relative).
    pub degenerate: bool,
}

pub fn top_eigenvector(m: &DMatrix<f64>) -> TopEigen {
    let eig = sym_eigen(m);
    let value = eig.values[0];
    let scale = value.abs().max(eig.values.last().unwrap().abs()).max(f64::MIN_POSITIVE);
    let degenerate = eig.values.len() > 1 && (eig.values[0] - eig.values[1]) <= 1e-10 * scale;
    TopEigen {
        vector: eig.vectors.column(0).into_owned(),
        value,
        degenerate,
    }
}

/// Top `r` eigenvectors of a symmetric matrix, as columns.
pub fn top_eigenvectors(m: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    sym_eigen(m).top(r)
}

/// `sqrt(w_min) / (32 alpha)` with the default configuration.
pub fn mean_shift_threshold(moments: &ReweightedMoments, wmin: f64, config: &SeparatorConfig) -> f64 {
    let base = wmin.sqrt() / (config.threshold_constant * moments.alpha);
    base.max(config.noise_z * moments.u_std_error)
}

pub fn choose_direction(moments: &ReweightedMoments, wmin: f64) -> Result<DirectionChoice> {
    choose_direction_with(moments, wmin, &SeparatorConfig::default())
}

/// Mean shift `u / |u|` when `|u|` exceeds the threshold, otherwise the top
/// principal component of the reweighted second moment.
pub fn choose_direction_with(
    moments: &ReweightedMoments,
    wmin: f64,
    config: &SeparatorConfig,
) -> Result<DirectionChoice> {
    if !(moments.alpha > 0.0) {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    if !(wmin > 0.0 && wmin <= 1.0) {
        return Err(Error::InvalidArgument(format!("wmin must lie in (0, 1], got {wmin}")));
    }
    let norm = moments.u.norm();
    let threshold = mean_shift_threshold(moments, wmin, config);
    if norm > threshold {
        return Ok(DirectionChoice {
            h: &moments.u / norm,
            method: Method::MeanShift,
            mean_shift_norm: norm,
            threshold,
            degenerate: false,
        });
    }
    if norm == 0.0 && moments.m.iter().all(|&x| x == 0.0) {
        return Err(Error::NoDirection);
    }
    let top = top_eigenvector(&moments.m);
    Ok(DirectionChoice {
        h: top.vector,
        method: Method::Spectral,
        mean_shift_norm: norm,
        threshold,
        degenerate: top.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{isotropic_params, parallel_pancakes};
    use crate::reweighting::exact_mixture_moments;

    fn moments(u: DVector<f64>, m: DMatrix<f64>, alpha: f64) -> ReweightedMoments {
        ReweightedMoments {
            u,
            m,
            alpha,
            count: 0,
            u_std_error: 0.0,
        }
    }

    #[test]
    fn mean_shift_normalizes() {
        let mom = moments(DVector::from_vec(vec![1.0, 0.0, 0.0]), DMatrix::identity(3, 3), 6.0);
        let c = choose_direction(&mom, 0.5).unwrap();
        assert_eq!(c.method, Method::MeanShift);
        assert_eq!(c.h.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_moments_error() {
        let mom = moments(DVector::zeros(2), DMatrix::zeros(2, 2), 1.0);
        assert!(matches!(choose_direction(&mom, 0.5), Err(Error::NoDirection)));
    }

    #[test]
    fn noise_floor_raises_threshold() {
        let mut mom = moments(DVector::from_vec(vec![0.02, 0.0]), DMatrix::identity(2, 2), 2.0);
        assert_eq!(choose_direction(&mom, 0.5).unwrap().method, Method::MeanShift);
        mom.u_std_error = 0.01;
        let c = choose_direction(&mom, 0.5).unwrap();
        assert_eq!(c.method, Method::Spectral);
        assert!((c.threshold - 0.03).abs() < 1e-15);
    }

    #[test]
    fn diagonal_top_eigenvector() {
        let t = top_eigenvector(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 1.0])));
        assert_eq!(t.vector.as_slice(), &[1.0, 0.0, 0.0]);
        assert!(!t.degenerate);
        assert!(top_eigenvector(&DMatrix::identity(3, 3)).degenerate);
    }

    #[test]
    fn balanced_pancakes_take_spectral_branch() {
        let n = 6;
        let (_, iso) = isotropic_params(&parallel_pancakes(n, 1.0, 0.01, 0.5).unwrap()).unwrap();
        let alpha = n as f64 / 0.5;
        let mom = exact_mixture_moments(&iso, alpha).unwrap();
        let c = choose_direction(&mom, 0.5).unwrap();
        assert_eq!(c.method, Method::Spectral);
        let axis = (&iso.means()[0] - &iso.means()[1]).normalize();
        assert!(c.h.dot(&axis).abs() >= 1.0 - 1e-6);
    }

    #[test]
    fn imbalanced_pancakes_take_mean_shift_branch() {
        let n = 6;
        let (_, iso) = isotropic_params(&parallel_pancakes(n, 1.0, 0.01, 0.9).unwrap()).unwrap();
        let wmin = 0.1;
        let alpha = n as f64 / wmin;
        let mom = exact_mixture_moments(&iso, alpha).unwrap();
        let c = choose_direction(&mom, wmin).unwrap();
        assert_eq!(c.method, Method::MeanShift);
        assert!(c.mean_shift_norm > c.threshold);
        let axis = (&iso.means()[0] - &iso.means()[1]).normalize();
        assert!(c.h.dot(&axis).abs() >= 1.0 - 1e-3);
    }
}
