//! Gaussian-reweighted moments: Monte Carlo estimates from points and the exact
//! closed form for Gaussian mixtures.
//!
//! Every point is weighted by `exp(-|x|^2 / (2 alpha))`. For a single Gaussian
//! `N(mu, Sigma)` with `Sigma = Q Λ Q^T` and `W = diag(alpha / (alpha + λ_j))`,
//!
//! ```text
//! E[f(x) e^{-|x|^2/(2 alpha)}] = rho * E[f(y)],   y ~ N(Q W Q^T mu, Q W Λ Q^T),
//! rho = det(W)^{1/2} exp(-mu^T Q W Q^T mu / (2 alpha)),
//! ```
//!
//! which gives the exact reweighted mean and second moment of any mixture.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eigen};
use crate::mixture::{validate_spd, GaussianMixture};

/// Reweighted first and second moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightedMoments {
    /// Reweighted mean `u`.
    #[serde(with = "crate::io::vector_format")]
    pub u: DVector<f64>,
    /// Reweighted second-moment matrix `M`.
    #[serde(with = "crate::io::matrix_format")]
    pub m: DMatrix<f64>,
    pub alpha: f64,
    /// Number of points; zero for exact moments.
    pub count: usize,
    /// Standard error of `|u|` from sampling; zero for exact moments.
    pub u_std_error: f64,
}

impl ReweightedMoments {
    pub fn dim(&self) -> usize {
        self.u.len()
    }
}

/// Reweighting factor and perturbed Gaussian `y` for one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentReweighting {
    pub rho: f64,
    pub mean_y: DVector<f64>,
    pub cov_y: DMatrix<f64>,
}

#[inline]
pub fn weight(sq_norm: f64, alpha: f64) -> f64 {
    (-sq_norm / (2.0 * alpha)).exp()
}

const CHUNK: usize = 4096;

struct Partial {
    u: DVector<f64>,
    m: DMatrix<f64>,
    w_sum: f64,
}

fn accumulate(points: &DMatrix<f64>, rows: std::ops::Range<usize>, alpha: f64) -> Partial {
    let n = points.ncols();
    let mut u = DVector::zeros(n);
    let mut m = DMatrix::zeros(n, n);
    let mut w_sum = 0.0;
    let mut x = DVector::zeros(n);
    for r in rows {
        for j in 0..n {
            x[j] = points[(r, j)];
        }
        let w = weight(x.norm_squared(), alpha);
        w_sum += w;
        u.axpy(w, &x, 1.0);
        m.ger(w, &x, &x, 1.0);
    }
    Partial { u, m, w_sum }
}

/// Fixed-chunk pairwise reduction so the result does not depend on thread scheduling.
fn pairwise(mut parts: Vec<Partial>) -> Partial {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.u += b.u;
                a.m += b.m;
                a.w_sum += b.w_sum;
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

/// Monte Carlo reweighted moments
/// `u = (1/m) Σ x_j w_j`, `M = (1/m) Σ x_j x_j^T w_j`, `w_j = exp(-|x_j|^2 / (2 alpha))`.
///
/// `u_std_error` estimates the sampling standard deviation of `|u|` assuming the
/// points are centered (as produced by whitening the same sample), in which case
/// `u = (1/m) Σ x_j (w_j - w̄)` exactly.
pub fn sample_reweighted_moments(points: &DMatrix<f64>, alpha: f64) -> Result<ReweightedMoments> {
    let (count, n) = points.shape();
    if count == 0 {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let starts: Vec<usize> = (0..count).step_by(CHUNK).collect();
    let parts: Vec<Partial> = starts
        .par_iter()
        .map(|&s| accumulate(points, s..(s + CHUNK).min(count), alpha))
        .collect();
    let total = pairwise(parts);
    let inv = 1.0 / count as f64;
    let u = total.u * inv;
    let m = linalg::symmetrize(&(total.m * inv));
    let w_bar = total.w_sum * inv;

    // Second pass for the standard error of the centered-weight form.
    let var_parts: Vec<f64> = starts
        .par_iter()
        .map(|&s| {
            let mut acc = 0.0;
            for r in s..(s + CHUNK).min(count) {
                let row = points.row(r);
                let w = weight(row.norm_squared(), alpha) - w_bar;
                for j in 0..n {
                    let d = row[j] * w - u[j];
                    acc += d * d;
                }
            }
            acc
        })
        .collect();
    let ss: f64 = var_parts.iter().sum();
    let u_std_error = ss.sqrt() * inv;

    Ok(ReweightedMoments {
        u,
        m,
        alpha,
        count,
        u_std_error,
    })
}

/// Exact reweighting of one Gaussian component.
pub fn reweight_gaussian(mu: &DVector<f64>, sigma: &DMatrix<f64>, alpha: f64) -> Result<ComponentReweighting> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let n = mu.len();
    validate_spd(sigma, n, "sigma")?;
    let eig = sym_eigen(sigma);
    let shrink = |l: f64| alpha / (alpha + l);
    // Q W Q^T and Q W Λ Q^T.
    let qwq = linalg::sym_apply(&eig, shrink);
    let cov_y = linalg::sym_apply(&eig, |l| shrink(l) * l);
    let mean_y = &qwq * mu;
    let log_det_half: f64 = eig.values.iter().map(|&l| 0.5 * shrink(l).ln()).sum();
    let quad = mu.dot(&mean_y);
    let rho = (log_det_half - quad / (2.0 * alpha)).exp();
    Ok(ComponentReweighting { rho, mean_y, cov_y })
}

pub fn component_reweightings(mix: &GaussianMixture, alpha: f64) -> Result<Vec<ComponentReweighting>> {
    mix.means()
        .iter()
        .zip(mix.covariances())
        .map(|(mu, sigma)| reweight_gaussian(mu, sigma, alpha))
        .collect()
}

/// The vector of `rho_i`.
pub fn rhos(mix: &GaussianMixture, alpha: f64) -> Result<Vec<f64>> {
    Ok(component_reweightings(mix, alpha)?.into_iter().map(|c| c.rho).collect())
}

/// Exact `u = Σ w_i ρ_i E[y_i]` and `M = Σ w_i ρ_i (Cov(y_i) + E[y_i] E[y_i]^T)`.
pub fn exact_mixture_moments(mix: &GaussianMixture, alpha: f64) -> Result<ReweightedMoments> {
    let n = mix.n();
    let mut u = DVector::zeros(n);
    let mut m = DMatrix::zeros(n, n);
    for (w, c) in mix.weights().iter().zip(component_reweightings(mix, alpha)?) {
        let s = w * c.rho;
        u += &c.mean_y * s;
        m += (&c.cov_y + linalg::outer(&c.mean_y)) * s;
    }
    Ok(ReweightedMoments {
        u,
        m: linalg::symmetrize(&m),
        alpha,
        count: 0,
        u_std_error: 0.0,
    })
}

/// Block-diagonal approximation `Γ` of the reweighted second moment of an isotropic
/// mixture, in the frame where `intermean_basis` spans the first `k-1` axes:
///
/// ```text
/// Γ11 = Σ ρ_i (w_i μ̃_i μ̃_i^T + A_i)
/// Γ22 = Σ ρ_i D_i - ρ_i / (w_i α) D_i^2
/// ```
///
/// with `w_i Σ_i = [[A_i, B_i^T], [B_i, D_i]]`. The result is rotated back to the
/// original coordinates.
pub fn exact_gamma(mix: &GaussianMixture, alpha: f64, intermean_basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = mix.n();
    if intermean_basis.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: intermean_basis.nrows(),
        });
    }
    let r = intermean_basis.ncols();
    let deviation = linalg::orthonormality_defect(intermean_basis);
    if deviation > 1e-10 {
        return Err(Error::NotOrthonormal { deviation });
    }
    let complement = linalg::orthogonal_complement(intermean_basis);
    let mut frame = DMatrix::zeros(n, n);
    frame.columns_mut(0, r).copy_from(intermean_basis);
    frame.columns_mut(r, n - r).copy_from(&complement);

    let reweightings = component_reweightings(mix, alpha)?;
    let mut g11 = DMatrix::zeros(r, r);
    let mut g22 = DMatrix::zeros(n - r, n - r);
    for (i, c) in reweightings.iter().enumerate() {
        let w = mix.weights()[i];
        let rotated = frame.transpose() * (&mix.covariances()[i] * w) * &frame;
        let a = linalg::block(&rotated, 0, 0, r, r);
        let d = linalg::block(&rotated, r, r, n - r, n - r);
        let mu_t = intermean_basis.transpose() * &mix.means()[i];
        g11 += (linalg::outer(&mu_t) * w + a) * c.rho;
        g22 += &d * c.rho - (&d * &d) * (c.rho / (w * alpha));
    }
    let mut gamma_rot = DMatrix::zeros(n, n);
    gamma_rot.view_mut((0, 0), (r, r)).copy_from(&g11);
    gamma_rot.view_mut((r, r), (n - r, n - r)).copy_from(&g22);
    Ok(linalg::symmetrize(&(&frame * gamma_rot * frame.transpose())))
}
