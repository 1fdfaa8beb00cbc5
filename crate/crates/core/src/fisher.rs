//! Fisher discriminant, Fisher subspace, overlap, and subspace-perturbation checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eigen};
use crate::mixture::{isotropic_params, GaussianMixture};

const ISOTROPY_TOL: f64 = 1e-8;
const RANK_TOL: f64 = 1e-8;

/// Orthonormal basis of a subspace, stored as columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis {
    #[serde(with = "crate::io::matrix_format")]
    columns: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        let deviation = linalg::orthonormality_defect(&columns);
        if deviation > 1e-10 {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Self { columns })
    }

    /// Orthonormalizes the span of arbitrary columns (rank threshold `1e-8` relative).
    pub fn span_of(cols: &DMatrix<f64>) -> Self {
        let (columns, _) = linalg::column_span(cols, RANK_TOL);
        Self { columns }
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.columns.nrows()
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.columns * (self.columns.transpose() * v)
    }
}

/// Overlap of an isotropic mixture and the Fisher subspace achieving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub phi: f64,
    pub fisher_basis: SubspaceBasis,
    /// Spectrum of `Σ̄ = Σ w_i Σ_i`, descending.
    pub sigma_bar_eigenvalues: Vec<f64>,
}

/// `J(p) = p^T Σ̄ p / p^T Cov p` where `Cov` is the mixture covariance. For a
/// centered mixture the denominator is `p^T Σ w_i (Σ_i + μ_i μ_i^T) p`.
pub fn fisher_discriminant(mix: &GaussianMixture, p: &DVector<f64>) -> Result<f64> {
    if p.len() != mix.n() {
        return Err(Error::DimensionMismatch {
            expected: mix.n(),
            got: p.len(),
        });
    }
    if (p.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("direction must be a unit vector, |p| = {}", p.norm())));
    }
    let num = p.dot(&(mix.within_covariance() * p));
    let den = p.dot(&(mix.covariance() * p));
    if !(den > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}

/// Fisher subspace of an isotropic mixture: the span of the `k-1` smallest
/// eigenvectors of `Σ̄`, which coincides with the span of the means. The overlap is
/// the `(k-1)`-th smallest eigenvalue. For `k = 1` the basis is empty and `phi = 0`.
pub fn fisher_subspace(mix: &GaussianMixture) -> Result<OverlapReport> {
    let (mean_dev, cov_dev) = mix.isotropy_defect();
    if mean_dev > ISOTROPY_TOL || cov_dev > ISOTROPY_TOL {
        return Err(Error::NotIsotropic(format!(
            "|mean| = {mean_dev:e}, |cov - I| = {cov_dev:e}"
        )));
    }
    let (n, k) = (mix.n(), mix.k());
    if k - 1 > n {
        return Err(Error::MeanSpanDeficient { rank: n, needed: k - 1 });
    }
    let scaled: Vec<DVector<f64>> = mix
        .means()
        .iter()
        .zip(mix.weights())
        .map(|(mu, w)| mu * w.sqrt())
        .collect();
    let (_, rank) = linalg::column_span(&DMatrix::from_columns(&scaled), RANK_TOL);
    if rank < k - 1 {
        return Err(Error::MeanSpanDeficient { rank, needed: k - 1 });
    }
    let eig = sym_eigen(&mix.within_covariance());
    let (phi, basis) = if k == 1 {
        (0.0, DMatrix::zeros(n, 0))
    } else {
        (eig.values[n - k + 1], eig.bottom(k - 1))
    };
    Ok(OverlapReport {
        phi,
        fisher_basis: SubspaceBasis { columns: basis },
        sigma_bar_eigenvalues: eig.values,
    })
}

/// Overlap of any mixture, computed after moving it to isotropic position.
pub fn overlap(mix: &GaussianMixture) -> Result<f64> {
    Ok(overlap_report(mix)?.phi)
}

pub fn overlap_report(mix: &GaussianMixture) -> Result<OverlapReport> {
    let (_, iso) = isotropic_params(mix)?;
    fisher_subspace(&iso)
}

/// `(1 + w1 w2 t^2)^{-1}`, an upper bound on `J(p)` (hence on the overlap) for a
/// two-component mixture separated by `t` standard deviations along `p`.
pub fn overlap_bound_from_separation(mix2: &GaussianMixture, p: &DVector<f64>, t: f64) -> Result<f64> {
    if mix2.k() != 2 {
        return Err(Error::InvalidArgument(format!("need a 2-component mixture, got k = {}", mix2.k())));
    }
    if p.len() != mix2.n() {
        return Err(Error::DimensionMismatch {
            expected: mix2.n(),
            got: p.len(),
        });
    }
    if (p.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument("direction must be a unit vector".into()));
    }
    let (w, mu, s) = (mix2.weights(), mix2.means(), mix2.covariances());
    let gap = p.dot(&(&mu[0] - &mu[1])).abs();
    let spread = (w[0] * p.dot(&(&s[0] * p))).sqrt() + (w[1] * p.dot(&(&s[1] * p))).sqrt();
    let required = t * spread;
    if !(gap > required) {
        return Err(Error::SeparationViolated { gap, required });
    }
    Ok(1.0 / (1.0 + w[0] * w[1] * t * t))
}

/// `σ_min(F^T V)`: the smallest norm of the projection onto `F` of a unit vector in `V`.
pub fn subspace_affinity(v: &SubspaceBasis, f: &SubspaceBasis) -> Result<f64> {
    if v.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: v.dim(),
        });
    }
    if v.ambient() != f.ambient() {
        return Err(Error::DimensionMismatch {
            expected: f.ambient(),
            got: v.ambient(),
        });
    }
    if v.dim() == 0 {
        return Ok(1.0);
    }
    let cross = f.columns().transpose() * v.columns();
    Ok(linalg::smallest_singular_value(&cross).min(1.0))
}

/// Perturbation check for the top-`r` invariant subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StewartReport {
    /// `4 |E21| / d`.
    pub bound: f64,
    /// `|V^T P2|`: V top-r eigenvectors of the perturbed matrix, P2 the bottom
    /// `n - r` eigenvectors of the unperturbed one.
    pub actual: f64,
    /// Eigengap `d = λ_r - λ_{r+1}` of the unperturbed matrix.
    pub gap: f64,
    pub perturbation_norm: f64,
    /// `d > 0` and `|E| <= d / 5`.
    pub applicable: bool,
}

pub fn stewart_bound(gamma: &DMatrix<f64>, perturbed: &DMatrix<f64>, r: usize) -> Result<StewartReport> {
    let n = gamma.nrows();
    if gamma.ncols() != n || perturbed.shape() != (n, n) {
        return Err(Error::InvalidArgument("stewart_bound needs two square matrices of equal size".into()));
    }
    if r == 0 || r >= n {
        return Err(Error::InvalidArgument(format!("split r = {r} must lie in 1..{n}")));
    }
    let base = sym_eigen(gamma);
    let frame = &base.vectors;
    let e = frame.transpose() * (perturbed - gamma) * frame;
    let e21 = linalg::block(&e, r, 0, n - r, r);
    let gap = base.values[r - 1] - base.values[r];
    let perturbation_norm = linalg::spectral_norm(&e);
    let bound = if gap > 0.0 {
        4.0 * linalg::spectral_norm(&e21) / gap
    } else {
        f64::INFINITY
    };
    let top = sym_eigen(perturbed).top(r);
    let p2 = base.bottom(n - r);
    let actual = linalg::spectral_norm(&(top.transpose() * p2));
    Ok(StewartReport {
        bound,
        actual,
        gap,
        perturbation_norm,
        applicable: gap > 0.0 && perturbation_norm <= gap / 5.0,
    })
}
