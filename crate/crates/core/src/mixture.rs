//! Gaussian mixtures: representation, sampling, affine pushforward, isotropic
//! position, and the fixture generators used throughout the test suites.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher;
use crate::linalg::{self, sym_eigen};
use crate::rng::rng_from;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
const SPD_REL_FLOOR: f64 = 1e-12;

/// Ground-truth mixture `sum_i w_i N(mu_i, Sigma_i)` in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

impl GaussianMixture {
    /// Validates weights (positive, summing to one), dimensions, and that every
    /// covariance is symmetric with smallest eigenvalue above `1e-12 * trace`.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidMixture("k must be at least 1".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::InvalidMixture(format!(
                "{k} weights but {} means and {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        let n = means[0].len();
        if n == 0 {
            return Err(Error::InvalidMixture("dimension n must be at least 1".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidMixture(format!("weight {i} = {w} is not positive")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMixture(format!("weights sum to {total}, not 1")));
        }
        for (i, mu) in means.iter().enumerate() {
            if mu.len() != n {
                return Err(Error::InvalidMixture(format!(
                    "mean {i} has dimension {}, expected {n}",
                    mu.len()
                )));
            }
            if mu.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMixture(format!("mean {i} has a non-finite entry")));
            }
        }
        for (i, sigma) in covariances.iter().enumerate() {
            validate_spd(sigma, n, &format!("covariance {i}"))?;
        }
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn n(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `sum_i w_i mu_i`.
    pub fn mean(&self) -> DVector<f64> {
        self.weights
            .iter()
            .zip(&self.means)
            .fold(DVector::zeros(self.n()), |acc, (w, mu)| acc + mu * *w)
    }

    /// `sum_i w_i (Sigma_i + mu_i mu_i^T)`, the uncentered second moment.
    pub fn second_moment(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut acc = DMatrix::zeros(n, n);
        for ((w, mu), sigma) in self.weights.iter().zip(&self.means).zip(&self.covariances) {
            acc += (sigma + linalg::outer(mu)) * *w;
        }
        linalg::symmetrize(&acc)
    }

    /// Covariance of the mixture distribution.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        linalg::symmetrize(&(self.second_moment() - linalg::outer(&mean)))
    }

    /// `sum_i w_i Sigma_i`, the averaged intra-component covariance.
    pub fn within_covariance(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut acc = DMatrix::zeros(n, n);
        for (w, sigma) in self.weights.iter().zip(&self.covariances) {
            acc += sigma * *w;
        }
        linalg::symmetrize(&acc)
    }

    /// `(||mean||, ||covariance - I||_2)`.
    pub fn isotropy_defect(&self) -> (f64, f64) {
        let n = self.n();
        let mean = self.mean().norm();
        let cov = linalg::spectral_norm(&(self.second_moment() - DMatrix::identity(n, n)));
        (mean, cov)
    }

    pub fn is_isotropic(&self, tol: f64) -> bool {
        let (m, c) = self.isotropy_defect();
        m <= tol && c <= tol
    }

    /// The mixture restricted to `components`, weights renormalized.
    pub fn sub_mixture(&self, components: &[usize]) -> Result<GaussianMixture> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("empty component subset".into()));
        }
        let mut weights = Vec::with_capacity(components.len());
        let mut means = Vec::with_capacity(components.len());
        let mut covs = Vec::with_capacity(components.len());
        for &c in components {
            if c >= self.k() {
                return Err(Error::InvalidArgument(format!("component {c} out of range")));
            }
            weights.push(self.weights[c]);
            means.push(self.means[c].clone());
            covs.push(self.covariances[c].clone());
        }
        normalize(&mut weights);
        GaussianMixture::new(weights, means, covs)
    }

    /// Lower Cholesky factors `L_i` with `L_i L_i^T = Sigma_i`.
    pub fn cholesky_factors(&self) -> Vec<DMatrix<f64>> {
        self.covariances
            .iter()
            .map(|s| {
                s.clone()
                    .cholesky()
                    .expect("validated covariance is positive definite")
                    .l()
            })
            .collect()
    }

    /// Draws `m` labeled points. Identical `(self, m, seed)` gives bit-identical output.
    pub fn sample(&self, m: usize, seed: u64) -> LabeledSample {
        self.sample_with_factors(&self.cholesky_factors(), m, seed)
    }

    /// Sampling with caller-supplied square-root factors (`F_i F_i^T = Sigma_i`).
    ///
    /// Each point consumes one uniform for the component choice followed by `n`
    /// standard normals `z`, and is `mu_i + F_i z`. Two mixtures related by an
    /// affine map `x -> Wx + b` and sampled with factors `F_i` and `W F_i` from the
    /// same seed therefore produce points related by the same map.
    pub fn sample_with_factors(&self, factors: &[DMatrix<f64>], m: usize, seed: u64) -> LabeledSample {
        assert_eq!(factors.len(), self.k(), "one factor per component");
        let n = self.n();
        let mut rng = rng_from(seed, &[0x5A4D_504C]);
        let cumulative: Vec<f64> = self
            .weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let mut points = DMatrix::zeros(m, n);
        let mut labels = Vec::with_capacity(m);
        let mut z = DVector::zeros(n);
        for row in 0..m {
            let u: f64 = rng.random();
            let comp = cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(self.k() - 1);
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let x = &self.means[comp] + &factors[comp] * &z;
            points.set_row(row, &x.transpose());
            labels.push(comp);
        }
        LabeledSample { points, labels }
    }
}

fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
}

pub(crate) fn validate_spd(sigma: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::InvalidMixture(format!(
            "{what} is {}x{}, expected {n}x{n}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotSpd {
            what: what.into(),
            detail: "non-finite entry".into(),
        });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = sigma[(i, j)].abs().max(sigma[(j, i)].abs()).max(1.0);
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotSpd {
                    what: what.into(),
                    detail: format!(
                        "entries ({i},{j}) = {} and ({j},{i}) = {} differ",
                        sigma[(i, j)],
                        sigma[(j, i)]
                    ),
                });
            }
        }
    }
    let eig = sym_eigen(sigma);
    let smallest = *eig.values.last().unwrap();
    let trace = sigma.trace();
    if !(smallest > SPD_REL_FLOOR * trace) {
        return Err(Error::NotSpd {
            what: what.into(),
            detail: format!("smallest eigenvalue {smallest:e} <= 1e-12 * trace ({trace:e})"),
        });
    }
    Ok(())
}

/// Point matrix (one row per point) with the index of the generating component.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub points: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl LabeledSample {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// `x -> W x + b` with invertible `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    #[serde(with = "crate::io::matrix_format")]
    pub linear: DMatrix<f64>,
    #[serde(with = "crate::io::vector_format")]
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(linear: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        let n = linear.nrows();
        if linear.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "linear part is {}x{}, must be square",
                n,
                linear.ncols()
            )));
        }
        if offset.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: offset.len(),
            });
        }
        let map = Self { linear, offset };
        let cond = map.condition_number();
        if !cond.is_finite() {
            return Err(Error::Singular {
                smallest_singular_value: linalg::smallest_singular_value(&map.linear),
            });
        }
        Ok(map)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            linear: DMatrix::identity(n, n),
            offset: DVector::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// Ratio of extreme singular values of the linear part; infinite when singular.
    pub fn condition_number(&self) -> f64 {
        let s = linalg::singular_values(&self.linear);
        let (hi, lo) = (s[0], *s.last().unwrap());
        if lo <= hi * f64::EPSILON || lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.offset
    }

    /// Maps every row of `points`.
    pub fn apply_points(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = points * self.linear.transpose();
        for mut row in out.row_iter_mut() {
            row += self.offset.transpose();
        }
        out
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let inv = self.linear.clone().try_inverse().ok_or(Error::Singular {
            smallest_singular_value: linalg::smallest_singular_value(&self.linear),
        })?;
        let offset = -(&inv * &self.offset);
        Ok(AffineMap { linear: inv, offset })
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        AffineMap {
            linear: &self.linear * &inner.linear,
            offset: &self.linear * &inner.offset + &self.offset,
        }
    }
}

/// Pushforward of the mixture under `x -> W x + b`.
pub fn apply_affine(mix: &GaussianMixture, map: &AffineMap) -> Result<GaussianMixture> {
    if map.dim() != mix.n() {
        return Err(Error::DimensionMismatch {
            expected: mix.n(),
            got: map.dim(),
        });
    }
    if !map.condition_number().is_finite() {
        return Err(Error::Singular {
            smallest_singular_value: linalg::smallest_singular_value(&map.linear),
        });
    }
    let w = &map.linear;
    let means = mix.means().iter().map(|mu| map.apply(mu)).collect();
    let covs = mix
        .covariances()
        .iter()
        .map(|s| linalg::symmetrize(&(w * s * w.transpose())))
        .collect();
    GaussianMixture::new(mix.weights().to_vec(), means, covs)
}

/// Symmetric whitening `W = Q Λ^{-1/2} Q^T` of the mixture covariance, computed
/// from the parameters, together with the resulting isotropic mixture.
pub fn isotropic_params(mix: &GaussianMixture) -> Result<(AffineMap, GaussianMixture)> {
    let cov = mix.covariance();
    let eig = sym_eigen(&cov);
    let threshold = SPD_REL_FLOOR * cov.trace();
    if let Some((index, &eigenvalue)) = eig
        .values
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > threshold))
    {
        return Err(Error::RankDeficient {
            index,
            eigenvalue,
            threshold,
        });
    }
    let linear = linalg::sym_apply(&eig, |l| 1.0 / l.sqrt());
    let offset = -(&linear * mix.mean());
    let map = AffineMap { linear, offset };
    let iso = apply_affine(mix, &map)?;
    Ok((map, iso))
}

/// Two "parallel pancakes": means `±d e_1` (reweighted to a zero mixture mean
/// when `w1 != 1/2`, keeping separation `2d`) and shared covariance
/// `diag(sigma_thin^2, 1, ..., 1)`.
pub fn parallel_pancakes(n: usize, d: f64, sigma_thin: f64, w1: f64) -> Result<GaussianMixture> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("pancakes need n >= 2, got {n}")));
    }
    if !(sigma_thin > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_thin must be positive, got {sigma_thin}")));
    }
    if !(w1 > 0.0 && w1 < 1.0) {
        return Err(Error::InvalidArgument(format!("w1 must lie in (0, 1), got {w1}")));
    }
    let w2 = 1.0 - w1;
    let mut mu1 = DVector::zeros(n);
    let mut mu2 = DVector::zeros(n);
    mu1[0] = 2.0 * d * w2;
    mu2[0] = -2.0 * d * w1;
    let mut sigma = DMatrix::identity(n, n);
    sigma[(0, 0)] = sigma_thin * sigma_thin;
    GaussianMixture::new(vec![w1, w2], vec![mu1, mu2], vec![sigma.clone(), sigma])
}

/// Generic random mixture: weights in `[1/(2k), 2/(k+1)]`-ish range, means spread in a
/// random `(k-1)`-dimensional subspace and centered, Wishart-style covariances.
pub fn random_mixture(k: usize, n: usize, seed: u64) -> Result<GaussianMixture> {
    let parts = random_parts(k, n, seed)?;
    GaussianMixture::new(parts.weights, parts.means, parts.covariances)
}

struct RandomParts {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    mean_basis: DMatrix<f64>,
}

fn random_parts(k: usize, n: usize, seed: u64) -> Result<RandomParts> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("k and n must be positive".into()));
    }
    if k >= 2 && n < k - 1 {
        return Err(Error::InvalidArgument(format!("need n >= k - 1, got n = {n}, k = {k}")));
    }
    let mut rng = rng_from(seed, &[0x4D49_5846]);
    let mut weights: Vec<f64> = (0..k).map(|_| 1.0 + rng.random::<f64>()).collect();
    normalize(&mut weights);
    let dim = k.saturating_sub(1);
    let rot = linalg::random_orthogonal(n, &mut rng);
    let basis = rot.columns(0, dim).into_owned();
    let mut coords: Vec<DVector<f64>> = (0..k).map(|_| linalg::gaussian_vector(dim, &mut rng) * 3.0).collect();
    let center = weights
        .iter()
        .zip(&coords)
        .fold(DVector::zeros(dim), |acc, (w, c)| acc + c * *w);
    for c in coords.iter_mut() {
        *c -= &center;
    }
    let means = coords.iter().map(|c| &basis * c).collect();
    let covariances = (0..k).map(|_| linalg::random_spd(n, 0.1, &mut rng)).collect();
    Ok(RandomParts {
        weights,
        means,
        covariances,
        mean_basis: basis,
    })
}

/// Random centered mixture whose overlap (after isotropic normalization) is within
/// 1% of `target_overlap`. The intra-component variance inside the intermean
/// subspace is rescaled by a factor `s` (covariances `S C_i S` with
/// `S = s P + (I - P)`), and `s` is found by bisection on `log s`.
pub fn random_separable_mixture(k: usize, n: usize, target_overlap: f64, seed: u64) -> Result<GaussianMixture> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need k >= 2, got {k}")));
    }
    if n < k - 1 {
        return Err(Error::InvalidArgument(format!("need n >= k - 1, got n = {n}, k = {k}")));
    }
    if !(target_overlap > 0.0 && target_overlap < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target overlap must lie in (0, 1), got {target_overlap}"
        )));
    }
    let parts = random_parts(k, n, seed)?;
    let proj = &parts.mean_basis * parts.mean_basis.transpose();
    let complement = DMatrix::identity(n, n) - &proj;
    let build = |log_scale: f64| -> Result<GaussianMixture> {
        let s = &proj * log_scale.exp() + &complement;
        let covs = parts
            .covariances
            .iter()
            .map(|c| linalg::symmetrize(&(&s * c * &s)))
            .collect();
        GaussianMixture::new(parts.weights.clone(), parts.means.clone(), covs)
    };
    let overlap_at = |log_scale: f64| -> Result<f64> { fisher::overlap(&build(log_scale)?) };

    let (mut lo, mut hi) = (-6.0_f64, 4.0_f64);
    let (phi_lo, phi_hi) = (overlap_at(lo)?, overlap_at(hi)?);
    if !(phi_lo < target_overlap && target_overlap < phi_hi) {
        return Err(Error::Infeasible(format!(
            "target overlap {target_overlap} outside reachable range [{phi_lo:e}, {phi_hi}]"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let phi = overlap_at(mid)?;
        if (phi - target_overlap).abs() <= 0.01 * target_overlap {
            return build(mid);
        }
        if phi < target_overlap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Infeasible(format!(
        "bisection did not reach overlap {target_overlap} within 100 iterations"
    )))
}

/// Equal-weight mixture whose components are images of one another under a cyclic
/// group of orthogonal maps, so every component has the same reweighting factor
/// `rho_i` in isotropic position.
///
/// The group is the cyclic shift of the first `k` coordinates (identity elsewhere),
/// conjugated by a random rotation. Means are the shifted copies of
/// `spread * (e_1 - 1/k)`; the base covariance is a random SPD matrix whose block on
/// the intermean subspace is scaled by `thinness`. Requires `n >= k`.
pub fn symmetric_balanced_mixture(k: usize, n: usize, thinness: f64, seed: u64) -> Result<GaussianMixture> {
    if k < 2 || n < k {
        return Err(Error::InvalidArgument(format!("need k >= 2 and n >= k, got k = {k}, n = {n}")));
    }
    if !(thinness > 0.0) {
        return Err(Error::InvalidArgument("thinness must be positive".into()));
    }
    let mut rng = rng_from(seed, &[0x5359_4D4D]);
    let shift = DMatrix::from_fn(n, n, |i, j| {
        if i < k && j < k {
            if i == (j + 1) % k {
                1.0
            } else {
                0.0
            }
        } else if i == j {
            1.0
        } else {
            0.0
        }
    });
    let mut mu0 = DVector::zeros(n);
    for i in 0..k {
        mu0[i] = if i == 0 { 1.0 } else { 0.0 } - 1.0 / k as f64;
    }
    mu0 *= 2.0;
    // Intermean subspace: the sum-zero vectors in the first k coordinates.
    let mut p = DMatrix::zeros(n, n);
    for i in 0..k {
        for j in 0..k {
            p[(i, j)] = if i == j { 1.0 } else { 0.0 } - 1.0 / k as f64;
        }
    }
    let s = &p * thinness + (DMatrix::identity(n, n) - &p);
    let base = linalg::random_spd(n, 0.2, &mut rng);
    let sigma0 = linalg::symmetrize(&(&s * base * &s));
    let rot = linalg::random_orthogonal(n, &mut rng);

    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    let mut g = DMatrix::identity(n, n);
    for _ in 0..k {
        let h = &rot * &g;
        means.push(&h * &mu0);
        covs.push(linalg::symmetrize(&(&h * &sigma0 * h.transpose())));
        g = &shift * g;
    }
    GaussianMixture::new(vec![1.0 / k as f64; k], means, covs)
}
