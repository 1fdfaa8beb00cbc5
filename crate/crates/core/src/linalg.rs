//! Dense symmetric linear algebra shared by every module.
//!
//! All eigendecompositions go through [`sym_eigen`], which sorts eigenvalues in
//! descending order and orients each eigenvector so that its largest-magnitude
//! entry is positive. Downstream results are therefore reproducible bit-for-bit
//! for identical inputs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector of `values[j]`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Eigenvectors of the `r` largest eigenvalues, as columns.
    pub fn top(&self, r: usize) -> DMatrix<f64> {
        self.vectors.columns(0, r).into_owned()
    }

    /// Eigenvectors of the `r` smallest eigenvalues, as columns (ascending order
    /// of position in the descending spectrum).
    pub fn bottom(&self, r: usize) -> DMatrix<f64> {
        let n = self.dim();
        self.vectors.columns(n - r, r).into_owned()
    }
}

/// Orient `v` so that its largest-magnitude entry is positive (first index on ties).
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Symmetric eigendecomposition with descending eigenvalues and the sign convention above.
/// The input is symmetrized before decomposition.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "sym_eigen needs a square matrix");
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        fix_sign(&mut v);
        vectors.set_column(j, &v);
    }
    SymEigen { values, vectors }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - m^T`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Thin singular value decomposition `m = U diag(sigma) V^T`, sigma descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// SVD read off the symmetric eigendecomposition of `[[0, m], [m^T, 0]]`, whose
/// positive eigenvalues are the singular values with eigenvectors `(u; v) / sqrt 2`.
/// Singular values are accurate to `O(eps |m|)`; singular vectors of (near) zero
/// singular values are unspecified.
pub fn svd(m: &DMatrix<f64>) -> Svd {
    let (p, q) = m.shape();
    let r = p.min(q);
    if r == 0 {
        return Svd {
            u: DMatrix::zeros(p, 0),
            sigma: Vec::new(),
            v: DMatrix::zeros(q, 0),
        };
    }
    let mut aug = DMatrix::zeros(p + q, p + q);
    aug.view_mut((0, p), (p, q)).copy_from(m);
    aug.view_mut((p, 0), (q, p)).copy_from(&m.transpose());
    let eig = sym_eigen(&aug);
    let mut u = DMatrix::zeros(p, r);
    let mut v = DMatrix::zeros(q, r);
    for j in 0..r {
        let col = eig.vectors.column(j);
        let (mut a, mut b) = (col.rows(0, p).into_owned(), col.rows(p, q).into_owned());
        for x in [&mut a, &mut b] {
            let norm = x.norm();
            if norm > 0.0 {
                *x /= norm;
            }
        }
        u.set_column(j, &a);
        v.set_column(j, &b);
    }
    let sigma = eig.values[..r].iter().map(|s| s.max(0.0)).collect();
    Svd { u, sigma, v }
}

/// Operator 2-norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    svd(m).sigma
}

pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn outer(v: &DVector<f64>) -> DMatrix<f64> {
    v * v.transpose()
}

/// `max |B^T B - I|` entrywise.
pub fn orthonormality_defect(b: &DMatrix<f64>) -> f64 {
    let g = b.transpose() * b;
    let d = g.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Orthonormal basis of the column span of `cols`, keeping directions whose singular
/// value exceeds `rel_tol` times the largest. Returns the basis (as columns) and its rank.
pub fn column_span(cols: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let n = cols.nrows();
    if cols.ncols() == 0 {
        return (DMatrix::zeros(n, 0), 0);
    }
    let dec = svd(cols);
    let top = dec.sigma.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return (DMatrix::zeros(n, 0), 0);
    }
    let rank = dec.sigma.iter().take_while(|&&s| s > rel_tol * top).count();
    let mut basis = dec.u.columns(0, rank).into_owned();
    for mut c in basis.column_iter_mut() {
        let mut v = c.clone_owned();
        fix_sign(&mut v);
        c.copy_from(&v);
    }
    (basis, rank)
}

/// An orthonormal basis of the orthogonal complement of the (orthonormal) columns of `basis`.
pub fn orthogonal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let d = basis.ncols();
    let proj = DMatrix::identity(n, n) - basis * basis.transpose();
    sym_eigen(&proj).top(n - d)
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(n, n, rng);
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    q
}

/// `rows x cols` matrix of independent standard normal entries, filled column by column.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

pub fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random unit vector, uniform on the sphere.
pub fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = gaussian_vector(n, rng);
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Random symmetric positive definite matrix `G G^T / n + floor * I`.
pub fn random_spd<R: Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(n, n, rng);
    let mut s = &g * g.transpose() / n as f64;
    for i in 0..n {
        s[(i, i)] += floor;
    }
    symmetrize(&s)
}

/// `Q f(Λ) Q^T` for a symmetric matrix.
pub fn sym_apply(eig: &SymEigen, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = eig.dim();
    let mut scaled = eig.vectors.clone();
    for j in 0..n {
        let s = f(eig.values[j]);
        let mut col = scaled.column_mut(j);
        col *= s;
    }
    symmetrize(&(scaled * eig.vectors.transpose()))
}

/// Copy of the `rows x cols` block of `m` starting at `(r0, c0)`.
pub fn block(m: &DMatrix<f64>, r0: usize, c0: usize, rows: usize, cols: usize) -> DMatrix<f64> {
    m.view((r0, c0), (rows, cols)).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigen_sorted_descending_with_sign_convention() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0]);
        let eig = sym_eigen(&m);
        assert_eq!(eig.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(eig.vectors.column(0).as_slice(), &[0.0, 1.0, 0.0]);
        for j in 0..3 {
            let col = eig.vectors.column(j);
            let big = col.iter().cloned().fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(6, 0.1, &mut rng);
        let eig = sym_eigen(&a);
        let rebuilt = sym_apply(&eig, |x| x);
        assert!((rebuilt - &a).norm() < 1e-12);
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_orthogonal(7, &mut rng);
        assert!(orthonormality_defect(&q) < 1e-12);
    }

    #[test]
    fn complement_completes_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthogonal(5, &mut rng);
        let b = q.columns(0, 2).into_owned();
        let c = orthogonal_complement(&b);
        assert_eq!(c.ncols(), 3);
        let mut full = DMatrix::zeros(5, 5);
        full.columns_mut(0, 2).copy_from(&b);
        full.columns_mut(2, 3).copy_from(&c);
        assert!(orthonormality_defect(&full) < 1e-12);
    }

    #[test]
    fn column_span_detects_rank() {
        let cols = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
        let (_, rank) = column_span(&cols, 1e-8);
        assert_eq!(rank, 1);
    }

    #[test]
    fn svd_reconstructs_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (p, q, rank) in [(7, 4, 3), (4, 7, 2), (5, 5, 5), (6, 3, 1)] {
            let m = gaussian_matrix(p, rank, &mut rng) * gaussian_matrix(rank, q, &mut rng);
            let d = svd(&m);
            let kept = d.sigma.iter().filter(|&&s| s > 1e-10 * d.sigma[0]).count();
            assert_eq!(kept, rank);
            let u = d.u.columns(0, kept);
            let v = d.v.columns(0, kept);
            let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(&d.sigma[..kept]));
            let back = u * sigma * v.transpose();
            assert!((back - &m).norm() < 1e-12 * m.norm(), "{p}x{q} rank {rank}");
            assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -4.0, 2.0]));
        assert!((spectral_norm(&m) - 4.0).abs() < 1e-14);
        assert!((smallest_singular_value(&m) - 1.0).abs() < 1e-14);
    }
}
