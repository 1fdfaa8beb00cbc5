//! Randomized invariants of the mixture, isotropy, reweighting, Fisher and
//! separator layers.

use isopca::fisher::{fisher_subspace, overlap, subspace_affinity, SubspaceBasis};
use isopca::isotropy::whiten;
use isopca::linalg::{self, sym_eigen};
use isopca::mixture::{
    apply_affine, isotropic_params, parallel_pancakes, random_mixture, symmetric_balanced_mixture,
    AffineMap, GaussianMixture,
};
use isopca::reweighting::{exact_gamma, exact_mixture_moments, rhos, sample_reweighted_moments};
use isopca::rng::rng_from;
use isopca::separator::{choose_direction, mean_shift_threshold, top_eigenvectors, Method, SeparatorConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn random_map(n: usize, cond: f64, seed: u64) -> AffineMap {
    let mut rng = rng_from(seed, &[0x004D_4150]);
    let u = linalg::random_orthogonal(n, &mut rng);
    let v = linalg::random_orthogonal(n, &mut rng);
    let s = DVector::from_fn(n, |i, _| cond.powf(i as f64 / (n.max(2) - 1) as f64));
    let b = linalg::gaussian_vector(n, &mut rng) * 3.0;
    AffineMap::new(u * DMatrix::from_diagonal(&s) * v.transpose(), b).unwrap()
}

/// Equal-weight mixture whose components are the orbit of one Gaussian under an
/// orthogonal map of order `k` with no fixed vector.
fn point_symmetric_mixture(k: usize, n: usize, seed: u64) -> GaussianMixture {
    let mut rng = rng_from(seed, &[0x5054]);
    let theta = 2.0 * std::f64::consts::PI / k as f64;
    let mut r = DMatrix::zeros(n, n);
    for p in 0..n / 2 {
        let (s, c) = theta.sin_cos();
        let (i, j) = (2 * p, 2 * p + 1);
        r[(i, i)] = c;
        r[(j, j)] = c;
        r[(i, j)] = -s;
        r[(j, i)] = s;
    }
    if n % 2 == 1 {
        r[(n - 1, n - 1)] = -1.0;
    }
    let q = linalg::random_orthogonal(n, &mut rng);
    let r = &q * r * q.transpose();
    let sigma0 = linalg::random_spd(n, 0.2, &mut rng);
    let mut g = DMatrix::identity(n, n);
    let mu0 = linalg::gaussian_vector(n, &mut rng);
    let (mut means, mut covs) = (Vec::new(), Vec::new());
    for _ in 0..k {
        means.push(&g * &mu0);
        covs.push(linalg::symmetrize(&(&g * &sigma0 * g.transpose())));
        g = &r * g;
    }
    GaussianMixture::new(vec![1.0 / k as f64; k], means, covs).unwrap()
}

fn shape() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..=4).prop_flat_map(|k| (Just(k), k.max(2)..=8usize, any::<u64>()))
}

fn weighted_sum(mix: &GaussianMixture, coef: &[f64]) -> DVector<f64> {
    mix.means()
        .iter()
        .zip(mix.weights())
        .zip(coef)
        .fold(DVector::zeros(mix.n()), |acc, ((mu, w), c)| acc + mu * (w * c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pushforward_commutes_with_sampling((k, n, seed) in shape(), cond in 1.0f64..1e3) {
        let mix = random_mixture(k, n, seed).unwrap();
        let map = random_map(n, cond, seed ^ 1);
        let factors = mix.cholesky_factors();
        let mapped_factors: Vec<_> = factors.iter().map(|f| &map.linear * f).collect();
        let a = mix.sample_with_factors(&factors, 200, seed);
        let b = apply_affine(&mix, &map).unwrap().sample_with_factors(&mapped_factors, 200, seed);
        prop_assert_eq!(&a.labels, &b.labels);
        let pushed = map.apply_points(&a.points);
        let scale = pushed.amax().max(1.0);
        prop_assert!((pushed - &b.points).amax() <= 1e-9 * scale);
    }

    #[test]
    fn overlap_is_affine_invariant((k, n, seed) in shape(), cond in 1.0f64..1e3) {
        let mix = random_mixture(k, n, seed).unwrap();
        let mapped = apply_affine(&mix, &random_map(n, cond, seed ^ 2)).unwrap();
        let (a, b) = (overlap(&mix).unwrap(), overlap(&mapped).unwrap());
        prop_assert!((a - b).abs() <= 1e-8, "{} vs {}", a, b);
    }

    #[test]
    fn covariance_blocks_are_bounded((k, n, seed) in shape()) {
        let iso = isotropic_params(&random_mixture(k, n, seed).unwrap()).unwrap().1;
        let rep = fisher_subspace(&iso).unwrap();
        let r = k - 1;
        let f = rep.fisher_basis.columns().clone();
        let mut frame = DMatrix::zeros(n, n);
        frame.columns_mut(0, r).copy_from(&f);
        frame.columns_mut(r, n - r).copy_from(&linalg::orthogonal_complement(&f));
        let tol = 1e-10;
        for (w, s) in iso.weights().iter().zip(iso.covariances()) {
            let rot = frame.transpose() * (s * *w) * &frame;
            let a = linalg::spectral_norm(&linalg::block(&rot, 0, 0, r, r));
            let b = linalg::spectral_norm(&linalg::block(&rot, r, 0, n - r, r));
            let d = linalg::spectral_norm(&linalg::block(&rot, r, r, n - r, n - r));
            prop_assert!(a <= rep.phi + tol);
            prop_assert!(d <= 1.0 + tol);
            prop_assert!(b <= rep.phi.sqrt() + tol);
        }
    }

    #[test]
    fn whitening_twice_is_orthogonal((k, n, seed) in shape()) {
        let pts = random_mixture(k, n, seed).unwrap().sample(400, seed).points;
        let once = whiten(&pts, 1e-12).unwrap();
        let twice = whiten(&once.points, 1e-12).unwrap();
        prop_assert!(linalg::orthonormality_defect(&twice.map.linear) <= 1e-8);
    }

    #[test]
    fn whitening_cancels_affine_maps((k, n, seed) in shape(), cond in 1.0f64..1e3) {
        let pts = random_mixture(k, n, seed).unwrap().sample(500, seed).points;
        let mapped = random_map(n, cond, seed ^ 3).apply_points(&pts);
        let a = whiten(&pts, 1e-12).unwrap().points;
        let b = whiten(&mapped, 1e-12).unwrap().points;
        let cross = a.transpose() * b / pts.nrows() as f64;
        for s in linalg::singular_values(&cross) {
            prop_assert!((s - 1.0).abs() <= 1e-6, "{}", s);
        }
    }

    #[test]
    fn rho_increases_with_alpha((k, n, seed) in shape(), a in 0.5f64..50.0, factor in 1.01f64..10.0) {
        let iso = isotropic_params(&random_mixture(k, n, seed).unwrap()).unwrap().1;
        let lo = rhos(&iso, a).unwrap();
        let hi = rhos(&iso, a * factor).unwrap();
        for (l, h) in lo.iter().zip(&hi) {
            prop_assert!(l < h && *h < 1.0);
        }
    }

    #[test]
    fn mean_approximation_bound((k, n, seed) in shape()) {
        let iso = isotropic_params(&random_mixture(k, n, seed).unwrap()).unwrap().1;
        let wmin = iso.min_weight();
        let alpha = n as f64 / wmin;
        let phi = fisher_subspace(&iso).unwrap().phi;
        let u = exact_mixture_moments(&iso, alpha).unwrap().u;
        let v = weighted_sum(&iso, &rhos(&iso, alpha).unwrap());
        let bound = 4.0 * (k * k) as f64 * phi / (alpha * alpha * wmin);
        prop_assert!((u - v).norm_squared() <= bound);
    }

    #[test]
    fn balanced_gamma_gap(k in 2usize..=4, extra in 0usize..=5, seed in any::<u64>(), thin in -2.0f64..0.0) {
        let n = k + extra;
        let mix = symmetric_balanced_mixture(k, n, 10f64.powf(thin), seed).unwrap();
        let iso = isotropic_params(&mix).unwrap().1;
        let alpha = n as f64 / iso.min_weight();
        let basis = SubspaceBasis::span_of(&DMatrix::from_columns(iso.means()));
        let gamma = exact_gamma(&iso, alpha, basis.columns()).unwrap();
        let ev = sym_eigen(&gamma).values;
        prop_assert!(ev[k - 2] - ev[k - 1] >= 1.0 / (4.0 * alpha));
    }

    #[test]
    fn symmetric_mixtures_take_spectral_branch(k in 2usize..=5, half in 1usize..=4, seed in any::<u64>()) {
        let n = if k % 2 == 0 { (2 * half + 1).max(k) } else { 2 * half.max(k.div_ceil(2)) };
        let iso = isotropic_params(&point_symmetric_mixture(k, n, seed)).unwrap().1;
        let mom = exact_mixture_moments(&iso, n as f64 / iso.min_weight()).unwrap();
        prop_assert_eq!(choose_direction(&mom, iso.min_weight()).unwrap().method, Method::Spectral);
    }
}

#[test]
fn block_norm_bound_for_spd_matrices() {
    let mut rng = rng_from(21, &[]);
    for _ in 0..1000 {
        let n = rng.random_range(2..=8);
        let r = rng.random_range(1..n);
        let z = linalg::random_spd(n, rng.random_range(0.0..0.5), &mut rng);
        let a = linalg::spectral_norm(&linalg::block(&z, 0, 0, r, r));
        let b = linalg::spectral_norm(&linalg::block(&z, r, 0, n - r, r));
        let d = linalg::spectral_norm(&linalg::block(&z, r, r, n - r, n - r));
        assert!(b <= (a * d).sqrt() * (1.0 + 1e-12));
    }
}

#[test]
fn smallest_eigenvalue_sum_minimizes_trace() {
    let mut rng = rng_from(22, &[]);
    for trial in 0..10 {
        let n = 3 + trial % 5;
        let k = 1 + trial % (n - 1);
        let z = linalg::random_spd(n, 0.05, &mut rng);
        let ev = sym_eigen(&z).values;
        let best: f64 = ev[n - k..].iter().sum();
        for _ in 0..1000 {
            let (p, _) = linalg::column_span(&linalg::gaussian_matrix(n, k, &mut rng), 1e-12);
            let trace = (p.transpose() * &z * &p).trace();
            assert!(trace >= best - 1e-9);
        }
    }
}

#[test]
fn dot_product_lower_bound() {
    let mut rng = rng_from(23, &[]);
    let mut checked = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=6);
        let a = linalg::gaussian_vector(n, &mut rng);
        let b = &a + linalg::gaussian_vector(n, &mut rng) * rng.random_range(0.0..1.0);
        let radicand = 1.0 - (&a - &b).norm_squared() / a.norm_squared().max(b.norm_squared());
        if radicand < 0.0 {
            continue;
        }
        checked += 1;
        let cos = a.dot(&b).abs() / (a.norm() * b.norm());
        assert!(cos >= radicand.sqrt() - 1e-12);
    }
    assert!(checked > 5_000);
}

#[test]
fn removing_components_does_not_increase_overlap() {
    for seed in 0..100u64 {
        let k = 3 + (seed % 2) as usize;
        let n = k + (seed % 4) as usize;
        let mix = random_mixture(k, n, 600 + seed).unwrap();
        let phi = overlap(&mix).unwrap();
        for mask in 1u32..(1 << k) - 1 {
            let comps: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            if comps.len() < 2 {
                continue;
            }
            let sub = overlap(&mix.sub_mixture(&comps).unwrap()).unwrap();
            assert!(sub <= phi + 1e-9, "seed {seed} {comps:?}: {sub} > {phi}");
        }
    }
}

/// Reweighted mean shifts that are small in the sense of the mean-shift threshold
/// come with nearly equal reweighting factors.
#[test]
fn small_mean_shift_implies_balanced_rho() {
    let mut applicable = 0;
    for seed in 0..60u64 {
        let k = 2 + (seed % 3) as usize;
        let n = k + (seed % 5) as usize;
        let base = symmetric_balanced_mixture(k, n, 1e-4, seed).unwrap();
        let mut rng = rng_from(seed, &[0x534D]);
        let delta = 10f64.powf(rng.random_range(-9.0..-3.0));
        let mut weights: Vec<f64> = (0..k).map(|_| 1.0 + delta * rng.random_range(-1.0..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let perturbed = GaussianMixture::new(weights, base.means().to_vec(), base.covariances().to_vec()).unwrap();
        let iso = isotropic_params(&perturbed).unwrap().1;
        let wmin = iso.min_weight();
        let alpha = n as f64 / wmin;
        let phi = fisher_subspace(&iso).unwrap().phi;
        let mom = exact_mixture_moments(&iso, alpha).unwrap();
        if mom.u.norm() > wmin.sqrt() / (32.0 * alpha) || phi.sqrt() > wmin / (64.0 * k as f64) {
            continue;
        }
        applicable += 1;
        let r = rhos(&iso, alpha).unwrap();
        let mean = r.iter().sum::<f64>() / k as f64;
        let spread = r.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
        assert!(spread <= 1.0 / (8.0 * alpha), "seed {seed}: {spread}");
    }
    assert!(applicable >= 20, "only {applicable} instances met the hypotheses");
}

/// With exact moments above the threshold, the mean shift points along
/// `v = Σ w_i ρ_i μ_i` to within the accuracy implied by the overlap.
#[test]
fn mean_shift_direction_accuracy() {
    let mut applicable = 0;
    for seed in 0..40u64 {
        let n = 3 + (seed % 6) as usize;
        let w1 = 0.6 + 0.35 * (seed as f64 / 40.0);
        let sigma = 1e-4 * (1.0 + (seed % 7) as f64);
        let mix = apply_affine(&parallel_pancakes(n, 1.0, sigma, w1).unwrap(), &random_map(n, 100.0, seed)).unwrap();
        let iso = isotropic_params(&mix).unwrap().1;
        let (k, wmin) = (iso.k() as f64, iso.min_weight());
        let alpha = n as f64 / wmin;
        let phi = fisher_subspace(&iso).unwrap().phi;
        let eps = phi * 16384.0 * k * k / (wmin * wmin);
        let mom = exact_mixture_moments(&iso, alpha).unwrap();
        let threshold = mean_shift_threshold(&mom, wmin, &SeparatorConfig::default());
        if eps >= 1.0 || mom.u.norm() <= threshold {
            continue;
        }
        applicable += 1;
        let v = weighted_sum(&iso, &rhos(&iso, alpha).unwrap());
        let cos = mom.u.dot(&v) / (mom.u.norm() * v.norm());
        assert!(cos >= 1.0 - eps, "seed {seed}: cos {cos}, eps {eps}");
    }
    assert!(applicable >= 20, "only {applicable} instances met the hypotheses");
}

/// For balanced reweighting factors the top `k - 1` eigenvectors of the exact
/// reweighted second moment span the Fisher subspace up to the implied accuracy.
#[test]
fn spectral_subspace_accuracy() {
    let mut applicable = 0;
    for seed in 0..60u64 {
        let k = 2 + (seed % 3) as usize;
        let n = k + (seed % 6) as usize;
        let thin = 10f64.powf(-4.0 - (seed % 4) as f64 * 0.25);
        let iso = isotropic_params(&symmetric_balanced_mixture(k, n, thin, seed).unwrap()).unwrap().1;
        let wmin = iso.min_weight();
        let alpha = n as f64 / wmin;
        let rep = fisher_subspace(&iso).unwrap();
        let eps = rep.phi * (640.0 * 640.0) * (k * k) as f64 / (wmin * wmin);
        if eps >= 1.0 {
            continue;
        }
        applicable += 1;
        let m = exact_mixture_moments(&iso, alpha).unwrap().m;
        let v = SubspaceBasis::new(top_eigenvectors(&m, k - 1)).unwrap();
        let aff = subspace_affinity(&v, &rep.fisher_basis).unwrap();
        assert!(aff >= 1.0 - eps, "seed {seed}: affinity {aff}, eps {eps}");
    }
    assert!(applicable >= 30, "only {applicable} instances met the hypotheses");
}

#[test]
fn sampled_moments_converge_at_root_m_rate() {
    let mix = random_mixture(3, 5, 77).unwrap();
    let alpha = 5.0 / mix.min_weight();
    let exact = exact_mixture_moments(&mix, alpha).unwrap();
    let rms = |m: usize| -> (f64, f64) {
        let (mut eu, mut em) = (0.0, 0.0);
        for rep in 0..16u64 {
            let est = sample_reweighted_moments(&mix.sample(m, 9000 + rep).points, alpha).unwrap();
            eu += (&est.u - &exact.u).norm_squared();
            em += linalg::spectral_norm(&(&est.m - &exact.m)).powi(2);
        }
        ((eu / 16.0).sqrt(), (em / 16.0).sqrt())
    };
    let (u1, m1) = rms(10_000);
    let (u4, m4) = rms(40_000);
    for ratio in [u4 / u1, m4 / m1] {
        assert!((0.25..=1.0).contains(&ratio), "error ratio {ratio} for 4x samples");
    }
}
