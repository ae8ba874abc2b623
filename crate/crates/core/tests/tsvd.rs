use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tnn_core::tsvd::{self, RANK_TOL};
use tnn_core::{Error, OrthogonalTransform, Tensor3};

fn random_orthonormal_columns(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = Tensor3::random_normal(rows, rows, 1, rng);
    let q = DMatrix::from_row_slice(rows, rows, g.data()).qr().q();
    q.columns(0, cols).into_owned()
}

/// A tensor whose transformed slices are `U_k diag(spectra[k]) V_k^T` with random `U_k`, `V_k`.
fn with_spectra(m: usize, n: usize, spectra: &[Vec<f64>], t: &OrthogonalTransform, rng: &mut ChaCha8Rng) -> Tensor3 {
    let c = spectra.len();
    let p = m.min(n);
    let mut hat = Tensor3::zeros(m, n, c);
    for (k, s) in spectra.iter().enumerate() {
        let u = random_orthonormal_columns(m, p, rng);
        let v = random_orthonormal_columns(n, p, rng);
        let mut d = DMatrix::zeros(p, p);
        for (j, &sv) in s.iter().enumerate().take(p) {
            d[(j, j)] = sv;
        }
        let slice = &u * d * v.transpose();
        for i in 0..m {
            for j in 0..n {
                hat.set(i, j, k, slice[(i, j)]);
            }
        }
    }
    Tensor3::from_transformed(&hat, t).unwrap()
}

/// Singular values of one transformed slice, by an independent dense SVD.
fn slice_spectrum(x: &Tensor3, t: &OrthogonalTransform, k: usize) -> Vec<f64> {
    let hat = t.apply(x).unwrap();
    let mat = DMatrix::from_row_slice(x.rows(), x.cols(), hat.slice(k));
    let mut s: Vec<f64> = mat.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

#[test]
fn tubal_rank_exact_on_constructed_tensors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = OrthogonalTransform::dct(4);
    for r in 1..=5 {
        let spectra: Vec<Vec<f64>> =
            (0..4).map(|k| (0..r).map(|j| 3.0 - 0.4 * j as f64 + 0.1 * k as f64).collect()).collect();
        let x = with_spectra(6, 5, &spectra, &t, &mut rng);
        assert_eq!(tsvd::tubal_rank(&x, &t, RANK_TOL).unwrap(), r);
        assert_eq!(tsvd::multi_rank(&x, &t, RANK_TOL).unwrap(), vec![r; 4]);
    }
    // different ranks per slice: the tubal rank is the maximum
    let spectra = vec![vec![1.0], vec![2.0, 1.0, 0.5], vec![], vec![1.0, 1.0]];
    let x = with_spectra(5, 4, &spectra, &t, &mut rng);
    assert_eq!(tsvd::multi_rank(&x, &t, RANK_TOL).unwrap(), vec![1, 3, 0, 2]);
    assert_eq!(tsvd::tubal_rank(&x, &t, RANK_TOL).unwrap(), 3);
}

#[test]
fn truncation_error_matches_slice_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = OrthogonalTransform::dct(5);
    for _ in 0..20 {
        let x = Tensor3::random_normal(6, 4, 5, &mut rng);
        for r in 1..=4 {
            let oracle: f64 = (0..5)
                .map(|k| slice_spectrum(&x, &t, k).iter().skip(r).map(|s| s * s).sum::<f64>())
                .sum::<f64>()
                .sqrt();
            let actual = x.sub(&tsvd::truncate(&x, &t, r).unwrap()).unwrap().fro_norm();
            assert!((actual - oracle).abs() <= 1e-10 * oracle.max(1.0));
            let reported = tsvd::truncation_error(&x, &t, r).unwrap();
            assert!((reported - oracle).abs() <= 1e-10 * oracle.max(1.0));
        }
    }
}

#[test]
fn truncation_beats_random_low_rank_competitors() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t = OrthogonalTransform::dct(3);
    for _ in 0..10 {
        let x = Tensor3::random_normal(5, 5, 3, &mut rng);
        for r in 1..=4 {
            let best = tsvd::truncation_error(&x, &t, r).unwrap();
            for _ in 0..10 {
                // a random tubal-rank-r tensor, plus a perturbed optimum
                let a = Tensor3::random_normal(5, r, 3, &mut rng);
                let b = Tensor3::random_normal(r, 5, 3, &mut rng);
                let comp = a.t_product(&b, &t).unwrap();
                assert!(x.sub(&comp).unwrap().fro_norm() >= best - 1e-10);
                let near = tsvd::truncate(&x, &t, r).unwrap();
                let jitter = Tensor3::random_normal(5, r, 3, &mut rng).scaled(1e-3);
                let near = near.add(&jitter.t_product(&b, &t).unwrap().scaled(1.0)).unwrap();
                if tsvd::tubal_rank(&near, &t, RANK_TOL).unwrap() <= r {
                    assert!(x.sub(&near).unwrap().fro_norm() >= best - 1e-10);
                }
            }
        }
    }
}

#[test]
fn decay_bound_holds_on_polynomial_spectra() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (m, n, c) = (10, 9, 4);
    let t = OrthogonalTransform::dct(c);
    let v0 = 2.5;
    for alpha in [0.75, 1.0, 2.0] {
        let spectra: Vec<Vec<f64>> = (0..c).map(|_| (1..=n).map(|j| v0 * (j as f64).powf(-alpha)).collect()).collect();
        let x = with_spectra(m, n, &spectra, &t, &mut rng);
        for r in 2..=8 {
            let err = x.sub(&tsvd::truncate(&x, &t, r).unwrap()).unwrap().fro_norm();
            let bound = (c as f64 / (2.0 * alpha - 1.0)).sqrt() * v0 * ((r - 1) as f64).powf((1.0 - 2.0 * alpha) / 2.0);
            assert!(err <= bound, "alpha={alpha} r={r}: {err} > {bound}");
        }
    }
}

#[test]
fn stable_rank_of_known_spectra() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = OrthogonalTransform::dct(2);
    let x = with_spectra(4, 4, &[vec![2.0, 1.0], vec![1.0, 1.0]], &t, &mut rng);
    // (4 + 1 + 1 + 1) / 4
    assert!((tsvd::stable_rank(&x, &t).unwrap() - 1.75).abs() < 1e-12);
    assert_eq!(tsvd::stable_rank(&Tensor3::zeros(3, 3, 2), &t), Err(Error::ZeroTensor));
}

#[test]
fn soft_threshold_matches_slice_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let t = OrthogonalTransform::dct(3);
    let x = Tensor3::random_normal(5, 4, 3, &mut rng);
    let tau = 0.7;
    let y = tsvd::soft_threshold(&x, &t, tau).unwrap();
    for k in 0..3 {
        let before = slice_spectrum(&x, &t, k);
        let after = slice_spectrum(&y, &t, k);
        for (b, a) in before.iter().zip(&after) {
            assert!((a - (b - tau).max(0.0)).abs() < 1e-10);
        }
    }
    assert_eq!(tsvd::soft_threshold(&x, &t, 0.0).unwrap(), x);
    let top = (0..3).map(|k| slice_spectrum(&x, &t, k)[0]).fold(0.0, f64::max);
    assert!(tsvd::soft_threshold(&x, &t, top).unwrap().fro_norm() < 1e-12);
    assert!(tsvd::soft_threshold(&x, &t, -1.0).is_err());
}

#[test]
fn truncate_rank_limits() {
    let t = OrthogonalTransform::dct(2);
    let x = Tensor3::zeros(3, 4, 2);
    assert_eq!(tsvd::truncate(&x, &t, 0), Err(Error::RankOutOfRange { rank: 0, max: 3 }));
    assert_eq!(tsvd::truncate(&x, &t, 4), Err(Error::RankOutOfRange { rank: 4, max: 3 }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tsvd_reconstructs_with_orthogonal_factors(m in 1usize..6, n in 1usize..6, c in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = OrthogonalTransform::dct(c);
        let x = Tensor3::random_normal(m, n, c, &mut rng);
        let f = tsvd::tsvd(&x, &t).unwrap();
        let back = f.reconstruct(&t).unwrap();
        prop_assert!(x.sub(&back).unwrap().fro_norm() <= 1e-8 * x.fro_norm());
        let utu = f.u.t_transpose(&t).unwrap().t_product(&f.u, &t).unwrap();
        prop_assert!(utu.sub(&Tensor3::t_identity(m, &t)).unwrap().fro_norm() < 1e-10);
        let vtv = f.v.t_transpose(&t).unwrap().t_product(&f.v, &t).unwrap();
        prop_assert!(vtv.sub(&Tensor3::t_identity(n, &t)).unwrap().fro_norm() < 1e-10);
        // f-diagonal in the transformed domain
        let s_hat = t.apply(&f.s).unwrap();
        for k in 0..c {
            for i in 0..m {
                for j in 0..n {
                    if i != j {
                        prop_assert!(s_hat.get(i, j, k).abs() < 1e-12);
                    }
                }
            }
        }
        let energies = f.tube_energies();
        prop_assert!(energies.windows(2).all(|w| w[0] >= w[1] - 1e-12));
    }

    #[test]
    fn truncation_is_idempotent_and_rank_bounded(m in 2usize..6, n in 2usize..6, c in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = OrthogonalTransform::dct(c);
        let x = Tensor3::random_normal(m, n, c, &mut rng);
        let r = 1 + (seed as usize) % m.min(n);
        let once = tsvd::truncate(&x, &t, r).unwrap();
        let twice = tsvd::truncate(&once, &t, r).unwrap();
        prop_assert!(once.sub(&twice).unwrap().fro_norm() <= 1e-10 * x.fro_norm());
        prop_assert!(tsvd::tubal_rank(&once, &t, 1e-8).unwrap() <= r);
        prop_assert!(tsvd::stable_rank(&once, &t).unwrap() <= (c * r) as f64 + 1e-9);
    }
}
