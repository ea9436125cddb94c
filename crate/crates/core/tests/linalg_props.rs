mod common;

use common::{normal, of_rank, psd_of_rank, tol};
use linfactor::builders::{self, WeightRecipe};
use linfactor::fixtures;
use linfactor::generative::date_rng;
use linfactor::linalg::{self, Matrix, Vector};
use linfactor::Characteristics;
use proptest::prelude::*;

fn rel(a: &Matrix, b: &Matrix, scale: f64) -> f64 {
    (a - b).norm() / scale.max(1.0)
}

/// Largest relative residual over the four Penrose conditions.
fn penrose_residual(a: &Matrix, x: &Matrix) -> f64 {
    let (na, nx) = (a.norm(), x.norm());
    [
        rel(&(a * x * a), a, na),
        rel(&(x * a * x), x, nx),
        rel(&(a * x).transpose(), &(a * x), na * nx),
        rel(&(x * a).transpose(), &(x * a), na * nx),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn shaped() -> impl Strategy<Value = (usize, usize, usize, u64, i32)> {
    (1usize..=12, 1usize..=8)
        .prop_flat_map(|(r, c)| (Just(r), Just(c), 0..=r.min(c), any::<u64>(), -3i32..=3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pinv_satisfies_penrose((rows, cols, rank, seed, exp) in shaped()) {
        let mut rng = date_rng(seed, 0);
        let a = of_rank(&mut rng, rows, cols, rank) * 10f64.powi(exp);
        let x = linalg::pinv(&a, &tol()).unwrap();
        prop_assert_eq!(x.shape(), (cols, rows));
        prop_assert!(penrose_residual(&a, &x) <= 1e-8);
        prop_assert_eq!(linalg::rank_of(&a, &tol()).unwrap(), rank);
    }

    #[test]
    fn pinv_is_an_involution((rows, cols, rank, seed, _e) in shaped()) {
        let mut rng = date_rng(seed, 1);
        let a = of_rank(&mut rng, rows, cols, rank);
        let back = linalg::pinv(&linalg::pinv(&a, &tol()).unwrap(), &tol()).unwrap();
        prop_assert!(rel(&back, &a, a.norm()) <= 1e-8);
    }

    #[test]
    fn image_projector_is_orthogonal((rows, cols, rank, seed, _e) in shaped()) {
        let mut rng = date_rng(seed, 2);
        let a = of_rank(&mut rng, rows, cols, rank);
        let p = linalg::image_projector(&a, &tol()).unwrap();
        prop_assert!(rel(&(&p * &p), &p, 1.0) <= 1e-10);
        prop_assert!(rel(&p.transpose(), &p, 1.0) <= 1e-12);
        prop_assert!(rel(&(&p * &a), &a, a.norm()) <= 1e-10);
        prop_assert!((p.trace() - rank as f64).abs() <= 1e-8);
    }

    #[test]
    fn in_image_accepts_range_and_rejects_complement((rows, cols, rank, seed, _e) in shaped()) {
        let mut rng = date_rng(seed, 3);
        let a = of_rank(&mut rng, rows, cols, rank);
        let inside = &a * normal(&mut rng, cols, 1).column(0);
        prop_assert!(linalg::in_image(&inside, &a, &tol()).unwrap().holds);
        if rank < rows {
            let p = linalg::image_projector(&a, &tol()).unwrap();
            let v: Vector = normal(&mut rng, rows, 1).column(0).into_owned();
            let outside = &v - &p * &v;
            if outside.norm() > 1e-3 {
                prop_assert!(!linalg::in_image(&outside, &a, &tol()).unwrap().holds);
            }
        }
    }

    #[test]
    fn kernel_and_image_bases_are_complementary((rows, cols, rank, seed, _e) in shaped()) {
        let mut rng = date_rng(seed, 4);
        let a = of_rank(&mut rng, rows, cols, rank);
        let ker = linalg::kernel_basis(&a, &tol()).unwrap();
        let im = linalg::image_basis(&a.transpose(), &tol()).unwrap();
        prop_assert_eq!(ker.dim() + im.dim(), cols);
        prop_assert!(max_abs(&(&a * ker.basis())) <= 1e-10 * a.norm().max(1.0));
        prop_assert!(max_abs(&(ker.basis().transpose() * im.basis())) <= 1e-10);
    }

    #[test]
    fn psd_roots((n, rank, seed) in (1usize..=8).prop_flat_map(|n| (Just(n), 0..=n, any::<u64>()))) {
        let mut rng = date_rng(seed, 5);
        let s = psd_of_rank(&mut rng, n, rank);
        let root = linalg::psd_sqrt(&s, &tol()).unwrap();
        prop_assert!(rel(&(&root * &root), &s, s.norm()) <= 1e-8);
        let u = linalg::psd_root_of_pinv(&s, &tol()).unwrap();
        let sp = linalg::pinv(&s, &tol()).unwrap();
        prop_assert!(rel(&(u.transpose() * &u), &sp, sp.norm()) <= 1e-8);
        prop_assert!(rel(&u.transpose(), &u, u.norm()) <= 1e-12);
    }

    #[test]
    fn builders_are_idempotent_on_phi(
        (n, m, seed, which) in (1usize..=7, 1usize..=5, any::<u64>(), 0usize..4)
    ) {
        let mut rng = date_rng(seed, 6);
        let rank = 1 + (seed as usize) % m.min(n);
        let phi = Characteristics::new(of_rank(&mut rng, n, m, rank)).unwrap();
        let recipe = match which {
            0 => WeightRecipe::Ols,
            1 => WeightRecipe::Gls { sigma_eps: psd_of_rank(&mut rng, n, n) },
            2 => WeightRecipe::GlsType { sigma_eta: psd_of_rank(&mut rng, n, (seed as usize) % (n + 1)) },
            _ => WeightRecipe::GeneralForm { r: normal(&mut rng, m, m), s: normal(&mut rng, n, n) },
        };
        let w_t = recipe.build(&phi, &tol()).unwrap().transpose();
        let lhs = &w_t * phi.matrix() * &w_t;
        prop_assert!(rel(&lhs, &w_t, w_t.norm() * w_t.norm() * phi.matrix().norm()) <= 1e-8);
        // ker(ΦWᵀ) = ker(Wᵀ)
        let proj = phi.matrix() * &w_t;
        let k_proj = linalg::kernel_basis(&proj, &tol()).unwrap();
        let k_w = linalg::kernel_basis(&w_t, &tol()).unwrap();
        prop_assert_eq!(k_proj.dim(), k_w.dim());
        prop_assert!(max_abs(&(&w_t * k_proj.basis())) <= 1e-8 * w_t.norm().max(1.0));
        if which == 0 {
            prop_assert!(rel(&proj.transpose(), &proj, 1.0) <= 1e-10);
        }
    }
}

fn max_abs(a: &Matrix) -> f64 {
    common::max_abs(a)
}

#[test]
fn five_hundred_random_pseudoinverses() {
    let mut worst = 0.0_f64;
    for k in 0..500u64 {
        let mut rng = date_rng(0x5eed, k);
        let rows = 1 + (k % 12) as usize;
        let cols = 1 + ((k / 12) % 8) as usize;
        let rank = (k / 96) as usize % (rows.min(cols) + 1);
        let a = of_rank(&mut rng, rows, cols, rank);
        let x = linalg::pinv(&a, &tol()).unwrap();
        worst = worst.max(penrose_residual(&a, &x));
    }
    assert!(worst <= 1e-8, "worst Penrose residual {worst:e}");
}

#[test]
fn example3_phi_pinv_is_exact() {
    let phi = fixtures::example3_phi();
    let x = linalg::pinv(phi.matrix(), &tol()).unwrap();
    let expected = Matrix::from_row_slice(2, 3, &[0.5, 0.5, 0.0, 0.0, 0.0, 1.0]);
    assert!(max_abs(&(x - expected)) <= 1e-12);
}

#[test]
fn extension_of_diag_one_zero_is_identity() {
    let u = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]));
    let s = builders::extend_to_invertible(&u, &tol()).unwrap();
    assert!(max_abs(&(s - Matrix::identity(2, 2))) <= 1e-12);
}
