mod common;

use common::*;
use proptest::prelude::*;
use ssda_core::estimators::{anticausal_regress, off_support_max};
use ssda_core::linalg::checked_svd;
use ssda_core::scm::{
    make_aw_environments, make_ca_environments, make_sc_environments, population_moments, sample_labeled,
    sample_unlabeled, DomainParams, Intervention,
};
use ssda_core::subspace::{
    augment_basis, orthonormal_complement, subspace_distance, top_abs_eigvecs, top_left_singvecs, BasisOrigin,
    OrthoBasis,
};

/// Orthonormal basis of `col(a)` via QR, keeping the first `k` columns.
fn qr_basis(a: &Mat, k: usize) -> OrthoBasis {
    let q = a.clone().qr().q();
    OrthoBasis::new(q.columns(0, k).into_owned(), BasisOrigin::Augmented).unwrap()
}

fn projection_residual(basis: &OrthoBasis, a: &Mat) -> f64 {
    (a - basis.projector() * a).amax() / a.amax().max(1.0)
}

#[test]
fn paper_scale_generators_build() {
    let ca = make_ca_environments(100, 5, 4, 7).unwrap();
    assert_eq!(ca.num_sources(), 4);
    assert_eq!(*ca.intervention(), Intervention::Ca { rank: 5 });
    let sc = make_sc_environments(100, 10, 4, 3).unwrap();
    assert_eq!(*sc.intervention(), Intervention::Sc { support: (0..10).collect() });
    let aw = make_aw_environments(100, 4, 11, 2).unwrap();
    assert_eq!(aw.num_sources(), 11);
    assert_eq!(aw.intervention().rank(), 4);
}

#[test]
fn aw_generator_survives_rank_one_difference_matrix() {
    // this seed once produced a wrong SVD of a rank-one triangular factor
    let env = make_aw_environments(20, 1, 11, 18).unwrap();
    assert_eq!(env.num_sources(), 11);
}

#[test]
fn ca_covariance_shift_is_psd_with_rank_r() {
    let env = make_ca_environments(6, 2, 1, 4).unwrap();
    let diff = joint_moments(env.target()).sigma_x - joint_moments(&env.sources()[0]).sigma_x;
    let mut eig: Vec<f64> = diff.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    assert!(eig[1] > 0.0);
    assert!(eig[2].abs() < 1e-10 * eig[0], "{eig:?}");
    assert!(eig.iter().all(|&l| l > -1e-10 * eig[0]));
}

#[test]
fn ca_top_eigvecs_span_the_confounder_loading() {
    let env = make_ca_environments(10, 3, 2, 21).unwrap();
    let t = env.target();
    let c = t.confounder().unwrap();
    let loading = t.h() * (t.b() * c.w_y().transpose() + c.w());
    let diff = population_moments(t).sigma_x - population_moments(&env.sources()[0]).sigma_x;
    let v = top_abs_eigvecs(&diff, 3).unwrap();
    assert!(projection_residual(&v, &loading) < 1e-8);
    assert!(subspace_distance(&v, &qr_basis(&loading, 3)) < 1e-8);
}

#[test]
fn sc_shift_of_population_ls_stays_on_the_support() {
    let env = make_sc_environments(4, 2, 2, 5).unwrap();
    let src = joint_moments(&env.sources()[0]);
    let tar = joint_moments(env.target());
    let diff = ls_coef(&src.sigma_x, &src.exy) - ls_coef(&tar.sigma_x, &tar.exy);
    assert!(off_support_max(&diff, &[0, 1]) < 1e-10, "{diff}");
    assert!(diff.amax() > 1e-3);
    // library closed form agrees with the dense route
    let lib =
        population_moments(&env.sources()[0]).beta_ls().unwrap() - population_moments(env.target()).beta_ls().unwrap();
    assert!(max_abs_diff(&lib, &diff) < 1e-10);
}

#[test]
fn aw_target_shift_lies_in_the_source_span() {
    let env = make_aw_environments(12, 2, 4, 8).unwrap();
    let first = env.sources()[0].b().clone();
    let mut diffs = Mat::zeros(12, 3);
    for m in 1..4 {
        diffs.set_column(m - 1, &(env.sources()[m].b() - env.sources()[m - 1].b()));
    }
    let basis = qr_basis(&diffs, 2);
    let shift = env.target().b() - first;
    assert!((&shift - basis.projector() * &shift).norm() < 1e-10 * shift.norm().max(1.0));
}

#[test]
fn aw_singular_vectors_match_exact_differences() {
    let env = make_aw_environments(12, 2, 4, 13).unwrap();
    let hb: Vec<Vector> = env.sources().iter().map(DomainParams::hb).collect();
    let mut p = Mat::zeros(12, 3);
    for m in 1..4 {
        p.set_column(m - 1, &(&hb[m] - &hb[m - 1]));
    }
    let v = top_left_singvecs(&p, 2).unwrap();
    assert!(subspace_distance(&v, &qr_basis(&p, 2)) < 1e-8);
}

#[test]
fn anticausal_regression_estimates_hb() {
    // generated AW domains amplify noise through H, so the tolerance is in standard errors
    let env = make_aw_environments(8, 2, 3, 1).unwrap();
    let src = &env.sources()[1];
    let n = 100_000;
    let data = sample_labeled(src, n, 17).unwrap();
    let w = anticausal_regress(&data).unwrap();
    let h = (Mat::identity(8, 8) - src.connectivity()).try_inverse().unwrap();
    let exact = &h * src.b();
    let se = ((&h * h.transpose()).trace() / n as f64).sqrt();
    let err = (&w - &exact).norm();
    assert!(err < 5.0 * se, "ℓ2 error {err}, standard error {se}");

    let mild =
        DomainParams::standard(lcg_mat(8, 8, 4).lower_triangle() * 0.1 - Mat::identity(8, 8) * 0.1, src.b().clone())
            .unwrap();
    let data = sample_labeled(&mild, n, 18).unwrap();
    let err = (anticausal_regress(&data).unwrap() - mild.hb()).norm();
    assert!(err < 5e-2, "ℓ2 error {err}");
}

#[test]
fn sample_covariance_of_a_single_edge_from_y() {
    let mut b = Vector::zeros(3);
    b[0] = 1.0;
    let p = DomainParams::standard(Mat::zeros(3, 3), b).unwrap();
    let data = sample_unlabeled(&p, 500_000, 3).unwrap();
    let mut expected = Mat::identity(3, 3);
    expected[(0, 0)] = 2.0;
    assert!((data.second_moment() - expected).amax() < 0.05);
}

#[test]
fn augmenting_a_random_basis() {
    let v = qr_basis(&lcg_mat(5, 2, 99), 2);
    let w = lcg_vec(5, 7);
    let aug = augment_basis(&w, &v, 1e-8).unwrap();
    assert_eq!(aug.rank(), 3);
    assert!(orthonormality_error(aug.cols()) < 1e-10);
    assert!((v.cols() - aug.projector() * v.cols()).amax() < 1e-10);
    assert!((&w - aug.projector() * &w).amax() < 1e-10);
}

#[test]
fn generated_moments_match_the_dense_route() {
    let envs = [
        make_ca_environments(7, 2, 2, 1).unwrap(),
        make_sc_environments(7, 3, 2, 2).unwrap(),
        make_aw_environments(7, 2, 3, 3).unwrap(),
    ];
    for env in &envs {
        for p in env.sources().iter().chain(std::iter::once(env.target())) {
            let ours = population_moments(p);
            let dense = joint_moments(p);
            let scale = dense.sigma_x.amax().max(1.0);
            assert!((&ours.sigma_x - &dense.sigma_x).amax() < 1e-10 * scale);
            assert!(max_abs_diff(&ours.exy, &dense.exy) < 1e-10 * scale);
            assert!((ours.var_y - dense.var_y).abs() < 1e-12 * dense.var_y);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projector_is_idempotent_and_complement_orthogonal(d in 2usize..9, k in 0usize..9, seed in any::<u64>()) {
        let k = k.min(d);
        let v = if k == 0 { OrthoBasis::empty(d, BasisOrigin::Augmented) } else { qr_basis(&lcg_mat(d, k, seed), k) };
        let p = v.projector();
        prop_assert!((&p * &p - &p).amax() < 1e-10);
        prop_assert!((&p - p.transpose()).amax() < 1e-12);
        let q = orthonormal_complement(&v);
        prop_assert_eq!(q.rank() + v.rank(), d);
        if k > 0 && k < d {
            prop_assert!(q.cols().tr_mul(v.cols()).amax() < 1e-10);
        }
        prop_assert!((q.projector() + p - Mat::identity(d, d)).amax() < 1e-10);
    }

    #[test]
    fn checked_svd_recomposes(rows in 1usize..9, cols in 1usize..9, rank in 1usize..9, seed in any::<u64>()) {
        // low-rank upper-triangular inputs are the case that tripped the plain SVD
        let rank = rank.min(rows).min(cols);
        let a = (lcg_mat(rows, rank, seed) * lcg_mat(rank, cols, seed ^ 0x5555)).upper_triangle();
        let svd = checked_svd(&a).unwrap();
        let k = svd.s.len();
        let recomposed = svd.u.columns(0, k) * Mat::from_diagonal(&svd.s) * svd.v_t.rows(0, k);
        prop_assert!((recomposed - &a).amax() < 1e-9 * a.amax().max(1.0));
        prop_assert!(svd.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn generators_respect_their_intervention(d in 4usize..12, r in 1usize..4, seed in 0u64..10_000) {
        let r = r.min(d - 1);
        let ca = make_ca_environments(d, r, 2, seed).unwrap();
        prop_assert_eq!(ca.target().confounder().unwrap().rank(), r);
        let sc = make_sc_environments(d, r, 2, seed).unwrap();
        let diff = population_moments(&sc.sources()[0]).beta_ls().unwrap()
            - population_moments(sc.target()).beta_ls().unwrap();
        let support: Vec<usize> = (0..r).collect();
        prop_assert!(off_support_max(&diff, &support) < 1e-9 * diff.amax().max(1.0));
        let m = (r + 2).min(d);
        prop_assert!(make_aw_environments(d, r, m, seed).is_ok());
    }
}
