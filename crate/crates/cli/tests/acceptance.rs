//! Exit gate: eight numbered criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so every criterion is attempted and reported even
//! when an earlier one fails. The process exits nonzero if any criterion fails.

use std::fs;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ssda_cli::cli_main;
use ssda_core::estimators::{cip_population, dip_cov_fit, dip_mean_population, dip_population, oracle_population};
use ssda_core::experiment::{excess_risk_population, run_simulation, Method, ResultsTable, Scenario, SimConfig};
use ssda_core::finetune::reference::{brute_force_qp, BallSpec, L1Spec, QpConstraints, QuadObjective};
use ssda_core::finetune::{
    ft_cip_moments, ft_cip_tar_moments, ft_dip, ft_dip_moments, ft_ols_anchored, solve_subspace_ls, AnchoredPenalty,
    PenaltyNorm, SubspaceConstraint,
};
use ssda_core::rng::{derive_seed, Role};
use ssda_core::scm::{
    make_aw_environments, make_ca_environments, make_sc_environments, population_moments, sample_labeled,
    sample_unlabeled, Dataset, DomainParams, EnvironmentSet, Intervention,
};
use ssda_core::subspace::{BasisOrigin, OrthoBasis};
use ssda_core::{LinearPredictor, Moments};

type Mat = DMatrix<f64>;
type Vector = DVector<f64>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn v(xs: &[f64]) -> Vector {
    Vector::from_vec(xs.to_vec())
}

fn m3(rows: [[f64; 3]; 3]) -> Mat {
    Mat::from_fn(3, 3, |i, j| rows[i][j])
}

fn lcg_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Mat::from_fn(rows, cols, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}

fn lcg_vec(n: usize, seed: u64) -> Vector {
    lcg_mat(n, 1, seed).column(0).into_owned()
}

fn linf(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax()
}

fn criterion_1() -> Outcome {
    let b = v(&[1.0, 1.0, 1.0]);
    let src = DomainParams::standard(m3([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [2.0, 2.0, 0.0]]), b.clone()).unwrap();
    let tar = DomainParams::standard(m3([[0.0, 0.0, 0.0], [-2.0, 0.0, 0.0], [-2.0, 2.0, 0.0]]), b).unwrap();
    let env = EnvironmentSet::new(vec![src], tar, Intervention::Sc { support: vec![0] }).unwrap();
    let beta_ls = population_moments(&env.sources()[0]).beta_ls().unwrap();
    let beta_star = oracle_population(env.target()).unwrap();
    let e1 = linf(&beta_ls, &(v(&[-3.0, -1.0, 1.0]) / 4.0));
    let e2 = linf(beta_star.beta(), &(v(&[5.0, -1.0, 1.0]) / 4.0));
    outcome(e1 < 1e-10 && e2 < 1e-10, format!("source LS error {e1:.1e}, oracle error {e2:.1e}"))
}

fn criterion_2() -> Outcome {
    let b = v(&[1.0, 1.0, 1.0]);
    let zero = Mat::zeros(3, 3);
    let src = DomainParams::standard(zero.clone(), b.clone()).unwrap().with_mean_shift(v(&[4.25, 2.75, -4.0])).unwrap();
    let tar = DomainParams::standard(zero, b).unwrap().with_mean_shift(v(&[-2.5, -1.5, 4.0])).unwrap();
    let env = EnvironmentSet::new(vec![src], tar, Intervention::MeanShift).unwrap();
    let dip = dip_mean_population(&env).unwrap();
    let beta_star = oracle_population(env.target()).unwrap();
    let pm0 = population_moments(env.target());
    let pm1 = population_moments(&env.sources()[0]);
    let dir = pm0.sigma_x.clone().try_inverse().unwrap() * (&pm1.mean_x - &pm0.mean_x);
    let gap = beta_star.beta() - dip.beta();
    let u = &dir / dir.norm();
    let sine = (&gap - &u * gap.dot(&u)).norm() / gap.norm();
    let errs = [
        linf(dip.beta(), &(v(&[47.0, 59.0, 71.0]) / 272.0)),
        linf(beta_star.beta(), &v(&[0.25, 0.25, 0.25])),
        linf(&dir, &(v(&[7.0, 3.0, -1.0]) / 12.0)),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    outcome(worst < 1e-10 && sine < 1e-10, format!("max coefficient error {worst:.1e}, sine {sine:.1e}"))
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in [6, 12] {
        for seed in 0..10u64 {
            let ca = make_ca_environments(d, 2, 1, seed).unwrap();
            let pm0 = population_moments(ca.target());
            let star = pm0.beta_ls().unwrap();
            let dip = dip_population(&ca).unwrap();
            let ft = ft_dip_moments(&dip, &pm0.sigma_x, &Moments::from_population(&pm0), f64::INFINITY).unwrap();
            worst = worst.max((ft.beta() - &star).norm());

            let aw = make_aw_environments(d, 2, 4, seed).unwrap();
            let pm0 = population_moments(aw.target());
            let star = pm0.beta_ls().unwrap();
            let target = Moments::from_population(&pm0);
            let cip = cip_population(&aw, 2).unwrap();
            let sigma1 = population_moments(&aw.sources()[0]).sigma_x;
            let a = ft_cip_moments(&cip, &sigma1, &target, f64::INFINITY).unwrap();
            let b = ft_cip_tar_moments(&cip, &pm0.sigma_x, &target, f64::INFINITY).unwrap();
            worst = worst.max((a.beta() - &star).norm()).max((b.beta() - &star).norm());
        }
    }
    let sc = make_sc_environments(4, 2, 2, 5).unwrap();
    let diff =
        population_moments(&sc.sources()[0]).beta_ls().unwrap() - population_moments(sc.target()).beta_ls().unwrap();
    let off = diff[2].abs().max(diff[3].abs());
    outcome(worst < 1e-9 && off < 1e-10, format!("worst recovery error {worst:.1e}, SC off-support {off:.1e}"))
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let d = 2 + (seed as usize % 5);
        let n = 40;
        let x = lcg_mat(n, d, seed) + lcg_mat(n, 1, seed ^ 1) * lcg_mat(1, d, seed ^ 2);
        let y = &x * lcg_vec(d, seed ^ 3) + lcg_vec(n, seed ^ 4) * 0.5;
        let g = x.tr_mul(&x) / n as f64;
        let h = x.tr_mul(&y) / n as f64;
        let data = Dataset::labeled(x, y, 0, seed).unwrap();

        // subspace fine-tuning, cap active on odd seeds
        let k = 1 + seed as usize % (d - 1);
        let q = lcg_mat(d, k, seed ^ 10).qr().q();
        let basis = OrthoBasis::new(q.columns(0, k).into_owned(), BasisOrigin::Augmented).unwrap();
        let a = lcg_mat(d, d, seed ^ 11);
        let sigma = a.tr_mul(&a) / d as f64 + Mat::identity(d, d) * 0.3;
        let anchor = LinearPredictor::new("anchor", lcg_vec(d, seed ^ 12)).unwrap();
        let free = SubspaceConstraint::new(basis.clone(), sigma.clone(), anchor.clone(), f64::INFINITY).unwrap();
        let rho = if seed % 2 == 1 {
            0.5 * free.cap_value(solve_subspace_ls(&data, &free).unwrap().beta())
        } else {
            f64::INFINITY
        };
        let c = SubspaceConstraint::new(basis.clone(), sigma.clone(), anchor.clone(), rho).unwrap();
        let ours = solve_subspace_ls(&data, &c).unwrap();
        let qmat = c.q_hat.cols().transpose() * &sigma;
        let rhs = &qmat * anchor.beta();
        let cons = QpConstraints {
            affine: Some((qmat, rhs)),
            ball: rho.is_finite().then(|| BallSpec {
                c_mat: basis.cols().transpose() * &sigma,
                center: Vector::zeros(d),
                rho,
            }),
            l1: None,
        };
        let reference = brute_force_qp(&QuadObjective { g: g.clone(), h: h.clone() }, &cons).unwrap();
        worst = worst.max(linf(ours.beta(), &reference));

        // anchored ℓ1, and ℓ2 with a ball on every third seed
        let lambda = [0.003, 0.03, 0.3][seed as usize % 3];
        let center = lcg_vec(d, seed ^ 20) * 2.0;
        let anchor = LinearPredictor::new("anchor", center.clone()).unwrap();
        let l1 = ft_ols_anchored(&anchor, &data, &AnchoredPenalty::new(lambda, PenaltyNorm::L1).unwrap()).unwrap();
        let cons = QpConstraints { l1: Some(L1Spec { lambda, center: center.clone() }), ..Default::default() };
        let reference = brute_force_qp(&QuadObjective { g: g.clone(), h: h.clone() }, &cons).unwrap();
        worst = worst.max(linf(l1.beta(), &reference));

        let ball = if seed % 3 == 0 { 0.5 } else { f64::INFINITY };
        let l2 = ft_ols_anchored(&anchor, &data, &AnchoredPenalty::with_ball(lambda, PenaltyNorm::L2, ball).unwrap())
            .unwrap();
        let obj = QuadObjective { g: &g + Mat::identity(d, d) * lambda, h: &h + &center * lambda };
        let cons = QpConstraints {
            ball: ball.is_finite().then(|| BallSpec {
                c_mat: Mat::identity(d, d),
                center: Vector::zeros(d),
                rho: ball,
            }),
            ..Default::default()
        };
        worst = worst.max(linf(l2.beta(), &brute_force_qp(&obj, &cons).unwrap()));
    }
    outcome(worst < 1e-6, format!("50 instances, worst ℓ∞ gap {worst:.1e}"))
}

fn criterion_5() -> Outcome {
    let (d, r, n_src, seeds) = (40, 4, 50_000, 50u64);
    let sizes = [50usize, 100, 200, 400];
    let mut sums = [0.0; 4];
    for seed in 0..seeds {
        let env = make_ca_environments(d, r, 1, derive_seed(seed, 0, 0, Role::Environment)).unwrap();
        let s = |tag, role| derive_seed(seed, 0, tag, role);
        let src_l = sample_labeled(&env.sources()[0], n_src, s(1, Role::Labeled)).unwrap();
        let src_u = sample_unlabeled(&env.sources()[0], n_src, s(1, Role::Unlabeled)).unwrap();
        let tar_u = sample_unlabeled(env.target(), n_src, s(0, Role::Unlabeled)).unwrap();
        let dip = dip_cov_fit(&src_l, &src_u, &tar_u, r).unwrap();
        for (i, &n0) in sizes.iter().enumerate() {
            let tar_l = sample_labeled(env.target(), n0, derive_seed(seed, i as u64, 0, Role::Labeled)).unwrap();
            let ft = ft_dip(&dip, &tar_l, &tar_u, f64::INFINITY).unwrap();
            sums[i] += excess_risk_population(&ft, env.target()).unwrap();
        }
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = sums.iter().map(|s| (s / seeds as f64).ln()).collect();
    let mx = xs.iter().sum::<f64>() / 4.0;
    let my = ys.iter().sum::<f64>() / 4.0;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let means: Vec<String> = sums.iter().map(|s| format!("{:.4}", s / seeds as f64)).collect();
    outcome((-1.35..=-0.65).contains(&slope), format!("slope {slope:.3}, means [{}]", means.join(", ")))
}

/// Desk-scale config: d = 20, sizes divided by 5, shift ranks scaled with d.
fn desk_config(scenario: Scenario) -> SimConfig {
    let mut cfg = SimConfig::defaults(scenario);
    let r = ((cfg.r * 20) as f64 / cfg.d as f64).round().max(1.0) as usize;
    cfg.d = 20;
    cfg.r = r;
    cfg.scale_sizes(5);
    cfg.trials = 20;
    cfg.base_seed = 0;
    cfg
}

fn less(table: &ResultsTable, a: Method, b: Method) -> (bool, String) {
    let (x, y) = (table.mean(a), table.mean(b));
    (x < y, format!("{} {x:.4} vs {} {y:.4}", a.name(), b.name()))
}

fn criterion_6_and_7() -> (Outcome, Outcome) {
    let run = |s| run_simulation(&desk_config(s)).expect("desk simulation");
    let (ca, sc, aw) = (run(Scenario::Ca), run(Scenario::Sc), run(Scenario::Aw));

    let checks_a = [less(&ca, Method::FtDip, Method::Dip), less(&ca, Method::FtDip, Method::OlsTar)];
    let checks_b = [less(&sc, Method::FtOlsL1, Method::FtOlsL2), less(&sc, Method::FtOlsL1, Method::OlsSrc)];
    let (ft_cip, ft_tar, cip) = (aw.mean(Method::FtCip), aw.mean(Method::FtCipTar), aw.mean(Method::Cip));
    let ratio = ft_cip.max(ft_tar) / ft_cip.min(ft_tar);
    let pass_c = ratio <= 2.0 && ft_cip < cip && ft_tar < cip;
    let pass_a = checks_a.iter().all(|c| c.0);
    let pass_b = checks_b.iter().all(|c| c.0);
    let mark = |p: bool| if p { "ok" } else { "violated" };
    let six = outcome(
        pass_a && pass_b && pass_c,
        format!(
            "(a) {}: {}; {} | (b) {}: {}; {} | (c) {}: FT-CIP {ft_cip:.4}, FT-CIP-Tar {ft_tar:.4}, CIP {cip:.4}, ratio {ratio:.2}",
            mark(pass_a),
            checks_a[0].1,
            checks_a[1].1,
            mark(pass_b),
            checks_b[0].1,
            checks_b[1].1,
            mark(pass_c)
        ),
    );

    let mut argmin_ok = true;
    for table in [&ca, &sc, &aw] {
        for t in &table.trials {
            match &t.selection {
                Some(rep) => {
                    let min = rep.rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
                    let picked: Vec<_> = rep.rows.iter().filter(|r| r.2).collect();
                    argmin_ok &= picked.len() == 1 && picked[0].1 == min;
                }
                None => argmin_ok = false,
            }
        }
    }
    let ft_dip_picks = ca
        .trials
        .iter()
        .filter(|t| t.selection.as_ref().is_some_and(|rep| rep.rows.iter().any(|r| r.2 && r.0.starts_with("FT-DIP"))))
        .count();
    let share = ft_dip_picks as f64 / ca.trials.len() as f64;
    let seven = outcome(
        argmin_ok && share >= 0.6,
        format!(
            "argmin held on every trial: {argmin_ok}; FT-DIP picked in {ft_dip_picks}/{} CA trials",
            ca.trials.len()
        ),
    );
    (six, seven)
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let argv: Vec<String> = [
        "ssda",
        "--sim",
        "ca",
        "--d",
        "10",
        "--r",
        "2",
        "--sources",
        "2",
        "--n-src",
        "400",
        "--n-src-u",
        "400",
        "--n-tar",
        "15",
        "--n-tar-u",
        "400",
        "--n-val",
        "15",
        "--trials",
        "4",
        "--seed",
        "11",
        "--quiet",
        "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain(std::iter::once(out.display().to_string()))
    .collect();
    let first_code = cli_main(&argv);
    let first = fs::read(out.join("trials.csv")).unwrap_or_default();
    let second_code = cli_main(&argv);
    let second = fs::read(out.join("trials.csv")).unwrap_or_default();
    let same = !first.is_empty() && first == second;
    outcome(
        first_code == 0 && second_code == 0 && same,
        format!("exit codes {first_code}/{second_code}, {} bytes, identical: {same}", first.len()),
    )
}

fn timed(n: usize, f: impl FnOnce() -> Outcome) -> (usize, Outcome, f64) {
    let t = Instant::now();
    let o = f();
    (n, o, t.elapsed().as_secs_f64())
}

fn main() {
    let mut results = vec![
        timed(1, criterion_1),
        timed(2, criterion_2),
        timed(3, criterion_3),
        timed(4, criterion_4),
        timed(5, criterion_5),
    ];
    let t = Instant::now();
    let (six, seven) = criterion_6_and_7();
    results.push((6, six, t.elapsed().as_secs_f64()));
    results.push((7, seven, 0.0));
    results.push(timed(8, criterion_8));

    for (n, o, secs) in &results {
        println!("criterion {n}: {} ({secs:.1} s) {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = results.iter().filter(|r| !r.1.pass).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
