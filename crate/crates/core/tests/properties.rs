use std::collections::BTreeSet;

use exgl::egl::{self, EglConfig, Loss, SolverKind};
use exgl::io::{
    load_dataset, load_report, save_dataset, save_report, Report, ReportFile, ReportFormat,
};
use exgl::metrics::probability_summary;
use exgl::selection::{ArtificialMode, WeightLaw};
use exgl::synth::{build_covariance, CovarianceFamily, SignPattern};
use exgl::{
    augment_artificial, egl_bisection_subfit, egl_objective, exclusive_norm, f_measure, fdr,
    generate, kkt_violation, kmeans_threshold, lasso_fit, random_allocation, reweight_diagonal,
    stability_select, strip_artificial, AllocationPolicy, ArtificialSpec, DesignMatrix, FitResult,
    GroupAllocation, LassoConfig, ResponseVector, SelectionOutcome, SignConstraint,
    StabilityConfig, StabilityReport, SynthSpec, Task, ThresholdMode,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

fn problem(seed: u64, m: usize, n: usize) -> (DesignMatrix, ResponseVector) {
    let mut rng = exgl::rng::seeded(seed);
    let x = gaussian(&mut rng, m, n);
    let w: Array1<f64> = (0..n)
        .map(|j| {
            if j % 2 == 0 {
                rng.sample(StandardNormal)
            } else {
                0.0
            }
        })
        .collect();
    let noise: Array1<f64> = (0..m)
        .map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y = x.dot(&w) + noise;
    (
        DesignMatrix::new(x).unwrap(),
        ResponseVector::regression(y).unwrap(),
    )
}

fn weights(seed: u64, n: usize) -> Array1<f64> {
    let mut rng = exgl::rng::seeded(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

// Exclusive norm and reweighting.

proptest! {
    #[test]
    fn single_group_norm_is_squared_l1(seed in any::<u64>(), n in 1usize..30) {
        let w = weights(seed, n);
        let l1: f64 = w.iter().map(|v| v.abs()).sum();
        let v = exclusive_norm(w.view(), &GroupAllocation::single(n)).unwrap();
        prop_assert!(close(v, l1 * l1, 1e-12));
    }

    #[test]
    fn singleton_groups_norm_is_squared_l2(seed in any::<u64>(), n in 1usize..30) {
        let w = weights(seed, n);
        let v = exclusive_norm(w.view(), &GroupAllocation::singletons(n)).unwrap();
        prop_assert!(close(v, w.dot(&w), 1e-12));
    }

    #[test]
    fn reweighted_quadratic_equals_exclusive_norm(seed in any::<u64>(), n in 1usize..30, k in 1usize..6) {
        let w = weights(seed, n);
        prop_assume!(w.iter().all(|v| v.abs() > 1e-6));
        let g = random_allocation(n, k.min(n), &mut exgl::rng::seeded(seed ^ 1)).unwrap();
        let f = reweight_diagonal(w.view(), &g, 1e-300).unwrap();
        let quad: f64 = w.iter().zip(f.iter()).map(|(wi, fi)| fi * wi * wi).sum();
        prop_assert!(close(quad, exclusive_norm(w.view(), &g).unwrap(), 1e-8));
    }

    #[test]
    fn standardize_is_idempotent(seed in any::<u64>(), m in 2usize..20, n in 1usize..8) {
        let x = DesignMatrix::new(gaussian(&mut exgl::rng::seeded(seed), m, n)).unwrap();
        let once = x.standardize().unwrap();
        let twice = once.standardize().unwrap();
        for (a, b) in once.values().iter().zip(twice.values().iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

// Lasso.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lasso_trace_non_increasing(seed in any::<u64>(), m in 5usize..40, n in 1usize..15, t in 0.0f64..1.0) {
        let (x, y) = problem(seed, m, n);
        let lambda = exgl::lasso_null_lambda(&x, &y) * 10f64.powf(-2.0 * t);
        let fit = lasso_fit(&x, &y, &LassoConfig::new(lambda).with_tol(1e-10)).unwrap();
        for pair in fit.objective_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-10 * pair[0].abs().max(1.0));
        }
    }

    #[test]
    fn lasso_zero_coordinates_satisfy_kkt(seed in any::<u64>(), m in 5usize..40, n in 1usize..15, t in 0.0f64..1.0) {
        let (x, y) = problem(seed, m, n);
        let lambda = exgl::lasso_null_lambda(&x, &y) * 10f64.powf(-2.0 * t);
        let fit = lasso_fit(&x, &y, &LassoConfig::new(lambda).with_tol(1e-12)).unwrap();
        let r = &y.values() - &x.predict(fit.weights.view());
        for j in 0..n {
            if fit.weights.0[j] == 0.0 {
                prop_assert!(x.column(j).dot(&r).abs() <= lambda / 2.0 + 1e-6);
            }
        }
    }

    #[test]
    fn lasso_path_is_linear_between_breakpoints(seed in any::<u64>(), m in 20usize..40, n in 2usize..8) {
        let (x, y) = problem(seed, m, n);
        let hi = exgl::lasso_null_lambda(&x, &y);
        let fit = |l: f64| lasso_fit(&x, &y, &LassoConfig::new(l).with_tol(1e-13)).unwrap().weights.0;
        let (la, lb) = (0.30 * hi, 0.31 * hi);
        let (wa, wb) = (fit(la), fit(lb));
        let pattern = |w: &Array1<f64>| w.iter().map(|v| v.signum() as i8 * i8::from(*v != 0.0)).collect::<Vec<_>>();
        prop_assume!(pattern(&wa) == pattern(&wb));
        let mid = fit(0.5 * (la + lb));
        let interp = (&wa + &wb) * 0.5;
        prop_assume!(pattern(&mid) == pattern(&wa));
        prop_assert!((&mid - &interp).iter().all(|d| d.abs() < 1e-7));
    }
}

// EGL solvers.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn iterative_trace_non_increasing(seed in any::<u64>(), m in 5usize..40, n in 2usize..15, k in 1usize..5, t in -1.0f64..2.0) {
        let (x, y) = problem(seed, m, n);
        let g = random_allocation(n, k.min(n), &mut exgl::rng::seeded(seed ^ 2)).unwrap();
        let fit = egl::egl_iterative_fit(&x, &y, &g, &EglConfig::new(10f64.powf(t))).unwrap();
        for pair in fit.objective_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-10 * pair[0].abs().max(1.0));
        }
    }

    #[test]
    fn converged_solvers_pass_kkt(seed in any::<u64>(), m in 5usize..40, n in 2usize..15, k in 1usize..5, t in -1.0f64..2.0) {
        let (x, y) = problem(seed, m, n);
        let g = random_allocation(n, k.min(n), &mut exgl::rng::seeded(seed ^ 3)).unwrap();
        let cfg = EglConfig::new(10f64.powf(t));
        for kind in [SolverKind::EglReweight, SolverKind::EglIterative, SolverKind::EglActiveset] {
            let fit = egl::fit(kind, &x, &y, &g, &cfg, Loss::Square).unwrap();
            if fit.converged {
                let v = kkt_violation(&x, &y, fit.weights.view(), &g, cfg.lambda).unwrap();
                prop_assert!(v <= 10.0 * cfg.kkt_tol, "{kind:?}: {v}");
            }
        }
    }

    #[test]
    fn bisection_reaches_fixed_point(seed in any::<u64>(), m in 5usize..30, n in 1usize..6, t in -1.0f64..1.5) {
        let (x, y) = problem(seed, m, n);
        let lambda = 10f64.powf(t);
        let cfg = EglConfig::new(lambda);
        let hi = exgl::lasso_null_lambda(&x, &y).max(1e-12);
        let (w, lp) = egl_bisection_subfit(&x, &y, lambda, 0.0, hi, &cfg).unwrap();
        let l1: f64 = w.0.iter().map(|v| v.abs()).sum();
        prop_assert!((lp - 2.0 * lambda * l1).abs() <= cfg.bisection_tol * hi.max(1.0) * 10.0,
            "λ' {lp} vs 2λ||w||₁ {}", 2.0 * lambda * l1);
    }

    #[test]
    fn sign_constraint_is_enforced(seed in any::<u64>(), m in 5usize..40, n in 2usize..15, k in 1usize..5, neg in any::<bool>()) {
        let (x, y) = problem(seed, m, n);
        let g = random_allocation(n, k.min(n), &mut exgl::rng::seeded(seed ^ 4)).unwrap();
        let forbidden: i8 = if neg { -1 } else { 1 };
        let mut cfg = EglConfig::new(1.0);
        cfg.sign_constraint = SignConstraint::forbid(forbidden).unwrap();
        let fit = egl::fit(SolverKind::EglReweight, &x, &y, &g, &cfg, Loss::Square).unwrap();
        for &v in fit.weights.0.iter() {
            prop_assert!(!(v.signum() == f64::from(forbidden) && v.abs() > cfg.eps_clamp), "{v}");
        }
    }

    #[test]
    fn solution_scales_with_response(seed in any::<u64>(), m in 5usize..30, n in 2usize..10, k in 1usize..4, s in 0.2f64..5.0) {
        let (x, y) = problem(seed, m, n);
        let g = random_allocation(n, k.min(n), &mut exgl::rng::seeded(seed ^ 5)).unwrap();
        let mut cfg = EglConfig::new(1.0);
        cfg.kkt_tol = 1e-9;
        cfg.outer_tol = 1e-12;
        let base = egl::egl_iterative_fit(&x, &y, &g, &cfg).unwrap();
        let ys = ResponseVector::regression(&y.values() * s).unwrap();
        cfg.kkt_tol *= s;
        let scaled = egl::egl_iterative_fit(&x, &ys, &g, &cfg).unwrap();
        // The objective at (s y, s w) is s² times the original, so compare objectives
        // (unique even when the minimizer is not) and then the weights.
        let lhs = egl_objective(&x, &ys, scaled.weights.view(), &g, cfg.lambda).unwrap();
        let rhs = s * s * egl_objective(&x, &y, base.weights.view(), &g, cfg.lambda).unwrap();
        prop_assert!(close(lhs, rhs, 1e-6), "{lhs} vs {rhs}");
        for (a, b) in scaled.weights.0.iter().zip(base.weights.0.iter()) {
            prop_assert!((a - s * b).abs() <= 1e-6 * s.max(1.0), "{a} vs {}", s * b);
        }
    }
}

// Stability selection and artificial features.

fn stability_run(seed: u64, iterations: usize) -> (StabilityReport, StabilityReport) {
    let (x, y) = problem(seed, 30, 12);
    let mut cfg = StabilityConfig::new(iterations, 4, seed);
    cfg.reshuffle_groups = false;
    let run = || {
        stability_select(
            &x,
            &y,
            &AllocationPolicy::Random,
            SolverKind::EglIterative,
            &EglConfig::new(2.0),
            Loss::Square,
            &cfg,
        )
        .unwrap()
    };
    (run(), run())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn probabilities_on_the_iteration_lattice(seed in any::<u64>(), iterations in 1usize..8) {
        let (a, b) = stability_run(seed, iterations);
        for &p in &a.probabilities {
            prop_assert!((0.0..=1.0).contains(&p));
            let k = p * iterations as f64;
            prop_assert!((k - k.round()).abs() < 1e-9);
        }
        prop_assert_eq!(a, b);
    }
}

/// Best two-cluster split of the sorted values by exhaustive search.
fn exhaustive_split(p: &[f64]) -> Option<BTreeSet<usize>> {
    let mut best: Option<(f64, BTreeSet<usize>)> = None;
    for &cut in p {
        let upper: BTreeSet<usize> = (0..p.len()).filter(|&j| p[j] >= cut).collect();
        if upper.len() == p.len() {
            continue;
        }
        let sse = |set: &dyn Fn(usize) -> bool| {
            let v: Vec<f64> = (0..p.len()).filter(|&j| set(j)).map(|j| p[j]).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
        };
        let cost = sse(&|j| upper.contains(&j)) + sse(&|j| !upper.contains(&j));
        if best.as_ref().is_none_or(|(c, _)| cost < *c - 1e-12) {
            best = Some((cost, upper));
        }
    }
    best.map(|(_, s)| s)
}

proptest! {
    #[test]
    fn kmeans_matches_exhaustive_split(counts in prop::collection::vec(0u32..=20, 2..40)) {
        let p: Vec<f64> = counts.iter().map(|&c| f64::from(c) / 20.0).collect();
        let split = kmeans_threshold(&p);
        match exhaustive_split(&p) {
            Some(best) => {
                let got: BTreeSet<usize> = split.stable_set.iter().copied().collect();
                // Equal-cost ties may resolve differently; compare costs instead of sets.
                let cost = |s: &BTreeSet<usize>| {
                    let part = |inside: bool| {
                        let v: Vec<f64> = (0..p.len()).filter(|j| s.contains(j) == inside).map(|j| p[j]).collect();
                        let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
                        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
                    };
                    part(true) + part(false)
                };
                prop_assert!((cost(&got) - cost(&best)).abs() < 1e-9);
                prop_assert!(split.separated);
            }
            None => prop_assert!(!split.separated),
        }
    }

    #[test]
    fn kmeans_invariant_under_permutation(counts in prop::collection::vec(0u32..=20, 2..40), seed in any::<u64>()) {
        let p: Vec<f64> = counts.iter().map(|&c| f64::from(c) / 20.0).collect();
        let mut perm: Vec<usize> = (0..p.len()).collect();
        perm.shuffle(&mut exgl::rng::seeded(seed));
        let q: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let a = kmeans_threshold(&p);
        let b = kmeans_threshold(&q);
        prop_assert_eq!(a.threshold, b.threshold);
        let mapped: BTreeSet<usize> = b.stable_set.iter().map(|&k| perm[k]).collect();
        prop_assert_eq!(mapped, a.stable_set.iter().copied().collect::<BTreeSet<_>>());
    }

    #[test]
    fn strip_undoes_augment(seed in any::<u64>(), m in 3usize..15, n in 2usize..12, k in 1usize..4) {
        let k = k.min(n);
        let (x, y) = problem(seed, m, n);
        let g = random_allocation(n, k, &mut exgl::rng::seeded(seed)).unwrap();
        let spec = ArtificialSpec {
            mode: ArtificialMode::Regression {
                feature_mean: 0.0,
                feature_var: 1.0,
                weight: WeightLaw::Normal { mean: 0.0, var: 0.05 },
            },
            n_artificial: k,
            rng_seed: seed,
        };
        let aug = augment_artificial(&x, &y, &g, &spec).unwrap();
        prop_assert_eq!(aug.x.n_features(), n + k);
        let w = weights(seed ^ 9, n);
        let mut padded = w.to_vec();
        padded.extend(std::iter::repeat_n(0.0, k));
        let fit = FitResult::new(Array1::from(padded), vec![0.0], true, 1);
        let stripped = strip_artificial(&fit, &aug.artificial_indices);
        prop_assert_eq!(&stripped.weights.0, &w);
        prop_assert_eq!(stripped.active_set, FitResult::new(w, vec![0.0], true, 1).active_set);
    }
}

#[test]
fn informative_features_are_selected_more_often() {
    let spec = SynthSpec {
        m: 100,
        n: 60,
        n_s: 10,
        rho: 0.3,
        w_s: 0.5,
        noise_var: 0.25,
        family: CovarianceFamily::Pairwise,
        sign_pattern: SignPattern::Random,
        rng_seed: 3,
    };
    let d = generate(&spec).unwrap();
    let x = d.x.standardize().unwrap();
    let y = d.y.centered();
    let cfg = StabilityConfig::new(20, 10, 4);
    let report = stability_select(
        &x,
        &y,
        &AllocationPolicy::Random,
        SolverKind::EglActiveset,
        &EglConfig::new(50.0 * 10.0),
        Loss::Square,
        &cfg,
    )
    .unwrap();
    let truth: BTreeSet<usize> = d.support.iter().copied().collect();
    let (inside, outside) = probability_summary(&report.probabilities, &truth);
    assert!(inside > outside, "{inside} vs {outside}");
}

// Synthetic data.

fn family(kind: u8) -> CovarianceFamily {
    match kind % 4 {
        0 => CovarianceFamily::Pairwise,
        1 => CovarianceFamily::RandomPairwise {
            n_coupled: 4,
            partners: 2,
            coupling: None,
        },
        2 => CovarianceFamily::BlockDiagonal { n_blocks: 2 },
        _ => CovarianceFamily::ErdosRenyi { p_connect: 0.3 },
    }
}

fn small_spec(kind: u8, seed: u64, n_s: usize, balanced: bool) -> SynthSpec {
    SynthSpec {
        m: 20,
        n: 30,
        n_s,
        rho: if kind % 4 == 3 { 0.2 } else { 0.5 },
        w_s: 0.3,
        noise_var: 1.0,
        family: family(kind),
        sign_pattern: if balanced {
            SignPattern::Balanced
        } else {
            SignPattern::Random
        },
        rng_seed: seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn covariance_is_a_valid_correlation(kind in any::<u8>(), seed in any::<u64>(), n_s in 4usize..12) {
        let spec = small_spec(kind, seed, n_s, false);
        let c = build_covariance(&spec, &mut exgl::rng::seeded(seed)).unwrap();
        let s = &c.sigma;
        for i in 0..s.nrows() {
            prop_assert_eq!(s[[i, i]], 1.0);
            for j in 0..s.ncols() {
                prop_assert_eq!(s[[i, j]], s[[j, i]]);
            }
        }
        let l = &c.cholesky;
        let back = l.dot(&l.t());
        prop_assert!((&back - s).iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn generation_is_deterministic(kind in any::<u8>(), seed in any::<u64>()) {
        let spec = small_spec(kind, seed, 6, false);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        prop_assert_eq!(a.x.values(), b.x.values());
        prop_assert_eq!(a.y.values(), b.y.values());
    }

    #[test]
    fn balanced_signs_cancel(kind in any::<u8>(), seed in any::<u64>(), half in 2usize..6) {
        let d = generate(&small_spec(kind, seed, 2 * half, true)).unwrap();
        let sum: f64 = d.support.iter().map(|&j| d.w_true.0[j].signum()).sum();
        prop_assert_eq!(sum, 0.0);
    }
}

#[test]
fn empirical_covariance_matches_sigma() {
    for kind in 0..4u8 {
        let mut spec = small_spec(kind, 17, 8, false);
        spec.m = 10_000;
        spec.n = 14;
        let d = generate(&spec).unwrap();
        let x = d.x.values();
        let k = d.sigma.nrows();
        let m = x.nrows() as f64;
        for i in 0..k {
            for j in 0..k {
                let (ci, cj) = (x.column(i), x.column(j));
                let (mi, mj) = (ci.sum() / m, cj.sum() / m);
                let cov = ci
                    .iter()
                    .zip(cj.iter())
                    .map(|(a, b)| (a - mi) * (b - mj))
                    .sum::<f64>()
                    / m;
                assert!(
                    (cov - d.sigma[[i, j]]).abs() < 0.05,
                    "family {kind} ({i},{j}): {cov}"
                );
            }
        }
    }
}

// Metrics.

fn subset(bits: u64, n: usize) -> BTreeSet<usize> {
    (0..n).filter(|&j| bits >> j & 1 == 1).collect()
}

proptest! {
    #[test]
    fn f_measure_bounds_and_identity(sel in any::<u64>(), truth in 1u64.., n in 1usize..40) {
        let truth = subset(truth, n);
        prop_assume!(!truth.is_empty());
        let s = subset(sel, n);
        let o = SelectionOutcome::new(s.iter().copied(), truth.iter().copied(), n).unwrap();
        let f = f_measure(&o).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f == 1.0, s == truth);
    }

    #[test]
    fn fdr_complements_precision(sel in 1u64.., truth in any::<u64>(), n in 1usize..40) {
        let s = subset(sel, n);
        prop_assume!(!s.is_empty());
        let o = SelectionOutcome::new(s, subset(truth, n), n).unwrap();
        prop_assert!((fdr(&o) + o.precision().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_invariant_under_relabeling(sel in any::<u64>(), truth in 1u64.., n in 1usize..40, seed in any::<u64>()) {
        let truth = subset(truth, n);
        prop_assume!(!truth.is_empty());
        let s = subset(sel, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut exgl::rng::seeded(seed));
        let a = SelectionOutcome::new(s.iter().copied(), truth.iter().copied(), n).unwrap();
        let b = SelectionOutcome::new(s.iter().map(|&j| perm[j]), truth.iter().map(|&j| perm[j]), n).unwrap();
        prop_assert_eq!(f_measure(&a).unwrap(), f_measure(&b).unwrap());
        prop_assert_eq!(fdr(&a), fdr(&b));
    }
}

// Persistence.

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dataset_round_trip(seed in any::<u64>(), m in 1usize..10, n in 1usize..6) {
        let (x, y) = problem(seed, m, n);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_dataset(&path, &x, &y, None).unwrap();
        let back = load_dataset(&path, Task::Regression).unwrap();
        prop_assert_eq!(back.x.values(), x.values());
        prop_assert_eq!(back.y.values(), y.values());
    }

    #[test]
    fn report_round_trip(seed in any::<u64>(), n in 1usize..20, iterations in 1usize..6) {
        let mut rng = exgl::rng::seeded(seed);
        let selections: Vec<Vec<usize>> = (0..iterations)
            .map(|_| (0..n).filter(|_| rng.random::<bool>()).collect())
            .collect();
        let report = StabilityReport::from_selections(n, selections, ThresholdMode::KMeans, 0).unwrap();
        let fit = FitResult::new(weights(seed, n), vec![3.0, 2.0], true, 2);
        let dir = tempfile::tempdir().unwrap();
        for (k, r) in [Report::Stability(report), Report::Fit(fit)].into_iter().enumerate() {
            let seeds = [("data".to_string(), seed)].into_iter().collect();
            let file = ReportFile::new(r, serde_json::json!({ "lambda": 1.5, "seed": seed }), seeds);
            let path = dir.path().join(format!("r{k}.json"));
            save_report(&file, &path, ReportFormat::Json).unwrap();
            let back = load_report(&path).unwrap();
            prop_assert_eq!(back.seeds["data"], seed);
            prop_assert_eq!(back, file);
        }
    }
}
