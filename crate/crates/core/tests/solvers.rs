use exgl::egl::{self, EglConfig, Loss, SolverKind};
use exgl::{
    egl_bisection_subfit, egl_objective, kkt_violation, lasso_fit, DesignMatrix, GroupAllocation,
    LassoConfig, ResponseVector,
};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

fn random_problem(rng: &mut impl Rng, m: usize, n: usize) -> (DesignMatrix, ResponseVector) {
    let x = Array2::from_shape_fn((m, n), |_| rng.sample::<f64, _>(StandardNormal));
    let w: Array1<f64> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.5 {
                rng.sample(StandardNormal)
            } else {
                0.0
            }
        })
        .collect();
    let noise: Array1<f64> = (0..m)
        .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y = x.dot(&w) + noise;
    (
        DesignMatrix::new(x).unwrap(),
        ResponseVector::regression(y).unwrap(),
    )
}

fn random_groups(rng: &mut impl Rng, n: usize, n_groups: usize) -> GroupAllocation {
    exgl::random_allocation(n, n_groups, rng).unwrap()
}

/// Minimum of the block objective over Lasso solutions on a λ′ grid.
fn grid_oracle(x: &DesignMatrix, y: &ResponseVector, lambda: f64, points: usize) -> f64 {
    let hi = exgl::lasso_null_lambda(x, y);
    let g = GroupAllocation::single(x.n_features());
    let mut best = egl_objective(x, y, Array1::zeros(x.n_features()).view(), &g, lambda).unwrap();
    let mut warm = None;
    for k in (0..points).rev() {
        let lp = hi * k as f64 / (points - 1) as f64;
        let mut cfg = LassoConfig::new(lp).with_tol(1e-13);
        if let Some(w) = warm.take() {
            cfg = cfg.with_warm_start(w);
        }
        let fit = lasso_fit(x, y, &cfg).unwrap();
        best = best.min(egl_objective(x, y, fit.weights.view(), &g, lambda).unwrap());
        warm = Some(fit.weights);
    }
    best
}

#[test]
fn bisection_matches_grid_search() {
    let mut rng = exgl::rng::seeded(11);
    for _ in 0..15 {
        let m = rng.random_range(5..=30);
        let n = rng.random_range(1..=5);
        let (x, y) = random_problem(&mut rng, m, n);
        let lambda = 10f64.powf(rng.random_range(-1.0..1.5));
        let cfg = EglConfig::new(lambda);
        let hi = exgl::lasso_null_lambda(&x, &y).max(1e-12);
        let (w, _) = egl_bisection_subfit(&x, &y, lambda, 0.0, hi, &cfg).unwrap();
        let g = GroupAllocation::single(n);
        let obj = egl_objective(&x, &y, w.view(), &g, lambda).unwrap();
        let oracle = grid_oracle(&x, &y, lambda, 4000);
        assert!(obj <= oracle * (1.0 + 1e-6), "{obj} vs grid {oracle}");
    }
}

#[test]
fn solvers_agree_on_random_instances() {
    let mut rng = exgl::rng::seeded(5);
    for t in 0..100 {
        let n = rng.random_range(2..=20);
        let m = rng.random_range(5..=50);
        let n_groups = rng.random_range(1..=5.min(n));
        let (x, y) = random_problem(&mut rng, m, n);
        let g = random_groups(&mut rng, n, n_groups);
        let lambda = 10f64.powf(rng.random_range(-1.0..2.0));
        let cfg = EglConfig::new(lambda);
        let mut objs = Vec::new();
        for kind in [
            SolverKind::EglReweight,
            SolverKind::EglIterative,
            SolverKind::EglActiveset,
        ] {
            let fit = egl::fit(kind, &x, &y, &g, &cfg, Loss::Square).unwrap();
            let obj = egl_objective(&x, &y, fit.weights.view(), &g, lambda).unwrap();
            let kkt = kkt_violation(&x, &y, fit.weights.view(), &g, lambda).unwrap();
            assert!(
                kkt <= 1e-4,
                "instance {t} {kind:?}: kkt {kkt} converged {}",
                fit.converged
            );
            objs.push(obj);
        }
        let lo = objs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = objs.iter().cloned().fold(0.0, f64::max);
        assert!((hi - lo) / lo <= 1e-3, "instance {t}: {objs:?}");
    }
}

/// Gauss-Jordan elimination with partial pivoting.
fn solve_dense(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[[i, c]].abs().total_cmp(&a[[j, c]].abs()))
            .unwrap();
        for k in 0..n {
            a.swap([c, k], [p, k]);
        }
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[[r, c]] / a[[c, c]];
                for k in 0..n {
                    a[[r, k]] -= f * a[[c, k]];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Array1::from_shape_fn(n, |i| b[i] / a[[i, i]])
}

#[test]
fn singleton_groups_reduce_to_ridge() {
    let mut rng = exgl::rng::seeded(21);
    for _ in 0..10 {
        let n = rng.random_range(1..=12);
        let m = rng.random_range(n + 2..=40);
        let (x, y) = random_problem(&mut rng, m, n);
        let lambda = 10f64.powf(rng.random_range(-1.0..2.0));
        let xv = x.values();
        let mut a = xv.t().dot(&xv);
        a.diag_mut().mapv_inplace(|v| v + lambda);
        let ridge = solve_dense(a, xv.t().dot(&y.values()));
        let g = GroupAllocation::singletons(n);
        for kind in [
            SolverKind::EglReweight,
            SolverKind::EglIterative,
            SolverKind::EglActiveset,
        ] {
            let fit = egl::fit(kind, &x, &y, &g, &EglConfig::new(lambda), Loss::Square).unwrap();
            for (a, b) in fit.weights.0.iter().zip(ridge.iter()) {
                assert!((a - b).abs() < 1e-4, "{kind:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn single_group_matches_squared_l1_grid() {
    let mut rng = exgl::rng::seeded(33);
    for _ in 0..5 {
        let n = rng.random_range(2..=6);
        let m = rng.random_range(8..=30);
        let (x, y) = random_problem(&mut rng, m, n);
        let lambda = 10f64.powf(rng.random_range(-1.0..1.5));
        let g = GroupAllocation::single(n);
        let oracle = grid_oracle(&x, &y, lambda, 4000);
        for kind in [
            SolverKind::EglReweight,
            SolverKind::EglIterative,
            SolverKind::EglActiveset,
        ] {
            let fit = egl::fit(kind, &x, &y, &g, &EglConfig::new(lambda), Loss::Square).unwrap();
            let obj = egl_objective(&x, &y, fit.weights.view(), &g, lambda).unwrap();
            assert!(obj <= oracle * (1.0 + 1e-6), "{kind:?}: {obj} vs {oracle}");
        }
    }
}
