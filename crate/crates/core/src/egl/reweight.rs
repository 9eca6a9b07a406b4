use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{EglConfig, Loss};
use crate::data::{
    check_pair, DesignMatrix, FitResult, GroupAllocation, ResponseVector, SignConstraint, Task,
};
use crate::error::{Error, Result};
use crate::kkt::kkt_violation;
use crate::linalg::{norm_inf, Cholesky};
use crate::penalty::{exclusive_norm, reweight_diagonal};

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-10;

/// Exclusive group Lasso by re-weighting.
///
/// Starting from `w_i = 1/n`, each iteration
/// 1. resets forbidden-sign coordinates to `−c·eps` when a sign constraint is set,
/// 2. forms `F_ii = ||w_{g(i)}||_1 / max(|w_i|, eps)`,
/// 3. solves `min f(X̃ w̃, y) + λ ||w̃||²` with `X̃ = X F^{-1/2}`,
/// 4. maps back `w = F^{-1/2} w̃`,
///
/// until `||w_new − w_old||_∞ < outer_tol`.
pub fn egl_reweight_fit(
    x: &DesignMatrix,
    y: &ResponseVector,
    groups: &GroupAllocation,
    cfg: &EglConfig,
    loss: Loss,
) -> Result<FitResult> {
    let n = x.n_features();
    reweight_from(
        x,
        y,
        groups,
        cfg,
        loss,
        Array1::from_elem(n, 1.0 / n as f64),
    )
}

pub(crate) fn reweight_from(
    x: &DesignMatrix,
    y: &ResponseVector,
    groups: &GroupAllocation,
    cfg: &EglConfig,
    loss: Loss,
    init: Array1<f64>,
) -> Result<FitResult> {
    check_pair(x, y)?;
    groups.check_features(x.n_features())?;
    cfg.validate()?;
    match (loss, y.task()) {
        (Loss::Square, Task::Regression) | (Loss::Logistic, Task::BinaryClassification) => {}
        (l, t) => {
            return Err(Error::TaskMismatch(format!(
                "{l:?} loss cannot be used with a {t:?} response"
            )))
        }
    }
    let (m, n) = (x.n_samples(), x.n_features());
    let xv = x.values();
    let yv = y.values();
    // Primal systems reuse XᵀX; the dual kernel depends on F and is rebuilt.
    let primal = n <= m;
    let xtx = if primal && loss == Loss::Square {
        Some(xv.t().dot(&xv))
    } else {
        None
    };
    let xty = xv.t().dot(&yv);

    let mut w = init;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    let mut w_tilde: Option<Array1<f64>> = None;
    let mut frozen = vec![false; n];
    while iters < cfg.max_outer_iter {
        iters += 1;
        project_sign(&mut w, &cfg.sign_constraint, cfg.eps_clamp);
        let f = reweight_diagonal(w.view(), groups, cfg.eps_clamp)?;
        let mut scale = f.mapv(|v| 1.0 / v.sqrt());
        for j in 0..n {
            if frozen[j] {
                scale[j] = 0.0;
            }
        }
        let mut w_new = match loss {
            Loss::Square => {
                let wt = match &xtx {
                    Some(xtx) => ridge_primal(xtx.view(), xty.view(), scale.view(), cfg.lambda)?,
                    None => ridge_dual(xv, yv, scale.view(), cfg.lambda)?,
                };
                &wt * &scale
            }
            Loss::Logistic => {
                let start = w_tilde.take().unwrap_or_else(|| {
                    Array1::from_shape_fn(n, |j| if scale[j] > 0.0 { w[j] / scale[j] } else { 0.0 })
                });
                let wt = logistic_ridge(xv, yv, scale.view(), cfg.lambda, start)?;
                let out = &wt * &scale;
                w_tilde = Some(wt);
                out
            }
        };
        project_sign(&mut w_new, &cfg.sign_constraint, cfg.eps_clamp);
        let delta = norm_inf((&w_new - &w).view());
        w = w_new;
        trace.push(objective(xv, yv, w.view(), groups, cfg.lambda, loss));
        if !delta.is_finite() {
            return Err(Error::InvalidInput(
                "re-weighting diverged to non-finite weights".into(),
            ));
        }
        let stalled = delta < cfg.outer_tol;
        if stalled || iters % SNAP_EVERY == 0 {
            if snap_or_release(xv, yv, &mut w, &mut frozen, groups, cfg, loss) {
                w_tilde = None;
                continue;
            }
            if loss == Loss::Square {
                if let Some(p) = polish(xv, yv, &w, groups, cfg.lambda) {
                    if kkt_violation(x, y, p.view(), groups, cfg.lambda)? <= cfg.kkt_tol {
                        w = p;
                        if let Some(last) = trace.last_mut() {
                            *last = objective(xv, yv, w.view(), groups, cfg.lambda, loss);
                        }
                        converged = true;
                        break;
                    }
                }
            }
            if stalled {
                converged = true;
                break;
            }
        }
    }
    Ok(FitResult::new(w, trace, converged, iters))
}

/// Relative size below which a re-weighted coordinate is a candidate zero.
const SNAP_REL: f64 = 1e-3;
/// Snapping is also attempted periodically, since coordinates near a
/// degenerate zero can decay more slowly than `outer_tol` per iteration.
const SNAP_EVERY: usize = 25;

/// `∂f/∂w_j = −X_jᵀc` with `c` returned here.
fn loss_coef(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    w: &Array1<f64>,
    loss: Loss,
) -> Array1<f64> {
    let z = x.dot(w);
    match loss {
        Loss::Square => (&y - &z).mapv(|r| 2.0 * r),
        Loss::Logistic => z
            .iter()
            .zip(y.iter())
            .map(|(zi, yi)| yi * sigmoid(-yi * zi))
            .collect(),
    }
}

/// The multiplicative updates only approach zero geometrically, and very
/// slowly near degenerate coordinates. Once the iteration stalls, tiny
/// coordinates (relative to `||w||_∞`) are set to zero and frozen when the
/// zero-coordinate condition `|∂f/∂w_j| ≤ 2λ ||w_g||_1` holds at the snapped
/// point; frozen coordinates that violate it are released. Returns whether
/// the frozen set changed.
fn snap_or_release(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    w: &mut Array1<f64>,
    frozen: &mut [bool],
    groups: &GroupAllocation,
    cfg: &EglConfig,
    loss: Loss,
) -> bool {
    let cut = SNAP_REL * norm_inf(w.view());
    let candidates: Vec<usize> = (0..w.len())
        .filter(|&j| !frozen[j] && w[j] != 0.0 && w[j].abs() <= cut)
        .collect();
    let saved: Vec<f64> = candidates.iter().map(|&j| w[j]).collect();
    for &j in &candidates {
        w[j] = 0.0;
    }
    let coef = loss_coef(x, y, w, loss);
    let norms = crate::penalty::group_l1_norms(w.view(), groups);
    let violates = |j: usize| {
        let g = x.column(j).dot(&coef);
        let allowed = !cfg.sign_constraint.violates(g);
        allowed && g.abs() > 2.0 * cfg.lambda * norms[groups.group_of(j)] * (1.0 + 1e-9) + 1e-12
    };
    let mut changed = false;
    for (&j, &old) in candidates.iter().zip(&saved) {
        if violates(j) {
            w[j] = old;
        } else {
            frozen[j] = true;
            changed = true;
        }
    }
    for j in 0..w.len() {
        if frozen[j] && !candidates.contains(&j) && violates(j) {
            frozen[j] = false;
            w[j] = x.column(j).dot(&coef).signum() * cut.max(cfg.eps_clamp);
            changed = true;
        }
    }
    changed
}

/// Exact square-loss solution for the support and signs of `w`: on the
/// support the optimality conditions `X_jᵀ(y − Xw) = λ s_j ||w_g||_1` are the
/// linear system `(X_SᵀX_S + λ Σ_g s_g s_gᵀ) w_S = X_Sᵀy`. Coordinates whose
/// sign flips are dropped and the system is solved again. Returns `None`
/// when a system is singular or the support empties.
fn polish(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    w: &Array1<f64>,
    groups: &GroupAllocation,
    lambda: f64,
) -> Option<Array1<f64>> {
    let mut support: Vec<usize> = (0..w.len()).filter(|&j| w[j] != 0.0).collect();
    if support.len() > x.nrows() + groups.n_groups() {
        return None;
    }
    while !support.is_empty() {
        let xs = x.select(Axis(1), &support);
        let mut a = xs.t().dot(&xs);
        for (p, &i) in support.iter().enumerate() {
            for (q, &j) in support.iter().enumerate() {
                if groups.group_of(i) == groups.group_of(j) {
                    a[[p, q]] += lambda * w[i].signum() * w[j].signum();
                }
            }
        }
        let b = xs.t().dot(&y);
        let sol = Cholesky::new(a.view(), "support polish")
            .ok()?
            .solve(b.view());
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let keep: Vec<usize> = support
            .iter()
            .zip(sol.iter())
            .filter(|(&j, v)| v.signum() == w[j].signum())
            .map(|(&j, _)| j)
            .collect();
        if keep.len() == support.len() {
            let mut out = Array1::zeros(w.len());
            for (p, &j) in support.iter().enumerate() {
                out[j] = sol[p];
            }
            return Some(out);
        }
        support = keep;
    }
    None
}

/// Replaces forbidden-sign coordinates by `eps` carrying the allowed sign.
fn project_sign(w: &mut Array1<f64>, c: &SignConstraint, eps: f64) {
    if !c.enabled {
        return;
    }
    let allowed = -f64::from(c.forbidden_sign);
    w.mapv_inplace(|v| if c.violates(v) { allowed * eps } else { v });
}

/// `(S XᵀX S + λI) w̃ = S Xᵀy` with `S = diag(scale)`.
fn ridge_primal(
    xtx: ArrayView2<'_, f64>,
    xty: ArrayView1<'_, f64>,
    scale: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<Array1<f64>> {
    let n = scale.len();
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            a[[i, j]] = scale[i] * xtx[[i, j]] * scale[j];
        }
        a[[i, i]] += lambda;
    }
    let b = &xty * &scale;
    Ok(Cholesky::new(a.view(), "re-weighted ridge system (primal)")?.solve(b.view()))
}

/// `w̃ = X̃ᵀ (X̃ X̃ᵀ + λI)^{-1} y`, the m×m form used when n > m.
fn ridge_dual(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    scale: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<Array1<f64>> {
    let xt = &x * &scale.insert_axis(Axis(0));
    let mut k = xt.dot(&xt.t());
    k.diag_mut().mapv_inplace(|v| v + lambda);
    let alpha = Cholesky::new(k.view(), "re-weighted ridge system (dual)")?.solve(y);
    Ok(xt.t().dot(&alpha))
}

fn log1pexp(z: f64) -> f64 {
    if z > 35.0 {
        z
    } else if z < -35.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Σ log(1 + exp(−y_i z_i)) + λ ||v||², minimized by damped Newton steps.
fn logistic_ridge(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    scale: ArrayView1<'_, f64>,
    lambda: f64,
    start: Array1<f64>,
) -> Result<Array1<f64>> {
    let xt = &x * &scale.insert_axis(Axis(0));
    let (m, n) = xt.dim();
    let value = |v: &Array1<f64>| {
        let z = xt.dot(v);
        z.iter()
            .zip(y.iter())
            .map(|(zi, yi)| log1pexp(-yi * zi))
            .sum::<f64>()
            + lambda * v.dot(v)
    };
    let mut v = start;
    let mut current = value(&v);
    for _ in 0..NEWTON_MAX_ITER {
        let z = xt.dot(&v);
        // gradient = −X̃ᵀ(y ∘ σ(−y z)) + 2λv
        let coef: Array1<f64> = z
            .iter()
            .zip(y.iter())
            .map(|(zi, yi)| -yi * sigmoid(-yi * zi))
            .collect();
        let grad = xt.t().dot(&coef) + &(&v * (2.0 * lambda));
        let d: Array1<f64> = z.mapv(|zi| {
            let p = sigmoid(zi);
            (p * (1.0 - p)).max(1e-12)
        });
        // H = X̃ᵀ D X̃ + 2λI
        let step = if n <= m {
            let xd = &xt * &d.view().insert_axis(Axis(1));
            let mut h = xt.t().dot(&xd);
            h.diag_mut().mapv_inplace(|v| v + 2.0 * lambda);
            Cholesky::new(h.view(), "logistic Newton system")?.solve(grad.view())
        } else {
            // (2λI + BᵀB)^{-1} g = (g − Bᵀ(2λI + BBᵀ)^{-1} B g) / 2λ,  B = D^{1/2} X̃
            let b = &xt * &d.mapv(f64::sqrt).insert_axis(Axis(1));
            let mut k = b.dot(&b.t());
            k.diag_mut().mapv_inplace(|v| v + 2.0 * lambda);
            let bg = b.dot(&grad);
            let inner = Cholesky::new(k.view(), "logistic Newton system (dual)")?.solve(bg.view());
            (&grad - &b.t().dot(&inner)) / (2.0 * lambda)
        };
        let mut t = 1.0;
        let slope = grad.dot(&step);
        let mut accepted = false;
        for _ in 0..50 {
            let cand = &v - &(&step * t);
            let val = value(&cand);
            if val <= current - 1e-4 * t * slope {
                v = cand;
                current = val;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || norm_inf((&step * t).view()) < NEWTON_TOL {
            break;
        }
    }
    Ok(v)
}

fn objective(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    w: ArrayView1<'_, f64>,
    groups: &GroupAllocation,
    lambda: f64,
    loss: Loss,
) -> f64 {
    let z = x.dot(&w);
    let data = match loss {
        Loss::Square => (&y - &z).mapv(|r| r * r).sum(),
        Loss::Logistic => z
            .iter()
            .zip(y.iter())
            .map(|(zi, yi)| log1pexp(-yi * zi))
            .sum(),
    };
    data + lambda * exclusive_norm(w, groups).unwrap_or(f64::NAN)
}
