//! Lasso by cyclic coordinate descent.
//!
//! The objective is `||y − Xw||² + λ ||w||_1` (no ½ on the loss), so each
//! coordinate update soft-thresholds at `λ/2`:
//!
//! ```text
//! w_j ← S(X_jᵀ r_j, λ/2) / ||X_j||²,   r_j = y − X_{−j} w_{−j}
//! ```
//!
//! Two back ends share that update: a residual form working directly on the
//! columns of `X`, and a covariance form working on `XᵀX`, `Xᵀy` that the
//! bisection sub-solver reuses across many values of λ. [`lasso_path`]
//! follows the piecewise-linear solution path exactly instead.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{check_pair, DesignMatrix, FitResult, ResponseVector, WeightVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    pub max_iter: usize,
    /// Convergence threshold on the largest coordinate change in a sweep.
    pub tol: f64,
    #[serde(default)]
    pub warm_start: Option<WeightVector>,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        LassoConfig {
            lambda,
            max_iter: 100_000,
            tol: 1e-10,
            warm_start: None,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_warm_start(mut self, w: WeightVector) -> Self {
        self.warm_start = Some(w);
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lasso lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lasso tol must be > 0, got {}",
                self.tol
            )));
        }
        if let Some(w) = &self.warm_start {
            if w.len() != n {
                return Err(Error::Dimension(format!(
                    "warm start has length {}, expected {n}",
                    w.len()
                )));
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Smallest λ for which the Lasso solution is identically zero: `2 max_j |X_jᵀy|`.
pub fn lasso_null_lambda(x: &DesignMatrix, y: &ResponseVector) -> f64 {
    x.transpose_dot(y.values())
        .iter()
        .fold(0.0_f64, |acc, c| acc.max(c.abs()))
        * 2.0
}

/// Largest violation of the Lasso optimality conditions at `w`:
/// `|2 X_jᵀr − λ sign(w_j)|` on nonzero coordinates and
/// `max(0, 2|X_jᵀr| − λ)` on zero ones.
pub fn lasso_kkt_violation(
    x: &DesignMatrix,
    y: &ResponseVector,
    w: ArrayView1<'_, f64>,
    lambda: f64,
) -> Result<f64> {
    check_pair(x, y)?;
    if w.len() != x.n_features() {
        return Err(Error::Dimension(format!(
            "weights have length {}, design has {} features",
            w.len(),
            x.n_features()
        )));
    }
    let r = &y.values() - &x.predict(w);
    let g = x.transpose_dot(r.view()) * 2.0;
    Ok(w.iter()
        .zip(g.iter())
        .map(|(&wj, &gj)| {
            if wj.abs() > crate::data::ZERO_TOL {
                (gj - lambda * wj.signum()).abs()
            } else {
                (gj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max))
}

/// Minimizes `||y − Xw||² + λ ||w||_1`.
///
/// Sweeps alternate between the full coordinate set and the current
/// nonzero set; convergence is declared only after a full sweep whose
/// largest coordinate change is below `cfg.tol`. Hitting `max_iter` full
/// sweeps returns `converged = false`.
pub fn lasso_fit(x: &DesignMatrix, y: &ResponseVector, cfg: &LassoConfig) -> Result<FitResult> {
    y.require_regression("lasso_fit")?;
    check_pair(x, y)?;
    let n = x.n_features();
    cfg.validate(n)?;
    let xv = x.values();
    let mut w = cfg
        .warm_start
        .as_ref()
        .map(|w| w.0.clone())
        .unwrap_or_else(|| Array1::zeros(n));
    let mut r = &y.values() - &xv.dot(&w);
    let col_sq: Vec<f64> = (0..n).map(|j| xv.column(j).dot(&xv.column(j))).collect();
    let half = cfg.lambda / 2.0;

    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_iter {
        sweeps += 1;
        let delta = residual_sweep(xv, &col_sq, half, &mut w, &mut r, None);
        trace.push(r.dot(&r) + cfg.lambda * w.iter().map(|v| v.abs()).sum::<f64>());
        if delta < cfg.tol {
            converged = true;
            break;
        }
        // Inner passes over the current support until it settles.
        let active: Vec<usize> = (0..n).filter(|&j| w[j] != 0.0).collect();
        for _ in 0..cfg.max_iter {
            let d = residual_sweep(xv, &col_sq, half, &mut w, &mut r, Some(&active));
            if d < cfg.tol {
                break;
            }
        }
    }
    Ok(FitResult::new(w, trace, converged, sweeps))
}

fn residual_sweep(
    x: ArrayView2<'_, f64>,
    col_sq: &[f64],
    half_lambda: f64,
    w: &mut Array1<f64>,
    r: &mut Array1<f64>,
    subset: Option<&[usize]>,
) -> f64 {
    let all: Vec<usize>;
    let idx = match subset {
        Some(idx) => idx,
        None => {
            all = (0..w.len()).collect();
            &all
        }
    };
    let mut max_delta = 0.0_f64;
    for &j in idx {
        let old = w[j];
        if col_sq[j] == 0.0 {
            w[j] = 0.0;
            max_delta = max_delta.max(old.abs());
            continue;
        }
        let col = x.column(j);
        let rho = col.dot(&*r) + col_sq[j] * old;
        let new = soft_threshold(rho, half_lambda) / col_sq[j];
        let d = new - old;
        if d != 0.0 {
            r.scaled_add(-d, &col);
            w[j] = new;
            max_delta = max_delta.max(d.abs());
        }
    }
    max_delta
}

/// Lasso in covariance form: the data enter only through `G = XᵀX`,
/// `c = Xᵀy` and `yᵀy`.
#[derive(Debug, Clone)]
pub(crate) struct GramLasso {
    gram: Array2<f64>,
    xty: Array1<f64>,
    yty: f64,
}

impl GramLasso {
    pub fn new(gram: Array2<f64>, xty: Array1<f64>, yty: f64) -> Self {
        debug_assert_eq!(gram.nrows(), xty.len());
        GramLasso { gram, xty, yty }
    }

    pub fn from_data(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Self {
        Self::new(x.t().dot(&x), x.t().dot(&y), y.dot(&y))
    }

    pub fn n(&self) -> usize {
        self.xty.len()
    }

    pub fn set_response(&mut self, xty: Array1<f64>, yty: f64) {
        self.xty = xty;
        self.yty = yty;
    }

    pub fn null_lambda(&self) -> f64 {
        2.0 * self.xty.iter().fold(0.0_f64, |a, c| a.max(c.abs()))
    }

    /// Coordinate descent from the warm start in `w`. Returns
    /// `(full_sweeps, converged)`.
    pub fn solve(
        &self,
        lambda: f64,
        w: &mut Array1<f64>,
        tol: f64,
        max_iter: usize,
    ) -> (usize, bool) {
        let n = self.n();
        let half = lambda / 2.0;
        // q = Xᵀr = c − G w
        let mut q = &self.xty - &self.gram.dot(&*w);
        let all: Vec<usize> = (0..n).collect();
        let mut sweeps = 0;
        while sweeps < max_iter {
            sweeps += 1;
            if self.sweep(half, w, &mut q, &all) < tol {
                return (sweeps, true);
            }
            let active: Vec<usize> = (0..n).filter(|&j| w[j] != 0.0).collect();
            for _ in 0..max_iter {
                if self.sweep(half, w, &mut q, &active) < tol {
                    break;
                }
            }
        }
        (sweeps, false)
    }

    fn sweep(
        &self,
        half_lambda: f64,
        w: &mut Array1<f64>,
        q: &mut Array1<f64>,
        idx: &[usize],
    ) -> f64 {
        let mut max_delta = 0.0_f64;
        for &j in idx {
            let gjj = self.gram[[j, j]];
            if gjj <= 0.0 {
                continue;
            }
            let old = w[j];
            let new = soft_threshold(q[j] + gjj * old, half_lambda) / gjj;
            let d = new - old;
            if d != 0.0 {
                q.scaled_add(-d, &self.gram.column(j));
                w[j] = new;
                max_delta = max_delta.max(d.abs());
            }
        }
        max_delta
    }
}

/// Lasso solutions at a descending grid `lambdas`, read off the exact
/// solution path (homotopy with the Lasso drop rule).
///
/// Along a segment with active set `A` and signs `s`, the stationarity
/// conditions `2 X_Aᵀ(y − X_A w_A) = λ s` give
/// `w_A(λ − γ) = w_A(λ) + γ u` with `u = ½ (X_AᵀX_A)⁻¹ s`; a segment ends
/// when an inactive correlation reaches `λ − γ` in magnitude or an active
/// weight crosses zero. `stop` sees each solution in turn and ends the walk
/// early when it returns true. If `X_AᵀX_A` becomes singular (more active
/// features than samples) the remaining grid points are solved by
/// coordinate descent. Forms the full `n × n` Gram matrix up front.
pub fn lasso_path(
    x: &DesignMatrix,
    y: &ResponseVector,
    lambdas: &[f64],
    mut stop: impl FnMut(&WeightVector) -> bool,
) -> Result<Vec<WeightVector>> {
    y.require_regression("lasso_path")?;
    check_pair(x, y)?;
    if lambdas.windows(2).any(|p| p[1] > p[0]) || lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidInput(
            "lasso_path needs a descending grid of non-negative penalties".into(),
        ));
    }
    let xv = x.values();
    let n = x.n_features();
    let gram = xv.t().dot(&xv);
    let mut c = xv.t().dot(&y.values()) * 2.0;
    let mut out = Vec::with_capacity(lambdas.len());
    let mut next = 0;
    let mut w = Array1::<f64>::zeros(n);
    let mut lam = lasso_null_lambda(x, y);
    let mut active: Vec<usize> = Vec::new();
    let mut dropped: Option<usize> = None;
    let mut steps = 0usize;
    let mut factor = ActiveCholesky::default();
    let mut singular = false;
    loop {
        steps += 1;
        if active.is_empty() && lam > 0.0 {
            active.push(
                (0..n)
                    .max_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs()))
                    .expect("n >= 1"),
            );
        }
        if factor.len() < active.len() {
            let j = *active.last().expect("non-empty");
            let col: Vec<f64> = active[..active.len() - 1]
                .iter()
                .map(|&i| gram[[i, j]])
                .collect();
            singular = !factor.push(&col, gram[[j, j]]);
        }
        // Direction on the active set; `None` once the path cannot continue.
        let u = (lam > 0.0 && !singular).then(|| {
            let signs: Vec<f64> = active
                .iter()
                .map(|&j| {
                    if w[j] != 0.0 {
                        w[j].signum()
                    } else {
                        c[j].signum()
                    }
                })
                .collect();
            Array1::from(factor.solve(&signs)) * 0.5
        });
        let Some(u) = u else {
            let mut warm = WeightVector(w);
            for &l in &lambdas[next..] {
                let fit = lasso_fit(
                    x,
                    y,
                    &LassoConfig::new(l).with_tol(1e-10).with_warm_start(warm),
                )?;
                warm = fit.weights;
                out.push(warm.clone());
                if stop(&warm) {
                    break;
                }
            }
            return Ok(out);
        };
        let mut a = Array1::<f64>::zeros(n);
        for (p, &j) in active.iter().enumerate() {
            a.scaled_add(2.0 * u[p], &gram.column(j));
        }
        let floor = 1e-12 * lam;
        let mut gamma = lam;
        let mut entering = None;
        let mut leaving = None;
        for j in (0..n).filter(|j| !active.contains(j) && Some(*j) != dropped) {
            for (num, den) in [(lam - c[j], 1.0 - a[j]), (lam + c[j], 1.0 + a[j])] {
                if den > 1e-12 {
                    let g = num / den;
                    if g > floor && g < gamma {
                        gamma = g;
                        entering = Some(j);
                    }
                }
            }
        }
        for (p, &j) in active.iter().enumerate() {
            if u[p] != 0.0 && w[j] != 0.0 {
                let g = -w[j] / u[p];
                if g > floor && g < gamma {
                    gamma = g;
                    leaving = Some(p);
                    entering = None;
                }
            }
        }
        while next < lambdas.len() && lambdas[next] >= lam - gamma {
            let mut wk = w.clone();
            let t = (lam - lambdas[next]).max(0.0);
            for (p, &j) in active.iter().enumerate() {
                wk[j] += t * u[p];
            }
            let wk = WeightVector(wk);
            let done = stop(&wk);
            out.push(wk);
            next += 1;
            if done {
                return Ok(out);
            }
        }
        if next == lambdas.len() {
            return Ok(out);
        }
        for (p, &j) in active.iter().enumerate() {
            w[j] += gamma * u[p];
        }
        // Correlations move linearly too; refresh from scratch now and then
        // to keep rounding from accumulating.
        c.scaled_add(-gamma, &a);
        if steps.is_multiple_of(16) {
            c = (xv.t().dot(&(&y.values() - &xv.dot(&w)))) * 2.0;
        }
        lam -= gamma;
        dropped = None;
        if let Some(p) = leaving {
            let j = active.remove(p);
            factor.remove(p);
            w[j] = 0.0;
            dropped = Some(j);
        } else if let Some(j) = entering {
            active.push(j);
        } else {
            lam = 0.0;
        }
    }
}

/// Cholesky factor of the active Gram block, grown and shrunk one feature
/// at a time. Row `i` holds the `i + 1` entries of the lower factor.
#[derive(Default)]
struct ActiveCholesky {
    rows: Vec<Vec<f64>>,
}

impl ActiveCholesky {
    fn len(&self) -> usize {
        self.rows.len()
    }

    /// Appends a feature given its Gram entries against the current set.
    /// Returns false, leaving the factor unchanged, when the block would be
    /// numerically singular.
    fn push(&mut self, cross: &[f64], diag: f64) -> bool {
        let mut z = Vec::with_capacity(cross.len() + 1);
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&z).map(|(a, b)| a * b).sum();
            z.push((cross[i] - s) / row[i]);
        }
        let d2 = diag - z.iter().map(|v| v * v).sum::<f64>();
        if !(d2 > 1e-10 * diag) {
            return false;
        }
        z.push(d2.sqrt());
        self.rows.push(z);
        true
    }

    /// Drops feature `p`; Givens rotations restore the triangular shape.
    fn remove(&mut self, p: usize) {
        self.rows.remove(p);
        for i in p..self.rows.len() {
            let (a, b) = (self.rows[i][i], self.rows[i][i + 1]);
            let r = a.hypot(b);
            let (cs, sn) = (a / r, b / r);
            for row in &mut self.rows[i..] {
                let (u, v) = (row[i], row[i + 1]);
                row[i] = cs * u + sn * v;
                row[i + 1] = cs * v - sn * u;
            }
            self.rows[i].truncate(i + 1);
        }
    }

    /// Solves `L Lᵀ x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.rows.len();
        let mut z = vec![0.0; k];
        for i in 0..k {
            let s: f64 = self.rows[i][..i].iter().zip(&z).map(|(a, b)| a * b).sum();
            z[i] = (b[i] - s) / self.rows[i][i];
        }
        for i in (0..k).rev() {
            let s: f64 = ((i + 1)..k).map(|t| self.rows[t][i] * z[t]).sum();
            z[i] = (z[i] - s) / self.rows[i][i];
        }
        z
    }
}
