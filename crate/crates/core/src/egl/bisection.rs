use ndarray::Array1;

use super::EglConfig;
use crate::data::{check_pair, DesignMatrix, ResponseVector, WeightVector};
use crate::error::{Error, Result};
use crate::lasso::GramLasso;

/// Relative bracket width at which bisection stops regardless of the residual.
const MIN_BRACKET: f64 = 1e-12;
const MAX_STEPS: usize = 200;

/// Minimizes `||y_g − X_g w||² + λ ||w||_1²` for one block.
///
/// The block problem is a Lasso with penalty `λ'` at the fixed point
/// `λ' = 2λ ||w(λ')||_1`, where the subgradients of `λ||w||_1²` and
/// `λ'||w||_1` coincide. Because `||w(λ')||_1` is non-increasing along the
/// Lasso path, `λ' − 2λ ||w(λ')||_1` is increasing and the fixed point is
/// found by bisection on `[lo, hi]`. Returns the block weights and `λ'`.
pub fn egl_bisection_subfit(
    x_g: &DesignMatrix,
    y_g: &ResponseVector,
    lambda: f64,
    lo: f64,
    hi: f64,
    cfg: &EglConfig,
) -> Result<(WeightVector, f64)> {
    y_g.require_regression("egl_bisection_subfit")?;
    check_pair(x_g, y_g)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    if !(lo >= 0.0 && lo < hi) {
        return Err(Error::InvalidInput(format!("invalid bracket [{lo}, {hi}]")));
    }
    let block = GramLasso::from_data(x_g.values(), y_g.values());
    let mut w = Array1::zeros(x_g.n_features());
    let lambda_prime = bisect_block(&block, lambda, lo, Some(hi), &mut w, cfg)?;
    Ok((WeightVector(w), lambda_prime))
}

/// Bisection on a block in covariance form. `w` holds the warm start on
/// entry and the block solution on exit.
pub(crate) fn bisect_block(
    block: &GramLasso,
    lambda: f64,
    lo: f64,
    hi: Option<f64>,
    w: &mut Array1<f64>,
    cfg: &EglConfig,
) -> Result<f64> {
    let null = block.null_lambda();
    let mut lo = lo;
    let mut hi = hi.unwrap_or(null);
    let tol = cfg.bisection_tol;
    let residual =
        |lp: f64, w: &Array1<f64>| lp - 2.0 * lambda * w.iter().map(|v| v.abs()).sum::<f64>();
    let solve = |lp: f64, w: &mut Array1<f64>| {
        block.solve(lp, w, cfg.lasso_tol, cfg.lasso_max_iter);
    };

    if null == 0.0 && lo == 0.0 {
        // X_gᵀy_g = 0: the null fit is the fixed point.
        w.fill(0.0);
        return Ok(0.0);
    }
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!("invalid bracket [{lo}, {hi}]")));
    }
    let (mut r_lo, mut r_hi) = (f64::NAN, f64::NAN);
    if lo > 0.0 {
        let mut probe = w.clone();
        solve(lo, &mut probe);
        r_lo = residual(lo, &probe);
        if r_lo > tol * lo.max(1.0) {
            return Err(Error::BracketFailure {
                lo,
                hi,
                residual_lo: r_lo,
                residual_hi: r_hi,
            });
        }
    }
    if hi < null {
        let mut probe = w.clone();
        solve(hi, &mut probe);
        r_hi = residual(hi, &probe);
        if r_hi < -tol * hi.max(1.0) {
            return Err(Error::BracketFailure {
                lo,
                hi,
                residual_lo: r_lo,
                residual_hi: r_hi,
            });
        }
    }

    let mut mid = 0.5 * (lo + hi);
    for _ in 0..MAX_STEPS {
        mid = 0.5 * (lo + hi);
        solve(mid, w);
        let r = residual(mid, w);
        if r.abs() <= tol * mid.max(1.0) {
            break;
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= MIN_BRACKET * hi.max(1.0) {
            break;
        }
    }
    Ok(mid)
}
