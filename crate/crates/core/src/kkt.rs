//! First-order optimality check for the square-loss exclusive group Lasso.

use ndarray::ArrayView1;

use crate::data::{check_pair, DesignMatrix, GroupAllocation, ResponseVector, ZERO_TOL};
use crate::error::{Error, Result};
use crate::penalty::group_l1_norms;

/// Largest violation of the subgradient conditions of
/// `||y − Xw||² + λ Σ_g ||w_g||_1²` at `w`.
///
/// For `|w_j| > ZERO_TOL` the gradient `−2 X_jᵀr + 2λ sign(w_j) ||w_g||_1`
/// must vanish; for zero coordinates `|X_jᵀr| ≤ λ ||w_g||_1` must hold.
/// With a whole group at zero the second condition demands `X_jᵀr = 0`.
pub fn kkt_violation(
    x: &DesignMatrix,
    y: &ResponseVector,
    w: ArrayView1<'_, f64>,
    groups: &GroupAllocation,
    lambda: f64,
) -> Result<f64> {
    y.require_regression("kkt_violation")?;
    check_pair(x, y)?;
    groups.check_features(x.n_features())?;
    if w.len() != x.n_features() {
        return Err(Error::Dimension(format!(
            "weights have length {}, design has {} features",
            w.len(),
            x.n_features()
        )));
    }
    let r = &y.values() - &x.predict(w);
    let corr = x.transpose_dot(r.view());
    let norms = group_l1_norms(w, groups);
    Ok((0..w.len())
        .map(|j| {
            let gnorm = norms[groups.group_of(j)];
            if w[j].abs() > ZERO_TOL {
                (-2.0 * corr[j] + 2.0 * lambda * w[j].signum() * gnorm).abs()
            } else {
                (corr[j].abs() - lambda * gnorm).max(0.0)
            }
        })
        .fold(0.0, f64::max))
}
