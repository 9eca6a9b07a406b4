//! The exclusive (ℓ1,2) norm and the diagonal re-weighting matrix derived
//! from it.

use ndarray::{Array1, ArrayView1};

use crate::data::{DesignMatrix, GroupAllocation, ResponseVector};
use crate::error::{Error, Result};

/// Default clamp on `|w_i|` when forming the re-weighting diagonal.
pub const DEFAULT_EPS: f64 = 1e-10;

/// Per-group ℓ1 norms `||w_g||_1`.
pub fn group_l1_norms(w: ArrayView1<'_, f64>, groups: &GroupAllocation) -> Vec<f64> {
    groups
        .groups()
        .iter()
        .map(|g| g.iter().map(|&i| w[i].abs()).sum())
        .collect()
}

/// `Σ_g (Σ_{i∈g} |w_i|)²`
pub fn exclusive_norm(w: ArrayView1<'_, f64>, groups: &GroupAllocation) -> Result<f64> {
    groups.check_features(w.len())?;
    Ok(group_l1_norms(w, groups).iter().map(|s| s * s).sum())
}

/// Diagonal of `F` with `F_ii = ||w_{g(i)}||_1 / max(|w_i|, eps)`.
pub fn reweight_diagonal(
    w: ArrayView1<'_, f64>,
    groups: &GroupAllocation,
    eps: f64,
) -> Result<Array1<f64>> {
    groups.check_features(w.len())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let norms = group_l1_norms(w, groups);
    Ok(Array1::from_iter(
        (0..w.len()).map(|i| norms[groups.group_of(i)] / w[i].abs().max(eps)),
    ))
}

/// Square-loss exclusive group Lasso objective `||y − Xw||² + λ Σ_g ||w_g||_1²`.
pub fn egl_objective(
    x: &DesignMatrix,
    y: &ResponseVector,
    w: ArrayView1<'_, f64>,
    groups: &GroupAllocation,
    lambda: f64,
) -> Result<f64> {
    crate::data::check_pair(x, y)?;
    if x.n_features() != w.len() {
        return Err(Error::Dimension(format!(
            "weights have length {}, design has {} features",
            w.len(),
            x.n_features()
        )));
    }
    let r = &y.values() - &x.predict(w);
    Ok(r.dot(&r) + lambda * exclusive_norm(w, groups)?)
}
