use ndarray::Array1;

use super::iterative::BlockDescent;
use super::reweight::reweight_from;
use super::{EglConfig, Loss};
use crate::data::{
    active_set, check_pair, DesignMatrix, FitResult, GroupAllocation, ResponseVector,
};
use crate::error::Result;
use crate::kkt::kkt_violation;

/// Exclusive group Lasso with an active set.
///
/// Each outer pass runs one block-descent cycle over all groups, then runs
/// the re-weighting solver to convergence on the features left nonzero
/// (groups restricted to those features, empty groups dropped), warm-started
/// from the current weights. Stops once a cycle leaves the support unchanged
/// and the full-problem KKT violation is within `kkt_tol`.
pub fn egl_activeset_fit(
    x: &DesignMatrix,
    y: &ResponseVector,
    groups: &GroupAllocation,
    cfg: &EglConfig,
) -> Result<FitResult> {
    y.require_regression("egl_activeset_fit")?;
    check_pair(x, y)?;
    groups.check_features(x.n_features())?;
    cfg.validate()?;
    let mut state = BlockDescent::new(x, y, groups, cfg.start(x.n_features())?);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut passes = 0;
    let mut support = active_set(state.w.view());
    while passes < cfg.max_outer_iter {
        passes += 1;
        state.cycle(cfg)?;
        let after = active_set(state.w.view());
        trace.push(state.objective(cfg.lambda));

        if after == support
            && kkt_violation(x, y, state.w.view(), groups, cfg.lambda)? <= cfg.kkt_tol
        {
            converged = true;
            break;
        }
        support = after;
        if support.is_empty() {
            continue;
        }
        let xa = x.select_columns(&support);
        let ga = groups.restrict(&support);
        let init: Array1<f64> = support.iter().map(|&j| state.w[j]).collect();

        let sub = reweight_from(&xa, y, &ga, cfg, Loss::Square, init)?;

        let mut w = Array1::zeros(x.n_features());
        for (k, &j) in support.iter().enumerate() {
            w[j] = sub.weights.0[k];
        }
        state.set_weights(w);
        trace.push(state.objective(cfg.lambda));
    }
    Ok(FitResult::new(state.w, trace, converged, passes))
}
