use ndarray::Array1;

use super::bisection::bisect_block;
use super::EglConfig;
use crate::data::{check_pair, DesignMatrix, FitResult, GroupAllocation, ResponseVector};
use crate::error::Result;
use crate::kkt::kkt_violation;
use crate::lasso::GramLasso;
use crate::penalty::exclusive_norm;

/// Block coordinate descent state: per-group Gram matrices, the current
/// weights and the full residual `r = y − Xw`.
pub(crate) struct BlockDescent<'a> {
    x: &'a DesignMatrix,
    groups: &'a GroupAllocation,
    blocks: Vec<GramLasso>,
    y: Array1<f64>,
    pub(crate) w: Array1<f64>,
    r: Array1<f64>,
}

impl<'a> BlockDescent<'a> {
    pub fn new(
        x: &'a DesignMatrix,
        y: &ResponseVector,
        groups: &'a GroupAllocation,
        w: Array1<f64>,
    ) -> Self {
        let blocks = groups
            .groups()
            .iter()
            .map(|g| {
                let xg = x.select_columns(g);
                let gram = xg.values().t().dot(&xg.values());
                GramLasso::new(gram, Array1::zeros(g.len()), 0.0)
            })
            .collect();
        let r = &y.values() - &x.predict(w.view());
        BlockDescent {
            x,
            groups,
            blocks,
            y: y.values().to_owned(),
            w,
            r,
        }
    }

    /// Replaces the weights, keeping the cached block Gram matrices.
    pub fn set_weights(&mut self, w: Array1<f64>) {
        self.r = &self.y - &self.x.predict(w.view());
        self.w = w;
    }

    /// One pass over every group; returns the largest weight change.
    pub fn cycle(&mut self, cfg: &EglConfig) -> Result<f64> {
        let xv = self.x.values();
        let mut max_delta = 0.0_f64;
        for (gi, members) in self.groups.groups().iter().enumerate() {
            // y_g = y − X_{−g} w_{−g} = r + X_g w_g
            let mut y_g = self.r.clone();
            for &j in members {
                if self.w[j] != 0.0 {
                    y_g.scaled_add(self.w[j], &xv.column(j));
                }
            }
            let xty: Array1<f64> = members.iter().map(|&j| xv.column(j).dot(&y_g)).collect();
            let block = &mut self.blocks[gi];
            block.set_response(xty, y_g.dot(&y_g));
            let mut w_g: Array1<f64> = members.iter().map(|&j| self.w[j]).collect();
            bisect_block(
                block,
                cfg.lambda,
                cfg.lambda_lower,
                cfg.lambda_upper,
                &mut w_g,
                cfg,
            )?;
            self.r = y_g;
            for (k, &j) in members.iter().enumerate() {
                max_delta = max_delta.max((w_g[k] - self.w[j]).abs());
                self.w[j] = w_g[k];
                if w_g[k] != 0.0 {
                    self.r.scaled_add(-w_g[k], &xv.column(j));
                }
            }
        }
        Ok(max_delta)
    }

    pub fn objective(&self, lambda: f64) -> f64 {
        self.r.dot(&self.r)
            + lambda * exclusive_norm(self.w.view(), self.groups).unwrap_or(f64::NAN)
    }
}

/// Iterative exclusive group Lasso (square loss): starting from `w = 0`,
/// cycle over the groups solving each block against the partial residual
/// `y − X_{−g} w_{−g}` until a full cycle moves no weight by more than
/// `outer_tol` and the KKT violation is within `kkt_tol`.
pub fn egl_iterative_fit(
    x: &DesignMatrix,
    y: &ResponseVector,
    groups: &GroupAllocation,
    cfg: &EglConfig,
) -> Result<FitResult> {
    y.require_regression("egl_iterative_fit")?;
    check_pair(x, y)?;
    groups.check_features(x.n_features())?;
    cfg.validate()?;
    let mut state = BlockDescent::new(x, y, groups, cfg.start(x.n_features())?);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut cycles = 0;
    while cycles < cfg.max_outer_iter {
        cycles += 1;
        let delta = state.cycle(cfg)?;
        trace.push(state.objective(cfg.lambda));
        if delta < cfg.outer_tol
            && kkt_violation(x, y, state.w.view(), groups, cfg.lambda)? <= cfg.kkt_tol
        {
            converged = true;
            break;
        }
    }
    Ok(FitResult::new(state.w, trace, converged, cycles))
}
