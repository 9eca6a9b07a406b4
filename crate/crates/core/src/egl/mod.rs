//! Exclusive group Lasso solvers.
//!
//! All four strategies minimize `f(Xw, y) + λ Σ_g ||w_g||_1²`:
//!
//! * [`egl_reweight_fit`]: alternates the diagonal re-weighting `F` with an
//!   ℓ2-regularized fit on the rescaled design `X F^{-1/2}` (square or
//!   logistic loss).
//! * [`egl_bisection_subfit`]: solves one block exactly by bisecting on the
//!   effective Lasso penalty `λ' = 2λ ||w_g||_1`.
//! * [`egl_iterative_fit`]: block coordinate descent over groups, one
//!   bisection sub-fit per block.
//! * [`egl_activeset_fit`]: one block-descent cycle, then re-weighting on
//!   the nonzero features only, repeated until the support is stable and
//!   the KKT conditions hold.

mod active_set;
mod bisection;
mod iterative;
pub(crate) mod reweight;

use serde::{Deserialize, Serialize};

pub use active_set::egl_activeset_fit;
pub use bisection::egl_bisection_subfit;
pub use iterative::egl_iterative_fit;
pub use reweight::egl_reweight_fit;

use crate::data::{
    DesignMatrix, FitResult, GroupAllocation, ResponseVector, SignConstraint, WeightVector,
};
use crate::error::{Error, Result};
use crate::lasso::{lasso_fit, LassoConfig};
use crate::penalty::DEFAULT_EPS;

/// Data-fit term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Square,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EglConfig {
    pub lambda: f64,
    pub max_outer_iter: usize,
    /// Stop when the largest weight change over an outer iteration falls below this.
    pub outer_tol: f64,
    /// Relative fixed-point residual accepted by the bisection sub-solver.
    pub bisection_tol: f64,
    /// Lower end of the bisection bracket on `λ'`.
    pub lambda_lower: f64,
    /// Upper end of the bracket; `None` uses each block's null penalty
    /// `2 max_j |X_jᵀ y_g|`, which always contains the fixed point.
    pub lambda_upper: Option<f64>,
    pub sign_constraint: SignConstraint,
    pub eps_clamp: f64,
    pub kkt_tol: f64,
    /// Coordinate-change tolerance of the inner Lasso solves.
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
    /// Starting point for the block-descent solvers (iterative and active
    /// set); zero when absent. Not serialized.
    #[serde(skip)]
    pub warm_start: Option<WeightVector>,
}

impl Default for EglConfig {
    fn default() -> Self {
        EglConfig {
            lambda: 1.0,
            max_outer_iter: 1000,
            outer_tol: 1e-8,
            bisection_tol: 1e-10,
            lambda_lower: 0.0,
            lambda_upper: None,
            sign_constraint: SignConstraint::none(),
            eps_clamp: DEFAULT_EPS,
            kkt_tol: 1e-5,
            lasso_tol: 1e-12,
            lasso_max_iter: 100_000,
            warm_start: None,
        }
    }
}

impl EglConfig {
    pub fn new(lambda: f64) -> Self {
        EglConfig {
            lambda,
            ..Default::default()
        }
    }

    pub(crate) fn start(&self, n: usize) -> Result<ndarray::Array1<f64>> {
        match &self.warm_start {
            Some(w) if w.len() != n => Err(Error::Dimension(format!(
                "warm start has length {}, expected {n}",
                w.len()
            ))),
            Some(w) => Ok(w.0.clone()),
            None => Ok(ndarray::Array1::zeros(n)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("outer_tol", self.outer_tol),
            ("bisection_tol", self.bisection_tol),
            ("eps_clamp", self.eps_clamp),
            ("kkt_tol", self.kkt_tol),
            ("lasso_tol", self.lasso_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lambda must be finite and > 0, got {}",
                self.lambda
            )));
        }
        if !(self.lambda_lower >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda_lower must be >= 0, got {}",
                self.lambda_lower
            )));
        }
        if let Some(hi) = self.lambda_upper {
            if !(hi > self.lambda_lower) {
                return Err(Error::InvalidInput(format!(
                    "bracket [{}, {hi}] is empty",
                    self.lambda_lower
                )));
            }
        }
        if self.sign_constraint.enabled && self.sign_constraint.forbidden_sign.abs() != 1 {
            return Err(Error::InvalidInput(
                "forbidden sign must be -1 or +1".into(),
            ));
        }
        Ok(())
    }
}

/// Solver selector used by the experiment drivers and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Plain Lasso; `EglConfig::lambda` is used as the ℓ1 penalty.
    Lasso,
    EglReweight,
    EglIterative,
    EglActiveset,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Lasso => "lasso",
            SolverKind::EglReweight => "egl-reweight",
            SolverKind::EglIterative => "egl-iterative",
            SolverKind::EglActiveset => "egl-activeset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lasso" => Some(SolverKind::Lasso),
            "egl-reweight" => Some(SolverKind::EglReweight),
            "egl-iterative" => Some(SolverKind::EglIterative),
            "egl-activeset" => Some(SolverKind::EglActiveset),
            _ => None,
        }
    }

    pub fn is_egl(&self) -> bool {
        !matches!(self, SolverKind::Lasso)
    }
}

/// Runs the chosen solver. Logistic loss and the sign constraint are only
/// accepted by the re-weighting solver.
pub fn fit(
    kind: SolverKind,
    x: &DesignMatrix,
    y: &ResponseVector,
    groups: &GroupAllocation,
    cfg: &EglConfig,
    loss: Loss,
) -> Result<FitResult> {
    if loss == Loss::Logistic && kind != SolverKind::EglReweight {
        return Err(Error::InvalidInput(format!(
            "logistic loss is only supported by egl-reweight, not {}",
            kind.name()
        )));
    }
    if cfg.sign_constraint.enabled && kind != SolverKind::EglReweight {
        return Err(Error::InvalidInput(format!(
            "the sign constraint is only supported by egl-reweight, not {}",
            kind.name()
        )));
    }
    match kind {
        SolverKind::Lasso => lasso_fit(
            x,
            y,
            &LassoConfig::new(cfg.lambda)
                .with_tol(cfg.lasso_tol.max(1e-10))
                .with_max_iter(cfg.lasso_max_iter),
        ),
        SolverKind::EglReweight => egl_reweight_fit(x, y, groups, cfg, loss),
        SolverKind::EglIterative => egl_iterative_fit(x, y, groups, cfg),
        SolverKind::EglActiveset => egl_activeset_fit(x, y, groups, cfg),
    }
}
