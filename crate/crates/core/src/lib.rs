//! # exgl
//!
//! Feature selection with the exclusive group Lasso
//!
//! ```text
//! min_w  f(Xw, y) + λ Σ_g ||w_g||_1²
//! ```
//!
//! The squared ℓ1 norm inside each group makes features of the same group
//! compete while groups do not, so correlated informative features placed
//! in different groups can all be selected. The crate provides
//!
//! * four solvers ([`egl`]): re-weighting, block-wise bisection, iterative
//!   block coordinate descent and an active-set combination,
//! * a coordinate-descent Lasso baseline ([`lasso`]),
//! * stability selection over random group allocations with exact 1-D
//!   2-means thresholding and artificial-feature augmentation ([`selection`]),
//! * synthetic correlated-design generators ([`synth`]) and evaluation
//!   metrics ([`metrics`]),
//! * CSV/JSON persistence ([`io`]) and the experiment drivers behind the
//!   `exgl reproduce` command ([`experiments`]).

pub mod data;
pub mod egl;
pub mod error;
pub mod experiments;
pub mod io;
pub mod kkt;
pub mod lasso;
pub mod linalg;
pub mod metrics;
pub mod penalty;
pub mod rng;
pub mod selection;
pub mod synth;

pub use data::{
    DesignMatrix, FitResult, GroupAllocation, ResponseVector, SignConstraint, Task, WeightVector,
    ZERO_TOL,
};
pub use egl::{
    egl_activeset_fit, egl_bisection_subfit, egl_iterative_fit, egl_reweight_fit, EglConfig, Loss,
    SolverKind,
};
pub use error::{Error, Result};
pub use kkt::kkt_violation;
pub use lasso::{lasso_fit, lasso_null_lambda, LassoConfig};
pub use metrics::{f_measure, fdr, SelectionOutcome};
pub use penalty::{egl_objective, exclusive_norm, reweight_diagonal};
pub use selection::{
    augment_artificial, kmeans_threshold, random_allocation, stability_select, strip_artificial,
    AllocationPolicy, ArtificialSpec, StabilityConfig, StabilityReport, ThresholdMode,
};
pub use synth::{generate, SynthDataset, SynthSpec};
