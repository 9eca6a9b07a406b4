//! Drivers for the benchmark tables and figures.
//!
//! Every replicate standardizes `X` and centres `y` before fitting.
//! Penalties are tuned by K-fold cross-validation on a per-sample scale
//! `u`: a fit on `m` rows uses `λ = u·m`, so one tuned value carries over
//! to the folds and to the half-size subsamples of stability selection.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, FitResult, GroupAllocation, ResponseVector, WeightVector};
use crate::egl::{self, EglConfig, Loss, SolverKind};
use crate::error::{Error, Result};
use crate::lasso::{lasso_fit, lasso_null_lambda, LassoConfig};
use crate::metrics::{f_measure, mean_and_se, probability_summary, SelectionOutcome};
use crate::rng;
use crate::selection::stability::draw_allocation;
use crate::selection::{
    append_artificial, oracle_allocation, random_allocation, stability_select, strip_artificial,
    AllocationPolicy, ArtificialMode, ArtificialSpec, StabilityConfig, WeightLaw,
};
use crate::synth::{self, fdr_experiment, generate, presets, Example, FdrPoint, SynthSpec};

/// Replicate multiplier used when none is given.
pub const DEFAULT_SCALE: f64 = 0.4;

/// `round(reference_count · scale)`, at least one.
pub fn replicates(reference_count: usize, scale: f64) -> usize {
    ((reference_count as f64 * scale).round() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Fig2,
    Fig3,
    Table3Trend,
    Table4,
    Table5,
    Table6,
    Table7,
}

impl Target {
    pub const ALL: [Target; 7] = [
        Target::Fig2,
        Target::Fig3,
        Target::Table3Trend,
        Target::Table4,
        Target::Table5,
        Target::Table6,
        Target::Table7,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Target::Fig2 => "fig2",
            Target::Fig3 => "fig3",
            Target::Table3Trend => "table3-trend",
            Target::Table4 => "table4",
            Target::Table5 => "table5",
            Target::Table6 => "table6",
            Target::Table7 => "table7",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.name() == s)
    }

    /// Number of datasets behind the reference numbers.
    pub fn reference_replicates(&self) -> usize {
        match self {
            Target::Fig2 => 200,
            Target::Fig3 | Target::Table7 => 100,
            Target::Table3Trend => 1,
            Target::Table4 | Target::Table5 | Target::Table6 => 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Plain Lasso, no groups.
    None,
    /// One group per informative feature.
    Fixed,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub grouping: Grouping,
    pub stability: bool,
    /// Variance of the artificial weights; `None` runs without artificial
    /// features. Only valid with random groups and stability selection.
    pub artificial_weight_var: Option<f64>,
}

impl Method {
    pub fn plain(grouping: Grouping) -> Self {
        Method {
            grouping,
            stability: false,
            artificial_weight_var: None,
        }
    }

    pub fn stable(grouping: Grouping) -> Self {
        Method {
            stability: true,
            ..Self::plain(grouping)
        }
    }

    pub fn artificial(weight_var: f64) -> Self {
        Method {
            artificial_weight_var: Some(weight_var),
            ..Self::stable(Grouping::Random)
        }
    }

    pub fn label(&self) -> String {
        let base = match self.grouping {
            Grouping::None => "Lasso",
            Grouping::Fixed => "EGL-F",
            Grouping::Random => "EGL-R",
        };
        match (self.stability, self.artificial_weight_var.is_some()) {
            (_, true) => format!("{base}(SA)"),
            (true, false) => format!("{base}(S)"),
            (false, false) => base.to_string(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.artificial_weight_var.is_some()
            && !(self.stability && self.grouping == Grouping::Random)
        {
            return Err(Error::InvalidInput(
                "artificial features need random groups and stability selection".into(),
            ));
        }
        Ok(())
    }
}

/// Settings shared by every driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub seed: u64,
    /// Solver for every EGL fit.
    pub solver: SolverKind,
    pub folds: usize,
    /// Lasso grid: `lasso_grid` points from the null penalty down
    /// `lasso_decades` decades.
    pub lasso_grid: usize,
    pub lasso_decades: f64,
    /// EGL grid of per-sample penalties, geometric between the bounds.
    pub egl_grid: usize,
    pub egl_u_min: f64,
    pub egl_u_max: f64,
    pub stability_iterations: usize,
    pub stability_penalty: StabilityPenalty,
}

/// How the penalty of an EGL stability-selection run is chosen. Lasso runs
/// always use their cross-validated penalty: the Lasso has no groups, and
/// its selection size is exactly what the penalty tunes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityPenalty {
    /// The cross-validated penalty of the plain method.
    CrossValidated,
    /// The largest grid penalty whose full-data fit selects at least as many
    /// features as the allocation has groups. Keeps the per-subsample
    /// selection size small, as stability selection requires; an EGL fit
    /// keeps every group nonzero, so this is normally the top of the grid.
    GroupCount,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seed: 2017,
            solver: SolverKind::EglActiveset,
            folds: 5,
            lasso_grid: 20,
            lasso_decades: 3.0,
            egl_grid: 13,
            egl_u_min: 1e-2,
            egl_u_max: 1e2,
            stability_iterations: 50,
            stability_penalty: StabilityPenalty::GroupCount,
        }
    }
}

/// Descending geometric grid.
pub fn geometric_grid(hi: f64, lo: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![hi];
    }
    let ratio = (lo / hi).powf(1.0 / (points - 1) as f64);
    (0..points).map(|k| hi * ratio.powi(k as i32)).collect()
}

fn penalty_grid(
    x: &DesignMatrix,
    y: &ResponseVector,
    grouped: bool,
    hc: &HarnessConfig,
) -> Vec<f64> {
    if grouped {
        geometric_grid(hc.egl_u_max, hc.egl_u_min, hc.egl_grid)
    } else {
        let u_max = lasso_null_lambda(x, y) / x.n_samples() as f64;
        geometric_grid(u_max, u_max * 10f64.powf(-hc.lasso_decades), hc.lasso_grid)
    }
}

/// Single fit at per-sample penalty `u`. `groups = None` runs the Lasso.
pub fn fit_scaled(
    x: &DesignMatrix,
    y: &ResponseVector,
    groups: Option<&GroupAllocation>,
    u: f64,
    solver: SolverKind,
    warm: Option<WeightVector>,
) -> Result<FitResult> {
    let lambda = u * x.n_samples() as f64;
    match groups {
        None => {
            let mut cfg = LassoConfig::new(lambda).with_tol(1e-8);
            cfg.warm_start = warm;
            lasso_fit(x, y, &cfg)
        }
        Some(g) => {
            let cfg = EglConfig {
                warm_start: warm,
                ..EglConfig::new(lambda)
            };
            egl::fit(solver, x, y, g, &cfg, Loss::Square)
        }
    }
}

/// Largest `u` on the descending grid whose fit selects at least `target`
/// features; the last grid point when none does.
pub fn sparsest_reaching(
    x: &DesignMatrix,
    y: &ResponseVector,
    groups: Option<&GroupAllocation>,
    grid: &[f64],
    target: usize,
    solver: SolverKind,
) -> Result<f64> {
    let mut warm = None;
    for &u in grid {
        let fit = fit_scaled(x, y, groups, u, solver, warm)?;
        if fit.active_set.len() >= target {
            return Ok(u);
        }
        warm = Some(fit.weights);
    }
    Ok(*grid.last().expect("non-empty grid"))
}

/// Grid points past the running minimum after which the CV descent stops.
const CV_PATIENCE: usize = 3;

/// K-fold cross-validation over a descending grid of per-sample penalties.
/// Returns the value with the smallest summed held-out squared error. The
/// descent stops early once the error has risen on [`CV_PATIENCE`]
/// consecutive points past the running minimum.
pub fn cross_validate(
    x: &DesignMatrix,
    y: &ResponseVector,
    groups: Option<&GroupAllocation>,
    grid: &[f64],
    folds: usize,
    solver: SolverKind,
    seed: u64,
) -> Result<f64> {
    let m = x.n_samples();
    if folds < 2 || folds > m {
        return Err(Error::InvalidInput(format!(
            "cannot run {folds}-fold CV on {m} samples"
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty penalty grid".into()));
    }
    let mut order: Vec<usize> = (0..m).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng::seeded(seed));
    let splits: Vec<_> = (0..folds)
        .map(|k| {
            let test: Vec<usize> = (0..m)
                .filter(|i| i % folds == k)
                .map(|i| order[i])
                .collect();
            let train: Vec<usize> = (0..m)
                .filter(|i| i % folds != k)
                .map(|i| order[i])
                .collect();
            (
                x.select_rows(&train),
                y.select(&train),
                x.select_rows(&test),
                y.select(&test),
            )
        })
        .collect();
    let mut warm: Vec<Option<WeightVector>> = vec![None; folds];
    let (mut best, mut best_err, mut worse) = (0, f64::INFINITY, 0);
    for (i, &u) in grid.iter().enumerate() {
        let fits: Vec<(f64, WeightVector)> = splits
            .par_iter()
            .zip(warm.par_iter())
            .map(|((xt, yt, xv, yv), w)| {
                let fit = fit_scaled(xt, yt, groups, u, solver, w.clone())?;
                let resid = &yv.values() - &xv.predict(fit.weights.view());
                Ok((resid.dot(&resid), fit.weights))
            })
            .collect::<Result<_>>()?;
        let err: f64 = fits.iter().map(|(e, _)| e).sum();
        warm = fits.into_iter().map(|(_, w)| Some(w)).collect();
        if err < best_err {
            (best, best_err, worse) = (i, err, 0);
        } else {
            worse += 1;
            if worse >= CV_PATIENCE {
                break;
            }
        }
    }
    Ok(grid[best])
}

/// Outcome of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub f_measure: f64,
    pub n_selected: usize,
    /// Tuned per-sample penalty.
    pub lambda_per_sample: f64,
    /// Mean selection probability over informative and irrelevant
    /// features, stability methods only.
    pub prob_informative: Option<f64>,
    pub prob_irrelevant: Option<f64>,
}

/// Runs `method` on raw data with known support. `n_groups` is the random
/// group count (and the artificial feature count).
pub fn run_method(
    method: &Method,
    x_raw: &DesignMatrix,
    y_raw: &ResponseVector,
    support: &[usize],
    n_groups: usize,
    hc: &HarnessConfig,
    seed: u64,
) -> Result<MethodOutcome> {
    method.validate()?;
    let n_real = x_raw.n_features();
    let (x_fit, y_fit, anchors) = match method.artificial_weight_var {
        Some(var) => {
            let spec = ArtificialSpec {
                mode: ArtificialMode::Regression {
                    feature_mean: 0.0,
                    feature_var: 1.0,
                    weight: WeightLaw::Normal { mean: 0.0, var },
                },
                n_artificial: n_groups,
                rng_seed: rng::derive_seed(seed, &[1]),
            };
            let aug = append_artificial(x_raw, y_raw, &spec)?;
            (aug.x, aug.y, aug.artificial_indices)
        }
        None => (x_raw.clone(), y_raw.clone(), Vec::new()),
    };
    let x = x_fit.standardize()?;
    let y = y_fit.centered();
    let n = x.n_features();
    let mut r = rng::seeded(rng::derive_seed(seed, &[2]));
    let policy = match method.grouping {
        Grouping::None => None,
        Grouping::Fixed => Some(AllocationPolicy::Fixed(oracle_allocation(
            n, support, &mut r,
        )?)),
        Grouping::Random if anchors.is_empty() => Some(AllocationPolicy::Random),
        Grouping::Random => Some(AllocationPolicy::RandomAnchored {
            anchors: anchors.clone(),
        }),
    };
    let groups = match &policy {
        None => None,
        Some(p) => Some(draw_allocation(n, p, n_groups, &mut r)?),
    };
    let grid = penalty_grid(&x, &y, groups.is_some(), hc);
    let u = match &groups {
        Some(g) if method.stability && hc.stability_penalty == StabilityPenalty::GroupCount => {
            sparsest_reaching(&x, &y, Some(g), &grid, g.n_groups(), hc.solver)?
        }
        _ => cross_validate(
            &x,
            &y,
            groups.as_ref(),
            &grid,
            hc.folds,
            hc.solver,
            rng::derive_seed(seed, &[3]),
        )?,
    };

    let truth: BTreeSet<usize> = support.iter().copied().collect();
    if !method.stability {
        let fit = fit_scaled(&x, &y, groups.as_ref(), u, hc.solver, None)?;
        let outcome =
            SelectionOutcome::new(fit.active_set.iter().copied(), support.iter().copied(), n)?;
        return Ok(MethodOutcome {
            f_measure: f_measure(&outcome)?,
            n_selected: outcome.selected.len(),
            lambda_per_sample: u,
            prob_informative: None,
            prob_irrelevant: None,
        });
    }

    let (solver, policy) = match policy {
        None => (
            SolverKind::Lasso,
            AllocationPolicy::Fixed(GroupAllocation::single(n)),
        ),
        Some(p) => (hc.solver, p),
    };
    let egl_cfg = EglConfig::new(u * (x.n_samples() / 2) as f64);
    let cfg = StabilityConfig::new(
        hc.stability_iterations,
        n_groups,
        rng::derive_seed(seed, &[4]),
    );
    let report = stability_select(&x, &y, &policy, solver, &egl_cfg, Loss::Square, &cfg)?;
    let report = strip_artificial(&report, &anchors);
    let outcome = SelectionOutcome::new(
        report.stable_set.iter().copied(),
        support.iter().copied(),
        n_real,
    )?;
    let (p_in, p_out) = probability_summary(&report.probabilities, &truth);
    Ok(MethodOutcome {
        f_measure: f_measure(&outcome)?,
        n_selected: outcome.selected.len(),
        lambda_per_sample: u,
        prob_informative: Some(p_in),
        prob_irrelevant: Some(p_out),
    })
}

/// One table cell: a method on one (example, w_S) setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub example: usize,
    pub w_s: f64,
    pub method: String,
    pub n_replicates: usize,
    pub f_mean: f64,
    pub f_se: f64,
    pub prob_informative_mean: Option<f64>,
    pub prob_informative_se: Option<f64>,
    pub prob_irrelevant_mean: Option<f64>,
    pub prob_irrelevant_se: Option<f64>,
    pub lambda_per_sample_median: f64,
}

/// Rows and columns of a benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePlan {
    pub settings: Vec<(Example, f64)>,
    pub methods: Vec<Method>,
    pub n_groups: usize,
    /// Tables sharing a key reuse the same datasets.
    pub data_key: u64,
}

const W_S_GRID: [f64; 3] = [0.1, 0.3, 0.5];

impl TablePlan {
    /// Full layout of a table target; `None` for the figure targets.
    pub fn for_target(target: Target) -> Option<Self> {
        let all = |ws: &[f64]| -> Vec<(Example, f64)> {
            Example::ALL
                .iter()
                .flat_map(|&e| ws.iter().map(move |&w| (e, w)))
                .collect()
        };
        let groupings = [Grouping::None, Grouping::Fixed, Grouping::Random];
        Some(match target {
            Target::Table4 => TablePlan {
                settings: all(&W_S_GRID),
                methods: groupings.iter().map(|&g| Method::plain(g)).collect(),
                n_groups: 50,
                data_key: 4,
            },
            Target::Table5 => TablePlan {
                settings: all(&W_S_GRID),
                methods: groupings.iter().map(|&g| Method::stable(g)).collect(),
                n_groups: 50,
                data_key: 4,
            },
            Target::Table6 => TablePlan {
                settings: all(&[0.5]),
                methods: groupings.iter().map(|&g| Method::stable(g)).collect(),
                n_groups: 50,
                data_key: 6,
            },
            Target::Table7 => TablePlan {
                settings: vec![(Example::BlockDiagonal, 0.2), (Example::ErdosRenyi, 0.2)],
                methods: groupings
                    .iter()
                    .map(|&g| Method::stable(g))
                    .chain([Method::artificial(0.05)])
                    .collect(),
                n_groups: 70,
                data_key: 7,
            },
            _ => return None,
        })
    }

    pub fn retain_examples(mut self, examples: &[usize]) -> Self {
        self.settings
            .retain(|(e, _)| examples.contains(&e.number()));
        self
    }

    pub fn retain_w_s(mut self, w_s: &[f64]) -> Self {
        self.settings
            .retain(|(_, w)| w_s.iter().any(|v| (v - w).abs() < 1e-12));
        self
    }

    pub fn retain_methods(mut self, labels: &[&str]) -> Self {
        self.methods
            .retain(|m| labels.contains(&m.label().as_str()));
        self
    }

    fn spec(&self, example: Example, w_s: f64, seed: u64) -> Result<SynthSpec> {
        match self.data_key {
            4 => Ok(presets::table4(example, w_s, seed)),
            6 => Ok(presets::table6(example, seed)),
            7 => presets::table7(example, seed).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "example {} has no table 7 preset",
                    example.number()
                ))
            }),
            k => Err(Error::InvalidInput(format!("unknown data key {k}"))),
        }
    }
}

/// Artificial weight variance used with each example.
fn artificial_weight_var(example: Example) -> f64 {
    match example {
        Example::ErdosRenyi => 0.1,
        _ => 0.05,
    }
}

/// Runs every (setting, method) cell of `plan` on `n_replicates` datasets.
/// Replicate `r` of setting `(e, w)` is generated from
/// `derive_seed(seed, [data_key, e, w_index, r])`; all methods see the same
/// datasets.
pub fn run_table(
    plan: &TablePlan,
    n_replicates: usize,
    hc: &HarnessConfig,
) -> Result<Vec<CellSummary>> {
    let mut out = Vec::new();
    for &(example, w_s) in &plan.settings {
        let w_index = W_S_GRID
            .iter()
            .position(|v| (v - w_s).abs() < 1e-12)
            .unwrap_or(W_S_GRID.len()) as u64;
        let methods: Vec<Method> = plan
            .methods
            .iter()
            .map(|m| match m.artificial_weight_var {
                Some(_) => Method::artificial(artificial_weight_var(example)),
                None => *m,
            })
            .collect();
        let per_rep: Vec<Vec<MethodOutcome>> = (0..n_replicates)
            .into_par_iter()
            .map(|r| {
                let seed = rng::derive_seed(
                    hc.seed,
                    &[plan.data_key, example.number() as u64, w_index, r as u64],
                );
                let data = generate(&plan.spec(example, w_s, seed)?)?;
                methods
                    .iter()
                    .enumerate()
                    .map(|(k, m)| {
                        run_method(
                            m,
                            &data.x,
                            &data.y,
                            &data.support,
                            plan.n_groups,
                            hc,
                            rng::derive_seed(seed, &[100 + k as u64]),
                        )
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (k, m) in methods.iter().enumerate() {
            let outcomes: Vec<&MethodOutcome> = per_rep.iter().map(|v| &v[k]).collect();
            out.push(summarize(example, w_s, m, &outcomes));
        }
        log::info!("finished example {} w_S = {w_s}", example.number());
    }
    Ok(out)
}

fn summarize(
    example: Example,
    w_s: f64,
    method: &Method,
    outcomes: &[&MethodOutcome],
) -> CellSummary {
    let f: Vec<f64> = outcomes.iter().map(|o| o.f_measure).collect();
    let (f_mean, f_se) = mean_and_se(&f);
    let split = |get: fn(&MethodOutcome) -> Option<f64>| -> (Option<f64>, Option<f64>) {
        let v: Option<Vec<f64>> = outcomes.iter().map(|o| get(o)).collect();
        match v {
            Some(v) if !v.is_empty() => {
                let (m, s) = mean_and_se(&v);
                (Some(m), Some(s))
            }
            _ => (None, None),
        }
    };
    let (pi_m, pi_s) = split(|o| o.prob_informative);
    let (pr_m, pr_s) = split(|o| o.prob_irrelevant);
    let mut lambdas: Vec<f64> = outcomes.iter().map(|o| o.lambda_per_sample).collect();
    lambdas.sort_by(f64::total_cmp);
    CellSummary {
        example: example.number(),
        w_s,
        method: method.label(),
        n_replicates: outcomes.len(),
        f_mean,
        f_se,
        prob_informative_mean: pi_m,
        prob_informative_se: pi_s,
        prob_irrelevant_mean: pr_m,
        prob_irrelevant_se: pr_s,
        lambda_per_sample_median: lambdas.get(lambdas.len() / 2).copied().unwrap_or(f64::NAN),
    }
}

/// Settings of the Lasso FDR study. With `m ≥ n` the full support is
/// always reachable along the Lasso path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Settings {
    pub m: usize,
    pub n: usize,
    pub noise_var: f64,
    pub rho_grid: Vec<f64>,
}

impl Default for Fig2Settings {
    fn default() -> Self {
        Fig2Settings {
            m: 1000,
            n: 500,
            noise_var: 1.0,
            rho_grid: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99],
        }
    }
}

pub fn fig2(
    settings: &Fig2Settings,
    n_datasets: usize,
    hc: &HarnessConfig,
) -> Result<Vec<FdrPoint>> {
    let base = presets::fdr_study(
        settings.m,
        settings.n,
        settings.rho_grid.first().copied().unwrap_or(0.0),
        settings.noise_var,
        rng::derive_seed(hc.seed, &[2]),
    );
    fdr_experiment(&settings.rho_grid, n_datasets, &base)
}

/// Settings of the group-composition study: pairwise-correlated relevant
/// features in random groups, fitted along a penalty grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Settings {
    pub m: usize,
    pub n_relevant: usize,
    pub n_irrelevant: usize,
    pub rho: f64,
    pub w_s: f64,
    pub noise_var: f64,
    pub n_groups: usize,
    /// Per-sample penalties, descending.
    pub grid: Vec<f64>,
}

impl Default for Fig3Settings {
    fn default() -> Self {
        Fig3Settings {
            m: 100,
            n_relevant: 50,
            n_irrelevant: 150,
            rho: 0.6,
            w_s: 0.3,
            noise_var: 1.0,
            n_groups: 50,
            grid: geometric_grid(1e2, 1e-2, 9),
        }
    }
}

/// Conditional selection probabilities at one penalty:
/// `p1` relevant feature alone among relevant features in its group,
/// `p2` irrelevant feature in a group without relevant features,
/// `p3` relevant feature sharing its group with another relevant one,
/// `p4` irrelevant feature in a group with at least one relevant feature.
/// Means and standard errors are over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Point {
    pub lambda_per_sample: f64,
    pub n_replicates: usize,
    pub p1: f64,
    pub p1_se: f64,
    pub p2: f64,
    pub p2_se: f64,
    pub p3: f64,
    pub p3_se: f64,
    pub p4: f64,
    pub p4_se: f64,
}

pub fn fig3(
    settings: &Fig3Settings,
    n_replicates: usize,
    hc: &HarnessConfig,
) -> Result<Vec<Fig3Point>> {
    let n = settings.n_relevant + settings.n_irrelevant;
    // ratios[r][k][c]: replicate r, grid point k, condition c (NaN if empty).
    let ratios: Vec<Vec<[f64; 4]>> = (0..n_replicates)
        .into_par_iter()
        .map(|r| {
            let seed = rng::derive_seed(hc.seed, &[3, r as u64]);
            let spec = SynthSpec {
                m: settings.m,
                n,
                n_s: settings.n_relevant,
                rho: settings.rho,
                w_s: settings.w_s,
                noise_var: settings.noise_var,
                family: synth::CovarianceFamily::Pairwise,
                sign_pattern: synth::SignPattern::Random,
                rng_seed: seed,
            };
            let data = generate(&spec)?;
            let x = data.x.standardize()?;
            let y = data.y.centered();
            let groups = random_allocation(
                n,
                settings.n_groups,
                &mut rng::seeded(rng::derive_seed(seed, &[1])),
            )?;
            let relevant: Vec<bool> = (0..n).map(|j| j < settings.n_relevant).collect();
            let per_group: Vec<usize> = groups
                .groups()
                .iter()
                .map(|g| g.iter().filter(|&&j| relevant[j]).count())
                .collect();
            let condition = |j: usize| -> usize {
                let k = per_group[groups.group_of(j)];
                match (relevant[j], k) {
                    (true, 1) => 0,
                    (false, 0) => 1,
                    (true, _) => 2,
                    (false, _) => 3,
                }
            };
            let mut warm = None;
            let mut rows = Vec::with_capacity(settings.grid.len());
            for &u in &settings.grid {
                let fit = fit_scaled(&x, &y, Some(&groups), u, hc.solver, warm)?;
                let mut hit = [0usize; 4];
                let mut tot = [0usize; 4];
                let selected: BTreeSet<usize> = fit.active_set.iter().copied().collect();
                for j in 0..n {
                    let c = condition(j);
                    tot[c] += 1;
                    hit[c] += usize::from(selected.contains(&j));
                }
                rows.push(std::array::from_fn(|c| {
                    if tot[c] == 0 {
                        f64::NAN
                    } else {
                        hit[c] as f64 / tot[c] as f64
                    }
                }));
                warm = Some(fit.weights);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(settings
        .grid
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let stat = |c: usize| {
                let v: Vec<f64> = ratios
                    .iter()
                    .map(|r| r[k][c])
                    .filter(|v| v.is_finite())
                    .collect();
                mean_and_se(&v)
            };
            let (p1, p1_se) = stat(0);
            let (p2, p2_se) = stat(1);
            let (p3, p3_se) = stat(2);
            let (p4, p4_se) = stat(3);
            Fig3Point {
                lambda_per_sample: u,
                n_replicates,
                p1,
                p1_se,
                p2,
                p2_se,
                p3,
                p3_se,
                p4,
                p4_se,
            }
        })
        .collect())
}

/// Settings of the solver timing comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSettings {
    pub m: usize,
    pub n_values: Vec<usize>,
    pub n_s: usize,
    pub rho: f64,
    pub w_s: f64,
    pub noise_var: f64,
    /// Per-sample penalties.
    pub grid: Vec<f64>,
    /// Stop timing the re-weighting solver once it has used this multiple
    /// of the active-set time; the reported time is then a lower bound.
    /// `None` always runs it to convergence.
    pub reweight_budget: Option<f64>,
}

impl Default for TimingSettings {
    fn default() -> Self {
        TimingSettings {
            m: 1000,
            n_values: vec![5000, 10000, 20000],
            n_s: 100,
            rho: 0.9,
            w_s: 0.3,
            noise_var: 1.0,
            grid: geometric_grid(1e1, 1.0, 10),
            reweight_budget: Some(2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub m: usize,
    pub n: usize,
    pub n_s: usize,
    pub n_lambdas: usize,
    pub activeset_seconds: f64,
    pub reweight_seconds: f64,
    /// False when the re-weighting runs were cut off by the budget.
    pub reweight_complete: bool,
    /// Penalties on which the re-weighting solver converged.
    pub reweight_lambdas_done: usize,
}

/// Outer iterations per timed chunk of the re-weighting solver.
const REWEIGHT_CHUNK: usize = 5;

/// Wall time of the active-set and re-weighting solvers over the penalty
/// grid with fixed groups. Only solver calls are timed.
pub fn timing(settings: &TimingSettings, hc: &HarnessConfig) -> Result<Vec<TimingRow>> {
    settings
        .n_values
        .iter()
        .map(|&n| {
            let seed = rng::derive_seed(hc.seed, &[5, n as u64]);
            let spec = SynthSpec {
                m: settings.m,
                n,
                n_s: settings.n_s,
                rho: settings.rho,
                w_s: settings.w_s,
                noise_var: settings.noise_var,
                family: synth::CovarianceFamily::Pairwise,
                sign_pattern: synth::SignPattern::Random,
                rng_seed: seed,
            };
            let data = generate(&spec)?;
            let x = data.x.standardize()?;
            let y = data.y.centered();
            let groups = oracle_allocation(
                n,
                &data.support,
                &mut rng::seeded(rng::derive_seed(seed, &[1])),
            )?;
            let lambdas: Vec<f64> = settings
                .grid
                .iter()
                .map(|u| u * settings.m as f64)
                .collect();

            let mut as_time = Duration::ZERO;
            for &lambda in &lambdas {
                let cfg = EglConfig::new(lambda);
                let t = Instant::now();
                egl::egl_activeset_fit(&x, &y, &groups, &cfg)?;
                as_time += t.elapsed();
            }
            let budget = settings.reweight_budget.map(|f| as_time.mul_f64(f));
            let (rw_time, done) = time_reweight(&x, &y, &groups, &lambdas, budget)?;
            log::info!(
                "n = {n}: active set {:.2}s, re-weighting {:.2}s ({done}/{} penalties)",
                as_time.as_secs_f64(),
                rw_time.as_secs_f64(),
                lambdas.len()
            );
            Ok(TimingRow {
                m: settings.m,
                n,
                n_s: settings.n_s,
                n_lambdas: lambdas.len(),
                activeset_seconds: as_time.as_secs_f64(),
                reweight_seconds: rw_time.as_secs_f64(),
                reweight_complete: done == lambdas.len(),
                reweight_lambdas_done: done,
            })
        })
        .collect()
}

/// Runs the re-weighting solver on each penalty in chunks of outer
/// iterations, resuming from the previous iterate, until every penalty
/// converges or the accumulated time exceeds `budget`.
fn time_reweight(
    x: &DesignMatrix,
    y: &ResponseVector,
    groups: &GroupAllocation,
    lambdas: &[f64],
    budget: Option<Duration>,
) -> Result<(Duration, usize)> {
    let n = x.n_features();
    let mut elapsed = Duration::ZERO;
    let mut done = 0;
    for &lambda in lambdas {
        let cfg = EglConfig::new(lambda);
        let total_iter = cfg.max_outer_iter;
        let chunk = EglConfig {
            max_outer_iter: REWEIGHT_CHUNK,
            ..cfg
        };
        let mut w = Array1::from_elem(n, 1.0 / n as f64);
        let mut iters = 0;
        loop {
            let t = Instant::now();
            let fit = egl::reweight::reweight_from(x, y, groups, &chunk, Loss::Square, w)?;
            elapsed += t.elapsed();
            iters += fit.n_iterations;
            if fit.converged || iters >= total_iter {
                done += 1;
                break;
            }
            if budget.is_some_and(|b| elapsed > b) {
                return Ok((elapsed, done));
            }
            w = fit.weights.0;
        }
    }
    Ok((elapsed, done))
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let file = crate::io::create(path)?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicate_counts_scale() {
        assert_eq!(replicates(50, 0.4), 20);
        assert_eq!(replicates(200, 0.1), 20);
        assert_eq!(replicates(100, 0.001), 1);
    }

    #[test]
    fn grid_is_descending_geometric() {
        let g = geometric_grid(100.0, 0.01, 5);
        assert_eq!(g.len(), 5);
        for (a, b) in g.iter().zip([100.0, 10.0, 1.0, 0.1, 0.01]) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn labels() {
        assert_eq!(Method::plain(Grouping::None).label(), "Lasso");
        assert_eq!(Method::stable(Grouping::Fixed).label(), "EGL-F(S)");
        assert_eq!(Method::artificial(0.1).label(), "EGL-R(SA)");
        assert!(Method {
            artificial_weight_var: Some(0.1),
            ..Method::plain(Grouping::Random)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn targets_round_trip() {
        for t in Target::ALL {
            assert_eq!(Target::parse(t.name()), Some(t));
        }
        assert_eq!(Target::parse("table9"), None);
    }

    #[test]
    fn cross_validation_prefers_moderate_penalty() {
        let spec = SynthSpec {
            m: 60,
            n: 20,
            n_s: 4,
            rho: 0.0,
            w_s: 1.0,
            noise_var: 0.25,
            family: synth::CovarianceFamily::Pairwise,
            sign_pattern: synth::SignPattern::Random,
            rng_seed: 9,
        };
        let d = generate(&spec).unwrap();
        let x = d.x.standardize().unwrap();
        let y = d.y.centered();
        let hc = HarnessConfig::default();
        let grid = penalty_grid(&x, &y, false, &hc);
        let u = cross_validate(&x, &y, None, &grid, 5, hc.solver, 1).unwrap();
        assert!(u < grid[0] && u > grid[grid.len() - 1]);
    }
}
