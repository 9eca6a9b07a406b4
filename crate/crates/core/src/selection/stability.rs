use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans_threshold;
use super::random_allocation;
use crate::data::{check_pair, DesignMatrix, GroupAllocation, ResponseVector, Task};
use crate::egl::{self, EglConfig, Loss, SolverKind};
use crate::error::{Error, Result};
use crate::rng;

/// How the stable set is cut from the selection probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
#[derive(Default)]
pub enum ThresholdMode {
    #[default]
    KMeans,
    Fixed(f64),
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub n_iterations: usize,
    /// Groups drawn for a random allocation.
    pub n_groups: usize,
    /// Draw a fresh random allocation for every iteration.
    pub reshuffle_groups: bool,
    pub rng_seed: u64,
    #[serde(default)]
    pub threshold_mode: ThresholdMode,
}

impl StabilityConfig {
    pub fn new(n_iterations: usize, n_groups: usize, rng_seed: u64) -> Self {
        StabilityConfig {
            n_iterations,
            n_groups,
            reshuffle_groups: true,
            rng_seed,
            threshold_mode: ThresholdMode::KMeans,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::InvalidInput(
                "stability selection needs N >= 1".into(),
            ));
        }
        if self.n_groups == 0 {
            return Err(Error::InvalidInput("n_groups must be >= 1".into()));
        }
        Ok(())
    }
}

/// Group structure used in each stability iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationPolicy {
    Fixed(GroupAllocation),
    /// `StabilityConfig::n_groups` random groups.
    Random,
    /// Random groups over the remaining features, one per anchor, with
    /// anchor `k` placed in group `k`. Used for artificial features.
    RandomAnchored {
        anchors: Vec<usize>,
    },
}

pub(crate) fn draw_allocation(
    n: usize,
    policy: &AllocationPolicy,
    n_groups: usize,
    r: &mut rng::Rng,
) -> Result<GroupAllocation> {
    match policy {
        AllocationPolicy::Fixed(g) => Ok(g.clone()),
        AllocationPolicy::Random => random_allocation(n, n_groups, r),
        AllocationPolicy::RandomAnchored { anchors } => {
            let rest: Vec<usize> = (0..n).filter(|j| !anchors.contains(j)).collect();
            let base = random_allocation(rest.len(), anchors.len(), r)?;
            let groups = base
                .groups()
                .iter()
                .zip(anchors)
                .map(|(grp, &a)| {
                    let mut g: Vec<usize> = grp.iter().map(|&i| rest[i]).collect();
                    g.push(a);
                    g
                })
                .collect();
            GroupAllocation::new(groups, n)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Selection frequency per feature, a multiple of `1/n_iterations`.
    pub probabilities: Vec<f64>,
    pub stable_set: Vec<usize>,
    pub threshold: f64,
    pub per_iteration_selections: Vec<Vec<usize>>,
    pub n_iterations: usize,
    /// Iterations whose solver stopped without converging.
    pub n_nonconverged: usize,
}

impl StabilityReport {
    /// Assembles a report from per-iteration selections.
    pub fn from_selections(
        n_features: usize,
        selections: Vec<Vec<usize>>,
        mode: ThresholdMode,
        n_nonconverged: usize,
    ) -> Result<Self> {
        let n_iter = selections.len();
        if n_iter == 0 {
            return Err(Error::InvalidInput("no selections to aggregate".into()));
        }
        let mut counts = vec![0usize; n_features];
        for s in &selections {
            for &j in s {
                if j >= n_features {
                    return Err(Error::InvalidInput(format!(
                        "selected index {j} outside 0..{n_features}"
                    )));
                }
                counts[j] += 1;
            }
        }
        let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / n_iter as f64).collect();
        let (threshold, stable_set) = apply_threshold(&probabilities, mode);
        Ok(StabilityReport {
            probabilities,
            stable_set,
            threshold,
            per_iteration_selections: selections,
            n_iterations: n_iter,
            n_nonconverged,
        })
    }

    pub fn n_features(&self) -> usize {
        self.probabilities.len()
    }
}

pub(crate) fn apply_threshold(probabilities: &[f64], mode: ThresholdMode) -> (f64, Vec<usize>) {
    match mode {
        ThresholdMode::KMeans => {
            let split = kmeans_threshold(probabilities);
            (split.threshold, split.stable_set)
        }
        ThresholdMode::Fixed(pi) => (
            pi,
            (0..probabilities.len())
                .filter(|&j| probabilities[j] >= pi)
                .collect(),
        ),
    }
}

/// Half-size subsample without replacement. Classification draws are
/// stratified so both classes keep their proportions.
fn subsample(y: &ResponseVector, rng: &mut rng::Rng) -> Vec<usize> {
    let m = y.len();
    let size = m / 2;
    let mut rows: Vec<usize> = match y.task() {
        Task::Regression => {
            let all: Vec<usize> = (0..m).collect();
            all.choose_multiple(rng, size).copied().collect()
        }
        Task::BinaryClassification => {
            let pos: Vec<usize> = (0..m).filter(|&i| y.values()[i] > 0.0).collect();
            let neg: Vec<usize> = (0..m).filter(|&i| y.values()[i] <= 0.0).collect();
            let n_pos = ((pos.len() as f64 * size as f64 / m as f64).round() as usize)
                .clamp(usize::from(!pos.is_empty()), pos.len());
            let n_neg = size.saturating_sub(n_pos).min(neg.len());
            let mut rows: Vec<usize> = pos.choose_multiple(rng, n_pos).copied().collect();
            rows.extend(neg.choose_multiple(rng, n_neg).copied());
            rows
        }
    };
    rows.shuffle(rng);
    rows
}

/// Stability selection.
///
/// Iteration `i` draws `⌊m/2⌋` rows without replacement from stream `i` of
/// `cfg.rng_seed`, fits `solver` at the fixed penalty `egl_cfg.lambda` and
/// records the active set. With a random policy the allocation is redrawn
/// every iteration when `reshuffle_groups` is set, otherwise drawn once.
/// Iterations run in parallel; the report is independent of scheduling.
pub fn stability_select(
    x: &DesignMatrix,
    y: &ResponseVector,
    policy: &AllocationPolicy,
    solver: SolverKind,
    egl_cfg: &EglConfig,
    loss: Loss,
    cfg: &StabilityConfig,
) -> Result<StabilityReport> {
    check_pair(x, y)?;
    cfg.validate()?;
    if x.n_samples() < 4 {
        return Err(Error::InvalidInput(format!(
            "stability selection needs at least 4 samples, got {}",
            x.n_samples()
        )));
    }
    let n = x.n_features();
    match policy {
        AllocationPolicy::Fixed(g) => g.check_features(n)?,
        AllocationPolicy::RandomAnchored { anchors } => {
            if anchors.is_empty() || anchors.iter().any(|&a| a >= n) {
                return Err(Error::InvalidGroups(
                    "anchors must be non-empty and in range".into(),
                ));
            }
        }
        AllocationPolicy::Random => {}
    }
    let base_alloc = match policy {
        AllocationPolicy::Fixed(_) => None,
        _ if cfg.reshuffle_groups => None,
        _ => Some(draw_allocation(
            n,
            policy,
            cfg.n_groups,
            &mut rng::stream(rng::derive_seed(cfg.rng_seed, &[u64::MAX]), 0),
        )?),
    };
    let outcomes: Vec<(Vec<usize>, bool)> = (0..cfg.n_iterations)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.rng_seed, i as u64);
            let rows = subsample(y, &mut r);
            let alloc = match &base_alloc {
                Some(g) => g.clone(),
                None => draw_allocation(n, policy, cfg.n_groups, &mut r)?,
            };
            let xs = x.select_rows(&rows);
            let ys = y.select(&rows);
            let fit = egl::fit(solver, &xs, &ys, &alloc, egl_cfg, loss)?;
            Ok((fit.active_set, fit.converged))
        })
        .collect::<Result<_>>()?;
    let n_nonconverged = outcomes.iter().filter(|(_, c)| !c).count();
    if n_nonconverged > 0 {
        log::warn!(
            "{n_nonconverged} of {} stability iterations did not converge",
            cfg.n_iterations
        );
    }
    let selections = outcomes.into_iter().map(|(s, _)| s).collect();
    StabilityReport::from_selections(n, selections, cfg.threshold_mode, n_nonconverged)
}
