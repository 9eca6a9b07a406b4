use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::stability::{apply_threshold, StabilityReport, ThresholdMode};
use crate::data::{check_pair, DesignMatrix, FitResult, GroupAllocation, ResponseVector, Task};
use crate::error::{Error, Result};
use crate::rng;

/// Distribution of the artificial weights `w′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightLaw {
    Normal { mean: f64, var: f64 },
    Fixed { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ArtificialMode {
    /// `X′_ij ~ N(feature_mean, feature_var)`, `y′ = y + X′w′`.
    Regression {
        feature_mean: f64,
        feature_var: f64,
        weight: WeightLaw,
    },
    /// Rows drawn from per-class normals with diagonal covariance; labels kept.
    Classification {
        positive_mean: f64,
        positive_var: f64,
        negative_mean: f64,
        negative_var: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtificialSpec {
    pub mode: ArtificialMode,
    /// One artificial feature per group.
    pub n_artificial: usize,
    pub rng_seed: u64,
}

impl ArtificialSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |v: f64| !(v > 0.0) || !v.is_finite();
        let ok = match self.mode {
            ArtificialMode::Regression {
                feature_var,
                weight,
                ..
            } => {
                !bad(feature_var)
                    && match weight {
                        WeightLaw::Normal { var, .. } => !bad(var),
                        WeightLaw::Fixed { value } => value.is_finite(),
                    }
            }
            ArtificialMode::Classification {
                positive_var,
                negative_var,
                ..
            } => !bad(positive_var) && !bad(negative_var),
        };
        if !ok {
            return Err(Error::InvalidInput(
                "artificial feature variances must be finite and > 0".into(),
            ));
        }
        if self.n_artificial == 0 {
            return Err(Error::InvalidInput("n_artificial must be >= 1".into()));
        }
        Ok(())
    }

    fn task(&self) -> Task {
        match self.mode {
            ArtificialMode::Regression { .. } => Task::Regression,
            ArtificialMode::Classification { .. } => Task::BinaryClassification,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub x: DesignMatrix,
    pub y: ResponseVector,
    /// `None` when the columns were appended without a group structure.
    pub groups: Option<GroupAllocation>,
    pub artificial_indices: Vec<usize>,
}

/// Appends `spec.n_artificial` artificial columns after the real features
/// and adjusts the response in regression mode.
pub fn append_artificial(
    x: &DesignMatrix,
    y: &ResponseVector,
    spec: &ArtificialSpec,
) -> Result<Augmented> {
    check_pair(x, y)?;
    spec.validate()?;
    if spec.task() != y.task() {
        return Err(Error::TaskMismatch(format!(
            "{:?} artificial features cannot be used with a {:?} response",
            spec.task(),
            y.task()
        )));
    }
    let (m, n, k) = (x.n_samples(), x.n_features(), spec.n_artificial);
    let mut r = rng::seeded(spec.rng_seed);
    let mut extra = Array2::zeros((m, k));
    let mut gauss = |mean: f64, var: f64| mean + var.sqrt() * r.sample::<f64, _>(StandardNormal);
    let y_aug = match spec.mode {
        ArtificialMode::Regression {
            feature_mean,
            feature_var,
            weight,
        } => {
            extra.mapv_inplace(|_| gauss(feature_mean, feature_var));
            let w: Array1<f64> = (0..k)
                .map(|_| match weight {
                    WeightLaw::Normal { mean, var } => gauss(mean, var),
                    WeightLaw::Fixed { value } => value,
                })
                .collect();
            ResponseVector::regression(&y.values() + &extra.dot(&w))?
        }
        ArtificialMode::Classification {
            positive_mean,
            positive_var,
            negative_mean,
            negative_var,
        } => {
            for (i, label) in y.values().iter().enumerate() {
                let (mu, var) = if *label > 0.0 {
                    (positive_mean, positive_var)
                } else {
                    (negative_mean, negative_var)
                };
                for j in 0..k {
                    extra[[i, j]] = gauss(mu, var);
                }
            }
            y.clone()
        }
    };
    Ok(Augmented {
        x: x.append_columns(extra.view())?,
        y: y_aug,
        groups: None,
        artificial_indices: (n..n + k).collect(),
    })
}

/// Adds one artificial feature to every group of `groups`.
pub fn augment_artificial(
    x: &DesignMatrix,
    y: &ResponseVector,
    groups: &GroupAllocation,
    spec: &ArtificialSpec,
) -> Result<Augmented> {
    groups.check_features(x.n_features())?;
    if spec.n_artificial != groups.n_groups() {
        return Err(Error::InvalidGroups(format!(
            "{} artificial features for {} groups",
            spec.n_artificial,
            groups.n_groups()
        )));
    }
    let mut aug = append_artificial(x, y, spec)?;
    aug.groups = Some(attach_to_groups(groups, &aug.artificial_indices)?);
    Ok(aug)
}

/// Group `k` of the result is group `k` of `groups` plus `artificial[k]`.
pub(crate) fn attach_to_groups(
    groups: &GroupAllocation,
    artificial: &[usize],
) -> Result<GroupAllocation> {
    let g = groups
        .groups()
        .iter()
        .zip(artificial)
        .map(|(grp, &a)| {
            let mut grp = grp.clone();
            grp.push(a);
            grp
        })
        .collect();
    GroupAllocation::new(g, groups.n_features() + artificial.len())
}

/// Index map dropping `removed` and renumbering the rest.
fn renumber(n: usize, removed: &[usize]) -> Vec<Option<usize>> {
    let mut drop = vec![false; n];
    for &a in removed {
        if a < n {
            drop[a] = true;
        }
    }
    let mut next = 0;
    drop.iter()
        .map(|&d| {
            if d {
                None
            } else {
                next += 1;
                Some(next - 1)
            }
        })
        .collect()
}

fn map_indices(idx: &[usize], map: &[Option<usize>]) -> Vec<usize> {
    idx.iter()
        .filter_map(|&j| map.get(j).copied().flatten())
        .collect()
}

/// Removal of artificial coordinates from a result.
pub trait StripArtificial: Sized {
    fn strip_artificial(&self, artificial: &[usize]) -> Self;
}

impl StripArtificial for FitResult {
    fn strip_artificial(&self, artificial: &[usize]) -> Self {
        let map = renumber(self.weights.len(), artificial);
        let w: Array1<f64> = self
            .weights
            .0
            .iter()
            .zip(&map)
            .filter(|(_, m)| m.is_some())
            .map(|(v, _)| *v)
            .collect();
        FitResult {
            weights: crate::data::WeightVector(w),
            objective_trace: self.objective_trace.clone(),
            converged: self.converged,
            n_iterations: self.n_iterations,
            active_set: map_indices(&self.active_set, &map),
        }
    }
}

impl StripArtificial for StabilityReport {
    fn strip_artificial(&self, artificial: &[usize]) -> Self {
        let map = renumber(self.probabilities.len(), artificial);
        let probabilities: Vec<f64> = self
            .probabilities
            .iter()
            .zip(&map)
            .filter(|(_, m)| m.is_some())
            .map(|(p, _)| *p)
            .collect();
        StabilityReport {
            probabilities,
            stable_set: map_indices(&self.stable_set, &map),
            threshold: self.threshold,
            per_iteration_selections: self
                .per_iteration_selections
                .iter()
                .map(|s| map_indices(s, &map))
                .collect(),
            n_iterations: self.n_iterations,
            n_nonconverged: self.n_nonconverged,
        }
    }
}

pub fn strip_artificial<T: StripArtificial>(result: &T, artificial: &[usize]) -> T {
    result.strip_artificial(artificial)
}

impl StabilityReport {
    /// Recomputes the stable set from the probabilities with `mode`.
    pub fn rethreshold(&self, mode: ThresholdMode) -> StabilityReport {
        let (threshold, stable_set) = apply_threshold(&self.probabilities, mode);
        StabilityReport {
            threshold,
            stable_set,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn regression_spec(k: usize, weight: WeightLaw) -> ArtificialSpec {
        ArtificialSpec {
            mode: ArtificialMode::Regression {
                feature_mean: 0.0,
                feature_var: 1.0,
                weight,
            },
            n_artificial: k,
            rng_seed: 5,
        }
    }

    fn toy() -> (DesignMatrix, ResponseVector) {
        let x = DesignMatrix::new(Array2::from_shape_fn((6, 4), |(i, j)| {
            (i * 4 + j) as f64 * 0.1
        }))
        .unwrap();
        let y = ResponseVector::regression(array![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        (x, y)
    }

    #[test]
    fn zero_weights_leave_response_unchanged() {
        let (x, y) = toy();
        let g = GroupAllocation::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let aug = augment_artificial(
            &x,
            &y,
            &g,
            &regression_spec(2, WeightLaw::Fixed { value: 0.0 }),
        )
        .unwrap();
        assert_eq!(aug.y, y);
    }

    #[test]
    fn one_column_per_group() {
        let (x, y) = toy();
        let g = GroupAllocation::new(vec![vec![0], vec![1, 2], vec![3]], 4).unwrap();
        let spec = regression_spec(
            3,
            WeightLaw::Normal {
                mean: 0.0,
                var: 0.1,
            },
        );
        let aug = augment_artificial(&x, &y, &g, &spec).unwrap();
        assert_eq!(aug.x.n_features(), 7);
        assert_eq!(aug.artificial_indices, vec![4, 5, 6]);
        let ga = aug.groups.unwrap();
        for k in 0..3 {
            assert_eq!(ga.group(k).len(), g.group(k).len() + 1);
            assert_eq!(*ga.group(k).last().unwrap(), 4 + k);
        }
    }

    #[test]
    fn count_must_match_groups() {
        let (x, y) = toy();
        let g = GroupAllocation::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        assert!(augment_artificial(
            &x,
            &y,
            &g,
            &regression_spec(3, WeightLaw::Fixed { value: 1.0 })
        )
        .is_err());
    }

    #[test]
    fn mode_task_mismatch() {
        let (x, _) = toy();
        let y = ResponseVector::classification(array![1.0, -1.0, 1.0, -1.0, 1.0, -1.0]).unwrap();
        let err = append_artificial(&x, &y, &regression_spec(1, WeightLaw::Fixed { value: 1.0 }));
        assert!(matches!(err, Err(Error::TaskMismatch(_))));
    }

    #[test]
    fn nonpositive_variance_rejected() {
        let (x, y) = toy();
        let spec = regression_spec(
            1,
            WeightLaw::Normal {
                mean: 0.0,
                var: 0.0,
            },
        );
        assert!(append_artificial(&x, &y, &spec).is_err());
    }

    #[test]
    fn strip_fit_result() {
        let fit = FitResult::new(array![1.0, 0.0, 2.0, 3.0, 0.0], vec![1.0], true, 1);
        let s = fit.strip_artificial(&[3, 4]);
        assert_eq!(s.weights.0, array![1.0, 0.0, 2.0]);
        assert_eq!(s.active_set, vec![0, 2]);
    }

    #[test]
    fn strip_renumbers_interior_indices() {
        let r = StabilityReport::from_selections(
            4,
            vec![vec![0, 1, 3], vec![1, 3]],
            ThresholdMode::Fixed(1.0),
            0,
        )
        .unwrap();
        let s = r.strip_artificial(&[1]);
        assert_eq!(s.probabilities, vec![0.5, 0.0, 1.0]);
        assert_eq!(s.stable_set, vec![2]);
        assert_eq!(s.per_iteration_selections, vec![vec![0, 2], vec![2]]);
    }
}
