//! Domain types shared by every solver: design matrices, responses,
//! group allocations, weights and fit results.

use std::collections::BTreeSet;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude at or below which a weight counts as zero.
pub const ZERO_TOL: f64 = 1e-8;

/// Dense m×n design. Stored column-major so that feature columns are
/// contiguous for coordinate descent.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: Array2<f64>,
    standardized: bool,
    column_means: Array1<f64>,
    column_scales: Array1<f64>,
    constant_columns: Vec<usize>,
}

impl DesignMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (m, n) = values.dim();
        if m == 0 || n == 0 {
            return Err(Error::InvalidInput(format!(
                "design matrix must be non-empty, got {m}x{n}"
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry {v} at row {i}, column {j}"
            )));
        }
        let values = if values.t().is_standard_layout() {
            values
        } else {
            let mut f = Array2::zeros((m, n).f());
            f.assign(&values);
            f
        };
        Ok(DesignMatrix {
            values,
            standardized: false,
            column_means: Array1::zeros(n),
            column_scales: Array1::ones(n),
            constant_columns: Vec::new(),
        })
    }

    /// Builds from row-major data (`rows[i]` is sample i).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Dimension(format!(
                "row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
        let mut values = Array2::zeros((m, n).f());
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                values[[i, j]] = *v;
            }
        }
        Self::new(values)
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn column_means(&self) -> ArrayView1<'_, f64> {
        self.column_means.view()
    }

    pub fn column_scales(&self) -> ArrayView1<'_, f64> {
        self.column_scales.view()
    }

    /// Columns that had zero variance when standardized.
    pub fn constant_columns(&self) -> &[usize] {
        &self.constant_columns
    }

    /// Centres every column and scales it to unit population variance.
    /// Constant columns become all-zero with scale 1 and are reported in
    /// [`DesignMatrix::constant_columns`].
    pub fn standardize(&self) -> Result<DesignMatrix> {
        let (m, n) = self.values.dim();
        if m < 2 {
            return Err(Error::InvalidInput(format!(
                "standardization needs at least 2 samples, got {m}"
            )));
        }
        let mut out = Array2::zeros((m, n).f());
        let mut means = Array1::zeros(n);
        let mut scales = Array1::ones(n);
        let mut constant = Vec::new();
        for j in 0..n {
            let col = self.values.column(j);
            let mean = col.sum() / m as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
            let sd = var.sqrt();
            means[j] = mean;
            // Relative threshold so that huge-offset constant columns are caught.
            if sd <= 1e-12 * mean.abs().max(1.0) {
                constant.push(j);
                log::warn!("column {j} is constant; standardized to zero");
                continue;
            }
            scales[j] = sd;
            out.column_mut(j)
                .iter_mut()
                .zip(col.iter())
                .for_each(|(o, v)| *o = (v - mean) / sd);
        }
        Ok(DesignMatrix {
            values: out,
            standardized: true,
            column_means: means,
            column_scales: scales,
            constant_columns: constant,
        })
    }

    /// Maps standardized-space values back to the original units.
    pub fn unstandardize_values(&self) -> Array2<f64> {
        let mut out = self.values.clone();
        for j in 0..self.n_features() {
            let (mu, sd) = (self.column_means[j], self.column_scales[j]);
            out.column_mut(j).mapv_inplace(|v| v * sd + mu);
        }
        out
    }

    /// Subset of rows, preserving standardization metadata.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let n = self.n_features();
        let mut values = Array2::zeros((rows.len(), n).f());
        for j in 0..n {
            let src = self.values.column(j);
            let mut dst = values.column_mut(j);
            for (k, &i) in rows.iter().enumerate() {
                dst[k] = src[i];
            }
        }
        DesignMatrix {
            values,
            standardized: false,
            column_means: self.column_means.clone(),
            column_scales: self.column_scales.clone(),
            constant_columns: self.constant_columns.clone(),
        }
    }

    /// Subset of columns as a fresh, unstandardized-flagged matrix.
    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        let m = self.n_samples();
        let mut values = Array2::zeros((m, cols.len()).f());
        for (k, &j) in cols.iter().enumerate() {
            values.column_mut(k).assign(&self.values.column(j));
        }
        DesignMatrix {
            values,
            standardized: self.standardized,
            column_means: cols.iter().map(|&j| self.column_means[j]).collect(),
            column_scales: cols.iter().map(|&j| self.column_scales[j]).collect(),
            constant_columns: Vec::new(),
        }
    }

    /// Appends extra feature columns on the right.
    pub fn append_columns(&self, extra: ArrayView2<'_, f64>) -> Result<DesignMatrix> {
        let (m, n) = self.values.dim();
        if extra.nrows() != m {
            return Err(Error::Dimension(format!(
                "appending {} rows to a {m}-row design",
                extra.nrows()
            )));
        }
        let k = extra.ncols();
        let mut values = Array2::zeros((m, n + k).f());
        values.slice_mut(s![.., ..n]).assign(&self.values);
        values.slice_mut(s![.., n..]).assign(&extra);
        DesignMatrix::new(values)
    }

    /// `X w`
    pub fn predict(&self, w: ArrayView1<'_, f64>) -> Array1<f64> {
        self.values.dot(&w)
    }

    /// `Xᵀ v`
    pub fn transpose_dot(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        self.values.t().dot(&v)
    }
}

/// Learning task carried by a response vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    /// Labels in {-1, +1}.
    BinaryClassification,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseVector {
    values: Array1<f64>,
    task: Task,
}

impl ResponseVector {
    pub fn regression(values: Array1<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite response value".into()));
        }
        Ok(ResponseVector {
            values,
            task: Task::Regression,
        })
    }

    pub fn classification(values: Array1<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| **v != 1.0 && **v != -1.0) {
            return Err(Error::InvalidInput(format!(
                "classification labels must be -1 or +1, found {v}"
            )));
        }
        Ok(ResponseVector {
            values,
            task: Task::BinaryClassification,
        })
    }

    pub fn new(values: Array1<f64>, task: Task) -> Result<Self> {
        match task {
            Task::Regression => Self::regression(values),
            Task::BinaryClassification => Self::classification(values),
        }
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> ResponseVector {
        ResponseVector {
            values: rows.iter().map(|&i| self.values[i]).collect(),
            task: self.task,
        }
    }

    /// Copy with the mean removed (regression only; labels are returned unchanged).
    pub fn centered(&self) -> ResponseVector {
        match self.task {
            Task::Regression => {
                let mean = self.values.mean().unwrap_or(0.0);
                ResponseVector {
                    values: self.values.mapv(|v| v - mean),
                    task: self.task,
                }
            }
            Task::BinaryClassification => self.clone(),
        }
    }

    pub(crate) fn require_regression(&self, what: &str) -> Result<()> {
        if self.task != Task::Regression {
            return Err(Error::TaskMismatch(format!(
                "{what} requires a regression response"
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_pair(x: &DesignMatrix, y: &ResponseVector) -> Result<()> {
    if x.n_samples() != y.len() {
        return Err(Error::Dimension(format!(
            "design has {} samples but response has {}",
            x.n_samples(),
            y.len()
        )));
    }
    Ok(())
}

/// A partition of feature indices into disjoint, non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAllocation", into = "RawAllocation")]
pub struct GroupAllocation {
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawAllocation {
    n_features: usize,
    groups: Vec<Vec<usize>>,
}

impl TryFrom<RawAllocation> for GroupAllocation {
    type Error = Error;
    fn try_from(raw: RawAllocation) -> Result<Self> {
        GroupAllocation::new(raw.groups, raw.n_features)
    }
}

impl From<GroupAllocation> for RawAllocation {
    fn from(g: GroupAllocation) -> Self {
        RawAllocation {
            n_features: g.n_features(),
            groups: g.groups,
        }
    }
}

impl GroupAllocation {
    pub fn new(groups: Vec<Vec<usize>>, n_features: usize) -> Result<Self> {
        let mut group_of = vec![usize::MAX; n_features];
        for (gi, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidGroups(format!("group {gi} is empty")));
            }
            for &i in g {
                if i >= n_features {
                    return Err(Error::InvalidGroups(format!(
                        "group {gi} contains index {i} >= n_features {n_features}"
                    )));
                }
                if group_of[i] != usize::MAX {
                    return Err(Error::InvalidGroups(format!(
                        "feature {i} appears in groups {} and {gi}",
                        group_of[i]
                    )));
                }
                group_of[i] = gi;
            }
        }
        if let Some(i) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(Error::InvalidGroups(format!(
                "feature {i} is not assigned to any group"
            )));
        }
        Ok(GroupAllocation { groups, group_of })
    }

    /// Every feature in its own group.
    pub fn singletons(n_features: usize) -> Self {
        Self::new((0..n_features).map(|i| vec![i]).collect(), n_features)
            .expect("singleton partition is valid")
    }

    /// All features in one group.
    pub fn single(n_features: usize) -> Self {
        Self::new(vec![(0..n_features).collect()], n_features).expect("single group is valid")
    }

    pub fn n_features(&self) -> usize {
        self.group_of.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    /// Index of the group holding feature `i`.
    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    /// Group-membership indicator `I_g^i`.
    pub fn indicator(&self, g: usize, i: usize) -> bool {
        self.group_of[i] == g
    }

    /// Restricts the partition to `features` (given in the original index
    /// space). Returned groups are expressed in positions of `features`;
    /// groups left empty are dropped.
    pub fn restrict(&self, features: &[usize]) -> GroupAllocation {
        let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); self.n_groups()];
        for (pos, &i) in features.iter().enumerate() {
            by_group[self.group_of[i]].push(pos);
        }
        let groups = by_group.into_iter().filter(|g| !g.is_empty()).collect();
        GroupAllocation::new(groups, features.len()).expect("restriction of a partition")
    }

    pub(crate) fn check_features(&self, n: usize) -> Result<()> {
        if self.n_features() != n {
            return Err(Error::Dimension(format!(
                "group allocation covers {} features, data has {n}",
                self.n_features()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Array1<f64>);

impl WeightVector {
    pub fn zeros(n: usize) -> Self {
        WeightVector(Array1::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    /// Indices with `|w_j| > ZERO_TOL`.
    pub fn support(&self) -> Vec<usize> {
        active_set(self.0.view())
    }
}

impl From<Array1<f64>> for WeightVector {
    fn from(a: Array1<f64>) -> Self {
        WeightVector(a)
    }
}

pub fn active_set(w: ArrayView1<'_, f64>) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > ZERO_TOL)
        .map(|(j, _)| j)
        .collect()
}

/// Output of every solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: WeightVector,
    /// Objective value after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub n_iterations: usize,
    pub active_set: Vec<usize>,
}

impl FitResult {
    pub fn new(
        weights: Array1<f64>,
        objective_trace: Vec<f64>,
        converged: bool,
        n_iterations: usize,
    ) -> Self {
        let active = active_set(weights.view());
        FitResult {
            weights: WeightVector(weights),
            objective_trace,
            converged,
            n_iterations,
            active_set: active,
        }
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_trace.last().copied()
    }

    pub fn active_set_as_set(&self) -> BTreeSet<usize> {
        self.active_set.iter().copied().collect()
    }
}

/// Optional restriction forbidding weights of one sign.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SignConstraint {
    pub enabled: bool,
    /// The sign that is not allowed (`-1` or `+1`).
    pub forbidden_sign: i8,
}

impl SignConstraint {
    pub fn none() -> Self {
        SignConstraint {
            enabled: false,
            forbidden_sign: 1,
        }
    }

    pub fn forbid(sign: i8) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(Error::InvalidInput(format!(
                "forbidden sign must be -1 or +1, got {sign}"
            )));
        }
        Ok(SignConstraint {
            enabled: true,
            forbidden_sign: sign,
        })
    }

    /// Whether `v` lies strictly on the forbidden side.
    pub fn violates(&self, v: f64) -> bool {
        self.enabled && v != 0.0 && v.signum() == f64::from(self.forbidden_sign)
    }
}
