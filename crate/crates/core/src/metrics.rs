//! Support-recovery metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A selected index set scored against the true support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub selected: BTreeSet<usize>,
    pub truth: BTreeSet<usize>,
    pub n_features: usize,
}

impl SelectionOutcome {
    pub fn new(
        selected: impl IntoIterator<Item = usize>,
        truth: impl IntoIterator<Item = usize>,
        n_features: usize,
    ) -> Result<Self> {
        let selected: BTreeSet<usize> = selected.into_iter().collect();
        let truth: BTreeSet<usize> = truth.into_iter().collect();
        if let Some(i) = selected
            .iter()
            .chain(truth.iter())
            .find(|&&i| i >= n_features)
        {
            return Err(Error::InvalidInput(format!(
                "index {i} outside 0..{n_features}"
            )));
        }
        Ok(SelectionOutcome {
            selected,
            truth,
            n_features,
        })
    }

    pub fn true_positives(&self) -> usize {
        self.selected.intersection(&self.truth).count()
    }

    pub fn false_positives(&self) -> usize {
        self.selected.difference(&self.truth).count()
    }

    /// `None` when nothing was selected.
    pub fn precision(&self) -> Option<f64> {
        (!self.selected.is_empty())
            .then(|| self.true_positives() as f64 / self.selected.len() as f64)
    }

    pub fn recall(&self) -> Result<f64> {
        if self.truth.is_empty() {
            return Err(Error::InvalidInput(
                "recall needs a non-empty truth set".into(),
            ));
        }
        Ok(self.true_positives() as f64 / self.truth.len() as f64)
    }
}

/// Harmonic mean of precision and recall; 0 for an empty selection.
pub fn f_measure(outcome: &SelectionOutcome) -> Result<f64> {
    let recall = outcome.recall()?;
    let Some(precision) = outcome.precision() else {
        return Ok(0.0);
    };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// `|selected \ truth| / max(1, |selected|)`
pub fn fdr(outcome: &SelectionOutcome) -> f64 {
    outcome.false_positives() as f64 / outcome.selected.len().max(1) as f64
}

/// Mean selection probability over the true support and over its complement.
/// A side with no features yields NaN.
pub fn probability_summary(probabilities: &[f64], truth: &BTreeSet<usize>) -> (f64, f64) {
    let (mut sum_in, mut n_in, mut sum_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (j, &p) in probabilities.iter().enumerate() {
        if truth.contains(&j) {
            sum_in += p;
            n_in += 1;
        } else {
            sum_out += p;
            n_out += 1;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
    (mean(sum_in, n_in), mean(sum_out, n_out))
}

/// Mean and standard error of a sample.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_recovery() {
        let o = SelectionOutcome::new(0..5, 0..5, 10).unwrap();
        assert_eq!(f_measure(&o).unwrap(), 1.0);
        assert_eq!(fdr(&o), 0.0);
    }

    #[test]
    fn half_right() {
        let o = SelectionOutcome::new((0..15).chain(30..45), 0..30, 100).unwrap();
        assert_eq!(o.precision(), Some(0.5));
        assert_eq!(o.recall().unwrap(), 0.5);
        assert!((f_measure(&o).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn disjoint_and_empty_selections() {
        let o = SelectionOutcome::new(5..8, 0..3, 10).unwrap();
        assert_eq!(f_measure(&o).unwrap(), 0.0);
        assert_eq!(fdr(&o), 1.0);
        let o = SelectionOutcome::new(Vec::new(), 0..3, 10).unwrap();
        assert_eq!(f_measure(&o).unwrap(), 0.0);
        assert_eq!(fdr(&o), 0.0);
    }

    #[test]
    fn empty_truth_is_an_error() {
        let o = SelectionOutcome::new(0..3, Vec::new(), 10).unwrap();
        assert!(f_measure(&o).is_err());
    }

    #[test]
    fn fdr_of_large_selection() {
        let o = SelectionOutcome::new(0..1950, 0..44, 2000).unwrap();
        assert!((fdr(&o) - (1.0 - 44.0 / 1950.0)).abs() < 1e-12);
        assert!((fdr(&o) - 0.977).abs() < 5e-4);
    }

    #[test]
    fn out_of_range_index() {
        assert!(SelectionOutcome::new([10], [0], 10).is_err());
    }

    #[test]
    fn probability_summaries() {
        let truth: BTreeSet<usize> = [0, 1].into_iter().collect();
        assert_eq!(
            probability_summary(&[1.0, 1.0, 0.0, 0.0], &truth),
            (1.0, 0.0)
        );
        assert_eq!(probability_summary(&[0.3; 4], &truth), (0.3, 0.3));
    }

    #[test]
    fn standard_error() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (1.666_666_666_666_666_7_f64 / 4.0).sqrt()).abs() < 1e-12);
    }
}
