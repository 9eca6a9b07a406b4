//! Stability selection under random group allocation, probability
//! thresholding and artificial-feature augmentation.

mod artificial;
mod kmeans;
pub(crate) mod stability;

use rand::seq::SliceRandom;
use rand::Rng;

pub use artificial::{
    append_artificial, augment_artificial, strip_artificial, ArtificialMode, ArtificialSpec,
    Augmented, StripArtificial, WeightLaw,
};
pub use kmeans::{kmeans_threshold, KMeansSplit};
pub use stability::{
    stability_select, AllocationPolicy, StabilityConfig, StabilityReport, ThresholdMode,
};

use crate::data::GroupAllocation;
use crate::error::{Error, Result};
use crate::synth::equal_chunks;

/// Uniformly random partition: shuffle the feature indices and cut them
/// into `n_groups` contiguous chunks whose sizes differ by at most one.
pub fn random_allocation<R: Rng + ?Sized>(
    n_features: usize,
    n_groups: usize,
    rng: &mut R,
) -> Result<GroupAllocation> {
    if n_groups == 0 || n_groups > n_features {
        return Err(Error::InvalidGroups(format!(
            "cannot split {n_features} features into {n_groups} groups"
        )));
    }
    let mut order: Vec<usize> = (0..n_features).collect();
    order.shuffle(rng);
    let groups = equal_chunks(n_features, n_groups)
        .into_iter()
        .map(|r| order[r].to_vec())
        .collect();
    GroupAllocation::new(groups, n_features)
}

/// "Fixed" allocation: one group per informative feature, with the
/// remaining features spread over those groups in random order.
pub fn oracle_allocation<R: Rng + ?Sized>(
    n_features: usize,
    support: &[usize],
    rng: &mut R,
) -> Result<GroupAllocation> {
    if support.is_empty() {
        return Err(Error::InvalidGroups(
            "oracle allocation needs a non-empty support".into(),
        ));
    }
    let mut groups: Vec<Vec<usize>> = support.iter().map(|&i| vec![i]).collect();
    let mut rest: Vec<usize> = (0..n_features).filter(|i| !support.contains(i)).collect();
    rest.shuffle(rng);
    for (k, i) in rest.into_iter().enumerate() {
        let len = groups.len();
        groups[k % len].push(i);
    }
    GroupAllocation::new(groups, n_features)
}
