use serde::{Deserialize, Serialize};

/// Result of splitting selection probabilities into two clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansSplit {
    pub threshold: f64,
    pub stable_set: Vec<usize>,
    /// `false` when all values were identical and no split exists.
    pub separated: bool,
}

/// Exact 1-D 2-means: scans the cut points of the sorted values, keeps the
/// one minimizing the within-cluster sum of squares and returns the upper
/// cluster. The threshold is the midpoint between the two clusters' facing
/// boundary values, so `stable_set = {j : p_j ≥ threshold}`.
pub fn kmeans_threshold(probabilities: &[f64]) -> KMeansSplit {
    let mut order: Vec<usize> = (0..probabilities.len()).collect();
    order.sort_by(|&a, &b| probabilities[a].total_cmp(&probabilities[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| probabilities[i]).collect();
    let n = sorted.len();
    let (mut sum, mut sq) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    for (k, v) in sorted.iter().enumerate() {
        sum[k + 1] = sum[k] + v;
        sq[k + 1] = sq[k] + v * v;
    }
    let sse = |a: usize, b: usize| {
        let cnt = (b - a) as f64;
        let s = sum[b] - sum[a];
        (sq[b] - sq[a]) - s * s / cnt
    };
    let mut best: Option<(f64, usize)> = None;
    for cut in 1..n {
        // Only cut between distinct values so ties stay together.
        if sorted[cut] <= sorted[cut - 1] {
            continue;
        }
        let cost = sse(0, cut) + sse(cut, n);
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, cut));
        }
    }
    match best {
        Some((_, cut)) => {
            let threshold = 0.5 * (sorted[cut - 1] + sorted[cut]);
            let mut stable_set: Vec<usize> = order[cut..].to_vec();
            stable_set.sort_unstable();
            KMeansSplit {
                threshold,
                stable_set,
                separated: true,
            }
        }
        None => {
            log::warn!("all selection probabilities are identical; stable set is empty");
            KMeansSplit {
                threshold: sorted.last().copied().unwrap_or(0.0) + 1.0,
                stable_set: Vec::new(),
                separated: false,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_separated() {
        let mut p = vec![0.1; 90];
        p.extend(vec![0.9; 10]);
        let s = kmeans_threshold(&p);
        assert_eq!(s.stable_set, (90..100).collect::<Vec<_>>());
        assert!((s.threshold - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_points() {
        let s = kmeans_threshold(&[1.0, 0.0]);
        assert_eq!(s.stable_set, vec![0]);
        assert_eq!(s.threshold, 0.5);
    }

    #[test]
    fn identical_values() {
        let s = kmeans_threshold(&[0.4; 5]);
        assert!(s.stable_set.is_empty());
        assert!(!s.separated);
        assert!(s.threshold > 0.4);
    }

    #[test]
    fn stable_set_matches_threshold() {
        let p = [0.0, 0.02, 0.1, 0.5, 0.52, 0.96, 1.0, 0.04];
        let s = kmeans_threshold(&p);
        let by_threshold: Vec<usize> = (0..p.len()).filter(|&j| p[j] >= s.threshold).collect();
        assert_eq!(s.stable_set, by_threshold);
    }
}
