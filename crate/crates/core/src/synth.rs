//! Synthetic correlated designs with a known sparse support.
//!
//! Samples are `x ~ N(0, Σ)` where `Σ` couples the informative features
//! (and, for the random-pairwise family, a few irrelevant ones); all other
//! features are i.i.d. standard normal. The response is
//! `y = X w + ε`, `ε ~ N(0, σ²)`, with `w = [s_1 w_S, …, s_{n_S} w_S, 0, …]`.

use ndarray::{Array1, Array2, ShapeBuilder};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, ResponseVector, WeightVector, ZERO_TOL};
use crate::error::{Error, Result};
use crate::lasso::{lasso_null_lambda, lasso_path};
use crate::linalg::Cholesky;
use crate::metrics::{fdr, mean_and_se, SelectionOutcome};
use crate::rng;

/// Resamples allowed for random covariance structures before giving up.
pub const MAX_COVARIANCE_RETRIES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceFamily {
    /// Every pair of informative features has correlation ρ.
    Pairwise,
    /// Pairwise ρ among informative features, plus `n_coupled` irrelevant
    /// features each correlated with `partners` random informative
    /// features at `coupling` (default ρ/2).
    RandomPairwise {
        n_coupled: usize,
        partners: usize,
        coupling: Option<f64>,
    },
    /// `n_blocks` equal-sized blocks of constant correlation ρ.
    BlockDiagonal { n_blocks: usize },
    /// Correlation ρ on the edges of an Erdős–Rényi graph.
    ErdosRenyi { p_connect: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPattern {
    #[default]
    Random,
    /// Exactly ⌊n_S/2⌋ positive weights, the rest negative.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub m: usize,
    pub n: usize,
    pub n_s: usize,
    pub rho: f64,
    pub w_s: f64,
    pub noise_var: f64,
    pub family: CovarianceFamily,
    #[serde(default)]
    pub sign_pattern: SignPattern,
    pub rng_seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidInput("m and n must be positive".into()));
        }
        if self.n_s > self.n {
            return Err(Error::InvalidInput(format!(
                "n_S = {} exceeds n = {}",
                self.n_s, self.n
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidInput(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if !(self.noise_var >= 0.0) {
            return Err(Error::InvalidInput("noise variance must be >= 0".into()));
        }
        match &self.family {
            CovarianceFamily::RandomPairwise {
                n_coupled,
                partners,
                coupling,
            } => {
                if self.n_s + n_coupled > self.n {
                    return Err(Error::InvalidInput(format!(
                        "{n_coupled} coupled irrelevant features do not fit in n - n_S = {}",
                        self.n - self.n_s
                    )));
                }
                if *partners > self.n_s {
                    return Err(Error::InvalidInput(
                        "more partners than informative features".into(),
                    ));
                }
                if let Some(c) = coupling {
                    if !(c.abs() < 1.0) {
                        return Err(Error::InvalidInput(format!("coupling {c} outside (-1, 1)")));
                    }
                }
            }
            CovarianceFamily::BlockDiagonal { n_blocks } => {
                if *n_blocks == 0 || *n_blocks > self.n_s.max(1) {
                    return Err(Error::InvalidInput(format!(
                        "cannot split {} informative features into {n_blocks} blocks",
                        self.n_s
                    )));
                }
            }
            CovarianceFamily::ErdosRenyi { p_connect } => {
                if !(0.0..=1.0).contains(p_connect) {
                    return Err(Error::InvalidInput(format!(
                        "connection probability {p_connect} outside [0, 1]"
                    )));
                }
            }
            CovarianceFamily::Pairwise => {}
        }
        Ok(())
    }

    /// Number of leading features covered by the correlated block.
    pub fn correlated_width(&self) -> usize {
        match &self.family {
            CovarianceFamily::RandomPairwise { n_coupled, .. } => self.n_s + n_coupled,
            _ => self.n_s,
        }
    }
}

/// Covariance of the leading `correlated_width` features.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    pub sigma: Array2<f64>,
    pub cholesky: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub x: DesignMatrix,
    pub y: ResponseVector,
    pub w_true: WeightVector,
    /// `{0, …, n_S − 1}`
    pub support: Vec<usize>,
    pub sigma: Array2<f64>,
}

pub(crate) fn equal_chunks(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (len / parts, len % parts);
    let mut start = 0;
    (0..parts)
        .map(|k| {
            let size = base + usize::from(k < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

/// Builds `Σ` for the correlated block, resampling random structures until
/// the matrix is positive definite.
pub fn build_covariance<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<Covariance> {
    spec.validate()?;
    let k = spec.correlated_width();
    let rho = spec.rho;
    let attempts = match spec.family {
        CovarianceFamily::RandomPairwise { .. } | CovarianceFamily::ErdosRenyi { .. } => {
            MAX_COVARIANCE_RETRIES
        }
        _ => 1,
    };
    let mut last_err = None;
    for _ in 0..attempts {
        let mut sigma = Array2::<f64>::eye(k);
        match &spec.family {
            CovarianceFamily::Pairwise => fill_block(&mut sigma, 0..k, rho),
            CovarianceFamily::RandomPairwise {
                partners, coupling, ..
            } => {
                fill_block(&mut sigma, 0..spec.n_s, rho);
                let c = coupling.unwrap_or(rho / 2.0);
                let relevant: Vec<usize> = (0..spec.n_s).collect();
                for j in spec.n_s..k {
                    for &i in relevant.choose_multiple(rng, *partners) {
                        sigma[[i, j]] = c;
                        sigma[[j, i]] = c;
                    }
                }
            }
            CovarianceFamily::BlockDiagonal { n_blocks } => {
                for r in equal_chunks(k, *n_blocks) {
                    fill_block(&mut sigma, r, rho);
                }
            }
            CovarianceFamily::ErdosRenyi { p_connect } => {
                for i in 0..k {
                    for j in 0..i {
                        if rng.random::<f64>() < *p_connect {
                            sigma[[i, j]] = rho;
                            sigma[[j, i]] = rho;
                        }
                    }
                }
            }
        }
        match Cholesky::new(sigma.view(), "synthetic covariance") {
            Ok(ch) => {
                return Ok(Covariance {
                    cholesky: ch.lower().clone(),
                    sigma,
                })
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Covariance(format!(
        "no positive-definite covariance after {attempts} attempt(s): {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn fill_block(sigma: &mut Array2<f64>, range: std::ops::Range<usize>, rho: f64) {
    for i in range.clone() {
        for j in range.clone() {
            if i != j {
                sigma[[i, j]] = rho;
            }
        }
    }
}

/// Draws a dataset using the spec's own seed.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    generate_with_rng(spec, &mut rng::seeded(spec.rng_seed))
}

pub fn generate_with_rng<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<SynthDataset> {
    let cov = build_covariance(spec, rng)?;
    let (m, n, k) = (spec.m, spec.n, spec.correlated_width());
    let mut values = Array2::<f64>::zeros((m, n).f());
    for v in values.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    if k > 0 {
        // Rows of the correlated block become L z.
        let l = &cov.cholesky;
        let mut z = vec![0.0; k];
        for i in 0..m {
            for (a, za) in z.iter_mut().enumerate() {
                *za = values[[i, a]];
            }
            for a in 0..k {
                let row = l.row(a);
                values[[i, a]] = (0..=a).map(|b| row[b] * z[b]).sum();
            }
        }
    }
    let mut signs: Vec<f64> = match spec.sign_pattern {
        SignPattern::Random => (0..spec.n_s)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect(),
        SignPattern::Balanced => (0..spec.n_s)
            .map(|i| if i < spec.n_s / 2 { 1.0 } else { -1.0 })
            .collect(),
    };
    if spec.sign_pattern == SignPattern::Balanced {
        signs.shuffle(rng);
    }
    let mut w = Array1::zeros(n);
    for (i, s) in signs.iter().enumerate() {
        w[i] = s * spec.w_s;
    }
    let noise_sd = spec.noise_var.sqrt();
    let mut y = values.dot(&w);
    for v in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += noise_sd * e;
    }
    Ok(SynthDataset {
        x: DesignMatrix::new(values)?,
        y: ResponseVector::regression(y)?,
        w_true: WeightVector(w),
        support: (0..spec.n_s).collect(),
        sigma: cov.sigma,
    })
}

/// The four correlation structures used by the benchmark tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Example {
    /// Pairwise correlation among informative features.
    PairwiseCorrelation,
    /// Pairwise plus irrelevant features coupled to random informative ones.
    RandomPairwise,
    /// Block-diagonal correlation.
    BlockDiagonal,
    /// Erdős–Rényi correlation graph.
    ErdosRenyi,
}

impl Example {
    pub const ALL: [Example; 4] = [
        Example::PairwiseCorrelation,
        Example::RandomPairwise,
        Example::BlockDiagonal,
        Example::ErdosRenyi,
    ];

    pub fn number(&self) -> usize {
        match self {
            Example::PairwiseCorrelation => 1,
            Example::RandomPairwise => 2,
            Example::BlockDiagonal => 3,
            Example::ErdosRenyi => 4,
        }
    }

    pub fn from_number(k: usize) -> Option<Self> {
        Self::ALL.get(k.checked_sub(1)?).copied()
    }
}

/// Named parameter sets for the benchmark tables.
pub mod presets {
    use super::*;

    /// m = n = 100, n_S = 30, σ² = 1. ρ = 0.6 for examples 1–3 (5 blocks in
    /// example 3, 20 coupled irrelevant features at 0.3 in example 2) and
    /// ρ = 0.3 with connection probability 5/29 for example 4.
    pub fn table4(example: Example, w_s: f64, seed: u64) -> SynthSpec {
        small(example, 100, 100, w_s, seed)
    }

    /// Same datasets as table 4; evaluated with stability selection.
    pub fn table5(example: Example, w_s: f64, seed: u64) -> SynthSpec {
        table4(example, w_s, seed)
    }

    /// m = 300, n = 1500, n_S = 30, w_S = 0.5, otherwise as table 4.
    pub fn table6(example: Example, seed: u64) -> SynthSpec {
        small(example, 300, 1500, 0.5, seed)
    }

    fn small(example: Example, m: usize, n: usize, w_s: f64, seed: u64) -> SynthSpec {
        let (rho, family) = match example {
            Example::PairwiseCorrelation => (0.6, CovarianceFamily::Pairwise),
            Example::RandomPairwise => (
                0.6,
                CovarianceFamily::RandomPairwise {
                    n_coupled: 20,
                    partners: 2,
                    coupling: None,
                },
            ),
            Example::BlockDiagonal => (0.6, CovarianceFamily::BlockDiagonal { n_blocks: 5 }),
            Example::ErdosRenyi => (
                0.3,
                CovarianceFamily::ErdosRenyi {
                    p_connect: 5.0 / 29.0,
                },
            ),
        };
        SynthSpec {
            m,
            n,
            n_s: 30,
            rho,
            w_s,
            noise_var: 1.0,
            family,
            sign_pattern: SignPattern::Random,
            rng_seed: seed,
        }
    }

    /// m = 1000, n = 350, n_S = 50, σ² = 0.1, w_S = 0.2 with 25 positive and
    /// 25 negative weights. Example 3 uses ρ = 0.99 in 10 blocks of 5;
    /// example 4 uses ρ = 0.25 with connection probability 4/49.
    pub fn table7(example: Example, seed: u64) -> Option<SynthSpec> {
        let (rho, family) = match example {
            Example::BlockDiagonal => (0.99, CovarianceFamily::BlockDiagonal { n_blocks: 10 }),
            Example::ErdosRenyi => (
                0.25,
                CovarianceFamily::ErdosRenyi {
                    p_connect: 4.0 / 49.0,
                },
            ),
            _ => return None,
        };
        Some(SynthSpec {
            m: 1000,
            n: 350,
            n_s: 50,
            rho,
            w_s: 0.2,
            noise_var: 0.1,
            family,
            sign_pattern: SignPattern::Balanced,
            rng_seed: seed,
        })
    }

    /// Two correlated groups of 25 informative features, w_S = 0.2.
    pub fn fdr_study(m: usize, n: usize, rho: f64, noise_var: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            m,
            n,
            n_s: 50,
            rho,
            w_s: 0.2,
            noise_var,
            family: CovarianceFamily::BlockDiagonal { n_blocks: 2 },
            sign_pattern: SignPattern::Random,
            rng_seed: seed,
        }
    }
}

/// Number of λ values scanned by [`fdr_experiment`].
pub const FDR_GRID_POINTS: usize = 100;
/// Decades spanned by the λ grid below the null λ.
pub const FDR_GRID_DECADES: f64 = 4.0;

/// FDR of one replicate at the largest λ recovering the whole support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrReplicate {
    pub fdr: f64,
    pub lambda: f64,
    pub n_selected: usize,
    /// No λ on the grid recovered the full support.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrPoint {
    pub rho: f64,
    pub mean_fdr: f64,
    pub se_fdr: f64,
    pub n_datasets: usize,
    pub n_flagged: usize,
}

/// Lasso FDR at the largest λ for which every informative feature is active.
///
/// Descends a geometric grid of [`FDR_GRID_POINTS`] values from the null λ
/// down [`FDR_GRID_DECADES`] decades, reading each solution off the exact
/// Lasso path.
pub fn fdr_replicate(data: &SynthDataset) -> Result<FdrReplicate> {
    let x = data.x.standardize()?;
    let y = data.y.centered();
    let lmax = lasso_null_lambda(&x, &y);
    let ratio = 10f64.powf(-FDR_GRID_DECADES / (FDR_GRID_POINTS - 1) as f64);
    let grid: Vec<f64> = (0..FDR_GRID_POINTS)
        .map(|k| lmax * ratio.powi(k as i32))
        .collect();
    let recovered = |w: &WeightVector| data.support.iter().all(|&j| w.0[j].abs() > ZERO_TOL);
    let path = lasso_path(&x, &y, &grid, recovered)?;
    let w = path.last().expect("grid is non-empty");
    let outcome = SelectionOutcome::new(w.support(), data.support.iter().copied(), x.n_features())?;
    Ok(FdrReplicate {
        fdr: fdr(&outcome),
        lambda: grid[path.len() - 1],
        n_selected: outcome.selected.len(),
        flagged: !recovered(w),
    })
}

/// Mean Lasso FDR per ρ over `n_datasets` replicates of `base_spec`.
/// Replicate `r` at grid point `k` is seeded from
/// `derive_seed(base_spec.rng_seed, [k, r])`.
pub fn fdr_experiment(
    rho_grid: &[f64],
    n_datasets: usize,
    base_spec: &SynthSpec,
) -> Result<Vec<FdrPoint>> {
    rho_grid
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            let reps: Vec<FdrReplicate> = (0..n_datasets)
                .into_par_iter()
                .map(|r| {
                    let spec = SynthSpec {
                        rho,
                        rng_seed: rng::derive_seed(base_spec.rng_seed, &[k as u64, r as u64]),
                        ..base_spec.clone()
                    };
                    fdr_replicate(&generate(&spec)?)
                })
                .collect::<Result<_>>()?;
            let values: Vec<f64> = reps.iter().map(|r| r.fdr).collect();
            let (mean, se) = mean_and_se(&values);
            Ok(FdrPoint {
                rho,
                mean_fdr: mean,
                se_fdr: se,
                n_datasets,
                n_flagged: reps.iter().filter(|r| r.flagged).count(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: CovarianceFamily, n_s: usize, rho: f64) -> SynthSpec {
        SynthSpec {
            m: 50,
            n: n_s + 10,
            n_s,
            rho,
            w_s: 0.3,
            noise_var: 1.0,
            family,
            sign_pattern: SignPattern::Random,
            rng_seed: 3,
        }
    }

    #[test]
    fn pairwise_two_features() {
        let s = spec(CovarianceFamily::Pairwise, 2, 0.5);
        let c = build_covariance(&s, &mut rng::seeded(0)).unwrap();
        assert_eq!(c.sigma, ndarray::array![[1.0, 0.5], [0.5, 1.0]]);
    }

    #[test]
    fn block_diagonal_four_features() {
        let s = spec(CovarianceFamily::BlockDiagonal { n_blocks: 2 }, 4, 0.9);
        let c = build_covariance(&s, &mut rng::seeded(0)).unwrap();
        let expect = ndarray::array![
            [1.0, 0.9, 0.0, 0.0],
            [0.9, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.9],
            [0.0, 0.0, 0.9, 1.0]
        ];
        assert_eq!(c.sigma, expect);
    }

    #[test]
    fn erdos_renyi_at_stated_maximum_is_positive_definite() {
        let s = spec(
            CovarianceFamily::ErdosRenyi {
                p_connect: 5.0 / 29.0,
            },
            30,
            0.3,
        );
        for seed in 0..20 {
            assert!(build_covariance(&s, &mut rng::seeded(seed)).is_ok());
        }
    }

    #[test]
    fn impossible_covariance_errors_after_retries() {
        // A complete graph is never resampled away; ρ close to 1 with a
        // dense graph stays PD, but a random-pairwise coupling of 0.95 to two
        // partners cannot be.
        let s = spec(
            CovarianceFamily::RandomPairwise {
                n_coupled: 5,
                partners: 2,
                coupling: Some(0.95),
            },
            4,
            0.1,
        );
        let err = build_covariance(&s, &mut rng::seeded(0)).unwrap_err();
        assert!(matches!(err, Error::Covariance(_)));
    }

    #[test]
    fn balanced_signs_sum_to_zero() {
        let mut s = spec(CovarianceFamily::Pairwise, 10, 0.2);
        s.sign_pattern = SignPattern::Balanced;
        let d = generate(&s).unwrap();
        let sum: f64 = d
            .w_true
            .0
            .iter()
            .map(|v| v.signum() * (v.abs() > 0.0) as u8 as f64)
            .sum();
        assert_eq!(sum, 0.0);
        assert_eq!(d.w_true.support(), d.support);
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(CovarianceFamily::ErdosRenyi { p_connect: 0.2 }, 8, 0.3);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(CovarianceFamily::Pairwise, 5, 0.2);
        s.n_s = s.n + 1;
        assert!(s.validate().is_err());
        let s = spec(CovarianceFamily::Pairwise, 5, 1.0);
        assert!(s.validate().is_err());
        let s = spec(CovarianceFamily::BlockDiagonal { n_blocks: 9 }, 5, 0.2);
        assert!(s.validate().is_err());
    }

    #[test]
    fn chunks_differ_by_at_most_one() {
        let sizes: Vec<usize> = equal_chunks(11, 3).iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
    }

    #[test]
    fn fdr_replicate_with_strong_signal_is_clean() {
        let s = SynthSpec {
            m: 200,
            n: 40,
            n_s: 4,
            rho: 0.0,
            w_s: 1.0,
            noise_var: 0.01,
            family: CovarianceFamily::Pairwise,
            sign_pattern: SignPattern::Random,
            rng_seed: 11,
        };
        let rep = fdr_replicate(&generate(&s).unwrap()).unwrap();
        assert!(!rep.flagged);
        assert_eq!(rep.fdr, 0.0);
    }
}
