//! Partition error against ground truth and the experiment harnesses built on it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clusterer::{classify_points, goes_right, pca_partition, unravel, Node, PolyhedralPartition, UnravelConfig};
use crate::error::{Error, Result};
use crate::fisher::overlap;
use crate::mixture::{apply_affine, AffineMap, GaussianMixture, LabeledSample};
use crate::rng::derive_seed;

/// Misclassified mass under the best one-to-one matching of leaves to components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub error: f64,
    /// `confusion[leaf][component]`: fraction of the sample in that leaf and component.
    pub confusion: Vec<Vec<f64>>,
    /// Component matched to each leaf, if any.
    pub matching: Vec<Option<usize>>,
    pub leaves: usize,
    pub samples: usize,
}

/// Error of a leaf assignment against known labels.
pub fn labeled_error(leaf_ids: &[usize], labels: &[usize], leaves: usize, k: usize) -> Result<ErrorReport> {
    if leaf_ids.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: leaf_ids.len(),
        });
    }
    if leaf_ids.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let mut counts = vec![vec![0usize; k]; leaves];
    for (&l, &c) in leaf_ids.iter().zip(labels) {
        if l >= leaves || c >= k {
            return Err(Error::InvalidArgument(format!("leaf {l} or label {c} out of range")));
        }
        counts[l][c] += 1;
    }
    let m = leaf_ids.len() as f64;
    let confusion: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / m).collect())
        .collect();
    let matching = max_weight_matching(&confusion);
    let matched: usize = matching
        .iter()
        .enumerate()
        .filter_map(|(l, c)| c.map(|c| counts[l][c]))
        .sum();
    Ok(ErrorReport {
        error: 1.0 - matched as f64 / m,
        confusion,
        matching,
        leaves,
        samples: leaf_ids.len(),
    })
}

/// Error of a partition on an already drawn labeled sample.
pub fn sample_error(partition: &PolyhedralPartition, sample: &LabeledSample, k: usize) -> Result<ErrorReport> {
    let ids = classify_points(partition, &sample.points)?;
    labeled_error(&ids, &sample.labels, partition.leaves(), k)
}

/// Monte Carlo error of `partition` on `m_eval` fresh points from `mix`.
pub fn partition_error(partition: &PolyhedralPartition, mix: &GaussianMixture, m_eval: usize, seed: u64) -> Result<ErrorReport> {
    if m_eval < 1000 {
        return Err(Error::InvalidArgument(format!("m_eval = {m_eval} must be at least 1000")));
    }
    sample_error(partition, &mix.sample(m_eval, seed), mix.k())
}

/// Maximum-weight assignment of rows to columns of a nonnegative matrix. Every row
/// gets at most one column and vice versa; unmatched rows map to `None`.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let size = rows.max(cols);
    if size == 0 {
        return Vec::new();
    }
    let top = weights.iter().flatten().copied().fold(0.0_f64, f64::max);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            top - weights[i][j]
        } else {
            top
        }
    };
    let assign = hungarian(size, cost);
    (0..rows)
        .map(|i| {
            let j = assign[i];
            (j < cols).then_some(j)
        })
        .collect()
}

/// Minimum-cost perfect assignment on a `size x size` cost matrix using the
/// shortest augmenting path formulation with potentials. Returns the column of
/// each row.
fn hungarian(size: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut p = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=size {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; size];
    for j in 1..=size {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Top-principal-component splitter with no isotropy or reweighting.
pub fn baseline_pca_cluster(points: &nalgebra::DMatrix<f64>, config: &UnravelConfig) -> Result<PolyhedralPartition> {
    pca_partition(points, config)
}

/// One row of an experiment summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub arm: String,
    pub error: f64,
    pub leaves: usize,
    pub mean_shift: usize,
    pub spectral: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub rows: Vec<TrialRow>,
    pub mean_error_original: f64,
    pub mean_error_transformed: f64,
    /// Baseline splitter run on the transformed arm.
    pub mean_error_baseline: f64,
}

/// Sample size and evaluation size for an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialBudget {
    pub trials: usize,
    pub m: usize,
    pub m_eval: usize,
}

fn row(trial: usize, arm: &str, p: &PolyhedralPartition, error: f64) -> TrialRow {
    let (mean_shift, spectral) = p.method_counts();
    TrialRow {
        trial,
        arm: arm.into(),
        error,
        leaves: p.leaves(),
        mean_shift,
        spectral,
    }
}

/// Per-trial seed shared by every arm of the trial.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, &[0x5452_4941, trial as u64])
}

/// Runs the algorithm on samples from `mix` and on the same samples pushed through
/// `map` (common random numbers), plus the baseline on the transformed arm.
pub fn affine_invariance_experiment(
    mix: &GaussianMixture,
    map: &AffineMap,
    config: &UnravelConfig,
    budget: TrialBudget,
) -> Result<InvarianceReport> {
    let mapped = apply_affine(mix, map)?;
    let factors = mix.cholesky_factors();
    let mapped_factors: Vec<_> = factors.iter().map(|f| &map.linear * f).collect();
    let per_trial: Vec<Result<[TrialRow; 3]>> = (0..budget.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(config.seed, trial);
            let eval_seed = derive_seed(seed, &[0x4556_414C]);
            let cfg = UnravelConfig { seed, ..config.clone() };
            let original = mix.sample_with_factors(&factors, budget.m, seed);
            let transformed = mapped.sample_with_factors(&mapped_factors, budget.m, seed);
            let eval_o = mix.sample_with_factors(&factors, budget.m_eval, eval_seed);
            let eval_t = mapped.sample_with_factors(&mapped_factors, budget.m_eval, eval_seed);
            let po = unravel(&original.points, &cfg)?;
            let pt = unravel(&transformed.points, &cfg)?;
            let pb = baseline_pca_cluster(&transformed.points, &cfg)?;
            Ok([
                row(trial, "original", &po, sample_error(&po, &eval_o, mix.k())?.error),
                row(trial, "transformed", &pt, sample_error(&pt, &eval_t, mix.k())?.error),
                row(trial, "baseline", &pb, sample_error(&pb, &eval_t, mix.k())?.error),
            ])
        })
        .collect();
    let mut rows = Vec::with_capacity(3 * budget.trials);
    for r in per_trial {
        rows.extend(r?);
    }
    let mean = |arm: &str| mean_interval(&arm_errors(&rows, arm)).0;
    Ok(InvarianceReport {
        mean_error_original: mean("original"),
        mean_error_transformed: mean("transformed"),
        mean_error_baseline: mean("baseline"),
        rows,
    })
}

/// Errors of one arm, in trial order.
pub fn arm_errors(rows: &[TrialRow], arm: &str) -> Vec<f64> {
    rows.iter().filter(|r| r.arm == arm).map(|r| r.error).collect()
}

/// Runs the algorithm alone on `trials` fresh samples from `mix`.
pub fn repeated_trials(mix: &GaussianMixture, config: &UnravelConfig, budget: TrialBudget) -> Result<Vec<(TrialRow, PolyhedralPartition)>> {
    (0..budget.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(config.seed, trial);
            let cfg = UnravelConfig { seed, ..config.clone() };
            let sample = mix.sample(budget.m, seed);
            let p = unravel(&sample.points, &cfg)?;
            let err = partition_error(&p, mix, budget.m_eval, derive_seed(seed, &[0x4556_414C]))?;
            Ok((row(trial, "unravel", &p, err.error), p))
        })
        .collect()
}

/// Runs the algorithm and the baseline splitter on the same samples from `mix`.
pub fn baseline_comparison(mix: &GaussianMixture, config: &UnravelConfig, budget: TrialBudget) -> Result<Vec<TrialRow>> {
    let per_trial: Vec<Result<[TrialRow; 2]>> = (0..budget.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(config.seed, trial);
            let cfg = UnravelConfig { seed, ..config.clone() };
            let sample = mix.sample(budget.m, seed);
            let eval = mix.sample(budget.m_eval, derive_seed(seed, &[0x4556_414C]));
            let pu = unravel(&sample.points, &cfg)?;
            let pb = baseline_pca_cluster(&sample.points, &cfg)?;
            Ok([
                row(trial, "unravel", &pu, sample_error(&pu, &eval, mix.k())?.error),
                row(trial, "baseline", &pb, sample_error(&pb, &eval, mix.k())?.error),
            ])
        })
        .collect();
    let mut rows = Vec::with_capacity(2 * budget.trials);
    for r in per_trial {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Sample mean and the half-width of a normal-approximation 95% interval.
pub fn mean_interval(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Ground-truth overlap at one node of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAudit {
    pub depth: usize,
    /// Components whose mean lies in the node's cell.
    pub components: Vec<usize>,
    /// Overlap of those components, re-normalized and put in isotropic position.
    pub overlap: f64,
    pub parent_overlap: Option<f64>,
}

impl NodeAudit {
    pub fn monotone(&self, tol: f64) -> bool {
        self.parent_overlap.is_none_or(|p| self.overlap <= p + tol)
    }
}

/// Routes each component by its mean through the tree and reports the overlap of
/// the sub-mixture reaching every node.
pub fn node_overlap_audit(partition: &PolyhedralPartition, mix: &GaussianMixture) -> Result<Vec<NodeAudit>> {
    fn walk(
        node: &Node,
        mix: &GaussianMixture,
        comps: Vec<usize>,
        depth: usize,
        parent: Option<f64>,
        out: &mut Vec<NodeAudit>,
    ) -> Result<()> {
        if comps.is_empty() {
            return Ok(());
        }
        let phi = if comps.len() == 1 {
            0.0
        } else {
            overlap(&mix.sub_mixture(&comps)?)?
        };
        out.push(NodeAudit {
            depth,
            components: comps.clone(),
            overlap: phi,
            parent_overlap: parent,
        });
        if let Node::Split(s) = node {
            let (right, left): (Vec<usize>, Vec<usize>) =
                comps.into_iter().partition(|&c| goes_right(s, &mix.means()[c]));
            walk(&s.left, mix, left, depth + 1, Some(phi), out)?;
            walk(&s.right, mix, right, depth + 1, Some(phi), out)?;
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(&partition.root, mix, (0..mix.k()).collect(), 0, None, &mut out)?;
    Ok(out)
}
