//! Recursive halfspace partitioning: whiten the cell, reweight, pick a direction,
//! cut at the largest gap, recurse on both sides.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isotropy::{estimate_moments, whiten_relative, DEFAULT_RELATIVE_FLOOR};
use crate::linalg::sym_eigen;
use crate::mixture::AffineMap;
use crate::reweighting::sample_reweighted_moments;
use crate::rng::rng_from;
use crate::separator::{choose_direction_with, Method, SeparatorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnravelConfig {
    pub k: usize,
    pub wmin: f64,
    /// Reweighting scale; `None` means `n / wmin`.
    pub alpha: Option<f64>,
    /// Points per node used for whitening and the reweighted moments.
    pub m1: usize,
    /// Points per node used for the gap test, disjoint from the first `m1`.
    pub m2: usize,
    pub seed: u64,
    pub max_depth: usize,
    /// Whitening eigenvalue floor, relative to the largest eigenvalue of the cell.
    pub eps_floor: f64,
    pub separator: SeparatorConfig,
}

impl UnravelConfig {
    /// Defaults: `alpha = n / wmin`, `max_depth = 2k`, relative floor `1e-8`.
    pub fn new(k: usize, wmin: f64, m1: usize, m2: usize, seed: u64) -> Self {
        Self {
            k,
            wmin,
            alpha: None,
            m1,
            m2,
            seed,
            max_depth: 2 * k,
            eps_floor: DEFAULT_RELATIVE_FLOOR,
            separator: SeparatorConfig::default(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(self.wmin > 0.0 && self.wmin <= 1.0 / self.k as f64 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "wmin = {} must lie in (0, 1/k] with k = {}",
                self.wmin, self.k
            )));
        }
        if self.m1 < n + 1 || self.m2 < n + 1 {
            return Err(Error::InvalidArgument(format!(
                "m1 = {} and m2 = {} must both be at least n + 1 = {}",
                self.m1,
                self.m2,
                n + 1
            )));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidArgument(format!("alpha must be positive, got {a}")));
            }
        }
        if !(self.eps_floor > 0.0) {
            return Err(Error::InvalidArgument("eps_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn alpha_for(&self, n: usize) -> f64 {
        self.alpha.unwrap_or(n as f64 / self.wmin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafReason {
    SingleComponent,
    NoGap,
    Starved,
    MaxDepth,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    #[serde(with = "crate::io::vector_format")]
    pub h: DVector<f64>,
    pub t: f64,
    /// Map from original coordinates to the whitened frame of this cell.
    pub whiten: AffineMap,
    pub direction: Method,
    pub mean_shift_norm: f64,
    pub threshold: f64,
    pub gap: f64,
    pub count: usize,
    pub left: Box<Node>,
    pub right: Box<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub leaf: usize,
    /// A point of the cell, in original coordinates.
    #[serde(with = "crate::io::vector_format")]
    pub witness: DVector<f64>,
    pub count: usize,
    pub reason: LeafReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split(Split),
    Leaf(Leaf),
}

/// Tree of halfspace tests; every leaf is a polyhedral cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolyhedralPartition {
    pub root: Node,
}

impl PolyhedralPartition {
    pub fn leaves(&self) -> usize {
        fn count(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 1,
                Node::Split(s) => count(&s.left) + count(&s.right),
            }
        }
        count(&self.root)
    }

    pub fn dim(&self) -> usize {
        match &self.root {
            Node::Leaf(l) => l.witness.len(),
            Node::Split(s) => s.h.len(),
        }
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 0,
                Node::Split(s) => 1 + depth(&s.left).max(depth(&s.right)),
            }
        }
        depth(&self.root)
    }

    /// Splits in depth-first order.
    pub fn splits(&self) -> Vec<&Split> {
        fn walk<'a>(n: &'a Node, out: &mut Vec<&'a Split>) {
            if let Node::Split(s) = n {
                out.push(s);
                walk(&s.left, out);
                walk(&s.right, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Number of splits that used the mean-shift and the spectral direction.
    pub fn method_counts(&self) -> (usize, usize) {
        let s = self.splits();
        let ms = s.iter().filter(|s| s.direction == Method::MeanShift).count();
        (ms, s.len() - ms)
    }

    /// Leaves in depth-first order.
    pub fn leaf_nodes(&self) -> Vec<&Leaf> {
        fn walk<'a>(n: &'a Node, out: &mut Vec<&'a Leaf>) {
            match n {
                Node::Leaf(l) => out.push(l),
                Node::Split(s) => {
                    walk(&s.left, out);
                    walk(&s.right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    fn renumber(&mut self) {
        fn walk(n: &mut Node, next: &mut usize) {
            match n {
                Node::Leaf(l) => {
                    l.leaf = *next;
                    *next += 1;
                }
                Node::Split(s) => {
                    walk(&mut s.left, next);
                    walk(&mut s.right, next);
                }
            }
        }
        walk(&mut self.root, &mut 0);
    }
}

/// Right child when `h^T (W x + b) >= t`.
#[inline]
pub fn goes_right(split: &Split, x: &DVector<f64>) -> bool {
    split.h.dot(&split.whiten.apply(x)) >= split.t
}

/// Leaf id of the cell containing `x`.
pub fn classify(partition: &PolyhedralPartition, x: &DVector<f64>) -> Result<usize> {
    if x.len() != partition.dim() {
        return Err(Error::DimensionMismatch {
            expected: partition.dim(),
            got: x.len(),
        });
    }
    let mut node = &partition.root;
    loop {
        match node {
            Node::Leaf(l) => return Ok(l.leaf),
            Node::Split(s) => node = if goes_right(s, x) { &s.right } else { &s.left },
        }
    }
}

/// Leaf id for every row of `points`.
pub fn classify_points(partition: &PolyhedralPartition, points: &DMatrix<f64>) -> Result<Vec<usize>> {
    use rayon::prelude::*;
    if points.ncols() != partition.dim() {
        return Err(Error::DimensionMismatch {
            expected: partition.dim(),
            got: points.ncols(),
        });
    }
    (0..points.nrows())
        .into_par_iter()
        .map(|i| classify(partition, &points.row(i).transpose()))
        .collect()
}

/// Midpoint of the largest gap between consecutive projections after clamping
/// them to `[-1/2, 1/2]`, or `None` when that gap is below `1 / (4 (k - 1))`.
///
/// Clamping keeps points beyond the interval as sentinels at its ends, so a cluster
/// pair sitting at `±1` yields the gap `[-1/2, 1/2]`; if every projection falls on the
/// same side outside the interval there is no gap at all. Equal gaps are broken by
/// the midpoint closest to zero, then the leftmost.
pub fn largest_gap_threshold(projections: &[f64], k: usize) -> Option<f64> {
    largest_gap(projections, k).map(|(t, _)| t)
}

/// As [`largest_gap_threshold`], also returning the gap width.
pub fn largest_gap(projections: &[f64], k: usize) -> Option<(f64, f64)> {
    if projections.len() < 2 || k < 2 {
        return None;
    }
    let mut v: Vec<f64> = projections
        .iter()
        .filter(|x| !x.is_nan())
        .map(|x| x.clamp(-0.5, 0.5))
        .collect();
    v.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for w in v.windows(2) {
        let gap = w[1] - w[0];
        let mid = 0.5 * (w[0] + w[1]);
        best = match best {
            Some((bg, bm)) if gap < bg || (gap == bg && mid.abs() >= bm.abs()) => Some((bg, bm)),
            _ => Some((gap, mid)),
        };
    }
    let (gap, mid) = best?;
    let required = 1.0 / (4.0 * (k - 1) as f64);
    (gap >= required).then_some((mid, gap))
}

/// How a node chooses its direction and frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Strategy {
    /// Whiten, reweight, mean shift or spectral direction.
    Unravel,
    /// Top principal component of the raw cell, projections standardized.
    Pca,
}

struct Job<'a> {
    config: &'a UnravelConfig,
    strategy: Strategy,
    n: usize,
}

/// Runs the recursive partitioning on `points` (one row per point).
pub fn unravel(points: &DMatrix<f64>, config: &UnravelConfig) -> Result<PolyhedralPartition> {
    run(points, config, Strategy::Unravel)
}

/// Same recursion, but each node cuts along the top principal component of its raw
/// points with no whitening or reweighting.
pub fn pca_partition(points: &DMatrix<f64>, config: &UnravelConfig) -> Result<PolyhedralPartition> {
    run(points, config, Strategy::Pca)
}

fn run(points: &DMatrix<f64>, config: &UnravelConfig, strategy: Strategy) -> Result<PolyhedralPartition> {
    let (m, n) = points.shape();
    config.validate(n)?;
    if m < config.m1 + config.m2 {
        return Err(Error::InsufficientSamples {
            need: config.m1 + config.m2,
            got: m,
        });
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("points contain non-finite values".into()));
    }
    let job = Job { config, strategy, n };
    let rows: Vec<usize> = (0..m).collect();
    let mut partition = PolyhedralPartition {
        root: node(&job, points, rows, &[])?,
    };
    partition.renumber();
    Ok(partition)
}

fn leaf(points: &DMatrix<f64>, rows: &[usize], reason: LeafReason) -> Node {
    Node::Leaf(Leaf {
        leaf: 0,
        witness: points.row(rows[0]).transpose(),
        count: rows.len(),
        reason,
    })
}

fn gather(points: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), points.ncols(), |i, j| points[(rows[i], j)])
}

/// Sizes of the two disjoint subsets drawn from a cell of `count` points: the
/// configured budgets when they fit, otherwise the same proportions.
fn split_sizes(count: usize, m1: usize, m2: usize) -> (usize, usize) {
    if count >= m1 + m2 {
        (m1, m2)
    } else {
        let a = count * m1 / (m1 + m2);
        (a, count - a)
    }
}

fn node(job: &Job, points: &DMatrix<f64>, mut rows: Vec<usize>, path: &[u64]) -> Result<Node> {
    let config = job.config;
    let n = job.n;
    let depth = path.len();
    if config.k == 1 {
        return Ok(leaf(points, &rows, LeafReason::SingleComponent));
    }
    if depth >= config.max_depth {
        log::warn!("node {path:?}: maximum depth {} reached", config.max_depth);
        return Ok(leaf(points, &rows, LeafReason::MaxDepth));
    }
    let (s1, s2) = split_sizes(rows.len(), config.m1, config.m2);
    if s1 < n + 1 || s2 < n + 1 {
        log::warn!("node {path:?}: {} points cannot feed a split", rows.len());
        return Ok(leaf(points, &rows, LeafReason::Starved));
    }
    let mut order = rows.clone();
    order.shuffle(&mut rng_from(config.seed, path));
    let first = gather(points, &order[..s1]);
    let second = gather(points, &order[s1..s1 + s2]);

    let (map, h, method, mean_shift_norm, threshold) = match job.strategy {
        Strategy::Unravel => {
            let w = match whiten_relative(&first, config.eps_floor) {
                Ok(w) => w,
                Err(Error::DegenerateCell { .. }) => {
                    log::warn!("node {path:?}: degenerate cell");
                    return Ok(leaf(points, &rows, LeafReason::Degenerate));
                }
                Err(e) => return Err(e),
            };
            let moments = sample_reweighted_moments(&w.points, config.alpha_for(n))?;
            let choice = match choose_direction_with(&moments, config.wmin, &config.separator) {
                Ok(c) => c,
                Err(Error::NoDirection) => return Ok(leaf(points, &rows, LeafReason::Degenerate)),
                Err(e) => return Err(e),
            };
            (w.map, choice.h, choice.method, choice.mean_shift_norm, choice.threshold)
        }
        Strategy::Pca => {
            let est = estimate_moments(&first)?;
            let eig = sym_eigen(&est.covariance);
            let scale = eig.values[0].sqrt();
            if !(scale > 0.0) {
                return Ok(leaf(points, &rows, LeafReason::Degenerate));
            }
            let map = AffineMap {
                linear: DMatrix::identity(n, n) / scale,
                offset: -&est.mean / scale,
            };
            (map, eig.vectors.column(0).into_owned(), Method::Spectral, 0.0, 0.0)
        }
    };

    let projected = map.apply_points(&second) * &h;
    let Some((t, gap)) = largest_gap(projected.as_slice(), config.k) else {
        return Ok(leaf(points, &rows, LeafReason::NoGap));
    };
    let (right_rows, left_rows): (Vec<usize>, Vec<usize>) = rows
        .drain(..)
        .partition(|&r| h.dot(&map.apply(&points.row(r).transpose())) >= t);
    if left_rows.is_empty() || right_rows.is_empty() {
        rows = if left_rows.is_empty() { right_rows } else { left_rows };
        return Ok(leaf(points, &rows, LeafReason::NoGap));
    }
    let count = left_rows.len() + right_rows.len();
    let left_path: Vec<u64> = path.iter().copied().chain([1]).collect();
    let right_path: Vec<u64> = path.iter().copied().chain([2]).collect();
    let (left, right) = rayon::join(
        || node(job, points, left_rows, &left_path),
        || node(job, points, right_rows, &right_path),
    );
    Ok(Node::Split(Split {
        h,
        t,
        whiten: map,
        direction: method,
        mean_shift_norm,
        threshold,
        gap,
        count,
        left: Box::new(left?),
        right: Box::new(right?),
    }))
}
