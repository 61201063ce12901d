//! Nearest-neighbor extension of a clustered subsample to the whole space.
//!
//! A second sample estimates the Voronoi mass of every subsample point, the
//! subsample is clustered under those weighted capacities, and a query is sent
//! to the clusters of its nearest subsample point.

use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bicriteria::bicriteria_cluster_weighted;
use crate::error::{Error, Result};
use crate::eval::{check_capacities, ViolationReport};
use crate::kmeanspp::{kmeanspp_balanced, SeedingConfig};
use crate::model::{sq_euclid, Assignment, Constraints, Instance, Objective, PointSet, Slot};
use crate::persist::{Decoder, Encoder, Tag};

/// Largest subsample served by exact search under [`Backend::Auto`].
pub const EXACT_NN_LIMIT: usize = 4096;
pub const DEFAULT_LEAF_SIZE: usize = 32;

/// A fitted routing rule from vectors to cluster ids.
pub trait Router: Send + Sync {
    /// Number of cluster ids the rule can produce.
    fn k(&self) -> usize;

    /// Sorted cluster ids for `x`, repeated when a cluster holds several replicas.
    fn route(&self, x: &[f64]) -> Vec<usize>;

    /// Binary encoding including the `BDSP1` header.
    fn encode(&self) -> Encoder;

    fn route_all(&self, points: &PointSet) -> Vec<Vec<usize>> {
        points
            .as_slice()
            .par_chunks(points.dim())
            .map(|x| self.route(x))
            .collect()
    }
}

/// Fraction of `points` routed to each cluster; sums to the replication factor.
pub fn empirical_masses(router: &dyn Router, points: &PointSet) -> Vec<f64> {
    let mut counts = vec![0u64; router.k()];
    for ids in router.route_all(points) {
        for c in ids {
            counts[c] += 1;
        }
    }
    let n = points.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Three standard errors of a Bernoulli proportion `m` estimated from `n` draws.
pub fn three_sigma(m: f64, n: usize) -> f64 {
    3.0 * (m.clamp(0.0, 1.0) * (1.0 - m.clamp(0.0, 1.0)) / n.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEstimate {
    /// `ŵ_i = |S′_i| / n′`.
    pub w_hat: Vec<f64>,
    /// `|S′_i|`.
    pub counts: Vec<u64>,
    pub n_prime: usize,
}

/// `⌈2(n + ln(1/δ)) / ε²⌉`.
pub fn second_sample_size(n: usize, eps: f64, delta: f64) -> usize {
    (2.0 * (n as f64 + (1.0 / delta).ln()) / (eps * eps)).ceil() as usize
}

/// Counts the second-sample points whose nearest subsample point is each `x_i`.
pub fn estimate_weights(s: &PointSet, s_prime: &PointSet) -> Result<WeightEstimate> {
    if s.is_empty() {
        return Err(Error::invalid("subsample is empty"));
    }
    if s_prime.is_empty() {
        return Err(Error::invalid("second sample is empty"));
    }
    if s.dim() != s_prime.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            found: s_prime.dim(),
        });
    }
    let nearest: Vec<usize> = s_prime
        .as_slice()
        .par_chunks(s.dim())
        .map(|x| s.nearest(x))
        .collect();
    let mut counts = vec![0u64; s.len()];
    for i in nearest {
        counts[i] += 1;
    }
    let n_prime = s_prime.len();
    let w_hat = counts.iter().map(|&c| c as f64 / n_prime as f64).collect();
    Ok(WeightEstimate {
        w_hat,
        counts,
        n_prime,
    })
}

/// Mean of `d(x, NN_S(x))^power` over the holdout.
pub fn estimate_alpha(s: &PointSet, holdout: &PointSet, power: u32) -> Result<f64> {
    if !(1..=2).contains(&power) {
        return Err(Error::invalid("power must be 1 or 2"));
    }
    if holdout.is_empty() || s.is_empty() {
        return Err(Error::invalid("empty subsample or holdout"));
    }
    let total: f64 = holdout
        .as_slice()
        .par_chunks(holdout.dim())
        .map(|x| {
            let d2 = sq_euclid(s.row(s.nearest(x)), x);
            if power == 2 {
                d2
            } else {
                d2.sqrt()
            }
        })
        .sum();
    Ok(total / holdout.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RpNode {
    Split {
        dir: Vec<f64>,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Vec<usize>),
}

/// Random projection tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RpTree {
    pub leaf_size: usize,
    pub nodes: Vec<RpNode>,
}

fn unit_direction(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Splits at the lower median of the projections by rank, so the left child
/// holds `⌈m/2⌉` of `m` points and the depth is at most `⌈log₂(n/leaf_size)⌉ + 1`.
/// Queries branch at the midpoint between the median and its successor.
pub fn build_rptree(points: &PointSet, leaf_size: usize, rng: &mut impl Rng) -> Result<RpTree> {
    if leaf_size == 0 {
        return Err(Error::invalid("leaf_size must be at least 1"));
    }
    if points.is_empty() {
        return Err(Error::invalid("cannot index an empty point set"));
    }
    let mut nodes = vec![RpNode::Leaf(Vec::new())];
    let mut stack = vec![(0usize, (0..points.len()).collect::<Vec<usize>>())];
    while let Some((slot, idx)) = stack.pop() {
        if idx.len() <= leaf_size {
            nodes[slot] = RpNode::Leaf(idx);
            continue;
        }
        let dir = unit_direction(points.dim(), rng);
        let mut proj: Vec<(f64, usize)> =
            idx.iter().map(|&i| (dot(&dir, points.row(i)), i)).collect();
        proj.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let m = (proj.len() - 1) / 2;
        let threshold = 0.5 * (proj[m].0 + proj[m + 1].0);
        let left_idx: Vec<usize> = proj[..=m].iter().map(|&(_, i)| i).collect();
        let right_idx: Vec<usize> = proj[m + 1..].iter().map(|&(_, i)| i).collect();
        let left = nodes.len();
        nodes.push(RpNode::Leaf(Vec::new()));
        let right = nodes.len();
        nodes.push(RpNode::Leaf(Vec::new()));
        nodes[slot] = RpNode::Split {
            dir,
            threshold,
            left,
            right,
        };
        stack.push((right, right_idx));
        stack.push((left, left_idx));
    }
    Ok(RpTree { leaf_size, nodes })
}

impl RpTree {
    /// Leaf reached by `x`: left iff its projection is at most the threshold.
    pub fn leaf(&self, x: &[f64]) -> &[usize] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                RpNode::Split {
                    dir,
                    threshold,
                    left,
                    right,
                } => {
                    at = if dot(dir, x) <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                RpNode::Leaf(idx) => return idx,
            }
        }
    }

    /// Defeatist search: exact scan of the single leaf reached by `x`.
    pub fn nn_query(&self, points: &PointSet, x: &[f64]) -> usize {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for &i in self.leaf(x) {
            let d = sq_euclid(points.row(i), x);
            if d < best_d || (d == best_d && i < best) {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, d)) = stack.pop() {
            match &self.nodes[at] {
                RpNode::Split { left, right, .. } => {
                    stack.push((*left, d + 1));
                    stack.push((*right, d + 1));
                }
                RpNode::Leaf(_) => best = best.max(d),
            }
        }
        best
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[usize]> {
        self.nodes.iter().filter_map(|n| match n {
            RpNode::Leaf(idx) => Some(idx.as_slice()),
            RpNode::Split { .. } => None,
        })
    }

    fn encode(&self, e: &mut Encoder) {
        e.usize(self.leaf_size);
        e.usize(self.nodes.len());
        for node in &self.nodes {
            match node {
                RpNode::Split {
                    dir,
                    threshold,
                    left,
                    right,
                } => {
                    e.u8(0);
                    e.f64s(dir);
                    e.f64(*threshold);
                    e.usize(*left);
                    e.usize(*right);
                }
                RpNode::Leaf(idx) => {
                    e.u8(1);
                    e.usizes(idx);
                }
            }
        }
    }

    fn decode(d: &mut Decoder<'_>, n_points: usize, dim: usize) -> Result<Self> {
        let leaf_size = d.usize()?;
        let count = d.usize()?;
        let mut nodes = Vec::new();
        for _ in 0..count {
            nodes.push(match d.u8()? {
                0 => RpNode::Split {
                    dir: d.f64s()?,
                    threshold: d.f64()?,
                    left: d.usize()?,
                    right: d.usize()?,
                },
                1 => RpNode::Leaf(d.usizes()?),
                b => return Err(Error::Format(format!("unknown tree node kind {b}"))),
            });
        }
        let tree = RpTree { leaf_size, nodes };
        tree.check(n_points, dim)?;
        Ok(tree)
    }

    /// Children point forward, directions match `dim`, and leaves partition `0..n_points`.
    fn check(&self, n_points: usize, dim: usize) -> Result<()> {
        let mut seen = vec![false; n_points];
        for (at, node) in self.nodes.iter().enumerate() {
            match node {
                RpNode::Split {
                    dir, left, right, ..
                } => {
                    if dir.len() != dim
                        || *left <= at
                        || *right <= at
                        || *left >= self.nodes.len()
                        || *right >= self.nodes.len()
                    {
                        return Err(Error::Format(format!("malformed tree node {at}")));
                    }
                }
                RpNode::Leaf(idx) => {
                    for &i in idx {
                        if i >= n_points || std::mem::replace(&mut seen[i], true) {
                            return Err(Error::Format(format!(
                                "tree leaf index {i} is invalid or repeated"
                            )));
                        }
                    }
                }
            }
        }
        if self.nodes.is_empty() || seen.iter().any(|s| !s) {
            return Err(Error::Format(
                "tree leaves do not cover the subsample".into(),
            ));
        }
        Ok(())
    }
}

/// Nearest-neighbor search strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    /// Exact up to [`EXACT_NN_LIMIT`] subsample points, rp-tree beyond.
    Auto,
    Exact,
    RpTree {
        leaf_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum NnIndex {
    Exact,
    RpTree(RpTree),
}

/// Clustering path used on the subsample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitAlgo {
    Kmeanspp,
    LpRound(Objective),
}

impl FromStr for FitAlgo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeanspp" => Ok(FitAlgo::Kmeanspp),
            "lp-round" => Ok(FitAlgo::LpRound(Objective::KMedian)),
            _ => Err(Error::invalid(format!("unknown fit algorithm {s:?}"))),
        }
    }
}

/// Clustered subsample with a nearest-neighbor index. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatcher {
    pub constraints: Constraints,
    pub subsample: PointSet,
    /// Sorted cluster ids of each subsample point, `p` with multiplicity.
    pub groups: Vec<Vec<usize>>,
    /// Estimated mass of each subsample point.
    pub weights: Vec<f64>,
    pub index: NnIndex,
    num_clusters: usize,
}

impl Dispatcher {
    pub fn new(
        constraints: Constraints,
        subsample: PointSet,
        groups: Vec<Vec<usize>>,
        weights: Vec<f64>,
        backend: Backend,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let index = match backend {
            Backend::Exact => NnIndex::Exact,
            Backend::Auto if subsample.len() <= EXACT_NN_LIMIT => NnIndex::Exact,
            Backend::Auto => NnIndex::RpTree(build_rptree(&subsample, DEFAULT_LEAF_SIZE, rng)?),
            Backend::RpTree { leaf_size } => {
                NnIndex::RpTree(build_rptree(&subsample, leaf_size, rng)?)
            }
        };
        Self::from_parts(constraints, subsample, groups, weights, index)
    }

    fn from_parts(
        constraints: Constraints,
        subsample: PointSet,
        mut groups: Vec<Vec<usize>>,
        weights: Vec<f64>,
        index: NnIndex,
    ) -> Result<Self> {
        let n = subsample.len();
        if n == 0 {
            return Err(Error::invalid("subsample is empty"));
        }
        if groups.len() != n || weights.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if groups.len() != n {
                    groups.len()
                } else {
                    weights.len()
                },
            });
        }
        for g in &mut groups {
            g.sort_unstable();
            if g.len() != constraints.p {
                return Err(Error::invalid(format!(
                    "every subsample point needs {} cluster ids",
                    constraints.p
                )));
            }
        }
        let num_clusters = groups
            .iter()
            .flatten()
            .max()
            .map_or(0, |&m| m + 1)
            .max(constraints.k);
        Ok(Self {
            constraints,
            subsample,
            groups,
            weights,
            index,
            num_clusters,
        })
    }

    /// Index of the (possibly approximate) nearest subsample point.
    pub fn nearest(&self, x: &[f64]) -> usize {
        match &self.index {
            NnIndex::Exact => self.subsample.nearest(x),
            NnIndex::RpTree(t) => t.nn_query(&self.subsample, x),
        }
    }

    pub fn dispatch(&self, x: &[f64]) -> &[usize] {
        &self.groups[self.nearest(x)]
    }

    /// Subsample clustering as an assignment; centers are cluster ids.
    pub fn assignment(&self) -> Assignment {
        Assignment {
            centers: (0..self.num_clusters)
                .map(crate::model::Center::Point)
                .collect(),
            assign: self
                .groups
                .iter()
                .map(|g| {
                    let mut slots: Vec<Slot> = Vec::new();
                    for &c in g {
                        match slots.last_mut() {
                            Some(s) if s.c == c => s.m += 1,
                            _ => slots.push(Slot { c, m: 1 }),
                        }
                    }
                    slots
                })
                .collect(),
        }
    }

    /// Weighted capacities of the subsample clustering under the estimated masses.
    pub fn fit_report(&self) -> ViolationReport {
        check_capacities(&self.assignment(), &self.constraints, Some(&self.weights))
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let k = d.usize()?;
        let p = d.usize()?;
        let ell = d.f64()?;
        let cap_l = d.f64()?;
        let constraints = Constraints::new(k, p, ell, cap_l)?;
        let subsample = d.points()?;
        let flat = d.usizes()?;
        if flat.len() != subsample.len() * p {
            return Err(Error::Format(
                "cluster table does not match the subsample".into(),
            ));
        }
        let groups = flat.chunks(p.max(1)).map(<[usize]>::to_vec).collect();
        let weights = d.f64s()?;
        let index = match d.u8()? {
            0 => NnIndex::Exact,
            1 => NnIndex::RpTree(RpTree::decode(d, subsample.len(), subsample.dim())?),
            b => return Err(Error::Format(format!("unknown index kind {b}"))),
        };
        Self::from_parts(constraints, subsample, groups, weights, index)
    }
}

impl Router for Dispatcher {
    fn k(&self) -> usize {
        self.num_clusters
    }

    fn route(&self, x: &[f64]) -> Vec<usize> {
        self.dispatch(x).to_vec()
    }

    /// Layout after the header: `k, p, ell, cap_l`, the subsample, the flat
    /// `n·p` cluster table, the weights, then the index (`0` exact, `1` tree).
    fn encode(&self) -> Encoder {
        let mut e = Encoder::with_header(Tag::NearestNeighbor);
        let c = &self.constraints;
        e.usize(c.k);
        e.usize(c.p);
        e.f64(c.ell);
        e.f64(c.cap_l);
        e.points(&self.subsample);
        e.usizes(&self.groups.concat());
        e.f64s(&self.weights);
        match &self.index {
            NnIndex::Exact => e.u8(0),
            NnIndex::RpTree(t) => {
                e.u8(1);
                t.encode(&mut e);
            }
        }
        e
    }
}

/// Decodes any persisted dispatcher by its type tag.
pub fn load_router(bytes: &[u8]) -> Result<Box<dyn Router>> {
    use crate::baselines::{BptDispatcher, LshDispatcher, RandomDispatcher};
    let mut d = Decoder::new(bytes);
    let router: Box<dyn Router> = match d.header()? {
        Tag::NearestNeighbor => Box::new(Dispatcher::decode(&mut d)?),
        Tag::Random => Box::new(RandomDispatcher::decode(&mut d)?),
        Tag::PartitionTree => Box::new(BptDispatcher::decode(&mut d)?),
        Tag::Lsh => Box::new(LshDispatcher::decode(&mut d)?),
    };
    d.finish()?;
    Ok(router)
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub dispatcher: Dispatcher,
    pub estimate: WeightEstimate,
    pub report: ViolationReport,
}

/// Estimates weights from `s_prime`, clusters `s` under weighted capacities and
/// indexes it for nearest-neighbor routing.
pub fn fit_dispatcher(
    s: &PointSet,
    s_prime: &PointSet,
    constraints: &Constraints,
    algo: FitAlgo,
    backend: Backend,
    rng: &mut impl Rng,
) -> Result<FitOutput> {
    constraints.validate()?;
    let estimate = estimate_weights(s, s_prime)?;
    let groups: Vec<Vec<usize>> = match algo {
        FitAlgo::Kmeanspp => {
            if constraints.p != 1 {
                return Err(Error::Unsupported("the kmeanspp fit needs p = 1".into()));
            }
            let out = kmeanspp_balanced(
                s,
                constraints,
                &SeedingConfig::new(constraints.k),
                rng,
                Some(&estimate.w_hat),
            )?;
            out.partition.labels.iter().map(|&c| vec![c]).collect()
        }
        FitAlgo::LpRound(objective) => {
            if constraints.p < 2 {
                return Err(Error::Unsupported("the lp-round fit needs p >= 2".into()));
            }
            let inst = Instance::from_points(s.clone())?;
            let out = bicriteria_cluster_weighted(&inst, constraints, objective, &estimate.counts)?;
            out.assignment
                .assign
                .iter()
                .map(|slots| {
                    slots
                        .iter()
                        .flat_map(|s| std::iter::repeat_n(s.c, s.m as usize))
                        .collect()
                })
                .collect()
        }
    };
    let dispatcher = Dispatcher::new(
        *constraints,
        s.clone(),
        groups,
        estimate.w_hat.clone(),
        backend,
        rng,
    )?;
    let report = dispatcher.fit_report();
    Ok(FitOutput {
        dispatcher,
        estimate,
        report,
    })
}
