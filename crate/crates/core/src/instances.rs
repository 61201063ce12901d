//! Synthetic instance generators and the exact brute-force oracle.

use ordered_float::OrderedFloat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcf::balanced_assignment;
use crate::model::{Assignment, Constraints, DistMatrix, Instance, Objective, PointSet, Slot};

/// Off-diagonal intra-group distance when groups are perturbed.
pub const GROUP_EPS: f64 = 1e-6;

/// Largest number of center subsets the oracle will enumerate.
pub const ORACLE_SUBSET_LIMIT: u128 = 1_000_000;

/// A hub at distance 1 from `10·nl` leaves; leaves are pairwise at distance 2.
pub fn gen_star(nl: usize) -> Result<Instance> {
    if nl < 3 {
        return Err(Error::invalid(format!("star needs nl >= 3, got {nl}")));
    }
    let n = 10 * nl + 1;
    let d = DistMatrix::from_fn(n, |i, j| if i == 0 || j == 0 { 1.0 } else { 2.0 })?;
    Ok(Instance::from_matrix(d))
}

/// `k'` groups of `2·nl − 1` points; distance 0 within a group (or [`GROUP_EPS`]
/// when `perturb` is set) and 1 across groups. Labels are group ids.
pub fn gen_groups(k_prime: usize, nl: usize, perturb: bool) -> Result<Instance> {
    if nl < 2 || k_prime == 0 {
        return Err(Error::invalid("groups need k' >= 1 and nl >= 2"));
    }
    let size = 2 * nl - 1;
    let n = k_prime * size;
    let intra = if perturb { GROUP_EPS } else { 0.0 };
    let d = DistMatrix::from_fn(n, |i, j| if i / size == j / size { intra } else { 1.0 })?;
    Instance::from_matrix(d).with_labels((0..n).map(|i| (i / size) as i64).collect())
}

/// Parameters for a labeled mixture of isotropic Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub components: usize,
    pub dims: usize,
    pub sigma: f64,
    pub n: usize,
    pub labels: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            components: 20,
            dims: 5,
            sigma: 0.05,
            n: 2000,
            labels: 3,
        }
    }
}

/// Binary merge tree over `0..m`; leaves are `0..m`, internal nodes follow in merge order.
#[derive(Debug, Clone)]
struct Dendrogram {
    children: Vec<Option<(usize, usize)>>,
    leaves: Vec<usize>,
}

/// Complete-linkage agglomerative clustering; ties go to the lowest pair of cluster ids.
fn complete_linkage(points: &[Vec<f64>]) -> Dendrogram {
    let m = points.len();
    let mut children: Vec<Option<(usize, usize)>> = vec![None; m];
    let mut leaves = vec![1usize; m];
    let mut active: Vec<usize> = (0..m).collect();
    let mut dist: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| crate::model::euclid(&points[i], &points[j]))
                .collect()
        })
        .collect();
    while active.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a + 1..] {
                if dist[i][j] < best.0 {
                    best = (dist[i][j], i, j);
                }
            }
        }
        let (_, i, j) = best;
        let id = children.len();
        children.push(Some((i, j)));
        leaves.push(leaves[i] + leaves[j]);
        let row: Vec<f64> = (0..id).map(|u| dist[i][u].max(dist[j][u])).collect();
        for (u, r) in dist.iter_mut().enumerate() {
            r.push(row[u]);
        }
        let mut own = row;
        own.push(0.0);
        dist.push(own);
        active.retain(|&u| u != i && u != j);
        active.push(id);
    }
    Dendrogram { children, leaves }
}

/// Splits label ranges down the tree in proportion to leaf counts; leaves draw uniformly from their range.
fn hierarchical_labels(tree: &Dendrogram, labels: usize, rng: &mut impl Rng) -> Vec<i64> {
    let m = tree.children.iter().filter(|c| c.is_none()).count();
    let mut out = vec![0i64; m];
    let root = tree.children.len() - 1;
    let mut stack = vec![(root, 0usize, labels.max(1))];
    while let Some((node, start, count)) = stack.pop() {
        match tree.children[node] {
            None => out[node] = (start + rng.gen_range(0..count)) as i64,
            Some((l, r)) => {
                if count <= 1 {
                    stack.push((l, start, 1));
                    stack.push((r, start, 1));
                } else {
                    let share = count as f64 * tree.leaves[l] as f64 / tree.leaves[node] as f64;
                    let left = (share.round() as usize).clamp(1, count - 1);
                    stack.push((l, start, left));
                    stack.push((r, start + left, count - left));
                }
            }
        }
    }
    out
}

/// Equal-weight mixture with centers uniform in the unit cube; nearby components share labels.
pub fn gen_gaussian_mixture(cfg: &GmmConfig, rng: &mut impl Rng) -> Result<Instance> {
    if cfg.components == 0 || cfg.dims == 0 || cfg.n == 0 {
        return Err(Error::invalid("mixture needs components, dims and n >= 1"));
    }
    let centers: Vec<Vec<f64>> = (0..cfg.components)
        .map(|_| (0..cfg.dims).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let comp_labels = if cfg.components == 1 {
        vec![0]
    } else {
        hierarchical_labels(&complete_linkage(&centers), cfg.labels, rng)
    };
    let mut data = Vec::with_capacity(cfg.n * cfg.dims);
    let mut labels = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let c = rng.gen_range(0..cfg.components);
        for &mu in &centers[c] {
            let z: f64 = StandardNormal.sample(rng);
            data.push(mu + cfg.sigma * z);
        }
        labels.push(comp_labels[c]);
    }
    Instance::from_points(PointSet::new(cfg.dims, data)?)?.with_labels(labels)
}

/// Grid class of a point: the 4×4 cell of its first two coordinates over `[0, 10]²`.
pub fn grid_class(x: &[f64]) -> i64 {
    let cell = |v: f64| ((v / 2.5).floor() as i64).clamp(0, 3);
    4 * cell(x[0]) + cell(x[1])
}

/// Uniform on `[0,10]² × [0,1]^(dims−2)`, labeled by [`grid_class`].
pub fn gen_grid_rect(n: usize, dims: usize, rng: &mut impl Rng) -> Result<Instance> {
    if dims < 2 || n == 0 {
        return Err(Error::invalid("grid needs dims >= 2 and n >= 1"));
    }
    let mut data = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let start = data.len();
        data.push(rng.gen::<f64>() * 10.0);
        data.push(rng.gen::<f64>() * 10.0);
        data.extend((2..dims).map(|_| rng.gen::<f64>()));
        labels.push(grid_class(&data[start..start + 2]));
    }
    Instance::from_points(PointSet::new(dims, data)?)?.with_labels(labels)
}

/// Intended lower capacity for [`gen_two_gaussians`].
pub const TWO_GAUSSIAN_ELL: f64 = 0.1;
/// Intended upper capacity for [`gen_two_gaussians`].
pub const TWO_GAUSSIAN_CAP_L: f64 = 1.0;
/// Mixing weight of the far component (0.8·ℓ).
pub const TWO_GAUSSIAN_FAR_WEIGHT: f64 = 0.08;

/// Label rule of the two-Gaussian dataset.
pub fn two_gaussian_label(x: &[f64]) -> i64 {
    if x[0] <= 0.0 {
        -1
    } else if x[0] <= 5.0 {
        1
    } else {
        2
    }
}

/// Unit-variance Gaussians at `(0,0)` and `(10,0)`, the latter with weight 0.08.
pub fn gen_two_gaussians(n: usize, rng: &mut impl Rng) -> Result<Instance> {
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let cx = if rng.gen::<f64>() < TWO_GAUSSIAN_FAR_WEIGHT {
            10.0
        } else {
            0.0
        };
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        let x = [cx + z0, z1];
        labels.push(two_gaussian_label(&x));
        data.extend_from_slice(&x);
    }
    Instance::from_points(PointSet::new(2, data)?)?.with_labels(labels)
}

/// `C(n, k)` without overflow for the sizes the oracle cares about.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] != i + n - k) else {
            return out;
        };
        cur[i] += 1;
        for t in i + 1..k {
            cur[t] = cur[t - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    pub value: f64,
    pub assignment: Assignment,
}

fn oracle_for_centers(
    instance: &Instance,
    centers: &[usize],
    p: usize,
    lo: usize,
    hi: usize,
    objective: Objective,
    radii: &[f64],
) -> Result<Option<(f64, Vec<Vec<usize>>)>> {
    let n = instance.n();
    let k = centers.len();
    match objective {
        Objective::KMedian | Objective::KMeans => {
            let sq = objective == Objective::KMeans;
            balanced_assignment(n, k, p, lo, hi, |c, j| {
                let d = if sq {
                    instance.sq_dist(centers[c], j)
                } else {
                    instance.dist(centers[c], j)
                };
                Some(d)
            })
        }
        Objective::KCenter => {
            let solve = |r: f64| {
                balanced_assignment(n, k, p, lo, hi, |c, j| {
                    let d = instance.dist(centers[c], j);
                    (d <= r).then_some(d)
                })
            };
            if solve(radii[radii.len() - 1])?.is_none() {
                return Ok(None);
            }
            let (mut a, mut b) = (0usize, radii.len() - 1);
            if solve(radii[0])?.is_some() {
                b = 0;
            }
            while b - a > 1 {
                let mid = (a + b) / 2;
                if solve(radii[mid])?.is_some() {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            let (_, chosen) = solve(radii[b])?.expect("feasible at the bisection bound");
            Ok(Some((radii[b], chosen)))
        }
    }
}

/// Exact optimum over all `k`-subsets of points as centers, each point taking
/// `p` distinct centers and every center a load in `[⌈nℓ⌉, ⌊nL⌋]`.
///
/// Ties go to the lexicographically smallest center set.
pub fn brute_force_opt(
    instance: &Instance,
    constraints: &Constraints,
    objective: Objective,
) -> Result<OracleSolution> {
    constraints.validate()?;
    let n = instance.n();
    let k = constraints.k;
    if k > n {
        return Err(Error::Infeasible(format!("k = {k} exceeds n = {n}")));
    }
    let count = binomial(n, k);
    if count > ORACLE_SUBSET_LIMIT {
        return Err(Error::Unsupported(format!(
            "oracle would enumerate C({n}, {k}) = {count} center sets (limit {ORACLE_SUBSET_LIMIT})"
        )));
    }
    let (lo, hi) = constraints.load_bounds(n);
    let radii = instance.distinct_distances();
    let sets = subsets(n, k);
    let best = sets
        .par_iter()
        .enumerate()
        .map(|(rank, centers)| {
            oracle_for_centers(instance, centers, constraints.p, lo, hi, objective, &radii)
                .map(|r| r.map(|(v, a)| (OrderedFloat(v), rank, a)))
        })
        .try_reduce_with(|a, b| {
            Ok(match (a, b) {
                (Some(x), Some(y)) => Some(if (y.0, y.1) < (x.0, x.1) { y } else { x }),
                (x, None) => x,
                (None, y) => y,
            })
        })
        .transpose()?
        .flatten();
    let Some((value, rank, chosen)) = best else {
        return Err(Error::Infeasible(
            "no center set admits a balanced assignment".into(),
        ));
    };
    let assign = chosen
        .into_iter()
        .map(|cs| cs.into_iter().map(|c| Slot { c, m: 1 }).collect())
        .collect();
    Ok(OracleSolution {
        value: value.0,
        assignment: Assignment::from_point_centers(sets[rank].clone(), assign),
    })
}
