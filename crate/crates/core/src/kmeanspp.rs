//! k-means++ seeding with oversampling and greedy pruning, Lloyd iterations,
//! and the merge-then-split balancing heuristic.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{check_capacities, ViolationReport};
use crate::model::{ceil_tol, floor_tol, sq_euclid, Assignment, Center, Constraints, PointSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedingConfig {
    pub k: usize,
    /// Seeds drawn before pruning; `None` uses [`default_oversample`].
    pub oversample: Option<usize>,
    pub lloyd_iters: usize,
}

impl SeedingConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            oversample: None,
            lloyd_iters: 10,
        }
    }

    pub fn oversample_count(&self) -> usize {
        self.oversample
            .unwrap_or_else(|| default_oversample(self.k))
            .max(self.k)
    }
}

/// `k·⌈ln(k+1)⌉ + k`.
pub fn default_oversample(k: usize) -> usize {
    k * ((k as f64 + 1.0).ln().ceil() as usize) + k
}

fn weight(weights: Option<&[f64]>, j: usize) -> f64 {
    weights.map_or(1.0, |w| w[j])
}

/// D²-sampling of `m` distinct indices; the first is drawn by weight alone.
///
/// When every unchosen point coincides with a chosen one, the next index is
/// drawn uniformly among the unchosen.
pub fn dsquared_seed(
    points: &PointSet,
    m: usize,
    rng: &mut impl Rng,
    weights: Option<&[f64]>,
) -> Result<Vec<usize>> {
    let n = points.len();
    if m > n {
        return Err(Error::invalid(format!(
            "cannot draw {m} distinct seeds from {n} points"
        )));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: w.len(),
            });
        }
    }
    let mut chosen = Vec::with_capacity(m);
    if m == 0 {
        return Ok(chosen);
    }
    let mut taken = vec![false; n];
    let mut d2 = vec![f64::INFINITY; n];
    let first = sample_index(rng, (0..n).map(|j| weight(weights, j)));
    let mut next = first.unwrap_or_else(|| rng.gen_range(0..n));
    loop {
        chosen.push(next);
        taken[next] = true;
        if chosen.len() == m {
            return Ok(chosen);
        }
        let c = points.row(next);
        for (j, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_euclid(points.row(j), c));
        }
        let probs = (0..n).map(|j| {
            if taken[j] {
                0.0
            } else {
                weight(weights, j) * d2[j]
            }
        });
        next = match sample_index(rng, probs) {
            Some(j) => j,
            None => {
                let free: Vec<usize> = (0..n).filter(|&j| !taken[j]).collect();
                free[rng.gen_range(0..free.len())]
            }
        };
    }
}

/// Index drawn with probability proportional to the given nonnegative masses.
fn sample_index(rng: &mut impl Rng, masses: impl Iterator<Item = f64> + Clone) -> Option<usize> {
    let total: f64 = masses.clone().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let mut u = rng.gen::<f64>() * total;
    let mut last = None;
    for (j, m) in masses.enumerate() {
        if m > 0.0 {
            last = Some(j);
            if u < m {
                return Some(j);
            }
            u -= m;
        }
    }
    last
}

/// Deletes seeds one at a time, always the one whose removal raises the
/// nearest-center k-means cost least (ties to the earliest seed), until `k` remain.
pub fn greedy_prune(
    points: &PointSet,
    centers: &[usize],
    k: usize,
    weights: Option<&[f64]>,
) -> Vec<usize> {
    let n = points.len();
    let m = centers.len();
    if m <= k {
        return centers.to_vec();
    }
    let dist: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|j| centers.iter().map(move |&c| points.sq_dist(j, c)))
        .collect();
    let mut alive = vec![true; m];
    let best_two = |j: usize, alive: &[bool]| {
        let (mut b, mut s) = ((f64::INFINITY, usize::MAX), f64::INFINITY);
        for c in (0..m).filter(|&c| alive[c]) {
            let d = dist[j * m + c];
            if d < b.0 {
                s = b.0;
                b = (d, c);
            } else if d < s {
                s = d;
            }
        }
        (b.1, b.0, s)
    };
    let mut near: Vec<(usize, f64, f64)> = (0..n).map(|j| best_two(j, &alive)).collect();
    for _ in k..m {
        let mut delta = vec![0.0; m];
        for (j, &(c, b, s)) in near.iter().enumerate() {
            delta[c] += weight(weights, j) * (s - b);
        }
        let victim = (0..m)
            .filter(|&c| alive[c])
            .min_by(|&a, &b| delta[a].total_cmp(&delta[b]).then(a.cmp(&b)))
            .expect("more than k seeds alive");
        alive[victim] = false;
        for j in 0..n {
            if near[j].0 == victim || dist[j * m + victim] <= near[j].2 {
                near[j] = best_two(j, &alive);
            }
        }
    }
    (0..m).filter(|&c| alive[c]).map(|c| centers[c]).collect()
}

/// Nearest center per point (ties to the lowest center) and the weighted cost.
pub fn assign_nearest(
    points: &PointSet,
    centers: &[Vec<f64>],
    weights: Option<&[f64]>,
) -> (Vec<usize>, f64) {
    let near: Vec<(usize, f64)> = (0..points.len())
        .into_par_iter()
        .map(|j| {
            let x = points.row(j);
            let mut best = (0, f64::INFINITY);
            for (c, ctr) in centers.iter().enumerate() {
                let d = sq_euclid(x, ctr);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect();
    let cost = near
        .iter()
        .enumerate()
        .map(|(j, &(_, d))| weight(weights, j) * d)
        .sum();
    (near.into_iter().map(|(c, _)| c).collect(), cost)
}

fn centroid(
    points: &PointSet,
    members: impl Iterator<Item = usize>,
    weights: Option<&[f64]>,
) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; points.dim()];
    let mut mass = 0.0;
    for j in members {
        let w = weight(weights, j);
        for (s, v) in sum.iter_mut().zip(points.row(j)) {
            *s += w * v;
        }
        mass += w;
    }
    (mass > 0.0).then(|| sum.into_iter().map(|s| s / mass).collect())
}

/// Lloyd iterations; a center that loses all its points keeps its position.
///
/// Fails if the cost ever increases beyond rounding noise.
pub fn lloyd(
    points: &PointSet,
    mut centers: Vec<Vec<f64>>,
    iters: usize,
    weights: Option<&[f64]>,
) -> Result<Vec<Vec<f64>>> {
    let k = centers.len();
    let (mut labels, mut cost) = assign_nearest(points, &centers, weights);
    for _ in 0..iters {
        for (c, ctr) in centers.iter_mut().enumerate() {
            if let Some(m) = centroid(
                points,
                (0..labels.len()).filter(|&j| labels[j] == c),
                weights,
            ) {
                *ctr = m;
            }
        }
        let (next, next_cost) = assign_nearest(points, &centers, weights);
        if next_cost > cost * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::invariant(format!(
                "Lloyd cost rose from {cost} to {next_cost}"
            )));
        }
        let stable = next == labels;
        labels = next;
        cost = next_cost;
        if stable {
            break;
        }
    }
    debug_assert_eq!(centers.len(), k);
    Ok(centers)
}

/// Clusters as labels plus one center per label.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
}

impl Partition {
    pub fn loads(&self, weights: Option<&[f64]>) -> Vec<f64> {
        let mut l = vec![0.0; self.centers.len()];
        for (j, &c) in self.labels.iter().enumerate() {
            l[c] += weight(weights, j);
        }
        l
    }
}

/// Merges clusters lighter than the lower bound into the cluster with the nearest
/// center (lightest first, ties by index), then splits clusters heavier than the
/// upper bound into random parts.
///
/// Unweighted, loads are counts and bounds are `⌈ℓn⌉ .. ⌊Ln⌋`; parts of a split
/// cluster differ in size by at most one, which meets both bounds exactly.
/// Weighted, loads are `Σ w` against `[ℓ, L]`; parts are filled greedily by
/// least load and the outcome is best effort.
pub fn balance_heuristic(
    points: &PointSet,
    partition: Partition,
    ell: f64,
    cap_l: f64,
    rng: &mut impl Rng,
    weights: Option<&[f64]>,
) -> Result<Partition> {
    let n = points.len();
    let (lo, hi) = match weights {
        None => (ceil_tol(ell * n as f64), floor_tol(cap_l * n as f64)),
        Some(_) => (ell, cap_l),
    };
    if weights.is_none() && (lo > hi || lo > n as f64) {
        return Err(Error::Infeasible(format!(
            "no cluster size lies in [{lo}, {hi}] for n = {n}"
        )));
    }
    let Partition { labels, centers } = partition;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    for (j, &c) in labels.iter().enumerate() {
        members[c].push(j);
    }
    let mut clusters: Vec<(Vec<usize>, Vec<f64>)> = members
        .into_iter()
        .zip(centers)
        .filter(|(m, _)| !m.is_empty())
        .collect();
    let load = |m: &[usize]| -> f64 { m.iter().map(|&j| weight(weights, j)).sum() };

    while clusters.len() > 1 {
        let Some(small) = (0..clusters.len())
            .filter(|&c| load(&clusters[c].0) < lo - 1e-12)
            .min_by(|&a, &b| {
                load(&clusters[a].0)
                    .total_cmp(&load(&clusters[b].0))
                    .then(a.cmp(&b))
            })
        else {
            break;
        };
        let target = (0..clusters.len())
            .filter(|&c| c != small)
            .min_by(|&a, &b| {
                sq_euclid(&clusters[small].1, &clusters[a].1)
                    .total_cmp(&sq_euclid(&clusters[small].1, &clusters[b].1))
                    .then(a.cmp(&b))
            })
            .expect("at least two clusters");
        let (moved, _) = clusters.remove(small);
        let target = if target > small { target - 1 } else { target };
        clusters[target].0.extend(moved);
        clusters[target].0.sort_unstable();
        clusters[target].1 = centroid(points, clusters[target].0.iter().copied(), weights)
            .unwrap_or_else(|| clusters[target].1.clone());
    }

    let mut out: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for (m, ctr) in clusters {
        let l = load(&m);
        if l <= hi + 1e-12 {
            out.push((m, ctr));
            continue;
        }
        let mut shuffled = m;
        shuffled.shuffle(rng);
        let parts = match weights {
            None => split_counts(shuffled, lo as usize, hi as usize)?,
            Some(w) => split_weighted(shuffled, w, l, cap_l),
        };
        for part in parts {
            let c = centroid(points, part.iter().copied(), weights).unwrap_or_else(|| ctr.clone());
            out.push((part, c));
        }
    }

    let mut labels = vec![0; n];
    let mut centers = Vec::with_capacity(out.len());
    for (c, (m, ctr)) in out.into_iter().enumerate() {
        for j in m {
            labels[j] = c;
        }
        centers.push(ctr);
    }
    let result = Partition { labels, centers };
    if weights.is_none() {
        let sizes = result.loads(None);
        if sizes.iter().any(|&s| s < lo || s > hi) {
            return Err(Error::invariant(format!(
                "balanced sizes {sizes:?} outside [{lo}, {hi}]"
            )));
        }
    }
    Ok(result)
}

/// Even split into the fewest parts `q ≥ ⌈s/hi⌉` with `q·lo ≤ s`.
fn split_counts(items: Vec<usize>, lo: usize, hi: usize) -> Result<Vec<Vec<usize>>> {
    let s = items.len();
    let mut q = s.div_ceil(hi.max(1));
    while q * lo <= s {
        if s <= q * hi {
            let base = s / q;
            let extra = s % q;
            let mut parts = Vec::with_capacity(q);
            let mut it = items.into_iter();
            for i in 0..q {
                parts.push(it.by_ref().take(base + usize::from(i < extra)).collect());
            }
            return Ok(parts);
        }
        q += 1;
    }
    Err(Error::Infeasible(format!(
        "a cluster of {s} points cannot be split into parts within [{lo}, {hi}]"
    )))
}

fn split_weighted(items: Vec<usize>, w: &[f64], total: f64, cap_l: f64) -> Vec<Vec<usize>> {
    let q = ((total / cap_l) - 1e-12).ceil().max(1.0) as usize;
    let mut parts: Vec<(f64, Vec<usize>)> = vec![(0.0, Vec::new()); q];
    for j in items {
        let p = (0..q)
            .min_by(|&a, &b| parts[a].0.total_cmp(&parts[b].0).then(a.cmp(&b)))
            .expect("q >= 1");
        parts[p].0 += w[j];
        parts[p].1.push(j);
    }
    parts
        .into_iter()
        .map(|p| p.1)
        .filter(|p| !p.is_empty())
        .collect()
}

#[derive(Debug, Clone)]
pub struct KmeansppOutput {
    pub assignment: Assignment,
    pub report: ViolationReport,
    /// Seed indices surviving the pruning step.
    pub seeds: Vec<usize>,
    pub partition: Partition,
}

/// Seeding, pruning, Lloyd and balancing for `p = 1`.
pub fn kmeanspp_balanced(
    points: &PointSet,
    constraints: &Constraints,
    config: &SeedingConfig,
    rng: &mut impl Rng,
    weights: Option<&[f64]>,
) -> Result<KmeansppOutput> {
    constraints.validate()?;
    if constraints.p != 1 {
        return Err(Error::Unsupported(
            "the k-means++ path supports p = 1 only".into(),
        ));
    }
    if config.k != constraints.k {
        return Err(Error::invalid("seeding k differs from the constraint k"));
    }
    let n = points.len();
    let k = config.k.min(n);
    let m = config.oversample_count().min(n);
    let drawn = dsquared_seed(points, m, rng, weights)?;
    let seeds = greedy_prune(points, &drawn, k, weights);
    let init: Vec<Vec<f64>> = seeds.iter().map(|&s| points.row(s).to_vec()).collect();
    let centers = lloyd(points, init, config.lloyd_iters, weights)?;
    let (labels, _) = assign_nearest(points, &centers, weights);
    let partition = balance_heuristic(
        points,
        Partition { labels, centers },
        constraints.ell,
        constraints.cap_l,
        rng,
        weights,
    )?;
    let assignment = Assignment::from_labels(
        partition
            .centers
            .iter()
            .cloned()
            .map(Center::Coords)
            .collect(),
        &partition.labels,
    );
    let report = check_capacities(&assignment, constraints, weights);
    Ok(KmeansppOutput {
        assignment,
        report,
        seeds,
        partition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> PointSet {
        PointSet::new(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn oversample_default() {
        assert_eq!(default_oversample(1), 2);
        assert_eq!(default_oversample(2), 2 * 2 + 2);
        assert_eq!(default_oversample(16), 16 * 3 + 16);
    }

    #[test]
    fn second_seed_leaves_the_first_mass() {
        let pts = line(&[0.0, 0.0, 0.0, 1.0, 1.0]);
        for s in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let seeds = dsquared_seed(&pts, 2, &mut rng, None).unwrap();
            assert_ne!(pts.row(seeds[0])[0], pts.row(seeds[1])[0]);
        }
    }

    #[test]
    fn duplicate_points_still_give_distinct_seeds() {
        let pts = line(&[3.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = dsquared_seed(&pts, 4, &mut rng, None).unwrap();
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2, 3]);
        assert!(dsquared_seed(&pts, 5, &mut rng, None).is_err());
    }

    #[test]
    fn pruning_drops_the_redundant_seed() {
        // Clusters near 0 and near 10; seeds 0 and 1 share the first cluster.
        let pts = line(&[0.0, 0.1, 0.2, 10.0, 10.1]);
        assert_eq!(greedy_prune(&pts, &[0, 1, 3], 2, None), vec![1, 3]);
        assert_eq!(greedy_prune(&pts, &[0, 3], 2, None), vec![0, 3]);
    }

    #[test]
    fn lloyd_fixed_point_and_zero_iterations() {
        let pts = line(&[0.0, 2.0, 10.0, 12.0]);
        let c = vec![vec![1.0], vec![11.0]];
        assert_eq!(lloyd(&pts, c.clone(), 5, None).unwrap(), c);
        let off = vec![vec![0.0], vec![12.0]];
        assert_eq!(lloyd(&pts, off.clone(), 0, None).unwrap(), off);
        assert_eq!(lloyd(&pts, off, 1, None).unwrap(), c);
    }

    #[test]
    fn lloyd_keeps_empty_center() {
        let pts = line(&[0.0, 1.0]);
        let c = lloyd(&pts, vec![vec![0.5], vec![100.0]], 3, None).unwrap();
        assert_eq!(c[1], vec![100.0]);
    }

    #[test]
    fn merge_then_split() {
        // Sizes (1, 9), n = 10, bounds [2, 6]: merge to 10, split into 5 + 5.
        let pts = line(&[100.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let mut labels = vec![1; 10];
        labels[0] = 0;
        let part = Partition {
            labels,
            centers: vec![vec![100.0], vec![4.0]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = balance_heuristic(&pts, part, 0.2, 0.6, &mut rng, None).unwrap();
        let mut sizes = out.loads(None);
        sizes.sort_by(f64::total_cmp);
        assert_eq!(sizes, vec![5.0, 5.0]);
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let pts = line(&[0.0, 1.0, 10.0, 11.0]);
        let part = Partition {
            labels: vec![0, 0, 1, 1],
            centers: vec![vec![0.5], vec![10.5]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            balance_heuristic(&pts, part.clone(), 0.25, 0.75, &mut rng, None).unwrap(),
            part
        );
    }

    #[test]
    fn one_big_cluster_splits_under_cap() {
        let pts = line(&(0..40).map(f64::from).collect::<Vec<_>>());
        let part = Partition {
            labels: vec![0; 40],
            centers: vec![vec![20.0]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = balance_heuristic(&pts, part, 1.0 / 8.0, 0.5, &mut rng, None).unwrap();
        assert!(out.centers.len() >= 2);
        assert!(out.loads(None).iter().all(|&s| (5.0..=20.0).contains(&s)));
    }

    #[test]
    fn uneven_split_sizes() {
        let parts = split_counts((0..11).collect(), 2, 4).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
        assert!(split_counts((0..5).collect(), 3, 4).is_err());
    }

    #[test]
    fn singletons_when_k_equals_n() {
        let pts = line(&[0.0, 5.0, 9.0]);
        let cons = Constraints::new(3, 1, 1.0 / 3.0, 1.0 / 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = kmeanspp_balanced(&pts, &cons, &SeedingConfig::new(3), &mut rng, None).unwrap();
        assert_eq!(out.assignment.counts(), vec![1, 1, 1]);
        assert!(out.report.feasible);
    }

    #[test]
    fn replication_is_rejected() {
        let pts = line(&[0.0, 5.0, 9.0, 1.0]);
        let cons = Constraints::new(2, 2, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            kmeanspp_balanced(&pts, &cons, &SeedingConfig::new(2), &mut rng, None),
            Err(Error::Unsupported(_))
        ));
    }
}
