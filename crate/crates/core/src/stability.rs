//! Threshold algorithms that are exact or near-exact under approximation stability.

use ordered_float::OrderedFloat;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Assignment, Constraints, Instance, Slot};

/// A partition from threshold carving.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdClustering {
    pub tau: f64,
    /// Sorted member lists, in carving order.
    pub clusters: Vec<Vec<usize>>,
    /// Points that were not carved and were attached by distance afterwards.
    pub attached: Vec<usize>,
}

/// `k` rounds of carving the closed neighborhood of the highest-degree surviving
/// vertex of `G_tau` (ties to the lowest index); leftovers join the cluster with
/// the nearest member.
pub fn bbg_cluster(instance: &Instance, k: usize, tau: f64) -> Result<ThresholdClustering> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let n = instance.n();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && instance.dist(i, j) <= tau)
                .collect()
        })
        .collect();
    let mut alive = vec![true; n];
    let mut clusters = Vec::with_capacity(k);
    for _ in 0..k {
        let pick = (0..n).filter(|&i| alive[i]).max_by_key(|&i| {
            (
                adj[i].iter().filter(|&&j| alive[j]).count(),
                std::cmp::Reverse(i),
            )
        });
        let Some(v) = pick else {
            return Err(Error::TooFewCarvings {
                carved: clusters.len(),
                k,
                tau,
            });
        };
        let mut carved: Vec<usize> = std::iter::once(v)
            .chain(adj[v].iter().copied().filter(|&j| alive[j]))
            .collect();
        carved.sort_unstable();
        for &j in &carved {
            alive[j] = false;
        }
        clusters.push(carved);
    }
    let attached: Vec<usize> = (0..n).filter(|&j| alive[j]).collect();
    for &j in &attached {
        let best = (0..clusters.len())
            .min_by_key(|&c| {
                let d = clusters[c]
                    .iter()
                    .map(|&i| OrderedFloat(instance.dist(i, j)))
                    .min();
                (d, c)
            })
            .expect("k >= 1 clusters");
        clusters[best].push(j);
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    Ok(ThresholdClustering {
        tau,
        clusters,
        attached,
    })
}

/// Member minimizing the sum of distances to the others (ties to the lowest index).
pub fn medoid(instance: &Instance, members: &[usize]) -> Option<usize> {
    members.iter().copied().min_by_key(|&i| {
        (
            OrderedFloat(members.iter().map(|&j| instance.dist(i, j)).sum::<f64>()),
            i,
        )
    })
}

/// Member minimizing the largest distance to the others (ties to the lowest index).
pub fn one_center(instance: &Instance, members: &[usize]) -> Option<usize> {
    members.iter().copied().min_by_key(|&i| {
        let r = members
            .iter()
            .map(|&j| OrderedFloat(instance.dist(i, j)))
            .max();
        (r, i)
    })
}

/// Sum over clusters of member distances to the cluster medoid.
pub fn kmedian_cost(instance: &Instance, clusters: &[Vec<usize>]) -> f64 {
    clusters
        .iter()
        .filter_map(|m| {
            medoid(instance, m).map(|c| m.iter().map(|&j| instance.dist(c, j)).sum::<f64>())
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Repair {
    pub clusters: Vec<Vec<usize>>,
    pub moves: usize,
    /// `Σ` of per-cluster bound violations before repair.
    pub initial_violation: usize,
}

/// Moves one point at a time from the largest to the smallest cluster until all
/// sizes lie in `[⌈ℓn⌉, ⌊Ln⌋]`.
///
/// The moved point is the member of the largest cluster closest to the smallest
/// cluster's medoid; into an empty cluster it is the member farthest from its own medoid.
pub fn capacity_repair(
    instance: &Instance,
    clusters: Vec<Vec<usize>>,
    ell: f64,
    cap_l: f64,
) -> Result<Repair> {
    let n: usize = clusters.iter().map(Vec::len).sum();
    let k = clusters.len();
    let cons = Constraints {
        k,
        p: 1,
        ell,
        cap_l,
    };
    let (lo, hi) = cons.load_bounds(n);
    if k == 0 || k * lo > n || k * hi < n {
        return Err(Error::Infeasible(format!(
            "{k} clusters cannot hold {n} points with sizes in [{lo}, {hi}]"
        )));
    }
    let violation = |s: usize| lo.saturating_sub(s) + s.saturating_sub(hi);
    let initial_violation = clusters.iter().map(|c| violation(c.len())).sum();
    let mut clusters = clusters;
    let mut moves = 0;
    loop {
        if clusters.iter().all(|c| violation(c.len()) == 0) {
            break;
        }
        let big = (0..k)
            .max_by_key(|&c| (clusters[c].len(), std::cmp::Reverse(c)))
            .expect("k >= 1");
        let small = (0..k)
            .min_by_key(|&c| (clusters[c].len(), c))
            .expect("k >= 1");
        let pick = match medoid(instance, &clusters[small]) {
            Some(m) => clusters[big]
                .iter()
                .copied()
                .min_by_key(|&j| (OrderedFloat(instance.dist(m, j)), j)),
            None => {
                let own = medoid(instance, &clusters[big]).expect("largest cluster is nonempty");
                clusters[big]
                    .iter()
                    .copied()
                    .max_by_key(|&j| (OrderedFloat(instance.dist(own, j)), std::cmp::Reverse(j)))
            }
        }
        .expect("largest cluster is nonempty");
        clusters[big].retain(|&j| j != pick);
        clusters[small].push(pick);
        clusters[small].sort_unstable();
        moves += 1;
        if moves > initial_violation {
            return Err(Error::invariant(
                "capacity repair exceeded the violation budget",
            ));
        }
    }
    Ok(Repair {
        clusters,
        moves,
        initial_violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub best: ThresholdClustering,
    pub cost: f64,
    pub moves: usize,
    /// `(tau, cost)` of every probe that produced a clustering.
    pub probes: Vec<(f64, f64)>,
}

/// Carves and repairs at every positive pairwise distance, keeping the
/// repaired clustering of least k-median cost (ties to the smaller tau).
pub fn tau_sweep(instance: &Instance, k: usize, ell: f64, cap_l: f64) -> Result<SweepResult> {
    let taus: Vec<f64> = instance
        .distinct_distances()
        .into_iter()
        .filter(|&t| t > 0.0)
        .collect();
    let runs: Vec<Option<(ThresholdClustering, Repair, f64)>> = taus
        .par_iter()
        .map(|&tau| match bbg_cluster(instance, k, tau) {
            Ok(tc) => {
                let rep = capacity_repair(instance, tc.clusters.clone(), ell, cap_l)?;
                let cost = kmedian_cost(instance, &rep.clusters);
                Ok(Some((tc, rep, cost)))
            }
            Err(Error::TooFewCarvings { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let probes: Vec<(f64, f64)> = runs
        .iter()
        .flatten()
        .map(|(tc, _, c)| (tc.tau, *c))
        .collect();
    let best = runs
        .into_iter()
        .flatten()
        .enumerate()
        .min_by_key(|(i, (_, _, c))| (OrderedFloat(*c), *i))
        .map(|(_, r)| r);
    let Some((tc, rep, cost)) = best else {
        return Err(Error::NoSolution(format!(
            "no threshold yields {k} carvings"
        )));
    };
    Ok(SweepResult {
        best: ThresholdClustering {
            tau: tc.tau,
            clusters: rep.clusters,
            attached: tc.attached,
        },
        cost,
        moves: rep.moves,
        probes,
    })
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableKCenter {
    pub radius: f64,
    pub clusters: Vec<Vec<usize>>,
}

/// Smallest threshold whose graph has exactly `k` components, all with sizes in `[⌈ℓn⌉, ⌊Ln⌋]`.
pub fn kcenter_stable(
    instance: &Instance,
    k: usize,
    ell: f64,
    cap_l: f64,
) -> Result<StableKCenter> {
    let n = instance.n();
    let cons = Constraints {
        k,
        p: 1,
        ell,
        cap_l,
    };
    let (lo, hi) = cons.load_bounds(n);
    let mut edges: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (instance.dist(i, j), i, j))
        .collect();
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut comps = n;
    let ok = |parent: &mut [usize], size: &[usize], comps: usize| {
        comps == k && (0..n).all(|v| find(parent, v) != v || (lo..=hi).contains(&size[v]))
    };
    let mut e = 0;
    let mut r = 0.0;
    loop {
        while e < edges.len() && edges[e].0 <= r {
            let (a, b) = (find(&mut parent, edges[e].1), find(&mut parent, edges[e].2));
            if a != b {
                let (a, b) = if size[a] >= size[b] { (a, b) } else { (b, a) };
                parent[b] = a;
                size[a] += size[b];
                comps -= 1;
            }
            e += 1;
        }
        if ok(&mut parent, &size, comps) {
            break;
        }
        if e == edges.len() || comps < k {
            return Err(Error::NotStable(format!(
                "no threshold gives {k} components with sizes in [{lo}, {hi}]"
            )));
        }
        r = edges[e].0;
    }
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        let root = find(&mut parent, v);
        by_root[root].push(v);
    }
    let clusters: Vec<Vec<usize>> = by_root.into_iter().filter(|c| !c.is_empty()).collect();
    Ok(StableKCenter {
        radius: r,
        clusters,
    })
}

/// Partition to assignment with one representative center per cluster.
pub fn clusters_to_assignment(
    instance: &Instance,
    clusters: &[Vec<usize>],
    center_of: impl Fn(&Instance, &[usize]) -> Option<usize>,
) -> Assignment {
    let n = instance.n();
    let mut centers = Vec::new();
    let mut assign = vec![Vec::new(); n];
    for members in clusters.iter().filter(|m| !m.is_empty()) {
        let c = centers.len();
        centers.push(center_of(instance, members).expect("nonempty cluster"));
        for &j in members {
            assign[j] = vec![Slot { c, m: 1 }];
        }
    }
    Assignment::from_point_centers(centers, assign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DistMatrix;

    fn cliques(sizes: &[usize], intra: f64, inter: f64) -> Instance {
        let group: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &s)| std::iter::repeat_n(g, s))
            .collect();
        let n = group.len();
        Instance::from_matrix(
            DistMatrix::from_fn(n, |i, j| if group[i] == group[j] { intra } else { inter })
                .unwrap(),
        )
    }

    #[test]
    fn far_cliques_are_recovered() {
        let inst = cliques(&[3, 4, 3], 1.0, 10.0);
        let tc = bbg_cluster(&inst, 3, 1.0).unwrap();
        assert_eq!(
            tc.clusters,
            vec![vec![3, 4, 5, 6], vec![0, 1, 2], vec![7, 8, 9]]
        );
        assert!(tc.attached.is_empty());
    }

    #[test]
    fn tiny_tau_runs_out_of_carvings() {
        let inst = Instance::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(
            bbg_cluster(&inst, 3, 0.5),
            Err(Error::TooFewCarvings { carved: 2, .. })
        ));
        // Singleton carvings; the leftover joins the cluster with the nearest member.
        let inst = Instance::from_rows(&[vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        let tc = bbg_cluster(&inst, 2, 0.5).unwrap();
        assert_eq!(tc.clusters, vec![vec![0], vec![1, 2]]);
        assert_eq!(tc.attached, vec![2]);
    }

    #[test]
    fn one_cluster_takes_everything() {
        let inst = Instance::from_rows(&[vec![0.0], vec![3.0], vec![9.0]]).unwrap();
        let tc = bbg_cluster(&inst, 1, 1.0).unwrap();
        assert_eq!(tc.clusters, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn repair_examples() {
        let inst =
            Instance::from_rows(&(0..10).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let r = capacity_repair(&inst, vec![(0..8).collect(), vec![8, 9]], 0.3, 0.7).unwrap();
        assert_eq!(r.moves, 1);
        assert_eq!(
            r.clusters.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![7, 3]
        );
        assert_eq!(r.clusters[1], vec![7, 8, 9]);

        let r = capacity_repair(&inst, vec![(0..10).collect(), vec![], vec![]], 0.2, 0.6).unwrap();
        assert_eq!(r.moves, 4);
        assert!(r.moves <= r.initial_violation);
        assert!(r.clusters.iter().all(|c| (2..=6).contains(&c.len())));

        let ok =
            capacity_repair(&inst, vec![(0..5).collect(), (5..10).collect()], 0.3, 0.7).unwrap();
        assert_eq!(ok.moves, 0);
        assert!(capacity_repair(&inst, vec![(0..10).collect()], 0.0, 0.5).is_err());
    }

    #[test]
    fn stable_cliques_give_exact_components() {
        let inst = cliques(&[3, 3, 4], 1.0, 5.0);
        let s = kcenter_stable(&inst, 3, 0.3, 0.4).unwrap();
        assert_eq!(s.radius, 1.0);
        assert_eq!(
            s.clusters,
            vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8, 9]]
        );
    }

    #[test]
    fn chain_is_not_stable_for_unbalanced_bounds() {
        // Unit chain: components jump from n to 1 at threshold 1.
        let inst =
            Instance::from_rows(&(0..6).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        assert!(matches!(
            kcenter_stable(&inst, 2, 0.0, 1.0),
            Err(Error::NotStable(_))
        ));
    }

    #[test]
    fn single_cluster_connects_at_the_diameter_of_the_spanning_tree() {
        let inst = Instance::from_rows(&[vec![0.0], vec![2.0], vec![3.0]]).unwrap();
        let s = kcenter_stable(&inst, 1, 0.0, 1.0).unwrap();
        assert_eq!(s.radius, 2.0);
    }

    #[test]
    fn sweep_prefers_the_separating_threshold() {
        let inst = Instance::from_rows(&[vec![0.0], vec![1.0], vec![7.0]]).unwrap();
        let s = tau_sweep(&inst, 2, 0.0, 1.0).unwrap();
        assert_eq!(s.best.tau, 1.0);
        assert_eq!(s.cost, 1.0);
        // Larger thresholds swallow everything in one carving.
        assert_eq!(s.probes, vec![(1.0, 1.0)]);
        assert!(s.probes.iter().all(|&(_, c)| s.cost <= c));
    }
}
