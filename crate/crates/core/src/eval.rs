//! Objective evaluation and capacity checking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    sq_euclid, Assignment, Center, Constraints, Geometry, Instance, Objective, FEAS_TOL,
};

/// Distance from point `j` to a center.
pub fn center_dist(instance: &Instance, center: &Center, j: usize) -> Result<f64> {
    Ok(center_sq_dist(instance, center, j)?.sqrt())
}

fn center_sq_dist(instance: &Instance, center: &Center, j: usize) -> Result<f64> {
    let n = instance.n();
    match center {
        Center::Point(i) => {
            if *i >= n {
                return Err(Error::IndexOutOfRange { index: *i, len: n });
            }
            Ok(instance.sq_dist(*i, j))
        }
        Center::Coords(x) => match instance.geometry() {
            Geometry::Points(ps) => {
                if x.len() != ps.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: ps.dim(),
                        found: x.len(),
                    });
                }
                Ok(sq_euclid(ps.row(j), x))
            }
            Geometry::Matrix(_) => Err(Error::invalid("coordinate centers need a vector instance")),
        },
    }
}

fn check_shape(instance: &Instance, a: &Assignment) -> Result<()> {
    if a.assign.len() != instance.n() {
        return Err(Error::DimensionMismatch {
            expected: instance.n(),
            found: a.assign.len(),
        });
    }
    for slots in &a.assign {
        for s in slots {
            if s.c >= a.centers.len() {
                return Err(Error::IndexOutOfRange {
                    index: s.c,
                    len: a.centers.len(),
                });
            }
        }
    }
    Ok(())
}

/// Objective value with multiplicities: Σ m·d, Σ m·d², or max d.
pub fn evaluate(instance: &Instance, a: &Assignment, objective: Objective) -> Result<f64> {
    check_shape(instance, a)?;
    let mut total: f64 = 0.0;
    for (j, slots) in a.assign.iter().enumerate() {
        for s in slots {
            let sq = center_sq_dist(instance, &a.centers[s.c], j)?;
            match objective {
                Objective::KMedian => total += s.m as f64 * sq.sqrt(),
                Objective::KMeans => total += s.m as f64 * sq,
                Objective::KCenter => total = total.max(sq.sqrt()),
            }
        }
    }
    Ok(total)
}

/// Per-center loads and violation factors against `[ell, cap_l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    /// Load of each center as a mass fraction.
    pub loads: Vec<f64>,
    /// Total multiplicity on each center.
    pub counts: Vec<u32>,
    pub max_upper_factor: f64,
    pub max_lower_factor: f64,
    pub worst_multiplicity: u32,
    pub feasible: bool,
}

/// Loads are `Σ_j m_ij·w_j` with `w_j = 1/n` when no weights are given.
pub fn check_capacities(
    a: &Assignment,
    constraints: &Constraints,
    weights: Option<&[f64]>,
) -> ViolationReport {
    let n = a.assign.len();
    let uniform = 1.0 / n.max(1) as f64;
    let mut loads = vec![0.0; a.centers.len()];
    let mut worst = 0;
    for (j, slots) in a.assign.iter().enumerate() {
        let w = weights.map_or(uniform, |w| w[j]);
        for s in slots {
            loads[s.c] += s.m as f64 * w;
            worst = worst.max(s.m);
        }
    }
    let mut upper: f64 = 1.0;
    let mut lower: f64 = 1.0;
    let mut feasible = true;
    for &load in &loads {
        if load > constraints.cap_l + FEAS_TOL || load < constraints.ell - FEAS_TOL {
            feasible = false;
        }
        upper = upper.max(ratio(load, constraints.cap_l));
        lower = lower.max(ratio(constraints.ell, load));
    }
    ViolationReport {
        counts: a.counts(),
        loads,
        max_upper_factor: upper,
        max_lower_factor: lower,
        worst_multiplicity: worst,
        feasible,
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Σ_j (1/|f(j)|) Σ_{c∈f(j)} ‖x_j − c‖², multiplicities counted in both sums.
pub fn averaged_kmeans_objective(instance: &Instance, a: &Assignment) -> Result<f64> {
    check_shape(instance, a)?;
    let mut total = 0.0;
    for (j, slots) in a.assign.iter().enumerate() {
        let size: u32 = slots.iter().map(|s| s.m).sum();
        if size == 0 {
            return Err(Error::invalid(format!("point {j} has no centers")));
        }
        let mut acc = 0.0;
        for s in slots {
            acc += s.m as f64 * center_sq_dist(instance, &a.centers[s.c], j)?;
        }
        total += acc / size as f64;
    }
    Ok(total)
}

/// Mean per-cluster label entropy in bits; empty clusters contribute 0 but count in `k`.
pub fn class_entropy(a: &Assignment, labels: &[i64]) -> Result<f64> {
    if labels.len() != a.assign.len() {
        return Err(Error::DimensionMismatch {
            expected: a.assign.len(),
            found: labels.len(),
        });
    }
    let k = a.centers.len();
    if k == 0 {
        return Err(Error::invalid("assignment has no centers"));
    }
    let mut hist: Vec<std::collections::BTreeMap<i64, u64>> = vec![Default::default(); k];
    for (j, slots) in a.assign.iter().enumerate() {
        for s in slots {
            *hist[s.c].entry(labels[j]).or_default() += s.m as u64;
        }
    }
    let sum: f64 = hist.iter().map(|h| entropy_bits(h.values().copied())).sum();
    Ok(sum / k as f64)
}

pub(crate) fn entropy_bits(counts: impl Iterator<Item = u64> + Clone) -> f64 {
    let total: u64 = counts.clone().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let q = c as f64 / t;
            -q * q.log2()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Slot;

    fn line(xs: &[f64]) -> Instance {
        Instance::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    fn single(centers: Vec<usize>, of: &[usize]) -> Assignment {
        Assignment::from_point_centers(
            centers,
            of.iter().map(|&c| vec![Slot { c, m: 1 }]).collect(),
        )
    }

    #[test]
    fn self_assignment_is_free() {
        let inst = line(&[0.0, 1.0, 3.0]);
        let a = single(vec![0, 1, 2], &[0, 1, 2]);
        for obj in [Objective::KMedian, Objective::KMeans, Objective::KCenter] {
            assert_eq!(evaluate(&inst, &a, obj).unwrap(), 0.0);
        }
    }

    #[test]
    fn collinear_example() {
        let inst = line(&[0.0, 1.0, 5.0]);
        let a = single(vec![0, 2], &[0, 0, 1]);
        assert_eq!(evaluate(&inst, &a, Objective::KMedian).unwrap(), 1.0);
        assert_eq!(evaluate(&inst, &a, Objective::KCenter).unwrap(), 1.0);
    }

    #[test]
    fn out_of_range_center_is_rejected() {
        let inst = line(&[0.0, 1.0]);
        let a = single(vec![0], &[0, 1]);
        assert!(matches!(
            evaluate(&inst, &a, Objective::KMedian),
            Err(Error::IndexOutOfRange { .. })
        ));
        let a = single(vec![7], &[0, 0]);
        assert!(matches!(
            evaluate(&inst, &a, Objective::KMedian),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn capacity_factors() {
        let c = Constraints::new(2, 1, 0.3, 0.7).unwrap();
        let balanced = single(vec![0, 1], &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let r = check_capacities(&balanced, &c, None);
        assert_eq!(r.max_upper_factor, 1.0);
        assert_eq!(r.max_lower_factor, 1.0);
        assert!(r.feasible);

        let skewed = single(vec![0, 1], &[0, 0, 0, 0, 0, 0, 0, 0, 1, 1]);
        let r = check_capacities(&skewed, &c, None);
        assert!((r.max_upper_factor - 8.0 / 7.0).abs() < 1e-12);
        assert!((r.max_lower_factor - 1.5).abs() < 1e-12);
        assert!(!r.feasible);
    }

    #[test]
    fn uniform_weights_match_unweighted_exactly() {
        let c = Constraints::new(3, 1, 0.1, 0.5).unwrap();
        let a = single(vec![0, 1, 2], &[0, 1, 1, 2, 2, 2, 0]);
        let w = vec![1.0 / 7.0; 7];
        assert_eq!(
            check_capacities(&a, &c, None),
            check_capacities(&a, &c, Some(&w))
        );
    }

    #[test]
    fn averaged_objective_mixed_sizes() {
        // points 0,1,3,6 on a line; centers at 0 and 6.
        let inst = line(&[0.0, 1.0, 3.0, 6.0]);
        let a = Assignment::from_point_centers(
            vec![0, 3],
            vec![
                vec![Slot { c: 0, m: 1 }],
                vec![Slot { c: 0, m: 1 }, Slot { c: 1, m: 1 }],
                vec![Slot { c: 0, m: 2 }, Slot { c: 1, m: 1 }],
                vec![Slot { c: 1, m: 1 }],
            ],
        );
        // 0 + (1 + 25)/2 + (2*9 + 9)/3 + 0 = 13 + 9
        assert!((averaged_kmeans_objective(&inst, &a).unwrap() - 22.0).abs() < 1e-12);
    }

    #[test]
    fn averaged_objective_is_half_for_uniform_p2() {
        let inst = line(&[0.0, 2.0, 4.0]);
        let a = Assignment::from_point_centers(
            vec![0, 2],
            (0..3)
                .map(|_| vec![Slot { c: 0, m: 1 }, Slot { c: 1, m: 1 }])
                .collect(),
        );
        let q = evaluate(&inst, &a, Objective::KMeans).unwrap();
        assert!((averaged_kmeans_objective(&inst, &a).unwrap() - q / 2.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let pure = single(vec![0, 1], &[0, 0, 1, 1]);
        assert_eq!(class_entropy(&pure, &[5, 5, 7, 7]).unwrap(), 0.0);

        let half = single(vec![0], &[0, 0]);
        assert!((class_entropy(&half, &[1, 2]).unwrap() - 1.0).abs() < 1e-12);

        let a = single(vec![0, 1], &[0, 0, 0, 0, 1, 1]);
        let h = class_entropy(&a, &[1, 1, 1, 2, 1, 2]).unwrap();
        let h34 = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert!((h34 - 0.811278).abs() < 1e-6);
        assert!((h - (h34 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_cluster_counts_in_k() {
        let a = single(vec![0, 1], &[0, 0]);
        assert!((class_entropy(&a, &[1, 2]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coordinate_centers_evaluate() {
        let inst = line(&[0.0, 2.0]);
        let a = Assignment::from_labels(vec![Center::Coords(vec![1.0])], &[0, 0]);
        assert_eq!(evaluate(&inst, &a, Objective::KMeans).unwrap(), 2.0);
    }
}
