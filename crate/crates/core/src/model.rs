//! Instances, constraints, cost matrices and assignments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for feasibility comparisons.
pub const FEAS_TOL: f64 = 1e-7;

/// Slack applied before integerizing a real bound.
const ROUND_SLACK: f64 = 1e-9;

/// `⌈x⌉` robust to representation error just above an integer.
pub fn ceil_tol(x: f64) -> f64 {
    (x - ROUND_SLACK).ceil()
}

/// `⌊x⌋` robust to representation error just below an integer.
pub fn floor_tol(x: f64) -> f64 {
    (x + ROUND_SLACK).floor()
}

pub fn sq_euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    sq_euclid(a, b).sqrt()
}

/// Dense row-major set of equal-dimension vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.len())
            .ok_or_else(|| Error::invalid("no points"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        sq_euclid(self.row(i), self.row(j))
    }

    pub fn select(&self, idx: &[usize]) -> PointSet {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        PointSet {
            dim: self.dim,
            data,
        }
    }

    /// Index of the nearest row to `x`; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, r) in self.rows().enumerate() {
            let d = sq_euclid(r, x);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Symmetric distance matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistMatrix {
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("empty distance matrix"));
        }
        if d.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: d.len(),
            });
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("dist[{i}][{i}] must be 0")));
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!(
                        "dist[{i}][{j}] = {v} is not a nonnegative real"
                    )));
                }
                if v != d[j * n + i] {
                    return Err(Error::invalid(format!("dist[{i}][{j}] != dist[{j}][{i}]")));
                }
            }
        }
        Ok(Self { n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut d = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
            d.extend_from_slice(r);
        }
        Self::new(n, d)
    }

    /// Builds a matrix from a symmetric function of index pairs.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self::new(n, d)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Points(PointSet),
    Matrix(DistMatrix),
}

/// A point set with a metric and optional class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    geometry: Geometry,
    labels: Option<Vec<i64>>,
}

impl Instance {
    pub fn from_points(points: PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("instance needs at least one point"));
        }
        Ok(Self {
            geometry: Geometry::Points(points),
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_points(PointSet::from_rows(rows)?)
    }

    pub fn from_matrix(dist: DistMatrix) -> Self {
        Self {
            geometry: Geometry::Matrix(dist),
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        match &self.geometry {
            Geometry::Points(p) => p.len(),
            Geometry::Matrix(m) => m.len(),
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn points(&self) -> Option<&PointSet> {
        match &self.geometry {
            Geometry::Points(p) => Some(p),
            Geometry::Matrix(_) => None,
        }
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.geometry {
            Geometry::Points(p) => p.sq_dist(i, j).sqrt(),
            Geometry::Matrix(m) => m.get(i, j),
        }
    }

    /// Squared distance; no square root is taken for vector input.
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        match &self.geometry {
            Geometry::Points(p) => p.sq_dist(i, j),
            Geometry::Matrix(m) => {
                let d = m.get(i, j);
                d * d
            }
        }
    }

    /// Full row-major distance matrix.
    pub fn distance_matrix(&self) -> Vec<f64> {
        let n = self.n();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = self.dist(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        d
    }

    /// Sorted distinct pairwise distances, including 0.
    pub fn distinct_distances(&self) -> Vec<f64> {
        let n = self.n();
        let mut v = Vec::with_capacity(n * (n - 1) / 2 + 1);
        v.push(0.0);
        for i in 0..n {
            for j in i + 1..n {
                v.push(self.dist(i, j));
            }
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Restriction to the given indices, labels included.
    pub fn subset(&self, idx: &[usize]) -> Result<Instance> {
        let geometry = match &self.geometry {
            Geometry::Points(p) => Geometry::Points(p.select(idx)),
            Geometry::Matrix(m) => {
                let k = idx.len();
                let mut d = vec![0.0; k * k];
                for (a, &i) in idx.iter().enumerate() {
                    for (b, &j) in idx.iter().enumerate() {
                        d[a * k + b] = m.get(i, j);
                    }
                }
                Geometry::Matrix(DistMatrix::new(k, d)?)
            }
        };
        Ok(Instance {
            geometry,
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        })
    }

    /// Checks the triangle inequality within `tol`; O(n³).
    pub fn validate_metric(&self, tol: f64) -> Result<()> {
        let n = self.n();
        let d = self.distance_matrix();
        for i in 0..n {
            for j in 0..n {
                let dij = d[i * n + j];
                for k in 0..n {
                    let bound = dij + d[j * n + k];
                    let dik = d[i * n + k];
                    if dik > bound + tol {
                        return Err(Error::MetricViolation {
                            i,
                            j,
                            k,
                            dik,
                            bound,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Clustering objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    KMedian,
    KMeans,
    KCenter,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kmedian" | "k-median" => Ok(Objective::KMedian),
            "kmeans" | "k-means" => Ok(Objective::KMeans),
            "kcenter" | "k-center" => Ok(Objective::KCenter),
            other => Err(Error::invalid(format!("unknown objective '{other}'"))),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::KMedian => "kmedian",
            Objective::KMeans => "kmeans",
            Objective::KCenter => "kcenter",
        })
    }
}

/// Cluster count `k`, replication `p`, and load fractions `[ell, cap_l]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub k: usize,
    pub p: usize,
    pub ell: f64,
    pub cap_l: f64,
}

impl Constraints {
    pub fn new(k: usize, p: usize, ell: f64, cap_l: f64) -> Result<Self> {
        let c = Self { k, p, ell, cap_l };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        if self.p == 0 || self.p > self.k {
            return Err(Error::invalid(format!(
                "p = {} must lie in 1..=k = {}",
                self.p, self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.ell) || !(self.cap_l > 0.0 && self.cap_l <= 1.0) {
            return Err(Error::invalid("need 0 <= ell <= 1 and 0 < cap_l <= 1"));
        }
        if self.ell > self.cap_l {
            return Err(Error::invalid("ell must not exceed cap_l"));
        }
        let k = self.k as f64;
        let p = self.p as f64;
        if k * self.ell > p + FEAS_TOL || p > k * self.cap_l + FEAS_TOL {
            return Err(Error::Infeasible(format!(
                "need k*ell <= p <= k*cap_l, got k={}, p={}, ell={}, cap_l={}",
                self.k, self.p, self.ell, self.cap_l
            )));
        }
        Ok(())
    }

    /// Integer load bounds `(⌈nℓ⌉, ⌊nL⌋)` for `n` points.
    pub fn load_bounds(&self, n: usize) -> (usize, usize) {
        let n = n as f64;
        (
            ceil_tol(n * self.ell) as usize,
            floor_tol(n * self.cap_l) as usize,
        )
    }
}

/// Per-objective cost matrix; k-center uses `t` on admissible pairs and `+∞` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub kind: CostKind,
    pub n: usize,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostKind {
    KMedian,
    KMeans,
    KCenter { t: f64 },
}

impl CostMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[i * self.n + j]
    }
}

pub fn cost_matrix(instance: &Instance, kind: CostKind) -> CostMatrix {
    let n = instance.n();
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            c[i * n + j] = match kind {
                CostKind::KMedian => instance.dist(i, j),
                CostKind::KMeans => instance.sq_dist(i, j),
                CostKind::KCenter { t } => {
                    if instance.dist(i, j) <= t {
                        t
                    } else {
                        f64::INFINITY
                    }
                }
            };
        }
    }
    CostMatrix { kind, n, c }
}

/// A center: a data point, or free coordinates (centroids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Center {
    Point(usize),
    Coords(Vec<f64>),
}

/// One (center, multiplicity) entry of a point's assignment; `c` indexes `Assignment::centers`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub c: usize,
    pub m: u32,
}

/// Per-point multiset of centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub centers: Vec<Center>,
    pub assign: Vec<Vec<Slot>>,
}

impl Assignment {
    /// Builds an assignment from point-index centers and per-point lists of center positions.
    pub fn from_point_centers(centers: Vec<usize>, assign: Vec<Vec<Slot>>) -> Self {
        Self {
            centers: centers.into_iter().map(Center::Point).collect(),
            assign,
        }
    }

    /// Single-center assignment from cluster labels `0..k`.
    pub fn from_labels(centers: Vec<Center>, labels: &[usize]) -> Self {
        Self {
            centers,
            assign: labels.iter().map(|&c| vec![Slot { c, m: 1 }]).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.assign.len()
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Point indices of the centers, if every center is a data point.
    pub fn center_points(&self) -> Option<Vec<usize>> {
        self.centers
            .iter()
            .map(|c| match c {
                Center::Point(i) => Some(*i),
                Center::Coords(_) => None,
            })
            .collect()
    }

    /// Total multiplicity assigned to each center.
    pub fn counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.centers.len()];
        for slots in &self.assign {
            for s in slots {
                counts[s.c] += s.m;
            }
        }
        counts
    }

    /// Members of each center (a point appears once per center it uses).
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centers.len()];
        for (j, slots) in self.assign.iter().enumerate() {
            for s in slots {
                out[s.c].push(j);
            }
        }
        out
    }

    pub fn multiplicity(&self, j: usize) -> u32 {
        self.assign[j].iter().map(|s| s.m).sum()
    }

    /// Checks indices, per-point total `p`, and per-center multiplicity bound.
    pub fn validate(&self, n: usize, p: usize, max_mult: u32) -> Result<()> {
        if self.assign.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.assign.len(),
            });
        }
        for c in &self.centers {
            if let Center::Point(i) = c {
                if *i >= n {
                    return Err(Error::IndexOutOfRange { index: *i, len: n });
                }
            }
        }
        for (j, slots) in self.assign.iter().enumerate() {
            let mut seen = std::collections::BTreeSet::new();
            for s in slots {
                if s.c >= self.centers.len() {
                    return Err(Error::IndexOutOfRange {
                        index: s.c,
                        len: self.centers.len(),
                    });
                }
                if s.m == 0 || s.m > max_mult {
                    return Err(Error::invariant(format!(
                        "point {j} has multiplicity {} on center {}",
                        s.m, s.c
                    )));
                }
                if !seen.insert(s.c) {
                    return Err(Error::invariant(format!(
                        "point {j} lists center {} twice",
                        s.c
                    )));
                }
            }
            let total = self.multiplicity(j);
            if total as usize != p {
                return Err(Error::invariant(format!(
                    "point {j} has total multiplicity {total}, expected {p}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerant_rounding_absorbs_representation_error() {
        assert_eq!(ceil_tol(10.0 * 0.3), 3.0);
        assert_eq!(floor_tol(10.0 * 0.7), 7.0);
        assert_eq!(ceil_tol(2.5), 3.0);
        assert_eq!(floor_tol(2.5), 2.0);
    }

    #[test]
    fn load_bounds_integerize() {
        let c = Constraints::new(2, 1, 0.3, 0.7).unwrap();
        assert_eq!(c.load_bounds(10), (3, 7));
        let c = Constraints::new(3, 1, 1.0 / 31.0 * 3.0, 1.0).unwrap();
        assert_eq!(c.load_bounds(31), (3, 31));
    }

    #[test]
    fn constraints_reject_impossible_replication() {
        assert!(Constraints::new(2, 3, 0.0, 1.0).is_err());
        assert!(Constraints::new(4, 2, 0.1, 0.6).is_ok());
        assert!(matches!(
            Constraints::new(3, 2, 0.1, 0.6),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            Constraints::new(4, 1, 0.3, 1.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn kmeans_cost_is_squared_without_sqrt() {
        let inst = Instance::from_rows(&[vec![0.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let c = cost_matrix(&inst, CostKind::KMeans);
        assert_eq!(c.get(0, 1), 9.0);
        let c = cost_matrix(&inst, CostKind::KMedian);
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.get(1, 1), 0.0);
    }

    #[test]
    fn kcenter_cost_uses_threshold_sentinel() {
        let inst = Instance::from_rows(&[vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        let c = cost_matrix(&inst, CostKind::KCenter { t: 1.0 });
        assert_eq!(c.get(0, 1), 1.0);
        assert!(c.get(0, 2).is_infinite());
    }

    #[test]
    fn matrix_validation_rejects_asymmetry() {
        assert!(DistMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(DistMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn metric_check_reports_violating_triple() {
        let m = DistMatrix::from_rows(&[
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ])
        .unwrap();
        let err = Instance::from_matrix(m).validate_metric(1e-9).unwrap_err();
        assert!(matches!(
            err,
            Error::MetricViolation {
                i: 0,
                j: 1,
                k: 2,
                ..
            }
        ));
    }

    #[test]
    fn distinct_distances_include_zero() {
        let inst = Instance::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(inst.distinct_distances(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn assignment_json_shape() {
        let a = Assignment::from_point_centers(vec![0, 2], vec![vec![Slot { c: 0, m: 1 }]]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"centers":[0,2],"assign":[[{"c":0,"m":1}]]}"#);
        let back: Assignment = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
    }
}
