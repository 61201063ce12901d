//! The clustering LP relaxation and its fractional solutions.
//!
//! Variables: `x_ij` (client `j` served by center `i`) and openings `y_i`.
//! Rows, in order: demand `Σ_i x_ij = p`; lower then upper capacity rows;
//! the cardinality row on `Σ y_i`; and `x_ij ≤ y_i`. Pairs that are not
//! admissible (k-center thresholds) get no variable, which fixes them at 0.

use crate::error::{Error, Result};
use crate::lp::simplex::{self, LpProblem, Sense};
use crate::model::{cost_matrix, Constraints, CostKind, Instance, Objective};

const ABSENT: usize = usize::MAX;

/// Maps `(i, j)` and `i` to LP column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct VarMap {
    pub n: usize,
    x: Vec<usize>,
    pub y: Vec<usize>,
}

impl VarMap {
    pub fn x(&self, i: usize, j: usize) -> Option<usize> {
        match self.x[i * self.n + j] {
            ABSENT => None,
            v => Some(v),
        }
    }

    pub fn num_x(&self) -> usize {
        self.x.iter().filter(|&&v| v != ABSENT).count()
    }
}

/// How capacity rows measure load.
#[derive(Debug, Clone, PartialEq)]
pub enum Loads {
    /// Integer bounds on counts; each assignment weighs `1/total`.
    Counts { lo: usize, hi: usize, total: usize },
    /// Real bounds on `Σ w_j x_ij`.
    Weighted { w: Vec<f64>, ell: f64, cap_l: f64 },
}

impl Loads {
    pub fn unweighted(constraints: &Constraints, n: usize) -> Self {
        let (lo, hi) = constraints.load_bounds(n);
        Loads::Counts { lo, hi, total: n }
    }

    fn weight(&self, j: usize) -> f64 {
        match self {
            Loads::Counts { total, .. } => 1.0 / *total as f64,
            Loads::Weighted { w, .. } => w[j],
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match self {
            Loads::Counts { lo, hi, total } => {
                (*lo as f64 / *total as f64, *hi as f64 / *total as f64)
            }
            Loads::Weighted { ell, cap_l, .. } => (*ell, *cap_l),
        }
    }
}

/// Fully specified clustering LP over `n` local points.
#[derive(Debug, Clone)]
pub struct LpSpec {
    pub n: usize,
    /// Row-major `c_ij`; used for the objective when `minimize_cost` is set and always for `C_j`.
    pub cost: Vec<f64>,
    pub admissible: Option<Vec<bool>>,
    pub p: usize,
    pub k: usize,
    pub cardinality: Sense,
    pub loads: Loads,
    pub minimize_cost: bool,
}

#[derive(Debug, Clone)]
pub struct ClusterLp {
    pub problem: LpProblem,
    pub vars: VarMap,
    pub spec: LpSpec,
}

pub fn build(spec: LpSpec) -> ClusterLp {
    let n = spec.n;
    let mut lp = LpProblem::new();
    let mut x = vec![ABSENT; n * n];
    for i in 0..n {
        for j in 0..n {
            if spec.admissible.as_ref().is_none_or(|a| a[i * n + j]) {
                let c = if spec.minimize_cost {
                    spec.cost[i * n + j]
                } else {
                    0.0
                };
                x[i * n + j] = lp.add_var(format!("x_{i}_{j}"), c, 1.0);
            }
        }
    }
    let y: Vec<usize> = (0..n)
        .map(|i| lp.add_var(format!("y_{i}"), 0.0, 1.0))
        .collect();
    let vars = VarMap { n, x, y };

    for j in 0..n {
        let row = (0..n)
            .filter_map(|i| vars.x(i, j).map(|v| (v, 1.0)))
            .collect();
        lp.add_row(row, Sense::Eq, spec.p as f64);
    }
    let (lo, hi) = spec.loads.bounds();
    for (bound, sense) in [(lo, Sense::Ge), (hi, Sense::Le)] {
        for i in 0..n {
            let mut row: Vec<(usize, f64)> = (0..n)
                .filter_map(|j| vars.x(i, j).map(|v| (v, spec.loads.weight(j))))
                .collect();
            row.push((vars.y[i], -bound));
            lp.add_row(row, sense, 0.0);
        }
    }
    lp.add_row(
        vars.y.iter().map(|&v| (v, 1.0)).collect(),
        spec.cardinality,
        spec.k as f64,
    );
    for i in 0..n {
        for j in 0..n {
            if let Some(v) = vars.x(i, j) {
                lp.add_row(vec![(v, 1.0), (vars.y[i], -1.0)], Sense::Le, 0.0);
            }
        }
    }
    ClusterLp {
        problem: lp,
        vars,
        spec,
    }
}

fn loads_for(
    instance: &Instance,
    constraints: &Constraints,
    weights: Option<&[f64]>,
) -> Result<Loads> {
    match weights {
        None => Ok(Loads::unweighted(constraints, instance.n())),
        Some(w) => {
            if w.len() != instance.n() {
                return Err(Error::DimensionMismatch {
                    expected: instance.n(),
                    found: w.len(),
                });
            }
            Ok(Loads::Weighted {
                w: w.to_vec(),
                ell: constraints.ell,
                cap_l: constraints.cap_l,
            })
        }
    }
}

/// LP relaxation for k-median or k-means (`Σ y ≤ k`).
pub fn build_lp(
    instance: &Instance,
    constraints: &Constraints,
    objective: Objective,
    weights: Option<&[f64]>,
) -> Result<ClusterLp> {
    constraints.validate()?;
    let kind = match objective {
        Objective::KMedian => CostKind::KMedian,
        Objective::KMeans => CostKind::KMeans,
        Objective::KCenter => {
            return Err(Error::invalid(
                "k-center uses the threshold LP (build_threshold_lp)",
            ));
        }
    };
    Ok(build(LpSpec {
        n: instance.n(),
        cost: cost_matrix(instance, kind).c,
        admissible: None,
        p: constraints.p,
        k: constraints.k,
        cardinality: Sense::Le,
        loads: loads_for(instance, constraints, weights)?,
        minimize_cost: true,
    }))
}

/// Feasibility LP at threshold `t`: only pairs with `d(i,j) ≤ t` get variables.
pub fn build_threshold_lp(
    instance: &Instance,
    t: f64,
    constraints: &Constraints,
    weights: Option<&[f64]>,
    cardinality: Sense,
) -> Result<ClusterLp> {
    constraints.validate()?;
    let cm = cost_matrix(instance, CostKind::KCenter { t });
    let admissible = cm.c.iter().map(|c| c.is_finite()).collect();
    let cost =
        cm.c.iter()
            .map(|&c| if c.is_finite() { c } else { 0.0 })
            .collect();
    Ok(build(LpSpec {
        n: instance.n(),
        cost,
        admissible: Some(admissible),
        p: constraints.p,
        k: constraints.k,
        cardinality,
        loads: loads_for(instance, constraints, weights)?,
        minimize_cost: false,
    }))
}

/// LP optimum `(x, y)` with connection costs `C_j = Σ_i c_ij x_ij / p` and `C_LP = Σ_j p C_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalSolution {
    pub n: usize,
    pub p: usize,
    /// Row-major: `x[i * n + j]` is the fraction of client `j` served by `i`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub c_lp: f64,
    pub conn: Vec<f64>,
}

impl FractionalSolution {
    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.n + j]
    }

    /// Recomputes `C_j` and `C_LP` from a cost matrix.
    pub fn refresh_costs(&mut self, cost: &[f64]) {
        let n = self.n;
        self.conn = (0..n)
            .map(|j| {
                (0..n)
                    .map(|i| cost[i * n + j] * self.x[i * n + j])
                    .sum::<f64>()
                    / self.p as f64
            })
            .collect();
        self.c_lp = self.conn.iter().sum::<f64>() * self.p as f64;
    }

    /// Moves opening `delta` from `a` to `b`, carrying a proportional share of `a`'s clients.
    ///
    /// Returns `(client, amount)` for every reassigned client.
    pub fn move_opening(&mut self, a: usize, b: usize, delta: f64) -> Result<Vec<(usize, f64)>> {
        let ya = self.y[a];
        if delta < 0.0 || delta > ya + 1e-12 {
            return Err(Error::invalid(format!(
                "move of {delta} exceeds opening {ya} at {a}"
            )));
        }
        if ya <= 0.0 {
            return Err(Error::invalid(format!("point {a} has no opening to move")));
        }
        if a == b || delta == 0.0 {
            return Ok(Vec::new());
        }
        let n = self.n;
        let full = ya - delta <= 1e-15;
        let r = if full { 1.0 } else { delta / ya };
        let mut moved = Vec::new();
        for u in 0..n {
            let xa = self.x[a * n + u];
            if xa == 0.0 {
                continue;
            }
            let t = xa * r;
            self.x[a * n + u] = if full { 0.0 } else { xa - t };
            self.x[b * n + u] += t;
            moved.push((u, t));
        }
        if full {
            self.y[b] += ya;
            self.y[a] = 0.0;
        } else {
            self.y[a] = ya - delta;
            self.y[b] += delta;
        }
        Ok(moved)
    }

    /// Checks demand, capacity, cardinality and `0 ≤ x ≤ y` within `tol`.
    ///
    /// `y ≤ 1` is checked only when `unit_openings` is set.
    pub fn check(
        &self,
        loads: &Loads,
        k: usize,
        cardinality: Sense,
        unit_openings: bool,
        tol: f64,
    ) -> std::result::Result<(), String> {
        let n = self.n;
        for j in 0..n {
            let s: f64 = (0..n).map(|i| self.x(i, j)).sum();
            if (s - self.p as f64).abs() > tol {
                return Err(format!("client {j} has total assignment {s}"));
            }
        }
        let (lo, hi) = loads.bounds();
        for i in 0..n {
            let load: f64 = (0..n).map(|j| loads.weight(j) * self.x(i, j)).sum();
            if load < lo * self.y[i] - tol || load > hi * self.y[i] + tol {
                return Err(format!(
                    "center {i} load {load} outside [{}, {}]",
                    lo * self.y[i],
                    hi * self.y[i]
                ));
            }
        }
        let total: f64 = self.y.iter().sum();
        let card_ok = match cardinality {
            Sense::Le => total <= k as f64 + tol,
            Sense::Ge => total >= k as f64 - tol,
            Sense::Eq => (total - k as f64).abs() <= tol,
        };
        if !card_ok {
            return Err(format!("sum of openings {total} violates cardinality {k}"));
        }
        for i in 0..n {
            if self.y[i] < -tol || (unit_openings && self.y[i] > 1.0 + tol) {
                return Err(format!("opening y_{i} = {} out of range", self.y[i]));
            }
            for j in 0..n {
                let v = self.x(i, j);
                if v < -tol || v > self.y[i] + tol {
                    return Err(format!("x_{i}_{j} = {v} not in [0, y_{i} = {}]", self.y[i]));
                }
            }
        }
        Ok(())
    }
}

/// Solves a built LP and extracts the fractional solution.
pub fn solve_lp(lp: &ClusterLp) -> Result<FractionalSolution> {
    let sol = simplex::solve(&lp.problem)?;
    let n = lp.vars.n;
    let mut x = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if let Some(v) = lp.vars.x(i, j) {
                x[i * n + j] = sol.values[v];
            }
        }
    }
    let y = lp.vars.y.iter().map(|&v| sol.values[v]).collect();
    let mut frac = FractionalSolution {
        n,
        p: lp.spec.p,
        x,
        y,
        c_lp: 0.0,
        conn: Vec::new(),
    };
    frac.refresh_costs(&lp.spec.cost);
    Ok(frac)
}

/// Feasibility witness for the k-center LP at threshold `t` with `Σ y = k`.
pub fn kcenter_lp_feasible(
    instance: &Instance,
    t: f64,
    constraints: &Constraints,
    weights: Option<&[f64]>,
) -> Result<FractionalSolution> {
    solve_lp(&build_threshold_lp(
        instance,
        t,
        constraints,
        weights,
        Sense::Eq,
    )?)
}
