//! LP-rounding bicriteria approximation for balanced clustering with `p ≥ 2`.
//!
//! Pipeline: LP relaxation → monarchs and empires → aggregation of openings
//! inside each empire → min-cost-flow rounding of the assignment. The output
//! violates upper capacities by at most a factor `1 + 1/⌊p/2⌋` (`(p+2)/p` for
//! even `p`) and assigns each point to a center at most twice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{check_capacities, evaluate, ViolationReport};
use crate::lp::{build_lp, build_threshold_lp, solve_lp, FractionalSolution, Loads, Sense};
use crate::mcf::{solve_mcf, FlowNetwork};
use crate::model::{ceil_tol, floor_tol, Assignment, Constraints, Instance, Objective, Slot};

/// Openings below this are zero during aggregation.
const ZERO_Y: f64 = 1e-9;
/// Slack on lemma assertions.
const LEMMA_TOL: f64 = 1e-6;

/// Monarch admission parameter per objective.
pub fn rho(objective: Objective) -> u32 {
    match objective {
        Objective::KCenter => 1,
        Objective::KMedian => 2,
        Objective::KMeans => 4,
    }
}

/// Worst-case cost ratio to `C_LP` (k-center: to the threshold `t`).
pub fn approximation_ratio(objective: Objective) -> f64 {
    match objective {
        Objective::KCenter => 5.0,
        Objective::KMedian => 11.0,
        Objective::KMeans => 95.0,
    }
}

/// Strict upper bound on aggregated openings: `1 + 1/q`, with `q` the guaranteed
/// integral empire mass (`p` for k-center, `⌊p/2⌋` otherwise).
pub fn opening_bound(p: usize, objective: Objective) -> f64 {
    let q = match objective {
        Objective::KCenter => p,
        _ => p / 2,
    };
    1.0 + 1.0 / q as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Empires {
    /// Monarch point indices in admission order.
    pub monarchs: Vec<usize>,
    /// Position in `monarchs` of each point's monarch.
    pub empire_of: Vec<usize>,
    pub rho: u32,
}

impl Empires {
    pub fn members(&self, m: usize) -> Vec<usize> {
        (0..self.empire_of.len())
            .filter(|&j| self.empire_of[j] == m)
            .collect()
    }
}

/// Greedy monarchs: scan points by `(C_i, i)`, admit `i` unless some monarch `u`
/// has `adm(u,i) ≤ 2ρC_i`; empires are Voronoi cells under `adm`.
///
/// `adm` is `d` (k-median, k-center) or `d²` (k-means), row-major.
pub fn run_monarchs(frac: &FractionalSolution, adm: &[f64], rho: u32) -> Empires {
    let n = frac.n;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| frac.conn[a].total_cmp(&frac.conn[b]).then(a.cmp(&b)));
    let mut monarchs: Vec<usize> = Vec::new();
    for &i in &order {
        let reach = 2.0 * rho as f64 * frac.conn[i];
        if !monarchs.iter().any(|&u| adm[u * n + i] <= reach) {
            monarchs.push(i);
        }
    }
    let empire_of = (0..n)
        .map(|j| {
            let mut best = 0;
            for (m, &u) in monarchs.iter().enumerate() {
                let (d, bd) = (adm[u * n + j], adm[monarchs[best] * n + j]);
                if d < bd || (d == bd && u < monarchs[best]) {
                    best = m;
                }
            }
            best
        })
        .collect();
    Empires {
        monarchs,
        empire_of,
        rho,
    }
}

/// Outcome of the empire properties: partition, closeness, separation, mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lemma1 {
    pub partition: bool,
    pub close: bool,
    pub far: bool,
    pub mass: bool,
}

impl Lemma1 {
    pub fn all(&self) -> bool {
        self.partition && self.close && self.far && self.mass
    }
}

/// Separation is checked as `adm(u,u') > 2ρ·max(C_u, C_u')`; mass as `Σ_E y ≥ p/2` (`≥ p` for k-center).
pub fn check_lemma1(
    emp: &Empires,
    frac: &FractionalSolution,
    adm: &[f64],
    objective: Objective,
) -> Lemma1 {
    let n = frac.n;
    let reach = |c: f64| 2.0 * emp.rho as f64 * c;
    let partition = emp.empire_of.len() == n
        && emp.empire_of.iter().all(|&m| m < emp.monarchs.len())
        && emp
            .monarchs
            .iter()
            .enumerate()
            .all(|(m, &u)| emp.empire_of[u] == m);
    let close = (0..n).all(|j| {
        let u = emp.monarchs[emp.empire_of[j]];
        adm[u * n + j] <= reach(frac.conn[j]) + LEMMA_TOL
    });
    let far = emp.monarchs.iter().enumerate().all(|(a, &u)| {
        emp.monarchs[a + 1..].iter().all(|&v| {
            let r = reach(frac.conn[u].max(frac.conn[v]));
            adm[u * n + v] > r - LEMMA_TOL && (r > 0.0 || adm[u * n + v] > 0.0)
        })
    });
    let need = match objective {
        Objective::KCenter => frac.p as f64,
        _ => frac.p as f64 / 2.0,
    };
    let mut mass = vec![0.0; emp.monarchs.len()];
    for j in 0..n {
        mass[emp.empire_of[j]] += frac.y[j];
    }
    Lemma1 {
        partition,
        close,
        far,
        mass: mass.iter().all(|&m| m >= need - LEMMA_TOL),
    }
}

/// Client `client` had demand moved from center `from` to center `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reassignment {
    pub client: usize,
    pub from: usize,
    pub to: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedSolution {
    pub frac: FractionalSolution,
    /// Points with positive aggregated opening, ascending.
    pub open: Vec<usize>,
    pub moves: Vec<Reassignment>,
}

/// Moves openings within each empire onto its `⌊Y_u⌋` points closest to the monarch,
/// each ending at `z_u = Y_u/⌊Y_u⌋`: farthest nonzero donor first, closest deficient receiver first.
pub fn aggregate(
    frac: &FractionalSolution,
    emp: &Empires,
    adm: &[f64],
) -> Result<AggregatedSolution> {
    let n = frac.n;
    let mut sol = frac.clone();
    let mut moves = Vec::new();
    let cap = 4 * n * n;
    let mut steps = 0;
    for (m, &u) in emp.monarchs.iter().enumerate() {
        let mut members = emp.members(m);
        members.sort_by(|&a, &b| adm[u * n + a].total_cmp(&adm[u * n + b]).then(a.cmp(&b)));
        let total: f64 = members.iter().map(|&v| sol.y[v]).sum();
        let f = floor_tol(total) as usize;
        if f == 0 {
            return Err(Error::invariant(format!(
                "empire of monarch {u} has total opening {total} < 1"
            )));
        }
        let f = f.min(members.len());
        let z = total / f as f64;
        let (targets, others) = members.split_at(f);
        let mut donors: Vec<usize> = others.to_vec();
        donors.reverse();
        for &v in &donors {
            while sol.y[v] > 0.0 {
                steps += 1;
                if steps > cap {
                    return Err(Error::invariant("aggregation exceeded its iteration cap"));
                }
                let r = targets
                    .iter()
                    .copied()
                    .find(|&t| sol.y[t] < z - 1e-12)
                    .unwrap_or_else(|| {
                        *targets
                            .iter()
                            .min_by(|&&a, &&b| sol.y[a].total_cmp(&sol.y[b]).then(a.cmp(&b)))
                            .expect("f >= 1")
                    });
                let mut delta = sol.y[v].min(z - sol.y[r]);
                if delta <= 0.0 || sol.y[v] - delta < ZERO_Y {
                    delta = sol.y[v];
                }
                for (client, amount) in sol.move_opening(v, r, delta)? {
                    moves.push(Reassignment {
                        client,
                        from: v,
                        to: r,
                        amount,
                    });
                }
            }
        }
    }
    let open = (0..n).filter(|&i| sol.y[i] > ZERO_Y).collect();
    Ok(AggregatedSolution {
        frac: sol,
        open,
        moves,
    })
}

/// Properties of the aggregated solution, items (a) through (f).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lemma2 {
    pub openings: bool,
    pub capacity: bool,
    pub total: bool,
    pub x_le_y: bool,
    pub demand: bool,
    pub support: bool,
}

impl Lemma2 {
    pub fn all(&self) -> bool {
        self.openings && self.capacity && self.total && self.x_le_y && self.demand && self.support
    }
}

pub fn check_lemma2(
    agg: &AggregatedSolution,
    before: &FractionalSolution,
    loads: &Loads,
    k: usize,
    bound: f64,
) -> Lemma2 {
    let s = &agg.frac;
    let n = s.n;
    let openings =
        s.y.iter()
            .all(|&y| y.abs() <= ZERO_Y || (y >= 1.0 - LEMMA_TOL && y < bound + 1e-9));
    let capacity = s
        .check(loads, usize::MAX, Sense::Le, false, LEMMA_TOL)
        .is_ok();
    let sum_after: f64 = s.y.iter().sum();
    let sum_before: f64 = before.y.iter().sum();
    let total = (sum_after - sum_before).abs() <= LEMMA_TOL && sum_after <= k as f64 + LEMMA_TOL;
    let x_le_y =
        (0..n).all(|i| (0..n).all(|j| s.x(i, j) >= -LEMMA_TOL && s.x(i, j) <= s.y[i] + LEMMA_TOL));
    let demand =
        (0..n).all(|j| ((0..n).map(|i| s.x(i, j)).sum::<f64>() - s.p as f64).abs() <= LEMMA_TOL);
    let support = agg.open.len() <= k;
    Lemma2 {
        openings,
        capacity,
        total,
        x_le_y,
        demand,
        support,
    }
}

/// Per-reassignment cost bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma3 {
    pub checked: usize,
    /// Largest `lhs − rhs` over all reassignments (≤ 0 when every bound holds exactly).
    pub max_excess: f64,
    pub ok: bool,
}

/// k-median `d(i,j) ≤ 3d(i',j) + 8C_j`; k-means `d² ≤ 15d(i',j)² + 80C_j`; k-center `d ≤ 5t`.
pub fn check_lemma3(
    moves: &[Reassignment],
    dist: &[f64],
    conn: &[f64],
    n: usize,
    objective: Objective,
) -> Lemma3 {
    let mut max_excess = f64::NEG_INFINITY;
    for mv in moves {
        let d_new = dist[mv.to * n + mv.client];
        let d_old = dist[mv.from * n + mv.client];
        let c = conn[mv.client];
        let excess = match objective {
            Objective::KMedian => d_new - (3.0 * d_old + 8.0 * c),
            Objective::KMeans => d_new * d_new - (15.0 * d_old * d_old + 80.0 * c),
            Objective::KCenter => d_new - 5.0 * c,
        };
        max_excess = max_excess.max(excess);
    }
    Lemma3 {
        checked: moves.len(),
        max_excess: if moves.is_empty() { 0.0 } else { max_excess },
        ok: moves.is_empty() || max_excess <= LEMMA_TOL,
    }
}

/// Flow-rounding parameters for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundingSpec<'a> {
    /// Row-major assignment costs; infinite entries are not offered as edges.
    pub cost: &'a [f64],
    pub p: usize,
    /// Integer point masses (all 1 when unweighted).
    pub masses: &'a [u64],
    /// Required load per open center.
    pub lo: u64,
    /// Maximum load per open center.
    pub hi: u64,
}

/// Integral assignment to the open centers with per-pair multiplicity ≤ 2.
///
/// Points of mass `m_j` supply `p·m_j` units over edges of capacity `2·m_j`;
/// centers demand `lo` and pass at most `hi − lo` more to a sink. Unit masses give
/// multiplicities directly; larger masses are rounded per point by largest remainder.
pub fn round_x_mcf(open: &[usize], spec: &RoundingSpec<'_>) -> Result<Assignment> {
    let n = spec.masses.len();
    let kh = open.len();
    if kh == 0 {
        return Err(Error::invariant("no open centers to round onto"));
    }
    let total: u64 = spec.masses.iter().sum::<u64>() * spec.p as u64;
    let base = kh as u64 * spec.lo;
    if base > total || spec.hi < spec.lo {
        return Err(Error::invariant(format!(
            "rounding network cannot balance: {kh} centers x {} > {total}",
            spec.lo
        )));
    }
    let mut net = FlowNetwork::new(n + kh + 1);
    let sink = n + kh;
    let mut edges = vec![Vec::new(); n];
    for j in 0..n {
        let m = spec.masses[j] as i64;
        net.set_supply(j, spec.p as i64 * m);
        if m == 0 {
            continue;
        }
        for (c, &i) in open.iter().enumerate() {
            let cost = spec.cost[i * n + j];
            if cost.is_finite() {
                edges[j].push((c, net.add_edge(j, n + c, 2 * m, cost)));
            }
        }
    }
    for c in 0..kh {
        net.set_supply(n + c, -(spec.lo as i64));
        net.add_edge(n + c, sink, (spec.hi - spec.lo) as i64, 0.0);
    }
    net.set_supply(sink, -((total - base) as i64));
    let flow = solve_mcf(&net).map_err(|e| match e {
        Error::Infeasible(msg) => Error::invariant(format!("rounding flow infeasible: {msg}")),
        other => other,
    })?;

    let mut assign = Vec::with_capacity(n);
    for j in 0..n {
        let m = spec.masses[j];
        let slots = if m == 0 {
            nearest_slots(open, spec.cost, n, j, spec.p)
        } else {
            let shares: Vec<(usize, i64)> = edges[j]
                .iter()
                .map(|&(c, e)| (c, flow.flow[e]))
                .filter(|&(_, f)| f > 0)
                .collect();
            if m == 1 {
                shares
                    .iter()
                    .map(|&(c, f)| Slot { c, m: f as u32 })
                    .collect()
            } else {
                largest_remainder(&shares, m, spec.p, |c| spec.cost[open[c] * n + j])
            }
        };
        assign.push(slots);
    }
    Ok(Assignment::from_point_centers(open.to_vec(), assign))
}

fn nearest_slots(open: &[usize], cost: &[f64], n: usize, j: usize, p: usize) -> Vec<Slot> {
    let mut order: Vec<usize> = (0..open.len()).collect();
    order.sort_by(|&a, &b| {
        cost[open[a] * n + j]
            .total_cmp(&cost[open[b] * n + j])
            .then(a.cmp(&b))
    });
    let mut mult = vec![0u32; open.len()];
    let mut left = p;
    for round in 0..2 {
        for &c in &order {
            if left == 0 {
                break;
            }
            if mult[c] == round {
                mult[c] += 1;
                left -= 1;
            }
        }
    }
    let mut slots: Vec<Slot> = order
        .iter()
        .filter(|&&c| mult[c] > 0)
        .map(|&c| Slot { c, m: mult[c] })
        .collect();
    slots.sort_by_key(|s| s.c);
    slots
}

fn largest_remainder(
    shares: &[(usize, i64)],
    mass: u64,
    p: usize,
    cost: impl Fn(usize) -> f64,
) -> Vec<Slot> {
    let m = mass as i64;
    let mut base: Vec<(usize, i64, i64)> = shares.iter().map(|&(c, f)| (c, f / m, f % m)).collect();
    let assigned: i64 = base.iter().map(|b| b.1).sum();
    let mut left = p as i64 - assigned;
    base.sort_by(|a, b| {
        b.2.cmp(&a.2)
            .then(cost(a.0).total_cmp(&cost(b.0)))
            .then(a.0.cmp(&b.0))
    });
    for b in base.iter_mut() {
        if left == 0 {
            break;
        }
        if b.2 > 0 && b.1 < 2 {
            b.1 += 1;
            left -= 1;
        }
    }
    let mut slots: Vec<Slot> = base
        .into_iter()
        .filter(|b| b.1 > 0)
        .map(|b| Slot {
            c: b.0,
            m: b.1 as u32,
        })
        .collect();
    slots.sort_by_key(|s| s.c);
    slots
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma1: Lemma1,
    pub lemma2: Lemma2,
    pub lemma3: Lemma3,
}

impl LemmaReport {
    pub fn all(&self) -> bool {
        self.lemma1.all() && self.lemma2.all() && self.lemma3.ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicriteriaDiagnostics {
    /// LP optimum `Σ c_ij x_ij` (k-center: `t·n·p`).
    pub c_lp: f64,
    /// Threshold used for k-center runs.
    pub threshold: Option<f64>,
    pub monarchs: usize,
    pub open_centers: usize,
    /// `Σ c_ij x'_ij` after aggregation.
    pub aggregated_cost: f64,
    /// Min-cost-flow objective of the rounding.
    pub rounding_cost: f64,
    /// Objective value of the returned assignment.
    pub value: f64,
    /// `value / C_LP` (k-center: `value / t`).
    pub ratio: f64,
    /// Per-center load cap used by the rounding, in load units.
    pub load_cap: u64,
    pub lemmas: LemmaReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicriteriaOutput {
    pub assignment: Assignment,
    pub report: ViolationReport,
    pub diagnostics: BicriteriaDiagnostics,
}

/// Full pipeline on an unweighted instance.
pub fn bicriteria_cluster(
    instance: &Instance,
    constraints: &Constraints,
    objective: Objective,
) -> Result<BicriteriaOutput> {
    run(instance, constraints, objective, None)
}

/// Weighted pipeline: point `j` carries mass `masses[j]` out of `Σ masses`.
///
/// Capacity rows use `w_j = m_j / Σm`; the rounding works on integer masses with
/// loads `⌊ℓ·Σm⌋ .. ⌈B·L·Σm⌉`, and points of larger mass are rounded per point,
/// so the returned loads are reported rather than guaranteed.
pub fn bicriteria_cluster_weighted(
    instance: &Instance,
    constraints: &Constraints,
    objective: Objective,
    masses: &[u64],
) -> Result<BicriteriaOutput> {
    if masses.len() != instance.n() {
        return Err(Error::DimensionMismatch {
            expected: instance.n(),
            found: masses.len(),
        });
    }
    if masses.iter().sum::<u64>() == 0 {
        return Err(Error::invalid("masses sum to zero"));
    }
    run(instance, constraints, objective, Some(masses))
}

fn run(
    instance: &Instance,
    constraints: &Constraints,
    objective: Objective,
    masses: Option<&[u64]>,
) -> Result<BicriteriaOutput> {
    constraints.validate()?;
    if constraints.p < 2 {
        return Err(Error::Unsupported(
            "LP rounding needs p >= 2; use the kmeanspp path for p = 1".into(),
        ));
    }
    let n = instance.n();
    let p = constraints.p;
    let dist = instance.distance_matrix();
    let total_mass: u64 = masses.map_or(n as u64, |m| m.iter().sum());
    let weights: Option<Vec<f64>> =
        masses.map(|m| m.iter().map(|&v| v as f64 / total_mass as f64).collect());

    let (lp, threshold) = match objective {
        Objective::KMedian | Objective::KMeans => (
            build_lp(instance, constraints, objective, weights.as_deref())?,
            None,
        ),
        Objective::KCenter => {
            let t = smallest_feasible_threshold(instance, constraints, weights.as_deref())?;
            (
                build_threshold_lp(instance, t, constraints, weights.as_deref(), Sense::Le)?,
                Some(t),
            )
        }
    };
    let frac = solve_lp(&lp)?;
    frac.check(&lp.spec.loads, constraints.k, Sense::Le, true, LEMMA_TOL)
        .map_err(|e| Error::invariant(format!("LP solution check failed: {e}")))?;

    let adm: Vec<f64> = match objective {
        Objective::KMeans => dist.iter().map(|d| d * d).collect(),
        _ => dist.clone(),
    };
    let empires = run_monarchs(&frac, &adm, rho(objective));
    let lemma1 = check_lemma1(&empires, &frac, &adm, objective);
    let agg = aggregate(&frac, &empires, &adm)?;
    let bound = opening_bound(p, objective);
    let lemma2 = check_lemma2(&agg, &frac, &lp.spec.loads, constraints.k, bound);
    let lemma3 = check_lemma3(&agg.moves, &dist, &frac.conn, n, objective);
    let lemmas = LemmaReport {
        lemma1,
        lemma2,
        lemma3,
    };
    if !lemmas.all() {
        return Err(Error::invariant(format!(
            "bicriteria lemma check failed: {lemmas:?}"
        )));
    }

    let round_cost: Vec<f64> = match threshold {
        None => lp.spec.cost.clone(),
        Some(t) => dist
            .iter()
            .map(|&d| {
                if d <= 5.0 * t + 1e-9 {
                    5.0 * t
                } else {
                    f64::INFINITY
                }
            })
            .collect(),
    };
    let (lo, hi) = match masses {
        None => {
            let (lo, hi) = constraints.load_bounds(n);
            (lo as u64, ceil_tol(bound * hi as f64) as u64)
        }
        Some(_) => {
            let tm = total_mass as f64;
            (
                floor_tol(constraints.ell * tm) as u64,
                ceil_tol(bound * constraints.cap_l * tm) as u64,
            )
        }
    };
    let unit = vec![1u64; n];
    let spec = RoundingSpec {
        cost: &round_cost,
        p,
        masses: masses.unwrap_or(&unit),
        lo,
        hi,
    };
    let assignment = round_x_mcf(&agg.open, &spec)?;
    assignment.validate(n, p, 2)?;

    let rounding_cost: f64 = assignment
        .assign
        .iter()
        .enumerate()
        .map(|(j, slots)| {
            slots
                .iter()
                .map(|s| s.m as f64 * spec.masses[j] as f64 * round_cost[agg.open[s.c] * n + j])
                .sum::<f64>()
        })
        .sum();
    let aggregated_cost: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| agg.frac.x(i, j) * lp.spec.cost[i * n + j])
        .sum();
    let value = evaluate(instance, &assignment, objective)?;
    let report = check_capacities(&assignment, constraints, weights.as_deref());
    let c_lp = match threshold {
        Some(t) => t * n as f64 * p as f64,
        None => frac.c_lp,
    };
    let scale = threshold.unwrap_or(c_lp);
    let ratio = if scale > 0.0 {
        value / scale
    } else if value <= LEMMA_TOL {
        0.0
    } else {
        f64::INFINITY
    };
    if masses.is_none() {
        let limit = approximation_ratio(objective) * scale + LEMMA_TOL;
        if value > limit {
            return Err(Error::invariant(format!(
                "objective {value} exceeds the guaranteed bound {limit}"
            )));
        }
        let counts = assignment.counts();
        if counts.iter().any(|&c| (c as u64) < lo || c as u64 > hi) {
            return Err(Error::invariant(format!(
                "rounded loads {counts:?} outside [{lo}, {hi}]"
            )));
        }
    }

    Ok(BicriteriaOutput {
        assignment,
        report,
        diagnostics: BicriteriaDiagnostics {
            c_lp,
            threshold,
            monarchs: empires.monarchs.len(),
            open_centers: agg.open.len(),
            aggregated_cost,
            rounding_cost,
            value,
            ratio,
            load_cap: hi,
            lemmas,
        },
    })
}

/// Smallest pairwise distance (or 0) at which the threshold LP with `Σ y ≤ k` is feasible.
pub fn smallest_feasible_threshold(
    instance: &Instance,
    constraints: &Constraints,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let ts = instance.distinct_distances();
    let feasible = |t: f64| -> Result<bool> {
        match solve_lp(&build_threshold_lp(
            instance,
            t,
            constraints,
            weights,
            Sense::Le,
        )?) {
            Ok(_) => Ok(true),
            Err(Error::Infeasible(_)) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let last = *ts.last().expect("at least the zero threshold");
    if !feasible(last)? {
        return Err(Error::Infeasible(
            "threshold LP infeasible at every threshold".into(),
        ));
    }
    let (mut lo, mut hi) = (0usize, ts.len() - 1);
    if feasible(ts[0])? {
        return Ok(ts[0]);
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if feasible(ts[mid])? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ts[hi])
}
