//! Balanced k-center with `p`-replication and no constraint violation.
//!
//! For ascending thresholds `t`, the threshold graph `G_t` is split into
//! connected components. Each component gets an LP with `Σ y = k'` for every
//! feasible `k'`; the feasible `k'` form a range, and a global allocation picks
//! one `k'` per component. Openings are made integral by a distance-5 shift
//! organized around a tree of monarchs, which keeps the moved fractional
//! assignment 6-feasible in hop distance; a unit-capacity flow then rounds
//! the assignment without touching the load bounds.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{check_capacities, evaluate, ViolationReport};
use crate::lp::{build, solve_lp, FractionalSolution, Loads, LpSpec, Sense};
use crate::mcf::balanced_assignment;
use crate::model::{Assignment, Constraints, Instance, Objective, Slot};

/// Hop distance for vertices in different components.
pub const UNREACHABLE: u32 = u32::MAX;

/// Openings at most this far from an integer count as integral.
const INT_TOL: f64 = 1e-7;
/// Final snapping tolerance for `y` and the fractional feasibility checks.
const CHECK_TOL: f64 = 1e-6;

/// Distance threshold graph: `(i, j)` is an edge iff `i ≠ j` and `d(i, j) ≤ t`.
#[derive(Debug, Clone)]
pub struct ThresholdGraph {
    pub t: f64,
    adj: Vec<Vec<usize>>,
    comp_of: Vec<usize>,
    components: Vec<Vec<usize>>,
}

impl ThresholdGraph {
    pub fn new(instance: &Instance, t: f64) -> Self {
        let n = instance.n();
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && instance.dist(i, j) <= t)
                    .collect()
            })
            .collect();
        let mut comp_of = vec![usize::MAX; n];
        let mut components = Vec::new();
        for s in 0..n {
            if comp_of[s] != usize::MAX {
                continue;
            }
            let c = components.len();
            let mut members = vec![s];
            comp_of[s] = c;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if comp_of[v] == usize::MAX {
                        comp_of[v] = c;
                        members.push(v);
                        q.push_back(v);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        Self {
            t,
            adj,
            comp_of,
            components,
        }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn component_of(&self, i: usize) -> usize {
        self.comp_of[i]
    }

    /// Local view of component `c` with all-pairs hop distances.
    pub fn component(&self, c: usize) -> Component {
        let nodes = self.components[c].clone();
        let mut local = vec![usize::MAX; self.n()];
        for (a, &v) in nodes.iter().enumerate() {
            local[v] = a;
        }
        let adj: Vec<Vec<usize>> = nodes
            .iter()
            .map(|&v| self.adj[v].iter().map(|&w| local[w]).collect())
            .collect();
        Component::from_adjacency(nodes, adj)
    }
}

/// A connected vertex set in local indices `0..len`, with hop distances.
#[derive(Debug, Clone)]
pub struct Component {
    /// Global index of each local vertex, ascending.
    pub nodes: Vec<usize>,
    adj: Vec<Vec<usize>>,
    hops: Vec<u32>,
}

impl Component {
    /// Builds from a local adjacency list; hop distances come from one BFS per vertex.
    pub fn from_adjacency(nodes: Vec<usize>, adj: Vec<Vec<usize>>) -> Self {
        let n = adj.len();
        let mut hops = vec![UNREACHABLE; n * n];
        let mut q = VecDeque::new();
        for s in 0..n {
            let row = &mut hops[s * n..(s + 1) * n];
            row[s] = 0;
            q.clear();
            q.push_back(s);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if row[v] == UNREACHABLE {
                        row[v] = row[u] + 1;
                        q.push_back(v);
                    }
                }
            }
        }
        Self { nodes, adj, hops }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, a: usize) -> &[usize] {
        &self.adj[a]
    }

    pub fn hop(&self, a: usize, b: usize) -> u32 {
        self.hops[a * self.len() + b]
    }

    pub fn is_connected(&self) -> bool {
        self.hops.iter().all(|&h| h != UNREACHABLE)
    }
}

/// Feasible `k'` for one component; `witnesses[k' - min]` is the LP solution for `k'`.
#[derive(Debug, Clone)]
pub struct KRange {
    pub min: usize,
    pub max: usize,
    pub witnesses: Vec<FractionalSolution>,
}

fn component_lp(
    comp: &Component,
    p: usize,
    k: usize,
    lo: usize,
    hi: usize,
    total: usize,
) -> LpSpec {
    let n = comp.len();
    let admissible = (0..n * n).map(|e| comp.hops[e] <= 1).collect();
    LpSpec {
        n,
        cost: vec![0.0; n * n],
        admissible: Some(admissible),
        p,
        k,
        cardinality: Sense::Eq,
        loads: Loads::Counts { lo, hi, total },
        minimize_cost: false,
    }
}

/// Probes every `k' ≤ k` and returns the feasible range, or `None` if empty.
///
/// `n_total` is the size of the whole instance; loads are bounded by
/// `⌈n_total·ℓ⌉ .. ⌊n_total·L⌋` in every component. A gap in the feasible set
/// is reported as an invariant violation.
pub fn feasible_k_range(
    comp: &Component,
    constraints: &Constraints,
    n_total: usize,
) -> Result<Option<KRange>> {
    let (lo, hi) = constraints.load_bounds(n_total);
    let p = constraints.p;
    let nc = comp.len();
    let demand = nc * p;
    let mut feasible: Vec<(usize, FractionalSolution)> = Vec::new();
    for kk in 1..=constraints.k.min(nc) {
        if kk < p || kk * lo > demand || kk * hi < demand {
            continue;
        }
        let lp = build(component_lp(comp, p, kk, lo, hi, n_total));
        match solve_lp(&lp) {
            Ok(sol) => feasible.push((kk, sol)),
            Err(Error::Infeasible(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let Some(&(min, _)) = feasible.first() else {
        return Ok(None);
    };
    let max = feasible.last().map(|f| f.0).unwrap_or(min);
    if feasible.len() != max - min + 1 {
        let ks: Vec<usize> = feasible.iter().map(|f| f.0).collect();
        return Err(Error::invariant(format!(
            "feasible k' values {ks:?} are not contiguous"
        )));
    }
    Ok(Some(KRange {
        min,
        max,
        witnesses: feasible.into_iter().map(|f| f.1).collect(),
    }))
}

/// Start every component at its minimum, then raise components in index order.
pub fn allocate(ranges: &[(usize, usize)], k: usize) -> Option<Vec<usize>> {
    let lo: usize = ranges.iter().map(|r| r.0).sum();
    let hi: usize = ranges.iter().map(|r| r.1).sum();
    if lo > k || hi < k {
        return None;
    }
    let mut alloc: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let mut left = k - lo;
    for (a, r) in alloc.iter_mut().zip(ranges) {
        let add = left.min(r.1 - r.0);
        *a += add;
        left -= add;
    }
    Some(alloc)
}

/// Tree of monarchs over a connected component (local indices).
#[derive(Debug, Clone, PartialEq)]
pub struct MonarchTree {
    /// Monarchs in creation order; the first is the root.
    pub monarchs: Vec<usize>,
    /// Parent position in `monarchs`, `None` for the root.
    pub parent: Vec<Option<usize>>,
    /// Position in `monarchs` of each vertex's empire.
    pub empire_of: Vec<usize>,
    pub child_monarchs: Vec<Vec<usize>>,
    pub dependents: Vec<Vec<usize>>,
}

impl MonarchTree {
    pub fn empire(&self, pos: usize) -> Vec<usize> {
        (0..self.empire_of.len())
            .filter(|&v| self.empire_of[v] == pos)
            .collect()
    }

    pub fn is_monarch(&self, v: usize) -> bool {
        self.monarchs[self.empire_of[v]] == v
    }
}

/// Grows monarchs from vertex 0; each new monarch is the lowest unmarked vertex
/// at hop distance 2 from the marked set, attached under the lowest such marked vertex.
pub fn build_monarch_tree(comp: &Component) -> MonarchTree {
    let n = comp.len();
    let mut marked = vec![false; n];
    let mut empire_of = vec![usize::MAX; n];
    let mut monarchs = Vec::new();
    let mut parent = Vec::new();
    let mut child_monarchs = vec![Vec::new(); n];
    let mut dependents = vec![Vec::new(); n];
    if n == 0 {
        return MonarchTree {
            monarchs,
            parent,
            empire_of,
            child_monarchs,
            dependents,
        };
    }

    let crown = |u: usize,
                 marked: &mut Vec<bool>,
                 empire_of: &mut Vec<usize>,
                 monarchs: &mut Vec<usize>| {
        let pos = monarchs.len();
        monarchs.push(u);
        for v in std::iter::once(u).chain(comp.neighbors(u).iter().copied()) {
            marked[v] = true;
            empire_of[v] = pos;
        }
    };
    crown(0, &mut marked, &mut empire_of, &mut monarchs);
    parent.push(None);
    loop {
        let mut pick = None;
        'search: for u in (0..n).filter(|&u| !marked[u]) {
            let near = (0..n)
                .filter(|&v| marked[v])
                .map(|v| comp.hop(u, v))
                .min()
                .unwrap_or(UNREACHABLE);
            if near == 2 {
                for v in (0..n).filter(|&v| marked[v]) {
                    if comp.hop(u, v) == 2 {
                        pick = Some((u, v));
                        break 'search;
                    }
                }
            }
        }
        let Some((u, v)) = pick else { break };
        parent.push(Some(empire_of[v]));
        child_monarchs[v].push(u);
        crown(u, &mut marked, &mut empire_of, &mut monarchs);
    }
    for v in 0..n {
        if marked[v] {
            continue;
        }
        let u = comp
            .neighbors(v)
            .iter()
            .copied()
            .filter(|&u| marked[u])
            .min()
            .expect("connected component leaves only distance-1 vertices unmarked");
        dependents[u].push(v);
        empire_of[v] = empire_of[u];
    }
    MonarchTree {
        monarchs,
        parent,
        empire_of,
        child_monarchs,
        dependents,
    }
}

/// Checks the structural guarantees of a monarch tree.
pub fn check_monarch_tree(comp: &Component, tree: &MonarchTree) -> std::result::Result<(), String> {
    let n = comp.len();
    if tree.empire_of.iter().any(|&e| e >= tree.monarchs.len()) {
        return Err("some vertex has no empire".into());
    }
    for (pos, &u) in tree.monarchs.iter().enumerate() {
        if tree.empire_of[u] != pos {
            return Err(format!("monarch {u} is outside its own empire"));
        }
        let mut expect: Vec<usize> = std::iter::once(u)
            .chain(comp.neighbors(u).iter().copied())
            .collect();
        for j in expect.clone() {
            expect.extend(tree.dependents[j].iter().copied());
        }
        expect.sort_unstable();
        if expect != tree.empire(pos) {
            return Err(format!(
                "empire of {u} is not its closed neighborhood plus dependents"
            ));
        }
        if let Some(v) = tree.empire(pos).into_iter().find(|&v| comp.hop(u, v) > 2) {
            return Err(format!(
                "vertex {v} is more than 2 hops from its monarch {u}"
            ));
        }
        if let Some(par) = tree.parent[pos] {
            let h = comp.hop(u, tree.monarchs[par]);
            if h != 3 {
                return Err(format!("monarch {u} is {h} hops from its parent"));
            }
        }
    }
    for j in 0..n {
        let busy = !tree.child_monarchs[j].is_empty() || !tree.dependents[j].is_empty();
        if busy && !tree.monarchs.iter().any(|&u| comp.hop(u, j) == 1) {
            return Err(format!(
                "vertex {j} has children or dependents but is not next to a monarch"
            ));
        }
    }
    Ok(())
}

/// One recorded movement of opening.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Shift {
    pub from: usize,
    pub to: usize,
    pub delta: f64,
    /// `d_G(from, to)`.
    pub hops: u32,
    /// Largest hop distance from an original location of the moved opening to `to`.
    pub travel: u32,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct ShiftLog {
    pub shifts: Vec<Shift>,
}

impl ShiftLog {
    pub fn max_hops(&self) -> u32 {
        self.shifts.iter().map(|s| s.hops).max().unwrap_or(0)
    }

    pub fn max_travel(&self) -> u32 {
        self.shifts.iter().map(|s| s.travel).max().unwrap_or(0)
    }
}

/// Fractional component solution under a sequence of opening shifts.
///
/// Every shift is applied with the proportional Move, so the assignment stays
/// consistent with the openings, and the origin of every unit of opening is
/// tracked to measure how far it has travelled.
#[derive(Debug, Clone)]
pub struct OpeningShift<'a> {
    comp: &'a Component,
    pub frac: FractionalSolution,
    origins: Vec<BTreeMap<usize, f64>>,
    pub log: ShiftLog,
    /// Times `LocalRound` fell back to its third vertex set.
    pub v3_fallbacks: usize,
}

impl<'a> OpeningShift<'a> {
    pub fn new(comp: &'a Component, frac: FractionalSolution) -> Self {
        let origins = frac
            .y
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                if y > 0.0 {
                    BTreeMap::from([(i, y)])
                } else {
                    BTreeMap::new()
                }
            })
            .collect();
        Self {
            comp,
            frac,
            origins,
            log: ShiftLog::default(),
            v3_fallbacks: 0,
        }
    }

    pub fn y(&self) -> &[f64] {
        &self.frac.y
    }

    fn shift(&mut self, from: usize, to: usize, delta: f64) -> Result<()> {
        let ya = self.frac.y[from];
        let delta = if ya - delta < 1e-12 { ya } else { delta };
        if delta <= 0.0 {
            return Ok(());
        }
        let r = delta / ya;
        let moved: Vec<(usize, f64)> = self.origins[from]
            .iter()
            .map(|(&o, &a)| (o, a * r))
            .collect();
        let travel = moved
            .iter()
            .map(|&(o, _)| self.comp.hop(o, to))
            .max()
            .unwrap_or(0);
        if r >= 1.0 {
            self.origins[from].clear();
        } else {
            for a in self.origins[from].values_mut() {
                *a *= 1.0 - r;
            }
        }
        for (o, a) in moved {
            *self.origins[to].entry(o).or_insert(0.0) += a;
        }
        self.frac.move_opening(from, to, delta)?;
        self.log.shifts.push(Shift {
            from,
            to,
            delta,
            hops: self.comp.hop(from, to),
            travel,
        });
        Ok(())
    }

    /// Raises every monarch to a full opening using its neighbors' openings.
    pub fn initial_aggregation(&mut self, tree: &MonarchTree) -> Result<()> {
        for &u in &tree.monarchs {
            for idx in 0..self.comp.neighbors(u).len() {
                let need = 1.0 - self.frac.y[u];
                if need <= INT_TOL {
                    break;
                }
                let j = self.comp.neighbors(u)[idx];
                let yj = self.frac.y[j];
                if yj > 0.0 {
                    self.shift(j, u, need.min(yj))?;
                }
            }
            if 1.0 - self.frac.y[u] > CHECK_TOL {
                return Err(Error::invariant(format!(
                    "neighborhood of monarch {u} holds only {} opening",
                    self.frac.y[u]
                )));
            }
        }
        Ok(())
    }

    /// Fills every vertex of `v1` to 1 from `v2 \ v1`, then from `v3 \ v1`; stops when no donor is left.
    fn local_round(&mut self, v1: &[usize], v2: &[usize], v3: &[usize]) -> Result<()> {
        for &i in v1 {
            while self.frac.y[i] < 1.0 - INT_TOL {
                let donor = |set: &[usize], y: &[f64]| {
                    set.iter()
                        .copied()
                        .find(|&w| !v1.contains(&w) && y[w] > INT_TOL)
                };
                let j = match donor(v2, &self.frac.y) {
                    Some(j) => j,
                    None => match donor(v3, &self.frac.y) {
                        Some(j) => {
                            self.v3_fallbacks += 1;
                            j
                        }
                        None => break,
                    },
                };
                let delta = (1.0 - self.frac.y[i]).min(self.frac.y[j]);
                self.shift(j, i, delta)?;
            }
        }
        Ok(())
    }

    fn mass(&self, set: &[usize]) -> f64 {
        set.iter().map(|&v| self.frac.y[v]).sum()
    }

    fn is_fractional(&self, v: usize) -> bool {
        let y = self.frac.y[v];
        y > INT_TOL && y < 1.0 - INT_TOL
    }

    /// Rounds one monarch's region; all children must already be rounded.
    fn round_monarch(&mut self, tree: &MonarchTree, u: usize) -> Result<()> {
        let nbrs = self.comp.neighbors(u).to_vec();
        for &j in &nbrs {
            let mut others: Vec<usize> = tree.child_monarchs[j]
                .iter()
                .chain(&tree.dependents[j])
                .copied()
                .collect();
            others.sort_unstable();
            let mut x_j = vec![j];
            x_j.extend(&others);
            let count = (self.mass(&x_j) + INT_TOL).floor() as usize;
            let mut w_j: Vec<usize> = others.iter().copied().take(count).collect();
            if count > others.len() {
                w_j.push(j);
            }
            self.local_round(&w_j, &x_j, &[])?;
            let rest: Vec<usize> = x_j.iter().copied().filter(|v| !w_j.contains(v)).collect();
            self.local_round(&[j], &rest, &[])?;
        }
        let f: Vec<usize> = nbrs
            .iter()
            .copied()
            .filter(|&j| self.is_fractional(j))
            .collect();
        let count = (self.mass(&f) + INT_TOL).floor() as usize;
        let w_f: Vec<usize> = f.iter().copied().take(count).collect();
        self.local_round(&w_f, &f, &[])?;
        let rest: Vec<usize> = f.iter().copied().filter(|v| !w_f.contains(v)).collect();
        if self.mass(&rest) > INT_TOL {
            let w_star = rest[0];
            self.local_round(&[w_star], &rest, &[u])?;
        }
        Ok(())
    }

    /// Bottom-up rounding over the tree (children are always created after their parent).
    pub fn round(&mut self, tree: &MonarchTree) -> Result<()> {
        for &u in tree.monarchs.iter().rev() {
            self.round_monarch(tree, u)?;
        }
        Ok(())
    }

    /// Snaps openings to `{0, 1}`; fails if any is further than the check tolerance.
    pub fn snap(&mut self) -> Result<Vec<usize>> {
        let mut open = Vec::new();
        for (i, y) in self.frac.y.iter_mut().enumerate() {
            let r = y.round();
            if (*y - r).abs() > CHECK_TOL || !(r == 0.0 || r == 1.0) {
                return Err(Error::invariant(format!(
                    "opening y_{i} = {y} did not round"
                )));
            }
            *y = r;
            if r == 1.0 {
                open.push(i);
            }
        }
        Ok(open)
    }
}

/// Integral openings reached by a distance-5 shift, with the realized fractional assignment.
#[derive(Debug, Clone)]
pub struct YRounding {
    pub open: Vec<usize>,
    pub frac: FractionalSolution,
    pub log: ShiftLog,
    pub v3_fallbacks: usize,
    pub monarchs: usize,
}

/// Builds the monarch tree, aggregates at monarchs, and rounds `y` bottom-up.
pub fn round_y(comp: &Component, frac: FractionalSolution) -> Result<YRounding> {
    let tree = build_monarch_tree(comp);
    check_monarch_tree(comp, &tree).map_err(|e| Error::invariant(format!("monarch tree: {e}")))?;
    let mut st = OpeningShift::new(comp, frac);
    st.initial_aggregation(&tree)?;
    st.round(&tree)?;
    let open = st.snap()?;
    Ok(YRounding {
        open,
        frac: st.frac,
        log: st.log,
        v3_fallbacks: st.v3_fallbacks,
        monarchs: tree.monarchs.len(),
    })
}

/// Largest hop distance over the support of `x`.
pub fn support_hops(comp: &Component, frac: &FractionalSolution) -> u32 {
    let n = comp.len();
    let mut worst = 0;
    for i in 0..n {
        for j in 0..n {
            if frac.x(i, j) > CHECK_TOL {
                worst = worst.max(comp.hop(i, j));
            }
        }
    }
    worst
}

/// Integral assignment over open local centers: every client gets `p` distinct
/// centers within `max_hops`, every center gets a load in `[lo, hi]`.
///
/// `cost` is the local row-major matrix used to break ties among feasible roundings.
pub fn round_x_kcenter(
    comp: &Component,
    open: &[usize],
    p: usize,
    lo: usize,
    hi: usize,
    max_hops: u32,
    cost: &[f64],
) -> Result<Vec<Vec<usize>>> {
    let n = comp.len();
    let found = balanced_assignment(n, open.len(), p, lo, hi, |c, j| {
        let i = open[c];
        (comp.hop(i, j) <= max_hops).then(|| cost[i * n + j])
    })?;
    let (_, chosen) = found.ok_or_else(|| {
        Error::invariant(format!(
            "assignment flow over {} centers infeasible despite a feasible fractional solution",
            open.len()
        ))
    })?;
    Ok(chosen
        .into_iter()
        .map(|cs| cs.into_iter().map(|c| open[c]).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct KCenterDiagnostics {
    pub threshold: f64,
    pub thresholds_tried: usize,
    pub components: usize,
    /// `(min, max)` feasible `k'` per component at the accepted threshold.
    pub k_ranges: Vec<(usize, usize)>,
    pub allocation: Vec<usize>,
    pub monarchs: usize,
    pub shifts: usize,
    pub max_shift_hops: u32,
    pub max_travel: u32,
    /// Largest hop distance in the fractional support after shifting.
    pub max_fractional_hops: u32,
    /// Largest hop distance of an integral assignment.
    pub max_assignment_hops: u32,
    pub v3_fallbacks: usize,
    /// Largest assigned distance.
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct KCenterOutput {
    pub assignment: Assignment,
    pub threshold: f64,
    pub report: ViolationReport,
    pub diagnostics: KCenterDiagnostics,
}

/// Maximum hop distance allowed between a client and its center.
pub const ASSIGNMENT_HOPS: u32 = 6;

/// Balanced k-center: the first threshold admitting a component-wise allocation wins.
pub fn kcenter_cluster(instance: &Instance, constraints: &Constraints) -> Result<KCenterOutput> {
    constraints.validate()?;
    let n = instance.n();
    let p = constraints.p;
    let (lo, hi) = constraints.load_bounds(n);
    let mut tried = 0;
    for t in instance.distinct_distances() {
        tried += 1;
        let graph = ThresholdGraph::new(instance, t);
        let comps: Vec<Component> = (0..graph.components().len())
            .map(|c| graph.component(c))
            .collect();
        let ranges: Vec<Option<KRange>> = comps
            .par_iter()
            .map(|c| feasible_k_range(c, constraints, n))
            .collect::<Result<_>>()?;
        let Some(ranges) = ranges.into_iter().collect::<Option<Vec<KRange>>>() else {
            continue;
        };
        let bounds: Vec<(usize, usize)> = ranges.iter().map(|r| (r.min, r.max)).collect();
        let Some(alloc) = allocate(&bounds, constraints.k) else {
            continue;
        };
        log::debug!(
            "threshold {t}: allocation {alloc:?} over {} components",
            comps.len()
        );

        let rounded: Vec<(YRounding, u32, Vec<Vec<usize>>)> = comps
            .par_iter()
            .zip(ranges.into_par_iter())
            .zip(alloc.par_iter())
            .map(|((comp, range), &kk)| {
                let frac = range.witnesses[kk - range.min].clone();
                let yr = round_y(comp, frac)?;
                if yr.open.len() != kk {
                    return Err(Error::invariant(format!(
                        "rounding opened {} of {kk} centers",
                        yr.open.len()
                    )));
                }
                yr.frac
                    .check(
                        &Loads::Counts { lo, hi, total: n },
                        kk,
                        Sense::Eq,
                        true,
                        CHECK_TOL,
                    )
                    .map_err(|e| Error::invariant(format!("shifted solution infeasible: {e}")))?;
                let frac_hops = support_hops(comp, &yr.frac);
                if frac_hops > ASSIGNMENT_HOPS {
                    return Err(Error::invariant(format!(
                        "shifted support reaches {frac_hops} hops"
                    )));
                }
                let nc = comp.len();
                let cost: Vec<f64> = (0..nc * nc)
                    .map(|e| instance.dist(comp.nodes[e / nc], comp.nodes[e % nc]))
                    .collect();
                let assign = round_x_kcenter(comp, &yr.open, p, lo, hi, ASSIGNMENT_HOPS, &cost)?;
                Ok((yr, frac_hops, assign))
            })
            .collect::<Result<_>>()?;

        let mut centers = Vec::new();
        let mut per_point: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut diag = KCenterDiagnostics {
            threshold: t,
            thresholds_tried: tried,
            components: comps.len(),
            k_ranges: bounds,
            allocation: alloc,
            monarchs: 0,
            shifts: 0,
            max_shift_hops: 0,
            max_travel: 0,
            max_fractional_hops: 0,
            max_assignment_hops: 0,
            v3_fallbacks: 0,
            radius: 0.0,
        };
        for (comp, (yr, frac_hops, assign)) in comps.iter().zip(&rounded) {
            centers.extend(yr.open.iter().map(|&i| comp.nodes[i]));
            for (j, cs) in assign.iter().enumerate() {
                for &i in cs {
                    diag.max_assignment_hops = diag.max_assignment_hops.max(comp.hop(i, j));
                }
                per_point[comp.nodes[j]] = cs.iter().map(|&i| comp.nodes[i]).collect();
            }
            diag.monarchs += yr.monarchs;
            diag.shifts += yr.log.shifts.len();
            diag.max_shift_hops = diag.max_shift_hops.max(yr.log.max_hops());
            diag.max_travel = diag.max_travel.max(yr.log.max_travel());
            diag.max_fractional_hops = diag.max_fractional_hops.max(*frac_hops);
            diag.v3_fallbacks += yr.v3_fallbacks;
        }
        centers.sort_unstable();
        let pos = |g: usize| centers.binary_search(&g).expect("assigned center is open");
        let assign: Vec<Vec<Slot>> = per_point
            .iter()
            .map(|cs| {
                let mut s: Vec<Slot> = cs.iter().map(|&g| Slot { c: pos(g), m: 1 }).collect();
                s.sort_by_key(|s| s.c);
                s
            })
            .collect();
        let assignment = Assignment::from_point_centers(centers, assign);
        assignment.validate(n, p, 1)?;
        let report = check_capacities(&assignment, constraints, None);
        if assignment
            .counts()
            .iter()
            .any(|&c| (c as usize) < lo || c as usize > hi)
        {
            return Err(Error::invariant(format!(
                "loads {:?} outside [{lo}, {hi}]",
                assignment.counts()
            )));
        }
        diag.radius = evaluate(instance, &assignment, Objective::KCenter)?;
        return Ok(KCenterOutput {
            assignment,
            threshold: t,
            report,
            diagnostics: diag,
        });
    }
    Err(Error::NoSolution(format!(
        "no threshold admits a balanced allocation of k = {} centers",
        constraints.k
    )))
}
