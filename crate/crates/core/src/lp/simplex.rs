//! Dense revised primal simplex with bounded variables.
//!
//! Two phases with artificial variables, Dantzig pricing (lowest index on
//! ties) and a permanent switch to Bland's rule after `10 * columns`
//! degenerate pivots. `B⁻¹` is kept dense and rebuilt by Gauss-Jordan
//! elimination every `max(64, m)` pivots.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min c·x` subject to rows and `0 ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub names: Vec<String>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self {
            objective: Vec::new(),
            upper: Vec::new(),
            rows: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, cost: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.upper.push(upper);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(LpRow { coeffs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Row/column listing in CPLEX LP text form.
    pub fn to_lp_text(&self) -> String {
        let mut s = String::from("Minimize\n obj:");
        let term = |s: &mut String, c: f64, name: &str| {
            let _ = write!(
                s,
                " {} {} {}",
                if c < 0.0 { '-' } else { '+' },
                c.abs(),
                name
            );
        };
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                term(&mut s, c, &self.names[j]);
            }
        }
        s.push_str("\nSubject To\n");
        for (r, row) in self.rows.iter().enumerate() {
            let _ = write!(s, " r{r}:");
            for &(j, a) in &row.coeffs {
                term(&mut s, a, &self.names[j]);
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " {op} {}", row.rhs);
        }
        s.push_str("Bounds\n");
        for (j, &u) in self.upper.iter().enumerate() {
            if u.is_finite() {
                let _ = writeln!(s, " 0 <= {} <= {}", self.names[j], u);
            } else {
                let _ = writeln!(s, " {} >= 0", self.names[j]);
            }
        }
        s.push_str("End\n");
        s
    }
}

impl Default for LpProblem {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

const PRICE_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const PHASE1_TOL: f64 = 1e-7;
const NONBASIC: usize = usize::MAX;

struct Tableau {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    upper: Vec<f64>,
    b: Vec<f64>,
    binv: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    at_upper: Vec<bool>,
    xb: Vec<f64>,
    pi: Vec<f64>,
    bland: bool,
    degenerate: usize,
    degenerate_limit: usize,
    iterations: usize,
    since_refactor: usize,
    refactor_every: usize,
}

enum Step {
    Optimal,
    Progress,
}

impl Tableau {
    fn build(lp: &LpProblem) -> Result<(Self, usize)> {
        let nv = lp.num_vars();
        let m = lp.rows.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
        let mut upper = lp.upper.clone();
        let mut b = Vec::with_capacity(m);
        let mut senses = Vec::with_capacity(m);
        for (r, row) in lp.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::invalid(format!("row {r} has non-finite rhs")));
            }
            let flip = row.rhs < 0.0;
            let sgn = if flip { -1.0 } else { 1.0 };
            for &(j, a) in &row.coeffs {
                if j >= nv || !a.is_finite() {
                    return Err(Error::invalid(format!("row {r} has a bad coefficient")));
                }
                if a != 0.0 {
                    cols[j].push((r, sgn * a));
                }
            }
            b.push(sgn * row.rhs);
            senses.push(match (row.sense, flip) {
                (Sense::Le, false) | (Sense::Ge, true) => Sense::Le,
                (Sense::Ge, false) | (Sense::Le, true) => Sense::Ge,
                (Sense::Eq, _) => Sense::Eq,
            });
        }
        for (j, u) in upper.iter().enumerate() {
            if u.is_nan() || *u < 0.0 {
                return Err(Error::invalid(format!(
                    "variable {j} has a bad upper bound"
                )));
            }
        }
        let mut basis = vec![NONBASIC; m];
        for (r, s) in senses.iter().enumerate() {
            match s {
                Sense::Le => {
                    basis[r] = cols.len();
                    cols.push(vec![(r, 1.0)]);
                    upper.push(f64::INFINITY);
                }
                Sense::Ge => {
                    cols.push(vec![(r, -1.0)]);
                    upper.push(f64::INFINITY);
                }
                Sense::Eq => {}
            }
        }
        let art_start = cols.len();
        for (r, s) in senses.iter().enumerate() {
            if *s != Sense::Le {
                basis[r] = cols.len();
                cols.push(vec![(r, 1.0)]);
                upper.push(f64::INFINITY);
            }
        }
        let ncols = cols.len();
        let mut pos = vec![NONBASIC; ncols];
        for (r, &j) in basis.iter().enumerate() {
            pos[j] = r;
        }
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let t = Tableau {
            m,
            cols,
            upper,
            xb: b.clone(),
            b,
            binv,
            basis,
            pos,
            at_upper: vec![false; ncols],
            pi: vec![0.0; m],
            bland: false,
            degenerate: 0,
            degenerate_limit: 10 * ncols,
            iterations: 0,
            since_refactor: 0,
            refactor_every: m.max(64),
        };
        Ok((t, art_start))
    }

    fn compute_pi(&mut self, cost: &[f64]) {
        let m = self.m;
        self.pi.fill(0.0);
        for r in 0..m {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (p, &v) in self.pi.iter_mut().zip(row) {
                    *p += cb * v;
                }
            }
        }
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        cost[j]
            - self.cols[j]
                .iter()
                .map(|&(i, a)| self.pi[i] * a)
                .sum::<f64>()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(i, a) in &self.cols[j] {
            for (r, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[r * m + i] * a;
            }
        }
        alpha
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, a) in &self.cols[j] {
                bmat[i * m + r] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        for c in 0..m {
            let mut piv = c;
            let mut best = bmat[c * m + c].abs();
            for r in c + 1..m {
                let v = bmat[r * m + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return Err(Error::invariant("simplex basis became singular"));
            }
            if piv != c {
                for k in 0..m {
                    bmat.swap(c * m + k, piv * m + k);
                    inv.swap(c * m + k, piv * m + k);
                }
            }
            let d = bmat[c * m + c];
            for k in 0..m {
                bmat[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = bmat[r * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        bmat[r * m + k] -= f * bmat[c * m + k];
                        inv[r * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        let mut rhs = self.b.clone();
        for (j, col) in self.cols.iter().enumerate() {
            if self.pos[j] == NONBASIC && self.at_upper[j] {
                for &(i, a) in col {
                    rhs[i] -= a * self.upper[j];
                }
            }
        }
        for r in 0..m {
            self.xb[r] = (0..m).map(|i| self.binv[r * m + i] * rhs[i]).sum();
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn step(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> Result<Step> {
        let ncols = self.cols.len();
        let mut entering = None;
        let mut best_score = 0.0;
        for j in 0..ncols {
            if self.pos[j] != NONBASIC || !allowed(j) || self.upper[j] == 0.0 {
                continue;
            }
            let d = self.reduced_cost(cost, j);
            let score = if self.at_upper[j] { d } else { -d };
            if score > PRICE_TOL {
                if self.bland {
                    entering = Some((j, d));
                    break;
                }
                if score > best_score {
                    best_score = score;
                    entering = Some((j, d));
                }
            }
        }
        let Some((q, dq)) = entering else {
            return Ok(Step::Optimal);
        };
        let dir = if self.at_upper[q] { -1.0 } else { 1.0 };
        let alpha = self.ftran(q);

        let mut leave: Option<(usize, f64, bool)> = None;
        for (r, &a) in alpha.iter().enumerate() {
            let g = dir * a;
            let (limit, to_upper) = if g > PIVOT_TOL {
                (self.xb[r].max(0.0) / g, false)
            } else if g < -PIVOT_TOL && self.upper[self.basis[r]].is_finite() {
                ((self.upper[self.basis[r]] - self.xb[r]).max(0.0) / -g, true)
            } else {
                continue;
            };
            let better = match leave {
                None => true,
                Some((lr, lt, _)) => {
                    if limit < lt - 1e-12 {
                        true
                    } else if limit <= lt + 1e-12 {
                        if self.bland {
                            self.basis[r] < self.basis[lr]
                        } else {
                            let (ga, gb) = (g.abs(), (dir * alpha[lr]).abs());
                            ga > gb || (ga == gb && self.basis[r] < self.basis[lr])
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                leave = Some((r, limit, to_upper));
            }
        }

        let uq = self.upper[q];
        let theta = match leave {
            Some((_, t, _)) if t < uq => t,
            _ if uq.is_finite() => uq,
            _ => return Err(Error::invariant("LP is unbounded")),
        };
        for (x, &a) in self.xb.iter_mut().zip(&alpha) {
            *x -= theta * dir * a;
        }
        self.iterations += 1;
        if theta <= 1e-12 {
            self.degenerate += 1;
            if self.degenerate > self.degenerate_limit {
                self.bland = true;
            }
        }

        match leave {
            Some((r, t, to_upper)) if t < uq => {
                let start = if self.at_upper[q] { uq } else { 0.0 };
                let out = self.basis[r];
                self.pos[out] = NONBASIC;
                self.at_upper[out] = to_upper;
                self.basis[r] = q;
                self.pos[q] = r;
                self.at_upper[q] = false;
                self.xb[r] = start + dir * theta;
                self.pivot(r, &alpha);
                let m = self.m;
                for i in 0..m {
                    self.pi[i] += dq * self.binv[r * m + i];
                }
                self.since_refactor += 1;
                if self.since_refactor >= self.refactor_every {
                    self.refactor()?;
                    self.compute_pi(cost);
                }
            }
            _ => {
                self.at_upper[q] = !self.at_upper[q];
            }
        }
        Ok(Step::Progress)
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let ar = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= ar;
        }
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        for (i, &ai) in alpha.iter().enumerate() {
            if i == r || ai == 0.0 {
                continue;
            }
            let row = if i < r {
                &mut before[i * m..(i + 1) * m]
            } else {
                let o = (i - r - 1) * m;
                &mut after[o..o + m]
            };
            for (x, &p) in row.iter_mut().zip(prow.iter()) {
                *x -= ai * p;
            }
        }
    }

    fn run(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> Result<()> {
        self.compute_pi(cost);
        let limit = 200 * (self.m + self.cols.len()) + 10_000;
        loop {
            match self.step(cost, allowed)? {
                Step::Optimal => return Ok(()),
                Step::Progress => {
                    if self.iterations > limit {
                        return Err(Error::invariant("simplex iteration limit reached"));
                    }
                }
            }
        }
    }

    fn value(&self, j: usize) -> f64 {
        match self.pos[j] {
            NONBASIC => {
                if self.at_upper[j] {
                    self.upper[j]
                } else {
                    0.0
                }
            }
            r => self.xb[r],
        }
    }
}

/// Solves `lp`; `Error::Infeasible` when phase 1 ends above tolerance.
pub fn solve(lp: &LpProblem) -> Result<LpSolution> {
    let nv = lp.num_vars();
    let (mut t, art_start) = Tableau::build(lp)?;
    let ncols = t.cols.len();

    if art_start < ncols {
        let mut c1 = vec![0.0; ncols];
        c1[art_start..].fill(1.0);
        t.run(&c1, &|_| true)?;
        t.refactor()?;
        let infeas: f64 = (art_start..ncols).map(|j| t.value(j)).sum();
        if infeas > PHASE1_TOL {
            return Err(Error::Infeasible(format!(
                "LP phase 1 ends with infeasibility {infeas:.3e}"
            )));
        }
        for j in art_start..ncols {
            t.upper[j] = 0.0;
        }
    }

    let mut c2 = vec![0.0; ncols];
    c2[..nv].copy_from_slice(&lp.objective);
    t.bland = false;
    t.degenerate = 0;
    t.run(&c2, &|j| j < art_start)?;
    t.refactor()?;

    let values: Vec<f64> = (0..nv)
        .map(|j| t.value(j).clamp(0.0, lp.upper[j]))
        .collect();
    let objective = values.iter().zip(&lp.objective).map(|(x, c)| x * c).sum();
    Ok(LpSolution {
        values,
        objective,
        iterations: t.iterations,
    })
}
