//! Integral minimum-cost flow by successive shortest paths.
//!
//! Negative-cost edges are saturated up front, which turns every residual arc
//! cost nonnegative (and cancels any negative cycle) so Dijkstra with node
//! potentials applies from the first augmentation.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowEdge {
    pub from: usize,
    pub to: usize,
    pub cap: i64,
    pub cost: f64,
}

/// Directed network with integer supplies (negative = demand).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowNetwork {
    supply: Vec<i64>,
    edges: Vec<FlowEdge>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self {
            supply: vec![0; nodes],
            edges: Vec::new(),
        }
    }

    pub fn add_node(&mut self) -> usize {
        self.supply.push(0);
        self.supply.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.supply.len()
    }

    pub fn set_supply(&mut self, v: usize, s: i64) {
        self.supply[v] = s;
    }

    pub fn supply(&self, v: usize) -> i64 {
        self.supply[v]
    }

    pub fn supplies(&self) -> &[i64] {
        &self.supply
    }

    /// Adds an edge and returns its id.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        self.edges.push(FlowEdge {
            from,
            to,
            cap,
            cost,
        });
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }

    fn validate(&self) -> Result<()> {
        let n = self.supply.len();
        if self.supply.iter().sum::<i64>() != 0 {
            return Err(Error::invalid("supplies do not sum to zero"));
        }
        for (id, e) in self.edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(Error::invalid(format!(
                    "edge {id} references a missing node"
                )));
            }
            if e.cap < 0 {
                return Err(Error::invalid(format!("edge {id} has negative capacity")));
            }
            if !e.cost.is_finite() {
                return Err(Error::invalid(format!("edge {id} has non-finite cost")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    /// Flow on each edge, by edge id.
    pub flow: Vec<i64>,
    pub cost: f64,
}

struct Residual {
    head: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Residual {
    fn new(nodes: usize) -> Self {
        Self {
            head: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Adds an arc pair; the reverse of arc `a` is `a ^ 1`.
    fn add(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let a = self.head.len();
        self.head.push(to);
        self.cap.push(cap);
        self.cost.push(cost);
        self.adj[from].push(a);
        self.head.push(from);
        self.cap.push(0);
        self.cost.push(-cost);
        self.adj[to].push(a + 1);
        a
    }

    fn push(&mut self, a: usize, f: i64) {
        self.cap[a] -= f;
        self.cap[a ^ 1] += f;
    }
}

/// Minimum-cost flow meeting every supply and demand exactly.
pub fn solve_mcf(net: &FlowNetwork) -> Result<FlowResult> {
    net.validate()?;
    let n = net.node_count();
    let src = n;
    let sink = n + 1;
    let mut res = Residual::new(n + 2);
    let mut excess = net.supply.clone();
    let mut arcs = Vec::with_capacity(net.edges.len());
    for e in &net.edges {
        let a = res.add(e.from, e.to, e.cap, e.cost);
        if e.cost < 0.0 && e.cap > 0 {
            res.push(a, e.cap);
            excess[e.from] -= e.cap;
            excess[e.to] += e.cap;
        }
        arcs.push(a);
    }
    let mut need = 0i64;
    for (v, &x) in excess.iter().enumerate() {
        if x > 0 {
            res.add(src, v, x, 0.0);
            need += x;
        } else if x < 0 {
            res.add(v, sink, -x, 0.0);
        }
    }

    let nodes = n + 2;
    let mut pot = vec![0.0f64; nodes];
    let mut dist = vec![f64::INFINITY; nodes];
    let mut pred = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    let mut sent = 0i64;
    while sent < need {
        dist.fill(f64::INFINITY);
        pred.fill(usize::MAX);
        done.fill(false);
        dist[src] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((OrderedFloat(0.0), src)));
        while let Some(Reverse((OrderedFloat(d), u))) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            for &a in &res.adj[u] {
                if res.cap[a] <= 0 {
                    continue;
                }
                let v = res.head[a];
                if done[v] {
                    continue;
                }
                let rc = (res.cost[a] + pot[u] - pot[v]).max(0.0);
                let nd = d + rc;
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = a;
                    heap.push(Reverse((OrderedFloat(nd), v)));
                }
            }
        }
        if !dist[sink].is_finite() {
            return Err(Error::Infeasible(format!(
                "flow network admits only {sent} of {need} required units"
            )));
        }
        let cap_t = dist[sink];
        for v in 0..nodes {
            pot[v] += dist[v].min(cap_t);
        }
        let mut f = need - sent;
        let mut v = sink;
        while v != src {
            let a = pred[v];
            f = f.min(res.cap[a]);
            v = res.head[a ^ 1];
        }
        let mut v = sink;
        while v != src {
            let a = pred[v];
            res.push(a, f);
            v = res.head[a ^ 1];
        }
        sent += f;
    }

    let flow: Vec<i64> = net
        .edges
        .iter()
        .zip(&arcs)
        .map(|(e, &a)| e.cap - res.cap[a])
        .collect();
    let cost = net
        .edges
        .iter()
        .zip(&flow)
        .map(|(e, &f)| e.cost * f as f64)
        .sum();
    Ok(FlowResult { flow, cost })
}

/// Integral `p`-fold assignment of `n` clients to `k` centers with each center's
/// load in `[lo, hi]` and each client using a center at most once.
///
/// `cost(c, j)` is `None` for forbidden pairs. Returns `Ok(None)` when no
/// assignment exists, otherwise the minimum cost and the centers of each client
/// in ascending order.
pub fn balanced_assignment(
    n: usize,
    k: usize,
    p: usize,
    lo: usize,
    hi: usize,
    cost: impl Fn(usize, usize) -> Option<f64>,
) -> Result<Option<(f64, Vec<Vec<usize>>)>> {
    if lo > hi || n * p < k * lo || n * p > k * hi {
        return Ok(None);
    }
    let t = n + k;
    let mut net = FlowNetwork::new(n + k + 1);
    for j in 0..n {
        net.set_supply(j, p as i64);
    }
    let mut pairs = Vec::new();
    for c in 0..k {
        net.set_supply(n + c, -(lo as i64));
        net.add_edge(n + c, t, (hi - lo) as i64, 0.0);
        for j in 0..n {
            if let Some(w) = cost(c, j) {
                pairs.push((net.add_edge(j, n + c, 1, w), c, j));
            }
        }
    }
    net.set_supply(t, -((n * p - k * lo) as i64));
    let flow = match solve_mcf(&net) {
        Ok(f) => f,
        Err(Error::Infeasible(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut out = vec![Vec::new(); n];
    for &(e, c, j) in &pairs {
        if flow.flow[e] > 0 {
            out[j].push(c);
        }
    }
    Ok(Some((flow.cost, out)))
}

/// Net outflow minus supply at every node; all zero for a valid flow.
pub fn conservation_residuals(net: &FlowNetwork, flow: &[i64]) -> Vec<i64> {
    let mut bal: Vec<i64> = net.supply.iter().map(|s| -s).collect();
    for (e, &f) in net.edges.iter().zip(flow) {
        bal[e.from] += f;
        bal[e.to] -= f;
    }
    bal
}

/// True if the residual graph of `flow` has a negative-cost cycle (Bellman-Ford).
pub fn has_negative_residual_cycle(net: &FlowNetwork, flow: &[i64], tol: f64) -> bool {
    let n = net.node_count();
    let mut arcs = Vec::new();
    for (e, &f) in net.edges.iter().zip(flow) {
        if f < e.cap {
            arcs.push((e.from, e.to, e.cost));
        }
        if f > 0 {
            arcs.push((e.to, e.from, -e.cost));
        }
    }
    let mut d = vec![0.0f64; n];
    for _ in 0..n {
        let mut changed = false;
        for &(u, v, c) in &arcs {
            if d[u] + c < d[v] - tol {
                d[v] = d[u] + c;
                changed = true;
            }
        }
        if !changed {
            return false;
        }
    }
    true
}
