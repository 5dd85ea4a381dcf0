//! Primal network simplex for balanced transportation problems.
//!
//! Sources `0..m` ship to sinks `0..k` over a complete bipartite graph with
//! non-negative costs and unbounded capacities. The tree starts from
//! artificial root arcs; entering arcs come from block pricing and the
//! leaving arc is the last blocking arc met when walking the cycle in flow
//! direction from its apex (the strongly feasible rule, which rules out
//! cycling on degenerate pivots).

use crate::error::{GmtError, Result};

#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub cost: f64,
    /// `(source, sink, amount)` for every positive flow.
    pub flows: Vec<(usize, usize, f64)>,
    /// Node potentials with `cost_ij + π_i − π_{m+j} ≥ 0` at optimality
    /// (sources first, then sinks).
    pub potentials: Vec<f64>,
    pub pivots: usize,
}

struct Simplex<'a> {
    m: usize,
    k: usize,
    cost: &'a [f64],
    art_cost: f64,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    depth: Vec<usize>,
    pi: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl<'a> Simplex<'a> {
    fn n_nodes(&self) -> usize {
        self.m + self.k + 1
    }

    fn root(&self) -> usize {
        self.m + self.k
    }

    fn n_real(&self) -> usize {
        self.m * self.k
    }

    fn src(&self, a: usize) -> usize {
        if a < self.n_real() {
            a / self.k
        } else {
            let node = a - self.n_real();
            if node < self.m {
                node
            } else {
                self.root()
            }
        }
    }

    fn dst(&self, a: usize) -> usize {
        if a < self.n_real() {
            self.m + a % self.k
        } else {
            let node = a - self.n_real();
            if node < self.m {
                self.root()
            } else {
                node
            }
        }
    }

    fn arc_cost(&self, a: usize) -> f64 {
        if a < self.n_real() {
            self.cost[a]
        } else {
            self.art_cost
        }
    }

    fn other(&self, a: usize, v: usize) -> usize {
        let s = self.src(a);
        if s == v {
            self.dst(a)
        } else {
            s
        }
    }

    /// Rebuild parent pointers, depths and potentials from the tree arcs.
    fn rebuild(&mut self) {
        let root = self.root();
        let n = self.n_nodes();
        self.parent.iter_mut().for_each(|p| *p = NONE);
        self.pred.iter_mut().for_each(|p| *p = NONE);
        self.depth[root] = 0;
        self.pi[root] = 0.0;
        let mut queue = Vec::with_capacity(n);
        queue.push(root);
        let mut head = 0;
        let mut seen = vec![false; n];
        seen[root] = true;
        while head < queue.len() {
            let v = queue[head];
            head += 1;
            for idx in 0..self.adj[v].len() {
                let a = self.adj[v][idx];
                let w = self.other(a, v);
                if seen[w] {
                    continue;
                }
                seen[w] = true;
                self.parent[w] = v;
                self.pred[w] = a;
                self.depth[w] = self.depth[v] + 1;
                let c = self.arc_cost(a);
                // reduced cost c + π_src − π_dst vanishes on tree arcs
                self.pi[w] = if self.src(a) == v {
                    self.pi[v] + c
                } else {
                    self.pi[v] - c
                };
                queue.push(w);
            }
        }
    }

    fn reduced(&self, a: usize) -> f64 {
        self.arc_cost(a) + self.pi[self.src(a)] - self.pi[self.dst(a)]
    }

    fn pivot(&mut self, enter: usize) -> Result<()> {
        let u = self.src(enter);
        let v = self.dst(enter);
        // climb to the common ancestor
        let (mut a, mut b) = (u, v);
        let mut u_side = Vec::new();
        let mut v_side = Vec::new();
        while a != b {
            if self.depth[a] >= self.depth[b] {
                u_side.push(a);
                a = self.parent[a];
            } else {
                v_side.push(b);
                b = self.parent[b];
            }
        }
        // cycle in flow direction from the apex: down to u, the entering
        // arc, then up from v; each entry is (arc, increases?)
        let mut cycle: Vec<(usize, bool)> = Vec::with_capacity(u_side.len() + v_side.len() + 1);
        for &x in u_side.iter().rev() {
            let arc = self.pred[x];
            cycle.push((arc, self.src(arc) == self.parent[x]));
        }
        cycle.push((enter, true));
        for &x in &v_side {
            let arc = self.pred[x];
            cycle.push((arc, self.src(arc) == x));
        }
        let mut delta = f64::INFINITY;
        let mut leave = NONE;
        for &(arc, inc) in &cycle {
            if !inc && self.flow[arc] <= delta {
                delta = self.flow[arc];
                leave = arc;
            }
        }
        if leave == NONE {
            return Err(GmtError::Solver("unbounded transport cycle".into()));
        }
        for &(arc, inc) in &cycle {
            if inc {
                self.flow[arc] += delta;
            } else {
                self.flow[arc] = (self.flow[arc] - delta).max(0.0);
            }
        }
        self.flow[leave] = 0.0;
        if leave != enter {
            let (ls, ld) = (self.src(leave), self.dst(leave));
            self.adj[ls].retain(|&x| x != leave);
            self.adj[ld].retain(|&x| x != leave);
            self.in_tree[leave] = false;
            self.in_tree[enter] = true;
            self.adj[u].push(enter);
            self.adj[v].push(enter);
            self.rebuild();
        }
        Ok(())
    }
}

/// Minimum-cost transport of `supply` to `demand` with `cost[i·k + j]`.
/// Totals must agree to within `1e-12` relative.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportSolution> {
    let m = supply.len();
    let k = demand.len();
    if cost.len() != m * k {
        return Err(GmtError::InvalidInput(
            "cost matrix has the wrong size".into(),
        ));
    }
    if supply
        .iter()
        .chain(demand)
        .any(|v| !(*v >= 0.0 && v.is_finite()))
    {
        return Err(GmtError::InvalidInput(
            "supplies and demands must be non-negative".into(),
        ));
    }
    if cost.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
        return Err(GmtError::InvalidInput("costs must be non-negative".into()));
    }
    let ts: f64 = supply.iter().sum();
    let td: f64 = demand.iter().sum();
    if (ts - td).abs() > 1e-12 * ts.max(td).max(1e-300) {
        return Err(GmtError::InvalidInput(format!(
            "unbalanced problem: {ts} vs {td}"
        )));
    }
    if m == 0 || k == 0 || ts == 0.0 {
        return Ok(TransportSolution {
            cost: 0.0,
            flows: vec![],
            potentials: vec![0.0; m + k],
            pivots: 0,
        });
    }
    let max_cost = cost.iter().copied().fold(0.0, f64::max);
    let n_nodes = m + k + 1;
    let n_arcs = m * k + m + k;
    let mut s = Simplex {
        m,
        k,
        cost,
        art_cost: (max_cost + 1.0) * n_nodes as f64,
        flow: vec![0.0; n_arcs],
        in_tree: vec![false; n_arcs],
        adj: vec![Vec::new(); n_nodes],
        parent: vec![NONE; n_nodes],
        pred: vec![NONE; n_nodes],
        depth: vec![0; n_nodes],
        pi: vec![0.0; n_nodes],
    };
    let root = m + k;
    for node in 0..m + k {
        let a = m * k + node;
        s.flow[a] = if node < m {
            supply[node]
        } else {
            demand[node - m]
        };
        s.in_tree[a] = true;
        s.adj[node].push(a);
        s.adj[root].push(a);
    }
    s.rebuild();

    let n_real = m * k;
    let block = ((n_real as f64).sqrt().ceil() as usize).max(10);
    let eps = 1e-12 * (max_cost + 1.0);
    let mut next = 0usize;
    let mut pivots = 0usize;
    let max_pivots = 50 * n_arcs + 10_000;
    loop {
        // block pricing over real arcs, starting where the last search ended
        let mut best = NONE;
        let mut best_rc = -eps;
        let mut scanned = 0usize;
        let mut in_block = 0usize;
        while scanned < n_real {
            let a = next;
            next += 1;
            if next == n_real {
                next = 0;
            }
            scanned += 1;
            in_block += 1;
            if !s.in_tree[a] {
                let rc = s.reduced(a);
                if rc < best_rc {
                    best_rc = rc;
                    best = a;
                }
            }
            if in_block == block {
                if best != NONE {
                    break;
                }
                in_block = 0;
            }
        }
        if best == NONE {
            break;
        }
        s.pivot(best)?;
        pivots += 1;
        if pivots > max_pivots {
            return Err(GmtError::Solver(
                "network simplex pivot limit reached".into(),
            ));
        }
    }

    let art: f64 = s.flow[n_real..].iter().sum();
    if art > 1e-9 * ts {
        return Err(GmtError::Solver(format!(
            "infeasible transport: residual {art}"
        )));
    }
    let mut total = 0.0;
    let mut flows = Vec::new();
    for a in 0..n_real {
        if s.flow[a] > 0.0 {
            total += s.flow[a] * cost[a];
            flows.push((a / k, a % k, s.flow[a]));
        }
    }
    Ok(TransportSolution {
        cost: total,
        flows,
        potentials: s.pi[..m + k].to_vec(),
        pivots,
    })
}
