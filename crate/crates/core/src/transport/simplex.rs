//! Primal transportation simplex on the bipartite spanning-tree basis.
//!
//! Nodes `0..m` are sources (rows), `m..m+n` sinks (columns). A basis is
//! `m + n − 1` cells forming a spanning tree. Pricing is Dantzig's rule
//! with lowest-index tie breaking; after a run of degenerate pivots the
//! solver switches to Bland's rule (first improving cell, lowest-index
//! leaving cell) until the objective strictly decreases again, which rules
//! out cycling.

use crate::error::{Error, Result};

const DEGENERATE_RUN_LIMIT: usize = 32;

#[derive(Debug, Clone, Copy)]
struct Slot {
    cell: usize,
    flow: f64,
}

struct Basis {
    m: usize,
    n: usize,
    slots: Vec<Slot>,
    is_basic: Vec<bool>,
    // node → slots of incident basic cells
    adj: Vec<Vec<usize>>,
}

impl Basis {
    fn endpoints(&self, cell: usize) -> (usize, usize) {
        (cell / self.n, self.m + cell % self.n)
    }

    fn push(&mut self, cell: usize, flow: f64) {
        let slot = self.slots.len();
        self.slots.push(Slot { cell, flow });
        self.is_basic[cell] = true;
        let (r, c) = self.endpoints(cell);
        self.adj[r].push(slot);
        self.adj[c].push(slot);
    }

    fn replace(&mut self, slot: usize, cell: usize, flow: f64) {
        let old = self.slots[slot].cell;
        self.is_basic[old] = false;
        let (r, c) = self.endpoints(old);
        self.adj[r].retain(|&s| s != slot);
        self.adj[c].retain(|&s| s != slot);
        self.slots[slot] = Slot { cell, flow };
        self.is_basic[cell] = true;
        let (r, c) = self.endpoints(cell);
        self.adj[r].push(slot);
        self.adj[c].push(slot);
    }

    fn other_end(&self, slot: usize, node: usize) -> usize {
        let (r, c) = self.endpoints(self.slots[slot].cell);
        if node == r {
            c
        } else {
            r
        }
    }
}

/// Solves `min Σ c_ij P_ij` over couplings with row sums `supply` and column
/// sums `demand`. Both must be positive and have equal totals up to rounding.
/// Returns the basic cells as `(row-major cell index, flow)` sorted by cell.
pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<Vec<(usize, f64)>> {
    let (m, n) = (supply.len(), demand.len());
    debug_assert_eq!(cost.len(), m * n);
    let mut basis = Basis {
        m,
        n,
        slots: Vec::with_capacity(m + n - 1),
        is_basic: vec![false; m * n],
        adj: vec![Vec::new(); m + n],
    };

    // north-west corner start
    let (mut i, mut j) = (0, 0);
    let (mut s, mut d) = (supply[0], demand[0]);
    loop {
        let f = s.min(d).max(0.0);
        basis.push(i * n + j, f);
        s -= f;
        d -= f;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 || (i < m - 1 && s <= d) {
            i += 1;
            s = supply[i];
        } else {
            j += 1;
            d = demand[j];
        }
    }

    let scale = cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
    let tol = 1e-12 * scale;
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let mut stack = Vec::with_capacity(m + n);
    let mut seen = vec![false; m + n];
    let mut parent_slot = vec![usize::MAX; m + n];
    let mut degenerate_run = 0;
    let max_pivots = 64 * m * n + 10_000;

    for _ in 0..max_pivots {
        // potentials: u_i + v_j = c_ij on basic cells, u_0 = 0
        seen.iter_mut().for_each(|x| *x = false);
        stack.clear();
        stack.push(0);
        seen[0] = true;
        u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &slot in &basis.adj[node] {
                let other = basis.other_end(slot, node);
                if seen[other] {
                    continue;
                }
                seen[other] = true;
                let c = cost[basis.slots[slot].cell];
                if other >= m {
                    v[other - m] = c - u[node];
                } else {
                    u[other] = c - v[node - m];
                }
                stack.push(other);
            }
        }

        let bland = degenerate_run >= DEGENERATE_RUN_LIMIT;
        let mut entering = None;
        let mut best = -tol;
        'pricing: for r in 0..m {
            for c in 0..n {
                let cell = r * n + c;
                if basis.is_basic[cell] {
                    continue;
                }
                let reduced = cost[cell] - u[r] - v[c];
                if reduced < best {
                    entering = Some(cell);
                    if bland {
                        break 'pricing;
                    }
                    best = reduced;
                }
            }
        }
        let Some(enter) = entering else {
            let mut out: Vec<(usize, f64)> = basis.slots.iter().map(|s| (s.cell, s.flow)).collect();
            out.sort_by_key(|&(c, _)| c);
            return Ok(out);
        };

        // tree path from the entering column back to the entering row
        let (er, ec) = basis.endpoints(enter);
        seen.iter_mut().for_each(|x| *x = false);
        stack.clear();
        stack.push(er);
        seen[er] = true;
        while let Some(node) = stack.pop() {
            if node == ec {
                break;
            }
            for &slot in &basis.adj[node] {
                let other = basis.other_end(slot, node);
                if !seen[other] {
                    seen[other] = true;
                    parent_slot[other] = slot;
                    stack.push(other);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = ec;
        while node != er {
            let slot = parent_slot[node];
            path.push(slot);
            node = basis.other_end(slot, node);
        }

        // path[0], path[2], … lose flow; path[1], path[3], … gain
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for &slot in path.iter().step_by(2) {
            let Slot { cell, flow } = basis.slots[slot];
            if flow < theta || (flow == theta && cell < basis.slots[leave].cell) {
                theta = flow;
                leave = slot;
            }
        }
        for (k, &slot) in path.iter().enumerate() {
            if k % 2 == 0 {
                basis.slots[slot].flow -= theta;
            } else {
                basis.slots[slot].flow += theta;
            }
        }
        basis.replace(leave, enter, theta);
        degenerate_run = if theta > 0.0 { 0 } else { degenerate_run + 1 };
    }
    Err(Error::InvalidParameter("transportation simplex exceeded its pivot budget".into()))
}
