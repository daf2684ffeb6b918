//! Kantorovich–Rubinstein (Wasserstein-1) distances between discrete measures.
//!
//! The exact solver works in primal form: a transportation simplex returns
//! an optimal coupling whose cost equals the dual supremum over 1-Lipschitz
//! test functions. [`w1_1d`] and [`w1_bruteforce`] are independent oracles
//! for it, and [`w1_sinkhorn`] is an entropic approximation for large
//! supports.

mod metric;
mod simplex;
mod sinkhorn;

pub use metric::GroundMetric;
pub use sinkhorn::{w1_sinkhorn, SinkhornOutcome, SINKHORN_MARGINAL_TOLERANCE};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::numeric::pairwise_sum;

/// Largest combined support `|μ| + |ν|` accepted by [`w1_exact`].
pub const MAX_EXACT_SUPPORT: usize = 10_000;

/// An optimal coupling between two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    coupling: Vec<f64>,
    cost: f64,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major `rows × cols` coupling matrix.
    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.cols + j]
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Maximum absolute deviation of the row and column sums from the
    /// marginals `mu` and `nu`.
    pub fn marginal_error(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let mut err = 0.0_f64;
        for i in 0..self.rows {
            let s: f64 = (0..self.cols).map(|j| self.get(i, j)).sum();
            err = err.max((s - mu.weight(i)).abs());
        }
        for j in 0..self.cols {
            let s: f64 = (0..self.rows).map(|i| self.get(i, j)).sum();
            err = err.max((s - nu.weight(j)).abs());
        }
        err
    }

    /// Writes the coupling as CSV, one row of the matrix per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| format!("{:?}", self.get(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    Ok(())
}

/// Exact `W1(μ, ν)` under `metric`, with an optimal coupling as witness.
///
/// Zero-weight atoms are dropped before solving and reappear as zero rows or
/// columns of the plan. Pivoting is deterministic, so repeated calls return
/// bit-identical plans.
pub fn w1_exact(mu: &DiscreteMeasure, nu: &DiscreteMeasure, metric: &GroundMetric) -> Result<(f64, TransportPlan)> {
    check_pair(mu, nu)?;
    let combined = mu.len() + nu.len();
    if combined > MAX_EXACT_SUPPORT {
        return Err(Error::SupportTooLarge(combined));
    }
    let (mu_r, keep_r) = mu.without_zero_weights();
    let (nu_r, keep_c) = nu.without_zero_weights();
    let cost = metric.cost_matrix(&mu_r, &nu_r)?;
    let basic = simplex::solve(mu_r.weights(), nu_r.weights(), &cost)?;

    let (rows, cols) = (mu.len(), nu.len());
    let mut coupling = vec![0.0; rows * cols];
    let nr = nu_r.len();
    let mut terms = Vec::with_capacity(basic.len());
    for &(cell, flow) in &basic {
        let (i, j) = (cell / nr, cell % nr);
        coupling[keep_r[i] * cols + keep_c[j]] = flow;
        terms.push(flow * cost[cell]);
    }
    let total = pairwise_sum(&terms);
    Ok((total, TransportPlan { rows, cols, coupling, cost: total }))
}

/// Closed-form `W1` on the real line: `∫ |F_μ(t) − F_ν(t)| dt`.
pub fn w1_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_pair(mu, nu)?;
    if mu.dim() != 1 {
        return Err(Error::DimensionNotOne(mu.dim()));
    }
    let mut events: Vec<(f64, f64)> = mu
        .atoms()
        .zip(mu.weights())
        .map(|(a, &w)| (a[0], w))
        .chain(nu.atoms().zip(nu.weights()).map(|(a, &w)| (a[0], -w)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cdf_gap = 0.0;
    let mut terms = Vec::with_capacity(events.len());
    for k in 0..events.len() - 1 {
        cdf_gap += events[k].1;
        terms.push(cdf_gap.abs() * (events[k + 1].0 - events[k].0));
    }
    Ok(pairwise_sum(&terms))
}

/// Minimum cost over every vertex of the transport polytope, found by
/// enumerating all spanning-tree bases. Supports up to 4×4 only.
pub fn w1_bruteforce(mu: &DiscreteMeasure, nu: &DiscreteMeasure, metric: &GroundMetric) -> Result<f64> {
    check_pair(mu, nu)?;
    let (m, n) = (mu.len(), nu.len());
    if m > 4 || n > 4 {
        return Err(Error::SupportTooLargeForBruteForce { rows: m, cols: n });
    }
    let cost = metric.cost_matrix(mu, nu)?;
    let cells = m * n;
    let basis_size = m + n - 1;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1u32 << cells) {
        if mask.count_ones() as usize != basis_size {
            continue;
        }
        let chosen: Vec<usize> = (0..cells).filter(|c| mask & (1 << c) != 0).collect();
        if let Some(flows) = tree_flows(m, n, &chosen, mu.weights(), nu.weights()) {
            if flows.iter().all(|&f| f >= -1e-12) {
                let c: f64 = chosen.iter().zip(&flows).map(|(&cell, f)| f.max(0.0) * cost[cell]).sum();
                best = best.min(c);
            }
        }
    }
    Ok(best)
}

/// Flows on the unique solution supported on `cells`, or `None` when the
/// cells do not form a spanning tree of the bipartite graph.
fn tree_flows(m: usize, n: usize, cells: &[usize], supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
    let nodes = m + n;
    let mut parent: Vec<usize> = (0..nodes).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for &c in cells {
        let (a, b) = (find(&mut parent, c / n), find(&mut parent, m + c % n));
        if a == b {
            return None;
        }
        parent[a] = b;
    }
    // peel leaves: a leaf's only edge must carry its whole residual mass
    let mut residual: Vec<f64> = supply.iter().chain(demand).copied().collect();
    let mut flows = vec![0.0; cells.len()];
    let mut alive = vec![true; cells.len()];
    for _ in 0..cells.len() {
        let mut degree = vec![0usize; nodes];
        for (k, &c) in cells.iter().enumerate() {
            if alive[k] {
                degree[c / n] += 1;
                degree[m + c % n] += 1;
            }
        }
        let (k, leaf) = cells
            .iter()
            .enumerate()
            .filter(|(k, _)| alive[*k])
            .find_map(|(k, &c)| {
                let (r, col) = (c / n, m + c % n);
                if degree[r] == 1 {
                    Some((k, r))
                } else if degree[col] == 1 {
                    Some((k, col))
                } else {
                    None
                }
            })?;
        let c = cells[k];
        let other = if leaf == c / n { m + c % n } else { c / n };
        let f = residual[leaf];
        flows[k] = f;
        residual[leaf] = 0.0;
        residual[other] -= f;
        alive[k] = false;
    }
    Some(flows)
}

/// `d_KR²[(μ₁, μ₁′), (μ₂, μ₂′)] = W1(μ₁, μ₂) + W1(μ₁′, μ₂′)`.
pub fn dkr2(
    pair1: (&DiscreteMeasure, &DiscreteMeasure),
    pair2: (&DiscreteMeasure, &DiscreteMeasure),
    metric: &GroundMetric,
) -> Result<f64> {
    Ok(w1_exact(pair1.0, pair2.0, metric)?.0 + w1_exact(pair1.1, pair2.1, metric)?.0)
}
