use serde::Serialize;

use super::GroundMetric;
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::numeric::pairwise_sum;

/// Row-marginal L1 violation above which a run is reported as not converged.
pub const SINKHORN_MARGINAL_TOLERANCE: f64 = 1e-6;

const STOP_TOLERANCE: f64 = 1e-10;

/// Result of an entropic transport solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinkhornOutcome {
    /// `Σ P_ij c_ij` for the entropic plan `P` (no entropy term).
    pub cost: f64,
    pub iterations: usize,
    /// L1 distance between the row sums of `P` and the weights of `μ`.
    pub marginal_violation: f64,
    /// False when the violation is still above [`SINKHORN_MARGINAL_TOLERANCE`].
    pub converged: bool,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + pairwise_sum(&values.iter().map(|v| (v - max).exp()).collect::<Vec<_>>()).ln()
}

/// Log-domain Sinkhorn iterations for the entropic problem
/// `min ⟨P, C⟩ − ε H(P)` over couplings of `μ` and `ν`.
///
/// The transport cost of the entropic plan decreases towards the exact
/// `W1` as `ε → 0`. Non-convergence is reported through
/// [`SinkhornOutcome::converged`] rather than as an error.
pub fn w1_sinkhorn(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    metric: &GroundMetric,
    epsilon: f64,
    max_iters: usize,
) -> Result<SinkhornOutcome> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be positive".into()));
    }
    let (mu, _) = mu.without_zero_weights();
    let (nu, _) = nu.without_zero_weights();
    let cost = metric.cost_matrix(&mu, &nu)?;
    let (m, n) = (mu.len(), nu.len());
    let log_a: Vec<f64> = mu.weights().iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = nu.weights().iter().map(|w| w.ln()).collect();
    // P_ij = exp(log_a_i + log_b_j + (f_i + g_j − c_ij)/ε)
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut buf = vec![0.0; m.max(n)];
    let log_plan = |f: &[f64], g: &[f64], i: usize, j: usize| log_a[i] + log_b[j] + (f[i] + g[j] - cost[i * n + j]) / epsilon;

    let mut violation = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        for i in 0..m {
            for j in 0..n {
                buf[j] = log_b[j] + (g[j] - cost[i * n + j]) / epsilon;
            }
            f[i] = -epsilon * log_sum_exp(&buf[..n]);
        }
        for j in 0..n {
            for i in 0..m {
                buf[i] = log_a[i] + (f[i] - cost[i * n + j]) / epsilon;
            }
            g[j] = -epsilon * log_sum_exp(&buf[..m]);
        }
        // columns are exact after the g-update; measure the rows
        violation = (0..m)
            .map(|i| {
                let row: Vec<f64> = (0..n).map(|j| log_plan(&f, &g, i, j).exp()).collect();
                (pairwise_sum(&row) - mu.weight(i)).abs()
            })
            .sum();
        if violation < STOP_TOLERANCE {
            break;
        }
    }
    let terms: Vec<f64> = (0..m * n).map(|c| log_plan(&f, &g, c / n, c % n).exp() * cost[c]).collect();
    Ok(SinkhornOutcome {
        cost: pairwise_sum(&terms),
        iterations,
        marginal_violation: violation,
        converged: violation <= SINKHORN_MARGINAL_TOLERANCE,
    })
}
