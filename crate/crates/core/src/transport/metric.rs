use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{kernel_metric, BaseKernel};
use crate::measures::DiscreteMeasure;
use crate::numeric::{euclidean_distance, rng_from_seed};
use rand::Rng;

/// Ground metric `d_X` on atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroundMetric {
    Euclidean,
    /// Kernel metric `d_{k₀}(x, y) = ‖k₀(·,x) − k₀(·,y)‖`.
    Kernel { base: BaseKernel },
    /// Explicit symmetric cost matrix. Atoms are one-dimensional and their
    /// coordinate must be an exact integer index into the matrix.
    Explicit { costs: Vec<Vec<f64>> },
}

impl GroundMetric {
    pub fn validate(&self) -> Result<()> {
        match self {
            GroundMetric::Euclidean => Ok(()),
            GroundMetric::Kernel { base } => base.validate(),
            GroundMetric::Explicit { costs } => {
                let n = costs.len();
                for (i, row) in costs.iter().enumerate() {
                    if row.len() != n {
                        return Err(Error::InvalidParameter("explicit cost matrix is not square".into()));
                    }
                    for (j, &c) in row.iter().enumerate() {
                        if !c.is_finite() || c < 0.0 {
                            return Err(Error::InvalidParameter("explicit costs must be finite and nonnegative".into()));
                        }
                        if c != costs[j][i] {
                            return Err(Error::NonSymmetricInput((c - costs[j][i]).abs()));
                        }
                        if i == j && c != 0.0 {
                            return Err(Error::InvalidParameter("explicit cost matrix needs a zero diagonal".into()));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        match self {
            GroundMetric::Euclidean => Ok(euclidean_distance(x, y)),
            GroundMetric::Kernel { base } => kernel_metric(base, x, y),
            GroundMetric::Explicit { costs } => Ok(costs[explicit_index(x, costs.len())?][explicit_index(y, costs.len())?]),
        }
    }

    /// Row-major `|μ| × |ν|` matrix of ground costs between atoms.
    pub fn cost_matrix(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Vec<f64>> {
        if mu.dim() != nu.dim() {
            return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
        }
        let mut out = Vec::with_capacity(mu.len() * nu.len());
        for a in mu.atoms() {
            for b in nu.atoms() {
                out.push(self.distance(a, b)?);
            }
        }
        Ok(out)
    }

    /// Probabilistic check of the metric axioms on `trials` random triples
    /// drawn from `points`: symmetry, zero diagonal, nonnegativity and the
    /// triangle inequality, each to within `tol`.
    pub fn check_axioms(&self, points: &[Vec<f64>], trials: usize, seed: u64, tol: f64) -> Result<()> {
        if points.is_empty() {
            return Err(Error::EmptySupport);
        }
        let mut rng = rng_from_seed(seed);
        for _ in 0..trials {
            let p = &points[rng.random_range(0..points.len())];
            let q = &points[rng.random_range(0..points.len())];
            let r = &points[rng.random_range(0..points.len())];
            let (pq, qp, pr, rq) = (self.distance(p, q)?, self.distance(q, p)?, self.distance(p, r)?, self.distance(r, q)?);
            let pp = self.distance(p, p)?;
            let fail = |what: &str| Err(Error::InvalidParameter(format!("ground metric violates {what}")));
            if pq < 0.0 {
                return fail("nonnegativity");
            }
            if (pq - qp).abs() > tol {
                return fail("symmetry");
            }
            if pp.abs() > tol {
                return fail("zero diagonal");
            }
            if pq > pr + rq + tol {
                return fail("the triangle inequality");
            }
        }
        Ok(())
    }
}

fn explicit_index(x: &[f64], n: usize) -> Result<usize> {
    if x.len() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: x.len() });
    }
    let v = x[0];
    if v.fract() != 0.0 || v < 0.0 || v >= n as f64 {
        return Err(Error::InvalidTableIndex(v));
    }
    Ok(v as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_ground_cost_matches_kernel_metric() {
        let base = BaseKernel::gaussian(0.5);
        let m = GroundMetric::Kernel { base: base.clone() };
        let (x, y) = ([0.1, 0.2], [0.7, 0.4]);
        let k = |a: &[f64], b: &[f64]| base.eval(a, b).unwrap();
        let expect = (k(&x, &x) - 2.0 * k(&x, &y) + k(&y, &y)).sqrt();
        assert_eq!(m.distance(&x, &y).unwrap(), expect);
    }

    #[test]
    fn axioms_hold_for_builtin_metrics() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0]).collect();
        GroundMetric::Euclidean.check_axioms(&pts, 1000, 1, 1e-10).unwrap();
        GroundMetric::Kernel { base: BaseKernel::gaussian(0.2) }.check_axioms(&pts, 1000, 2, 1e-10).unwrap();
    }

    #[test]
    fn explicit_metric() {
        let costs = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]];
        let m = GroundMetric::Explicit { costs };
        m.validate().unwrap();
        assert_eq!(m.distance(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!(m.distance(&[0.5], &[1.0]).is_err());
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        // d(0,2) = 3 > d(0,1) + d(1,2) = 2
        assert!(m.check_axioms(&pts, 1000, 0, 1e-10).is_err());
    }
}
