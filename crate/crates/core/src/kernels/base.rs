use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::squared_distance;

/// Radicands of the kernel metric within this distance below zero are
/// treated as rounding noise and clamped.
pub const RADICAND_CLAMP: f64 = 1e-12;

/// A bounded positive-definite kernel `k₀` on points of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseKernel {
    /// `exp(−‖x−y‖² / (2γ))`; `γ` acts as a squared lengthscale.
    Gaussian { gamma: f64 },
    /// `(1 + ‖x−y‖²/c²)^{−1/2}`, normalised so that `k(x, x) = 1`.
    InverseMultiquadric { c: f64 },
    /// Explicit PSD matrix over the grid `{0, 1, …, G−1} ⊂ R`. One-dimensional
    /// points are snapped to the nearest grid index, which keeps the kernel
    /// positive definite (it is the pullback of the matrix along rounding).
    Table { matrix: Vec<Vec<f64>> },
}

impl BaseKernel {
    pub fn gaussian(gamma: f64) -> Self {
        BaseKernel::Gaussian { gamma }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaseKernel::Gaussian { gamma } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::InvalidParameter(format!("gaussian gamma must be positive, got {gamma}")));
                }
            }
            BaseKernel::InverseMultiquadric { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::InvalidParameter(format!("inverse multiquadric c must be positive, got {c}")));
                }
            }
            BaseKernel::Table { matrix } => {
                let g = matrix.len();
                if g == 0 {
                    return Err(Error::InvalidParameter("empty table kernel".into()));
                }
                for (i, row) in matrix.iter().enumerate() {
                    if row.len() != g {
                        return Err(Error::InvalidParameter("table kernel matrix is not square".into()));
                    }
                    for (j, v) in row.iter().enumerate() {
                        if !v.is_finite() {
                            return Err(Error::NonFinite("table kernel entries"));
                        }
                        if *v != matrix[j][i] {
                            return Err(Error::NonSymmetricInput((v - matrix[j][i]).abs()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// The bound `C_{k₀} ≥ sup |k₀|`.
    pub fn bound(&self) -> f64 {
        match self {
            BaseKernel::Gaussian { .. } | BaseKernel::InverseMultiquadric { .. } => 1.0,
            BaseKernel::Table { matrix } => matrix.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }

    /// Lipschitz constant of `x ↦ k₀(x, y)` w.r.t. the Euclidean norm,
    /// uniformly in `y`. `None` for the table kernel, which is discontinuous.
    pub fn lipschitz_one_argument(&self) -> Option<f64> {
        match self {
            // max_r (r/γ) e^{−r²/2γ} is attained at r = √γ
            BaseKernel::Gaussian { gamma } => Some((-0.5_f64).exp() / gamma.sqrt()),
            // max_t t (1+t²)^{−3/2} / c is attained at t = 1/√2
            BaseKernel::InverseMultiquadric { c } => Some(2.0 / (3.0 * 3.0_f64.sqrt() * c)),
            BaseKernel::Table { .. } => None,
        }
    }

    /// Fails unless `x` is a valid input point for this kernel.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if let BaseKernel::Table { matrix } = self {
            if x.len() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: x.len() });
            }
            table_index(x[0], matrix.len())?;
        }
        Ok(())
    }

    /// Evaluation without dimension or index checks. Callers must have
    /// validated their inputs with [`BaseKernel::check_point`].
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            BaseKernel::Gaussian { gamma } => (-squared_distance(x, y) / (2.0 * gamma)).exp(),
            BaseKernel::InverseMultiquadric { c } => 1.0 / (1.0 + squared_distance(x, y) / (c * c)).sqrt(),
            BaseKernel::Table { matrix } => {
                let g = matrix.len();
                let i = table_index(x[0], g).expect("validated table index");
                let j = table_index(y[0], g).expect("validated table index");
                matrix[i][j]
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.eval_unchecked(x, y))
    }
}

fn table_index(x: f64, g: usize) -> Result<usize> {
    let r = x.round();
    if !r.is_finite() || r < 0.0 || r >= g as f64 {
        return Err(Error::InvalidTableIndex(x));
    }
    Ok(r as usize)
}

/// `k₀(x, y)` with dimension checks.
pub fn eval_base(spec: &BaseKernel, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}

/// Kernel metric `√(k(x,x) − 2k(x,y) + k(y,y))`, the RKHS distance between
/// the feature vectors of `x` and `y`.
pub fn kernel_metric(spec: &BaseKernel, x: &[f64], y: &[f64]) -> Result<f64> {
    let radicand = spec.eval(x, x)? - 2.0 * spec.eval(x, y)? + spec.eval(y, y)?;
    clamped_sqrt(radicand)
}

pub(crate) fn clamped_sqrt(radicand: f64) -> Result<f64> {
    if radicand < -RADICAND_CLAMP {
        return Err(Error::NegativeRadicand(radicand));
    }
    Ok(radicand.max(0.0).sqrt())
}
