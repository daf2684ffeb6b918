use serde::{Deserialize, Serialize};

use super::base::{clamped_sqrt, BaseKernel};
use crate::error::{Error, Result};
use crate::measures::{empirical_measure, measure_mean, DiscreteMeasure, DomainBox, ParticleConfiguration};
use crate::numeric::{pairwise_sum_by, squared_distance};

/// Permutation-invariant feature map `φ: P(X) → R^q` used by pullback kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureMap {
    /// `Σ w_i a_i`.
    Mean,
    /// Coordinatewise moments `Σ w_i (a_i)_k^q` for `q = 1..=order`, ordered
    /// by `q` then by axis.
    Moments { order: u32 },
    /// Gaussian bumps of width `bandwidth` centred on `grid` points, averaged
    /// over the measure: `φ_j(μ) = Σ w_i exp(−‖a_i − g_j‖² / 2h²)`.
    SoftHistogram { grid: Vec<Vec<f64>>, bandwidth: f64 },
}

impl FeatureMap {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            FeatureMap::Mean => Ok(()),
            FeatureMap::Moments { order } => {
                if *order == 0 {
                    return Err(Error::InvalidParameter("moment order must be at least 1".into()));
                }
                Ok(())
            }
            FeatureMap::SoftHistogram { grid, bandwidth } => {
                if grid.is_empty() {
                    return Err(Error::InvalidParameter("soft histogram grid is empty".into()));
                }
                if let Some(g) = grid.iter().find(|g| g.len() != dim) {
                    return Err(Error::DimensionMismatch { expected: dim, got: g.len() });
                }
                if !(bandwidth.is_finite() && *bandwidth > 0.0) {
                    return Err(Error::InvalidParameter("soft histogram bandwidth must be positive".into()));
                }
                Ok(())
            }
        }
    }

    pub fn output_dim(&self, dim: usize) -> usize {
        match self {
            FeatureMap::Mean => dim,
            FeatureMap::Moments { order } => dim * *order as usize,
            FeatureMap::SoftHistogram { grid, .. } => grid.len(),
        }
    }

    pub fn features(&self, mu: &DiscreteMeasure) -> Vec<f64> {
        match self {
            FeatureMap::Mean => measure_mean(mu),
            FeatureMap::Moments { order } => {
                let mut out = Vec::with_capacity(self.output_dim(mu.dim()));
                for q in 1..=*order as i32 {
                    for k in 0..mu.dim() {
                        out.push(pairwise_sum_by(mu.len(), &|i| mu.weight(i) * mu.atom(i)[k].powi(q)));
                    }
                }
                out
            }
            FeatureMap::SoftHistogram { grid, bandwidth } => {
                let h2 = 2.0 * bandwidth * bandwidth;
                grid.iter()
                    .map(|g| pairwise_sum_by(mu.len(), &|i| mu.weight(i) * (-squared_distance(mu.atom(i), g) / h2).exp()))
                    .collect()
            }
        }
    }

    /// Constant `L` with `‖φ(μ) − φ(ν)‖₂ ≤ L · W1(μ, ν)` (Euclidean ground
    /// metric) for measures supported in `domain`.
    ///
    /// Each feature is `∫ g dμ` for a Lipschitz `g`, and Kantorovich duality
    /// bounds every coordinate by `Lip(g) · W1`. For `Mean` the bound is the
    /// sharper `‖∫ x d(μ−ν)‖ ≤ W1`. `Moments` needs the domain because
    /// `x ↦ x^q` is only Lipschitz on bounded sets.
    pub fn lipschitz_constant(&self, dim: usize, domain: Option<&DomainBox>) -> Option<f64> {
        match self {
            FeatureMap::Mean => Some(1.0),
            FeatureMap::Moments { order } => {
                let r = domain?.max_abs_coordinate();
                let per_axis: f64 = (1..=*order as i32).map(|q| (q as f64 * r.powi(q - 1)).powi(2)).sum();
                Some((dim as f64 * per_axis).sqrt())
            }
            FeatureMap::SoftHistogram { grid, bandwidth } => {
                Some((grid.len() as f64).sqrt() * (-0.5_f64).exp() / bandwidth)
            }
        }
    }
}

/// A kernel on `P(X)`, evaluated on configurations through their empirical
/// measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpecFile", into = "KernelSpecFile")]
pub enum DistributionKernel {
    /// `Σ_ij w_i v_j k₀(a_i, b_j)`, the inner product of the two kernel mean
    /// embeddings. On uniform weights this is `(1/M²) Σ_mm' k₀(x_m, x'_m')`.
    DoubleSum { base: BaseKernel },
    /// `k₀(φ(μ), φ(ν))`.
    Pullback { base: BaseKernel, fmap: FeatureMap },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    DoubleSum,
    Pullback,
}

/// On-disk shape of a kernel specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpecFile {
    pub family: KernelFamily,
    pub base: BaseKernel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_map: Option<FeatureMap>,
}

impl TryFrom<KernelSpecFile> for DistributionKernel {
    type Error = Error;

    fn try_from(f: KernelSpecFile) -> Result<Self> {
        f.base.validate()?;
        match (f.family, f.feature_map) {
            (KernelFamily::DoubleSum, None) => Ok(DistributionKernel::DoubleSum { base: f.base }),
            (KernelFamily::DoubleSum, Some(_)) => {
                Err(Error::Parse("double_sum kernels take no feature_map".into()))
            }
            (KernelFamily::Pullback, fmap) => {
                if matches!(f.base, BaseKernel::Table { .. }) {
                    return Err(Error::Parse("pullback kernels need a continuous base kernel".into()));
                }
                Ok(DistributionKernel::Pullback { base: f.base, fmap: fmap.unwrap_or(FeatureMap::Mean) })
            }
        }
    }
}

impl From<DistributionKernel> for KernelSpecFile {
    fn from(k: DistributionKernel) -> Self {
        match k {
            DistributionKernel::DoubleSum { base } => {
                KernelSpecFile { family: KernelFamily::DoubleSum, base, feature_map: None }
            }
            DistributionKernel::Pullback { base, fmap } => {
                KernelSpecFile { family: KernelFamily::Pullback, base, feature_map: Some(fmap) }
            }
        }
    }
}

impl DistributionKernel {
    pub fn double_sum(base: BaseKernel) -> Self {
        DistributionKernel::DoubleSum { base }
    }

    pub fn pullback(base: BaseKernel, fmap: FeatureMap) -> Self {
        DistributionKernel::Pullback { base, fmap }
    }

    pub fn base(&self) -> &BaseKernel {
        match self {
            DistributionKernel::DoubleSum { base } | DistributionKernel::Pullback { base, .. } => base,
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            DistributionKernel::DoubleSum { .. } => KernelFamily::DoubleSum,
            DistributionKernel::Pullback { .. } => KernelFamily::Pullback,
        }
    }

    /// `C_k = C_{k₀}`.
    pub fn bound(&self) -> f64 {
        self.base().bound()
    }

    pub fn validate(&self) -> Result<()> {
        self.clone().try_into_checked().map(|_| ())
    }

    fn try_into_checked(self) -> Result<Self> {
        DistributionKernel::try_from(KernelSpecFile::from(self))
    }

    pub fn eval(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
        match self {
            DistributionKernel::DoubleSum { base } => eval_double_sum(base, mu, nu),
            DistributionKernel::Pullback { base, fmap } => eval_pullback(base, fmap, mu, nu),
        }
    }

    /// `k^{[M]}(x⃗, x⃗′)`, defined as the kernel on the empirical measures.
    pub fn eval_configs(&self, x: &ParticleConfiguration, y: &ParticleConfiguration) -> Result<f64> {
        self.eval(&empirical_measure(x), &empirical_measure(y))
    }
}

fn check_same_dim(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    Ok(())
}

fn check_measure_points(base: &BaseKernel, mu: &DiscreteMeasure) -> Result<()> {
    if matches!(base, BaseKernel::Table { .. }) {
        for a in mu.atoms() {
            base.check_point(a)?;
        }
    }
    Ok(())
}

/// `Σ_ij w_i v_j k₀(a_i, b_j)` with cascade summation over both indices.
pub fn eval_double_sum(base: &BaseKernel, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_same_dim(mu, nu)?;
    check_measure_points(base, mu)?;
    check_measure_points(base, nu)?;
    let row = |i: usize| {
        let a = mu.atom(i);
        mu.weight(i) * pairwise_sum_by(nu.len(), &|j| nu.weight(j) * base.eval_unchecked(a, nu.atom(j)))
    };
    Ok(pairwise_sum_by(mu.len(), &row))
}

/// `k₀(φ(μ), φ(ν))`.
pub fn eval_pullback(base: &BaseKernel, fmap: &FeatureMap, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_same_dim(mu, nu)?;
    fmap.validate(mu.dim())?;
    let (fa, fb) = (fmap.features(mu), fmap.features(nu));
    base.eval(&fa, &fb)
}

/// Kernel mean embedding `f_μ(x) = Σ_i w_i k₀(x, a_i)`.
pub fn kme_eval(base: &BaseKernel, mu: &DiscreteMeasure, x: &[f64]) -> Result<f64> {
    if x.len() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: x.len() });
    }
    base.check_point(x)?;
    check_measure_points(base, mu)?;
    Ok(pairwise_sum_by(mu.len(), &|i| mu.weight(i) * base.eval_unchecked(x, mu.atom(i))))
}

/// Maximum mean discrepancy `‖f_μ − f_ν‖`.
pub fn mmd(base: &BaseKernel, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let radicand = eval_double_sum(base, mu, mu)? - 2.0 * eval_double_sum(base, mu, nu)? + eval_double_sum(base, nu, nu)?;
    clamped_sqrt(radicand)
}
