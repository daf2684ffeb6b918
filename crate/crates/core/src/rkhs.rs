//! Gram matrices, finite RKHS expansions `Σ αₙ k(·, μₙ)`, PSD verification
//! and kernel ridge regression.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{DistributionKernel, Modulus};
use crate::measures::DiscreteMeasure;
use crate::numeric::pairwise_sum_by;
use crate::transport::{w1_exact, GroundMetric};

/// Entrywise asymmetry tolerated by [`psd_check`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Symmetric matrix of pairwise kernel values.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
}

impl GramMatrix {
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::InvalidParameter("gram matrix must be square and nonempty".into()));
        }
        Ok(GramMatrix { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("gram matrix must be square".into()));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.n()).map(|j| format!("{:?}", self.get(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn check_centers(centers: &[DiscreteMeasure]) -> Result<usize> {
    let first = centers.first().ok_or(Error::EmptySupport)?;
    for c in centers {
        if c.dim() != first.dim() {
            return Err(Error::DimensionMismatch { expected: first.dim(), got: c.dim() });
        }
    }
    Ok(first.dim())
}

/// `K_ij = k(cᵢ, cⱼ)`, evaluated once per unordered pair and mirrored.
pub fn gram(kernel: &DistributionKernel, centers: &[DiscreteMeasure]) -> Result<GramMatrix> {
    check_centers(centers)?;
    let n = centers.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| kernel.eval(&centers[i], &centers[j]))
        .collect::<Result<Vec<f64>>>()?;
    let mut entries = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        entries[(i, j)] = v;
        entries[(j, i)] = v;
    }
    Ok(GramMatrix { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub pass: bool,
}

/// Smallest eigenvalue from a symmetric eigensolve; passes iff
/// `λ_min ≥ −tol · max(1, trace)`.
pub fn psd_check(g: &GramMatrix, tol: f64) -> Result<PsdReport> {
    let asym = g.max_asymmetry();
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NonSymmetricInput(asym));
    }
    let eig = g.entries.clone().symmetric_eigenvalues();
    let min_eigenvalue = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = min_eigenvalue >= -tol * g.trace().max(1.0);
    Ok(PsdReport { min_eigenvalue, pass })
}

/// A finite element `f = Σₙ αₙ k(·, μₙ)` of the pre-Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    kernel: DistributionKernel,
    centers: Vec<DiscreteMeasure>,
    coefficients: Vec<f64>,
}

impl Expansion {
    pub fn new(kernel: DistributionKernel, centers: Vec<DiscreteMeasure>, coefficients: Vec<f64>) -> Result<Self> {
        check_centers(&centers)?;
        if centers.len() != coefficients.len() {
            return Err(Error::DimensionMismatch { expected: centers.len(), got: coefficients.len() });
        }
        if coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("expansion coefficients"));
        }
        Ok(Expansion { kernel, centers, coefficients })
    }

    /// The kernel section `k(·, μ)`.
    pub fn section(kernel: DistributionKernel, center: DiscreteMeasure) -> Self {
        Expansion { kernel, centers: vec![center], coefficients: vec![1.0] }
    }

    pub fn kernel(&self) -> &DistributionKernel {
        &self.kernel
    }

    pub fn centers(&self) -> &[DiscreteMeasure] {
        &self.centers
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn dim(&self) -> usize {
        self.centers[0].dim()
    }

    pub fn eval(&self, input: &DiscreteMeasure) -> Result<f64> {
        expansion_eval(self, input)
    }
}

/// `f(μ) = Σₙ αₙ k(μ, μₙ)`.
pub fn expansion_eval(f: &Expansion, input: &DiscreteMeasure) -> Result<f64> {
    if input.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: input.dim() });
    }
    let values = f.centers.iter().map(|c| f.kernel.eval(input, c)).collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum_by(values.len(), &|n| f.coefficients[n] * values[n]))
}

/// `⟨f, g⟩ = Σₙ Σₘ αₙ βₘ k(cₘ^g, cₙ^f)`.
pub fn expansion_inner(f: &Expansion, g: &Expansion) -> Result<f64> {
    if f.kernel != g.kernel {
        return Err(Error::KernelSpecMismatch);
    }
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: g.dim() });
    }
    let rows = f
        .centers
        .par_iter()
        .zip(&f.coefficients)
        .map(|(cf, a)| {
            let vals = g.centers.iter().map(|cg| f.kernel.eval(cg, cf)).collect::<Result<Vec<f64>>>()?;
            Ok(a * pairwise_sum_by(vals.len(), &|m| g.coefficients[m] * vals[m]))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum_by(rows.len(), &|n| rows[n]))
}

/// `√⟨f, f⟩`. Negative squared norms within `1e-10 · max(1, C_k (Σ|αₙ|)²)`
/// of zero are rounding noise and clamp to zero.
pub fn rkhs_norm(f: &Expansion) -> Result<f64> {
    let sq = expansion_inner(f, f)?;
    let l1: f64 = f.coefficients.iter().map(|a| a.abs()).sum();
    let slack = 1e-10 * (f.kernel.bound() * l1 * l1).max(1.0);
    if sq < -slack {
        return Err(Error::NegativeSquaredNorm(sq));
    }
    Ok(sq.max(0.0).sqrt())
}

/// Fitted ridge model and the diagonal jitter that made it solvable.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub expansion: Expansion,
    pub lambda: f64,
    /// Extra amount added to `λ` (zero when the plain system was solvable).
    pub jitter: f64,
    pub residual: f64,
}

/// Kernel ridge regression: solves `(K + λ N I) α = y` by Cholesky.
///
/// When the factorization fails or the residual exceeds `1e-8 ‖y‖`, the
/// regulariser is escalated through `λ + {1e-12, 1e-10, 1e-8} · tr(K)/N`.
pub fn ridge_fit(kernel: &DistributionKernel, centers: &[DiscreteMeasure], targets: &[f64], lambda: f64) -> Result<RidgeFit> {
    if centers.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: centers.len(), got: targets.len() });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("ridge targets"));
    }
    let g = gram(kernel, centers)?;
    let n = centers.len();
    let y = DVector::from_column_slice(targets);
    let y_norm = y.norm();
    if y_norm == 0.0 {
        let expansion = Expansion::new(kernel.clone(), centers.to_vec(), vec![0.0; n])?;
        return Ok(RidgeFit { expansion, lambda, jitter: 0.0, residual: 0.0 });
    }
    let per_center = g.trace() / n as f64;
    for jitter in [0.0, 1e-12 * per_center, 1e-10 * per_center, 1e-8 * per_center] {
        let lambda_eff = lambda + jitter;
        let mut system = g.entries.clone();
        for i in 0..n {
            system[(i, i)] += lambda_eff * n as f64;
        }
        let Some(chol) = system.clone().cholesky() else { continue };
        let alpha = chol.solve(&y);
        let residual = (&system * &alpha - &y).norm();
        if alpha.iter().all(|a| a.is_finite()) && residual <= 1e-8 * y_norm {
            let expansion = Expansion::new(kernel.clone(), centers.to_vec(), alpha.iter().copied().collect())?;
            return Ok(RidgeFit { expansion, lambda, jitter, residual });
        }
    }
    Err(Error::SingularSystem)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub max_abs: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Checks `|f(μ)| ≤ ‖f‖ √C_k` on every probe.
pub fn sup_bound_check(f: &Expansion, c_k: f64, probes: &[DiscreteMeasure]) -> Result<BoundCheck> {
    if probes.is_empty() {
        return Err(Error::EmptySupport);
    }
    let bound = rkhs_norm(f)? * c_k.sqrt();
    let values = probes.par_iter().map(|p| expansion_eval(f, p)).collect::<Result<Vec<f64>>>()?;
    let max_abs = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(BoundCheck { max_abs, bound, pass: max_abs <= bound + 1e-9 })
}

/// Checks `|f(μ₁) − f(μ₂)| ≤ ‖f‖ √(2 ω̃(W1(μ₁, μ₂)))`, where `ω̃` is a
/// modulus for the kernel under the ground metric `metric`.
pub fn continuity_bound_check(
    f: &Expansion,
    modulus: &Modulus,
    metric: &GroundMetric,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
) -> Result<BoundCheck> {
    modulus.validate()?;
    let deviation = (expansion_eval(f, mu1)? - expansion_eval(f, mu2)?).abs();
    let distance = w1_exact(mu1, mu2, metric)?.0;
    let bound = rkhs_norm(f)? * (2.0 * modulus.eval(distance)).sqrt();
    Ok(BoundCheck { max_abs: deviation, bound, pass: deviation <= bound + 1e-9 })
}
