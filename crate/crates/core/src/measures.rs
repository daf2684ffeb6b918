//! Points, particle configurations and discrete probability measures.
//!
//! Points live in a compact axis-aligned box `X ⊂ R^d`. Configurations are
//! ordered tuples of `M` points; a [`DiscreteMeasure`] is a finite list of
//! weighted atoms. Both store coordinates in one flat row-major buffer, so a
//! point is always handed out as a `&[f64]` of length `dim`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, rng_from_seed};

/// Absolute tolerance on `|Σ w − 1|`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// A compact axis-aligned box `[lower, upper] ⊂ R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = DomainBox { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// The unit cube `[0, 1]^d`.
    pub fn unit(dim: usize) -> Self {
        DomainBox { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() {
            return Err(Error::InvalidBox("zero-dimensional box".into()));
        }
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch { expected: self.lower.len(), got: self.upper.len() });
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite("domain box bounds"));
            }
            if lo >= hi {
                return Err(Error::InvalidBox(format!("axis {i}: lower {lo} is not below upper {hi}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Inclusive containment test.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    pub fn contains_box(&self, other: &DomainBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    /// Largest absolute coordinate over the box.
    pub fn max_abs_coordinate(&self) -> f64 {
        self.lower.iter().chain(&self.upper).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest Euclidean norm of a point in the box.
    pub fn max_norm(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn diameter(&self) -> f64 {
        crate::numeric::euclidean_distance(&self.lower, &self.upper)
    }
}

/// An ordered tuple `(x_1, …, x_M)` of points sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleConfiguration {
    dim: usize,
    coords: Vec<f64>,
}

impl ParticleConfiguration {
    /// Builds a configuration from a flat row-major coordinate buffer.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if coords.is_empty() {
            return Err(Error::EmptySupport);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: coords.len() % dim });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("configuration coordinates"));
        }
        Ok(ParticleConfiguration { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptySupport)?.len();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of particles `M`.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    /// Returns `(x_{σ(1)}, …, x_{σ(M)})`.
    pub fn permuted(&self, sigma: &[usize]) -> Self {
        assert_eq!(sigma.len(), self.len(), "permutation length");
        let mut coords = Vec::with_capacity(self.coords.len());
        for &s in sigma {
            coords.extend_from_slice(self.point(s));
        }
        ParticleConfiguration { dim: self.dim, coords }
    }

    pub fn empirical_measure(&self) -> DiscreteMeasure {
        empirical_measure(self)
    }
}

/// A finitely supported probability measure `Σ w_i δ_{a_i}`.
///
/// Duplicate atoms are kept as separate entries; see [`DiscreteMeasure::coalesce`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds and validates a measure from a flat atom buffer and weights.
    pub fn new(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        validate_measure_parts(dim, &atoms, &weights, None)?;
        Ok(DiscreteMeasure { dim, atoms, weights })
    }

    pub fn from_points(points: &[Vec<f64>], weights: Option<Vec<f64>>) -> Result<Self> {
        let config = ParticleConfiguration::from_points(points)?;
        match weights {
            None => Ok(empirical_measure(&config)),
            Some(w) => Self::new(config.dim, config.coords, w),
        }
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of atoms (with multiplicity).
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.atoms.chunks_exact(self.dim)
    }

    pub fn atom_coords(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn mean(&self) -> Vec<f64> {
        measure_mean(self)
    }

    /// Drops atoms of zero weight. Returns the kept indices alongside.
    pub fn without_zero_weights(&self) -> (DiscreteMeasure, Vec<usize>) {
        let kept: Vec<usize> = (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect();
        let mut atoms = Vec::with_capacity(kept.len() * self.dim);
        let mut weights = Vec::with_capacity(kept.len());
        for &i in &kept {
            atoms.extend_from_slice(self.atom(i));
            weights.push(self.weights[i]);
        }
        (DiscreteMeasure { dim: self.dim, atoms, weights }, kept)
    }

    /// Merges atoms that are exactly equal, summing their weights. The
    /// first occurrence of each atom fixes its position in the output.
    pub fn coalesce(&self) -> DiscreteMeasure {
        let mut atoms: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        'outer: for (a, &w) in self.atoms().zip(&self.weights) {
            for (j, b) in atoms.chunks_exact(self.dim).enumerate() {
                if a == b {
                    weights[j] += w;
                    continue 'outer;
                }
            }
            atoms.extend_from_slice(a);
            weights.push(w);
        }
        DiscreteMeasure { dim: self.dim, atoms, weights }
    }

    /// `∫ φ dμ` for a test function `φ`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, phi: F) -> f64 {
        let terms: Vec<f64> = self.atoms().zip(&self.weights).map(|(a, w)| w * phi(a)).collect();
        pairwise_sum(&terms)
    }
}

/// Validates raw measure data: nonempty, matching lengths, finite, nonnegative
/// weights summing to one within [`WEIGHT_SUM_TOLERANCE`], and (optionally)
/// every atom inside `domain`.
pub fn validate_measure_parts(
    dim: usize,
    atoms: &[f64],
    weights: &[f64],
    domain: Option<&DomainBox>,
) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if weights.is_empty() || atoms.is_empty() {
        return Err(Error::EmptySupport);
    }
    if atoms.len() != weights.len() * dim {
        return Err(Error::DimensionMismatch { expected: weights.len() * dim, got: atoms.len() });
    }
    if atoms.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("measure atoms"));
    }
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::NonFinite("measure weights"));
        }
        if w < 0.0 {
            return Err(Error::NegativeWeight { index: i, weight: w });
        }
    }
    let sum = pairwise_sum(weights);
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::WeightSumOffByMoreThanTolerance { sum });
    }
    if let Some(domain) = domain {
        if domain.dim() != dim {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: dim });
        }
        for (i, a) in atoms.chunks_exact(dim).enumerate() {
            if !domain.contains(a) {
                return Err(Error::AtomOutsideDomain { index: i });
            }
        }
    }
    Ok(())
}

/// Checks every measure invariant, optionally also containment in `domain`.
pub fn validate_measure(mu: &DiscreteMeasure, domain: Option<&DomainBox>) -> Result<()> {
    validate_measure_parts(mu.dim, &mu.atoms, &mu.weights, domain)
}

/// `μ̂[x⃗] = (1/M) Σ δ_{x_i}`, atoms kept in configuration order.
pub fn empirical_measure(config: &ParticleConfiguration) -> DiscreteMeasure {
    let m = config.len();
    DiscreteMeasure { dim: config.dim, atoms: config.coords.clone(), weights: vec![1.0 / m as f64; m] }
}

/// `Σ w_i a_i`, componentwise.
pub fn measure_mean(mu: &DiscreteMeasure) -> Vec<f64> {
    (0..mu.dim)
        .map(|k| {
            let terms: Vec<f64> = mu.atoms().zip(&mu.weights).map(|(a, w)| w * a[k]).collect();
            pairwise_sum(&terms)
        })
        .collect()
}

/// One component of a box-uniform mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// A distribution on `X` from which i.i.d. particles are drawn.
///
/// Every variant has product structure per component (independent axes),
/// which the quadrature oracle relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    /// Uniform on the box `[lower, upper]`.
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    /// Independent per-axis normals `N(mean_i, std_i²)` truncated to the box.
    TruncatedNormal { mean: Vec<f64>, std: Vec<f64>, lower: Vec<f64>, upper: Vec<f64> },
    /// Weighted mixture of box-uniform components.
    Mixture { components: Vec<MixtureComponent> },
    /// Point mass; every particle equals `point`.
    Dirac { point: Vec<f64> },
}

impl SamplerSpec {
    pub fn uniform(domain: &DomainBox) -> Self {
        SamplerSpec::Uniform { lower: domain.lower.clone(), upper: domain.upper.clone() }
    }

    pub fn dim(&self) -> usize {
        match self {
            SamplerSpec::Uniform { lower, .. } | SamplerSpec::TruncatedNormal { lower, .. } => lower.len(),
            SamplerSpec::Mixture { components } => components.first().map_or(0, |c| c.lower.len()),
            SamplerSpec::Dirac { point } => point.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplerSpec::Uniform { lower, upper } => {
                DomainBox::new(lower.clone(), upper.clone()).map_err(|e| Error::InvalidSampler(e.to_string()))?;
            }
            SamplerSpec::TruncatedNormal { mean, std, lower, upper } => {
                let b = DomainBox::new(lower.clone(), upper.clone())
                    .map_err(|e| Error::InvalidSampler(e.to_string()))?;
                if mean.len() != b.dim() || std.len() != b.dim() {
                    return Err(Error::InvalidSampler("mean/std length differs from box dimension".into()));
                }
                if mean.iter().any(|m| !m.is_finite()) || std.iter().any(|s| !s.is_finite() || *s <= 0.0) {
                    return Err(Error::InvalidSampler("mean must be finite and std positive".into()));
                }
            }
            SamplerSpec::Mixture { components } => {
                let first = components.first().ok_or_else(|| Error::InvalidSampler("empty mixture".into()))?;
                let dim = first.lower.len();
                let mut total = 0.0;
                for c in components {
                    let b = DomainBox::new(c.lower.clone(), c.upper.clone())
                        .map_err(|e| Error::InvalidSampler(e.to_string()))?;
                    if b.dim() != dim {
                        return Err(Error::InvalidSampler("mixture components differ in dimension".into()));
                    }
                    if !c.weight.is_finite() || c.weight <= 0.0 {
                        return Err(Error::InvalidSampler("mixture weights must be positive".into()));
                    }
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidSampler(format!("mixture weights sum to {total}")));
                }
            }
            SamplerSpec::Dirac { point } => {
                if point.is_empty() || point.iter().any(|p| !p.is_finite()) {
                    return Err(Error::InvalidSampler("dirac point must be finite and nonempty".into()));
                }
            }
        }
        Ok(())
    }

    /// Fails with [`Error::SupportOutsideDomain`] unless the support lies in `domain`.
    pub fn check_within(&self, domain: &DomainBox) -> Result<()> {
        self.validate()?;
        if self.dim() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: self.dim() });
        }
        let inside = match self {
            SamplerSpec::Uniform { lower, upper } | SamplerSpec::TruncatedNormal { lower, upper, .. } => {
                domain.contains(lower) && domain.contains(upper)
            }
            SamplerSpec::Mixture { components } => {
                components.iter().all(|c| domain.contains(&c.lower) && domain.contains(&c.upper))
            }
            SamplerSpec::Dirac { point } => domain.contains(point),
        };
        if inside {
            Ok(())
        } else {
            Err(Error::SupportOutsideDomain)
        }
    }

    /// Draws one point.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            SamplerSpec::Uniform { lower, upper } => {
                for (lo, hi) in lower.iter().zip(upper) {
                    out.push(lo + (hi - lo) * rng.random::<f64>());
                }
            }
            SamplerSpec::TruncatedNormal { mean, std, lower, upper } => {
                for i in 0..lower.len() {
                    out.push(truncated_normal_draw(rng, mean[i], std[i], lower[i], upper[i]));
                }
            }
            SamplerSpec::Mixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = &components[components.len() - 1];
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        chosen = c;
                        break;
                    }
                }
                for (lo, hi) in chosen.lower.iter().zip(&chosen.upper) {
                    out.push(lo + (hi - lo) * rng.random::<f64>());
                }
            }
            SamplerSpec::Dirac { point } => out.extend_from_slice(point),
        }
    }

    /// Draws `m` i.i.d. particles with a fresh generator seeded by `seed`.
    pub fn sample_configuration(&self, m: usize, seed: u64) -> Result<ParticleConfiguration> {
        let mut rng = rng_from_seed(seed);
        self.sample_configuration_with(m, &mut rng)
    }

    pub fn sample_configuration_with<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<ParticleConfiguration> {
        self.validate()?;
        if m == 0 {
            return Err(Error::InvalidParameter("particle count must be positive".into()));
        }
        let mut coords = Vec::with_capacity(m * self.dim());
        for _ in 0..m {
            self.draw(rng, &mut coords);
        }
        ParticleConfiguration::new(self.dim(), coords)
    }
}

/// Draws `m` particles from `dist`, deterministic in `(dist, m, seed)`.
pub fn sample_configuration(dist: &SamplerSpec, m: usize, seed: u64) -> Result<ParticleConfiguration> {
    dist.sample_configuration(m, seed)
}

// Inverse-CDF sampling keeps exactly one uniform draw per coordinate.
fn truncated_normal_draw<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64, lo: f64, hi: f64) -> f64 {
    let n = Normal::standard();
    let a = n.cdf((lo - mean) / std);
    let b = n.cdf((hi - mean) / std);
    let u = Uniform::new_inclusive(a, b).map(|d| d.sample(rng)).unwrap_or(a);
    let x = mean + std * n.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
    x.clamp(lo, hi)
}
