use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::DistributionKernel;
use crate::error::{Error, Result};
use crate::measures::{empirical_measure, DomainBox, SamplerSpec};
use crate::numeric::{derive_seed, rng_from_seed};
use crate::transport::{dkr2, GroundMetric};

/// A concave, nondecreasing modulus of continuity `ω̃` with `ω̃(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Modulus {
    /// `ω̃(r) = slope · r`.
    Linear { slope: f64 },
    /// Piecewise linear through `vertices` (the first is `(0, 0)`), constant
    /// after the last vertex.
    Envelope { vertices: Vec<[f64; 2]> },
}

impl Modulus {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Modulus::Linear { slope } => slope * r,
            Modulus::Envelope { vertices } => {
                let last = vertices[vertices.len() - 1];
                if r >= last[0] {
                    return last[1];
                }
                let k = vertices.partition_point(|v| v[0] <= r);
                let (a, b) = (vertices[k - 1], vertices[k]);
                a[1] + (b[1] - a[1]) * (r - a[0]) / (b[0] - a[0])
            }
        }
    }

    /// Fails with [`Error::ModulusNotConcave`] unless the function is a
    /// concave nondecreasing modulus pinned at the origin.
    pub fn validate(&self) -> Result<()> {
        match self {
            Modulus::Linear { slope } => {
                if slope.is_finite() && *slope >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::ModulusNotConcave)
                }
            }
            Modulus::Envelope { vertices } => {
                if vertices.first() != Some(&[0.0, 0.0]) {
                    return Err(Error::ModulusNotConcave);
                }
                let mut last_slope = f64::INFINITY;
                for w in vertices.windows(2) {
                    let dx = w[1][0] - w[0][0];
                    if !(dx > 0.0) || !w[1][1].is_finite() {
                        return Err(Error::ModulusNotConcave);
                    }
                    let slope = (w[1][1] - w[0][1]) / dx;
                    if slope < 0.0 || slope > last_slope * (1.0 + 1e-12) + 1e-15 {
                        return Err(Error::ModulusNotConcave);
                    }
                    last_slope = slope;
                }
                Ok(())
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Modulus {
        match self {
            Modulus::Linear { slope } => Modulus::Linear { slope: slope * factor },
            Modulus::Envelope { vertices } => {
                Modulus::Envelope { vertices: vertices.iter().map(|v| [v[0], v[1] * factor]).collect() }
            }
        }
    }
}

/// A modulus shipped in closed form, together with the ground metric under
/// which its `d_KR²` argument must be measured.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticModulus {
    pub modulus: Modulus,
    pub metric: GroundMetric,
}

/// Closed-form moduli for the two kernel families.
///
/// * Pullback: `|k₀(y₁,y₁′) − k₀(y₂,y₂′)| ≤ L₀(‖y₁−y₂‖ + ‖y₁′−y₂′‖)` with
///   `L₀` the one-argument Lipschitz constant of `k₀`, and
///   `‖φ(μ)−φ(ν)‖ ≤ L_φ W1(μ,ν)`; hence `ω̃(r) = L₀ L_φ r` under the
///   Euclidean ground metric.
/// * Double sum: `ω̃(r) = √C_{k₀} r` under the kernel metric `d_{k₀}`.
pub fn analytic_modulus(kernel: &DistributionKernel, dim: usize, domain: Option<&DomainBox>) -> Option<AnalyticModulus> {
    match kernel {
        DistributionKernel::Pullback { base, fmap } => {
            let slope = base.lipschitz_one_argument()? * fmap.lipschitz_constant(dim, domain)?;
            Some(AnalyticModulus { modulus: Modulus::Linear { slope }, metric: GroundMetric::Euclidean })
        }
        DistributionKernel::DoubleSum { base } => Some(AnalyticModulus {
            modulus: Modulus::Linear { slope: base.bound().sqrt() },
            metric: GroundMetric::Kernel { base: base.clone() },
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusSample {
    pub distance: f64,
    pub deviation: f64,
}

/// Sampled `(d_KR², |Δk|)` pairs and their least concave nondecreasing
/// majorant through the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub samples: Vec<ModulusSample>,
    pub vertices: Vec<[f64; 2]>,
}

impl ModulusEstimate {
    pub fn from_samples(samples: Vec<ModulusSample>) -> Self {
        let vertices = concave_majorant(&samples);
        ModulusEstimate { samples, vertices }
    }

    pub fn envelope(&self) -> Modulus {
        Modulus::Envelope { vertices: self.vertices.clone() }
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.envelope().eval(r)
    }
}

/// Upper convex hull of the samples plus `(0, 0)`, cut off flat at its
/// highest point. Samples at distance 0 cannot be dominated by a function
/// pinned at the origin and are skipped.
pub fn concave_majorant(samples: &[ModulusSample]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = samples
        .iter()
        .filter(|s| s.distance > 0.0 && s.distance.is_finite() && s.deviation.is_finite())
        .map(|s| [s.distance, s.deviation.max(0.0)])
        .collect();
    pts.push([0.0, 0.0]);
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(b[1].total_cmp(&a[1])));
    pts.dedup_by(|b, a| a[0] == b[0]);

    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let peak = hull
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if v[1] > hull[best][1] { i } else { best });
    hull.truncate(peak + 1);
    hull
}

/// Estimates a modulus for `kernel` at particle count `m` from `trials`
/// random quadruples `(x⃗₁, x⃗₁′, x⃗₂, x⃗₂′)` drawn from `sampler`.
///
/// Trial `t` uses its own seed derived from `(seed, t)`, so a run with more
/// trials extends a shorter one and its envelope can only rise.
pub fn estimate_modulus(
    kernel: &DistributionKernel,
    m: usize,
    sampler: &SamplerSpec,
    metric: &GroundMetric,
    trials: usize,
    seed: u64,
) -> Result<ModulusEstimate> {
    if trials < 10 {
        return Err(Error::InvalidParameter(format!("need at least 10 trials, got {trials}")));
    }
    sampler.validate()?;
    let samples = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, &[t as u64]));
            let mut draw = || sampler.sample_configuration_with(m, &mut rng).map(|c| empirical_measure(&c));
            let (a, a2, b, b2) = (draw()?, draw()?, draw()?, draw()?);
            let distance = dkr2((&a, &a2), (&b, &b2), metric)?;
            let deviation = (kernel.eval(&a, &a2)? - kernel.eval(&b, &b2)?).abs();
            Ok(ModulusSample { distance, deviation })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModulusEstimate::from_samples(samples))
}
