//! Permutation-invariant observables `f_M` with measure-level limits,
//! interacting-particle dynamics, and labelled datasets.

use std::io::{BufRead, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{BaseKernel, Modulus};
use crate::measures::{DiscreteMeasure, DomainBox, ParticleConfiguration, SamplerSpec};
use crate::numeric::{derive_seed, pairwise_sum_by, rng_from_seed, squared_distance};

/// Pair potential `φ` of an interaction energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairPotential {
    /// `exp(−‖x−y‖² / (2γ))`.
    Gaussian { gamma: f64 },
    /// `1 / (1 + ‖x−y‖²/c²)`.
    InverseQuadratic { c: f64 },
    /// Table kernel on grid indices (one-dimensional inputs, rounded). A
    /// table with equal entries gives a constant observable.
    Table { matrix: Vec<Vec<f64>> },
}

impl PairPotential {
    pub fn validate(&self) -> Result<()> {
        match self {
            PairPotential::Gaussian { gamma } => BaseKernel::Gaussian { gamma: *gamma }.validate(),
            PairPotential::InverseQuadratic { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::InvalidParameter(format!("inverse quadratic c must be positive, got {c}")));
                }
                Ok(())
            }
            PairPotential::Table { matrix } => BaseKernel::Table { matrix: matrix.clone() }.validate(),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        match self {
            PairPotential::Table { matrix } => BaseKernel::Table { matrix: matrix.clone() }.check_point(x),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            PairPotential::Gaussian { gamma } => (-squared_distance(x, y) / (2.0 * gamma)).exp(),
            PairPotential::InverseQuadratic { c } => 1.0 / (1.0 + squared_distance(x, y) / (c * c)),
            PairPotential::Table { matrix } => {
                let g = matrix.len() as f64;
                let i = x[0].round().clamp(0.0, g - 1.0) as usize;
                let j = y[0].round().clamp(0.0, g - 1.0) as usize;
                matrix[i][j]
            }
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            PairPotential::Gaussian { .. } | PairPotential::InverseQuadratic { .. } => 1.0,
            PairPotential::Table { matrix } => matrix.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }

    /// Lipschitz constant of `x ↦ φ(x, y)`, uniformly in `y`. A table is
    /// discontinuous unless constant.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            PairPotential::Gaussian { gamma } => Some((-0.5_f64).exp() / gamma.sqrt()),
            // max_t 2t/(1+t²)² at t = 1/√3
            PairPotential::InverseQuadratic { c } => Some(3.0 * 3.0_f64.sqrt() / (8.0 * c)),
            PairPotential::Table { matrix } => {
                let first = matrix[0][0];
                matrix.iter().flatten().all(|v| *v == first).then_some(0.0)
            }
        }
    }
}

/// A symmetric function of the particles with a closed-form measure-level
/// counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    /// First coordinate of the mean.
    CoordinateMean,
    /// `(1/M) Σ ‖xᵢ − x̄‖²`.
    Variance,
    /// `(1/M²) Σᵢ Σⱼ φ(xᵢ, xⱼ)`.
    InteractionEnergy { pair_potential: PairPotential },
}

impl ObservableSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ObservableSpec::InteractionEnergy { pair_potential } => pair_potential.validate(),
            _ => Ok(()),
        }
    }

    fn check_points<'a>(&self, points: impl Iterator<Item = &'a [f64]>) -> Result<()> {
        if let ObservableSpec::InteractionEnergy { pair_potential } = self {
            for p in points {
                pair_potential.check_point(p)?;
            }
        }
        Ok(())
    }

    /// `sup |f_M|` over configurations in `domain`.
    pub fn bound(&self, domain: &DomainBox) -> f64 {
        match self {
            ObservableSpec::CoordinateMean => domain.lower()[0].abs().max(domain.upper()[0].abs()),
            // Popoviciu per axis
            ObservableSpec::Variance => {
                domain.lower().iter().zip(domain.upper()).map(|(l, u)| (u - l) * (u - l) / 4.0).sum()
            }
            ObservableSpec::InteractionEnergy { pair_potential } => pair_potential.bound(),
        }
    }

    /// Modulus `ω_f` with `|f(μ) − f(ν)| ≤ ω_f(W1(μ, ν))` under the
    /// Euclidean ground metric, for measures supported in `domain`.
    ///
    /// Variance is `∫‖x‖² dμ − ‖∫x dμ‖²`; each term moves by at most
    /// `2R · W1`. The interaction energy is bilinear in `μ`, so it moves by
    /// at most `2 Lip(φ) · W1`.
    pub fn modulus(&self, domain: &DomainBox) -> Option<Modulus> {
        let slope = match self {
            ObservableSpec::CoordinateMean => 1.0,
            ObservableSpec::Variance => 4.0 * domain.max_norm(),
            ObservableSpec::InteractionEnergy { pair_potential } => 2.0 * pair_potential.lipschitz()?,
        };
        Some(Modulus::Linear { slope })
    }
}

/// `f_M(x⃗)` on a configuration.
pub fn eval_observable(spec: &ObservableSpec, config: &ParticleConfiguration) -> Result<f64> {
    spec.validate()?;
    spec.check_points(config.points())?;
    let m = config.len();
    let inv = 1.0 / m as f64;
    Ok(match spec {
        ObservableSpec::CoordinateMean => inv * pairwise_sum_by(m, &|i| config.point(i)[0]),
        ObservableSpec::Variance => {
            let mean: Vec<f64> = (0..config.dim()).map(|k| inv * pairwise_sum_by(m, &|i| config.point(i)[k])).collect();
            inv * pairwise_sum_by(m, &|i| squared_distance(config.point(i), &mean))
        }
        ObservableSpec::InteractionEnergy { pair_potential } => {
            let row = |i: usize| inv * pairwise_sum_by(m, &|j| pair_potential.eval_unchecked(config.point(i), config.point(j)));
            inv * pairwise_sum_by(m, &row)
        }
    })
}

/// The measure-level functional `f(μ)`; agrees with [`eval_observable`] on
/// empirical measures.
pub fn observable_limit(spec: &ObservableSpec, mu: &DiscreteMeasure) -> Result<f64> {
    spec.validate()?;
    spec.check_points(mu.atoms())?;
    let n = mu.len();
    Ok(match spec {
        ObservableSpec::CoordinateMean => pairwise_sum_by(n, &|i| mu.weight(i) * mu.atom(i)[0]),
        ObservableSpec::Variance => {
            let mean: Vec<f64> = (0..mu.dim()).map(|k| pairwise_sum_by(n, &|i| mu.weight(i) * mu.atom(i)[k])).collect();
            pairwise_sum_by(n, &|i| mu.weight(i) * squared_distance(mu.atom(i), &mean))
        }
        ObservableSpec::InteractionEnergy { pair_potential } => {
            let row = |i: usize| {
                mu.weight(i) * pairwise_sum_by(n, &|j| mu.weight(j) * pair_potential.eval_unchecked(mu.atom(i), mu.atom(j)))
            };
            pairwise_sum_by(n, &row)
        }
    })
}

/// Drift model of the particle system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsModel {
    /// Mean-field drift `(1/M) Σⱼ [−a (xᵢ−xⱼ) + r (xᵢ−xⱼ) exp(−‖xᵢ−xⱼ‖²/2ℓ²)]`
    /// plus isotropic noise `σ dW`.
    AttractionRepulsion { attraction: f64, repulsion: f64, repulsion_length: f64, sigma: f64 },
    /// Independent Brownian particles.
    PureDiffusion { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub domain: DomainBox,
    pub initial: SamplerSpec,
    pub dt: f64,
    pub model: DynamicsModel,
}

impl DynamicsSpec {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.initial.check_within(&self.domain)?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative, got {v}")))
            }
        };
        match &self.model {
            DynamicsModel::AttractionRepulsion { attraction, repulsion, repulsion_length, sigma } => {
                nonneg("attraction", *attraction)?;
                nonneg("repulsion", *repulsion)?;
                nonneg("sigma", *sigma)?;
                if !(repulsion_length.is_finite() && *repulsion_length > 0.0) {
                    return Err(Error::InvalidParameter("repulsion_length must be positive".into()));
                }
            }
            DynamicsModel::PureDiffusion { sigma } => nonneg("sigma", *sigma)?,
        }
        Ok(())
    }

    fn sigma(&self) -> f64 {
        match self.model {
            DynamicsModel::AttractionRepulsion { sigma, .. } | DynamicsModel::PureDiffusion { sigma } => sigma,
        }
    }

    fn drift(&self, coords: &[f64], m: usize, out: &mut [f64]) {
        let d = self.domain.dim();
        out.iter_mut().for_each(|v| *v = 0.0);
        if let DynamicsModel::AttractionRepulsion { attraction, repulsion, repulsion_length, .. } = self.model {
            let l2 = 2.0 * repulsion_length * repulsion_length;
            let inv = 1.0 / m as f64;
            for i in 0..m {
                let xi = &coords[i * d..(i + 1) * d];
                for j in 0..m {
                    if i == j {
                        continue;
                    }
                    let xj = &coords[j * d..(j + 1) * d];
                    let s = repulsion * (-squared_distance(xi, xj) / l2).exp() - attraction;
                    for k in 0..d {
                        out[i * d + k] += inv * s * (xi[k] - xj[k]);
                    }
                }
            }
        }
    }
}

/// Mirror reflection into `[lo, hi]`.
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    if w <= 0.0 {
        return lo;
    }
    let t = (x - lo).rem_euclid(2.0 * w);
    let y = if t <= w { lo + t } else { hi - (t - w) };
    y.clamp(lo, hi)
}

/// Euler–Maruyama trajectory with reflecting walls. Returns `steps + 1`
/// configurations, the first being the initial draw.
pub fn simulate(dyn_spec: &DynamicsSpec, m: usize, steps: usize, seed: u64) -> Result<Vec<ParticleConfiguration>> {
    dyn_spec.validate()?;
    let d = dyn_spec.domain.dim();
    let initial = dyn_spec.initial.sample_configuration(m, derive_seed(seed, &[0]))?;
    let mut noise = rng_from_seed(derive_seed(seed, &[1]));
    let mut coords = initial.coords().to_vec();
    let mut drift = vec![0.0; coords.len()];
    let sigma = dyn_spec.sigma();
    let (dt, sq_dt) = (dyn_spec.dt, dyn_spec.dt.sqrt());
    let mut out = Vec::with_capacity(steps + 1);
    out.push(initial);
    for _ in 0..steps {
        dyn_spec.drift(&coords, m, &mut drift);
        for (idx, x) in coords.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut noise);
            let k = idx % d;
            let moved = *x + drift[idx] * dt + sigma * sq_dt * z;
            *x = reflect(moved, dyn_spec.domain.lower()[k], dyn_spec.domain.upper()[k]);
        }
        out.push(ParticleConfiguration::new(d, coords.clone())?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub m: usize,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Configurations sharing `(M, d)`, optionally labelled.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub configs: Vec<ParticleConfiguration>,
    pub labels: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    meta: DatasetMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<f64>,
}

fn homogeneous_meta(configs: &[ParticleConfiguration]) -> Result<DatasetMeta> {
    let first = configs.first().ok_or_else(|| Error::InvalidParameter("dataset has no configurations".into()))?;
    if configs.iter().any(|c| c.len() != first.len() || c.dim() != first.dim()) {
        return Err(Error::HeterogeneousConfigs);
    }
    Ok(DatasetMeta { m: first.len(), dim: first.dim(), observable: None, dynamics: None, seed: None })
}

impl Dataset {
    /// Unlabelled dataset, e.g. the output of [`simulate`].
    pub fn unlabelled(configs: Vec<ParticleConfiguration>) -> Result<Self> {
        let meta = homogeneous_meta(&configs)?;
        Ok(Dataset { meta, configs, labels: None })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// JSON-lines: a `{"meta": …}` header, then one `{"points", "label"}`
    /// record per configuration.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &Header { meta: self.meta.clone() })?;
        w.write_all(b"\n")?;
        for (i, c) in self.configs.iter().enumerate() {
            let rec = Record { points: c.to_nested(), label: self.labels.as_ref().map(|l| l[i]) };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let (_, header) = lines.next().ok_or_else(|| Error::Parse("dataset file is empty".into()))?;
        let header: Header =
            serde_json::from_str(&header?).map_err(|e| Error::Parse(format!("dataset header: {e}")))?;
        let mut configs = Vec::new();
        let mut labels = Vec::new();
        for (n, line) in lines {
            let rec: Record =
                serde_json::from_str(&line?).map_err(|e| Error::Parse(format!("dataset line {}: {e}", n + 1)))?;
            configs.push(ParticleConfiguration::from_points(&rec.points)?);
            labels.push(rec.label);
        }
        let meta = homogeneous_meta(&configs)?;
        if (meta.m, meta.dim) != (header.meta.m, header.meta.dim) {
            return Err(Error::HeterogeneousConfigs);
        }
        let labels = if labels.iter().all(Option::is_some) {
            Some(labels.into_iter().flatten().collect::<Vec<f64>>())
        } else if labels.iter().all(Option::is_none) {
            None
        } else {
            return Err(Error::Parse("dataset mixes labelled and unlabelled records".into()));
        };
        if labels.as_ref().is_some_and(|l| l.iter().any(|y| !y.is_finite())) {
            return Err(Error::NonFinite("dataset labels"));
        }
        Ok(Dataset { meta: header.meta, configs, labels })
    }
}

/// Labels each configuration with `f_M`.
pub fn make_dataset(configs: Vec<ParticleConfiguration>, observable: &ObservableSpec) -> Result<Dataset> {
    let mut meta = homogeneous_meta(&configs)?;
    let labels = configs.iter().map(|c| eval_observable(observable, c)).collect::<Result<Vec<f64>>>()?;
    if labels.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("observable labels"));
    }
    meta.observable = Some(observable.clone());
    Ok(Dataset { meta, configs, labels: Some(labels) })
}
