//! Population values of kernels and observables for sampler distributions,
//! by tensor-product Gauss–Legendre quadrature.
//!
//! Every [`SamplerSpec`] is a finite mixture of product measures whose axes
//! are point masses, uniforms or truncated normals. Node counts double from
//! 32 until two successive values agree to [`QUADRATURE_AGREEMENT`].

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernels::{BaseKernel, DistributionKernel, FeatureMap};
use crate::measures::SamplerSpec;
use crate::particles::{ObservableSpec, PairPotential};

pub const QUADRATURE_AGREEMENT: f64 = 1e-10;
const NODE_COUNTS: [usize; 5] = [32, 64, 128, 256, 512];
// Truncated-normal tails beyond this many standard deviations carry < 1e-30 mass.
const NORMAL_SPAN: f64 = 12.0;

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence: p1 = P_n(z), p2 = P_{n−1}(z)
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Marginal {
    Point(f64),
    Uniform(f64, f64),
    TruncNormal { mean: f64, std: f64, lo: f64, hi: f64 },
}

impl Marginal {
    /// Quadrature rule `(x, w)` with `Σ w g(x) ≈ E[g(X)]`.
    fn rule(&self, n: usize) -> Vec<(f64, f64)> {
        let on_interval = |a: f64, b: f64, density: &dyn Fn(f64) -> f64| {
            let (t, w) = gauss_legendre(n);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            t.iter().zip(&w).map(|(ti, wi)| {
                let x = mid + half * ti;
                (x, half * wi * density(x))
            }).collect()
        };
        match *self {
            Marginal::Point(x) => vec![(x, 1.0)],
            Marginal::Uniform(a, b) if a == b => vec![(a, 1.0)],
            Marginal::Uniform(a, b) => on_interval(a, b, &|_| 1.0 / (b - a)),
            Marginal::TruncNormal { mean, std, lo, hi } => {
                let normal = Normal::new(mean, std).expect("validated normal");
                let z = normal.cdf(hi) - normal.cdf(lo);
                let a = lo.max(mean - NORMAL_SPAN * std);
                let b = hi.min(mean + NORMAL_SPAN * std);
                if a >= b {
                    // all mass sits at the nearer wall
                    return vec![(if mean < lo { lo } else { hi }, 1.0)];
                }
                on_interval(a, b, &|x| normal.pdf(x) / z)
            }
        }
    }

    /// `P(round(X) = i)` for `i = 0..g`, and the mass rounding outside.
    fn index_masses(&self, g: usize) -> (Vec<f64>, f64) {
        let cdf = |x: f64| -> f64 {
            match *self {
                Marginal::Point(p) => (p < x) as u8 as f64,
                Marginal::Uniform(a, b) if a == b => (a < x) as u8 as f64,
                Marginal::Uniform(a, b) => ((x - a) / (b - a)).clamp(0.0, 1.0),
                Marginal::TruncNormal { mean, std, lo, hi } => {
                    let n = Normal::new(mean, std).expect("validated normal");
                    let (fl, fh) = (n.cdf(lo), n.cdf(hi));
                    ((n.cdf(x.clamp(lo, hi)) - fl) / (fh - fl)).clamp(0.0, 1.0)
                }
            }
        };
        let masses: Vec<f64> = (0..g).map(|i| cdf(i as f64 + 0.5) - cdf(i as f64 - 0.5)).collect();
        let outside = cdf(-0.5) + (1.0 - cdf(g as f64 - 0.5));
        (masses, outside)
    }
}

struct Component {
    weight: f64,
    axes: Vec<Marginal>,
}

fn components(s: &SamplerSpec) -> Result<Vec<Component>> {
    s.validate()?;
    Ok(match s {
        SamplerSpec::Uniform { lower, upper } => vec![Component {
            weight: 1.0,
            axes: lower.iter().zip(upper).map(|(a, b)| Marginal::Uniform(*a, *b)).collect(),
        }],
        SamplerSpec::TruncatedNormal { mean, std, lower, upper } => vec![Component {
            weight: 1.0,
            axes: (0..lower.len())
                .map(|k| Marginal::TruncNormal { mean: mean[k], std: std[k], lo: lower[k], hi: upper[k] })
                .collect(),
        }],
        SamplerSpec::Mixture { components } => components
            .iter()
            .map(|c| Component {
                weight: c.weight,
                axes: c.lower.iter().zip(&c.upper).map(|(a, b)| Marginal::Uniform(*a, *b)).collect(),
            })
            .collect(),
        SamplerSpec::Dirac { point } => {
            vec![Component { weight: 1.0, axes: point.iter().map(|p| Marginal::Point(*p)).collect() }]
        }
    })
}

fn check_dims(mu: &SamplerSpec, nu: &SamplerSpec) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    Ok(())
}

/// Runs `value(n)` over the node ladder until successive results agree.
fn refine<F: Fn(usize) -> Result<Vec<f64>>>(value: F) -> Result<Vec<f64>> {
    let mut prev = value(NODE_COUNTS[0])?;
    let mut gap = f64::INFINITY;
    for &n in &NODE_COUNTS[1..] {
        let next = value(n)?;
        gap = prev.iter().zip(&next).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if gap <= QUADRATURE_AGREEMENT {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNotConverged(gap))
}

fn refine_scalar<F: Fn(usize) -> Result<f64>>(value: F) -> Result<f64> {
    Ok(refine(|n| value(n).map(|v| vec![v]))?[0])
}

fn double_integral(a: &Marginal, b: &Marginal, n: usize, g: &dyn Fn(f64, f64) -> f64) -> f64 {
    let (ra, rb) = (a.rule(n), b.rule(n));
    ra.iter().map(|(x, wx)| wx * rb.iter().map(|(y, wy)| wy * g(*x, *y)).sum::<f64>()).sum()
}

/// `Σ_{a,b} w_a w_b P(round Xa = i) P(round Yb = j) T_ij` on one axis.
fn table_pair_integral(matrix: &[Vec<f64>], mu: &[Component], nu: &[Component]) -> Result<f64> {
    let g = matrix.len();
    let masses = |cs: &[Component]| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; g];
        for c in cs {
            let (m, outside) = c.axes[0].index_masses(g);
            if outside > 0.0 {
                return Err(Error::InvalidParameter("sampler puts mass outside the table grid".into()));
            }
            acc.iter_mut().zip(m).for_each(|(a, p)| *a += c.weight * p);
        }
        Ok(acc)
    };
    let (p, q) = (masses(mu)?, masses(nu)?);
    Ok((0..g).map(|i| p[i] * (0..g).map(|j| q[j] * matrix[i][j]).sum::<f64>()).sum())
}

/// `∫∫ k₀(x, y) dμ(x) dν(y)` for product-mixture samplers.
///
/// The Gaussian kernel factorises over axes. The inverse multiquadric is
/// handled in one dimension only, and the table kernel through the exact
/// distribution of rounded indices.
pub fn base_kernel_integral(base: &BaseKernel, mu: &SamplerSpec, nu: &SamplerSpec) -> Result<f64> {
    base.validate()?;
    check_dims(mu, nu)?;
    let (cm, cn) = (components(mu)?, components(nu)?);
    match base {
        BaseKernel::Gaussian { gamma } => refine_scalar(|n| {
            let g = |x: f64, y: f64| (-(x - y) * (x - y) / (2.0 * gamma)).exp();
            let mut total = 0.0;
            for a in &cm {
                for b in &cn {
                    let prod: f64 = a.axes.iter().zip(&b.axes).map(|(ma, mb)| double_integral(ma, mb, n, &g)).product();
                    total += a.weight * b.weight * prod;
                }
            }
            Ok(total)
        }),
        BaseKernel::InverseMultiquadric { c } => {
            if mu.dim() != 1 {
                return Err(Error::UnknownLimit(
                    "inverse multiquadric population integrals are only available in one dimension".into(),
                ));
            }
            refine_scalar(|n| {
                let g = |x: f64, y: f64| 1.0 / (1.0 + (x - y) * (x - y) / (c * c)).sqrt();
                let mut total = 0.0;
                for a in &cm {
                    for b in &cn {
                        total += a.weight * b.weight * double_integral(&a.axes[0], &b.axes[0], n, &g);
                    }
                }
                Ok(total)
            })
        }
        BaseKernel::Table { matrix } => {
            if mu.dim() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: mu.dim() });
            }
            table_pair_integral(matrix, &cm, &cn)
        }
    }
}

/// `E[∏_k g_k(X_k)]` under the mixture, for each of several axis-product integrands.
fn product_expectations(cs: &[Component], n: usize, factors: &[Vec<&dyn Fn(f64) -> f64>]) -> Vec<f64> {
    let rules: Vec<Vec<Vec<(f64, f64)>>> = cs.iter().map(|c| c.axes.iter().map(|m| m.rule(n)).collect()).collect();
    factors
        .iter()
        .map(|per_axis| {
            cs.iter()
                .zip(&rules)
                .map(|(c, r)| {
                    c.weight
                        * per_axis
                            .iter()
                            .zip(r)
                            .map(|(g, rule)| rule.iter().map(|(x, w)| w * g(*x)).sum::<f64>())
                            .product::<f64>()
                })
                .sum()
        })
        .collect()
}

/// `φ(μ)` for a sampler distribution `μ`.
pub fn population_features(fmap: &FeatureMap, mu: &SamplerSpec) -> Result<Vec<f64>> {
    let d = mu.dim();
    fmap.validate(d)?;
    let cs = components(mu)?;
    let one = |_: f64| 1.0;
    let id = |x: f64| x;
    refine(|n| {
        Ok(match fmap {
            FeatureMap::Mean => {
                let factors: Vec<Vec<&dyn Fn(f64) -> f64>> =
                    (0..d).map(|k| (0..d).map(|j| if j == k { &id as &dyn Fn(f64) -> f64 } else { &one }).collect()).collect();
                product_expectations(&cs, n, &factors)
            }
            FeatureMap::Moments { order } => {
                let powers: Vec<Box<dyn Fn(f64) -> f64>> =
                    (1..=*order as i32).map(|q| Box::new(move |x: f64| x.powi(q)) as Box<dyn Fn(f64) -> f64>).collect();
                let mut factors: Vec<Vec<&dyn Fn(f64) -> f64>> = Vec::new();
                for p in &powers {
                    for k in 0..d {
                        factors.push((0..d).map(|j| if j == k { p.as_ref() } else { &one as &dyn Fn(f64) -> f64 }).collect());
                    }
                }
                product_expectations(&cs, n, &factors)
            }
            FeatureMap::SoftHistogram { grid, bandwidth } => {
                let h2 = 2.0 * bandwidth * bandwidth;
                let bumps: Vec<Vec<Box<dyn Fn(f64) -> f64>>> = grid
                    .iter()
                    .map(|g| {
                        g.iter()
                            .map(|&gk| Box::new(move |x: f64| (-(x - gk) * (x - gk) / h2).exp()) as Box<dyn Fn(f64) -> f64>)
                            .collect()
                    })
                    .collect();
                let factors: Vec<Vec<&dyn Fn(f64) -> f64>> =
                    bumps.iter().map(|b| b.iter().map(|f| f.as_ref()).collect()).collect();
                product_expectations(&cs, n, &factors)
            }
        })
    })
}

/// Mean-field limit `k(μ, ν)` of the configuration kernels `k^{[M]}` when
/// particles are drawn i.i.d. from `μ` and `ν`.
pub fn kernel_limit(kernel: &DistributionKernel, mu: &SamplerSpec, nu: &SamplerSpec) -> Result<f64> {
    kernel.validate()?;
    check_dims(mu, nu)?;
    match kernel {
        DistributionKernel::DoubleSum { base } => base_kernel_integral(base, mu, nu),
        DistributionKernel::Pullback { base, fmap } => {
            let (a, b) = (population_features(fmap, mu)?, population_features(fmap, nu)?);
            base.eval(&a, &b)
        }
    }
}

/// Measure-level value `f(μ)` of an observable for a sampler distribution.
pub fn observable_population(spec: &ObservableSpec, mu: &SamplerSpec) -> Result<f64> {
    spec.validate()?;
    let d = mu.dim();
    match spec {
        ObservableSpec::CoordinateMean => Ok(population_features(&FeatureMap::Mean, mu)?[0]),
        ObservableSpec::Variance => {
            let m = population_features(&FeatureMap::Moments { order: 2 }, mu)?;
            Ok((0..d).map(|k| m[d + k] - m[k] * m[k]).sum())
        }
        ObservableSpec::InteractionEnergy { pair_potential } => match pair_potential {
            PairPotential::Gaussian { gamma } => base_kernel_integral(&BaseKernel::Gaussian { gamma: *gamma }, mu, mu),
            PairPotential::Table { matrix } => base_kernel_integral(&BaseKernel::Table { matrix: matrix.clone() }, mu, mu),
            PairPotential::InverseQuadratic { c } => {
                if d != 1 {
                    return Err(Error::UnknownLimit(
                        "inverse quadratic interaction energy is only integrated in one dimension".into(),
                    ));
                }
                let cs = components(mu)?;
                refine_scalar(|n| {
                    let g = |x: f64, y: f64| 1.0 / (1.0 + (x - y) * (x - y) / (c * c));
                    let mut total = 0.0;
                    for a in &cs {
                        for b in &cs {
                            total += a.weight * b.weight * double_integral(&a.axes[0], &b.axes[0], n, &g);
                        }
                    }
                    Ok(total)
                })
            }
        },
    }
}
