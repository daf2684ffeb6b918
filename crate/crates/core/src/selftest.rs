//! Reduced-size invariant checks run by `mfk selftest`.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::kernels::{kernel_metric, kme_eval, mmd, BaseKernel, DistributionKernel, FeatureMap};
use crate::measures::{DiscreteMeasure, SamplerSpec};
use crate::meanfield::{mcshane_consistency_check, McShaneConfig};
use crate::numeric::{derive_seed, pairwise_sum_by, rng_from_seed};
use crate::particles::{eval_observable, observable_limit, ObservableSpec, PairPotential};
use crate::rkhs::{expansion_eval, expansion_inner, gram, psd_check, rkhs_norm, sup_bound_check, Expansion};
use crate::transport::{w1_1d, w1_bruteforce, w1_exact, GroundMetric};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
}

fn kernels() -> Vec<DistributionKernel> {
    vec![
        DistributionKernel::double_sum(BaseKernel::gaussian(0.5)),
        DistributionKernel::double_sum(BaseKernel::InverseMultiquadric { c: 0.7 }),
        DistributionKernel::pullback(BaseKernel::gaussian(0.5), FeatureMap::Mean),
        DistributionKernel::pullback(BaseKernel::gaussian(0.3), FeatureMap::Moments { order: 2 }),
    ]
}

fn unit(d: usize) -> SamplerSpec {
    SamplerSpec::Uniform { lower: vec![0.0; d], upper: vec![1.0; d] }
}

fn weighted(d: usize, n: usize, seed: u64) -> Result<DiscreteMeasure> {
    let pts = unit(d).sample_configuration(n, seed)?;
    let mut rng = rng_from_seed(derive_seed(seed, &[7]));
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let drift = 1.0 - w.iter().sum::<f64>();
    w[0] += drift;
    DiscreteMeasure::new(d, pts.coords().to_vec(), w)
}

fn check(name: &'static str, worst: f64, limit: f64) -> CheckOutcome {
    CheckOutcome { name, pass: worst <= limit, worst }
}

/// Runs every check; never stops early so the full table is reported.
pub fn run_selftest(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let s = |path: &[u64]| derive_seed(seed, path);

    // Gram matrices are PSD
    let mut worst = f64::NEG_INFINITY;
    for (ki, k) in kernels().iter().enumerate() {
        let centers: Vec<_> =
            (0..12).map(|i| unit(2).sample_configuration(8, s(&[0, ki as u64, i])).map(|c| c.empirical_measure())).collect::<Result<_>>()?;
        let g = gram(k, &centers)?;
        let r = psd_check(&g, 1e-8)?;
        worst = worst.max(-r.min_eigenvalue / g.trace().max(1.0));
    }
    out.push(check("gram_psd", worst, 1e-8));

    // permutation invariance
    let mut worst = 0.0_f64;
    for (ki, k) in kernels().iter().enumerate() {
        for t in 0..20 {
            let x = unit(2).sample_configuration(7, s(&[1, ki as u64, t, 0]))?;
            let y = unit(2).sample_configuration(7, s(&[1, ki as u64, t, 1]))?;
            let sigma = [3, 0, 6, 1, 5, 2, 4];
            worst = worst.max((k.eval_configs(&x.permuted(&sigma), &y)? - k.eval_configs(&x, &y)?).abs());
        }
    }
    out.push(check("permutation_invariance", worst, 1e-12));

    // double sum equals the KME inner product
    let base = BaseKernel::gaussian(0.4);
    let mut worst = 0.0_f64;
    for t in 0..20 {
        let (mu, nu) = (weighted(2, 6, s(&[2, t, 0]))?, weighted(2, 9, s(&[2, t, 1]))?);
        let direct = DistributionKernel::double_sum(base.clone()).eval(&mu, &nu)?;
        let mut via_kme = Vec::with_capacity(nu.len());
        for j in 0..nu.len() {
            via_kme.push(nu.weight(j) * kme_eval(&base, &mu, nu.atom(j))?);
        }
        let via = pairwise_sum_by(via_kme.len(), &|j| via_kme[j]);
        worst = worst.max((direct - via).abs() / direct.abs().max(1e-300));
    }
    out.push(check("double_sum_kme_identity", worst, 1e-12));

    // exact transport against independent oracles
    let mut worst = 0.0_f64;
    for t in 0..30 {
        let (mu, nu) = (weighted(2, 1 + (t as usize % 4), s(&[3, t, 0]))?, weighted(2, 4 - (t as usize % 4), s(&[3, t, 1]))?);
        worst = worst.max((w1_exact(&mu, &nu, &GroundMetric::Euclidean)?.0 - w1_bruteforce(&mu, &nu, &GroundMetric::Euclidean)?).abs());
        let (a, b) = (weighted(1, 10, s(&[3, t, 2]))?, weighted(1, 7, s(&[3, t, 3]))?);
        worst = worst.max((w1_exact(&a, &b, &GroundMetric::Euclidean)?.0 - w1_1d(&a, &b)?).abs());
    }
    out.push(check("w1_oracles", worst, 1e-9));

    // continuity of the double-sum kernel and MMD dominance, kernel-metric costs
    let metric = GroundMetric::Kernel { base: base.clone() };
    let k = DistributionKernel::double_sum(base.clone());
    let (mut worst_cont, mut worst_mmd) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in 0..20 {
        let m: Vec<DiscreteMeasure> = (0..4).map(|r| weighted(2, 5, s(&[4, t, r]))).collect::<Result<_>>()?;
        let dk = (k.eval(&m[0], &m[1])? - k.eval(&m[2], &m[3])?).abs();
        let bound = w1_exact(&m[0], &m[2], &metric)?.0 + w1_exact(&m[1], &m[3], &metric)?.0;
        worst_cont = worst_cont.max(dk - base.bound().sqrt() * bound);
        worst_mmd = worst_mmd.max(mmd(&base, &m[0], &m[1])? - w1_exact(&m[0], &m[1], &metric)?.0);
    }
    out.push(check("kr_continuity", worst_cont, 1e-9));
    out.push(check("mmd_below_kernel_w1", worst_mmd, 1e-9));

    // the kernel metric is a metric on points
    let pts: Vec<Vec<f64>> = unit(2).sample_configuration(30, s(&[5]))?.to_nested();
    let axioms = metric.check_axioms(&pts, 200, s(&[5, 1]), 1e-10).is_ok();
    let sym = (kernel_metric(&base, &pts[0], &pts[1])? - kernel_metric(&base, &pts[1], &pts[0])?).abs();
    out.push(CheckOutcome { name: "kernel_metric_axioms", pass: axioms && sym == 0.0, worst: sym });

    // McShane extension reproduces kernel values at candidate pairs
    let mc = mcshane_consistency_check(&McShaneConfig {
        kernel: DistributionKernel::pullback(BaseKernel::gaussian(0.5), FeatureMap::Mean),
        m: 5,
        n_pairs: 10,
        n_decoys: 32,
        sampler: unit(1),
        domain: None,
        modulus_scale: 1.0,
        seed: s(&[6]),
    })?;
    out.push(check("mcshane_consistency", mc.max_deviation, 1e-12));

    // RKHS: sup bound, Cauchy–Schwarz, reproducing property
    let (mut worst_sup, mut worst_cs, mut worst_rep) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0_f64);
    for t in 0..10 {
        let centers: Vec<_> = (0..5).map(|i| weighted(2, 4, s(&[7, t, i]))).collect::<Result<_>>()?;
        let mut rng = rng_from_seed(s(&[7, t, 99]));
        let coef: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let f = Expansion::new(k.clone(), centers, coef)?;
        let probes: Vec<_> = (0..10).map(|i| weighted(2, 4, s(&[7, t, 100 + i]))).collect::<Result<_>>()?;
        let sb = sup_bound_check(&f, k.bound(), &probes)?;
        worst_sup = worst_sup.max(sb.max_abs - sb.bound);
        let g = Expansion::section(k.clone(), probes[0].clone());
        let inner = expansion_inner(&f, &g)?;
        worst_cs = worst_cs.max(inner.abs() - rkhs_norm(&f)? * rkhs_norm(&g)?);
        worst_rep = worst_rep.max((inner - expansion_eval(&f, &probes[0])?).abs());
    }
    out.push(check("rkhs_sup_bound", worst_sup, 1e-10));
    out.push(check("rkhs_cauchy_schwarz", worst_cs, 1e-10));
    out.push(check("rkhs_reproducing", worst_rep, 1e-10));

    // observables: permutation invariance and agreement with the measure-level functional
    let specs = [
        ObservableSpec::CoordinateMean,
        ObservableSpec::Variance,
        ObservableSpec::InteractionEnergy { pair_potential: PairPotential::Gaussian { gamma: 0.5 } },
    ];
    let mut worst = 0.0_f64;
    for (i, spec) in specs.iter().enumerate() {
        let x = unit(2).sample_configuration(9, s(&[8, i as u64]))?;
        let v = eval_observable(spec, &x)?;
        worst = worst.max((observable_limit(spec, &x.empirical_measure())? - v).abs());
        worst = worst.max((eval_observable(spec, &x.permuted(&[8, 7, 6, 5, 4, 3, 2, 1, 0]))? - v).abs());
    }
    out.push(check("observable_consistency", worst, 1e-12));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        let results = run_selftest(0).unwrap();
        for r in &results {
            assert!(r.pass, "{r:?}");
        }
        assert_eq!(results, run_selftest(0).unwrap());
    }
}
