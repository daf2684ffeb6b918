use rayon::prelude::*;

use super::family::DistributionKernel;
use super::modulus::Modulus;
use crate::error::{Error, Result};
use crate::measures::{empirical_measure, DiscreteMeasure, ParticleConfiguration};
use crate::transport::{dkr2, GroundMetric};

/// McShane-type extension of `k^{[M]}` from configuration pairs to pairs of
/// measures, restricted to a finite candidate set:
///
/// `min_{(c, c′)} k^{[M]}(c, c′) + ω̃(d_KR²[(μ̂[c], μ̂[c′]), target])`.
///
/// This is an upper bound on the infimum over all of `X^M × X^M` and is
/// nonincreasing as candidates are added. When `target` is the empirical pair
/// of some candidate and `ω̃` dominates the kernel's true modulus, the
/// minimum is attained at that candidate and equals its kernel value.
pub fn mcshane_extension(
    kernel: &DistributionKernel,
    m: usize,
    modulus: &Modulus,
    metric: &GroundMetric,
    target: (&DiscreteMeasure, &DiscreteMeasure),
    candidates: &[(ParticleConfiguration, ParticleConfiguration)],
) -> Result<f64> {
    modulus.validate()?;
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    for (c, c2) in candidates {
        for cfg in [c, c2] {
            if cfg.len() != m {
                return Err(Error::ConfigurationSizeMismatch { expected: m, got: cfg.len() });
            }
        }
    }
    let values = candidates
        .par_iter()
        .map(|(c, c2)| {
            let (e, e2) = (empirical_measure(c), empirical_measure(c2));
            let k = kernel.eval(&e, &e2)?;
            let r = dkr2((&e, &e2), target, metric)?;
            Ok(k + modulus.eval(r))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}
