//! Base kernels on `X`, the double-sum and pullback families on
//! configurations / measures, kernel mean embeddings, MMD, moduli of
//! continuity and the McShane extension.

mod base;
mod family;
mod mcshane;
mod modulus;

pub use base::{eval_base, kernel_metric, BaseKernel, RADICAND_CLAMP};
pub use family::{
    eval_double_sum, eval_pullback, kme_eval, mmd, DistributionKernel, FeatureMap, KernelFamily, KernelSpecFile,
};
pub use mcshane::mcshane_extension;
pub use modulus::{
    analytic_modulus, concave_majorant, estimate_modulus, AnalyticModulus, Modulus, ModulusEstimate, ModulusSample,
};
