//! Desk-scale experiments on the `M → ∞` limit: convergence of
//! configuration kernels, consistency of the McShane extension, and transfer
//! of ridge-regressed functionals across particle counts.

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::kernels::{analytic_modulus, mcshane_extension, DistributionKernel, Modulus};
use crate::measures::{DomainBox, MixtureComponent, ParticleConfiguration, SamplerSpec};
use crate::numeric::{derive_seed, ls_slope, quantile_sorted, rng_from_seed};
use crate::particles::{eval_observable, simulate, DynamicsSpec, ObservableSpec};
use crate::quadrature::{kernel_limit, observable_population};
use crate::rkhs::{expansion_eval, ridge_fit};

/// Fewest replicates per grid point a convergence study accepts.
pub const MIN_SEEDS: usize = 8;

const RATE_NOTE: &str = "the fitted slope reflects the i.i.d. sampling scheme (Monte Carlo rate near -1/2); \
convergence of the kernels comes with no guaranteed rate";

/// Where a report came from: the resolved configuration and its hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub config: Value,
}

fn default_seeds() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub kernel: DistributionKernel,
    pub mu: SamplerSpec,
    pub nu: SamplerSpec,
    pub m_grid: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub m: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub limit: f64,
    pub m_grid: Vec<usize>,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log median` on `log M`; absent when some
    /// median is zero.
    pub slope: Option<f64>,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ConvergenceReport {
    pub fn medians(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.median).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].median < w[0].median)
    }

    /// Gnuplot-friendly columns `M median q25 q75`.
    pub fn to_dat(&self) -> String {
        let mut out = String::from("# M median q25 q75\n");
        for r in &self.rows {
            out.push_str(&format!("{} {:?} {:?} {:?}\n", r.m, r.median, r.q25, r.q75));
        }
        out
    }
}

fn check_grid(m_grid: &[usize]) -> Result<()> {
    if m_grid.is_empty() || m_grid[0] == 0 || m_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("m_grid must be nonempty, positive and strictly increasing".into()));
    }
    Ok(())
}

/// Errors `|k^{[M]}(x⃗, x⃗′) − k(μ, ν)|` for `x⃗ ~ μ^{⊗M}`, `x⃗′ ~ ν^{⊗M}`,
/// summarised by quartiles over replicates at each `M`.
///
/// Replicate `s` at size `M` draws from `derive_seed(seed, [s, M, role])`.
pub fn kernel_convergence_study(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    cfg.kernel.validate()?;
    check_grid(&cfg.m_grid)?;
    if cfg.seeds < MIN_SEEDS {
        return Err(Error::InvalidParameter(format!("at least {MIN_SEEDS} seeds are required, got {}", cfg.seeds)));
    }
    cfg.mu.validate()?;
    cfg.nu.validate()?;
    let limit = kernel_limit(&cfg.kernel, &cfg.mu, &cfg.nu)?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|s| derive_seed(cfg.seed, &[s])).collect();
    let cells: Vec<(usize, u64)> = cfg.m_grid.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    let errors = cells
        .par_iter()
        .map(|&(m, s)| {
            let x = cfg.mu.sample_configuration(m, derive_seed(s, &[m as u64, 0]))?;
            let y = cfg.nu.sample_configuration(m, derive_seed(s, &[m as u64, 1]))?;
            Ok((cfg.kernel.eval_configs(&x, &y)? - limit).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let rows: Vec<ConvergenceRow> = cfg
        .m_grid
        .iter()
        .zip(errors.chunks(seeds.len()))
        .map(|(&m, e)| {
            let mut e = e.to_vec();
            e.sort_by(f64::total_cmp);
            ConvergenceRow {
                m,
                median: quantile_sorted(&e, 0.5),
                q25: quantile_sorted(&e, 0.25),
                q75: quantile_sorted(&e, 0.75),
            }
        })
        .collect();
    let slope = if rows.iter().all(|r| r.median > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| (r.m as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.median.ln()).collect();
        ls_slope(&xs, &ys).filter(|s| s.is_finite())
    } else {
        None
    };
    Ok(ConvergenceReport {
        limit,
        m_grid: cfg.m_grid.clone(),
        rows,
        slope,
        seed: cfg.seed,
        seeds,
        note: RATE_NOTE.into(),
        provenance: None,
    })
}

fn default_decoys() -> usize {
    32
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McShaneConfig {
    pub kernel: DistributionKernel,
    pub m: usize,
    pub n_pairs: usize,
    #[serde(default = "default_decoys")]
    pub n_decoys: usize,
    pub sampler: SamplerSpec,
    /// Needed for moduli whose constant depends on the domain size.
    #[serde(default)]
    pub domain: Option<DomainBox>,
    /// Multiplies the analytic modulus; values below 1 deliberately break it.
    #[serde(default = "default_scale")]
    pub modulus_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McShaneRow {
    pub pair: usize,
    pub kernel_value: f64,
    pub extension: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McShaneReport {
    pub m: usize,
    pub n_pairs: usize,
    pub n_decoys: usize,
    pub modulus: Modulus,
    pub max_deviation: f64,
    /// Set when some extension differs from its own kernel value by more
    /// than [`McShaneReport::TOLERANCE`], which a valid modulus rules out.
    pub modulus_violation: bool,
    pub rows: Vec<McShaneRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl McShaneReport {
    pub const TOLERANCE: f64 = 1e-12;
}

/// Evaluates the McShane extension at each sampled pair's own empirical
/// measures, over the pair plus `n_decoys` fresh candidate pairs.
pub fn mcshane_consistency_check(cfg: &McShaneConfig) -> Result<McShaneReport> {
    cfg.kernel.validate()?;
    cfg.sampler.validate()?;
    if cfg.m == 0 || cfg.n_pairs == 0 {
        return Err(Error::InvalidParameter("m and n_pairs must be positive".into()));
    }
    if !(cfg.modulus_scale.is_finite() && cfg.modulus_scale > 0.0) {
        return Err(Error::InvalidParameter("modulus_scale must be positive".into()));
    }
    let analytic =
        analytic_modulus(&cfg.kernel, cfg.sampler.dim(), cfg.domain.as_ref()).ok_or(Error::NoAnalyticModulus)?;
    let modulus = analytic.modulus.scaled(cfg.modulus_scale);
    let draw = |p: usize, j: usize| -> Result<(ParticleConfiguration, ParticleConfiguration)> {
        let s = derive_seed(cfg.seed, &[p as u64, j as u64]);
        Ok((
            cfg.sampler.sample_configuration(cfg.m, derive_seed(s, &[0]))?,
            cfg.sampler.sample_configuration(cfg.m, derive_seed(s, &[1]))?,
        ))
    };
    let rows = (0..cfg.n_pairs)
        .into_par_iter()
        .map(|p| {
            let candidates = (0..=cfg.n_decoys).map(|j| draw(p, j)).collect::<Result<Vec<_>>>()?;
            let (x, y) = &candidates[0];
            let target = (x.empirical_measure(), y.empirical_measure());
            let kernel_value = cfg.kernel.eval(&target.0, &target.1)?;
            let extension =
                mcshane_extension(&cfg.kernel, cfg.m, &modulus, &analytic.metric, (&target.0, &target.1), &candidates)?;
            Ok(McShaneRow { pair: p, kernel_value, extension, deviation: (extension - kernel_value).abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_deviation = rows.iter().fold(0.0_f64, |m, r| m.max(r.deviation));
    Ok(McShaneReport {
        m: cfg.m,
        n_pairs: cfg.n_pairs,
        n_decoys: cfg.n_decoys,
        modulus,
        max_deviation,
        modulus_violation: max_deviation > McShaneReport::TOLERANCE,
        rows,
        provenance: None,
    })
}

/// How training and test configurations are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Every configuration is drawn from the same distribution.
    Sampler { sampler: SamplerSpec },
    /// Each configuration is drawn uniformly from its own random sub-box of
    /// `domain`, with per-axis widths uniform in `[min_width, max_width]`.
    RandomBoxes { domain: DomainBox, min_width: f64, max_width: f64 },
    /// Each configuration is drawn from a mixture of the given box-uniform
    /// components with weights uniform on the simplex.
    RandomMixture { components: Vec<DomainBox> },
    /// Each configuration is the final state of a simulated trajectory.
    Dynamics { dynamics: DynamicsSpec, steps: usize },
}

impl DataSource {
    fn validate(&self) -> Result<()> {
        match self {
            DataSource::Sampler { sampler } => sampler.validate(),
            DataSource::RandomBoxes { domain, min_width, max_width } => {
                domain.validate()?;
                let narrowest = domain.lower().iter().zip(domain.upper()).map(|(l, u)| u - l).fold(f64::INFINITY, f64::min);
                if !(*min_width >= 0.0 && min_width <= max_width && *max_width <= narrowest) {
                    return Err(Error::InvalidParameter(
                        "box widths must satisfy 0 <= min_width <= max_width <= domain width".into(),
                    ));
                }
                Ok(())
            }
            DataSource::RandomMixture { components } => {
                let first = components.first().ok_or_else(|| Error::InvalidParameter("no mixture components".into()))?;
                for c in components {
                    c.validate()?;
                    if c.dim() != first.dim() {
                        return Err(Error::DimensionMismatch { expected: first.dim(), got: c.dim() });
                    }
                }
                Ok(())
            }
            DataSource::Dynamics { dynamics, .. } => dynamics.validate(),
        }
    }

    /// The distribution behind sample `i`, when it has a closed form.
    fn population(&self, seed: u64) -> Option<SamplerSpec> {
        match self {
            DataSource::Sampler { sampler } => Some(sampler.clone()),
            DataSource::RandomBoxes { domain, min_width, max_width } => {
                let mut rng = rng_from_seed(seed);
                let (mut lower, mut upper) = (Vec::new(), Vec::new());
                for (lo, hi) in domain.lower().iter().zip(domain.upper()) {
                    let w = min_width + (max_width - min_width) * rng.random::<f64>();
                    let a = lo + (hi - lo - w) * rng.random::<f64>();
                    lower.push(a);
                    upper.push((a + w).min(*hi));
                }
                Some(SamplerSpec::Uniform { lower, upper })
            }
            DataSource::RandomMixture { components } => {
                let mut rng = rng_from_seed(seed);
                // normalised exponentials are uniform on the simplex; the floor keeps weights positive
                let raw: Vec<f64> = components.iter().map(|_| (-(1.0 - rng.random::<f64>()).ln()).max(1e-12)).collect();
                let total: f64 = raw.iter().sum();
                let mut weights: Vec<f64> = raw.iter().map(|r| r / total).collect();
                let drift = 1.0 - weights.iter().sum::<f64>();
                weights[0] += drift;
                Some(SamplerSpec::Mixture {
                    components: components
                        .iter()
                        .zip(weights)
                        .map(|(c, weight)| MixtureComponent { weight, lower: c.lower().to_vec(), upper: c.upper().to_vec() })
                        .collect(),
                })
            }
            DataSource::Dynamics { .. } => None,
        }
    }

    /// Configuration of `m` particles for sample seed `seed`. The population
    /// depends on `seed` only, so the same sample index at different `m`
    /// shares its distribution.
    fn draw(&self, m: usize, seed: u64) -> Result<ParticleConfiguration> {
        match self {
            DataSource::Dynamics { dynamics, steps } => {
                let mut traj = simulate(dynamics, m, *steps, derive_seed(seed, &[m as u64]))?;
                Ok(traj.pop().expect("trajectory includes the initial state"))
            }
            _ => {
                let pop = self.population(seed).expect("closed-form population");
                pop.sample_configuration(m, derive_seed(seed, &[m as u64]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub kernel: DistributionKernel,
    pub observable: ObservableSpec,
    pub source: DataSource,
    pub train_m: usize,
    pub test_m: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub m: usize,
    pub rmse: f64,
    pub baseline_rmse: f64,
    /// Median of `|f_M(x⃗) − f(μ)|` over the test set; absent when the
    /// source has no closed-form population.
    pub mean_field_gap_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub train_m: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub lambda: f64,
    pub jitter: f64,
    /// Constant predictor: the mean training label.
    pub baseline_value: f64,
    pub in_distribution_rmse: f64,
    pub rows: Vec<TransferRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    (sq / truth.len() as f64).sqrt()
}

/// Fits kernel ridge regression on `n_train` labelled configurations of
/// size `train_m`, then scores it on fresh test configurations at every
/// size in `test_m` against the observable evaluated at that size.
pub fn functional_transfer_study(cfg: &TransferConfig) -> Result<TransferReport> {
    cfg.kernel.validate()?;
    cfg.observable.validate()?;
    cfg.source.validate()?;
    if cfg.train_m == 0 || cfg.n_train == 0 || cfg.n_test == 0 || cfg.test_m.contains(&0) {
        return Err(Error::InvalidParameter("particle counts and sample sizes must be positive".into()));
    }
    let train_seeds: Vec<u64> = (0..cfg.n_train as u64).map(|i| derive_seed(cfg.seed, &[0, i])).collect();
    let test_seeds: Vec<u64> = (0..cfg.n_test as u64).map(|i| derive_seed(cfg.seed, &[1, i])).collect();

    let train = train_seeds.par_iter().map(|&s| cfg.source.draw(cfg.train_m, s)).collect::<Result<Vec<_>>>()?;
    let labels = train.iter().map(|c| eval_observable(&cfg.observable, c)).collect::<Result<Vec<f64>>>()?;
    let centers: Vec<_> = train.iter().map(|c| c.empirical_measure()).collect();
    let fit = ridge_fit(&cfg.kernel, &centers, &labels, cfg.lambda)?;
    let baseline_value = labels.iter().sum::<f64>() / labels.len() as f64;

    let limits: Option<Vec<f64>> = test_seeds
        .iter()
        .map(|&s| cfg.source.population(s))
        .collect::<Option<Vec<_>>>()
        .map(|pops| pops.par_iter().map(|p| observable_population(&cfg.observable, p)).collect::<Result<Vec<f64>>>())
        .transpose()?;

    let score = |m: usize| -> Result<TransferRow> {
        let evals = test_seeds
            .par_iter()
            .map(|&s| {
                let c = cfg.source.draw(m, s)?;
                Ok((expansion_eval(&fit.expansion, &c.empirical_measure())?, eval_observable(&cfg.observable, &c)?))
            })
            .collect::<Result<Vec<(f64, f64)>>>()?;
        let (pred, truth): (Vec<f64>, Vec<f64>) = evals.into_iter().unzip();
        let mean_field_gap_median = limits.as_ref().map(|lim| {
            let mut gaps: Vec<f64> = truth.iter().zip(lim).map(|(t, l)| (t - l).abs()).collect();
            gaps.sort_by(f64::total_cmp);
            quantile_sorted(&gaps, 0.5)
        });
        Ok(TransferRow {
            m,
            rmse: rmse(&pred, &truth),
            baseline_rmse: rmse(&vec![baseline_value; truth.len()], &truth),
            mean_field_gap_median,
        })
    };
    let in_distribution_rmse = score(cfg.train_m)?.rmse;
    let rows = cfg.test_m.iter().map(|&m| score(m)).collect::<Result<Vec<_>>>()?;
    Ok(TransferReport {
        train_m: cfg.train_m,
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        lambda: cfg.lambda,
        jitter: fit.jitter,
        baseline_value,
        in_distribution_rmse,
        rows,
        provenance: None,
    })
}

/// Any of the experiment reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum Report {
    Convergence(ConvergenceReport),
    Mcshane(McShaneReport),
    Transfer(TransferReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidParameter(format!("unknown report format {other:?}"))),
        }
    }
}

impl Report {
    pub fn set_provenance(&mut self, p: Provenance) {
        match self {
            Report::Convergence(r) => r.provenance = Some(p),
            Report::Mcshane(r) => r.provenance = Some(p),
            Report::Transfer(r) => r.provenance = Some(p),
        }
    }

    /// Writes the report. JSON is pretty-printed. CSV carries the per-row
    /// table; every other field sits in a `# key=<json>` comment line above
    /// it so the file reads back to an identical report.
    pub fn write<W: Write>(&self, mut w: W, format: ReportFormat) -> Result<()> {
        match format {
            ReportFormat::Json => {
                serde_json::to_writer_pretty(&mut w, self)?;
                w.write_all(b"\n")?;
            }
            ReportFormat::Csv => w.write_all(self.to_csv()?.as_bytes())?,
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R, format: ReportFormat) -> Result<Self> {
        match format {
            ReportFormat::Json => serde_json::from_reader(r).map_err(|e| Error::Parse(format!("report: {e}"))),
            ReportFormat::Csv => Self::from_csv(r),
        }
    }

    fn to_csv(&self) -> Result<String> {
        let Value::Object(mut fields) = serde_json::to_value(self)? else { unreachable!("reports are objects") };
        let rows = match fields.remove("rows") {
            Some(Value::Array(rows)) => rows,
            _ => unreachable!("reports carry a rows table"),
        };
        let columns: Vec<String> = match rows.first() {
            Some(Value::Object(first)) => first.keys().cloned().collect(),
            _ => Vec::new(),
        };
        let mut out = String::new();
        for (k, v) in &fields {
            out.push_str(&format!("# {k}={}\n", serde_json::to_string(v)?));
        }
        out.push_str(&format!("# columns: {} (one row per entry of `rows`; empty cell = absent)\n", columns.join(", ")));
        out.push_str(&columns.join(","));
        out.push('\n');
        for row in &rows {
            let cells: Vec<String> = columns
                .iter()
                .map(|c| match &row[c] {
                    Value::Null => Ok(String::new()),
                    v => serde_json::to_string(v),
                })
                .collect::<std::result::Result<_, _>>()?;
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        Ok(out)
    }

    fn from_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |msg: String| Error::Parse(format!("report csv: {msg}"));
        let mut fields = Map::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.is_empty() || line.starts_with("# columns:") {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest.split_once('=').ok_or_else(|| bad(format!("malformed metadata line {line:?}")))?;
                fields.insert(k.to_string(), serde_json::from_str(v).map_err(|e| bad(e.to_string()))?);
            } else if let Some(cols) = &columns {
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != cols.len() {
                    return Err(bad(format!("row has {} cells, expected {}", cells.len(), cols.len())));
                }
                let mut obj = Map::new();
                for (c, cell) in cols.iter().zip(cells) {
                    let v = if cell.is_empty() { Value::Null } else { serde_json::from_str(cell).map_err(|e| bad(e.to_string()))? };
                    obj.insert(c.clone(), v);
                }
                rows.push(Value::Object(obj));
            } else {
                columns = Some(if line.is_empty() { Vec::new() } else { line.split(',').map(str::to_string).collect() });
            }
        }
        fields.insert("rows".into(), Value::Array(rows));
        serde_json::from_value(Value::Object(fields)).map_err(|e| bad(e.to_string()))
    }
}

/// Writes `report` to `path` in `format`.
pub fn emit_report(report: &Report, path: &std::path::Path, format: ReportFormat) -> Result<()> {
    let f = std::fs::File::create(path)?;
    report.write(std::io::BufWriter::new(f), format)
}

pub fn read_report(path: &std::path::Path, format: ReportFormat) -> Result<Report> {
    let f = std::fs::File::open(path)?;
    Report::read(std::io::BufReader::new(f), format)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BaseKernel, FeatureMap};
    use crate::particles::PairPotential;

    fn uniform1(a: f64, b: f64) -> SamplerSpec {
        SamplerSpec::Uniform { lower: vec![a], upper: vec![b] }
    }

    fn pullback_mean() -> DistributionKernel {
        DistributionKernel::pullback(BaseKernel::gaussian(0.5), FeatureMap::Mean)
    }

    #[test]
    fn degenerate_samplers_have_zero_error() {
        let x = SamplerSpec::Dirac { point: vec![0.3] };
        for kernel in [pullback_mean(), DistributionKernel::double_sum(BaseKernel::gaussian(0.5))] {
            let cfg = ConvergenceConfig { kernel, mu: x.clone(), nu: x.clone(), m_grid: vec![4, 16], seeds: 8, seed: 1 };
            let r = kernel_convergence_study(&cfg).unwrap();
            assert!(r.rows.iter().all(|row| row.median == 0.0 && row.q75 == 0.0));
            assert_eq!(r.slope, None);
        }
    }

    #[test]
    fn convergence_study_validates_inputs() {
        let base = ConvergenceConfig {
            kernel: pullback_mean(),
            mu: uniform1(0.0, 0.4),
            nu: uniform1(0.6, 1.0),
            m_grid: vec![16, 64],
            seeds: 8,
            seed: 0,
        };
        let mut bad = base.clone();
        bad.m_grid = vec![64, 16];
        assert!(kernel_convergence_study(&bad).is_err());
        let mut bad = base.clone();
        bad.seeds = 4;
        assert!(kernel_convergence_study(&bad).is_err());
        let mut unknown = base.clone();
        unknown.kernel = DistributionKernel::double_sum(BaseKernel::InverseMultiquadric { c: 1.0 });
        unknown.mu = SamplerSpec::Uniform { lower: vec![0.0; 2], upper: vec![1.0; 2] };
        unknown.nu = unknown.mu.clone();
        assert!(matches!(kernel_convergence_study(&unknown), Err(Error::UnknownLimit(_))));
        let r1 = kernel_convergence_study(&base).unwrap();
        let r2 = kernel_convergence_study(&base).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.slope.is_some());
    }

    #[test]
    fn mcshane_pair_alone_is_exact() {
        let cfg = McShaneConfig {
            kernel: pullback_mean(),
            m: 6,
            n_pairs: 1,
            n_decoys: 0,
            sampler: uniform1(0.0, 1.0),
            domain: None,
            modulus_scale: 1.0,
            seed: 3,
        };
        let r = mcshane_consistency_check(&cfg).unwrap();
        assert_eq!(r.max_deviation, 0.0);
        assert!(!r.modulus_violation);
    }

    #[test]
    fn mcshane_with_decoys() {
        let cfg = McShaneConfig {
            kernel: pullback_mean(),
            m: 4,
            n_pairs: 20,
            n_decoys: 32,
            sampler: uniform1(0.0, 1.0),
            domain: None,
            modulus_scale: 1.0,
            seed: 5,
        };
        let r = mcshane_consistency_check(&cfg).unwrap();
        assert!(r.max_deviation <= 1e-12);
        // a modulus shrunk far enough lets decoys undercut the true value
        let shrunk = McShaneConfig { modulus_scale: 1e-3, n_pairs: 50, ..cfg };
        let r = mcshane_consistency_check(&shrunk).unwrap();
        assert!(r.modulus_violation && r.max_deviation > 1e-12);
    }

    #[test]
    fn no_modulus_for_unbounded_moments() {
        let cfg = McShaneConfig {
            kernel: DistributionKernel::pullback(BaseKernel::gaussian(0.5), FeatureMap::Moments { order: 2 }),
            m: 4,
            n_pairs: 1,
            n_decoys: 1,
            sampler: uniform1(0.0, 1.0),
            domain: None,
            modulus_scale: 1.0,
            seed: 0,
        };
        assert!(matches!(mcshane_consistency_check(&cfg), Err(Error::NoAnalyticModulus)));
        let with_domain = McShaneConfig { domain: Some(DomainBox::unit(1)), ..cfg };
        assert!(mcshane_consistency_check(&with_domain).is_ok());
    }

    fn transfer_cfg() -> TransferConfig {
        TransferConfig {
            kernel: DistributionKernel::double_sum(BaseKernel::gaussian(0.5)),
            observable: ObservableSpec::InteractionEnergy { pair_potential: PairPotential::Gaussian { gamma: 0.5 } },
            source: DataSource::RandomBoxes { domain: DomainBox::unit(1), min_width: 0.05, max_width: 1.0 },
            train_m: 16,
            test_m: vec![16, 64],
            n_train: 40,
            n_test: 20,
            lambda: 1e-6,
            seed: 9,
        }
    }

    #[test]
    fn transfer_at_training_size_is_in_distribution() {
        let r = functional_transfer_study(&transfer_cfg()).unwrap();
        assert_eq!(r.rows[0].rmse, r.in_distribution_rmse);
        assert!(r.rows.iter().all(|row| row.rmse.is_finite() && row.rmse >= 0.0 && row.mean_field_gap_median.is_some()));
    }

    #[test]
    fn transfer_of_a_constant() {
        let ones = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let cfg = TransferConfig {
            kernel: DistributionKernel::double_sum(BaseKernel::Table { matrix: ones }),
            observable: ObservableSpec::InteractionEnergy {
                pair_potential: PairPotential::Table { matrix: vec![vec![0.8, 0.8], vec![0.8, 0.8]] },
            },
            lambda: 1e-9,
            test_m: vec![16, 64, 128],
            ..transfer_cfg()
        };
        let r = functional_transfer_study(&cfg).unwrap();
        for row in &r.rows {
            assert!(row.rmse <= 1e-6, "{row:?}");
        }
    }

    #[test]
    fn dynamics_source_has_no_gap() {
        let cfg = TransferConfig {
            source: DataSource::Dynamics {
                dynamics: DynamicsSpec {
                    domain: DomainBox::unit(1),
                    initial: uniform1(0.0, 1.0),
                    dt: 0.01,
                    model: crate::particles::DynamicsModel::PureDiffusion { sigma: 0.2 },
                },
                steps: 5,
            },
            n_train: 10,
            n_test: 5,
            ..transfer_cfg()
        };
        let r = functional_transfer_study(&cfg).unwrap();
        assert!(r.rows.iter().all(|row| row.mean_field_gap_median.is_none()));
    }

    #[test]
    fn report_round_trips() {
        let cfg = ConvergenceConfig {
            kernel: pullback_mean(),
            mu: uniform1(0.0, 0.4),
            nu: uniform1(0.6, 1.0),
            m_grid: vec![16, 64],
            seeds: 8,
            seed: 0,
        };
        let mut report = Report::Convergence(kernel_convergence_study(&cfg).unwrap());
        report.set_provenance(Provenance {
            version: "0.1.0".into(),
            config_hash: "abc".into(),
            config: serde_json::to_value(&cfg).unwrap(),
        });
        let transfer = Report::Transfer(functional_transfer_study(&transfer_cfg()).unwrap());
        for r in [&report, &transfer] {
            for format in [ReportFormat::Json, ReportFormat::Csv] {
                let mut buf = Vec::new();
                r.write(&mut buf, format).unwrap();
                assert_eq!(&Report::read(&buf[..], format).unwrap(), r);
            }
        }
        let mut csv = Vec::new();
        report.write(&mut csv, ReportFormat::Csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 3);
        assert_eq!(data[0], "m,median,q25,q75");
    }
}
