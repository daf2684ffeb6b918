use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use mfkernels::io::{read_json, read_measure, ModelFile};
use mfkernels::kernels::{analytic_modulus, estimate_modulus, mmd, BaseKernel, DistributionKernel};
use mfkernels::meanfield::{
    functional_transfer_study, kernel_convergence_study, mcshane_consistency_check, ConvergenceConfig, McShaneConfig,
    Provenance, Report, ReportFormat, TransferConfig,
};
use mfkernels::measures::{DomainBox, SamplerSpec};
use mfkernels::particles::{make_dataset, simulate, Dataset, DynamicsSpec, ObservableSpec};
use mfkernels::rkhs::{expansion_eval, gram, psd_check, ridge_fit};
use mfkernels::selftest::run_selftest;
use mfkernels::transport::{w1_1d, w1_exact, w1_sinkhorn, GroundMetric};

use crate::args::*;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> Result<()> {
    let verbose = cli.verbose;
    match cli.command {
        Command::W1(a) => w1(a),
        Command::Kernel(KernelCommand::Eval(a)) => kernel_eval(a),
        Command::Gram(a) => gram_cmd(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Mmd(a) => mmd_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Label(a) => label(a),
        Command::Modulus(a) => modulus(a),
        Command::McshaneCheck(a) => {
            let cfg: McShaneConfig = read_json(&a.config)?;
            let prov = provenance(&cfg)?;
            log(verbose, &format!("mcshane-check: {} pairs, M = {}", cfg.n_pairs, cfg.m));
            let mut report = Report::Mcshane(mcshane_consistency_check(&cfg)?);
            report.set_provenance(prov);
            emit(&report, &a)
        }
        Command::Converge(a) => {
            let cfg: ConvergenceConfig = read_json(&a.report.config)?;
            let prov = provenance(&cfg)?;
            log(verbose, &format!("converge: grid {:?}, {} seeds", cfg.m_grid, cfg.seeds));
            let study = kernel_convergence_study(&cfg)?;
            if let Some(dat) = &a.dat {
                fs::write(dat, study.to_dat())?;
            }
            let mut report = Report::Convergence(study);
            report.set_provenance(prov);
            emit(&report, &a.report)
        }
        Command::Transfer(a) => {
            let cfg: TransferConfig = read_json(&a.config)?;
            let prov = provenance(&cfg)?;
            log(verbose, &format!("transfer: train M = {}, test M = {:?}", cfg.train_m, cfg.test_m));
            let mut report = Report::Transfer(functional_transfer_study(&cfg)?);
            report.set_provenance(prov);
            emit(&report, &a)
        }
        Command::Selftest(a) => selftest(a),
        Command::Version(a) => version(a),
    }
}

fn log(verbose: bool, msg: &str) {
    if verbose {
        eprintln!("{msg}");
    }
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_number(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| usage(format!("invalid {what} {s:?}")))
}

/// `gaussian:GAMMA` or `imq:C`.
pub fn parse_base(spec: &str) -> Result<BaseKernel> {
    let base = match spec.split_once(':') {
        Some(("gaussian", g)) => BaseKernel::Gaussian { gamma: parse_number(g, "gamma")? },
        Some(("imq", c)) => BaseKernel::InverseMultiquadric { c: parse_number(c, "c")? },
        _ => return Err(usage(format!("unknown base kernel {spec:?}; expected gaussian:GAMMA or imq:C"))),
    };
    base.validate()?;
    Ok(base)
}

/// `euclidean` or `kernel:<base>`.
pub fn parse_metric(spec: &str) -> Result<GroundMetric> {
    if spec == "euclidean" {
        return Ok(GroundMetric::Euclidean);
    }
    match spec.strip_prefix("kernel:") {
        Some(base) => Ok(GroundMetric::Kernel { base: parse_base(base)? }),
        None => Err(usage(format!("unknown metric {spec:?}; expected euclidean or kernel:gaussian:GAMMA"))),
    }
}

/// Decimal rendering with 12 significant digits.
pub fn twelve_significant(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{:.12}", v.abs());
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (11 - exponent).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding can carry into a new leading digit (9.99… → 10.0…)
    let digits = s.chars().filter(char::is_ascii_digit).skip_while(|c| *c == '0').count();
    if digits > 12 && decimals > 0 {
        format!("{v:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

fn w1(a: W1Args) -> Result<()> {
    let mu = read_measure(&a.mu)?;
    let nu = read_measure(&a.nu)?;
    let metric = parse_metric(&a.metric)?;
    if a.plan.is_some() && a.solver != Solver::Exact {
        return Err(usage("--plan requires --solver exact"));
    }
    let value = match a.solver {
        Solver::Exact => {
            let (d, plan) = w1_exact(&mu, &nu, &metric)?;
            if let Some(p) = &a.plan {
                fs::write(p, plan.to_csv())?;
            }
            d
        }
        Solver::OneD => {
            if metric != GroundMetric::Euclidean {
                return Err(usage("the 1d solver uses the euclidean metric"));
            }
            w1_1d(&mu, &nu)?
        }
        Solver::Sinkhorn => {
            let out = w1_sinkhorn(&mu, &nu, &metric, a.eps, a.max_iters)?;
            println!("{}", twelve_significant(out.cost));
            if !out.converged {
                return Err(CliError::NotConverged(out.marginal_violation));
            }
            return Ok(());
        }
    };
    println!("{}", twelve_significant(value));
    Ok(())
}

fn read_kernel(path: &Path) -> Result<DistributionKernel> {
    let k: DistributionKernel = read_json(path)?;
    k.validate()?;
    Ok(k)
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let f = fs::File::open(path)?;
    Ok(Dataset::read_jsonl(BufReader::new(f))?)
}

fn kernel_eval(a: KernelEvalArgs) -> Result<()> {
    let k = read_kernel(&a.kernel)?;
    println!("{:?}", k.eval(&read_measure(&a.mu)?, &read_measure(&a.nu)?)?);
    Ok(())
}

fn gram_cmd(a: GramArgs) -> Result<()> {
    let k = read_kernel(&a.kernel)?;
    let ds = read_dataset(&a.data)?;
    let centers: Vec<_> = ds.configs.iter().map(|c| c.empirical_measure()).collect();
    let g = gram(&k, &centers)?;
    let psd = psd_check(&g, a.psd_tol)?;
    eprintln!("psd: min_eigenvalue={:?} pass={}", psd.min_eigenvalue, psd.pass);
    write_out(a.out.as_deref(), g.to_csv().as_bytes())
}

fn fit(a: FitArgs) -> Result<()> {
    let k = read_kernel(&a.kernel)?;
    let ds = read_dataset(&a.data)?;
    let labels = ds.labels.as_ref().ok_or_else(|| usage("fit needs a labelled dataset (see `mfk label`)"))?;
    let centers: Vec<_> = ds.configs.iter().map(|c| c.empirical_measure()).collect();
    let fitted = ridge_fit(&k, &centers, labels, a.lambda)?;
    let metadata = json!({
        "n_train": ds.len(),
        "m": ds.meta.m,
        "dim": ds.meta.dim,
        "observable": ds.meta.observable,
        "residual": fitted.residual,
    });
    let model = ModelFile::from_expansion(&fitted.expansion, a.lambda, fitted.jitter, metadata);
    write_out(a.out.as_deref(), (serde_json::to_string_pretty(&model).map_err(mfkernels::Error::from)? + "\n").as_bytes())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model: ModelFile = read_json(&a.model)?;
    let f = model.to_expansion()?;
    let ds = read_dataset(&a.data)?;
    let mut out = String::new();
    for c in &ds.configs {
        out.push_str(&format!("{:?}\n", expansion_eval(&f, &c.empirical_measure())?));
    }
    write_out(a.out.as_deref(), out.as_bytes())
}

fn mmd_cmd(a: MmdArgs) -> Result<()> {
    let base = parse_base(&a.base)?;
    println!("{}", twelve_significant(mmd(&base, &read_measure(&a.mu)?, &read_measure(&a.nu)?)?));
    Ok(())
}

fn jsonl(ds: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    ds.write_jsonl(&mut buf)?;
    Ok(buf)
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    if a.every == 0 {
        return Err(usage("--every must be positive"));
    }
    let spec: DynamicsSpec = read_json(&a.dynamics)?;
    let traj = simulate(&spec, a.m, a.steps, a.seed)?;
    let kept: Vec<_> = traj.into_iter().step_by(a.every).collect();
    let mut ds = Dataset::unlabelled(kept)?;
    ds.meta.dynamics = Some(spec);
    ds.meta.seed = Some(a.seed);
    write_out(a.out.as_deref(), &jsonl(&ds)?)
}

fn label(a: LabelArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let obs: ObservableSpec = read_json(&a.observable)?;
    let mut labelled = make_dataset(ds.configs, &obs)?;
    labelled.meta.dynamics = ds.meta.dynamics;
    labelled.meta.seed = ds.meta.seed;
    write_out(a.out.as_deref(), &jsonl(&labelled)?)
}

fn modulus(a: ModulusArgs) -> Result<()> {
    let k = read_kernel(&a.kernel)?;
    let sampler: SamplerSpec = read_json(&a.sampler)?;
    let domain: Option<DomainBox> = a.domain.as_deref().map(read_json).transpose()?;
    let metric = parse_metric(&a.metric)?;
    let estimate = estimate_modulus(&k, a.m, &sampler, &metric, a.trials, a.seed)?;
    let analytic = analytic_modulus(&k, sampler.dim(), domain.as_ref())
        .map(|am| json!({ "modulus": am.modulus, "metric": am.metric }));
    let out = json!({ "metric": metric, "estimate": estimate, "analytic": analytic });
    write_out(a.out.as_deref(), (serde_json::to_string_pretty(&out).map_err(mfkernels::Error::from)? + "\n").as_bytes())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the compact JSON of the resolved config (keys sorted).
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<(Value, String)> {
    let value = serde_json::to_value(cfg).map_err(mfkernels::Error::from)?;
    let canonical = serde_json::to_vec(&value).map_err(mfkernels::Error::from)?;
    Ok((value, hex(&Sha256::digest(&canonical))))
}

fn provenance<T: Serialize>(cfg: &T) -> Result<Provenance> {
    let (config, config_hash) = config_hash(cfg)?;
    Ok(Provenance { version: env!("CARGO_PKG_VERSION").into(), config_hash, config })
}

fn emit(report: &Report, a: &ReportArgs) -> Result<()> {
    let format = match a.format {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    let mut buf = Vec::new();
    report.write(&mut buf, format)?;
    write_out(a.out.as_deref(), &buf)
}

fn selftest(a: SelftestArgs) -> Result<()> {
    let results = run_selftest(a.seed)?;
    let mut failed = 0;
    for r in &results {
        println!("{:<28} {:<4} worst={:e}", r.name, if r.pass { "PASS" } else { "FAIL" }, r.worst);
        failed += usize::from(!r.pass);
    }
    if failed > 0 {
        return Err(CliError::SelftestFailed(failed));
    }
    Ok(())
}

/// Resolves a config file against each experiment schema in turn.
fn resolved_config_hash(path: &Path) -> Result<String> {
    if let Ok(c) = read_json::<ConvergenceConfig>(path) {
        return Ok(config_hash(&c)?.1);
    }
    if let Ok(c) = read_json::<TransferConfig>(path) {
        return Ok(config_hash(&c)?.1);
    }
    match read_json::<McShaneConfig>(path) {
        Ok(c) => Ok(config_hash(&c)?.1),
        Err(mfkernels::Error::Parse(_)) => Err(mfkernels::Error::Parse(format!(
            "{}: not a converge, transfer or mcshane-check config",
            path.display()
        ))
        .into()),
        Err(e) => Err(e.into()),
    }
}

fn version(a: VersionArgs) -> Result<()> {
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    println!("mfk {}", env!("CARGO_PKG_VERSION"));
    println!("build: {profile} {}-{}", std::env::consts::ARCH, std::env::consts::OS);
    if let Some(p) = &a.config {
        println!("config_hash: {}", resolved_config_hash(p)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(twelve_significant(0.0), "0.000000000000");
        assert_eq!(twelve_significant(0.5), "0.500000000000");
        assert_eq!(twelve_significant(1.5), "1.50000000000");
        assert_eq!(twelve_significant(123.0), "123.000000000");
        assert_eq!(twelve_significant(0.999_999_999_999_9), "1.00000000000");
        assert_eq!(twelve_significant(0.001_234_5), "0.00123450000000");
    }

    #[test]
    fn metric_specs() {
        assert_eq!(parse_metric("euclidean").unwrap(), GroundMetric::Euclidean);
        assert_eq!(
            parse_metric("kernel:gaussian:0.5").unwrap(),
            GroundMetric::Kernel { base: BaseKernel::gaussian(0.5) }
        );
        assert!(parse_metric("kernel:gaussian:-1").is_err());
        assert!(parse_metric("manhattan").is_err());
    }
}
