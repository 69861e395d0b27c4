//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 failed numerical check,
//! 1 any other failure (I/O). Files written by a failing command are removed.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{RawConfig, RunConfig};
use crate::ensemble::{self, replica_seed, DivergenceReport, MomentReport};
use crate::error::Error;
use crate::integrator::simulate;
use crate::io::{self, RunManifest};
use crate::model::Parameters;
use crate::spectral::{self, StabilityVerdict, DENSE_LIMIT};
use crate::stationary::{self, LimitCovariance};

/// Relative slope tolerance of the divergence probe.
pub const DIVERGENCE_TOLERANCE: f64 = 0.15;
/// Minimum fraction of stationary comparisons with |z| <= 3.
pub const Z_PASS_FRACTION: f64 = 0.95;
/// Multiset distance allowed between closed-form and dense spectra.
pub const SPECTRUM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "phs-ring", version, about = "Stochastic port-Hamiltonian ring model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and write it as CSV.
    Simulate(IoArgs),
    /// Closed-form eigenvalues, stability verdict and dense cross-check.
    Spectrum(IoArgs),
    /// Stationary covariance, Lyapunov residual and large-N limit.
    Covariance(IoArgs),
    /// Monte-Carlo check against the stationary law (gamma > 0) or the divergence law (gamma = 0).
    Validate(IoArgs),
    /// Repeat spectrum and covariance over a parameter grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct IoArgs {
    /// Configuration file (`key = value` lines).
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub config: Option<PathBuf>,
    /// Manifest of a previous run; its configuration is reused.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Grid specification `key=start:stop:step`, e.g. `gamma=0:2:0.1`.
    #[arg(long)]
    pub vary: String,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_config_error() {
            2
        } else if matches!(e, Error::Io(_) | Error::Json(_)) {
            1
        } else {
            3
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Tracks files written into the output directory so a failed run can remove them.
struct OutputDir {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<String>,
}

impl OutputDir {
    fn open(dir: &Path) -> CliResult<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        self.written.push(name.to_string());
        fs::write(self.dir.join(name), contents)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
        self.write(name, &(text + "\n"))
    }

    fn write_manifest(&mut self, command: &str, config: &RunConfig, seeds: Vec<u64>) -> CliResult<()> {
        let mut outputs = self.written.clone();
        outputs.push("manifest.json".into());
        let manifest = RunManifest::new(command, config, seeds, outputs);
        let json = manifest.to_json()?;
        self.write("manifest.json", &(json + "\n"))
    }

    fn discard(self) {
        for name in &self.written {
            let _ = fs::remove_file(self.dir.join(name));
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn load_config(args: &IoArgs) -> CliResult<RawConfig> {
    if let Some(path) = &args.manifest {
        let manifest = RunManifest::from_json(&fs::read_to_string(path)?).map_err(|e| CliError {
            code: 2,
            message: format!("{}: {e}", path.display()),
        })?;
        return Ok(RawConfig::parse(&manifest.config_text)?);
    }
    let path = args.config.as_ref().expect("clap enforces --config or --manifest");
    let text = fs::read_to_string(path)?;
    Ok(RawConfig::parse(&text)?)
}

/// Runs one command. Output files are only left behind on success.
pub fn run(cli: Cli) -> CliResult<()> {
    let io_args = match &cli.command {
        Command::Simulate(a) | Command::Spectrum(a) | Command::Covariance(a) | Command::Validate(a) => a,
        Command::Sweep(a) => &a.io,
    };
    let raw = load_config(io_args)?;
    let mut out = OutputDir::open(&io_args.out)?;
    let resolved = |cmd: fn(&RunConfig, &mut OutputDir) -> CliResult<Vec<u64>>, out: &mut OutputDir| {
        let config = raw.resolve()?;
        let seeds = cmd(&config, out)?;
        Ok((config, seeds))
    };
    let (command, result) = match &cli.command {
        Command::Simulate(_) => ("simulate".to_string(), resolved(cmd_simulate, &mut out)),
        Command::Spectrum(_) => ("spectrum".to_string(), resolved(cmd_spectrum, &mut out)),
        Command::Covariance(_) => ("covariance".to_string(), resolved(cmd_covariance, &mut out)),
        Command::Validate(_) => ("validate".to_string(), resolved(cmd_validate, &mut out)),
        Command::Sweep(a) => (format!("sweep --vary {}", a.vary), cmd_sweep(&raw, &a.vary, &mut out)),
    };
    let result = result.and_then(|(config, seeds)| out.write_manifest(&command, &config, seeds));
    if let Err(e) = result {
        out.discard();
        return Err(e);
    }
    Ok(())
}

fn cmd_simulate(config: &RunConfig, out: &mut OutputDir) -> CliResult<Vec<u64>> {
    let traj = simulate(&config.params, &config.sim)?;
    let last = traj.states.last().expect("at least one sample");
    let drift = (last.total_distance() - config.params.ring_length).abs();
    if drift > 1e-9 * config.params.ring_length {
        return Err(CliError::numerical(format!(
            "total headway drifted by {drift:e} from the ring length"
        )));
    }
    if traj.ordering_violations > 0 {
        log::info!(
            "{} steps had at least one negative headway (overtaking)",
            traj.ordering_violations
        );
    }
    out.write("trajectory.csv", &io::trajectory_csv(&traj))?;
    println!(
        "simulated {} samples, final mean velocity {}",
        traj.len(),
        traj.mean_velocity_track.last().unwrap()
    );
    Ok(vec![config.sim.seed])
}

#[derive(Serialize)]
struct SpectrumSummary {
    verdict: &'static str,
    stability: StabilityVerdict,
    eigenvalue_sum: f64,
    trace: f64,
    oracle_distance: Option<f64>,
    oracle_tolerance: f64,
}

struct SpectrumChecks {
    spec: spectral::SpectralDecomposition,
    stability: StabilityVerdict,
    oracle: Option<f64>,
    tolerance: f64,
}

fn spectrum_checks(params: &Parameters) -> CliResult<SpectrumChecks> {
    let spec = spectral::eigenvalues(params)?;
    let tolerance = spectral::oracle_tolerance(params, &spec, SPECTRUM_TOLERANCE);
    let verdict = spectral::is_asymptotically_stable(params)?;
    let oracle = if params.n_agents <= DENSE_LIMIT {
        let dense = spectral::dense_spectrum_oracle(params)?;
        Some(spectral::multiset_distance(&spec.values(), &dense)?)
    } else {
        None
    };
    if let Some(d) = oracle {
        if !(d <= tolerance) {
            return Err(CliError::numerical(format!(
                "closed-form and dense spectra differ by {d:e} (tolerance {tolerance:e})"
            )));
        }
    }
    Ok(SpectrumChecks {
        spec,
        stability: verdict,
        oracle,
        tolerance,
    })
}

fn cmd_spectrum(config: &RunConfig, out: &mut OutputDir) -> CliResult<Vec<u64>> {
    let p = &config.params;
    let SpectrumChecks {
        spec,
        stability,
        oracle,
        tolerance,
    } = spectrum_checks(p)?;
    let verdict = if stability.stable { "stable" } else { "not stable" };
    let summary = SpectrumSummary {
        verdict,
        eigenvalue_sum: spec.eigenvalues.iter().map(|e| e.re).sum(),
        trace: -2.0 * p.beta * p.n_agents as f64 - p.gamma * p.n_agents as f64,
        stability,
        oracle_distance: oracle,
        oracle_tolerance: tolerance,
    };
    out.write("spectrum.csv", &io::spectrum_csv(&spec))?;
    out.write_json("spectrum.json", &summary)?;
    println!(
        "{verdict} (max real part over non-conserved modes: {})",
        summary.stability.max_real_part
    );
    Ok(Vec::new())
}

#[derive(Serialize)]
struct CovarianceSummary {
    lyapunov_residual: f64,
    residual_tolerance: f64,
    sum_v: f64,
    expected_sum_v: f64,
    min_eigenvalue: Option<f64>,
    limit: Option<LimitCovariance>,
}

fn residual_tolerance(p: &Parameters) -> f64 {
    1e-9 * p.sigma * p.sigma * (1.0 + p.alpha * p.alpha + 4.0 * p.beta + p.gamma)
}

fn cmd_covariance(config: &RunConfig, out: &mut OutputDir) -> CliResult<Vec<u64>> {
    let p = &config.params;
    let cov = stationary::stationary_covariance(p)?;
    let residual = stationary::lyapunov_residual(&cov.sigma, p)?;
    let tolerance = residual_tolerance(p);
    if !(residual <= tolerance) {
        return Err(CliError::numerical(format!(
            "Lyapunov residual {residual:e} exceeds {tolerance:e}"
        )));
    }
    let min_eigenvalue = if p.n_agents <= DENSE_LIMIT {
        Some(stationary::min_symmetric_eigenvalue(&cov.sigma)?)
    } else {
        None
    };
    let limit = LimitCovariance::new(p).ok();
    let limit_column: Option<Vec<f64>> = limit.map(|l| (0..p.n_agents).map(|j| l.value(j)).collect());
    out.write("v.csv", &io::covariance_vector_csv(&cov, limit_column.as_deref()))?;
    out.write("sigma.csv", &io::matrix_csv(&cov.sigma))?;
    out.write_json(
        "covariance.json",
        &CovarianceSummary {
            lyapunov_residual: residual,
            residual_tolerance: tolerance,
            sum_v: cov.v.iter().sum(),
            expected_sum_v: p.sigma * p.sigma / (2.0 * p.gamma),
            min_eigenvalue,
            limit,
        },
    )?;
    println!("v_0 = {}, Lyapunov residual = {residual:e}", cov.v[0]);
    Ok(Vec::new())
}

#[derive(Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum ValidationReport {
    Stationary { passed: bool, report: MomentReport },
    Divergence { passed: bool, report: DivergenceReport },
}

fn cmd_validate(config: &RunConfig, out: &mut OutputDir) -> CliResult<Vec<u64>> {
    let p = &config.params;
    let seeds: Vec<u64> = (0..config.ensemble.replicas)
        .map(|r| replica_seed(config.ensemble.base_seed, r))
        .collect();
    let (report, passed, summary) = if p.gamma > 0.0 {
        let report = ensemble::run_ensemble(p, &config.sim, &config.ensemble)?;
        let fraction = report.fraction_within_3_sigma.unwrap_or(0.0);
        let passed = fraction >= Z_PASS_FRACTION;
        let summary = format!("{:.1}% of comparisons within 3 standard errors", 100.0 * fraction);
        (ValidationReport::Stationary { passed, report }, passed, summary)
    } else {
        let report = ensemble::divergence_probe(p, &config.sim, &config.ensemble)?;
        let passed = if report.expected_slope > 0.0 {
            (report.slope / report.expected_slope - 1.0).abs() <= DIVERGENCE_TOLERANCE
        } else {
            report.slope == 0.0
        };
        let summary = format!(
            "mean-velocity variance slope {} (expected {})",
            report.slope, report.expected_slope
        );
        (ValidationReport::Divergence { passed, report }, passed, summary)
    };
    if !passed {
        return Err(CliError::numerical(format!("validation failed: {summary}")));
    }
    out.write_json("report.json", &report)?;
    println!("{summary}");
    Ok(seeds)
}

/// Parses `key=start:stop:step` into the key and the grid values.
pub fn parse_vary(spec: &str) -> Result<(String, Vec<f64>), Error> {
    let bad = |m: &str| Error::config("vary", format!("{m} in `{spec}` (expected key=start:stop:step)"));
    let (key, range) = spec.split_once('=').ok_or_else(|| bad("missing `=`"))?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("need three `:`-separated numbers"));
    }
    let nums = parts
        .iter()
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad("bad number")))
        .collect::<Result<Vec<_>, _>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(bad("need step > 0 and stop >= start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    let values = (0..count).map(|i| start + i as f64 * step).collect();
    Ok((key.trim().to_string(), values))
}

const SWEEPABLE: &[&str] = &["n_agents", "ring_length", "alpha", "beta", "gamma", "sigma", "u"];

fn cmd_sweep(raw: &RawConfig, vary: &str, out: &mut OutputDir) -> CliResult<(RunConfig, Vec<u64>)> {
    let (key, values) = parse_vary(vary)?;
    if !SWEEPABLE.contains(&key.as_str()) {
        return Err(Error::config("vary", format!("cannot sweep `{key}`; choose one of {SWEEPABLE:?}")).into());
    }
    let base = raw.resolve()?;
    let mut csv = format!("{key},stable,max_real_part,v0,lyapunov_residual,oracle_distance\n");
    for value in values {
        let mut point = raw.clone();
        let text = if key == "n_agents" {
            format!("{}", value.round() as i64)
        } else {
            io::fmt_f64(value)
        };
        point.set(&key, text.clone())?;
        let p = point.resolve()?.params;
        let SpectrumChecks { stability, oracle, .. } = spectrum_checks(&p)?;
        let (v0, residual) = if p.gamma > 0.0 {
            let cov = stationary::stationary_covariance(&p)?;
            let residual = stationary::lyapunov_residual(&cov.sigma, &p)?;
            if !(residual <= residual_tolerance(&p)) {
                return Err(CliError::numerical(format!(
                    "Lyapunov residual {residual:e} too large at {key} = {text}"
                )));
            }
            (io::fmt_f64(cov.v[0]), io::fmt_f64(residual))
        } else {
            (String::new(), String::new())
        };
        csv.push_str(&format!(
            "{text},{},{},{v0},{residual},{}\n",
            stability.stable,
            io::fmt_f64(stability.max_real_part),
            oracle.map(io::fmt_f64).unwrap_or_default()
        ));
    }
    out.write("sweep.csv", &csv)?;
    Ok((base, Vec::new()))
}
