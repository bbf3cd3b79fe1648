use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fmlab::criteria::{CriterionKind, GateVariant};
use fmlab::dynamical::{dyn_profile, write_dyn_csv, EnergyWindow};
use fmlab::ensemble::{Disorder, Gauge, HoppingKernel};
use fmlab::lattice::{box_region, Site};
use fmlab::moments::{decay_fit, moment_profile, shell_profile, write_profile_csv, ShellMode};
use fmlab::resolvent::SpectralParameter;
use fmlab::sweep::{constants_for, evaluate_criterion, run_sweep_limited, CriterionParams, EnsembleSpec, SweepConfig};
use fmlab::verify::{verify_suite, Level, VerifyOptions};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fmlab", version, about = "Fractional-moment localization lab")]
struct Cli {
    /// Worker threads; falls back to FMLAB_THREADS, then the physical core count.
    #[arg(long, global = true, env = "FMLAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate regularity constants C_s, D_s, κ_τ for a disorder law.
    Constants(ConstantsArgs),
    /// Evaluate one localization criterion and print its report as JSON.
    Criterion(CriterionArgs),
    /// Fractional-moment profile on a box, with an exponential fit.
    Moments(MomentsArgs),
    /// Run a (λ, E) sweep described by a TOML or JSON config.
    Sweep(SweepArgs),
    /// Spectral total variation and time-evolution profile.
    Dynamical(DynamicalArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct EnsembleArgs {
    /// Ensemble description (TOML or JSON); overrides the flags below.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Lower end of the uniform disorder law.
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    disorder_low: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    disorder_high: f64,
    /// `nn` (nearest neighbour) or `none`.
    #[arg(long, default_value = "nn")]
    hopping: String,
    /// Flux per plaquette (d = 2), Landau gauge.
    #[arg(long)]
    flux: Option<f64>,
}

impl EnsembleArgs {
    fn spec(&self) -> anyhow::Result<EnsembleSpec> {
        if let Some(path) = &self.ensemble {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return Ok(if is_json(path) { serde_json::from_str(&text)? } else { toml::from_str(&text)? });
        }
        let mut hopping = match self.hopping.as_str() {
            "nn" => HoppingKernel::nearest_neighbor(),
            "none" => HoppingKernel::none(),
            other => return Err(usage(format!("unknown hopping `{other}` (expected nn or none)"))),
        };
        if let Some(f) = self.flux {
            hopping = hopping.with_flux(f, Gauge::Landau);
        }
        Ok(EnsembleSpec {
            dim: self.dim,
            hopping,
            disorder: Disorder::uniform(self.disorder_low, self.disorder_high)?,
            u_per: None,
        })
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[derive(Args)]
struct ConstantsArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long, default_value_t = 0.5)]
    s: f64,
    #[arg(long, default_value_t = 16)]
    starts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON cache read before and updated after the estimate.
    #[arg(long)]
    constants_cache: Option<PathBuf>,
}

#[derive(Args)]
struct CriterionArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    /// single_site, thm1, thm2, general, power_gate, spectrum_prob or multiscale_prob.
    #[arg(long, value_parser = parse_serde::<CriterionKind>)]
    kind: CriterionKind,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    energy: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.5)]
    s: f64,
    /// Half-width of Λ = [-L, L]^d.
    #[arg(long = "L", default_value_t = 2)]
    l: u64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    starts: usize,
    #[arg(long)]
    constants_cache: Option<PathBuf>,
    /// finite_volume or infinite_volume (power_gate only).
    #[arg(long, value_parser = parse_serde::<GateVariant>, default_value = "finite_volume")]
    variant: GateVariant,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value_t = 0.05)]
    prob_threshold: f64,
}

#[derive(Args)]
struct MomentsArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    energy: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.5)]
    s: f64,
    /// Half-width of the box.
    #[arg(long, default_value_t = 8)]
    half_width: u64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// none, mean or sup.
    #[arg(long, value_parser = parse_serde::<ShellMode>, default_value = "sup")]
    shell: ShellMode,
    #[arg(long, default_value_t = 1)]
    fit_from: u64,
    #[arg(long)]
    fit_to: Option<u64>,
    /// Profile CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Skip cells already completed under the same config.
    #[arg(long)]
    resume: bool,
    /// Stop after computing this many new cells.
    #[arg(long)]
    max_cells: Option<usize>,
}

#[derive(Args)]
struct DynamicalArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 20)]
    half_width: u64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Energy interval `lo:hi`; repeat for a union. Omit for the whole line.
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
    window: Vec<(f64, f64)>,
    #[arg(long, default_value_t = 50.0)]
    t_max: f64,
    #[arg(long, default_value_t = 200)]
    t_steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// fast or full.
    #[arg(long, value_parser = parse_serde::<Level>, default_value = "fast")]
    level: Level,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    residual_tol: Option<f64>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected lo:hi")?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok((num(a)?, num(b)?))
}

/// Marks an error as a usage error (exit code 2).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: String) -> anyhow::Error {
    Usage(msg).into()
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn constants(a: ConstantsArgs) -> anyhow::Result<bool> {
    let spec = a.ensemble.spec()?;
    let params = CriterionParams {
        s: a.s,
        starts: a.starts,
        constants_seed: a.seed,
        ..CriterionParams::new(CriterionKind::SingleSite)
    };
    let c = constants_for(&spec.disorder, &params, a.constants_cache.as_deref())?;
    print_json(&c)?;
    Ok(true)
}

fn criterion(a: CriterionArgs) -> anyhow::Result<bool> {
    let spec = a.ensemble.spec()?;
    let params = CriterionParams {
        kind: a.kind,
        s: a.s,
        l: a.l,
        samples: a.samples,
        eta: a.eta,
        starts: a.starts,
        constants_seed: 1,
        delta: a.delta,
        amplitude: a.amplitude,
        mu: a.mu,
        prob_threshold: a.prob_threshold,
        variant: a.variant,
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let ens = spec.build(a.lambda, a.seed)?;
    let consts = if params.needs_constants() {
        Some(constants_for(&spec.disorder, &params, a.constants_cache.as_deref())?)
    } else {
        None
    };
    let report = evaluate_criterion(&ens, a.energy, &params, consts.as_ref())?;
    print_json(&report)?;
    eprintln!("{:?}: lhs {:.6e} threshold {} verdict {:?}", report.kind, report.lhs, report.threshold, report.verdict);
    Ok(true)
}

fn moments(a: MomentsArgs) -> anyhow::Result<bool> {
    let spec = a.ensemble.spec()?;
    let ens = spec.build(a.lambda, a.seed)?;
    let origin = Site::origin(ens.dim);
    let region = box_region(ens.dim, origin, a.half_width)?;
    let z = SpectralParameter::new(a.energy, a.eta);
    let est = moment_profile(&ens, &region, &origin, region.sites(), z, a.s, a.samples)?;
    let points = shell_profile(&est, a.shell);
    if let Some(path) = &a.out {
        write_profile_csv(path, &points)?;
    }
    let fit = decay_fit(&points, (a.fit_from, a.fit_to.unwrap_or(a.half_width))).ok();
    print_json(&json!({ "profile": points, "fit": fit }))?;
    Ok(true)
}

fn sweep(a: SweepArgs) -> anyhow::Result<bool> {
    let mut config = SweepConfig::load(&a.config).map_err(|e| usage(e.to_string()))?;
    config.resume |= a.resume;
    config.validate().map_err(|e| usage(e.to_string()))?;
    let out = run_sweep_limited(&config, a.max_cells)?;
    println!(
        "{} cells: {} computed, {} skipped{}",
        out.cells,
        out.computed,
        out.skipped,
        if out.complete {
            format!("; summary at {}", config.summary_path().display())
        } else {
            "; incomplete, rerun with --resume".to_owned()
        }
    );
    Ok(true)
}

fn dynamical(a: DynamicalArgs) -> anyhow::Result<bool> {
    let spec = a.ensemble.spec()?;
    let ens = spec.build(a.lambda, a.seed)?;
    let origin = Site::origin(ens.dim);
    let region = box_region(ens.dim, origin, a.half_width)?;
    let window = if a.window.is_empty() {
        EnergyWindow::all()
    } else {
        EnergyWindow::new(a.window).map_err(|e| usage(e.to_string()))?
    };
    if a.t_steps == 0 {
        bail!(usage("--t-steps must be positive".into()));
    }
    let t_grid: Vec<f64> = (0..=a.t_steps).map(|k| a.t_max * k as f64 / a.t_steps as f64).collect();
    let prof = dyn_profile(&ens, &region, &origin, region.sites(), &window, &t_grid, a.samples)?;
    if let Some(path) = &a.out {
        write_dyn_csv(path, &prof)?;
    }
    let hi = a.half_width.min(12);
    let fit = decay_fit(&prof.tv_profile(), (hi.min(3), hi)).ok();
    print_json(&json!({ "profile": prof, "tv_fit": fit }))?;
    Ok(prof.violations == 0)
}

fn verify(a: VerifyArgs) -> anyhow::Result<bool> {
    let mut options = VerifyOptions::new(a.level, a.seed);
    if let Some(t) = a.residual_tol {
        options.residual_tol = t;
    }
    let report = verify_suite(&options)?;
    for c in &report.checks {
        println!(
            "{} {}: {:.4e} vs {:.4e}  {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.bound,
            c.detail
        );
    }
    if let Some(path) = &a.out {
        fmlab::io::write_atomic(path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    let failures = report.failures();
    if !failures.is_empty() {
        let names: Vec<&str> = failures.iter().map(|c| c.name.as_str()).collect();
        eprintln!("failed checks: {}", names.join(", "));
    }
    Ok(report.passed())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let threads = match cli.threads {
        Some(0) => return Err(usage("--threads must be positive".into())),
        Some(t) => t,
        None => num_cpus::get_physical(),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    pool.install(|| match cli.command {
        Command::Constants(a) => constants(a),
        Command::Criterion(a) => criterion(a),
        Command::Moments(a) => moments(a),
        Command::Sweep(a) => sweep(a),
        Command::Dynamical(a) => dynamical(a),
        Command::Verify(a) => verify(a),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_usage = e.downcast_ref::<Usage>().is_some()
                || matches!(e.downcast_ref::<fmlab::Error>(), Some(fmlab::Error::Config(_) | fmlab::Error::InvalidInput(_)));
            ExitCode::from(if is_usage { 2 } else { 1 })
        }
    }
}
