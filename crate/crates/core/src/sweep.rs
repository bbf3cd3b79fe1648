//! Sweep configuration, per-cell criterion evaluation and resumable
//! `(λ, E)` phase-diagram runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{
    multiscale_event_prob, nested_boxes, power_gate, single_site_b, spectrum_distance_prob, thm1_b, thm2_lhs,
    CriterionKind, CriterionReport, GateVariant,
};
use crate::ensemble::{Disorder, HoppingKernel, OperatorEnsemble, PeriodicPotential};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::lattice::{box_region, Site};
use crate::moments::{moment_profile, shell_profile, ShellMode};
use crate::regularity::{ConstantsCache, Effort, RegularityConstants};
use crate::resolvent::SpectralParameter;

pub const SCHEMA_VERSION: u32 = 1;

fn default_hopping() -> HoppingKernel {
    HoppingKernel::nearest_neighbor()
}

/// Everything about the random operator except `λ` and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub dim: usize,
    #[serde(default = "default_hopping")]
    pub hopping: HoppingKernel,
    pub disorder: Disorder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_per: Option<PeriodicPotential>,
}

impl EnsembleSpec {
    pub fn build(&self, lambda: f64, master_seed: u64) -> Result<OperatorEnsemble> {
        let e = OperatorEnsemble::new(self.dim, self.hopping.clone(), self.disorder.clone(), lambda, master_seed)?;
        match &self.u_per {
            Some(u) => e.with_periodic(u.clone()),
            None => Ok(e),
        }
    }
}

fn default_s() -> f64 {
    0.5
}
fn default_l() -> u64 {
    2
}
fn default_samples() -> usize {
    1000
}
fn default_starts() -> usize {
    16
}
fn default_constants_seed() -> u64 {
    1
}
fn default_delta() -> f64 {
    0.1
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_mu() -> f64 {
    0.5
}
fn default_prob_threshold() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionParams {
    pub kind: CriterionKind,
    #[serde(default = "default_s")]
    pub s: f64,
    /// Half-width of the box `Λ = [-L, L]^d`.
    #[serde(default = "default_l")]
    pub l: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub eta: f64,
    /// Multi-start count for estimated constants.
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_constants_seed")]
    pub constants_seed: u64,
    /// Spectral distance for `spectrum_prob`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Amplitude `A` for `multiscale_prob`.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Rate `μ` for `multiscale_prob`.
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Probability below which the probability kinds pass.
    #[serde(default = "default_prob_threshold")]
    pub prob_threshold: f64,
    #[serde(default = "default_variant")]
    pub variant: GateVariant,
}

fn default_variant() -> GateVariant {
    GateVariant::FiniteVolume
}

impl CriterionParams {
    pub fn new(kind: CriterionKind) -> Self {
        Self {
            kind,
            s: default_s(),
            l: default_l(),
            samples: default_samples(),
            eta: 0.0,
            starts: default_starts(),
            constants_seed: default_constants_seed(),
            delta: default_delta(),
            amplitude: default_amplitude(),
            mu: default_mu(),
            prob_threshold: default_prob_threshold(),
            variant: default_variant(),
        }
    }

    pub fn effort(&self) -> Effort {
        Effort::new(self.starts, self.constants_seed)
    }

    pub fn needs_constants(&self) -> bool {
        !matches!(self.kind, CriterionKind::SpectrumProb | CriterionKind::MultiscaleProb)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Config(format!("s = {} outside (0, 1)", self.s)));
        }
        if self.samples < 2 {
            return Err(Error::Config("need at least 2 samples".into()));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::Config("eta must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Constants for `(disorder, s, effort)`, read from and written back to `cache` when given.
pub fn constants_for(disorder: &Disorder, params: &CriterionParams, cache: Option<&Path>) -> Result<RegularityConstants> {
    match cache {
        Some(path) => {
            let mut c = ConstantsCache::load(path)?;
            let before = c.entries.len();
            let out = c.get_or_estimate(disorder, params.s, params.effort())?;
            if c.entries.len() != before {
                c.save(path)?;
            }
            Ok(out)
        }
        None => RegularityConstants::estimate(disorder, params.s, params.effort()),
    }
}

/// One criterion evaluation at energy `e`. `constants` is required for all
/// kinds except the probability estimators.
pub fn evaluate_criterion(
    ens: &OperatorEnsemble,
    e: f64,
    params: &CriterionParams,
    constants: Option<&RegularityConstants>,
) -> Result<CriterionReport> {
    params.validate()?;
    let consts = || constants.ok_or_else(|| Error::InvalidInput("criterion needs regularity constants".into()));
    let z = SpectralParameter::new(e, params.eta);
    let origin = Site::origin(ens.dim);
    let region = || box_region(ens.dim, origin, params.l);
    let (s, n) = (params.s, params.samples);
    match params.kind {
        CriterionKind::SingleSite => single_site_b(ens, e, s, consts()?),
        CriterionKind::Thm1 => {
            let r = region()?;
            thm1_b(ens, &r, z, s, n, &nested_boxes(&r), consts()?)
        }
        CriterionKind::Thm2 | CriterionKind::General => {
            let c = consts()?;
            if let Err(err) = c.c_tilde() {
                return Ok(CriterionReport::unavailable(params.kind, err.to_string(), Some(c)));
            }
            let mut r = thm2_lhs(ens, &region()?, z, s, n, c)?;
            r.kind = params.kind;
            Ok(r)
        }
        CriterionKind::PowerGate => {
            let r = region()?;
            let lo = params.l.div_ceil(2);
            let targets: Vec<Site> = r.sites().iter().filter(|y| y.norm() >= lo).copied().collect();
            let est = moment_profile(ens, &r, &origin, &targets, z, s, n)?;
            let sup = shell_profile(&est, ShellMode::Sup)
                .into_iter()
                .max_by(|a, b| a.mean.total_cmp(&b.mean))
                .map(|p| (p.mean, p.stderr));
            power_gate(ens, sup, params.l, params.variant, s, consts()?)
        }
        CriterionKind::SpectrumProb => {
            let est = spectrum_distance_prob(ens, params.l, e, params.delta, n, None)?;
            Ok(CriterionReport::from_probability(params.kind, &est, params.prob_threshold))
        }
        CriterionKind::MultiscaleProb => {
            let est = multiscale_event_prob(ens, params.l, params.amplitude, params.mu, z, n)?;
            Ok(CriterionReport::from_probability(params.kind, &est, params.prob_threshold))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub resume: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants_cache: Option<PathBuf>,
    pub lambdas: Vec<f64>,
    pub energies: Vec<f64>,
    pub ensemble: EnsembleSpec,
    pub criterion: CriterionParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Ok(Self::Toml),
            Some("json") => Ok(Self::Json),
            _ => Err(Error::Config(format!("{}: expected a .toml or .json file", path.display()))),
        }
    }
}

impl SweepConfig {
    pub fn parse(text: &str, format: ConfigFormat) -> Result<Self> {
        let c: Self = match format {
            ConfigFormat::Toml => toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
            ConfigFormat::Json => serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, ConfigFormat::from_path(path)?)
    }

    pub fn render(&self, format: ConfigFormat) -> Result<String> {
        match format {
            ConfigFormat::Toml => toml::to_string(self).map_err(|e| Error::Config(e.to_string())),
            ConfigFormat::Json => Ok(serde_json::to_string_pretty(self)?),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.lambdas.is_empty() || self.energies.is_empty() {
            return Err(Error::Config("grid must have at least one lambda and one energy".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("lambda must be positive, got {l}")));
        }
        if self.energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::Config("energies must be finite".into()));
        }
        self.criterion.validate()?;
        self.ensemble.build(self.lambdas[0], self.master_seed)?;
        Ok(())
    }

    /// Hash of everything that determines cell results; output location and
    /// the resume flag are excluded.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.resume = false;
        c.constants_cache = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        format!("{:016x}", crate::regularity::seed_from_text(&text))
    }

    fn cell_path(&self, i: usize, j: usize) -> PathBuf {
        self.output_dir.join("cells").join(format!("cell_{i:04}_{j:04}.json"))
    }

    pub fn summary_path(&self) -> PathBuf {
        self.output_dir.join("summary.csv")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub master_seed: u64,
    pub config: String,
    pub ensemble: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub lambda: f64,
    pub energy: f64,
    pub report: CriterionReport,
    pub wall_time_s: f64,
    pub seeds: SeedTrace,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub cells: usize,
    pub computed: usize,
    pub skipped: usize,
    /// False when a cell limit stopped the run early; no summary is written then.
    pub complete: bool,
}

fn load_cell(path: &Path, config: &SweepConfig, lambda: f64, energy: f64) -> Option<CellResult> {
    let text = std::fs::read_to_string(path).ok()?;
    let c: CellResult = serde_json::from_str(&text).ok()?;
    (c.seeds.config == config.fingerprint() && c.lambda == lambda && c.energy == energy).then_some(c)
}

/// Runs every grid cell, writing one JSON file per cell and `summary.csv`.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutcome> {
    run_sweep_limited(config, None)
}

/// As [`run_sweep`], computing at most `limit` new cells (in grid order).
pub fn run_sweep_limited(config: &SweepConfig, limit: Option<usize>) -> Result<SweepOutcome> {
    config.validate()?;
    std::fs::create_dir_all(config.output_dir.join("cells"))?;
    let constants = if config.criterion.needs_constants() {
        Some(constants_for(&config.ensemble.disorder, &config.criterion, config.constants_cache.as_deref())?)
    } else {
        None
    };
    let fp = config.fingerprint();
    let grid: Vec<(usize, usize)> = (0..config.lambdas.len())
        .flat_map(|i| (0..config.energies.len()).map(move |j| (i, j)))
        .collect();
    let mut todo = Vec::new();
    let mut skipped = 0;
    for &(i, j) in &grid {
        let done = config.resume
            && load_cell(&config.cell_path(i, j), config, config.lambdas[i], config.energies[j]).is_some();
        if done {
            skipped += 1;
        } else {
            todo.push((i, j));
        }
    }
    let complete = limit.map_or(true, |k| k >= todo.len());
    if let Some(k) = limit {
        todo.truncate(k);
    }
    todo.par_iter().try_for_each(|&(i, j)| -> Result<()> {
        let (lambda, energy) = (config.lambdas[i], config.energies[j]);
        let start = Instant::now();
        let ens = config.ensemble.build(lambda, config.master_seed)?;
        let report = evaluate_criterion(&ens, energy, &config.criterion, constants.as_ref())?;
        let cell = CellResult {
            lambda,
            energy,
            report,
            wall_time_s: start.elapsed().as_secs_f64(),
            seeds: SeedTrace {
                master_seed: config.master_seed,
                config: fp.clone(),
                ensemble: ens.fingerprint(),
                constants: constants
                    .as_ref()
                    .map(|_| ConstantsCache::key(&config.ensemble.disorder, config.criterion.s, &config.criterion.effort())),
            },
        };
        write_atomic(&config.cell_path(i, j), serde_json::to_string_pretty(&cell)?.as_bytes())
    })?;
    if complete {
        write_summary(config)?;
    }
    Ok(SweepOutcome {
        cells: grid.len(),
        computed: todo.len(),
        skipped,
        complete,
    })
}

/// Rebuilds `summary.csv` from the cell files; every cell must be present.
pub fn write_summary(config: &SweepConfig) -> Result<PathBuf> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "energy", "kind", "lhs", "uncertainty", "threshold", "verdict", "certification"])?;
    for (i, &lambda) in config.lambdas.iter().enumerate() {
        for (j, &energy) in config.energies.iter().enumerate() {
            let c = load_cell(&config.cell_path(i, j), config, lambda, energy)
                .ok_or_else(|| Error::Config(format!("cell ({lambda}, {energy}) missing or stale")))?;
            w.write_record(summary_row(&c))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let path = config.summary_path();
    write_atomic(&path, &bytes)?;
    Ok(path)
}

fn tag<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

fn summary_row(c: &CellResult) -> Vec<String> {
    let r = &c.report;
    vec![
        format!("{:e}", c.lambda),
        format!("{:e}", c.energy),
        tag(&r.kind),
        format!("{:e}", r.lhs),
        format!("{:e}", r.uncertainty),
        format!("{:e}", r.threshold),
        tag(&r.verdict),
        tag(&r.certification),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
schema_version = 1
master_seed = 7
output_dir = "out"
lambdas = [10.0, 20.0]
energies = [0.0]

[ensemble]
dim = 1
disorder = { kind = "uniform", a = -1.0, b = 1.0 }

[criterion]
kind = "single_site"
starts = 4
"#;

    #[test]
    fn toml_and_json_round_trip() {
        let c = SweepConfig::parse(EXAMPLE, ConfigFormat::Toml).unwrap();
        assert_eq!(c.ensemble.hopping, HoppingKernel::nearest_neighbor());
        assert_eq!(c.criterion.s, 0.5);
        for f in [ConfigFormat::Toml, ConfigFormat::Json] {
            let back = SweepConfig::parse(&c.render(f).unwrap(), f).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let bad = EXAMPLE.replace("[10.0, 20.0]", "[10.0, 0.0]");
        assert!(matches!(SweepConfig::parse(&bad, ConfigFormat::Toml), Err(Error::Config(_))));
        let bad = EXAMPLE.replace("[0.0]", "[]");
        assert!(SweepConfig::parse(&bad, ConfigFormat::Toml).is_err());
        let bad = EXAMPLE.replace("schema_version = 1", "schema_version = 9");
        assert!(SweepConfig::parse(&bad, ConfigFormat::Toml).is_err());
        assert!(ConfigFormat::from_path(Path::new("a.yaml")).is_err());
    }

    #[test]
    fn fingerprint_ignores_location() {
        let a = SweepConfig::parse(EXAMPLE, ConfigFormat::Toml).unwrap();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.resume = true;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.master_seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
