//! Monte-Carlo fractional moments `E(|G(x,y;z)|^s)`, profiles over distance
//! and exponential decay fits.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{assemble, sample_potential, DisorderSample, OperatorEnsemble};
use crate::error::{Error, Result};
use crate::lattice::{BondSet, Region, Site};
use crate::matrix::{dense_inverse, Hamiltonian, C64};
use crate::resolvent::{Resolvent, SpectralParameter};
use crate::rng::{site_uniform, Stream};
use crate::stats::{pairwise_sum, summarize, Estimator, Summary};

/// Largest tolerated fraction of failed samples.
pub const MAX_FAILURE_RATE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Sparse,
    /// Dense inversion; a cross-check for small regions.
    Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub failed: usize,
    pub estimator: Estimator,
    pub s: f64,
    pub z: SpectralParameter,
    pub x: Site,
    pub y: Site,
    pub region: u64,
}

/// Evaluates `f` on sample indices `0..n` in parallel, keeping index order.
/// Failed samples are dropped; more than [`MAX_FAILURE_RATE`] of them aborts.
pub fn run_samples<T, F>(n: usize, f: F) -> Result<(Vec<T>, usize)>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let outcomes: Vec<Result<T>> = (0..n as u64).into_par_iter().map(&f).collect();
    let mut ok = Vec::with_capacity(n);
    let mut failed = 0;
    let mut first: Option<String> = None;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                first.get_or_insert_with(|| format!("sample {i}: {e}"));
            }
        }
    }
    if failed as f64 > MAX_FAILURE_RATE * n as f64 {
        return Err(Error::SampleFailures {
            failed,
            total: n,
            detail: first.unwrap_or_default(),
        });
    }
    Ok((ok, failed))
}

/// Row `G(x0, ·; z)` of one Hamiltonian.
pub fn green_row(h: &Hamiltonian, z: SpectralParameter, x0: &Site, solver: Solver) -> Result<Vec<C64>> {
    let i = h.region().require(x0)?;
    match solver {
        Solver::Sparse => Ok(Resolvent::new(h, z)?.row_index(i)?.to_vec()),
        Solver::Dense => {
            let inv = dense_inverse(h, z.z())?;
            Ok((0..h.dim()).map(|j| inv[(i, j)]).collect())
        }
    }
}

/// Column `G(·, y; z)` of one Hamiltonian.
pub fn green_column(h: &Hamiltonian, z: SpectralParameter, y: &Site) -> Result<Vec<C64>> {
    let j = h.region().require(y)?;
    Ok(Resolvent::new(h, z)?.column_index(j)?.to_vec())
}

/// True when `|G|^s` may have infinite variance (`2s ≥ τ`).
pub fn heavy_tailed(ens: &OperatorEnsemble, s: f64) -> bool {
    2.0 * s >= ens.disorder.tau()
}

fn validate_moment_args(region: &Region, sites: &[Site], s: f64, n: usize) -> Result<()> {
    for x in sites {
        region.require(x)?;
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidInput(format!("moment exponent s={s} outside (0, 1)")));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples, got {n}")));
    }
    Ok(())
}

fn estimates_from_rows(
    rows: &[Vec<f64>],
    failed: usize,
    heavy: bool,
    s: f64,
    z: SpectralParameter,
    x0: &Site,
    targets: &[Site],
    region: &Region,
) -> Vec<MomentEstimate> {
    targets
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let sm = summarize(&col, heavy);
            MomentEstimate {
                mean: sm.mean,
                stderr: sm.stderr,
                n: sm.n,
                failed,
                estimator: sm.estimator,
                s,
                z,
                x: *x0,
                y: *y,
                region: region.fingerprint(),
            }
        })
        .collect()
}

/// `E|G(x0, y; z)|^s` for every target, with one factorization and one solve per sample.
pub fn moment_profile_with(
    ens: &OperatorEnsemble,
    region: &Region,
    x0: &Site,
    targets: &[Site],
    z: SpectralParameter,
    s: f64,
    n: usize,
    solver: Solver,
) -> Result<Vec<MomentEstimate>> {
    let mut all = targets.to_vec();
    all.push(*x0);
    validate_moment_args(region, &all, s, n)?;
    let idx: Vec<usize> = targets.iter().map(|t| region.index_of(t).expect("validated")).collect();
    let empty = BondSet::empty();
    let (rows, failed) = run_samples(n, |k| {
        let sample = sample_potential(ens, region, k);
        let h = assemble(ens, &sample, &empty)?;
        let g = green_row(&h, z, x0, solver)?;
        Ok(idx.iter().map(|j| g[*j].norm().powf(s)).collect::<Vec<f64>>())
    })?;
    Ok(estimates_from_rows(&rows, failed, heavy_tailed(ens, s), s, z, x0, targets, region))
}

pub fn moment_profile(
    ens: &OperatorEnsemble,
    region: &Region,
    x0: &Site,
    targets: &[Site],
    z: SpectralParameter,
    s: f64,
    n: usize,
) -> Result<Vec<MomentEstimate>> {
    moment_profile_with(ens, region, x0, targets, z, s, n, Solver::Sparse)
}

/// `E|G(x, y; z)|^s` over samples `0..n` of the ensemble.
pub fn fractional_moment(
    ens: &OperatorEnsemble,
    region: &Region,
    x: &Site,
    y: &Site,
    z: SpectralParameter,
    s: f64,
    n: usize,
) -> Result<MomentEstimate> {
    Ok(moment_profile(ens, region, x, &[*y], z, s, n)?.remove(0))
}

/// Per-sample `Σ_u w_u |G(x0, u; z)|^s`, summarized over samples `0..n`.
pub fn weighted_moment_sum(
    ens: &OperatorEnsemble,
    region: &Region,
    x0: &Site,
    weights: &[(Site, f64)],
    z: SpectralParameter,
    s: f64,
    n: usize,
) -> Result<(Summary, usize)> {
    let mut all: Vec<Site> = weights.iter().map(|w| w.0).collect();
    all.push(*x0);
    validate_moment_args(region, &all, s, n)?;
    let idx: Vec<(usize, f64)> = weights
        .iter()
        .map(|(u, w)| (region.index_of(u).expect("validated"), *w))
        .collect();
    let (vals, failed) = run_samples(n, |k| {
        let sample = sample_potential(ens, region, k);
        let h = assemble(ens, &sample, &BondSet::empty())?;
        let g = green_row(&h, z, x0, Solver::Sparse)?;
        let terms: Vec<f64> = idx.iter().map(|(j, w)| w * g[*j].norm().powf(s)).collect();
        Ok(pairwise_sum(&terms))
    })?;
    Ok((summarize(&vals, heavy_tailed(ens, s)), failed))
}

/// Conditional moment: the environment `env` is frozen and only the potential
/// at `resampled` sites is redrawn, `n` times.
pub fn conditional_moment(
    ens: &OperatorEnsemble,
    region: &Region,
    env: u64,
    resampled: &[Site],
    x: &Site,
    y: &Site,
    z: SpectralParameter,
    s: f64,
    n: usize,
) -> Result<MomentEstimate> {
    let mut all = resampled.to_vec();
    all.extend([*x, *y]);
    validate_moment_args(region, &all, s, n)?;
    let base = sample_potential(ens, region, env);
    let j = region.require(y)?;
    let (rows, failed) = run_samples(n, |k| {
        let mut sample: DisorderSample = base.clone();
        for site in resampled {
            let i = region.require(site)?;
            let u = site_uniform(ens.master_seed, env, site, Stream::Resample, k);
            sample.values[i] = ens.disorder.quantile(u);
        }
        let h = assemble(ens, &sample, &BondSet::empty())?;
        let g = green_row(&h, z, x, Solver::Sparse)?;
        Ok(vec![g[j].norm().powf(s)])
    })?;
    Ok(estimates_from_rows(&rows, failed, heavy_tailed(ens, s), s, z, x, &[*y], region).remove(0))
}

// ---------------------------------------------------------------- profiles by distance

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub distance: u64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShellMode {
    /// One point per target.
    #[default]
    None,
    /// Average over targets at equal ℓ∞ distance from `x`.
    Mean,
    /// Largest mean on each shell.
    Sup,
}

/// Profile points ordered by distance from `x`.
pub fn shell_profile(estimates: &[MomentEstimate], mode: ShellMode) -> Vec<ProfilePoint> {
    let mut pts: Vec<ProfilePoint> = estimates
        .iter()
        .map(|e| ProfilePoint {
            distance: e.x.dist(&e.y),
            mean: e.mean,
            stderr: e.stderr,
            n: e.n,
        })
        .collect();
    pts.sort_by(|a, b| a.distance.cmp(&b.distance));
    if mode == ShellMode::None {
        return pts;
    }
    let mut out: Vec<ProfilePoint> = Vec::new();
    let mut i = 0;
    while i < pts.len() {
        let d = pts[i].distance;
        let shell: Vec<ProfilePoint> = pts[i..].iter().take_while(|p| p.distance == d).copied().collect();
        i += shell.len();
        let k = shell.len() as f64;
        let n = shell.iter().map(|p| p.n).min().unwrap_or(0);
        out.push(match mode {
            ShellMode::Mean => ProfilePoint {
                distance: d,
                mean: shell.iter().map(|p| p.mean).sum::<f64>() / k,
                // entries on a shell share samples; the plain average of their
                // errors is an upper bound for the pooled error
                stderr: shell.iter().map(|p| p.stderr).sum::<f64>() / k,
                n,
            },
            _ => *shell
                .iter()
                .max_by(|a, b| a.mean.total_cmp(&b.mean))
                .expect("nonempty shell"),
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    #[serde(rename = "A")]
    pub a: f64,
    pub mu: f64,
    pub r_squared: f64,
    pub window: (u64, u64),
}

impl DecayFit {
    pub fn predict(&self, d: u64) -> f64 {
        self.a * (-self.mu * d as f64).exp()
    }
}

/// Weighted least squares of `ln mean` against distance, weights `(stderr/mean)^{-2}`.
/// Points with zero error get unit weight when all errors vanish.
pub fn decay_fit(points: &[ProfilePoint], window: (u64, u64)) -> Result<DecayFit> {
    let sel: Vec<&ProfilePoint> = points
        .iter()
        .filter(|p| p.distance >= window.0 && p.distance <= window.1)
        .collect();
    for p in &sel {
        if !(p.mean > 0.0) {
            return Err(Error::InvalidInput(format!(
                "nonpositive mean {} at distance {}",
                p.mean, p.distance
            )));
        }
    }
    let mut distinct: Vec<u64> = sel.iter().map(|p| p.distance).collect();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "decay fit needs 3 distinct distances in [{}, {}], found {}",
            window.0,
            window.1,
            distinct.len()
        )));
    }
    let rel: Vec<f64> = sel.iter().map(|p| p.stderr / p.mean).collect();
    let weighted = rel.iter().all(|r| *r > 0.0);
    let w: Vec<f64> = rel.iter().map(|r| if weighted { r.powi(-2) } else { 1.0 }).collect();
    let xs: Vec<f64> = sel.iter().map(|p| p.distance as f64).collect();
    let ys: Vec<f64> = sel.iter().map(|p| p.mean.ln()).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..xs.len() {
        let (dx, dy) = (xs[i] - xm, ys[i] - ym);
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = (0..xs.len())
        .map(|i| w[i] * (ys[i] - intercept - slope * xs[i]).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit {
        a: intercept.exp(),
        mu: -slope,
        r_squared,
        window,
    })
}

/// CSV with columns `distance,mean,stderr,n`.
pub fn write_profile_csv(path: &Path, points: &[ProfilePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    crate::io::write_atomic(path, &bytes)
}

pub fn read_profile_csv(path: &Path) -> Result<Vec<ProfilePoint>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
