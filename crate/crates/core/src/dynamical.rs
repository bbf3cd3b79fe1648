//! Spectral measures of finite-volume operators by dense diagonalization,
//! their total variation on energy windows, and time-evolution kernels.

use std::f64::consts::PI;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::criteria::DENSE_EIGEN_LIMIT;
use crate::ensemble::{assemble, sample_potential, OperatorEnsemble};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::lattice::{BondSet, Region, Site};
use crate::matrix::{Hamiltonian, C64};
use crate::moments::{run_samples, ProfilePoint};
use crate::quad::{integrate, Tolerance};
use crate::stats::summarize;

/// Eigenvalues closer than this are treated as one degenerate level.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in eigenvalue order.
    pub eigenvectors: DMatrix<C64>,
    /// Index ranges of degenerate levels.
    pub groups: Vec<Range<usize>>,
}

impl SpectralDecomposition {
    pub fn new(h: &Hamiltonian) -> Result<Self> {
        let n = h.dim();
        if n > DENSE_EIGEN_LIMIT {
            return Err(Error::InvalidInput(format!(
                "region has {n} sites, dense eigensolves are limited to {DENSE_EIGEN_LIMIT}"
            )));
        }
        if !h.is_hermitian() {
            return Err(Error::Eigen("operator is not hermitian".into()));
        }
        let eig = SymmetricEigen::new(h.to_dense());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        if eigenvalues.iter().any(|e| !e.is_finite()) {
            return Err(Error::Eigen("non-finite eigenvalue".into()));
        }
        let eigenvectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);

        let scale = h.norm_inf_shifted(C64::new(0.0, 0.0)).max(1.0);
        for (k, e) in eigenvalues.iter().enumerate() {
            let v: Vec<C64> = eigenvectors.column(k).iter().copied().collect();
            let r = h.apply_shifted(&v, C64::new(*e, 0.0));
            let res = r.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if res > 1e-9 * scale {
                return Err(Error::Eigen(format!("eigenpair {k} residual {res:.3e}")));
            }
        }
        let gram = eigenvectors.adjoint() * &eigenvectors;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - target).norm() > 1e-10 {
                    return Err(Error::Eigen(format!("eigenvectors not orthonormal at ({i}, {j})")));
                }
            }
        }

        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=n {
            if k == n || eigenvalues[k] - eigenvalues[k - 1] > DEGENERACY_TOL {
                groups.push(start..k);
                start = k;
            }
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
            groups,
        })
    }

    /// Energy of a degenerate level (mean of its eigenvalues).
    pub fn level_energy(&self, g: &Range<usize>) -> f64 {
        self.eigenvalues[g.clone()].iter().sum::<f64>() / g.len() as f64
    }

    /// `<x|P_k|y>` for one level.
    pub fn projector_element(&self, g: &Range<usize>, x: usize, y: usize) -> C64 {
        g.clone()
            .map(|j| self.eigenvectors[(x, j)] * self.eigenvectors[(y, j)].conj())
            .sum()
    }

    /// `(E_k, <x|P_k|y>)` for the levels inside `window`.
    pub fn weights(&self, x: usize, y: usize, window: &EnergyWindow) -> Vec<(f64, C64)> {
        self.groups
            .iter()
            .filter_map(|g| {
                let e = self.level_energy(g);
                window.contains(e).then(|| (e, self.projector_element(g, x, y)))
            })
            .collect()
    }

    /// `|μ^{x,y}|(F)`.
    pub fn total_variation(&self, x: usize, y: usize, window: &EnergyWindow) -> f64 {
        self.weights(x, y, window).iter().map(|(_, w)| w.norm()).sum()
    }

    /// `<x| P_F e^{itH} |y>`.
    pub fn kernel(&self, x: usize, y: usize, window: &EnergyWindow, t: f64) -> C64 {
        self.weights(x, y, window)
            .iter()
            .map(|(e, w)| C64::from_polar(1.0, t * e) * w)
            .sum()
    }

    /// `Σ_k |<x|P_k|y>|² / <x|P_k|x>` over levels in `window` where `<x|P_k|x> > 0`.
    pub fn normalized_l2(&self, x: usize, y: usize, window: &EnergyWindow) -> f64 {
        self.groups
            .iter()
            .filter(|g| window.contains(self.level_energy(g)))
            .filter_map(|g| {
                let xx = self.projector_element(g, x, x).re;
                (xx > 1e-300).then(|| self.projector_element(g, x, y).norm_sqr() / xx)
            })
            .sum()
    }
}

/// Finite union of closed, disjoint, sorted intervals; endpoints may be infinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct EnergyWindow {
    intervals: Vec<(f64, f64)>,
}

impl EnergyWindow {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.iter().any(|(a, b)| a.is_nan() || b.is_nan() || a > b) {
            return Err(Error::InvalidInput("window intervals need lo <= hi".into()));
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        if intervals.windows(2).any(|w| w[1].0 <= w[0].1) {
            return Err(Error::InvalidInput("window intervals overlap".into()));
        }
        Ok(Self { intervals })
    }

    pub fn all() -> Self {
        Self {
            intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)],
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, e: f64) -> bool {
        self.intervals.iter().any(|(a, b)| *a <= e && e <= *b)
    }
}

impl TryFrom<Vec<(f64, f64)>> for EnergyWindow {
    type Error = Error;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EnergyWindow> for Vec<(f64, f64)> {
    fn from(w: EnergyWindow) -> Self {
        w.intervals
    }
}

pub fn spectral_tv(h: &Hamiltonian, x: &Site, y: &Site, window: &EnergyWindow) -> Result<f64> {
    let (i, j) = (h.region().require(x)?, h.region().require(y)?);
    Ok(SpectralDecomposition::new(h)?.total_variation(i, j, window))
}

pub fn evolution_kernel(h: &Hamiltonian, x: &Site, y: &Site, window: &EnergyWindow, t: f64) -> Result<C64> {
    let (i, j) = (h.region().require(x)?, h.region().require(y)?);
    Ok(SpectralDecomposition::new(h)?.kernel(i, j, window, t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynPoint {
    pub target: Site,
    pub distance: u64,
    pub mean_gridmax: f64,
    pub stderr_gridmax: f64,
    pub mean_tv: f64,
    pub stderr_tv: f64,
    pub n: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynProfile {
    pub points: Vec<DynPoint>,
    /// `(sample, target, t)` triples where the grid value exceeded the total variation.
    pub violations: usize,
    /// Number of `(sample, target, t)` triples compared.
    pub comparisons: usize,
}

/// `E(max_t |<x0|P_F e^{itH}|y>|)` and `E|μ^{x0,y}|(F)` per target over samples `0..n`.
/// The grid max is a lower bound on the true sup over `t`.
pub fn dyn_profile(
    ens: &OperatorEnsemble,
    region: &Region,
    x0: &Site,
    targets: &[Site],
    window: &EnergyWindow,
    t_grid: &[f64],
    n: usize,
) -> Result<DynProfile> {
    let i0 = region.require(x0)?;
    let idx: Vec<usize> = targets.iter().map(|t| region.require(t)).collect::<Result<_>>()?;
    if t_grid.is_empty() || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("time grid must be finite and nonempty".into()));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples, got {n}")));
    }
    let empty = BondSet::empty();
    let (rows, failed) = run_samples(n, |k| {
        let sample = sample_potential(ens, region, k);
        let h = assemble(ens, &sample, &empty)?;
        let dec = SpectralDecomposition::new(&h)?;
        Ok(idx
            .iter()
            .map(|&j| {
                let w = dec.weights(i0, j, window);
                let tv: f64 = w.iter().map(|(_, c)| c.norm()).sum();
                // summation rounding: both sides carry at most ~len·ε relative error
                let slack = tv * 4.0 * (w.len() + 1) as f64 * f64::EPSILON;
                let mut gridmax = 0.0f64;
                let mut bad = 0usize;
                for t in t_grid {
                    let a = w.iter().map(|(e, c)| C64::from_polar(1.0, t * e) * c).sum::<C64>().norm();
                    if a > tv + slack {
                        bad += 1;
                    }
                    gridmax = gridmax.max(a);
                }
                (gridmax, tv, bad)
            })
            .collect::<Vec<_>>())
    })?;
    let mut points = Vec::with_capacity(targets.len());
    let mut violations = 0;
    for (k, y) in targets.iter().enumerate() {
        let gm: Vec<f64> = rows.iter().map(|r| r[k].0).collect();
        let tv: Vec<f64> = rows.iter().map(|r| r[k].1).collect();
        violations += rows.iter().map(|r| r[k].2).sum::<usize>();
        let (a, b) = (summarize(&gm, false), summarize(&tv, false));
        points.push(DynPoint {
            target: *y,
            distance: x0.dist(y),
            mean_gridmax: a.mean,
            stderr_gridmax: a.stderr,
            mean_tv: b.mean,
            stderr_tv: b.stderr,
            n: a.n,
            failed,
        });
    }
    Ok(DynProfile {
        points,
        violations,
        comparisons: rows.len() * targets.len() * t_grid.len(),
    })
}

impl DynProfile {
    /// `E(tv)` per distance, taking the largest mean among targets at equal distance.
    pub fn tv_profile(&self) -> Vec<ProfilePoint> {
        let mut out: Vec<ProfilePoint> = Vec::new();
        let mut pts: Vec<&DynPoint> = self.points.iter().collect();
        pts.sort_by_key(|p| p.distance);
        for p in pts {
            match out.last_mut() {
                Some(last) if last.distance == p.distance => {
                    if p.mean_tv > last.mean {
                        last.mean = p.mean_tv;
                        last.stderr = p.stderr_tv;
                    }
                }
                _ => out.push(ProfilePoint {
                    distance: p.distance,
                    mean: p.mean_tv,
                    stderr: p.stderr_tv,
                    n: p.n,
                }),
            }
        }
        out
    }
}

pub fn write_dyn_csv(path: &Path, profile: &DynProfile) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["distance", "mean_gridmax", "stderr_gridmax", "mean_tv", "stderr_tv", "n"])?;
    for p in &profile.points {
        w.write_record(&[
            p.distance.to_string(),
            format!("{:e}", p.mean_gridmax),
            format!("{:e}", p.stderr_gridmax),
            format!("{:e}", p.mean_tv),
            format!("{:e}", p.stderr_tv),
            p.n.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Exponents and constant in `E|μ^{x,y}|(F) ≤ C [sup_F E|G(x,y;E)|^s]^r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteVolumeConstants {
    /// Fixed by `α/s + α/δ = 1`.
    pub alpha: f64,
    pub p: f64,
    pub p_prime: f64,
    pub q: f64,
    pub q_prime: f64,
    /// `∫ (1+E²)^{-q'/2p} dE`, or `|F|` for the bounded-window form.
    pub weight_integral: f64,
    pub c: f64,
    pub r: f64,
}

fn alpha_of(s: f64, delta: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0 && delta > 0.0) {
        return Err(Error::InvalidInput(format!("need s in (0,1) and delta > 0, got {s}, {delta}")));
    }
    Ok(s * delta / (s + delta))
}

/// Form for a window of finite Lebesgue measure: `C = ([2 E|v|^δ]^{α/δ} (κ|F|)^{α/s})^{1/(2-α)}`,
/// `r = α / (s (2-α))`.
pub fn finite_window_constants(s: f64, delta: f64, kappa: f64, v_moment: f64, measure: f64) -> Result<FiniteVolumeConstants> {
    let alpha = alpha_of(s, delta)?;
    if !(measure > 0.0 && measure.is_finite()) {
        return Err(Error::InvalidInput(format!("window measure must be finite and positive, got {measure}")));
    }
    let e = 1.0 / (2.0 - alpha);
    let c = ((2.0 * v_moment).powf(alpha / delta) * (kappa * measure).powf(alpha / s)).powf(e);
    Ok(FiniteVolumeConstants {
        alpha,
        p: f64::INFINITY,
        p_prime: 1.0,
        q: f64::INFINITY,
        q_prime: 1.0,
        weight_integral: measure,
        c,
        r: alpha / s * e,
    })
}

/// Form for arbitrary windows, weighted by `g(E)^{2p} = 1 + E²`.
/// Needs `1/δ < p < 1 + 1/δ` so that `q'/p > 1`. `b_norm` bounds the
/// off-diagonal contribution `B` to `<x|1+H²|x>`.
pub fn finite_volume_constants(
    s: f64,
    delta: f64,
    kappa: f64,
    v_moment: f64,
    b_norm: f64,
    p: f64,
) -> Result<FiniteVolumeConstants> {
    let alpha = alpha_of(s, delta)?;
    if !(p > 1.0 / delta && p > 1.0 && p - 1.0 / delta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "need max(1, 1/delta) < p < 1 + 1/delta, got p = {p}, delta = {delta}"
        )));
    }
    let q = delta * p;
    let q_prime = p / (p - 1.0 / delta);
    let p_prime = p / (p - 1.0);
    // E = tan θ maps the weight integral to ∫ cos^{2k-2} θ dθ over (-π/2, π/2)
    let k = q_prime / (2.0 * p);
    let weight_integral = integrate(|th: f64| th.cos().powf(2.0 * k - 2.0), -0.5 * PI, 0.5 * PI, Tolerance::relative(1e-10))?.value;
    let first = (b_norm.powf(delta / 2.0) + v_moment).powf(1.0 / q);
    let second = ((2.0 * v_moment).powf(alpha / delta) * (kappa * weight_integral).powf(alpha / s))
        .powf(1.0 / ((2.0 - alpha) * q_prime));
    Ok(FiniteVolumeConstants {
        alpha,
        p,
        p_prime,
        q,
        q_prime,
        weight_integral,
        c: first * second,
        r: alpha / (s * (2.0 - alpha) * q_prime),
    })
}
