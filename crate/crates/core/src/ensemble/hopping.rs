//! Deterministic hopping kernels, optionally with a uniform magnetic flux.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{cut_set, Offset, Region, Site, Support};

/// Relative size of the discarded tail allowed when truncating a tempered kernel.
pub const TRUNCATION_TOL: f64 = 1e-12;
const MAX_RANGE: u64 = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoppingKind {
    NearestNeighbor,
    /// `τ(v) = t0 e^{-m‖v‖}` for `0 < ‖v‖ ≤ range`.
    Tempered { t0: f64, m: f64, range: u64 },
    /// No hopping at all (`T = 0`).
    None,
}

/// Gauge used for the Peierls phases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    #[default]
    Landau,
    Symmetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoppingKernel {
    pub kind: HoppingKind,
    /// Flux per plaquette in radians (d = 2 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peierls_flux: Option<f64>,
    #[serde(default)]
    pub gauge: Gauge,
}

impl HoppingKernel {
    pub fn nearest_neighbor() -> Self {
        Self {
            kind: HoppingKind::NearestNeighbor,
            peierls_flux: None,
            gauge: Gauge::Landau,
        }
    }

    pub fn none() -> Self {
        Self {
            kind: HoppingKind::None,
            peierls_flux: None,
            gauge: Gauge::Landau,
        }
    }

    pub fn tempered(t0: f64, m: f64, range: u64) -> Self {
        Self {
            kind: HoppingKind::Tempered { t0, m, range },
            peierls_flux: None,
            gauge: Gauge::Landau,
        }
    }

    /// A tempered kernel truncated at the smallest range whose discarded tail of
    /// `Σ τ(v)^s` is below [`TRUNCATION_TOL`] of the retained sum.
    /// Returns the kernel and the relative truncation error.
    pub fn tempered_auto(dim: usize, t0: f64, m: f64, s: f64) -> Result<(Self, f64)> {
        if !(m > 0.0) || !(t0 > 0.0) || !(s > 0.0) {
            return Err(Error::InvalidInput(format!("tempered kernel needs t0, m, s > 0 (got {t0}, {m}, {s})")));
        }
        let total = tempered_series(dim, t0, m, s, 0.0).expect("m' = 0 < s m");
        let mut kept = 0.0;
        for r in 1..=MAX_RANGE {
            kept += shell_count(dim, r) * (t0 * (-m * r as f64).exp()).powf(s);
            let tail = (total - kept).max(0.0);
            if tail < TRUNCATION_TOL * kept {
                return Ok((Self::tempered(t0, m, r), tail / kept));
            }
        }
        Err(Error::InvalidInput(format!(
            "tempered kernel with m={m}, s={s} needs range beyond {MAX_RANGE}"
        )))
    }

    pub fn with_flux(mut self, flux: f64, gauge: Gauge) -> Self {
        self.peierls_flux = Some(flux);
        self.gauge = gauge;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let Some(phi) = self.peierls_flux {
            if dim != 2 {
                return Err(Error::InvalidInput(format!("Peierls flux needs d = 2, got d = {dim}")));
            }
            if !phi.is_finite() {
                return Err(Error::InvalidInput("flux must be finite".into()));
            }
        }
        if let HoppingKind::Tempered { t0, m, range } = self.kind {
            if !(t0 > 0.0 && m > 0.0 && range >= 1) || !t0.is_finite() || !m.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "tempered kernel needs t0 > 0, m > 0, range >= 1 (got {t0}, {m}, {range})"
                )));
            }
        }
        Ok(())
    }

    /// Offsets carrying nonzero hopping.
    pub fn support(&self, dim: usize) -> Support {
        match self.kind {
            HoppingKind::NearestNeighbor => Support::nearest_neighbor(dim),
            HoppingKind::Tempered { range, .. } => Support::cube(dim, range),
            HoppingKind::None => Support::empty(dim),
        }
    }

    /// `τ(v) = |T_{x, x+v}|`.
    pub fn amplitude(&self, v: &Offset) -> f64 {
        let n = v.norm();
        match self.kind {
            HoppingKind::NearestNeighbor => {
                if n == 1 && v.coords().iter().filter(|c| **c != 0).count() == 1 {
                    1.0
                } else {
                    0.0
                }
            }
            HoppingKind::Tempered { t0, m, range } => {
                if n >= 1 && n <= range {
                    t0 * (-m * n as f64).exp()
                } else {
                    0.0
                }
            }
            HoppingKind::None => 0.0,
        }
    }

    /// Peierls phase `A_{x,y}`, antisymmetric in `(x, y)`.
    pub fn phase(&self, x: &Site, y: &Site) -> f64 {
        let Some(phi) = self.peierls_flux else {
            return 0.0;
        };
        let (x0, x1) = (x.coord(0) as f64, x.coord(1) as f64);
        let (y0, y1) = (y.coord(0) as f64, y.coord(1) as f64);
        match self.gauge {
            Gauge::Landau => phi * 0.5 * (x0 + y0) * (y1 - x1),
            Gauge::Symmetric => 0.5 * phi * (x0 * y1 - x1 * y0),
        }
    }

    /// `<x|T|y>`.
    pub fn element(&self, x: &Site, y: &Site) -> Complex64 {
        let tau = self.amplitude(&x.to(y));
        if tau == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if self.peierls_flux.is_none() {
            return Complex64::new(tau, 0.0);
        }
        Complex64::from_polar(tau, self.phase(x, y))
    }

    /// `Ξ_s(Λ) = Σ_{<u,u'> ∈ Γ(Λ)} τ(u - u')^s`.
    pub fn xi_s(&self, region: &Region, s: f64) -> f64 {
        let support = self.support(region.dim());
        let mut terms: Vec<f64> = cut_set(region, &support)
            .iter()
            .map(|b| self.amplitude(&b.from.to(&b.to)).powf(s))
            .collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    }

    /// `Σ_v τ(v)^s` over the retained support.
    pub fn moment_sum(&self, dim: usize, s: f64) -> f64 {
        self.support(dim).offsets().iter().map(|v| self.amplitude(v).powf(s)).sum()
    }

    pub fn fingerprint(&self) -> String {
        let base = match self.kind {
            HoppingKind::NearestNeighbor => "nn".to_string(),
            HoppingKind::Tempered { t0, m, range } => format!("tempered({t0:e},{m:e},{range})"),
            HoppingKind::None => "none".to_string(),
        };
        match self.peierls_flux {
            Some(phi) => format!("{base};flux={phi:e};{:?}", self.gauge),
            None => base,
        }
    }
}

/// Number of sites with `‖v‖∞ = r` in dimension `dim`.
pub fn shell_count(dim: usize, r: u64) -> f64 {
    if r == 0 {
        return 1.0;
    }
    let d = dim as i32;
    let r = r as f64;
    (2.0 * r + 1.0).powi(d) - (2.0 * r - 1.0).powi(d)
}

/// `Σ_{v ≠ 0} τ(v)^s e^{m'‖v‖}` for the untruncated kernel `t0 e^{-m‖v‖}`;
/// `None` when the series diverges (`m' ≥ s m`).
pub fn tempered_series(dim: usize, t0: f64, m: f64, s: f64, m_prime: f64) -> Option<f64> {
    let rate = s * m - m_prime;
    if !(rate > 0.0) {
        return None;
    }
    let q = (-rate).exp();
    let mut sum = 0.0;
    let mut r = 1u64;
    loop {
        let term = shell_count(dim, r) * q.powi(r as i32);
        sum += term;
        if term < 1e-18 * sum || r > 100_000 {
            break;
        }
        r += 1;
    }
    Some(t0.powf(s) * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::box_region;

    #[test]
    fn nn_amplitudes() {
        let k = HoppingKernel::nearest_neighbor();
        assert_eq!(k.amplitude(&Offset::new(&[1, 0]).unwrap()), 1.0);
        assert_eq!(k.amplitude(&Offset::new(&[1, 1]).unwrap()), 0.0);
        assert_eq!(k.amplitude(&Offset::new(&[0, 0]).unwrap()), 0.0);
    }

    #[test]
    fn plaquette_flux_both_gauges() {
        for gauge in [Gauge::Landau, Gauge::Symmetric] {
            for phi in [0.3, 1.7, -2.2] {
                let k = HoppingKernel::nearest_neighbor().with_flux(phi, gauge);
                for base in [(0, 0), (3, -2)] {
                    let p = |a: i64, b: i64| Site::d2(base.0 + a, base.1 + b);
                    let loop_ = [p(0, 0), p(1, 0), p(1, 1), p(0, 1), p(0, 0)];
                    let mut prod = Complex64::new(1.0, 0.0);
                    for w in loop_.windows(2) {
                        prod *= k.element(&w[0], &w[1]);
                    }
                    let want = Complex64::from_polar(1.0, phi);
                    assert!((prod - want).norm() < 1e-12, "{gauge:?} {phi}");
                }
            }
        }
    }

    #[test]
    fn tempered_auto_truncation() {
        let (k, err) = HoppingKernel::tempered_auto(2, 1.0, 2.0, 0.5).unwrap();
        assert!(err < TRUNCATION_TOL);
        let HoppingKind::Tempered { range, .. } = k.kind else { panic!() };
        let total = tempered_series(2, 1.0, 2.0, 0.5, 0.0).unwrap();
        let kept = k.moment_sum(2, 0.5);
        assert!((total - kept) / kept < TRUNCATION_TOL);
        // one shell less would not do
        let shorter = HoppingKernel::tempered(1.0, 2.0, range - 1).moment_sum(2, 0.5);
        assert!((total - shorter) / shorter >= TRUNCATION_TOL);
    }

    #[test]
    fn weighted_series_threshold() {
        assert!(tempered_series(1, 1.0, 1.0, 0.5, 0.49).is_some());
        assert!(tempered_series(1, 1.0, 1.0, 0.5, 0.5).is_none());
        // d=1: 2 Σ q^r = 2q/(1-q)
        let q = (-0.5f64).exp();
        let v = tempered_series(1, 1.0, 1.0, 0.5, 0.0).unwrap();
        assert!((v - 2.0 * q / (1.0 - q)).abs() < 1e-12);
    }

    #[test]
    fn xi_s_nn_is_cut_size() {
        let k = HoppingKernel::nearest_neighbor();
        let r = box_region(2, Site::origin(2), 2).unwrap();
        assert_eq!(k.xi_s(&r, 0.5), 20.0);
    }

    #[test]
    fn flux_rejected_outside_2d() {
        assert!(HoppingKernel::nearest_neighbor().with_flux(0.1, Gauge::Landau).validate(1).is_err());
    }
}
