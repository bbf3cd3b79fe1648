//! Single-site disorder laws ρ(dV).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate_singular, QuadResult, Singularity, Tolerance};

/// The shape of the single-site distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisorderLaw {
    Uniform { a: f64, b: f64 },
    /// Density given at knots `[x, ρ(x)]`, linear in between, zero outside.
    /// Normalized on construction.
    PiecewiseLinear { knots: Vec<[f64; 2]> },
    Cauchy { scale: f64 },
}

/// A validated disorder distribution together with its declared R1(τ) exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DisorderSpec", into = "DisorderSpec")]
pub struct Disorder {
    law: DisorderLaw,
    tau: f64,
    // piecewise-linear cache: cumulative mass at each knot
    cumulative: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DisorderSpec {
    #[serde(flatten)]
    pub law: DisorderLaw,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1.0
}

impl TryFrom<DisorderSpec> for Disorder {
    type Error = Error;
    fn try_from(s: DisorderSpec) -> Result<Self> {
        Disorder::with_tau(s.law, s.tau)
    }
}

impl From<Disorder> for DisorderSpec {
    fn from(d: Disorder) -> Self {
        DisorderSpec { law: d.law, tau: d.tau }
    }
}

impl Disorder {
    /// All supported laws have a bounded density, hence satisfy R1(1).
    pub fn new(law: DisorderLaw) -> Result<Self> {
        Self::with_tau(law, 1.0)
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Self::new(DisorderLaw::Uniform { a, b })
    }

    pub fn with_tau(law: DisorderLaw, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidInput(format!("declared tau {tau} outside (0, 1]")));
        }
        let mut cumulative = Vec::new();
        let law = match law {
            DisorderLaw::Uniform { a, b } => {
                if !(a < b) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidInput(format!("uniform law needs a < b, got ({a}, {b})")));
                }
                DisorderLaw::Uniform { a, b }
            }
            DisorderLaw::Cauchy { scale } => {
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::InvalidInput(format!("cauchy scale must be positive, got {scale}")));
                }
                DisorderLaw::Cauchy { scale }
            }
            DisorderLaw::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return Err(Error::InvalidInput("piecewise-linear law needs at least 2 knots".into()));
                }
                if knots.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                    return Err(Error::InvalidInput("knot abscissae must increase strictly".into()));
                }
                if knots.iter().any(|k| !(k[1] >= 0.0) || !k[0].is_finite() || !k[1].is_finite()) {
                    return Err(Error::InvalidInput("knot densities must be finite and nonnegative".into()));
                }
                let mass: f64 = knots
                    .windows(2)
                    .map(|w| 0.5 * (w[0][1] + w[1][1]) * (w[1][0] - w[0][0]))
                    .sum();
                if !(mass > 0.0) {
                    return Err(Error::InvalidInput("piecewise-linear density has zero mass".into()));
                }
                let knots: Vec<[f64; 2]> = knots.iter().map(|k| [k[0], k[1] / mass]).collect();
                cumulative.push(0.0);
                let mut acc = 0.0;
                for w in knots.windows(2) {
                    acc += 0.5 * (w[0][1] + w[1][1]) * (w[1][0] - w[0][0]);
                    cumulative.push(acc);
                }
                DisorderLaw::PiecewiseLinear { knots }
            }
        };
        Ok(Self { law, tau, cumulative })
    }

    pub fn law(&self) -> &DisorderLaw {
        &self.law
    }

    /// Declared R1(τ) exponent.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `Some((lo, hi))` for bounded support.
    pub fn support(&self) -> Option<(f64, f64)> {
        match &self.law {
            DisorderLaw::Uniform { a, b } => Some((*a, *b)),
            DisorderLaw::PiecewiseLinear { knots } => Some((knots[0][0], knots[knots.len() - 1][0])),
            DisorderLaw::Cauchy { .. } => None,
        }
    }

    /// Midpoint and half-width of the support; for Cauchy the scale is used.
    pub fn center_and_scale(&self) -> (f64, f64) {
        match self.support() {
            Some((lo, hi)) => (0.5 * (lo + hi), 0.5 * (hi - lo)),
            None => match &self.law {
                DisorderLaw::Cauchy { scale } => (0.0, *scale),
                _ => unreachable!(),
            },
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.support().is_some()
    }

    pub fn density(&self, x: f64) -> f64 {
        match &self.law {
            DisorderLaw::Uniform { a, b } => {
                if x >= *a && x <= *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            DisorderLaw::Cauchy { scale } => {
                let t = x / scale;
                1.0 / (std::f64::consts::PI * scale * (1.0 + t * t))
            }
            DisorderLaw::PiecewiseLinear { knots } => {
                if x < knots[0][0] || x > knots[knots.len() - 1][0] {
                    return 0.0;
                }
                let k = knots.partition_point(|k| k[0] <= x).clamp(1, knots.len() - 1);
                let (x0, d0) = (knots[k - 1][0], knots[k - 1][1]);
                let (x1, d1) = (knots[k][0], knots[k][1]);
                d0 + (d1 - d0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Uniform upper bound on the density.
    pub fn density_max(&self) -> f64 {
        match &self.law {
            DisorderLaw::Uniform { a, b } => 1.0 / (b - a),
            DisorderLaw::Cauchy { scale } => 1.0 / (std::f64::consts::PI * scale),
            DisorderLaw::PiecewiseLinear { knots } => knots.iter().map(|k| k[1]).fold(0.0, f64::max),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.law {
            DisorderLaw::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            DisorderLaw::Cauchy { scale } => 0.5 + (x / scale).atan() / std::f64::consts::PI,
            DisorderLaw::PiecewiseLinear { knots } => {
                if x <= knots[0][0] {
                    return 0.0;
                }
                if x >= knots[knots.len() - 1][0] {
                    return 1.0;
                }
                let k = knots.partition_point(|k| k[0] <= x).clamp(1, knots.len() - 1);
                let (x0, d0) = (knots[k - 1][0], knots[k - 1][1]);
                let (x1, d1) = (knots[k][0], knots[k][1]);
                let t = x - x0;
                let slope = (d1 - d0) / (x1 - x0);
                self.cumulative[k - 1] + d0 * t + 0.5 * slope * t * t
            }
        }
    }

    /// ρ((lo, hi)).
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        // integrate directly so short intervals keep full relative precision
        match &self.law {
            DisorderLaw::Uniform { a, b } => ((hi.min(*b) - lo.max(*a)) / (b - a)).max(0.0),
            DisorderLaw::Cauchy { scale } => {
                let (l, h) = (lo / scale, hi / scale);
                let prod = 1.0 + l * h;
                let d = if prod > 0.0 {
                    ((h - l) / prod).atan()
                } else {
                    h.atan() - l.atan()
                };
                (d / std::f64::consts::PI).max(0.0)
            }
            DisorderLaw::PiecewiseLinear { knots } => {
                let mut acc = 0.0;
                for w in knots.windows(2) {
                    let (x0, x1) = (w[0][0], w[1][0]);
                    let (l, h) = (lo.max(x0), hi.min(x1));
                    if h <= l {
                        continue;
                    }
                    let f = |x: f64| w[0][1] + (w[1][1] - w[0][1]) * (x - x0) / (x1 - x0);
                    acc += 0.5 * (f(l) + f(h)) * (h - l);
                }
                acc
            }
        }
    }

    /// Inverse CDF on (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.law {
            DisorderLaw::Uniform { a, b } => a + (b - a) * u,
            DisorderLaw::Cauchy { scale } => scale * (std::f64::consts::PI * (u - 0.5)).tan(),
            DisorderLaw::PiecewiseLinear { knots } => {
                let n = knots.len();
                let k = self.cumulative.partition_point(|c| *c <= u).clamp(1, n - 1);
                let (x0, d0) = (knots[k - 1][0], knots[k - 1][1]);
                let (x1, d1) = (knots[k][0], knots[k][1]);
                let m = (u - self.cumulative[k - 1]).max(0.0);
                let slope = (d1 - d0) / (x1 - x0);
                let disc = (d0 * d0 + 2.0 * slope * m).max(0.0);
                let denom = d0 + disc.sqrt();
                let t = if denom > 0.0 { 2.0 * m / denom } else { 0.0 };
                (x0 + t).clamp(x0, x1)
            }
        }
    }

    /// Knots where the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.law {
            DisorderLaw::Uniform { a, b } => vec![*a, *b],
            DisorderLaw::PiecewiseLinear { knots } => knots.iter().map(|k| k[0]).collect(),
            DisorderLaw::Cauchy { .. } => vec![],
        }
    }

    /// `∫ f(V) ρ(dV)` where `f` may carry algebraic singularities at the given
    /// real points.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, singular: &[Singularity], tol: Tolerance) -> Result<QuadResult> {
        match self.support() {
            Some((lo, hi)) => {
                let mut pts: Vec<Singularity> = singular.to_vec();
                pts.extend(self.breakpoints().into_iter().map(Singularity::breakpoint));
                integrate_singular(|v| f(v) * self.density(v), lo, hi, &pts, tol)
            }
            None => {
                // quantile route: ∫_0^1 f(Q(u)) du; singular points move to F(p)
                let pts: Vec<Singularity> = singular
                    .iter()
                    .map(|p| Singularity {
                        at: self.cdf(p.at),
                        alpha: p.alpha,
                    })
                    .collect();
                integrate_singular(|u| f(self.quantile(u)), 0.0, 1.0, &pts, tol)
            }
        }
    }

    /// `φ_s(p) = ∫ |V - p|^{-s} ρ(dV)` for complex `p`.
    pub fn inverse_moment(&self, p: Complex64, s: f64, tol: Tolerance) -> Result<f64> {
        if let (DisorderLaw::Uniform { a, b }, true) = (&self.law, p.im == 0.0) {
            return Ok(uniform_inverse_moment(*a, *b, p.re, s));
        }
        let sing = if p.im == 0.0 {
            Singularity::power(p.re, s)
        } else {
            Singularity::breakpoint(p.re)
        };
        Ok(self.expect(|v| (Complex64::new(v, 0.0) - p).norm().powf(-s), &[sing], tol)?.value)
    }

    pub fn mean(&self) -> Option<f64> {
        match &self.law {
            DisorderLaw::Uniform { a, b } => Some(0.5 * (a + b)),
            DisorderLaw::Cauchy { .. } => None,
            DisorderLaw::PiecewiseLinear { .. } => self.expect(|v| v, &[], Tolerance::default()).ok().map(|r| r.value),
        }
    }

    /// Stable text key used by the constants cache.
    pub fn fingerprint(&self) -> String {
        match &self.law {
            DisorderLaw::Uniform { a, b } => format!("uniform({a:e},{b:e});tau={:e}", self.tau),
            DisorderLaw::Cauchy { scale } => format!("cauchy({scale:e});tau={:e}", self.tau),
            DisorderLaw::PiecewiseLinear { knots } => {
                let k: Vec<String> = knots.iter().map(|k| format!("{:e}:{:e}", k[0], k[1])).collect();
                format!("pwl[{}];tau={:e}", k.join(","), self.tau)
            }
        }
    }
}

/// Closed form of `∫_a^b |v - p|^{-s} dv / (b - a)` for real `p`.
pub fn uniform_inverse_moment(a: f64, b: f64, p: f64, s: f64) -> f64 {
    let e = 1.0 - s;
    let val = if p <= a {
        ((b - p).powf(e) - (a - p).powf(e)) / e
    } else if p >= b {
        ((p - a).powf(e) - (p - b).powf(e)) / e
    } else {
        ((p - a).powf(e) + (b - p).powf(e)) / e
    };
    val / (b - a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_basics() {
        let d = Disorder::uniform(-1.0, 1.0).unwrap();
        assert_eq!(d.density(0.3), 0.5);
        assert_eq!(d.cdf(0.0), 0.5);
        assert_eq!(d.quantile(0.75), 0.5);
        assert!((d.mass(-0.1, 0.1) - 0.1).abs() < 1e-15);
        assert!(Disorder::uniform(1.0, 1.0).is_err());
    }

    #[test]
    fn piecewise_linear_is_normalized_and_invertible() {
        let d = Disorder::new(DisorderLaw::PiecewiseLinear {
            knots: vec![[-1.0, 0.0], [0.0, 2.0], [1.0, 0.0]],
        })
        .unwrap();
        assert!((d.cdf(1.0) - 1.0).abs() < 1e-15);
        assert!((d.density(0.0) - 1.0).abs() < 1e-15);
        assert!((d.cdf(0.0) - 0.5).abs() < 1e-15);
        for u in [0.01, 0.2, 0.5, 0.77, 0.99] {
            assert!((d.cdf(d.quantile(u)) - u).abs() < 1e-12);
        }
        let total = d.expect(|_| 1.0, &[], Tolerance::default()).unwrap().value;
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cauchy_quantile_roundtrip() {
        let d = Disorder::new(DisorderLaw::Cauchy { scale: 0.5 }).unwrap();
        for u in [0.05, 0.5, 0.9] {
            assert!((d.cdf(d.quantile(u)) - u).abs() < 1e-12);
        }
        let total = d.expect(|_| 1.0, &[], Tolerance::default()).unwrap().value;
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn inverse_moment_matches_closed_form() {
        let d = Disorder::uniform(-1.0, 1.0).unwrap();
        assert!((uniform_inverse_moment(-1.0, 1.0, 0.0, 0.5) - 2.0).abs() < 1e-14);
        // the quadrature path against the closed form, via a law the fast path skips
        let pwl = Disorder::new(DisorderLaw::PiecewiseLinear {
            knots: vec![[-1.0, 1.0], [1.0, 1.0]],
        })
        .unwrap();
        for p in [-1.5, -0.3, 0.0, 0.7, 2.0] {
            let q = pwl.inverse_moment(Complex64::new(p, 0.0), 0.5, Tolerance::relative(1e-10)).unwrap();
            let c = d.inverse_moment(Complex64::new(p, 0.0), 0.5, Tolerance::relative(1e-10)).unwrap();
            assert!((q - c).abs() < 1e-8, "p={p}: {q} vs {c}");
        }
    }

    #[test]
    fn spec_roundtrip() {
        let d = Disorder::uniform(-2.0, 2.0).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        let back: Disorder = serde_json::from_str(&s).unwrap();
        assert_eq!(d, back);
        let bad: std::result::Result<Disorder, _> = serde_json::from_str(r#"{"kind":"uniform","a":1,"b":0}"#);
        assert!(bad.is_err());
    }
}
