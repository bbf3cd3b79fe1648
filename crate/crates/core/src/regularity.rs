//! Regularity constants of the single-site law: κ_τ, C_s, D_s and C̃_s,
//! plus the exponent interpolation of decay bounds.
//!
//! `C_s` and `D_s` are suprema with no closed form; they are estimated by
//! multi-start search and are therefore lower bounds of the true values.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{uniform_inverse_moment, Disorder, DisorderLaw};
use crate::error::{Error, Result};
use crate::quad::{Singularity, Tolerance};
use crate::rng::{hash_words, CounterRng};

/// Relative tolerance of the outer integrals in the constant searches.
pub const SEARCH_TOL: f64 = 1e-6;
const INNER_TOL: f64 = 1e-9;
const REFINE_ROUNDS: usize = 10;

// ---------------------------------------------------------------- κ_τ

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub value: f64,
    /// Where the supremum was attained: `(a, ε)`.
    pub witness: (f64, f64),
    pub closed_form: bool,
}

/// `sup_{a, ε} ρ(a-ε, a+ε) / ε^τ`.
pub fn kappa_tau(dist: &Disorder, tau: f64) -> Result<KappaEstimate> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidInput(format!("tau {tau} outside (0, 1]")));
    }
    if let DisorderLaw::Uniform { a, b } = dist.law() {
        let w = b - a;
        return Ok(KappaEstimate {
            value: (2.0 / w).powf(tau),
            witness: (0.5 * (a + b), 0.5 * w),
            closed_form: true,
        });
    }
    let (m, r) = dist.center_and_scale();
    let (lo, hi) = dist.support().unwrap_or((m - 50.0 * r, m + 50.0 * r));
    let ratio = |a: f64, e: f64| dist.mass(a - e, a + e) / e.powf(tau);
    let eps_grid = |e_lo: f64, e_hi: f64, k: usize| -> Vec<f64> {
        (0..=k).map(|i| e_lo * (e_hi / e_lo).powf(i as f64 / k as f64)).collect()
    };
    let mut best = (0.0, (m, r));
    let na = 400;
    let mut e_min = 1e-6 * r;
    let e_floor = 1e-12 * r;
    let e_max = (hi - lo).max(r) * 2.0;
    for i in 0..=na {
        let a = lo + (hi - lo) * i as f64 / na as f64;
        for e in eps_grid(e_min, e_max, 60) {
            let v = ratio(a, e);
            if v > best.0 {
                best = (v, (a, e));
            }
        }
    }
    for b in dist.breakpoints() {
        for e in eps_grid(e_min, e_max, 60) {
            let v = ratio(b, e);
            if v > best.0 {
                best = (v, (b, e));
            }
        }
    }
    // joint pattern search in (a, ln ε); ties along ridges need both to move
    let mut da = 0.25 * (hi - lo);
    let mut de = 1.0f64;
    let mut rounds = 0;
    while (da > 1e-9 * r || de > 1e-9) && rounds < 400 {
        rounds += 1;
        let (a0, e0) = best.1;
        let mut moved = false;
        for i in -10..=10 {
            for j in -10..=10 {
                let a = a0 + da * i as f64 / 10.0;
                let e = (e0 * (de * j as f64 / 10.0).exp()).max(e_floor);
                let v = ratio(a, e);
                if v > best.0 * (1.0 + 1e-12) {
                    best = (v, (a, e));
                    moved = true;
                }
            }
        }
        // sup drifting towards ever smaller ε signals failure of R1(τ)
        if best.1 .1 <= e_min * 1.0001 {
            let shrunk = ratio(best.1 .0, best.1 .1 * 1e-3);
            if shrunk > 2.0 * best.0 {
                return Err(Error::Regularity(format!(
                    "R1({tau}) fails: ratio grows as eps -> 0 near a = {:.6e} (eps = {:.3e}, ratio {:.3e})",
                    best.1 .0,
                    best.1 .1 * 1e-3,
                    shrunk
                )));
            }
            e_min *= 1e-3;
        }
        if !moved {
            da *= 0.5;
            de *= 0.5;
        }
    }
    Ok(KappaEstimate {
        value: best.0,
        witness: best.1,
        closed_form: false,
    })
}

// ---------------------------------------------------------------- φ_s helpers

/// `φ_s(p) = ∫ |V - p|^{-s} ρ(dV)` for real `p`.
pub fn phi_s_real(dist: &Disorder, p: f64, s: f64) -> Result<f64> {
    if p.is_infinite() {
        return Ok(0.0);
    }
    let (m, r) = dist.center_and_scale();
    if let DisorderLaw::Uniform { a, b } = dist.law() {
        let d = p - m;
        if d.abs() > 1e4 * r {
            // two-term expansion avoids cancellation far outside the support
            let var = (b - a) * (b - a) / 12.0;
            return Ok(d.abs().powf(-s) * (1.0 + 0.5 * s * (s + 1.0) * var / (d * d)));
        }
        return Ok(uniform_inverse_moment(*a, *b, p, s));
    }
    dist.inverse_moment(Complex64::new(p, 0.0), s, Tolerance::relative(INNER_TOL))
}

// ---------------------------------------------------------------- C_s

/// A 2×2 self-adjoint matrix `[[a, β], [β̄, c]]`; only `|β|` matters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoByTwo {
    pub a: f64,
    pub c: f64,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entry {
    Diagonal,
    OffDiagonal,
}

/// `∫∫ |[(A + diag(u, v))^{-1}]_{ij}|^s ρ(du) ρ(dv)` for the (1,1) or (1,2) entry.
/// The `u`-integral is done in closed form via `φ_s`.
pub fn two_by_two_average(dist: &Disorder, m: &TwoByTwo, entry: Entry, s: f64) -> Result<f64> {
    let TwoByTwo { a, c, beta } = *m;
    let beta = beta.abs();
    if beta == 0.0 {
        return match entry {
            Entry::OffDiagonal => Ok(0.0),
            Entry::Diagonal => phi_s_real(dist, -a, s),
        };
    }
    let integrand = |v: f64| -> f64 {
        let w = c + v;
        if w == 0.0 {
            return match entry {
                Entry::Diagonal => 0.0,
                Entry::OffDiagonal => beta.powf(-s),
            };
        }
        let p = beta * beta / w - a;
        let phi = phi_s_real(dist, p, s).unwrap_or(f64::NAN);
        match entry {
            Entry::Diagonal => phi,
            Entry::OffDiagonal => (beta / w.abs()).powf(s) * phi,
        }
    };
    let mut pts = vec![Singularity::breakpoint(-c)];
    if let Some((lo, hi)) = dist.support() {
        for edge in [lo, hi] {
            if edge + a != 0.0 {
                pts.push(Singularity::breakpoint(beta * beta / (edge + a) - c));
            }
        }
    }
    let tol = Tolerance {
        rel: SEARCH_TOL,
        abs: 1e-14,
        max_intervals: 4000,
    };
    let r = dist.expect(integrand, &pts, tol).map_err(|e| {
        Error::Quadrature(format!(
            "C_s integral at a={a:.6e}, c={c:.6e}, beta={beta:.6e} ({entry:?}): {e}"
        ))
    })?;
    Ok(r.value)
}

fn two_by_two_value(dist: &Disorder, m: &TwoByTwo, s: f64) -> Result<f64> {
    Ok(two_by_two_average(dist, m, Entry::Diagonal, s)?.max(two_by_two_average(dist, m, Entry::OffDiagonal, s)?))
}

/// Search budget; `starts` random starts each followed by coordinate refinement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effort {
    pub starts: usize,
    pub seed: u64,
}

impl Effort {
    pub fn new(starts: usize, seed: u64) -> Self {
        Self { starts, seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult<P> {
    pub value: f64,
    pub argmax: P,
    pub evaluations: usize,
    pub effort: Effort,
    /// Always true: a finite search only bounds the supremum from below.
    pub lower_bound: bool,
}

fn heavy(u: f64) -> f64 {
    (std::f64::consts::PI * (u - 0.5)).tan()
}

fn cs_start(dist: &Disorder, effort: &Effort, i: usize) -> TwoByTwo {
    let (m, r) = dist.center_and_scale();
    if i == 0 {
        return TwoByTwo { a: -m, c: -m, beta: 0.0 };
    }
    let mut rng = CounterRng::keyed(&[effort.seed, 0xC5, i as u64]);
    let coord = |rng: &mut CounterRng| {
        if rng.uniform() < 0.6 {
            -m + r * rng.range(-2.0, 2.0)
        } else {
            -m + r * heavy(rng.uniform())
        }
    };
    let a = coord(&mut rng);
    let c = coord(&mut rng);
    let beta = r * rng.range(-6.0, 3.0).exp();
    TwoByTwo { a, c, beta }
}

/// Coordinate ascent with halving steps; `eval` returns the objective.
fn refine<P: Copy, F>(mut best: (f64, P), steps: &mut [f64], moves: &dyn Fn(&P, usize, f64) -> P, eval: F) -> Result<((f64, P), usize)>
where
    F: Fn(&P) -> Result<f64>,
{
    let mut count = 0;
    for _ in 0..REFINE_ROUNDS {
        let mut improved = false;
        for k in 0..steps.len() {
            for dir in [1.0, -1.0] {
                let cand = moves(&best.1, k, dir * steps[k]);
                let v = eval(&cand)?;
                count += 1;
                if v > best.0 {
                    best = (v, cand);
                    improved = true;
                }
            }
        }
        if !improved {
            for s in steps.iter_mut() {
                *s *= 0.5;
            }
        }
    }
    Ok((best, count))
}

/// Estimate of `C_s`. Candidate `i` depends only on `(seed, i)`, so a larger
/// `starts` never lowers the result.
pub fn constant_cs(dist: &Disorder, s: f64, effort: Effort) -> Result<SearchResult<TwoByTwo>> {
    if !(s > 0.0 && s < dist.tau()) {
        return Err(Error::InvalidInput(format!("C_s needs 0 < s < tau = {}, got {s}", dist.tau())));
    }
    let n = effort.starts.max(1);
    let (_, r) = dist.center_and_scale();
    let results: Vec<Result<(f64, TwoByTwo, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let start = cs_start(dist, &effort, i);
            let v0 = two_by_two_value(dist, &start, s)?;
            if i == 0 {
                return Ok((v0, start, 2));
            }
            let mut steps = [0.25 * r, 0.25 * r, 0.5];
            let moves = |p: &TwoByTwo, k: usize, h: f64| {
                let mut q = *p;
                match k {
                    0 => q.a += h,
                    1 => q.c += h,
                    _ => q.beta *= h.exp(),
                }
                q
            };
            let ((v, p), cnt) = refine((v0, start), &mut steps, &moves, |p| two_by_two_value(dist, p, s))?;
            Ok((v, p, 2 * (cnt + 1)))
        })
        .collect();
    finish(results, effort)
}

fn finish<P: Copy>(results: Vec<Result<(f64, P, usize)>>, effort: Effort) -> Result<SearchResult<P>> {
    let mut best: Option<(f64, P)> = None;
    let mut evals = 0;
    for r in results {
        let (v, p, c) = r?;
        evals += c;
        // ties resolved by first index so the argmax is deterministic
        if best.as_ref().map_or(true, |b| v > b.0) {
            best = Some((v, p));
        }
    }
    let (value, argmax) = best.expect("at least one start");
    Ok(SearchResult {
        value,
        argmax,
        evaluations: evals,
        effort,
        lower_bound: true,
    })
}

// ---------------------------------------------------------------- D_s

/// Three complex points `(z, w, ζ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingPoint {
    pub z: Complex64,
    pub w: Complex64,
    pub zeta: Complex64,
}

fn complex_integral<F: Fn(f64) -> f64>(dist: &Disorder, f: F, pts: &[(Complex64, f64)]) -> Result<f64> {
    let mut sing: Vec<Singularity> = Vec::new();
    for (p, alpha) in pts {
        if p.im == 0.0 && *alpha > 0.0 {
            sing.push(Singularity::power(p.re, *alpha));
        } else {
            sing.push(Singularity::breakpoint(p.re));
        }
    }
    // coincident real singular points add their exponents
    sing.sort_by(|a, b| a.at.total_cmp(&b.at));
    let mut merged: Vec<Singularity> = Vec::new();
    for p in sing {
        match merged.last_mut() {
            Some(l) if l.at == p.at => l.alpha += p.alpha,
            _ => merged.push(p),
        }
    }
    let tol = Tolerance {
        rel: SEARCH_TOL,
        abs: 1e-14,
        max_intervals: 4000,
    };
    Ok(dist.expect(f, &merged, tol)?.value)
}

/// `(γ_s, φ_s, ψ_s)` at a point.
pub fn decoupling_integrals(dist: &Disorder, p: &DecouplingPoint, s: f64) -> Result<(f64, f64, f64)> {
    let d = |v: f64, q: Complex64| (Complex64::new(v, 0.0) - q).norm();
    let phi = complex_integral(dist, |v| d(v, p.zeta).powf(-s), &[(p.zeta, s)])?;
    let psi = complex_integral(dist, |v| (d(v, p.z) / d(v, p.w)).powf(s), &[(p.w, s), (p.z, 0.0)])?;
    let gamma = complex_integral(
        dist,
        |v| (d(v, p.z) / (d(v, p.w) * d(v, p.zeta))).powf(s),
        &[(p.w, s), (p.zeta, s), (p.z, 0.0)],
    )?;
    Ok((gamma, phi, psi))
}

/// `γ_s / (φ_s ψ_s)`; exactly 1 when `z = w`.
pub fn decoupling_ratio(dist: &Disorder, p: &DecouplingPoint, s: f64) -> Result<f64> {
    if p.z == p.w {
        return Ok(1.0);
    }
    let (g, f, h) = decoupling_integrals(dist, p, s)?;
    Ok(g / (f * h))
}

// chart: ρ ∈ [0, 1), θ ∈ [0, 2π) ↦ m + R ρ/(1-ρ) e^{iθ}
#[derive(Clone, Copy, Debug)]
struct Chart {
    m: f64,
    r: f64,
}

impl Chart {
    fn point(&self, rho: f64, theta: f64) -> Complex64 {
        let rho = rho.clamp(0.0, 0.999);
        let rad = self.r * rho / (1.0 - rho);
        let mut z = Complex64::from_polar(rad, theta);
        // snap numerically real points onto the axis
        if z.im.abs() < 1e-15 * rad.max(1.0) {
            z.im = 0.0;
        }
        Complex64::new(self.m, 0.0) + z
    }
}

fn ds_params_to_point(chart: &Chart, q: &[f64; 6]) -> DecouplingPoint {
    DecouplingPoint {
        z: chart.point(q[0], q[1]),
        w: chart.point(q[2], q[3]),
        zeta: chart.point(q[4], q[5]),
    }
}

fn ds_start(effort: &Effort, i: usize) -> [f64; 6] {
    if i == 0 {
        // z = w: the ratio is identically 1
        return [0.3, 0.0, 0.3, 0.0, 0.2, 0.0];
    }
    let mut rng = CounterRng::keyed(&[effort.seed, 0xD5, i as u64]);
    let mut q = [0.0; 6];
    for k in 0..3 {
        q[2 * k] = rng.range(0.0, 0.95);
        q[2 * k + 1] = if rng.uniform() < 0.5 {
            if rng.uniform() < 0.5 {
                0.0
            } else {
                std::f64::consts::PI
            }
        } else {
            rng.range(0.0, 2.0 * std::f64::consts::PI)
        };
    }
    q
}

/// Estimate of the decoupling constant `D_s`. Refused for unbounded support.
pub fn constant_ds(dist: &Disorder, s: f64, effort: Effort) -> Result<SearchResult<DecouplingPoint>> {
    if !dist.is_bounded() {
        return Err(Error::Unsupported(
            "decoupling constants unavailable: the sufficient condition needs bounded support".into(),
        ));
    }
    if !(s > 0.0 && 2.0 * s < 1.0) {
        return Err(Error::InvalidInput(format!("D_s needs 0 < s < 1/2, got {s}")));
    }
    let (m, r) = dist.center_and_scale();
    let chart = Chart { m, r };
    let n = effort.starts.max(1);
    let results: Vec<Result<(f64, DecouplingPoint, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let q0 = ds_start(&effort, i);
            let eval = |q: &[f64; 6]| decoupling_ratio(dist, &ds_params_to_point(&chart, q), s);
            let v0 = eval(&q0)?;
            if i == 0 {
                return Ok((v0, ds_params_to_point(&chart, &q0), 1));
            }
            let mut steps = [0.1, 0.4, 0.1, 0.4, 0.1, 0.4];
            let moves = |q: &[f64; 6], k: usize, h: f64| {
                let mut c = *q;
                c[k] += h;
                if k % 2 == 0 {
                    c[k] = c[k].clamp(0.0, 0.999);
                }
                c
            };
            let ((v, q), cnt) = refine((v0, q0), &mut steps, &moves, eval)?;
            Ok((v, ds_params_to_point(&chart, &q), cnt + 1))
        })
        .collect();
    finish(results, effort)
}

// ---------------------------------------------------------------- fracmom bound and interpolation

/// Both readings of the conditional moment bound at exponent `s`:
/// `(τ/(τ-s)) ((4κ)/λ^s)^{s/τ}` and `(τ/(τ-s)) (4κ)^{s/τ} / λ^s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentBound {
    pub grouped: f64,
    pub separated: f64,
}

impl MomentBound {
    pub fn new(s: f64, tau: f64, kappa: f64, lambda: f64) -> Result<Self> {
        if !(s > 0.0 && s < tau) {
            return Err(Error::InvalidInput(format!("need 0 < s < tau, got s={s}, tau={tau}")));
        }
        let pre = tau / (tau - s);
        Ok(Self {
            grouped: pre * (4.0 * kappa / lambda.powf(s)).powf(s / tau),
            separated: pre * (4.0 * kappa).powf(s / tau) / lambda.powf(s),
        })
    }

    pub fn value(&self) -> f64 {
        self.grouped.max(self.separated)
    }
}

/// Converts a decay bound `A_s e^{-μ_s d}` at exponent `s` into one at `r`.
pub fn interpolate_exponent(a_s: f64, mu_s: f64, s: f64, r: f64, tau: f64, kappa: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(r > 0.0 && r < tau) {
        return Err(Error::InvalidInput(format!("target exponent r={r} must lie in (0, tau={tau})")));
    }
    if !(s > 0.0 && s < tau) {
        return Err(Error::InvalidInput(format!("source exponent s={s} must lie in (0, tau={tau})")));
    }
    if r == s {
        return Ok((a_s, mu_s));
    }
    if r < s {
        return Ok((a_s.powf(r / s), mu_s * r / s));
    }
    let t = 0.5 * (r + tau);
    let m_t = MomentBound::new(t, tau, kappa, lambda)?.value();
    let w_s = (t - r) / (t - s);
    let w_t = (r - s) / (t - s);
    Ok((a_s.powf(w_s) * m_t.powf(w_t), mu_s * w_s))
}

// ---------------------------------------------------------------- bundle and cache

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Estimated { seed: u64, starts: usize },
    UserSupplied,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    pub tau: f64,
    pub s: f64,
    pub kappa_tau: f64,
    pub c_s: f64,
    pub d_s: Option<f64>,
    pub c_tilde_s: Option<f64>,
    pub provenance: Provenance,
    pub lower_bound: bool,
    /// Set when `s` lies outside the range where `D_s` is known to be finite.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub distribution: String,
}

impl RegularityConstants {
    /// Estimates all constants for `(dist, s)`.
    pub fn estimate(dist: &Disorder, s: f64, effort: Effort) -> Result<Self> {
        let tau = dist.tau();
        let kappa = kappa_tau(dist, tau)?.value;
        let c_s = constant_cs(dist, s, effort)?.value;
        let mut notes = Vec::new();
        let d_s = if !dist.is_bounded() {
            notes.push("decoupling constants unavailable for unbounded support".into());
            None
        } else if 2.0 * s >= 1.0 {
            notes.push(format!("D_s not estimated for s = {s} >= 1/2"));
            None
        } else {
            if s >= tau / 4.0 {
                notes.push(format!("s = {s} >= tau/4: D_s finiteness not guaranteed; estimate not certified"));
            }
            Some(constant_ds(dist, s, effort)?.value)
        };
        Ok(Self {
            tau,
            s,
            kappa_tau: kappa,
            c_s,
            c_tilde_s: d_s.map(|d| c_s * d * d),
            d_s,
            provenance: Provenance::Estimated {
                seed: effort.seed,
                starts: effort.starts,
            },
            lower_bound: true,
            notes,
            distribution: dist.fingerprint(),
        })
    }

    /// Rigorous constants supplied by the user.
    pub fn user_supplied(dist: &Disorder, s: f64, kappa_tau: f64, c_s: f64, d_s: Option<f64>) -> Self {
        Self {
            tau: dist.tau(),
            s,
            kappa_tau,
            c_s,
            d_s,
            c_tilde_s: d_s.map(|d| c_s * d * d),
            provenance: Provenance::UserSupplied,
            lower_bound: false,
            notes: Vec::new(),
            distribution: dist.fingerprint(),
        }
    }

    pub fn c_tilde(&self) -> Result<f64> {
        self.c_tilde_s
            .ok_or_else(|| Error::Unsupported(format!("C~_s unavailable: {}", self.notes.join("; "))))
    }

    pub fn certified(&self) -> bool {
        matches!(self.provenance, Provenance::UserSupplied)
    }
}

/// JSON cache of constants keyed by (distribution fingerprint, s, effort).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConstantsCache {
    pub entries: BTreeMap<String, RegularityConstants>,
}

impl ConstantsCache {
    pub fn key(dist: &Disorder, s: f64, effort: &Effort) -> String {
        format!("{}|s={s:e}|starts={}|seed={}", dist.fingerprint(), effort.starts, effort.seed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        crate::io::write_atomic(path, text.as_bytes())
    }

    pub fn get_or_estimate(&mut self, dist: &Disorder, s: f64, effort: Effort) -> Result<RegularityConstants> {
        let key = Self::key(dist, s, &effort);
        if let Some(c) = self.entries.get(&key) {
            return Ok(c.clone());
        }
        let c = RegularityConstants::estimate(dist, s, effort)?;
        self.entries.insert(key, c.clone());
        Ok(c)
    }
}

/// Stable seed derived from a text key.
pub fn seed_from_text(text: &str) -> u64 {
    let words: Vec<u64> = text.bytes().map(|b| b as u64).collect();
    hash_words(&words)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u11() -> Disorder {
        Disorder::uniform(-1.0, 1.0).unwrap()
    }

    #[test]
    fn kappa_closed_forms() {
        assert_eq!(kappa_tau(&u11(), 1.0).unwrap().value, 1.0);
        assert_eq!(kappa_tau(&Disorder::uniform(0.0, 1.0).unwrap(), 1.0).unwrap().value, 2.0);
        // ε^τ <= ε^τ' (2M)^{τ-τ'} rescaling on [-1, 1]
        let k1 = kappa_tau(&u11(), 1.0).unwrap().value;
        let kh = kappa_tau(&u11(), 0.5).unwrap().value;
        assert!(kh <= k1 * 2.0f64.powf(0.5) + 1e-15);
    }

    #[test]
    fn kappa_grid_matches_closed_form() {
        // the same law through the generic path
        let d = Disorder::new(DisorderLaw::PiecewiseLinear {
            knots: vec![[-1.0, 1.0], [1.0, 1.0]],
        })
        .unwrap();
        for tau in [1.0, 0.6] {
            let g = kappa_tau(&d, tau).unwrap().value;
            let c = kappa_tau(&u11(), tau).unwrap().value;
            assert!((g - c).abs() <= 0.01 * c, "tau={tau}: {g} vs {c} {:?}", kappa_tau(&d, tau).unwrap());
        }
    }

    #[test]
    fn cs_a_zero_slice() {
        let v = two_by_two_average(&u11(), &TwoByTwo { a: 0.0, c: 0.0, beta: 0.0 }, Entry::Diagonal, 0.5).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        let r = constant_cs(&u11(), 0.5, Effort::new(4, 1)).unwrap();
        assert!(r.value >= 2.0);
    }

    #[test]
    fn cs_entry_against_double_quadrature() {
        // brute 2D midpoint sum with singularity-aware substitution is slow; use a
        // smooth case: A with large diagonal keeps the inverse bounded
        let m = TwoByTwo { a: 5.0, c: 4.0, beta: 1.5 };
        let d = u11();
        let n = 800;
        let mut acc11 = 0.0;
        let mut acc12 = 0.0;
        for i in 0..n {
            let u = -1.0 + (i as f64 + 0.5) * 2.0 / n as f64;
            for j in 0..n {
                let v = -1.0 + (j as f64 + 0.5) * 2.0 / n as f64;
                let det = (m.a + u) * (m.c + v) - m.beta * m.beta;
                acc11 += ((m.c + v) / det).abs().sqrt();
                acc12 += (m.beta / det).abs().sqrt();
            }
        }
        let w = 1.0 / (n * n) as f64;
        let e11 = two_by_two_average(&d, &m, Entry::Diagonal, 0.5).unwrap();
        let e12 = two_by_two_average(&d, &m, Entry::OffDiagonal, 0.5).unwrap();
        assert!((e11 - acc11 * w).abs() < 1e-5, "{e11} {}", acc11 * w);
        assert!((e12 - acc12 * w).abs() < 1e-5, "{e12} {}", acc12 * w);
    }

    #[test]
    fn cs_is_deterministic_and_monotone_in_effort() {
        let a = constant_cs(&u11(), 0.5, Effort::new(6, 9)).unwrap();
        let b = constant_cs(&u11(), 0.5, Effort::new(6, 9)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        let c = constant_cs(&u11(), 0.5, Effort::new(12, 9)).unwrap();
        assert!(c.value >= a.value);
    }

    #[test]
    fn ds_degenerate_and_refusal() {
        let p = DecouplingPoint {
            z: Complex64::new(0.2, 0.0),
            w: Complex64::new(0.2, 0.0),
            zeta: Complex64::new(-0.4, 0.1),
        };
        assert_eq!(decoupling_ratio(&u11(), &p, 0.2).unwrap(), 1.0);
        let r = constant_ds(&u11(), 0.2, Effort::new(3, 2)).unwrap();
        assert!(r.value >= 1.0);
        let cauchy = Disorder::new(DisorderLaw::Cauchy { scale: 1.0 }).unwrap();
        assert!(matches!(constant_ds(&cauchy, 0.2, Effort::new(3, 2)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn interpolation_cases() {
        assert_eq!(interpolate_exponent(3.0, 0.7, 0.4, 0.4, 1.0, 1.0, 2.0).unwrap(), (3.0, 0.7));
        let (a, mu) = interpolate_exponent(9.0, 0.8, 0.4, 0.2, 1.0, 1.0, 2.0).unwrap();
        assert!((a - 3.0).abs() < 1e-15 && (mu - 0.4).abs() < 1e-15);
        // s=0.3, r=0.5, τ=0.9 → t=0.7, weights 1/2 and 1/2
        let (kappa, lambda) = (1.0, 4.0);
        let (a, mu) = interpolate_exponent(2.0, 1.2, 0.3, 0.5, 0.9, kappa, lambda).unwrap();
        assert!((mu - 0.6).abs() < 1e-15);
        let pre = 0.9 / (0.9 - 0.7);
        let grouped = pre * (4.0f64 / 4.0f64.powf(0.7)).powf(0.7 / 0.9);
        let separated = pre * 4.0f64.powf(0.7 / 0.9) / 4.0f64.powf(0.7);
        let m_t = grouped.max(separated);
        assert!((a - (2.0f64.sqrt() * m_t.sqrt())).abs() < 1e-12);
        assert!(interpolate_exponent(1.0, 1.0, 0.3, 0.9, 0.9, 1.0, 1.0).is_err());
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut cache = ConstantsCache::default();
        let c = cache.get_or_estimate(&u11(), 0.2, Effort::new(2, 5)).unwrap();
        assert_eq!(c.c_tilde_s.unwrap(), c.c_s * c.d_s.unwrap() * c.d_s.unwrap());
        cache.save(&path).unwrap();
        let back = ConstantsCache::load(&path).unwrap();
        assert_eq!(back.entries.len(), 1);
        assert_eq!(back.entries.values().next().unwrap(), &c);
    }
}
