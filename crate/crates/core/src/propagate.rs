//! Deterministic decay machinery: subharmonic iteration with tempered kernels,
//! Combes–Thomas rates and the strip extension off the real axis.

use serde::{Deserialize, Serialize};

use crate::ensemble::HoppingKernel;
use crate::error::{Error, Result};
use crate::lattice::Offset;
use crate::quad::{integrate, Tolerance};

/// Cap on returned rates when a norm does not grow with `μ`.
pub const MU_MAX: f64 = 50.0;

/// Translation-invariant kernel `p(x, u) = weight(u - x)` with finite support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperedKernel {
    pub support: Vec<(Offset, f64)>,
}

impl TemperedKernel {
    pub fn new(support: Vec<(Offset, f64)>) -> Result<Self> {
        if support.iter().any(|(_, w)| !(*w >= 0.0)) {
            return Err(Error::InvalidInput("kernel weights must be nonnegative".into()));
        }
        let total: f64 = support.iter().map(|(_, w)| w).sum();
        // rows and columns of a translation-invariant kernel share this sum
        if total > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!("kernel mass {total} exceeds 1")));
        }
        Ok(Self { support })
    }

    /// `p(±e_i) = 1/(2d)`.
    pub fn nearest_neighbor(dim: usize) -> Self {
        let mut support = Vec::new();
        for axis in 0..dim {
            for sign in [-1i64, 1] {
                let mut c = vec![0i64; dim];
                c[axis] = sign;
                support.push((Offset::new(&c).expect("dim <= 3"), 1.0 / (2 * dim) as f64));
            }
        }
        Self { support }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            support: vec![(Offset::zero(dim), 1.0)],
        }
    }

    /// `p(v) = τ(v)^s / Σ τ^s` for a hopping kernel.
    pub fn from_hopping(h: &HoppingKernel, dim: usize, s: f64) -> Result<Self> {
        let offs = h.support(dim);
        let w: Vec<(Offset, f64)> = offs
            .offsets()
            .iter()
            .map(|o| (o.clone(), h.amplitude(o).powf(s)))
            .filter(|(_, w)| *w > 0.0)
            .collect();
        let total: f64 = w.iter().map(|(_, w)| w).sum();
        if total == 0.0 {
            return Err(Error::InvalidInput("hopping kernel has no support".into()));
        }
        Self::new(w.into_iter().map(|(o, x)| (o, x / total)).collect())
    }
}

/// Tilted norm `max_{θ = ±e_i} Σ_v p(v) e^{μ θ·v}`.
///
/// Tilting along the coordinate direction realizing `‖x‖∞` turns a bound on
/// `Σ_x e^{μ θ·x} g(x)` into pointwise `ℓ∞` decay at rate `μ`, and the tilt is
/// exactly multiplicative under translation, so the operator norm is attained.
pub fn kernel_norm_mu(p: &TemperedKernel, mu: f64) -> f64 {
    let dim = p.support.first().map_or(1, |(o, _)| o.dim());
    let mut best = 0.0f64;
    for axis in 0..dim {
        for sign in [-1.0, 1.0] {
            let n: f64 = p
                .support
                .iter()
                .map(|(o, w)| w * (sign * mu * o.coords()[axis] as f64).exp())
                .sum();
            best = best.max(n);
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub mu: f64,
    /// The norm never reaches `safety/b`; `mu` is [`MU_MAX`].
    pub unbounded: bool,
}

/// The `μ` with `b ‖P‖_{1,μ} = safety`, found by bisection to 1e-9 and rounded
/// down so that `b ‖P‖_{1,μ} ≤ safety < 1`.
pub fn rate_from_b(p: &TemperedKernel, b: f64, safety: f64) -> Result<Rate> {
    if !(b > 0.0 && b < 1.0) || !(safety > 0.0 && safety < 1.0) {
        return Err(Error::InvalidInput(format!("need b, safety in (0, 1), got {b}, {safety}")));
    }
    let f = |mu: f64| b * kernel_norm_mu(p, mu);
    if !(f(0.0) < safety) {
        return Err(Error::InvalidInput(format!(
            "b ||P|| = {} at mu = 0 is not below the safety level {safety}",
            f(0.0)
        )));
    }
    if !(f(MU_MAX) > safety) {
        return Ok(Rate { mu: MU_MAX, unbounded: true });
    }
    let (mut lo, mut hi) = (0.0, MU_MAX);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= safety {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug_assert!(f(lo) < 1.0);
    Ok(Rate { mu: lo, unbounded: false })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    LInfty,
    DistOmega,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    /// Pointwise rate `|ln b| / L`.
    pub mu: f64,
    /// Pointwise prefactor `g_∞ / b`.
    pub prefactor: f64,
    pub metric: Metric,
    pub b: f64,
    pub range: f64,
    pub g_inf: f64,
    /// Rate of the weighted-ℓ¹ form.
    pub l1_mu: f64,
    /// Bound on `Σ_x e^{μ(θ·x - max_Λ θ·y)} g(x)` for every direction `θ = ±e_i`:
    /// `g_∞ |Λ| / (1 - b ‖P‖_{1,μ})`.
    pub l1_budget: f64,
}

impl DecayEnvelope {
    /// `g_∞ b^{⌊d/L⌋}`.
    pub fn step(&self, dist: f64) -> f64 {
        self.g_inf * self.b.powf((dist / self.range).floor())
    }

    /// `(g_∞/b) e^{-μ d}`, which dominates [`Self::step`].
    pub fn smooth(&self, dist: f64) -> f64 {
        self.prefactor * (-self.mu * dist).exp()
    }
}

/// Both certified forms of decay for a function that is `b`-subharmonic off `Λ`
/// (of size `lambda_size` and range `range`) and bounded by `g_inf`.
pub fn envelope_from_criterion(
    b: f64,
    lambda_size: usize,
    range: f64,
    g_inf: f64,
    p: &TemperedKernel,
    safety: f64,
    metric: Metric,
) -> Result<DecayEnvelope> {
    if !(range > 0.0) {
        return Err(Error::InvalidInput("range must be positive".into()));
    }
    let rate = rate_from_b(p, b, safety)?;
    let norm = kernel_norm_mu(p, rate.mu);
    Ok(DecayEnvelope {
        mu: b.ln().abs() / range,
        prefactor: g_inf / b,
        metric,
        b,
        range,
        g_inf,
        l1_mu: rate.mu,
        l1_budget: g_inf * lambda_size as f64 / (1.0 - b * norm),
    })
}

/// Combes–Thomas: `Σ_v τ(v)(e^{m‖v‖∞} - 1)` over the kernel support.
pub fn combes_thomas_sum(h: &HoppingKernel, dim: usize, m: f64) -> f64 {
    h.support(dim)
        .offsets()
        .iter()
        .map(|o| h.amplitude(o) * (m * o.norm() as f64).exp_m1())
        .sum()
}

/// Largest `m` with `Σ τ(v)(e^{m‖v‖} - 1) ≤ η/2`, by bisection to 1e-12.
/// Capped at [`MU_MAX`] when the hopping vanishes.
pub fn combes_thomas_m(h: &HoppingKernel, dim: usize, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let target = 0.5 * eta;
    if combes_thomas_sum(h, dim, MU_MAX) <= target {
        return Ok(MU_MAX);
    }
    let (mut lo, mut hi) = (0.0, MU_MAX);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if combes_thomas_sum(h, dim, mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `(2/η) e^{-m(η) d}`.
pub fn combes_thomas_bound(h: &HoppingKernel, dim: usize, eta: f64, dist: f64) -> Result<f64> {
    let m = combes_thomas_m(h, dim, eta)?;
    Ok(2.0 / eta * (-m * dist).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StripBranch {
    CombesThomas,
    PoissonTriangle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripBound {
    pub value: f64,
    pub branch: StripBranch,
    /// `θ = 2π/(α+1)`.
    pub theta: f64,
    /// `|η|` at which the branches split, `ΔE π/α`.
    pub split: f64,
    pub poisson_constant: f64,
    pub note: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripInput {
    /// Real-axis bound `E|G(x,y;ξ)|^s ≤ A e^{-μ d}` on `[E-ΔE, E+ΔE]`.
    pub a: f64,
    pub mu: f64,
    pub delta_e: f64,
    pub alpha: f64,
    pub s: f64,
    /// The unquantified Poisson comparison constant; 1 by default.
    pub poisson_constant: f64,
}

/// Bound on `E|G(x,y;E+iη)|^s` at distance `dist`. Combes–Thomas terms enter
/// raised to the power `s`.
pub fn strip_bound(h: &HoppingKernel, dim: usize, input: &StripInput, eta: f64, dist: f64) -> Result<StripBound> {
    let StripInput { a, mu, delta_e, alpha, s, poisson_constant } = *input;
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    if !(delta_e > 0.0) || !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidInput("need delta_e > 0 and s in (0, 1]".into()));
    }
    let theta = 2.0 * std::f64::consts::PI / (alpha + 1.0);
    let split = delta_e * std::f64::consts::PI / alpha;
    let eta = eta.abs();
    if eta >= split {
        return Ok(StripBound {
            value: combes_thomas_bound(h, dim, eta, dist)?.powf(s),
            branch: StripBranch::CombesThomas,
            theta,
            split,
            poisson_constant,
            note: String::new(),
        });
    }
    let k = 2.0 * std::f64::consts::PI / theta;
    let top = delta_e * theta;
    let integrand = |e: f64| {
        if e <= 0.0 {
            return 0.0;
        }
        combes_thomas_bound(h, dim, e, dist).map_or(f64::NAN, |ct| ct.powf(s) * k * e.powf(k - 1.0))
    };
    let r = integrate(integrand, 0.0, top, Tolerance::relative(1e-8))?;
    let value = a * (-mu * dist).exp() + poisson_constant * r.value / delta_e.powf(k);
    Ok(StripBound {
        value,
        branch: StripBranch::PoissonTriangle,
        theta,
        split,
        poisson_constant,
        note: "shape-correct bound up to the Poisson comparison constant".into(),
    })
}
