//! Statistical checks of the depleted-resolvent bounds. Both sides are
//! estimated from the same disorder samples and compared through the error
//! of their difference (delta method).

use serde::{Deserialize, Serialize};

use crate::ensemble::{assemble, sample_potential, OperatorEnsemble};
use crate::error::{Error, Result};
use crate::lattice::{cut_set, enlarge, Bond, BondSet, Region, Site};
use crate::moments::{green_column, green_row, heavy_tailed, run_samples, Solver};
use crate::resolvent::SpectralParameter;
use crate::stats::mean;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of `rhs - lhs`.
    pub stderr: f64,
    pub n: usize,
    pub failed: usize,
    pub sigmas: f64,
}

impl InequalityCheck {
    /// `lhs ≤ rhs + sigmas · stderr`.
    pub fn passes(&self) -> bool {
        self.rhs - self.lhs >= -self.sigmas * self.stderr
    }
}

fn batch_rows(rows: &[Vec<f64>], heavy: bool) -> Vec<Vec<f64>> {
    let n = rows.len();
    if !heavy || n < 4 {
        return rows.to_vec();
    }
    let k = (n as f64).sqrt().ceil() as usize;
    let dim = rows[0].len();
    (0..k)
        .map(|b| {
            let chunk = &rows[b * n / k..(b + 1) * n / k];
            (0..dim)
                .map(|j| mean(&chunk.iter().map(|r| r[j]).collect::<Vec<_>>()))
                .collect()
        })
        .collect()
}

/// Delta-method comparison of two smooth functions of the feature means.
pub fn delta_check<L, R>(rows: &[Vec<f64>], failed: usize, heavy: bool, sigmas: f64, lhs: L, rhs: R) -> InequalityCheck
where
    L: Fn(&[f64]) -> f64,
    R: Fn(&[f64]) -> f64,
{
    let dim = rows[0].len();
    let mu: Vec<f64> = (0..dim)
        .map(|j| mean(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let g = |m: &[f64]| rhs(m) - lhs(m);
    let grad: Vec<f64> = (0..dim)
        .map(|j| {
            let h = 1e-6 * mu[j].abs().max(1e-12);
            let mut up = mu.clone();
            let mut dn = mu.clone();
            up[j] += h;
            dn[j] -= h;
            (g(&up) - g(&dn)) / (2.0 * h)
        })
        .collect();
    let units = batch_rows(rows, heavy);
    let k = units.len() as f64;
    let proj: Vec<f64> = units
        .iter()
        .map(|u| u.iter().zip(&grad).map(|(a, b)| a * b).sum())
        .collect();
    let pm = mean(&proj);
    let var = proj.iter().map(|p| (p - pm) * (p - pm)).sum::<f64>() / (k - 1.0).max(1.0);
    InequalityCheck {
        lhs: lhs(&mu),
        rhs: rhs(&mu),
        stderr: (var / k).sqrt(),
        n: rows.len(),
        failed,
        sigmas,
    }
}

/// Cut-set bonds of `w` whose outer end lies in `omega`.
fn cut_within(ens: &OperatorEnsemble, w: &Region, omega: &Region) -> Vec<Bond> {
    cut_set(w, &ens.hopping.support(ens.dim))
        .iter()
        .filter(|b| omega.contains(&b.to))
        .copied()
        .collect()
}

fn t_s(ens: &OperatorEnsemble, b: &Bond, s: f64) -> f64 {
    ens.hopping.element(&b.from, &b.to).norm().powf(s)
}

struct Setup<'a> {
    ens: &'a OperatorEnsemble,
    omega: &'a Region,
    z: SpectralParameter,
    s: f64,
}

impl Setup<'_> {
    /// `|G_sub(x, ·)|^s` at `targets` for sample `k` restricted to `sub`.
    fn row(&self, k: u64, sub: &Region, x: &Site, targets: &[Site]) -> Result<Vec<f64>> {
        let full = sample_potential(self.ens, self.omega, k);
        let sample = full.restrict(sub)?;
        let h = assemble(self.ens, &sample, &BondSet::empty())?;
        let g = green_row(&h, self.z, x, Solver::Sparse)?;
        targets
            .iter()
            .map(|t| Ok(g[sub.require(t)?].norm().powf(self.s)))
            .collect()
    }

    /// `|G_sub(·, y)|^s` at `sources`.
    fn column(&self, k: u64, sub: &Region, sources: &[Site], y: &Site) -> Result<Vec<f64>> {
        let full = sample_potential(self.ens, self.omega, k);
        let sample = full.restrict(sub)?;
        let h = assemble(self.ens, &sample, &BondSet::empty())?;
        let g = green_column(&h, self.z, y)?;
        sources
            .iter()
            .map(|t| Ok(g[sub.require(t)?].norm().powf(self.s)))
            .collect()
    }
}

fn check_subset(w: &Region, omega: &Region) -> Result<()> {
    if !w.is_subset_of(omega) {
        return Err(Error::InvalidInput("W must be a subset of the region".into()));
    }
    Ok(())
}

/// First depleted-resolvent bound, for `x ∈ W`, `y ∈ Ω \ W^+`:
/// `E|G_Ω(x,y)|^s ≤ γ(W) Σ_{Γ(W^+)} |T|^s E|G_{Ω∖W^+}(v',y)|^s`,
/// `γ(W) = (C_s/λ^s) Σ_{Γ(W)} |T|^s E|G_W(x,u)|^s`.
pub fn depleted_bound(
    ens: &OperatorEnsemble,
    omega: &Region,
    w: &Region,
    x: &Site,
    y: &Site,
    z: SpectralParameter,
    s: f64,
    n: usize,
    c_s: f64,
) -> Result<InequalityCheck> {
    check_subset(w, omega)?;
    let support = ens.hopping.support(ens.dim);
    let w_plus = enlarge(w, &support).intersect(omega);
    w.require(x)?;
    if w_plus.contains(y) || !omega.contains(y) {
        return Err(Error::InvalidInput("y must lie in the region outside W+".into()));
    }
    let outer = omega.minus(&w_plus);
    let g1 = cut_within(ens, w, omega);
    let g2 = cut_within(ens, &w_plus, omega);
    let us: Vec<Site> = g1.iter().map(|b| b.from).collect();
    let vs: Vec<Site> = g2.iter().map(|b| b.to).collect();
    let t1: Vec<f64> = g1.iter().map(|b| t_s(ens, b, s)).collect();
    let t2: Vec<f64> = g2.iter().map(|b| t_s(ens, b, s)).collect();
    let st = Setup { ens, omega, z, s };
    let (rows, failed) = run_samples(n, |k| {
        let mut f = st.row(k, omega, x, &[*y])?;
        f.extend(st.row(k, w, x, &us)?);
        f.extend(st.column(k, &outer, &vs, y)?);
        Ok(f)
    })?;
    let (na, nb) = (us.len(), vs.len());
    let pre = c_s / ens.lambda.powf(s);
    let rhs = |m: &[f64]| {
        let gamma: f64 = pre * (0..na).map(|i| t1[i] * m[1 + i]).sum::<f64>();
        gamma * (0..nb).map(|j| t2[j] * m[1 + na + j]).sum::<f64>()
    };
    Ok(delta_check(&rows, failed, heavy_tailed(ens, s), 3.0, |m| m[0], rhs))
}

/// Second depleted-resolvent bound, for `x ∈ W`, `y ∈ Ω \ W`:
/// `E|G_Ω(x,y)|^s ≤ Σ_{<v,v'> ∈ Γ(W)} γ_x(v) |T|^s E|G_{Ω∖W}(v',y)|^s` with
/// `γ_x(v) = E|G_W(x,v)|^s + (C̃_s/λ^s) Σ_{Γ(W)} |T|^s E|G_W(x,u)|^s`.
pub fn depleted_bound_decoupled(
    ens: &OperatorEnsemble,
    omega: &Region,
    w: &Region,
    x: &Site,
    y: &Site,
    z: SpectralParameter,
    s: f64,
    n: usize,
    c_tilde: f64,
) -> Result<InequalityCheck> {
    check_subset(w, omega)?;
    w.require(x)?;
    if w.contains(y) || !omega.contains(y) {
        return Err(Error::InvalidInput("y must lie in the region outside W".into()));
    }
    let outer = omega.minus(w);
    let g = cut_within(ens, w, omega);
    let inner: Vec<Site> = g.iter().map(|b| b.from).collect();
    let outer_ends: Vec<Site> = g.iter().map(|b| b.to).collect();
    let t: Vec<f64> = g.iter().map(|b| t_s(ens, b, s)).collect();
    let st = Setup { ens, omega, z, s };
    let (rows, failed) = run_samples(n, |k| {
        let mut f = st.row(k, omega, x, &[*y])?;
        f.extend(st.row(k, w, x, &inner)?);
        f.extend(st.column(k, &outer, &outer_ends, y)?);
        Ok(f)
    })?;
    let nb = g.len();
    let pre = c_tilde / ens.lambda.powf(s);
    let rhs = |m: &[f64]| {
        let a: f64 = (0..nb).map(|i| t[i] * m[1 + i]).sum();
        (0..nb)
            .map(|i| (m[1 + i] + pre * a) * t[i] * m[1 + nb + i])
            .sum::<f64>()
    };
    Ok(delta_check(&rows, failed, heavy_tailed(ens, s), 3.0, |m| m[0], rhs))
}

/// Depleted resolvent in terms of the full one, for `u, y ∈ Ω \ W`:
/// `E|G_{Ω∖W}(u,y)|^s ≤ E|G_Ω(u,y)|^s + (C̃_s/λ^s) Σ_{<v,v'> ∈ Γ(W)} |T|^s E|G_Ω(v,y)|^s`.
pub fn full_bound(
    ens: &OperatorEnsemble,
    omega: &Region,
    w: &Region,
    u: &Site,
    y: &Site,
    z: SpectralParameter,
    s: f64,
    n: usize,
    c_tilde: f64,
) -> Result<InequalityCheck> {
    check_subset(w, omega)?;
    let outer = omega.minus(w);
    outer.require(u)?;
    outer.require(y)?;
    let g = cut_within(ens, w, omega);
    let vs: Vec<Site> = g.iter().map(|b| b.from).collect();
    let t: Vec<f64> = g.iter().map(|b| t_s(ens, b, s)).collect();
    let st = Setup { ens, omega, z, s };
    let (rows, failed) = run_samples(n, |k| {
        let mut f = st.column(k, &outer, &[*u], y)?;
        let mut sources = vec![*u];
        sources.extend(&vs);
        f.extend(st.column(k, omega, &sources, y)?);
        Ok(f)
    })?;
    let pre = c_tilde / ens.lambda.powf(s);
    let rhs = |m: &[f64]| m[1] + pre * (0..vs.len()).map(|i| t[i] * m[2 + i]).sum::<f64>();
    Ok(delta_check(&rows, failed, heavy_tailed(ens, s), 3.0, |m| m[0], rhs))
}
