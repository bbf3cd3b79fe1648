//! Finite-volume Green functions `G(x, y; z) = <x|(H - z)^{-1}|y>`.

use std::collections::HashMap;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Region, Site};
use crate::matrix::{dense_inverse, relative_residual, BandLu, Hamiltonian, C64, MAX_CONDITION, MAX_RESIDUAL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    #[default]
    Plus,
    Minus,
}

/// `z = E ± iη`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralParameter {
    pub e: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub sign: Sign,
}

impl SpectralParameter {
    pub fn new(e: f64, eta: f64) -> Self {
        Self { e, eta, sign: Sign::Plus }
    }

    pub fn real(e: f64) -> Self {
        Self::new(e, 0.0)
    }

    /// Interprets a complex number; the sign follows `Im z`.
    pub fn from_complex(z: C64) -> Self {
        Self {
            e: z.re,
            eta: z.im.abs(),
            sign: if z.im < 0.0 { Sign::Minus } else { Sign::Plus },
        }
    }

    pub fn z(&self) -> C64 {
        match self.sign {
            Sign::Plus => C64::new(self.e, self.eta),
            Sign::Minus => C64::new(self.e, -self.eta),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            sign: match self.sign {
                Sign::Plus => Sign::Minus,
                Sign::Minus => Sign::Plus,
            },
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.e.is_finite() || !self.eta.is_finite() {
            return Err(Error::InvalidInput(format!("invalid spectral parameter E={} eta={}", self.e, self.eta)));
        }
        Ok(())
    }
}

/// A Green function entry with its context.
#[derive(Clone, Debug, Serialize)]
pub struct GreenValue {
    pub value: C64,
    pub x: Site,
    pub y: Site,
    pub z: SpectralParameter,
    pub region_fingerprint: u64,
}

/// One factorization of `H - z`, reused across column and row solves.
pub struct Resolvent<'a> {
    h: &'a Hamiltonian,
    z: C64,
    lu: BandLu,
    condition: f64,
    columns: HashMap<usize, Vec<C64>>,
    rows: HashMap<usize, Vec<C64>>,
}

impl<'a> Resolvent<'a> {
    /// Factorizes and rejects systems with condition estimate above 1e14.
    pub fn new(h: &'a Hamiltonian, z: SpectralParameter) -> Result<Self> {
        z.validate()?;
        let zc = z.z();
        let lu = BandLu::factor(h, zc)?;
        let condition = lu.condition_estimate();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
        Ok(Self {
            h,
            z: zc,
            lu,
            condition,
            columns: HashMap::new(),
            rows: HashMap::new(),
        })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        self.h
    }

    fn checked_solve(&self, j: usize, transpose: bool) -> Result<Vec<C64>> {
        let n = self.h.dim();
        let mut e = vec![C64::new(0.0, 0.0); n];
        e[j] = C64::new(1.0, 0.0);
        let mut x = e.clone();
        let solve = |b: &mut [C64]| {
            if transpose {
                self.lu.solve_transpose_in_place(b)
            } else {
                self.lu.solve_in_place(b)
            }
        };
        solve(&mut x);
        let residual = |x: &[C64]| {
            if transpose {
                transpose_residual(self.h, self.z, x, j)
            } else {
                relative_residual(self.h, self.z, x, &e)
            }
        };
        let mut res = residual(&x);
        // one round of iterative refinement before giving up
        if !(res <= MAX_RESIDUAL) {
            let ax = if transpose {
                apply_transpose_shifted(self.h, &x, self.z)
            } else {
                self.h.apply_shifted(&x, self.z)
            };
            let mut r: Vec<C64> = e.iter().zip(&ax).map(|(b, a)| b - a).collect();
            solve(&mut r);
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
            res = residual(&x);
        }
        if !(res <= MAX_RESIDUAL) {
            return Err(Error::Residual { residual: res });
        }
        Ok(x)
    }

    /// Column `G(·, y)` by index.
    pub fn column_index(&mut self, j: usize) -> Result<&[C64]> {
        if !self.columns.contains_key(&j) {
            let c = self.checked_solve(j, false)?;
            self.columns.insert(j, c);
        }
        Ok(&self.columns[&j])
    }

    /// Row `G(x, ·)` by index.
    pub fn row_index(&mut self, i: usize) -> Result<&[C64]> {
        if !self.rows.contains_key(&i) {
            let r = self.checked_solve(i, true)?;
            self.rows.insert(i, r);
        }
        Ok(&self.rows[&i])
    }

    pub fn column(&mut self, y: &Site) -> Result<&[C64]> {
        let j = self.h.region().require(y)?;
        self.column_index(j)
    }

    pub fn row(&mut self, x: &Site) -> Result<&[C64]> {
        let i = self.h.region().require(x)?;
        self.row_index(i)
    }

    pub fn green(&mut self, x: &Site, y: &Site) -> Result<C64> {
        let i = self.h.region().require(x)?;
        let j = self.h.region().require(y)?;
        self.green_index(i, j)
    }

    pub fn green_index(&mut self, i: usize, j: usize) -> Result<C64> {
        if let Some(r) = self.rows.get(&i) {
            return Ok(r[j]);
        }
        Ok(self.column_index(j)?[i])
    }
}

fn apply_transpose_shifted(h: &Hamiltonian, x: &[C64], shift: C64) -> Vec<C64> {
    // H^T = conj(H) for Hermitian H
    let n = h.dim();
    (0..n)
        .map(|i| {
            let mut acc = -shift * x[i];
            for (j, v) in h.row(i) {
                acc += v.conj() * x[j];
            }
            acc
        })
        .collect()
}

fn transpose_residual(h: &Hamiltonian, shift: C64, x: &[C64], j: usize) -> f64 {
    let ax = apply_transpose_shifted(h, x, shift);
    ax.iter()
        .enumerate()
        .map(|(i, v)| if i == j { (v - 1.0).norm() } else { v.norm() })
        .fold(0.0, f64::max)
}

/// `G(x, y; z)` by sparse direct factorization.
pub fn green(h: &Hamiltonian, z: SpectralParameter, x: &Site, y: &Site) -> Result<C64> {
    Resolvent::new(h, z)?.green(x, y)
}

/// `G(x, y; z)` by dense inversion.
pub fn green_dense(h: &Hamiltonian, z: SpectralParameter, x: &Site, y: &Site) -> Result<C64> {
    let i = h.region().require(x)?;
    let j = h.region().require(y)?;
    Ok(dense_inverse(h, z.z())?[(i, j)])
}

/// Krein reduction: given `Ĥ` (with `V(x)`, `V(y)` zeroed), returns
/// `<1|([A]^{-1} + λ diag(v_x, v_y))^{-1}|2>`, where `[A]` holds the entries
/// of `(Ĥ - z)^{-1}` on `{x, y}`. For `x = y` the 1×1 reduction is used.
pub fn krein_2x2(h_hat: &Hamiltonian, x: &Site, y: &Site, z: SpectralParameter, vx: f64, vy: f64, lambda: f64) -> Result<C64> {
    let mut r = Resolvent::new(h_hat, z)?;
    if x == y {
        let a = r.green(x, x)?;
        if a.norm() == 0.0 {
            return Err(Error::IllConditioned { condition: f64::INFINITY });
        }
        return Ok(1.0 / (1.0 / a + lambda * vx));
    }
    let a = Matrix2::new(r.green(x, x)?, r.green(x, y)?, r.green(y, x)?, r.green(y, y)?);
    let m = invert_2x2(&a)? + Matrix2::new(C64::new(lambda * vx, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(lambda * vy, 0.0));
    Ok(invert_2x2(&m)?[(0, 1)])
}

/// Inverse of a complex 2×2 matrix with a relative singularity guard.
pub fn invert_2x2(a: &Matrix2<C64>) -> Result<Matrix2<C64>> {
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if det.norm() <= 1e-14 * scale * scale || det.norm() == 0.0 {
        let cond = if det.norm() > 0.0 { scale * scale / det.norm() } else { f64::INFINITY };
        return Err(Error::IllConditioned { condition: cond });
    }
    Ok(Matrix2::new(a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]) / det)
}

/// Maximum residuals of the three resolvent identities on a region pair `W ⊂ Ω`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityReport {
    pub z: SpectralParameter,
    pub pairs: usize,
    pub first_order: f64,
    pub second_order: f64,
    pub diagrammatic: f64,
    /// Largest magnitude of the two terms that must vanish for `x ∈ W`, `y ∉ W^+`.
    pub vanishing_terms: f64,
    /// Max relative deviation of sparse columns from the dense inverse, when checked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_oracle: Option<f64>,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        let m = self.first_order.max(self.second_order).max(self.diagrammatic);
        self.dense_oracle.map_or(m, |d| m.max(d))
    }

    pub fn passes(&self, residual_tol: f64, vanishing_tol: f64) -> bool {
        self.max_residual() <= residual_tol && self.vanishing_terms <= vanishing_tol
    }
}

/// Regions up to this size are cross-checked against a dense inverse.
pub const DENSE_ORACLE_LIMIT: usize = 200;

/// Evaluates the first- and second-order resolvent identities and the
/// three-factor expansion with `Γ1 = Γ(W)`, `Γ2 = Γ(W^+)` for every
/// `x ∈ W` and every `y ∈ Ω`; the three-factor form is checked for `y ∉ W^+`.
/// Residuals are relative to the largest resolvent entry involved.
pub fn identity_residuals(h: &Hamiltonian, w: &Region, z: SpectralParameter) -> Result<IdentityReport> {
    let omega = h.region();
    if !w.is_subset_of(omega) {
        return Err(Error::InvalidInput("W must be a subset of the region".into()));
    }
    let gamma1 = h.cut_set(w);
    let w_plus = h.enlarge(w);
    let gamma2 = h.cut_set(&w_plus);
    let (h1, t1) = h.deplete(&gamma1);
    let (h2, t2) = h.deplete(&gamma2);
    let mut g = Resolvent::new(h, z)?;
    let mut g1 = Resolvent::new(&h1, z)?;
    let mut g2 = Resolvent::new(&h2, z)?;
    let n = h.dim();

    let mut rep = IdentityReport {
        z,
        pairs: 0,
        first_order: 0.0,
        second_order: 0.0,
        diagrammatic: 0.0,
        vanishing_terms: 0.0,
        dense_oracle: None,
    };
    let zero = C64::new(0.0, 0.0);
    let inf_norm = |v: &[C64]| v.iter().map(|c| c.norm()).fold(0.0, f64::max);

    // columns of G and G^{Γ2} for every y
    let mut gcols = Vec::with_capacity(n);
    let mut g2cols = Vec::with_capacity(n);
    for j in 0..n {
        gcols.push(g.column_index(j)?.to_vec());
        g2cols.push(g2.column_index(j)?.to_vec());
    }
    let gscale = gcols.iter().map(|c| inf_norm(c)).fold(0.0, f64::max);
    let g2scale = g2cols.iter().map(|c| inf_norm(c)).fold(0.0, f64::max);

    for x in w.sites() {
        let xi = omega.require(x)?;
        let g1row = g1.row_index(xi)?.to_vec();
        // w1(b) = Σ_a G^{Γ1}(x, a) T1(a, b)
        let mut w1 = vec![zero; n];
        for &(a, b, t) in &t1 {
            w1[b] += g1row[a] * t;
        }
        // r(c) = Σ_b w1(b) G(b, c), a transpose solve
        let mut r = w1.clone();
        g.lu.solve_transpose_in_place(&mut r);
        // w2(d) = Σ_c r(c) T2(c, d)
        let mut w2 = vec![zero; n];
        for &(c, d, t) in &t2 {
            w2[d] += r[c] * t;
        }
        let scale = gscale
            .max(g2scale)
            .max(inf_norm(&g1row))
            .max(f64::MIN_POSITIVE);

        for (yj, y) in omega.sites().iter().enumerate() {
            rep.pairs += 1;
            let gxy = gcols[yj][xi];
            let gcol = &gcols[yj];
            let g2col = &g2cols[yj];
            // first order: G = G^{Γ1} - G^{Γ1} T1 G
            let mut s1 = zero;
            for (b, wb) in w1.iter().enumerate() {
                if *wb != zero {
                    s1 += wb * gcol[b];
                }
            }
            let rhs1 = g1row[yj] - s1;
            rep.first_order = rep.first_order.max((gxy - rhs1).norm() / scale);
            // second order
            let mut s2 = zero;
            let mut s3 = zero;
            for b in 0..n {
                if w1[b] != zero {
                    s2 += w1[b] * g2col[b];
                }
                if w2[b] != zero {
                    s3 += w2[b] * g2col[b];
                }
            }
            let rhs2 = g1row[yj] - s2 + s3;
            rep.second_order = rep.second_order.max((gxy - rhs2).norm() / scale);
            if !w_plus.contains(y) {
                rep.vanishing_terms = rep.vanishing_terms.max(g1row[yj].norm()).max(s2.norm());
                // three-factor form over oriented bonds only
                let mut s = zero;
                for bond1 in gamma1.iter() {
                    let (ua, ub) = (omega.require(&bond1.from)?, omega.require(&bond1.to)?);
                    let t_ab = h.get(ua, ub);
                    let left = g1row[ua] * t_ab;
                    if left == zero {
                        continue;
                    }
                    let mut inner = zero;
                    for bond2 in gamma2.iter() {
                        let (vc, vd) = (omega.require(&bond2.from)?, omega.require(&bond2.to)?);
                        inner += gcols[vc][ub] * h.get(vc, vd) * g2col[vd];
                    }
                    s += left * inner;
                }
                rep.diagrammatic = rep.diagrammatic.max((gxy - s).norm() / scale);
            }
        }
    }

    if n <= DENSE_ORACLE_LIMIT {
        let inv = dense_inverse(h, z.z())?;
        let mut dev: f64 = 0.0;
        for (j, col) in gcols.iter().enumerate() {
            for i in 0..n {
                dev = dev.max((col[i] - inv[(i, j)]).norm() / gscale.max(f64::MIN_POSITIVE));
            }
        }
        rep.dense_oracle = Some(dev);
    }
    Ok(rep)
}

/// First-order identity `G = G^Γ - G^Γ T^Γ G` for an arbitrary bond set,
/// checked on all pairs. Returns the max residual relative to `max |G|`.
pub fn first_order_residual(h: &Hamiltonian, gamma: &crate::lattice::BondSet, z: SpectralParameter) -> Result<f64> {
    let (hg, t) = h.deplete(gamma);
    let mut g = Resolvent::new(h, z)?;
    let mut gg = Resolvent::new(&hg, z)?;
    let n = h.dim();
    let zero = C64::new(0.0, 0.0);
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        cols.push(g.column_index(j)?.to_vec());
    }
    let scale = cols
        .iter()
        .flat_map(|c| c.iter().map(|v| v.norm()))
        .fold(f64::MIN_POSITIVE, f64::max);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let row = gg.row_index(i)?.to_vec();
        let mut w = vec![zero; n];
        for &(a, b, v) in &t {
            w[b] += row[a] * v;
        }
        for j in 0..n {
            let s: C64 = (0..n).map(|b| w[b] * cols[j][b]).sum();
            worst = worst.max((cols[j][i] - (row[j] - s)).norm() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{assemble, internal_bonds, sample_potential, Disorder, DisorderSample, HoppingKernel, OperatorEnsemble};
    use crate::lattice::BondSet;

    fn ens(dim: usize, hopping: HoppingKernel, lambda: f64, seed: u64) -> OperatorEnsemble {
        OperatorEnsemble::new(dim, hopping, Disorder::uniform(-1.0, 1.0).unwrap(), lambda, seed).unwrap()
    }

    #[test]
    fn scalar_inverse() {
        let e = ens(1, HoppingKernel::none(), 1.0, 0);
        let r = Region::interval(0, 0);
        let s = DisorderSample::with_values(&r, vec![2.0]).unwrap();
        let h = assemble(&e, &s, &BondSet::empty()).unwrap();
        let g = green(&h, SpectralParameter::new(0.0, 1.0), &Site::d1(0), &Site::d1(0)).unwrap();
        let want = 1.0 / C64::new(2.0, -1.0);
        assert!((g - want).norm() < 1e-15);
    }

    #[test]
    fn diagonal_operator_has_no_off_diagonal_green() {
        let e = ens(2, HoppingKernel::none(), 1.0, 3);
        let r = Region::centered_box(2, 2);
        let h = assemble(&e, &sample_potential(&e, &r, 0), &BondSet::empty()).unwrap();
        let mut res = Resolvent::new(&h, SpectralParameter::new(0.1, 0.0)).unwrap();
        assert_eq!(res.green(&Site::d2(0, 0), &Site::d2(1, 2)).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn chain_of_three_against_dense() {
        let e = ens(1, HoppingKernel::nearest_neighbor(), 1.0, 0);
        let r = Region::interval(1, 3);
        let s = DisorderSample::with_values(&r, vec![0.0; 3]).unwrap();
        let h = assemble(&e, &s, &BondSet::empty()).unwrap();
        let z = SpectralParameter::new(0.0, 1.0);
        let a = green(&h, z, &Site::d1(1), &Site::d1(3)).unwrap();
        let b = green_dense(&h, z, &Site::d1(1), &Site::d1(3)).unwrap();
        assert!((a - b).norm() < 1e-12 * b.norm());
        // det(H - i) = 3i and the (3,1) cofactor is 1
        assert!((a - 1.0 / C64::new(0.0, 3.0)).norm() < 1e-14);
    }

    #[test]
    fn conjugation_symmetry_with_flux() {
        let e = ens(2, HoppingKernel::nearest_neighbor().with_flux(0.7, crate::ensemble::Gauge::Landau), 2.0, 5);
        let r = Region::centered_box(2, 2);
        let h = assemble(&e, &sample_potential(&e, &r, 2), &BondSet::empty()).unwrap();
        let z = SpectralParameter::new(0.3, 0.2);
        let mut g = Resolvent::new(&h, z).unwrap();
        let mut gc = Resolvent::new(&h, z.conj()).unwrap();
        for x in r.sites() {
            for y in r.sites() {
                let a = gc.green(x, y).unwrap();
                let b = g.green(y, x).unwrap().conj();
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn krein_matches_direct() {
        let e = ens(1, HoppingKernel::nearest_neighbor(), 1.5, 11);
        let r = Region::interval(0, 7);
        for k in 0..5 {
            let s = sample_potential(&e, &r, k);
            let h = assemble(&e, &s, &BondSet::empty()).unwrap();
            let (x, y) = (Site::d1(2), Site::d1(5));
            let hat = s.with_value_at(&x, 0.0).unwrap().with_value_at(&y, 0.0).unwrap();
            let h_hat = assemble(&e, &hat, &BondSet::empty()).unwrap();
            let z = SpectralParameter::new(0.2, 0.0);
            let direct = green(&h, z, &x, &y).unwrap();
            let via = krein_2x2(&h_hat, &x, &y, z, s.value(&x).unwrap(), s.value(&y).unwrap(), e.lambda).unwrap();
            assert!((direct - via).norm() <= 1e-10 * direct.norm().max(1e-300));
            let hat1 = s.with_value_at(&x, 0.0).unwrap();
            let h1 = assemble(&e, &hat1, &BondSet::empty()).unwrap();
            let d = green(&h, z, &x, &x).unwrap();
            let v = krein_2x2(&h1, &x, &x, z, s.value(&x).unwrap(), 0.0, e.lambda).unwrap();
            assert!((d - v).norm() <= 1e-10 * d.norm());
        }
    }

    #[test]
    fn identities_hold_in_2d() {
        let e = ens(2, HoppingKernel::nearest_neighbor(), 1.0, 21);
        let r = Region::centered_box(2, 2);
        let h = assemble(&e, &sample_potential(&e, &r, 0), &BondSet::empty()).unwrap();
        let w = Region::centered_box(2, 1);
        let rep = identity_residuals(&h, &w, SpectralParameter::new(0.3, 0.01)).unwrap();
        assert!(rep.passes(1e-9, 1e-12), "{rep:?}");
        assert!(rep.pairs > 0);
    }

    #[test]
    fn full_depletion_first_order() {
        let e = ens(1, HoppingKernel::nearest_neighbor(), 1.0, 4);
        let r = Region::interval(0, 11);
        let h = assemble(&e, &sample_potential(&e, &r, 0), &BondSet::empty()).unwrap();
        let all = internal_bonds(&e, &r);
        let res = first_order_residual(&h, &all, SpectralParameter::new(0.1, 0.0)).unwrap();
        assert!(res <= 1e-9, "{res}");
    }

    #[test]
    fn depletion_block_decoupling() {
        let e = ens(1, HoppingKernel::nearest_neighbor(), 2.0, 8);
        let omega = Region::interval(-5, 5);
        let w = Region::interval(-1, 1);
        let s = sample_potential(&e, &omega, 3);
        let h = assemble(&e, &s, &BondSet::empty()).unwrap();
        let (hd, _) = h.deplete(&h.cut_set(&w));
        let rest = omega.minus(&w);
        let h_rest = assemble(&e, &s.restrict(&rest).unwrap(), &BondSet::empty()).unwrap();
        let z = SpectralParameter::new(0.4, 0.0);
        let mut a = Resolvent::new(&hd, z).unwrap();
        let mut b = Resolvent::new(&h_rest, z).unwrap();
        for x in rest.sites() {
            for y in rest.sites() {
                assert!((a.green(x, y).unwrap() - b.green(x, y).unwrap()).norm() < 1e-12);
            }
        }
    }
}
