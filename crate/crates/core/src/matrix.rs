//! Sparse Hermitian matrices over a region and a banded LU factorization.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Bond, BondSet, Region, Site};

pub type C64 = Complex64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Largest acceptable 1-norm condition estimate.
pub const MAX_CONDITION: f64 = 1e14;
/// Largest acceptable relative residual of a solve.
pub const MAX_RESIDUAL: f64 = 1e-10;

/// A Hermitian operator on `ℓ²(region)` in compressed sparse row form.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    region: Region,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Hamiltonian {
    /// Builds from per-row `(column, value)` lists; columns are sorted and
    /// duplicate entries summed.
    pub fn from_rows(region: Region, rows: Vec<Vec<(usize, C64)>>) -> Result<Self> {
        let n = region.len();
        if rows.len() != n {
            return Err(Error::InvalidInput(format!("{} rows for {} sites", rows.len(), n)));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                if c >= n {
                    return Err(Error::InvalidInput(format!("column {c} out of range {n}")));
                }
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            region,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn dim(&self) -> usize {
        self.region.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[a..b].binary_search(&j) {
            Ok(k) => self.vals[a + k],
            Err(_) => ZERO,
        }
    }

    pub fn entry(&self, x: &Site, y: &Site) -> Result<C64> {
        Ok(self.get(self.region.require(x)?, self.region.require(y)?))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i).re).collect()
    }

    /// Lower and upper bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for i in 0..self.dim() {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    /// `y = (H - shift) x`.
    pub fn apply_shifted(&self, x: &[C64], shift: C64) -> Vec<C64> {
        (0..self.dim())
            .map(|i| {
                let mut acc = -shift * x[i];
                for (j, v) in self.row(i) {
                    acc += v * x[j];
                }
                acc
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::from_element(n, n, ZERO);
        for i in 0..n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Exact Hermiticity check (bitwise equality with the conjugate transpose).
    pub fn is_hermitian(&self) -> bool {
        (0..self.dim()).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v.conj()))
    }

    /// Max row-sum norm of `H - shift`.
    pub fn norm_inf_shifted(&self, shift: C64) -> f64 {
        (0..self.dim())
            .map(|i| {
                let mut s = 0.0;
                let mut diag = false;
                for (j, v) in self.row(i) {
                    if j == i {
                        s += (v - shift).norm();
                        diag = true;
                    } else {
                        s += v.norm();
                    }
                }
                if !diag {
                    s += shift.norm();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// Splits `H = H^(Γ) + T^(Γ)`: returns the depleted matrix and the removed
    /// entries `(i, j, value)` (both orientations). Bonds leaving the region
    /// carry no entry and are ignored.
    pub fn deplete(&self, gamma: &BondSet) -> (Hamiltonian, Vec<(usize, usize, C64)>) {
        let mut removed = Vec::new();
        let mut keep = vec![true; self.nnz()];
        for i in 0..self.dim() {
            let x = self.region.site(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                if j != i && gamma.contains_unordered(&x, &self.region.site(j)) {
                    keep[k] = false;
                    removed.push((i, j, self.vals[k]));
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(self.dim() + 1);
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        row_ptr.push(0);
        for i in 0..self.dim() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if keep[k] {
                    cols.push(self.cols[k]);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr.push(cols.len());
        }
        let h = Hamiltonian {
            region: self.region.clone(),
            row_ptr,
            cols,
            vals,
        };
        (h, removed)
    }

    /// Bonds `<u, u'>` with `u ∈ w`, `u' ∉ w` carrying a nonzero entry.
    pub fn cut_set(&self, w: &Region) -> BondSet {
        let mut bonds = Vec::new();
        for u in w.sites() {
            let Some(i) = self.region.index_of(u) else { continue };
            for (j, v) in self.row(i) {
                let u2 = self.region.site(j);
                if v != ZERO && !w.contains(&u2) {
                    bonds.push(Bond { from: *u, to: u2 });
                }
            }
        }
        BondSet::new(bonds)
    }

    /// `w` together with every site of the region coupled to it.
    pub fn enlarge(&self, w: &Region) -> Region {
        let mut sites: Vec<Site> = w.sites().to_vec();
        for b in self.cut_set(w).iter() {
            sites.push(b.to);
        }
        sites.sort();
        sites.dedup();
        Region::from_sites(w.dim(), sites).expect("deduplicated")
    }

    /// Entries of the Hermitian matrix as a dense array of `f64` pairs, for
    /// bitwise comparisons.
    pub fn bits(&self) -> Vec<(usize, usize, u64, u64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.dim() {
            for (j, v) in self.row(i) {
                if v != ZERO {
                    out.push((i, j, v.re.to_bits(), v.im.to_bits()));
                }
            }
        }
        out
    }
}

/// LU factorization with partial pivoting of a banded complex matrix.
///
/// Row `i` of the working array stores columns `i - kl ..= i + kl + ku`; the
/// extra `kl` columns hold fill-in from row interchanges.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<C64>,
    lower: Vec<C64>,
    piv: Vec<usize>,
    norm1: f64,
}

impl BandLu {
    /// Factorizes `H - shift`.
    pub fn factor(h: &Hamiltonian, shift: C64) -> Result<Self> {
        let n = h.dim();
        let (kl, ku) = h.bandwidth();
        let width = 2 * kl + ku + 1;
        let mut a = vec![ZERO; n * width];
        let mut colsum = vec![0.0; n];
        for i in 0..n {
            let mut has_diag = false;
            for (j, v) in h.row(i) {
                let v = if j == i {
                    has_diag = true;
                    v - shift
                } else {
                    v
                };
                a[i * width + j + kl - i] = v;
                colsum[j] += v.norm();
            }
            if !has_diag {
                a[i * width + kl] = -shift;
                colsum[i] += shift.norm();
            }
        }
        let norm1 = colsum.iter().copied().fold(0.0, f64::max);
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            a,
            lower: vec![ZERO; n * kl.max(1)],
            piv: vec![0; n],
            norm1,
        };
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // valid for i - kl <= j <= i + kl + ku
        i * self.width + j + self.kl - i
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.a[self.idx(k, k)].norm();
            for r in k + 1..=last_row {
                let v = self.a[self.idx(r, k)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            self.piv[k] = p;
            if best == 0.0 {
                return Err(Error::IllConditioned { condition: f64::INFINITY });
            }
            if p != k {
                for c in k..=last_col {
                    let (ik, ip) = (self.idx(k, c), self.idx(p, c));
                    self.a.swap(ik, ip);
                }
            }
            let pivot = self.a[self.idx(k, k)];
            for r in k + 1..=last_row {
                let irk = self.idx(r, k);
                let m = self.a[irk] / pivot;
                self.a[irk] = ZERO;
                self.lower[k * kl + (r - k - 1)] = m;
                if m == ZERO {
                    continue;
                }
                for c in k + 1..=last_col {
                    let ukc = self.a[self.idx(k, c)];
                    let irc = self.idx(r, c);
                    self.a[irc] -= m * ukc;
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `(H - shift) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != ZERO {
                for r in k + 1..=(k + kl).min(n - 1) {
                    b[r] -= self.lower[k * kl + (r - k - 1)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for c in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.a[self.idx(k, c)] * b[c];
            }
            b[k] = acc / self.a[self.idx(k, k)];
        }
    }

    /// Solves `(H - shift)^T x = b` in place.
    pub fn solve_transpose_in_place(&self, b: &mut [C64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        // U^T w = b
        for k in 0..n {
            let mut acc = b[k];
            let first = k.saturating_sub(kl + ku);
            for c in first..k {
                acc -= self.a[self.idx(c, k)] * b[c];
            }
            b[k] = acc / self.a[self.idx(k, k)];
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                acc -= self.lower[k * kl + (r - k - 1)] * b[r];
            }
            b[k] = acc;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }

    fn solve_adjoint_in_place(&self, b: &mut [C64]) {
        for v in b.iter_mut() {
            *v = v.conj();
        }
        self.solve_transpose_in_place(b);
        for v in b.iter_mut() {
            *v = v.conj();
        }
    }

    /// `‖H - shift‖₁`.
    pub fn norm1(&self) -> f64 {
        self.norm1
    }

    /// Hager–Higham estimate of `‖(H - shift)^{-1}‖₁`.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        let norm1 = |v: &[C64]| v.iter().map(|c| c.norm()).sum::<f64>();
        let mut x = vec![C64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for iter in 0..5 {
            self.solve_in_place(&mut x);
            let e = norm1(&x);
            if iter > 0 && e <= est {
                break;
            }
            est = e;
            for v in x.iter_mut() {
                let a = v.norm();
                *v = if a > 0.0 { *v / a } else { C64::new(1.0, 0.0) };
            }
            self.solve_adjoint_in_place(&mut x);
            let (j, zmax) = x
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.norm()))
                .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if j == last_j || !zmax.is_finite() {
                break;
            }
            last_j = j;
            x = vec![ZERO; n];
            x[j] = C64::new(1.0, 0.0);
        }
        // alternating test vector guards against the classic counterexamples
        let mut alt: Vec<C64> = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                C64::new(sign * (1.0 + t), 0.0)
            })
            .collect();
        self.solve_in_place(&mut alt);
        let alt_est = 2.0 * norm1(&alt) / (3.0 * n as f64);
        est.max(alt_est)
    }

    /// 1-norm condition estimate of `H - shift`.
    pub fn condition_estimate(&self) -> f64 {
        self.norm1 * self.inverse_norm1_estimate()
    }
}

/// Dense inverse of `H - shift`, the cross-checking oracle.
pub fn dense_inverse(h: &Hamiltonian, shift: C64) -> Result<DMatrix<C64>> {
    let n = h.dim();
    let mut m = h.to_dense();
    for i in 0..n {
        m[(i, i)] -= shift;
    }
    m.try_inverse()
        .ok_or(Error::IllConditioned { condition: f64::INFINITY })
}

/// `‖r‖∞ / ‖b‖∞` with `r = (H - shift) x - b`.
pub fn relative_residual(h: &Hamiltonian, shift: C64, x: &[C64], b: &[C64]) -> f64 {
    let ax = h.apply_shifted(x, shift);
    let r = ax
        .iter()
        .zip(b)
        .map(|(u, v)| (u - v).norm())
        .fold(0.0, f64::max);
    let bn = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if bn > 0.0 {
        r / bn
    } else {
        r
    }
}
