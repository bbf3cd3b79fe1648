//! Adaptive Gauss–Kronrod (7/15) quadrature with algebraic-singularity handling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-12,
            rel: 1e-8,
            max_intervals: 2000,
        }
    }
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self {
            rel,
            ..Self::default()
        }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let val = kron * h;
    let err = ((kron - gauss) * h).abs();
    (val, err)
}

struct Piece {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.partial_cmp(&o.err).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive integration of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadResult> {
    integrate_pieces(&f, &[(a, b)], tol)
}

fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, init: &[(f64, f64)], tol: Tolerance) -> Result<QuadResult> {
    let mut heap = BinaryHeap::new();
    let (mut total, mut err) = (0.0, 0.0);
    for &(a, b) in init {
        if b <= a {
            continue;
        }
        let (v, e) = gk15(f, a, b);
        total += v;
        err += e;
        heap.push(Piece { a, b, val: v, err: e });
    }
    let mut count = heap.len();
    loop {
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{}, {}]",
                init.first().map_or(0.0, |p| p.0),
                init.last().map_or(0.0, |p| p.1)
            )));
        }
        if err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(QuadResult {
                value: total,
                error: err,
                intervals: count,
            });
        }
        if count >= tol.max_intervals {
            return Err(Error::Quadrature(format!(
                "interval budget exhausted: value {total:.6e}, error {err:.3e}"
            )));
        }
        let Some(p) = heap.pop() else {
            return Ok(QuadResult {
                value: total,
                error: err,
                intervals: count,
            });
        };
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // interval cannot be split further in f64
            return Err(Error::Quadrature(format!(
                "interval collapsed near {m:.6e}: error {err:.3e}"
            )));
        }
        let (v1, e1) = gk15(f, p.a, m);
        let (v2, e2) = gk15(f, m, p.b);
        total += v1 + v2 - p.val;
        err += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: m, val: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, val: v2, err: e2 });
        count += 1;
    }
}

/// An interior or endpoint singularity `|v - at|^{-alpha}` (alpha < 1).
/// With `alpha == 0` the point is only a breakpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Singularity {
    pub at: f64,
    pub alpha: f64,
}

impl Singularity {
    pub fn power(at: f64, alpha: f64) -> Self {
        Self { at, alpha }
    }

    pub fn breakpoint(at: f64) -> Self {
        Self { at, alpha: 0.0 }
    }
}

/// Integrates `f` over `[a, b]` where `f` may blow up like `|v - p|^{-alpha}`
/// at the listed points. Near each singular point the substitution
/// `v = p ± w^{1/(1-alpha)}` turns the integrand bounded.
pub fn integrate_singular<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    points: &[Singularity],
    tol: Tolerance,
) -> Result<QuadResult> {
    let mut pts: Vec<Singularity> = points
        .iter()
        .filter(|p| p.at >= a && p.at <= b && p.at.is_finite())
        .copied()
        .collect();
    for p in &pts {
        if p.alpha >= 1.0 {
            return Err(Error::Quadrature(format!(
                "non-integrable singularity |v-{}|^-{}",
                p.at, p.alpha
            )));
        }
    }
    pts.push(Singularity::breakpoint(a));
    pts.push(Singularity::breakpoint(b));
    pts.sort_by(|x, y| x.at.total_cmp(&y.at));
    // merge coincident points keeping the strongest exponent
    let mut merged: Vec<Singularity> = Vec::with_capacity(pts.len());
    for p in pts {
        match merged.last_mut() {
            Some(last) if last.at == p.at => last.alpha = last.alpha.max(p.alpha),
            _ => merged.push(p),
        }
    }

    let mut total = QuadResult {
        value: 0.0,
        error: 0.0,
        intervals: 0,
    };
    let mut add = |r: QuadResult| {
        total.value += r.value;
        total.error += r.error;
        total.intervals += r.intervals;
    };
    // Each half-segment is integrated separately; the tolerance is shared out.
    let segs = (merged.len() - 1).max(1) * 2;
    let part = Tolerance {
        abs: tol.abs / segs as f64,
        rel: tol.rel,
        max_intervals: tol.max_intervals,
    };
    for win in merged.windows(2) {
        let (l, r) = (win[0], win[1]);
        if r.at <= l.at {
            continue;
        }
        let m = 0.5 * (l.at + r.at);
        add(half_segment(&f, l.at, m, l.alpha, true, part)?);
        add(half_segment(&f, m, r.at, r.alpha, false, part)?);
    }
    Ok(total)
}

fn half_segment<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    alpha: f64,
    singular_at_lo: bool,
    tol: Tolerance,
) -> Result<QuadResult> {
    if alpha <= 0.0 {
        return integrate_pieces(f, &[(lo, hi)], tol);
    }
    let k = 1.0 / (1.0 - alpha);
    let h = hi - lo;
    let wmax = h.powf(1.0 / k);
    let g = |w: f64| {
        let d = w.powf(k);
        let v = if singular_at_lo { lo + d } else { hi - d };
        f(v) * k * w.powf(k - 1.0)
    };
    integrate_pieces(&g, &[(0.0, wmax)], tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_integrals() {
        let r = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, Tolerance::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        let r = integrate(|x: f64| (-x * x).exp(), -8.0, 8.0, Tolerance::default()).unwrap();
        assert!((r.value - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn algebraic_singularities() {
        // ∫_{-1}^{1} |v|^{-1/2} dv = 4
        let r = integrate_singular(
            |v: f64| v.abs().powf(-0.5),
            -1.0,
            1.0,
            &[Singularity::power(0.0, 0.5)],
            Tolerance::relative(1e-10),
        )
        .unwrap();
        assert!((r.value - 4.0).abs() < 1e-9, "{}", r.value);

        // singular endpoint: ∫_0^1 v^{-0.9} dv = 10
        let r = integrate_singular(
            |v: f64| v.powf(-0.9),
            0.0,
            1.0,
            &[Singularity::power(0.0, 0.9)],
            Tolerance::relative(1e-10),
        )
        .unwrap();
        assert!((r.value - 10.0).abs() < 1e-8, "{}", r.value);

        // two interior singular points
        let f = |v: f64| (v - 0.3).abs().powf(-0.25) * (v + 0.4).abs().powf(-0.25);
        let r = integrate_singular(
            f,
            -1.0,
            1.0,
            &[Singularity::power(0.3, 0.25), Singularity::power(-0.4, 0.25)],
            Tolerance::relative(1e-9),
        )
        .unwrap();
        let fine = integrate_singular(
            f,
            -1.0,
            1.0,
            &[Singularity::power(0.3, 0.25), Singularity::power(-0.4, 0.25)],
            Tolerance::relative(1e-12),
        )
        .unwrap();
        assert!((r.value - fine.value).abs() < 1e-8 * fine.value);
    }

    #[test]
    fn rejects_non_integrable() {
        assert!(integrate_singular(|v: f64| 1.0 / v.abs(), -1.0, 1.0, &[Singularity::power(0.0, 1.0)], Tolerance::default()).is_err());
    }
}
