//! The random operator `H = T + U_per + λV` on finite regions.

mod disorder;
mod hopping;

pub use disorder::{uniform_inverse_moment, Disorder, DisorderLaw, DisorderSpec};
pub use hopping::{shell_count, tempered_series, Gauge, HoppingKernel, HoppingKind, TRUNCATION_TOL};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BondSet, Region, Site};
use crate::matrix::Hamiltonian;
use crate::rng::{site_uniform, Stream};

/// A periodic background potential given on one period cell, row-major with
/// the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPotential {
    pub period: Vec<u64>,
    pub values: Vec<f64>,
}

impl PeriodicPotential {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.period.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: self.period.len(),
            });
        }
        if self.period.iter().any(|p| *p == 0) {
            return Err(Error::InvalidInput("periods must be positive".into()));
        }
        let cell: u64 = self.period.iter().product();
        if cell as usize != self.values.len() {
            return Err(Error::InvalidInput(format!(
                "periodic table has {} values, cell has {cell} sites",
                self.values.len()
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: &Site) -> f64 {
        let mut idx = 0usize;
        for (axis, p) in self.period.iter().enumerate() {
            let r = x.coord(axis).rem_euclid(*p as i64) as usize;
            idx = idx * (*p as usize) + r;
        }
        self.values[idx]
    }
}

/// The distribution of the random operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorEnsemble {
    pub dim: usize,
    pub hopping: HoppingKernel,
    pub disorder: Disorder,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_per: Option<PeriodicPotential>,
    #[serde(default)]
    pub master_seed: u64,
}

impl OperatorEnsemble {
    pub fn new(dim: usize, hopping: HoppingKernel, disorder: Disorder, lambda: f64, master_seed: u64) -> Result<Self> {
        let e = Self {
            dim,
            hopping,
            disorder,
            lambda,
            u_per: None,
            master_seed,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn with_periodic(mut self, u: PeriodicPotential) -> Result<Self> {
        u.validate(self.dim)?;
        self.u_per = Some(u);
        Ok(self)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut e = self.clone();
        e.lambda = lambda;
        e.validate()?;
        Ok(e)
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        let mut e = self.clone();
        e.master_seed = master_seed;
        e
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidInput(format!("dimension {} not in 1..=3", self.dim)));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {}", self.lambda)));
        }
        self.hopping.validate(self.dim)?;
        if let Some(u) = &self.u_per {
            u.validate(self.dim)?;
        }
        Ok(())
    }

    pub fn u_per(&self, x: &Site) -> f64 {
        self.u_per.as_ref().map_or(0.0, |u| u.value(x))
    }

    /// The potential value at `x` for sample `index`.
    pub fn potential_at(&self, index: u64, x: &Site) -> f64 {
        let u = site_uniform(self.master_seed, index, x, Stream::Potential, 0);
        self.disorder.quantile(u)
    }

    pub fn fingerprint(&self) -> String {
        format!(
            "d={};{};{};lambda={:e};uper={};seed={}",
            self.dim,
            self.hopping.fingerprint(),
            self.disorder.fingerprint(),
            self.lambda,
            self.u_per.as_ref().map_or("none".into(), |u| format!("{:?}{:?}", u.period, u.values)),
            self.master_seed
        )
    }
}

/// One realization of `{V(x)}` on a region, aligned with the region's index order.
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderSample {
    pub region: Region,
    pub values: Vec<f64>,
    pub sample_index: u64,
}

impl DisorderSample {
    pub fn with_values(region: &Region, values: Vec<f64>) -> Result<Self> {
        if values.len() != region.len() {
            return Err(Error::InvalidInput(format!(
                "{} potential values for {} sites",
                values.len(),
                region.len()
            )));
        }
        Ok(Self {
            region: region.clone(),
            values,
            sample_index: 0,
        })
    }

    pub fn value(&self, x: &Site) -> Result<f64> {
        Ok(self.values[self.region.require(x)?])
    }

    /// Copy with the potential at `x` replaced.
    pub fn with_value_at(&self, x: &Site, v: f64) -> Result<Self> {
        let i = self.region.require(x)?;
        let mut out = self.clone();
        out.values[i] = v;
        Ok(out)
    }

    /// Restriction to a subregion.
    pub fn restrict(&self, sub: &Region) -> Result<Self> {
        let values = sub
            .sites()
            .iter()
            .map(|s| self.value(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            region: sub.clone(),
            values,
            sample_index: self.sample_index,
        })
    }
}

/// Draws sample `index`; each value depends only on (seed, index, site).
pub fn sample_potential(ens: &OperatorEnsemble, region: &Region, index: u64) -> DisorderSample {
    let values = region.sites().iter().map(|x| ens.potential_at(index, x)).collect();
    DisorderSample {
        region: region.clone(),
        values,
        sample_index: index,
    }
}

/// The matrix of `H` on `sample.region` with hopping across `depletion`
/// (both orientations) removed.
pub fn assemble(ens: &OperatorEnsemble, sample: &DisorderSample, depletion: &BondSet) -> Result<Hamiltonian> {
    let region = &sample.region;
    if region.dim() != ens.dim {
        return Err(Error::Dimension {
            expected: ens.dim,
            found: region.dim(),
        });
    }
    for b in depletion.iter() {
        if !region.contains(&b.from) && !region.contains(&b.to) {
            return Err(Error::InvalidInput(format!(
                "depleted bond {:?} -> {:?} has no endpoint in the region",
                b.from, b.to
            )));
        }
    }
    let support = ens.hopping.support(ens.dim);
    let mut rows = Vec::with_capacity(region.len());
    for (i, x) in region.sites().iter().enumerate() {
        let mut row = Vec::with_capacity(support.offsets().len() + 1);
        let diag = ens.u_per(x) + ens.lambda * sample.values[i];
        row.push((i, Complex64::new(diag, 0.0)));
        for o in support.offsets() {
            let y = x.offset(o);
            let Some(j) = region.index_of(&y) else { continue };
            if depletion.contains_unordered(x, &y) {
                continue;
            }
            let t = ens.hopping.element(x, &y);
            if t != Complex64::new(0.0, 0.0) {
                row.push((j, t));
            }
        }
        rows.push(row);
    }
    Hamiltonian::from_rows(region.clone(), rows)
}

/// All bonds with both endpoints in `region` that carry hopping.
pub fn internal_bonds(ens: &OperatorEnsemble, region: &Region) -> BondSet {
    let support = ens.hopping.support(ens.dim);
    let mut bonds = Vec::new();
    for x in region.sites() {
        for o in support.offsets() {
            let y = x.offset(o);
            if region.contains(&y) {
                bonds.push(crate::lattice::Bond { from: *x, to: y });
            }
        }
    }
    BondSet::new(bonds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{cut_set, Bond};

    fn chain(lambda: f64, hopping: HoppingKernel) -> OperatorEnsemble {
        OperatorEnsemble::new(1, hopping, Disorder::uniform(-1.0, 1.0).unwrap(), lambda, 7).unwrap()
    }

    #[test]
    fn sampling_is_deterministic_and_varies_with_index() {
        let e = chain(1.0, HoppingKernel::nearest_neighbor());
        let r = Region::interval(-5, 5);
        let a = sample_potential(&e, &r, 3);
        let b = sample_potential(&e, &r, 3);
        assert_eq!(a, b);
        let c = sample_potential(&e, &r, 4);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn uniform_sample_mean() {
        let e = chain(1.0, HoppingKernel::nearest_neighbor());
        let r = Region::interval(0, 99_999);
        let s = sample_potential(&e, &r, 0);
        let mean = s.values.iter().sum::<f64>() / s.values.len() as f64;
        let sigma = 1.0 / (3.0f64 * 1e5).sqrt();
        assert!(mean.abs() < 4.0 * sigma, "{mean}");
    }

    #[test]
    fn chain_of_three_is_tridiagonal() {
        let e = chain(1.0, HoppingKernel::nearest_neighbor());
        let r = Region::interval(0, 2);
        let s = DisorderSample::with_values(&r, vec![0.0; 3]).unwrap();
        let h = assemble(&e, &s, &BondSet::empty()).unwrap();
        let d = h.to_dense();
        for i in 0..3usize {
            for j in 0..3 {
                let want = if i.abs_diff(j) == 1 { 1.0 } else { 0.0 };
                assert_eq!(d[(i, j)], Complex64::new(want, 0.0));
            }
        }
    }

    #[test]
    fn full_depletion_is_diagonal_and_idempotent() {
        let e = chain(2.0, HoppingKernel::nearest_neighbor());
        let r = Region::interval(0, 4);
        let s = sample_potential(&e, &r, 1);
        let all = internal_bonds(&e, &r);
        let h = assemble(&e, &s, &all).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let v = h.get(i, j);
                if i == j {
                    assert_eq!(v.re, 2.0 * s.values[i]);
                } else {
                    assert_eq!(v, Complex64::new(0.0, 0.0));
                }
            }
        }
        let twice = assemble(&e, &s, &all.union(&all)).unwrap();
        assert_eq!(h.bits(), twice.bits());
    }

    #[test]
    fn depletion_outside_region_rejected() {
        let e = chain(1.0, HoppingKernel::nearest_neighbor());
        let r = Region::interval(0, 2);
        let s = sample_potential(&e, &r, 0);
        let far = BondSet::new([Bond::new(Site::d1(10), Site::d1(11)).unwrap()]);
        assert!(assemble(&e, &s, &far).is_err());
        // a cut-set bond has one endpoint inside and is accepted
        let gamma = cut_set(&r, &e.hopping.support(1));
        assert!(assemble(&e, &s, &gamma).is_ok());
    }

    #[test]
    fn periodic_potential_lookup() {
        let u = PeriodicPotential {
            period: vec![2, 3],
            values: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
        };
        u.validate(2).unwrap();
        assert_eq!(u.value(&Site::d2(0, 0)), 0.0);
        assert_eq!(u.value(&Site::d2(1, 2)), 5.0);
        assert_eq!(u.value(&Site::d2(-1, -1)), 5.0);
        assert_eq!(u.value(&Site::d2(2, 4)), 1.0);
    }
}
