//! Finite regions of Z^d, bonds, cut-sets and the boundary-collapsed metric.
//!
//! All distances are ℓ∞ (`max_j |x_j - y_j|`). Regions are explicit site
//! lists in lexicographic order, so arbitrary subsets are first-class and the
//! site ↔ row-index map is deterministic.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 3;

/// A point of Z^d with `1 <= d <= 3`. Unused coordinates are kept at zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    coords: [i64; MAX_DIM],
    dim: u8,
}

impl Site {
    pub fn new(coords: &[i64]) -> Result<Self> {
        let d = coords.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::Dimension {
                expected: MAX_DIM,
                found: d,
            });
        }
        let mut c = [0; MAX_DIM];
        c[..d].copy_from_slice(coords);
        Ok(Self {
            coords: c,
            dim: d as u8,
        })
    }

    pub fn origin(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Self {
            coords: [0; MAX_DIM],
            dim: dim as u8,
        }
    }

    /// 1D shorthand.
    pub fn d1(x: i64) -> Self {
        Self::new(&[x]).unwrap()
    }

    /// 2D shorthand.
    pub fn d2(x: i64, y: i64) -> Self {
        Self::new(&[x, y]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords[..self.dim()]
    }

    pub fn coord(&self, axis: usize) -> i64 {
        self.coords[axis]
    }

    pub fn offset(&self, by: &Offset) -> Site {
        debug_assert_eq!(self.dim, by.dim);
        let mut c = self.coords;
        for (a, b) in c.iter_mut().zip(by.coords.iter()) {
            *a += b;
        }
        Site {
            coords: c,
            dim: self.dim,
        }
    }

    /// Displacement `other - self`.
    pub fn to(&self, other: &Site) -> Offset {
        let mut c = [0; MAX_DIM];
        for (k, v) in c.iter_mut().enumerate() {
            *v = other.coords[k] - self.coords[k];
        }
        Offset {
            coords: c,
            dim: self.dim,
        }
    }

    /// ℓ∞ distance.
    pub fn dist(&self, other: &Site) -> u64 {
        self.to(other).norm()
    }

    /// ℓ∞ norm of the site seen as a vector.
    pub fn norm(&self) -> u64 {
        self.coords.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords().iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl Serialize for Site {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Vec<i64> = Vec::deserialize(d)?;
        Site::new(&v).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Offset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Offset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Vec<i64> = Vec::deserialize(d)?;
        Offset::new(&v).map_err(serde::de::Error::custom)
    }
}

/// A lattice displacement vector.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Offset {
    coords: [i64; MAX_DIM],
    dim: u8,
}

impl Offset {
    pub fn new(coords: &[i64]) -> Result<Self> {
        let s = Site::new(coords)?;
        Ok(Self {
            coords: s.coords,
            dim: s.dim,
        })
    }

    pub fn zero(dim: usize) -> Self {
        let s = Site::origin(dim);
        Self {
            coords: s.coords,
            dim: s.dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords[..self.dim()]
    }

    pub fn coord(&self, axis: usize) -> i64 {
        self.coords[axis]
    }

    pub fn norm(&self) -> u64 {
        self.coords.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn neg(&self) -> Offset {
        let mut c = self.coords;
        for v in c.iter_mut() {
            *v = -*v;
        }
        Offset {
            coords: c,
            dim: self.dim,
        }
    }
}

/// All offsets `v` with `lo <= ‖v‖∞ <= hi`, lexicographic.
pub fn offsets_in_shell(dim: usize, lo: u64, hi: u64) -> Vec<Offset> {
    let r = hi as i64;
    let mut out = Vec::new();
    let mut cur = vec![-r; dim];
    loop {
        let o = Offset::new(&cur).unwrap();
        let n = o.norm();
        if n >= lo && n <= hi {
            out.push(o);
        }
        let mut k = dim;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if cur[k] < r {
                cur[k] += 1;
                for c in cur.iter_mut().skip(k + 1) {
                    *c = -r;
                }
                break;
            }
        }
    }
}

/// Offsets carrying nonzero hopping; symmetric under `v -> -v`, never contains 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Support {
    dim: usize,
    offsets: Vec<Offset>,
}

impl Support {
    pub fn new(dim: usize, mut offsets: Vec<Offset>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Dimension {
                expected: MAX_DIM,
                found: dim,
            });
        }
        for o in &offsets {
            if o.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: o.dim(),
                });
            }
            if o.norm() == 0 {
                return Err(Error::InvalidInput("hopping support contains the zero offset".into()));
            }
        }
        offsets.sort();
        offsets.dedup();
        for o in &offsets {
            if offsets.binary_search(&o.neg()).is_err() {
                return Err(Error::InvalidInput(format!(
                    "hopping support is not symmetric: {:?} present without its negative",
                    o.coords()
                )));
            }
        }
        Ok(Self { dim, offsets })
    }

    pub fn nearest_neighbor(dim: usize) -> Self {
        let offsets = offsets_in_shell(dim, 1, 1)
            .into_iter()
            .filter(|o| o.coords().iter().map(|c| c.abs()).sum::<i64>() == 1)
            .collect();
        Self::new(dim, offsets).unwrap()
    }

    /// Every offset with `0 < ‖v‖∞ <= range`.
    pub fn cube(dim: usize, range: u64) -> Self {
        Self::new(dim, offsets_in_shell(dim, 1, range)).unwrap()
    }

    /// No hopping at all.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            offsets: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    pub fn range(&self) -> u64 {
        self.offsets.iter().map(|o| o.norm()).max().unwrap_or(0)
    }
}

/// An ordered pair `<from, to>` of distinct sites.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bond {
    pub from: Site,
    pub to: Site,
}

impl Bond {
    pub fn new(from: Site, to: Site) -> Result<Self> {
        if from == to {
            return Err(Error::InvalidInput(format!("degenerate bond at {from}")));
        }
        if from.dim() != to.dim() {
            return Err(Error::Dimension {
                expected: from.dim(),
                found: to.dim(),
            });
        }
        Ok(Self { from, to })
    }

    pub fn reversed(&self) -> Bond {
        Bond {
            from: self.to,
            to: self.from,
        }
    }
}

impl fmt::Debug for Bond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.from, self.to)
    }
}

/// A finite set of bonds with sorted, duplicate-free enumeration.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BondSet {
    bonds: Vec<Bond>,
}

impl BondSet {
    pub fn new(bonds: impl IntoIterator<Item = Bond>) -> Self {
        let set: BTreeSet<Bond> = bonds.into_iter().collect();
        Self {
            bonds: set.into_iter().collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bonds.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Bond> {
        self.bonds.iter()
    }

    pub fn contains(&self, b: &Bond) -> bool {
        self.bonds.binary_search(b).is_ok()
    }

    /// True if the bond is present in either orientation.
    pub fn contains_unordered(&self, x: &Site, y: &Site) -> bool {
        self.contains(&Bond { from: *x, to: *y }) || self.contains(&Bond { from: *y, to: *x })
    }

    pub fn union(&self, other: &BondSet) -> BondSet {
        BondSet::new(self.bonds.iter().chain(other.bonds.iter()).copied())
    }
}

impl<'a> IntoIterator for &'a BondSet {
    type Item = &'a Bond;
    type IntoIter = std::slice::Iter<'a, Bond>;
    fn into_iter(self) -> Self::IntoIter {
        self.bonds.iter()
    }
}

/// A finite subset of Z^d with a bijective site ↔ index map.
/// Cloning is cheap; the site list and index are shared.
#[derive(Clone)]
pub struct Region {
    dim: usize,
    sites: Arc<Vec<Site>>,
    index: Arc<HashMap<Site, usize>>,
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Region")
            .field("dim", &self.dim)
            .field("len", &self.sites.len())
            .finish()
    }
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.sites == other.sites
    }
}

impl Region {
    /// Builds a region from explicit sites. Duplicates are rejected.
    pub fn from_sites(dim: usize, sites: impl IntoIterator<Item = Site>) -> Result<Self> {
        let mut v: Vec<Site> = sites.into_iter().collect();
        for s in &v {
            if s.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: s.dim(),
                });
            }
        }
        v.sort();
        let before = v.len();
        v.dedup();
        if v.len() != before {
            return Err(Error::InvalidInput("duplicate sites in region".into()));
        }
        Ok(Self::from_sorted(dim, v))
    }

    fn from_sorted(dim: usize, sites: Vec<Site>) -> Self {
        let index = sites.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Self {
            dim,
            sites: Arc::new(sites),
            index: Arc::new(index),
        }
    }

    /// `{center + y : ‖y‖∞ <= half_width}`.
    pub fn cube(center: Site, half_width: u64) -> Self {
        let dim = center.dim();
        let sites = offsets_in_shell(dim, 0, half_width)
            .iter()
            .map(|o| center.offset(o))
            .collect();
        Self::from_sorted(dim, sites)
    }

    /// `[-L, L]^d` around the origin.
    pub fn centered_box(dim: usize, half_width: u64) -> Self {
        Self::cube(Site::origin(dim), half_width)
    }

    /// The integer interval `[lo, hi]` in d = 1.
    pub fn interval(lo: i64, hi: i64) -> Self {
        Self::from_sorted(1, (lo..=hi).map(Site::d1).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> Site {
        self.sites[i]
    }

    pub fn index_of(&self, s: &Site) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn contains(&self, s: &Site) -> bool {
        self.index.contains_key(s)
    }

    pub fn require(&self, s: &Site) -> Result<usize> {
        self.index_of(s).ok_or(Error::SiteOutsideRegion(*s))
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.sites.iter().all(|s| other.contains(s))
    }

    /// `self \ other`.
    pub fn minus(&self, other: &Region) -> Region {
        Self::from_sorted(
            self.dim,
            self.sites.iter().filter(|s| !other.contains(s)).copied().collect(),
        )
    }

    pub fn intersect(&self, other: &Region) -> Region {
        Self::from_sorted(
            self.dim,
            self.sites.iter().filter(|s| other.contains(s)).copied().collect(),
        )
    }

    /// Largest ℓ∞ norm of a site.
    pub fn radius(&self) -> u64 {
        self.sites.iter().map(|s| s.norm()).max().unwrap_or(0)
    }

    /// Stable fingerprint of the site list (FNV-1a over coordinates).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.dim as u64);
        for s in self.sites.iter() {
            for c in s.coords() {
                eat(*c as u64);
            }
        }
        h
    }
}

/// `Γ(W)`: ordered bonds from `W` to its complement carried by the support.
pub fn cut_set(w: &Region, support: &Support) -> BondSet {
    let mut bonds = Vec::new();
    for u in w.sites() {
        for o in support.offsets() {
            let v = u.offset(o);
            if !w.contains(&v) {
                bonds.push(Bond { from: *u, to: v });
            }
        }
    }
    BondSet::new(bonds)
}

/// `W^+ = W ∪ {u' : T(u,u') != 0 for some u in W}`.
pub fn enlarge(w: &Region, support: &Support) -> Region {
    let mut set: BTreeSet<Site> = w.sites().iter().copied().collect();
    for u in w.sites() {
        for o in support.offsets() {
            set.insert(u.offset(o));
        }
    }
    Region::from_sorted(w.dim(), set.into_iter().collect())
}

/// Sites of `omega` with a hopping partner outside `omega`.
pub fn inner_boundary(omega: &Region, support: &Support) -> Vec<Site> {
    omega
        .sites()
        .iter()
        .filter(|u| support.offsets().iter().any(|o| !omega.contains(&u.offset(o))))
        .copied()
        .collect()
}

/// ℓ∞ distance from `x` to the nearest boundary site; `None` if the boundary is empty.
pub fn dist_to_boundary(boundary: &[Site], x: &Site) -> Option<u64> {
    boundary.iter().map(|b| b.dist(x)).min()
}

/// `dist_Ω(x, y) = min{‖x-y‖∞, dist(x,∂Ω) + dist(y,∂Ω)}`: the whole boundary
/// counts as a single point.
pub fn dist_omega(omega: &Region, support: &Support, x: &Site, y: &Site) -> Result<u64> {
    omega.require(x)?;
    omega.require(y)?;
    let direct = x.dist(y);
    let boundary = inner_boundary(omega, support);
    Ok(match (dist_to_boundary(&boundary, x), dist_to_boundary(&boundary, y)) {
        (Some(a), Some(b)) => direct.min(a + b),
        _ => direct,
    })
}

/// Precomputed boundary for repeated `dist_omega` queries on one region.
pub struct OmegaMetric<'a> {
    omega: &'a Region,
    to_boundary: Vec<Option<u64>>,
}

impl<'a> OmegaMetric<'a> {
    pub fn new(omega: &'a Region, support: &Support) -> Self {
        let boundary = inner_boundary(omega, support);
        let to_boundary = omega
            .sites()
            .iter()
            .map(|s| dist_to_boundary(&boundary, s))
            .collect();
        Self { omega, to_boundary }
    }

    pub fn dist(&self, x: &Site, y: &Site) -> Result<u64> {
        let i = self.omega.require(x)?;
        let j = self.omega.require(y)?;
        let direct = x.dist(y);
        Ok(match (self.to_boundary[i], self.to_boundary[j]) {
            (Some(a), Some(b)) => direct.min(a + b),
            _ => direct,
        })
    }
}

/// Region literal as found in config files: a box spec or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    Box {
        center: Vec<i64>,
        #[serde(rename = "L")]
        half_width: u64,
    },
    Sites {
        sites: Vec<Vec<i64>>,
    },
}

impl RegionSpec {
    pub fn build(&self, dim: usize) -> Result<Region> {
        match self {
            RegionSpec::Box { center, half_width } => {
                if center.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        found: center.len(),
                    });
                }
                Ok(Region::cube(Site::new(center)?, *half_width))
            }
            RegionSpec::Sites { sites } => {
                let parsed = sites.iter().map(|c| Site::new(c)).collect::<Result<Vec<_>>>()?;
                Region::from_sites(dim, parsed)
            }
        }
    }
}

/// `box_region` with an explicit dimension check.
pub fn box_region(dim: usize, center: Site, half_width: u64) -> Result<Region> {
    if center.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: center.dim(),
        });
    }
    Ok(Region::cube(center, half_width))
}
