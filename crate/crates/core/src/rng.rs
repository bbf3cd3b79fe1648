//! Counter-based random numbers.
//!
//! Every draw is a pure function of a key (master seed, sample index, site
//! coordinates, stream tag), so sampling order and thread scheduling never
//! change a result.

use crate::lattice::Site;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one 64-bit key.
pub fn hash_words(words: &[u64]) -> u64 {
    let mut h = mix64(GOLDEN ^ words.len() as u64);
    for w in words {
        h = mix64(h.wrapping_add(GOLDEN) ^ mix64(*w));
    }
    h
}

/// Maps 53 random bits to the open interval (0, 1).
#[inline]
pub fn to_open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Stream tags separate independent uses of the same (seed, index, site).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Potential = 1,
    Resample = 2,
    Search = 3,
}

/// Uniform (0,1) variate attached to one site of one disorder sample.
pub fn site_uniform(seed: u64, sample: u64, site: &Site, stream: Stream, extra: u64) -> f64 {
    let c = site.coords();
    let mut words = [0u64; 7];
    words[0] = seed;
    words[1] = sample;
    words[2] = stream as u64;
    words[3] = extra;
    for (k, v) in c.iter().enumerate() {
        words[4 + k] = *v as u64;
    }
    to_open_unit(hash_words(&words[..4 + c.len()]))
}

/// A sequential generator whose n-th output is `mix64(key + n·golden)`.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn keyed(words: &[u64]) -> Self {
        Self::new(hash_words(words))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    pub fn uniform(&mut self) -> f64 {
        to_open_unit(self.next_u64())
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}
