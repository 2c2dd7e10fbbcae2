//! Seeded random streams addressed by `(seed, path)`.
//!
//! A stream's generator is keyed by a SHA-256 digest of the seed and every
//! label on its path, so a substream's values never depend on which other
//! streams were consumed first or on which thread evaluates it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::float::Real;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Index(u64),
    Name(String),
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Name(s.to_owned())
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label::Name(s)
    }
}

impl From<u64> for Label {
    fn from(i: u64) -> Self {
        Label::Index(i)
    }
}

impl From<usize> for Label {
    fn from(i: usize) -> Self {
        Label::Index(i as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub path: Vec<Label>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            path: Vec::new(),
        }
    }

    /// Substream one level below this one.
    pub fn child(&self, label: impl Into<Label>) -> Self {
        let mut path = self.path.clone();
        path.push(label.into());
        RngStream {
            seed: self.seed,
            path,
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"spurcorr-stream-v1");
        h.update(self.seed.to_le_bytes());
        for label in &self.path {
            match label {
                Label::Index(i) => {
                    h.update([0u8]);
                    h.update(i.to_le_bytes());
                }
                Label::Name(s) => {
                    h.update([1u8]);
                    h.update((s.len() as u64).to_le_bytes());
                    h.update(s.as_bytes());
                }
            }
        }
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        key
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }
}

/// `len` i.i.d. standard normal draws from the stream.
pub fn gaussian_vector<F: Real>(rng: &RngStream, len: usize) -> Vec<F> {
    let mut g = rng.generator();
    (0..len)
        .map(|_| F::c(g.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// Fills `out` with standard normals from an already-open generator.
pub fn fill_gaussian<F: Real, R: Rng>(g: &mut R, out: &mut [F]) {
    for v in out.iter_mut() {
        *v = F::c(g.sample::<f64, _>(StandardNormal));
    }
}

/// Uniformly random permutation of `0..n` (Fisher-Yates).
pub fn permutation(rng: &RngStream, n: usize) -> Vec<usize> {
    let mut g = rng.generator();
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = g.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
