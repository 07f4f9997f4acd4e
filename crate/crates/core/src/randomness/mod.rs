//! Reproducible hierarchical random streams and the primitive samplers.
//!
//! Every random quantity in the crate is drawn from a [`Stream`] whose state is
//! a pure function of its lineage `(root seed, word, tag)`. The derivation is
//!
//! ```text
//! key  = SHA-256( "bcrt/stream/v1" || 0x00
//!                 || root as u64 LE
//!                 || len(word) as u32 LE || word letters (one byte each, 1..=3)
//!                 || len(tag)  as u32 LE || tag bytes (UTF-8) )
//! rng  = ChaCha8 seeded with key
//! ```
//!
//! so a subtree addressed by a word can be re-instantiated at any time, on any
//! thread, and reproduce the same randomness.

mod shape;

pub use shape::{sample_uniform_shape, Split, TreeShape};

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const STREAM_DOMAIN: &[u8] = b"bcrt/stream/v1";
const SEED_DOMAIN: &[u8] = b"bcrt/seed/v1";

/// A word on the alphabet `{1, 2, 3}`; the empty word addresses the root.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordPath(Vec<u8>);

impl WordPath {
    pub fn root() -> Self {
        WordPath(Vec::new())
    }

    pub fn new(letters: Vec<u8>) -> Result<Self> {
        if let Some(bad) = letters.iter().find(|&&l| !(1..=3).contains(&l)) {
            return Err(Error::invalid("word", format!("letter {bad} not in {{1,2,3}}")));
        }
        Ok(WordPath(letters))
    }

    /// Parses a word written as a digit string such as `"312"`. The empty
    /// string and `"∅"` both denote the root.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "∅" {
            return Ok(Self::root());
        }
        let letters = s
            .chars()
            .map(|c| match c {
                '1' => Ok(1),
                '2' => Ok(2),
                '3' => Ok(3),
                other => Err(Error::invalid("word", format!("letter {other:?} not in {{1,2,3}}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(WordPath(letters))
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The word `self k`.
    pub fn child(&self, k: u8) -> Self {
        debug_assert!((1..=3).contains(&k));
        let mut letters = Vec::with_capacity(self.0.len() + 1);
        letters.extend_from_slice(&self.0);
        letters.push(k);
        WordPath(letters)
    }

    /// The prefix made of the first `m` letters.
    pub fn prefix(&self, m: usize) -> Self {
        WordPath(self.0[..m.min(self.0.len())].to_vec())
    }

    pub fn concat(&self, other: &WordPath) -> Self {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&other.0);
        WordPath(letters)
    }

    pub fn is_prefix_of(&self, other: &WordPath) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl fmt::Display for WordPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("∅");
        }
        for l in &self.0 {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for WordPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WordPath({self})")
    }
}

impl Serialize for WordPath {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let text: String = self.0.iter().map(|l| char::from(b'0' + l)).collect();
        s.serialize_str(&text)
    }
}

impl<'de> Deserialize<'de> for WordPath {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        WordPath::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Where a stream came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lineage {
    pub root: u64,
    pub word: WordPath,
    pub tag: String,
}

/// A single-owner deterministic random stream.
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
    lineage: Lineage,
}

impl Stream {
    /// Derives the stream with lineage `(root, word, tag)`.
    pub fn derive(root: u64, word: &WordPath, tag: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(STREAM_DOMAIN);
        hasher.update([0u8]);
        hasher.update(root.to_le_bytes());
        hasher.update((word.len() as u32).to_le_bytes());
        hasher.update(word.letters());
        hasher.update((tag.len() as u32).to_le_bytes());
        hasher.update(tag.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Stream {
            rng: ChaCha8Rng::from_seed(key),
            lineage: Lineage { root, word: word.clone(), tag: tag.to_owned() },
        }
    }

    /// Shorthand for a root-word stream.
    pub fn from_seed(root: u64, tag: &str) -> Self {
        Self::derive(root, &WordPath::root(), tag)
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    /// Splits off an independent stream. The child's root seed is drawn from
    /// `self`, so the result is still a pure function of the parent lineage.
    pub fn fork(&mut self, tag: &str) -> Stream {
        let root = self.rng.next_u64();
        Stream::derive(root, &WordPath::root(), tag)
    }

    /// A uniform draw from the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        uniform_open(self)
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Derives a fresh 64-bit root seed for replica `index` of experiment `tag`.
pub fn replica_seed(root: u64, tag: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(SEED_DOMAIN);
    hasher.update([0u8]);
    hasher.update(root.to_le_bytes());
    hasher.update((tag.len() as u32).to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// A uniform draw from (0, 1), never exactly 0 or 1.
pub fn uniform_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// A point of the 2-simplex: three nonnegative masses summing to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Simplex3([f64; 3]);

impl Simplex3 {
    /// Normalizes nonnegative weights with positive sum. The third coordinate
    /// is computed as `1 - (d1 + d2)`, which makes the left-to-right sum
    /// exactly one in binary64.
    pub fn from_weights(w: [f64; 3]) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("delta", format!("weights must be finite and nonnegative, got {w:?}")));
        }
        let total = w[0] + w[1] + w[2];
        if total <= 0.0 {
            return Err(Error::invalid("delta", "weights sum to zero"));
        }
        let d1 = w[0] / total;
        let d2 = w[1] / total;
        let d3 = (1.0 - (d1 + d2)).max(0.0);
        Ok(Simplex3([d1, d2, d3]))
    }

    /// Accepts a triple that already sums to one within `1e-12`, then
    /// renormalizes it.
    pub fn new(d: [f64; 3]) -> Result<Self> {
        let total = d[0] + d[1] + d[2];
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("delta", format!("masses sum to {total}, expected 1")));
        }
        Self::from_weights(d)
    }

    pub fn masses(&self) -> [f64; 3] {
        self.0
    }

    /// Mass of child `k ∈ {1,2,3}`.
    pub fn mass(&self, k: u8) -> f64 {
        self.0[usize::from(k) - 1]
    }

    /// Nested-partition letter rule: child 1 if `u ≤ δ1`, child 2 if
    /// `δ1 < u ≤ δ1 + δ2`, child 3 otherwise. For `u ∈ (0, 1)` a
    /// zero-mass child is never selected.
    pub fn letter(&self, u: f64) -> u8 {
        let [d1, d2, _] = self.0;
        if u <= d1 {
            1
        } else if u <= d1 + d2 {
            2
        } else {
            3
        }
    }
}

impl<'de> Deserialize<'de> for Simplex3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = <[f64; 3]>::deserialize(d)?;
        Simplex3::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Gamma(1/2, 1) as `Z²/2` with `Z` standard normal.
pub fn sample_gamma_half<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    0.5 * z * z
}

/// Dir(1/2, 1/2, 1/2) from three normalized Gamma(1/2) draws.
pub fn sample_dirichlet_half<R: Rng + ?Sized>(rng: &mut R) -> Simplex3 {
    loop {
        let g = [sample_gamma_half(rng), sample_gamma_half(rng), sample_gamma_half(rng)];
        if let Ok(s) = Simplex3::from_weights(g) {
            return s;
        }
    }
}

/// Throws `n` balls into the three cells of `p`.
pub fn sample_multinomial<R: Rng + ?Sized>(rng: &mut R, n: u32, p: &Simplex3) -> [u32; 3] {
    let mut counts = [0u32; 3];
    for _ in 0..n {
        let k = p.letter(uniform_open(rng));
        counts[usize::from(k) - 1] += 1;
    }
    counts
}

/// Inverse CDF of the Rayleigh law, `sqrt(-2 ln u)` for `u ∈ (0, 1]`.
pub fn rayleigh_from_uniform(u: f64) -> f64 {
    (-2.0 * u.ln()).max(0.0).sqrt()
}

pub fn sample_rayleigh<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - (0,1) stays inside (0, 1]
    rayleigh_from_uniform(1.0 - uniform_open(rng))
}
