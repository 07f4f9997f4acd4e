use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::randomness::{sample_dirichlet_half, Simplex3, Stream, WordPath};

/// Shared randomness of the coupled construction: one Dirichlet triple per
/// word and the label words locating every gluing point among the input
/// trees. Entries are derived from `(root, word)` on first use, so the
/// tables are deterministic whatever the access order.
#[derive(Debug)]
pub struct CouplingContext {
    root: u64,
    depth: usize,
    deltas: Mutex<HashMap<WordPath, Simplex3>>,
    labels: Mutex<HashMap<(WordPath, u8), Cursor>>,
}

impl CouplingContext {
    /// Context for trees whose input trees sit at words of length `depth`.
    pub fn new(root: u64, depth: usize) -> Self {
        CouplingContext { root, depth, deltas: Mutex::new(HashMap::new()), labels: Mutex::new(HashMap::new()) }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Scaling triple used to build the tree at `word`.
    pub fn delta(&self, word: &WordPath) -> Simplex3 {
        if let Some(d) = self.deltas.lock().expect("delta table lock").get(word) {
            return *d;
        }
        let d = sample_dirichlet_half(&mut Stream::derive(self.root, word, "delta"));
        *self.deltas.lock().expect("delta table lock").entry(word.clone()).or_insert(d)
    }

    fn label_stream(&self, word: &WordPath, k: u8) -> Stream {
        Stream::derive(self.root, word, &format!("label:{k}"))
    }

    /// The uniform `U_k` attached to `word`: the first draw of the label
    /// stream of child `k`.
    pub fn uniform(&self, word: &WordPath, k: u8) -> f64 {
        self.label_stream(word, k).uniform_open()
    }

    fn check(&self, word: &WordPath, k: u8) -> Result<()> {
        if !(1..=3).contains(&k) {
            return Err(Error::invalid("k", format!("child letter must be 1, 2 or 3, got {k}")));
        }
        if word.len() >= self.depth {
            return Err(Error::invalid("word", format!("word {word} has no children at depth {}", self.depth)));
        }
        Ok(())
    }

    /// Letter `t` (0-based) of the label word of the gluing point picked in
    /// child `k` of `word`.
    pub fn label_letter(&self, word: &WordPath, k: u8, t: usize) -> Result<u8> {
        self.check(word, k)?;
        let len = self.depth - word.len() - 1;
        if t >= len {
            return Err(Error::invalid("t", format!("label of {word}/{k} has only {len} letters")));
        }
        let key = (word.clone(), k);
        let mut cursor = self
            .labels
            .lock()
            .expect("label table lock")
            .remove(&key)
            .unwrap_or_else(|| Cursor::new(word.child(k), self.label_stream(word, k)));
        let letter = cursor.letter(self, t);
        self.labels.lock().expect("label table lock").entry(key).or_insert(cursor);
        Ok(letter)
    }

    /// Full label word (length `depth - |word| - 1`) of the gluing point
    /// picked in child `k` of `word`.
    pub fn label_word(&self, word: &WordPath, k: u8) -> Result<WordPath> {
        self.check(word, k)?;
        let len = self.depth - word.len() - 1;
        let letters = (0..len).map(|t| self.label_letter(word, k, t)).collect::<Result<Vec<_>>>()?;
        WordPath::new(letters)
    }
}

/// Lazily drawn descent through the nested partition below `origin`: at the
/// node `origin · letters[..t]` the next letter is chosen with that node's
/// Dirichlet triple and a fresh uniform.
#[derive(Debug, Clone)]
pub(crate) struct Cursor {
    origin: WordPath,
    letters: Vec<u8>,
    rng: Stream,
}

impl Cursor {
    pub(crate) fn new(origin: WordPath, rng: Stream) -> Self {
        Cursor { origin, letters: Vec::new(), rng }
    }

    /// Letter `t` below the origin.
    pub(crate) fn letter(&mut self, ctx: &CouplingContext, t: usize) -> u8 {
        while self.letters.len() <= t {
            let mut node = self.origin.letters().to_vec();
            node.extend_from_slice(&self.letters);
            let node = WordPath::new(node).expect("letters are valid");
            let u = self.rng.uniform_open();
            self.letters.push(ctx.delta(&node).letter(u));
        }
        self.letters[t]
    }
}
