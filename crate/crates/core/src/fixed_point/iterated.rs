use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::RngCore;

use super::base::BaseLaw;
use super::coupling::{CouplingContext, Cursor};
use crate::error::{Error, Result};
use crate::randomness::{uniform_open, Stream, WordPath};
use crate::tree::{DistanceMatrix, GluedTree, MeasuredTree, PointRef, Tree};

/// A tree built by `depth` rounds of three-way gluing over input trees at the
/// words of length `depth`, instantiated only where queries reach.
///
/// Input trees, gluing picks and scaling triples are all derived from the
/// context's root and the word they belong to, so revisiting a word, or
/// building the tree eagerly, gives the same values.
#[derive(Debug)]
pub struct IteratedTree {
    ctx: Arc<CouplingContext>,
    base: Arc<BaseLaw>,
    tag: String,
    floors: Mutex<HashMap<WordPath, Arc<Tree>>>,
    picks: Mutex<HashMap<(WordPath, u8), PointRef>>,
}

/// How far below a node two-point sub-problems are computed exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResolveOptions {
    /// A subtree holding only two of the tracked points, with more than
    /// this many gluing levels below it, contributes a draw from the
    /// two-point law of its depth instead of being built.
    pub exact_levels: usize,
}

impl ResolveOptions {
    /// Every distance computed from the realized tree.
    pub fn exact() -> Self {
        ResolveOptions { exact_levels: usize::MAX }
    }
}

/// Result of resolving a batch of sampled points.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolution {
    pub matrix: DistanceMatrix,
    /// No three tracked points shared an input tree, so every branch point
    /// among the samples is a gluing point.
    pub separated: bool,
    /// Two-point sub-problems replaced by draws from their law.
    pub residual_draws: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Item {
    Query(usize),
    Glue(WordPath, u8),
}

/// Items of one child at a node, with their distance matrix; the child's
/// gluing point is appended when the child holds only some of the items.
struct Group {
    members: Vec<usize>,
    matrix: Vec<f64>,
    size: usize,
    glue_at: Option<usize>,
}

impl Group {
    fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.size + j]
    }
}

struct Walk {
    cursors: Vec<Cursor>,
    query_seed: u64,
    opts: ResolveOptions,
    separated: bool,
    residual_draws: usize,
}

impl IteratedTree {
    pub fn new(ctx: Arc<CouplingContext>, base: Arc<BaseLaw>, tag: impl Into<String>) -> Self {
        IteratedTree { ctx, base, tag: tag.into(), floors: Mutex::new(HashMap::new()), picks: Mutex::new(HashMap::new()) }
    }

    pub fn context(&self) -> &Arc<CouplingContext> {
        &self.ctx
    }

    pub fn base(&self) -> &Arc<BaseLaw> {
        &self.base
    }

    pub fn depth(&self) -> usize {
        self.ctx.depth()
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Number of input trees instantiated so far.
    pub fn instantiated_floors(&self) -> usize {
        self.floors.lock().expect("floor table lock").len()
    }

    /// The input tree at a word of full length.
    pub fn floor(&self, word: &WordPath) -> Result<Arc<Tree>> {
        if word.len() != self.depth() {
            return Err(Error::invalid("word", format!("input trees sit at depth {}, not {}", self.depth(), word.len())));
        }
        if let Some(t) = self.floors.lock().expect("floor table lock").get(word) {
            return Ok(t.clone());
        }
        let t = self.base.sample(Stream::derive(self.ctx.root(), word, &format!("floor:{}", self.tag)))?;
        Ok(self.floors.lock().expect("floor table lock").entry(word.clone()).or_insert(t).clone())
    }

    /// Where, inside its input tree, the gluing point of child `k` of `word`
    /// was picked.
    fn glue_pick(&self, word: &WordPath, k: u8) -> Result<PointRef> {
        let key = (word.clone(), k);
        if let Some(p) = self.picks.lock().expect("pick table lock").get(&key) {
            return Ok(p.clone());
        }
        let label = self.ctx.label_word(word, k)?;
        let floor_word = word.child(k).concat(&label);
        let floor = self.floor(&floor_word)?;
        let mut s = Stream::derive(self.ctx.root(), word, &format!("pick:{}:{k}", self.tag));
        let p = floor.sample_point(&mut s);
        Ok(self.picks.lock().expect("pick table lock").entry(key).or_insert(p).clone())
    }

    /// Address, relative to child `k` of `word`, of the gluing point picked
    /// in that child.
    pub fn glue_point(&self, word: &WordPath, k: u8) -> Result<PointRef> {
        let label = self.ctx.label_word(word, k)?;
        let mut p = self.glue_pick(word, k)?;
        for &l in label.letters().iter().rev() {
            p = PointRef::in_child(l, p);
        }
        Ok(p)
    }

    fn scale(&self, word: &WordPath, k: u8) -> f64 {
        self.ctx.delta(word).mass(k).sqrt()
    }

    fn distance_at(&self, word: &WordPath, p: &PointRef, q: &PointRef) -> Result<f64> {
        if word.len() == self.depth() {
            return self.floor(word)?.distance(p, q);
        }
        let split = |r: &PointRef| -> Result<Option<(u8, PointRef)>> {
            match r {
                PointRef::Branch => Ok(None),
                PointRef::Child(k @ 1..=3, inner) => Ok(Some((*k, (**inner).clone()))),
                other => Err(Error::ForeignPoint(format!("{other:?} at word {word}"))),
            }
        };
        let to_branch = |k: u8, x: &PointRef| -> Result<f64> {
            let g = self.glue_point(word, k)?;
            Ok(self.scale(word, k) * self.distance_at(&word.child(k), x, &g)?)
        };
        match (split(p)?, split(q)?) {
            (None, None) => Ok(0.0),
            (Some((a, x)), None) => to_branch(a, &x),
            (None, Some((b, y))) => to_branch(b, &y),
            (Some((a, x)), Some((b, y))) if a == b => Ok(self.scale(word, a) * self.distance_at(&word.child(a), &x, &y)?),
            (Some((a, x)), Some((b, y))) => Ok(to_branch(a, &x)? + to_branch(b, &y)?),
        }
    }

    fn contains_at(&self, level: usize, p: &PointRef, word: &mut Vec<u8>) -> bool {
        if level == self.depth() {
            let w = WordPath::new(word.clone()).expect("valid letters");
            return self.floor(&w).map(|t| t.contains(p)).unwrap_or(false);
        }
        match p {
            PointRef::Branch => true,
            PointRef::Child(k @ 1..=3, inner) => {
                word.push(*k);
                let ok = self.contains_at(level + 1, inner, word);
                word.pop();
                ok
            }
            _ => false,
        }
    }

    /// Builds the whole tree eagerly as nested glued trees with the same
    /// input trees, gluing points and scaling triples.
    pub fn materialize(&self) -> Result<Arc<Tree>> {
        self.materialize_at(&WordPath::root())
    }

    fn materialize_at(&self, word: &WordPath) -> Result<Arc<Tree>> {
        if word.len() == self.depth() {
            return self.floor(word);
        }
        let children = [
            self.materialize_at(&word.child(1))?,
            self.materialize_at(&word.child(2))?,
            self.materialize_at(&word.child(3))?,
        ];
        let glue = [self.glue_point(word, 1)?, self.glue_point(word, 2)?, self.glue_point(word, 3)?];
        Ok(Arc::new(Tree::Glued(GluedTree::new(children, glue, self.ctx.delta(word))?)))
    }

    /// Distances between `m` fresh mass-measure samples, computed by
    /// following the samples and the gluing points down the construction
    /// only as far as needed to tell them apart.
    ///
    /// The samples' subtree labels depend only on `query_seed` and the shared
    /// context, so two trees over one context resolving with the same seed
    /// see the samples in the same input trees.
    pub fn resolve_samples(&self, m: usize, query_seed: u64, opts: ResolveOptions) -> Result<Resolution> {
        if m == 0 {
            return Err(Error::invalid("m", "need at least one sample"));
        }
        let root = WordPath::root();
        let cursors = (0..m).map(|i| Cursor::new(root.clone(), Stream::derive(query_seed, &root, &format!("query:{i}")))).collect();
        let mut walk = Walk { cursors, query_seed, opts, separated: true, residual_draws: 0 };
        let items: Vec<Item> = (0..m).map(Item::Query).collect();
        let sub = if m == 1 { vec![0.0] } else { self.resolve(&root, &items, &mut walk)? };
        let mut matrix = DistanceMatrix::zeros(m);
        for i in 0..m {
            for j in i + 1..m {
                matrix.set(i, j, sub[i * m + j]);
            }
        }
        Ok(Resolution { matrix, separated: walk.separated, residual_draws: walk.residual_draws })
    }

    fn letter(&self, item: &Item, level: usize, walk: &mut Walk) -> Result<u8> {
        match item {
            Item::Query(i) => Ok(walk.cursors[*i].letter(&self.ctx, level)),
            Item::Glue(w, k) if level == w.len() => Ok(*k),
            Item::Glue(w, k) => self.ctx.label_letter(w, *k, level - w.len() - 1),
        }
    }

    fn floor_point(&self, word: &WordPath, item: &Item, walk: &Walk) -> Result<PointRef> {
        match item {
            Item::Glue(w, k) => self.glue_pick(w, *k),
            Item::Query(i) => {
                let floor = self.floor(word)?;
                let mut s = Stream::derive(walk.query_seed, word, &format!("pick:{}:{i}", self.tag));
                Ok(floor.sample_point(&mut s))
            }
        }
    }

    /// Row-major distance matrix among `items`, all of which lie in the
    /// subtree at `word`.
    fn resolve(&self, word: &WordPath, items: &[Item], walk: &mut Walk) -> Result<Vec<f64>> {
        let n = items.len();
        let mut out = vec![0.0; n * n];
        let level = word.len();
        if n == 1 {
            return Ok(out);
        }
        if level == self.depth() {
            if n >= 3 {
                walk.separated = false;
            }
            let floor = self.floor(word)?;
            let points = items.iter().map(|it| self.floor_point(word, it, walk)).collect::<Result<Vec<_>>>()?;
            for i in 0..n {
                for j in i + 1..n {
                    let d = floor.distance(&points[i], &points[j])?;
                    out[i * n + j] = d;
                    out[j * n + i] = d;
                }
            }
            return Ok(out);
        }
        let remaining = self.depth() - level;
        if n == 2 && remaining > walk.opts.exact_levels {
            walk.residual_draws += 1;
            let mut s = Stream::derive(self.ctx.root(), word, &format!("residual:{}", self.tag));
            let d = self.base.sample_two_point(remaining, &mut s)?;
            out[1] = d;
            out[2] = d;
            return Ok(out);
        }

        let mut letters = Vec::with_capacity(n);
        for it in items {
            letters.push(self.letter(it, level, walk)?);
        }
        let mut groups: [Option<Group>; 3] = [None, None, None];
        for k in 1..=3u8 {
            let members: Vec<usize> = (0..n).filter(|&i| letters[i] == k).collect();
            if members.is_empty() {
                continue;
            }
            let mut sub: Vec<Item> = members.iter().map(|&i| items[i].clone()).collect();
            let glue_at = (members.len() < n).then(|| {
                sub.push(Item::Glue(word.clone(), k));
                sub.len() - 1
            });
            let matrix = self.resolve(&word.child(k), &sub, walk)?;
            groups[k as usize - 1] = Some(Group { size: sub.len(), members, matrix, glue_at });
        }
        let mut slot = vec![(0usize, 0usize); n];
        for (g, group) in groups.iter().enumerate() {
            if let Some(group) = group {
                for (pos, &i) in group.members.iter().enumerate() {
                    slot[i] = (g, pos);
                }
            }
        }
        let delta = self.ctx.delta(word);
        let scales = delta.masses().map(f64::sqrt);
        for i in 0..n {
            for j in i + 1..n {
                let ((gi, pi), (gj, pj)) = (slot[i], slot[j]);
                let group = |g: usize| groups[g].as_ref().expect("group exists");
                let d = if gi == gj {
                    scales[gi] * group(gi).get(pi, pj)
                } else {
                    let (a, b) = (group(gi), group(gj));
                    let (ga, gb) = (a.glue_at.expect("split group has a gluing point"), b.glue_at.expect("split group has a gluing point"));
                    scales[gi] * a.get(pi, ga) + scales[gj] * b.get(gb, pj)
                };
                out[i * n + j] = d;
                out[j * n + i] = d;
            }
        }
        Ok(out)
    }
}

impl MeasuredTree for IteratedTree {
    fn sample_point(&self, rng: &mut dyn RngCore) -> PointRef {
        let mut letters = Vec::with_capacity(self.depth());
        for _ in 0..self.depth() {
            let node = WordPath::new(letters.clone()).expect("valid letters");
            letters.push(self.ctx.delta(&node).letter(uniform_open(rng)));
        }
        let word = WordPath::new(letters.clone()).expect("valid letters");
        let floor = self.floor(&word).expect("input tree instantiates");
        let mut p = floor.sample_point(rng);
        for &l in letters.iter().rev() {
            p = PointRef::in_child(l, p);
        }
        p
    }

    fn distance(&self, p: &PointRef, q: &PointRef) -> Result<f64> {
        if !self.contains(p) || !self.contains(q) {
            return Err(Error::ForeignPoint(format!("{p:?} or {q:?} is not in this tree")));
        }
        self.distance_at(&WordPath::root(), p, q)
    }

    fn contains(&self, p: &PointRef) -> bool {
        self.contains_at(0, p, &mut Vec::new())
    }
}
