use std::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};

/// Largest leaf count a shape can carry (leaf sets are `u64` bitmasks).
pub const MAX_LEAVES: usize = 64;

/// A bipartition of the leaves, stored as the bitmask of the side that holds
/// leaf 1 (bit `ℓ - 1` stands for leaf `ℓ`). Among the two sides this is the
/// lexicographically smaller leaf list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Split(pub u64);

impl Split {
    fn normalized(mask: u64, m: usize) -> Split {
        if mask & 1 == 1 {
            Split(mask)
        } else {
            Split(full_mask(m) ^ mask)
        }
    }

    pub fn leaves(&self) -> Vec<u8> {
        mask_leaves(self.0)
    }

    pub fn contains(&self, leaf: usize) -> bool {
        (self.0 >> (leaf - 1)) & 1 == 1
    }

    fn lex_cmp(&self, other: &Split) -> Ordering {
        self.leaves().cmp(&other.leaves())
    }
}

fn full_mask(m: usize) -> u64 {
    if m == 64 {
        u64::MAX
    } else {
        (1u64 << m) - 1
    }
}

fn mask_leaves(mask: u64) -> Vec<u8> {
    (0..64u8).filter(|b| (mask >> b) & 1 == 1).map(|b| b + 1).collect()
}

/// Identifies one edge of a shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKey {
    /// The edge ending at leaf `ℓ`.
    Pendant(usize),
    Internal(Split),
}

/// Unrooted binary tree shape with leaves labelled `1..=m`.
///
/// The canonical encoding is the sorted list of internal splits. Edges are
/// enumerated as the `m` pendant edges in leaf order followed by the internal
/// edges in split order; for `m = 2` there is a single edge.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TreeShape {
    m: usize,
    splits: Vec<Split>,
}

impl TreeShape {
    /// Builds a shape from the nontrivial splits of its internal edges.
    pub fn from_splits(m: usize, masks: &[u64]) -> Result<Self> {
        if !(2..=MAX_LEAVES).contains(&m) {
            return Err(Error::invalid("m", format!("leaf count {m} outside 2..={MAX_LEAVES}")));
        }
        let full = full_mask(m);
        let mut splits: Vec<Split> = Vec::with_capacity(masks.len());
        for &mask in masks {
            if mask & !full != 0 {
                return Err(Error::InvalidTree(format!("split {mask:#b} names leaves beyond {m}")));
            }
            let s = Split::normalized(mask, m);
            let side = s.0.count_ones() as usize;
            if side < 2 || m - side < 2 {
                return Err(Error::InvalidTree(format!("split {:?} is trivial", s.leaves())));
            }
            splits.push(s);
        }
        splits.sort_by(|a, b| a.lex_cmp(b));
        let expected = m.saturating_sub(3);
        if splits.len() != expected {
            return Err(Error::InvalidTree(format!("{} internal splits, expected {expected}", splits.len())));
        }
        if splits.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidTree("repeated split".into()));
        }
        for (i, a) in splits.iter().enumerate() {
            for b in &splits[i + 1..] {
                let nested = a.0 & !b.0 == 0 || b.0 & !a.0 == 0;
                let covering = a.0 | b.0 == full;
                if !nested && !covering {
                    return Err(Error::InvalidTree(format!(
                        "incompatible splits {:?} and {:?}",
                        a.leaves(),
                        b.leaves()
                    )));
                }
            }
        }
        Ok(TreeShape { m, splits })
    }

    /// Reads the shape of an explicit tree graph whose vertices `0..m` are the
    /// leaves `1..=m`. Fails unless every leaf has degree 1 and every other
    /// vertex degree 3.
    pub fn from_edges(m: usize, vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("m", "a shape needs at least two leaves"));
        }
        let adjacency = adjacency(vertex_count, edges)?;
        for (v, nbrs) in adjacency.iter().enumerate() {
            let want = if v < m { 1 } else { 3 };
            if nbrs.len() != want {
                return Err(Error::Degenerate(format!("vertex {v} has degree {}, expected {want}", nbrs.len())));
            }
        }
        if edges.len() + 1 != vertex_count {
            return Err(Error::InvalidTree("graph is not a tree".into()));
        }
        let mut masks = Vec::new();
        for &(u, v) in edges {
            let side = leaf_side(&adjacency, m, v, u);
            let size = side.count_ones() as usize;
            if size >= 2 && m - size >= 2 {
                masks.push(side);
            }
        }
        Self::from_splits(m, &masks)
    }

    /// Like [`TreeShape::from_edges`], also naming each input edge by its
    /// canonical key.
    pub fn classify_edges(m: usize, vertex_count: usize, edges: &[(usize, usize)]) -> Result<(Self, Vec<EdgeKey>)> {
        let shape = Self::from_edges(m, vertex_count, edges)?;
        if m == 2 {
            return Ok((shape, vec![EdgeKey::Pendant(1)]));
        }
        let adjacency = adjacency(vertex_count, edges)?;
        let keys = edges
            .iter()
            .map(|&(u, v)| {
                if u < m {
                    EdgeKey::Pendant(u + 1)
                } else if v < m {
                    EdgeKey::Pendant(v + 1)
                } else {
                    EdgeKey::Internal(Split::normalized(leaf_side(&adjacency, m, v, u), m))
                }
            })
            .collect();
        Ok((shape, keys))
    }

    /// Position of `key` in the canonical edge order.
    pub fn edge_index(&self, key: EdgeKey) -> Option<usize> {
        match key {
            EdgeKey::Pendant(l) if self.m == 2 => (l == 1 || l == 2).then_some(0),
            EdgeKey::Pendant(l) => (1..=self.m).contains(&l).then(|| l - 1),
            EdgeKey::Internal(s) => self.splits.iter().position(|t| *t == s).map(|p| self.m + p),
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.m
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn edge_count(&self) -> usize {
        if self.m == 2 {
            1
        } else {
            2 * self.m - 3
        }
    }

    /// Edges in canonical order.
    pub fn edges(&self) -> Vec<EdgeKey> {
        if self.m == 2 {
            return vec![EdgeKey::Pendant(1)];
        }
        (1..=self.m)
            .map(EdgeKey::Pendant)
            .chain(self.splits.iter().copied().map(EdgeKey::Internal))
            .collect()
    }

    /// Whether `edge` lies on the path between leaves `i` and `j`.
    pub fn separates(&self, edge: EdgeKey, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        match edge {
            EdgeKey::Pendant(l) => self.m == 2 || i == l || j == l,
            EdgeKey::Internal(s) => s.contains(i) != s.contains(j),
        }
    }

    /// Explicit graph with vertices `0..m` for the leaves and `m..2m-2` for
    /// internal vertices; the returned edges follow the canonical edge order.
    pub fn to_graph(&self) -> (usize, Vec<(usize, usize)>) {
        let m = self.m;
        if m == 2 {
            return (2, vec![(0, 1)]);
        }
        let full = full_mask(m);
        let top = full ^ 1;
        // Rooted at leaf 1, every edge is the stem of a cluster of leaves.
        let mut internal_clusters: Vec<u64> = vec![top];
        internal_clusters.extend(self.splits.iter().map(|s| full ^ s.0));
        let vertex_of = |cluster: u64| -> usize {
            if cluster.count_ones() == 1 {
                cluster.trailing_zeros() as usize
            } else {
                m + internal_clusters.iter().position(|&c| c == cluster).expect("cluster is internal")
            }
        };
        let parent_of = |cluster: u64| -> u64 {
            internal_clusters
                .iter()
                .copied()
                .filter(|&c| c != cluster && c & cluster == cluster)
                .min_by_key(|c| c.count_ones())
                .expect("every cluster but the top has a parent")
        };
        let mut edges = Vec::with_capacity(self.edge_count());
        edges.push((0, vertex_of(top)));
        for leaf in 2..=m {
            let c = 1u64 << (leaf - 1);
            edges.push((leaf - 1, vertex_of(parent_of(c))));
        }
        for s in &self.splits {
            let c = full ^ s.0;
            edges.push((vertex_of(c), vertex_of(parent_of(c))));
        }
        (2 * m - 2, edges)
    }

    /// Structural check of the shape invariants on the explicit graph.
    pub fn validate(&self) -> Result<()> {
        let (n, edges) = self.to_graph();
        if edges.len() != self.edge_count() {
            return Err(Error::InvalidTree("edge count mismatch".into()));
        }
        let adjacency = adjacency(n, &edges)?;
        for (v, nbrs) in adjacency.iter().enumerate() {
            let want = if v < self.m { 1 } else { 3 };
            if self.m > 2 && nbrs.len() != want {
                return Err(Error::InvalidTree(format!("vertex {v} has degree {}", nbrs.len())));
            }
        }
        let reread = TreeShape::from_edges(self.m, n, &edges)?;
        if &reread != self {
            return Err(Error::InvalidTree("graph does not reproduce the split set".into()));
        }
        Ok(())
    }

    /// The canonical split list as leaf-label arrays.
    pub fn split_lists(&self) -> Vec<Vec<u8>> {
        self.splits.iter().map(Split::leaves).collect()
    }
}

fn adjacency(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Vec<Vec<usize>>> {
    let mut adj = vec![Vec::new(); vertex_count];
    for &(u, v) in edges {
        if u >= vertex_count || v >= vertex_count || u == v {
            return Err(Error::InvalidTree(format!("bad edge ({u}, {v})")));
        }
        adj[u].push(v);
        adj[v].push(u);
    }
    Ok(adj)
}

/// Leaf bitmask of the component containing `start` once edge `start-blocked`
/// is removed.
fn leaf_side(adj: &[Vec<usize>], m: usize, start: usize, blocked: usize) -> u64 {
    let mut mask = 0u64;
    let mut stack = vec![(start, blocked)];
    while let Some((v, from)) = stack.pop() {
        if v < m {
            mask |= 1 << v;
        }
        for &w in &adj[v] {
            if w != from {
                stack.push((w, v));
            }
        }
    }
    mask
}

/// Uniform binary shape on `m` labelled leaves, by inserting leaf `k + 1`
/// into a uniformly chosen edge of the shape on leaves `1..=k`.
pub fn sample_uniform_shape<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Result<TreeShape> {
    if !(2..=MAX_LEAVES).contains(&m) {
        return Err(Error::invalid("m", format!("need 2 <= m <= {MAX_LEAVES}, got {m}")));
    }
    let mut edges: Vec<(usize, usize)> = vec![(0, 1)];
    let mut next_internal = m;
    for leaf in 2..m {
        let e = rng.random_range(0..edges.len());
        let (u, v) = edges[e];
        let w = next_internal;
        next_internal += 1;
        edges[e] = (u, w);
        edges.push((w, v));
        edges.push((w, leaf));
    }
    TreeShape::from_edges(m, next_internal, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::Stream;
    use std::collections::{HashMap, HashSet};

    /// All shapes on `m` leaves, by exhaustive enumeration of insertion
    /// sequences.
    fn enumerate_shapes(m: usize) -> Vec<TreeShape> {
        fn go(m: usize, leaf: usize, edges: Vec<(usize, usize)>, next: usize, out: &mut Vec<TreeShape>) {
            if leaf == m {
                out.push(TreeShape::from_edges(m, next, &edges).unwrap());
                return;
            }
            for e in 0..edges.len() {
                let mut ed = edges.clone();
                let (u, v) = ed[e];
                ed[e] = (u, next);
                ed.push((next, v));
                ed.push((next, leaf));
                go(m, leaf + 1, ed, next + 1, out);
            }
        }
        let mut out = Vec::new();
        go(m, 2, vec![(0, 1)], m, &mut out);
        out
    }

    fn double_factorial(k: i64) -> usize {
        if k <= 1 {
            1
        } else {
            k as usize * double_factorial(k - 2)
        }
    }

    #[test]
    fn canonical_encoding_is_injective_up_to_six_leaves() {
        for m in 2..=6 {
            let shapes = enumerate_shapes(m);
            let expected = double_factorial(2 * m as i64 - 5);
            assert_eq!(shapes.len(), expected);
            let distinct: HashSet<_> = shapes.iter().cloned().collect();
            assert_eq!(distinct.len(), expected, "m = {m}");
            for s in &shapes {
                s.validate().unwrap();
            }
        }
    }

    #[test]
    fn three_leaves_is_the_star() {
        let mut rng = Stream::from_seed(11, "shape");
        let star = TreeShape::from_splits(3, &[]).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_uniform_shape(&mut rng, 3).unwrap(), star);
        }
        assert_eq!(star.edge_count(), 3);
    }

    #[test]
    fn small_m_rejected() {
        let mut rng = Stream::from_seed(11, "shape");
        assert!(sample_uniform_shape(&mut rng, 1).is_err());
        assert!(sample_uniform_shape(&mut rng, 0).is_err());
    }

    #[test]
    fn quartets_are_uniform() {
        let mut rng = Stream::from_seed(12, "shape");
        let n = 100_000;
        let mut counts: HashMap<TreeShape, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(sample_uniform_shape(&mut rng, 4).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 3);
        for (shape, c) in counts {
            let f = c as f64 / n as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.01, "{:?}: {f}", shape.split_lists());
        }
    }

    #[test]
    fn five_leaf_shapes_pass_chi_squared() {
        let mut rng = Stream::from_seed(13, "shape");
        let n = 60_000;
        let mut counts: HashMap<TreeShape, usize> = HashMap::new();
        for _ in 0..n {
            *counts.entry(sample_uniform_shape(&mut rng, 5).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 15);
        let expected = n as f64 / 15.0;
        let stat: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi-squared with 14 degrees of freedom
        assert!(stat < 36.12, "chi2 = {stat}");
    }

    #[test]
    fn quartet_separation() {
        // (12|34)
        let s = TreeShape::from_splits(4, &[0b0011]).unwrap();
        let internal = EdgeKey::Internal(s.splits()[0]);
        assert!(s.separates(internal, 1, 3));
        assert!(!s.separates(internal, 1, 2));
        assert!(!s.separates(internal, 3, 4));
        assert!(s.separates(EdgeKey::Pendant(2), 2, 4));
        assert_eq!(s.split_lists(), vec![vec![1, 2]]);
        // the complement mask normalizes to the side with leaf 1
        assert_eq!(TreeShape::from_splits(4, &[0b1100]).unwrap(), s);
    }

    #[test]
    fn rejects_incompatible_or_trivial_splits() {
        assert!(TreeShape::from_splits(5, &[0b00011, 0b00101]).is_err());
        assert!(TreeShape::from_splits(4, &[0b0001]).is_err());
        assert!(TreeShape::from_splits(4, &[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn sampled_shapes_are_valid(seed in proptest::prelude::any::<u64>(), m in 2usize..20) {
            let mut rng = Stream::from_seed(seed, "shape-prop");
            let s = sample_uniform_shape(&mut rng, m).unwrap();
            proptest::prop_assert_eq!(s.leaf_count(), m);
            proptest::prop_assert_eq!(s.edges().len(), s.edge_count());
            proptest::prop_assert!(s.validate().is_ok());
        }
    }
}
