use std::collections::VecDeque;

use rand::RngCore;

use super::{MeasuredTree, PointRef};
use crate::error::{Error, Result};
use crate::randomness::uniform_open;

/// A finite weighted tree with atoms of mass on some of its vertices.
///
/// Atom `k` of the mass list is addressed as `PointRef::Atom(k)`.
#[derive(Clone, Debug)]
pub struct FiniteTree {
    vertex_count: usize,
    edges: Vec<(usize, usize, f64)>,
    mass: Vec<(usize, f64)>,
    cumulative: Vec<f64>,
    depth: Vec<f64>,
    level: Vec<u32>,
    ancestors: Vec<Vec<usize>>,
}

impl PartialEq for FiniteTree {
    fn eq(&self, other: &Self) -> bool {
        self.vertex_count == other.vertex_count && self.edges == other.edges && self.mass == other.mass
    }
}

impl FiniteTree {
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize, f64)>, mass: Vec<(usize, f64)>) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidTree("no vertices".into()));
        }
        if edges.len() + 1 != vertex_count {
            return Err(Error::InvalidTree(format!("{} edges on {vertex_count} vertices", edges.len())));
        }
        let mut adjacency = vec![Vec::new(); vertex_count];
        for &(u, v, len) in &edges {
            if u >= vertex_count || v >= vertex_count || u == v {
                return Err(Error::InvalidTree(format!("bad edge ({u}, {v})")));
            }
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::InvalidTree(format!("edge ({u}, {v}) has length {len}")));
            }
            adjacency[u].push((v, len));
            adjacency[v].push((u, len));
        }
        if mass.is_empty() {
            return Err(Error::InvalidTree("empty mass list".into()));
        }
        let mut seen = vec![false; vertex_count];
        let mut total = 0.0;
        let mut cumulative = Vec::with_capacity(mass.len());
        for &(v, w) in &mass {
            if v >= vertex_count || seen[v] {
                return Err(Error::InvalidTree(format!("mass atom on vertex {v} is out of range or repeated")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidTree(format!("mass {w} on vertex {v}")));
            }
            seen[v] = true;
            total += w;
            cumulative.push(total);
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidTree(format!("total mass {total} differs from 1")));
        }

        let mut parent = vec![usize::MAX; vertex_count];
        let mut depth = vec![0.0; vertex_count];
        let mut level = vec![0u32; vertex_count];
        let mut visited = vec![false; vertex_count];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        parent[0] = 0;
        while let Some(u) = queue.pop_front() {
            for &(v, len) in &adjacency[u] {
                if !visited[v] {
                    visited[v] = true;
                    parent[v] = u;
                    depth[v] = depth[u] + len;
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if visited.iter().any(|v| !v) {
            return Err(Error::InvalidTree("graph is disconnected".into()));
        }
        let mut ancestors = vec![parent];
        let max_level = level.iter().copied().max().unwrap_or(0);
        while (1u64 << ancestors.len()) <= max_level as u64 {
            let prev = ancestors.last().expect("nonempty");
            let next = (0..vertex_count).map(|v| prev[prev[v]]).collect();
            ancestors.push(next);
        }
        Ok(FiniteTree { vertex_count, edges, mass, cumulative, depth, level, ancestors })
    }

    /// One vertex carrying all the mass.
    pub fn point() -> Self {
        FiniteTree::new(1, Vec::new(), vec![(0, 1.0)]).expect("valid point tree")
    }

    /// A segment of the given length with `atoms` equal masses at the
    /// midpoints of equal cells.
    pub fn stick(length: f64, atoms: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid("length", format!("stick length must be positive, got {length}")));
        }
        if atoms == 0 {
            return Err(Error::invalid("atoms", "a stick needs at least one atom"));
        }
        let cell = length / atoms as f64;
        // vertices: 0 and atoms + 1 are the ends, 1..=atoms the midpoints
        let mut edges = Vec::with_capacity(atoms + 1);
        edges.push((0, 1, cell / 2.0));
        for k in 1..atoms {
            edges.push((k, k + 1, cell));
        }
        edges.push((atoms, atoms + 1, cell / 2.0));
        let w = 1.0 / atoms as f64;
        let mass = (1..=atoms).map(|v| (v, w)).collect();
        FiniteTree::new(atoms + 2, edges, mass)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn mass(&self) -> &[(usize, f64)] {
        &self.mass
    }

    fn lca(&self, mut u: usize, mut v: usize) -> usize {
        if self.level[u] < self.level[v] {
            std::mem::swap(&mut u, &mut v);
        }
        let mut gap = self.level[u] - self.level[v];
        let mut k = 0;
        while gap > 0 {
            if gap & 1 == 1 {
                u = self.ancestors[k][u];
            }
            gap >>= 1;
            k += 1;
        }
        if u == v {
            return u;
        }
        for k in (0..self.ancestors.len()).rev() {
            if self.ancestors[k][u] != self.ancestors[k][v] {
                u = self.ancestors[k][u];
                v = self.ancestors[k][v];
            }
        }
        self.ancestors[0][u]
    }

    /// Path length between two vertices.
    pub fn vertex_distance(&self, u: usize, v: usize) -> Result<f64> {
        if u >= self.vertex_count || v >= self.vertex_count {
            return Err(Error::ForeignPoint(format!("vertex {} out of range", u.max(v))));
        }
        if u == v {
            return Ok(0.0);
        }
        let w = self.lca(u, v);
        Ok(((self.depth[u] - self.depth[w]) + (self.depth[v] - self.depth[w])).max(0.0))
    }

    fn atom_vertex(&self, p: &PointRef) -> Result<usize> {
        match p {
            PointRef::Atom(k) if *k < self.mass.len() => Ok(self.mass[*k].0),
            other => Err(Error::ForeignPoint(format!("{other:?} is not an atom of this tree"))),
        }
    }
}

impl MeasuredTree for FiniteTree {
    fn sample_point(&self, rng: &mut dyn RngCore) -> PointRef {
        let total = *self.cumulative.last().expect("nonempty mass");
        let target = uniform_open(rng) * total;
        let k = self.cumulative.partition_point(|&c| c < target).min(self.mass.len() - 1);
        PointRef::Atom(k)
    }

    fn distance(&self, p: &PointRef, q: &PointRef) -> Result<f64> {
        self.vertex_distance(self.atom_vertex(p)?, self.atom_vertex(q)?)
    }

    fn contains(&self, p: &PointRef) -> bool {
        matches!(p, PointRef::Atom(k) if *k < self.mass.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::Stream;

    #[test]
    fn point_tree_always_returns_its_atom() {
        let t = FiniteTree::point();
        let mut rng = Stream::from_seed(1, "finite");
        for _ in 0..100 {
            assert_eq!(t.sample_point(&mut rng), PointRef::Atom(0));
        }
    }

    #[test]
    fn zero_mass_atoms_are_never_drawn() {
        let t = FiniteTree::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)], vec![(0, 0.0), (1, 1.0), (2, 0.0)]).unwrap();
        let mut rng = Stream::from_seed(2, "finite");
        for _ in 0..1000 {
            assert_eq!(t.sample_point(&mut rng), PointRef::Atom(1));
        }
    }

    #[test]
    fn star_distances() {
        // centre 0 with arms of length 1, 2, 3
        let t = FiniteTree::new(4, vec![(0, 1, 1.0), (0, 2, 2.0), (3, 0, 3.0)], vec![(1, 0.5), (2, 0.25), (3, 0.25)]).unwrap();
        assert_eq!(t.distance(&PointRef::Atom(0), &PointRef::Atom(1)).unwrap(), 3.0);
        assert_eq!(t.distance(&PointRef::Atom(1), &PointRef::Atom(2)).unwrap(), 5.0);
        assert!(t.distance(&PointRef::Atom(3), &PointRef::Atom(0)).is_err());
    }

    #[test]
    fn stick_mean_distance_is_a_third_of_its_length() {
        let len = 3.0;
        let t = FiniteTree::stick(len, 1024).unwrap();
        let mut rng = Stream::from_seed(3, "stick");
        let n = 200_000;
        let mut s = 0.0;
        for _ in 0..n {
            let p = t.sample_point(&mut rng);
            let q = t.sample_point(&mut rng);
            s += t.distance(&p, &q).unwrap();
        }
        assert!((s / n as f64 - len / 3.0).abs() < 0.01);
        let end = t.vertex_distance(0, 1025).unwrap();
        assert!((end - len).abs() < 1e-9);
    }

    #[test]
    fn invalid_trees_rejected() {
        assert!(FiniteTree::new(2, vec![(0, 1, 0.0)], vec![(0, 1.0)]).is_err());
        assert!(FiniteTree::new(3, vec![(0, 1, 1.0), (0, 1, 1.0)], vec![(0, 1.0)]).is_err());
        assert!(FiniteTree::new(2, vec![(0, 1, 1.0)], vec![(0, 0.5)]).is_err());
        assert!(FiniteTree::new(2, vec![(0, 1, 1.0)], vec![(0, 0.5), (0, 0.5)]).is_err());
    }
}
