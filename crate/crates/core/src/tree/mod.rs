//! Measured trees, the three-way gluing step and reduced trees.

mod finite;
mod lazy;
mod reduced;
mod serial;

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excursion::ExcursionTree;
use crate::randomness::{uniform_open, Simplex3};

pub use finite::FiniteTree;
pub use lazy::LazyBcrt;
pub use reduced::{
    four_point_check, gromov_triple, reconstruct_reduced_tree, reduced_tree, DistanceMatrix, FourPoint, ReducedTree,
    EXACT_EPS,
};
pub use serial::{deserialize_reduced, deserialize_tree, load_tree, serialize_reduced, serialize_tree};

/// Address of a point inside a tree.
///
/// Equality is address equality; distinct addresses at distance zero are
/// not identified.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointRef {
    /// Grid index of an excursion tree.
    Grid(usize),
    /// Index into a finite tree's mass list, or the `k`-th sampled leaf of a
    /// lazily grown tree.
    Atom(usize),
    /// A point of child `k` (1, 2 or 3) of a glued tree.
    Child(u8, Box<PointRef>),
    /// The identified gluing point of a glued tree. Carries no mass.
    Branch,
}

impl PointRef {
    pub fn in_child(k: u8, p: PointRef) -> Self {
        PointRef::Child(k, Box::new(p))
    }
}

/// A compact real tree with a probability measure.
pub trait MeasuredTree: Send + Sync {
    /// Draws a point from the mass measure.
    fn sample_point(&self, rng: &mut dyn RngCore) -> PointRef;

    fn distance(&self, p: &PointRef, q: &PointRef) -> Result<f64>;

    fn contains(&self, p: &PointRef) -> bool;
}

/// Pairwise distances between `points`.
pub fn distance_matrix<T: MeasuredTree + ?Sized>(tree: &T, points: &[PointRef]) -> Result<DistanceMatrix> {
    let mut mat = DistanceMatrix::zeros(points.len());
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            mat.set(i, j, tree.distance(&points[i], &points[j])?);
        }
    }
    Ok(mat)
}

/// `m` independent draws from the mass measure.
pub fn sample_points<T: MeasuredTree + ?Sized>(tree: &T, m: usize, rng: &mut dyn RngCore) -> Vec<PointRef> {
    (0..m).map(|_| tree.sample_point(rng)).collect()
}

/// Any of the concrete tree representations.
// trees are shared behind `Arc`, so variant size does not matter
#[allow(clippy::large_enum_variant)]
#[derive(Debug)]
pub enum Tree {
    Finite(FiniteTree),
    Excursion(ExcursionTree),
    Glued(GluedTree),
    Lazy(LazyBcrt),
}

impl Tree {
    pub fn as_glued(&self) -> Option<&GluedTree> {
        match self {
            Tree::Glued(g) => Some(g),
            _ => None,
        }
    }

    fn inner(&self) -> &dyn MeasuredTree {
        match self {
            Tree::Finite(t) => t,
            Tree::Excursion(t) => t,
            Tree::Glued(t) => t,
            Tree::Lazy(t) => t,
        }
    }
}

impl MeasuredTree for Tree {
    fn sample_point(&self, rng: &mut dyn RngCore) -> PointRef {
        self.inner().sample_point(rng)
    }

    fn distance(&self, p: &PointRef, q: &PointRef) -> Result<f64> {
        self.inner().distance(p, q)
    }

    fn contains(&self, p: &PointRef) -> bool {
        self.inner().contains(p)
    }
}

impl<T: MeasuredTree + ?Sized> MeasuredTree for Arc<T> {
    fn sample_point(&self, rng: &mut dyn RngCore) -> PointRef {
        (**self).sample_point(rng)
    }

    fn distance(&self, p: &PointRef, q: &PointRef) -> Result<f64> {
        (**self).distance(p, q)
    }

    fn contains(&self, p: &PointRef) -> bool {
        (**self).contains(p)
    }
}

/// Three trees rescaled by a simplex triple and joined at one point each.
#[derive(Debug)]
pub struct GluedTree {
    children: [Arc<Tree>; 3],
    glue: [PointRef; 3],
    delta: Simplex3,
    scales: [f64; 3],
}

impl GluedTree {
    pub fn new(children: [Arc<Tree>; 3], glue: [PointRef; 3], delta: Simplex3) -> Result<Self> {
        for k in 0..3 {
            if !children[k].contains(&glue[k]) {
                return Err(Error::ForeignPoint(format!("gluing point {:?} is not in child {}", glue[k], k + 1)));
            }
        }
        let scales = delta.masses().map(f64::sqrt);
        Ok(GluedTree { children, glue, delta, scales })
    }

    pub fn children(&self) -> &[Arc<Tree>; 3] {
        &self.children
    }

    pub fn glue_points(&self) -> &[PointRef; 3] {
        &self.glue
    }

    pub fn delta(&self) -> &Simplex3 {
        &self.delta
    }

    fn child_part<'a>(&self, p: &'a PointRef) -> Result<Option<(usize, &'a PointRef)>> {
        match p {
            PointRef::Branch => Ok(None),
            PointRef::Child(k @ 1..=3, inner) => Ok(Some((*k as usize - 1, inner))),
            other => Err(Error::ForeignPoint(format!("{other:?} is not a glued-tree address"))),
        }
    }

    /// Distance from a point of child `k` to the gluing point, in the glued
    /// metric.
    fn to_branch(&self, k: usize, p: &PointRef) -> Result<f64> {
        Ok(self.scales[k] * self.children[k].distance(p, &self.glue[k])?)
    }
}

impl MeasuredTree for GluedTree {
    fn sample_point(&self, rng: &mut dyn RngCore) -> PointRef {
        let k = self.delta.letter(uniform_open(rng));
        let inner = self.children[k as usize - 1].sample_point(rng);
        PointRef::in_child(k, inner)
    }

    fn distance(&self, p: &PointRef, q: &PointRef) -> Result<f64> {
        match (self.child_part(p)?, self.child_part(q)?) {
            (None, None) => Ok(0.0),
            (Some((a, x)), None) => self.to_branch(a, x),
            (None, Some((b, y))) => self.to_branch(b, y),
            (Some((a, x)), Some((b, y))) if a == b => Ok(self.scales[a] * self.children[a].distance(x, y)?),
            (Some((a, x)), Some((b, y))) => Ok(self.to_branch(a, x)? + self.to_branch(b, y)?),
        }
    }

    fn contains(&self, p: &PointRef) -> bool {
        match p {
            PointRef::Branch => true,
            PointRef::Child(k @ 1..=3, inner) => self.children[*k as usize - 1].contains(inner),
            _ => false,
        }
    }
}

/// Glues `t1, t2, t3` at `x1, x2, x3` after rescaling child `k` by
/// `sqrt(delta_k)` in distance and `delta_k` in mass.
pub fn glue(trees: [Arc<Tree>; 3], points: [PointRef; 3], delta: Simplex3) -> Result<GluedTree> {
    GluedTree::new(trees, points, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::Stream;

    fn unit_segment() -> Arc<Tree> {
        // atom 0 at the gluing end, atom 1 at the far end
        Arc::new(Tree::Finite(FiniteTree::new(2, vec![(0, 1, 1.0)], vec![(0, 0.0), (1, 1.0)]).unwrap()))
    }

    fn segments(delta: [f64; 3]) -> GluedTree {
        let s = unit_segment();
        glue([s.clone(), s.clone(), s], [PointRef::Atom(0), PointRef::Atom(0), PointRef::Atom(0)], Simplex3::new(delta).unwrap())
            .unwrap()
    }

    fn far(k: u8) -> PointRef {
        PointRef::in_child(k, PointRef::Atom(1))
    }

    #[test]
    fn cross_child_distances_on_glued_segments() {
        let g = segments([0.25, 0.25, 0.5]);
        assert!((g.distance(&far(1), &far(2)).unwrap() - 1.0).abs() < 1e-15);
        let expected = 0.5 + 0.5f64.sqrt();
        assert!((g.distance(&far(1), &far(3)).unwrap() - expected).abs() < 1e-15);
        assert_eq!(g.distance(&far(3), &far(3)).unwrap(), 0.0);
        assert!((g.distance(&PointRef::Branch, &far(3)).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn same_child_distance_is_scaled_exactly() {
        let g = segments([0.25, 0.25, 0.5]);
        let near = PointRef::in_child(3, PointRef::Atom(0));
        assert_eq!(g.distance(&near, &far(3)).unwrap(), 0.5f64.sqrt() * 1.0);
    }

    #[test]
    fn foreign_points_rejected() {
        let g = segments([0.25, 0.25, 0.5]);
        assert!(matches!(g.distance(&PointRef::Grid(0), &far(1)), Err(Error::ForeignPoint(_))));
        assert!(g.distance(&PointRef::in_child(2, PointRef::Atom(7)), &far(1)).is_err());
        let s = unit_segment();
        let bad = glue([s.clone(), s.clone(), s], [PointRef::Atom(0), PointRef::Atom(9), PointRef::Atom(0)], Simplex3::new([0.2, 0.3, 0.5]).unwrap());
        assert!(bad.is_err());
    }

    #[test]
    fn degenerate_delta_always_picks_child_one() {
        let g = segments([1.0, 0.0, 0.0]);
        let mut rng = Stream::from_seed(1, "glue");
        for _ in 0..1000 {
            assert!(matches!(g.sample_point(&mut rng), PointRef::Child(1, _)));
        }
    }

    #[test]
    fn child_frequencies_follow_delta() {
        let g = segments([0.5, 0.3, 0.2]);
        let mut rng = Stream::from_seed(2, "glue");
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            if let PointRef::Child(k, _) = g.sample_point(&mut rng) {
                counts[k as usize - 1] += 1;
            }
        }
        for (c, want) in counts.iter().zip([0.5, 0.3, 0.2]) {
            assert!((*c as f64 / n as f64 - want).abs() < 0.01);
        }
    }

    #[test]
    fn gluing_point_trees_gives_a_point_tree() {
        let p = Arc::new(Tree::Finite(FiniteTree::point()));
        let g = glue([p.clone(), p.clone(), p], [PointRef::Atom(0), PointRef::Atom(0), PointRef::Atom(0)], Simplex3::new([0.2, 0.3, 0.5]).unwrap()).unwrap();
        let mut rng = Stream::from_seed(3, "glue");
        let pts = sample_points(&g, 5, &mut rng);
        let mat = distance_matrix(&g, &pts).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(mat.get(i, j), 0.0);
            }
        }
        let total: f64 = g.delta().masses().iter().sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn distance_matrix_edge_cases() {
        let g = segments([0.25, 0.25, 0.5]);
        let one = distance_matrix(&g, &[far(1)]).unwrap();
        assert_eq!(one.size(), 1);
        assert_eq!(one.get(0, 0), 0.0);
        let dup = distance_matrix(&g, &[far(2), far(2)]).unwrap();
        assert_eq!(dup.get(0, 1), 0.0);
    }
}
