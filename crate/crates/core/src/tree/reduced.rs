use std::collections::VecDeque;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{distance_matrix, sample_points, MeasuredTree};
use crate::error::{Error, Result};
use crate::randomness::TreeShape;

/// Reconstruction tolerance for exact tree metrics.
pub const EXACT_EPS: f64 = 1e-9;

/// Symmetric matrix of pairwise distances with a zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DistanceMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn zeros(size: usize) -> Self {
        DistanceMatrix { size, entries: vec![0.0; size * size] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        let mut mat = DistanceMatrix::zeros(size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::invalid("matrix", format!("row {i} has {} entries, expected {size}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::invalid("matrix", format!("entry ({i}, {j}) = {v}")));
                }
                if i == j && v != 0.0 {
                    return Err(Error::invalid("matrix", format!("nonzero diagonal at {i}")));
                }
                if v != rows[j][i] {
                    return Err(Error::invalid("matrix", format!("asymmetric at ({i}, {j})")));
                }
                mat.entries[i * size + j] = v;
            }
        }
        Ok(mat)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    /// Sets both `(i, j)` and `(j, i)`; the diagonal stays zero.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        if i != j {
            self.entries[i * self.size + j] = v;
            self.entries[j * self.size + i] = v;
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.size.max(1)).take(self.size).map(<[f64]>::to_vec).collect()
    }

    /// Restriction to the given indices, in order.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let mut out = DistanceMatrix::zeros(indices.len());
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate().skip(a + 1) {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }

    /// Upper-triangle entries, row by row.
    pub fn upper(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.size * self.size.saturating_sub(1) / 2);
        for i in 0..self.size {
            for j in i + 1..self.size {
                out.push(self.get(i, j));
            }
        }
        out
    }
}

impl TryFrom<Vec<Vec<f64>>> for DistanceMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        DistanceMatrix::from_rows(rows)
    }
}

impl From<DistanceMatrix> for Vec<Vec<f64>> {
    fn from(m: DistanceMatrix) -> Self {
        m.rows()
    }
}

/// Largest four-point defect over all quadruples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourPoint {
    pub max_violation: f64,
    pub worst: Option<[usize; 4]>,
}

/// For each quadruple, the gap between the largest and second largest of
/// the three pairings `d(a,b) + d(c,d)` and so on; zero for tree metrics.
pub fn four_point_check(mat: &DistanceMatrix) -> FourPoint {
    let n = mat.size();
    let mut out = FourPoint { max_violation: 0.0, worst: None };
    let d = |i: usize, j: usize| mat.get(i, j);
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for e in c + 1..n {
                    let mut sums = [d(a, b) + d(c, e), d(a, c) + d(b, e), d(a, e) + d(b, c)];
                    sums.sort_by(f64::total_cmp);
                    let gap = sums[2] - sums[1];
                    if gap > out.max_violation {
                        out = FourPoint { max_violation: gap, worst: Some([a, b, c, e]) };
                    }
                }
            }
        }
    }
    out
}

/// Pendant lengths of the three-leaf star spanned by a 3 x 3 matrix, from
/// Gromov products; clamped at zero.
pub fn gromov_triple(mat: &DistanceMatrix) -> Result<[f64; 3]> {
    if mat.size() != 3 {
        return Err(Error::invalid("matrix", format!("expected 3 points, got {}", mat.size())));
    }
    let d = |i, j| mat.get(i, j);
    let arm = |i: usize, j: usize, k: usize| (0.5 * (d(i, j) + d(i, k) - d(j, k))).max(0.0);
    Ok([arm(0, 1, 2), arm(1, 0, 2), arm(2, 0, 1)])
}

/// Shape and edge lengths of the subtree spanned by `m` leaves.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedTree {
    shape: TreeShape,
    lengths: Vec<f64>,
}

impl ReducedTree {
    /// `lengths` follow the canonical edge order of `shape`.
    pub fn new(shape: TreeShape, lengths: Vec<f64>) -> Result<Self> {
        if lengths.len() != shape.edge_count() {
            return Err(Error::invalid(
                "lengths",
                format!("{} lengths for a shape with {} edges", lengths.len(), shape.edge_count()),
            ));
        }
        if let Some(i) = lengths.iter().position(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("lengths", format!("edge {i} has length {}", lengths[i])));
        }
        Ok(ReducedTree { shape, lengths })
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn leaf_count(&self) -> usize {
        self.shape.leaf_count()
    }

    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Path length between leaves `i` and `j` (1-based).
    pub fn leaf_distance(&self, i: usize, j: usize) -> f64 {
        self.shape
            .edges()
            .into_iter()
            .zip(&self.lengths)
            .filter(|(e, _)| self.shape.separates(*e, i, j))
            .map(|(_, l)| l)
            .sum()
    }

    pub fn distance_matrix(&self) -> DistanceMatrix {
        let m = self.leaf_count();
        let mut mat = DistanceMatrix::zeros(m);
        for i in 0..m {
            for j in i + 1..m {
                mat.set(i, j, self.leaf_distance(i + 1, j + 1));
            }
        }
        mat
    }
}

struct Builder {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl Builder {
    fn new(vertices: usize) -> Self {
        Builder { adjacency: vec![Vec::new(); vertices] }
    }

    fn add_vertex(&mut self) -> usize {
        self.adjacency.push(Vec::new());
        self.adjacency.len() - 1
    }

    fn connect(&mut self, u: usize, v: usize, len: f64) {
        self.adjacency[u].push((v, len));
        self.adjacency[v].push((u, len));
    }

    fn disconnect(&mut self, u: usize, v: usize) {
        self.adjacency[u].retain(|&(w, _)| w != v);
        self.adjacency[v].retain(|&(w, _)| w != u);
    }

    /// Vertices and edge lengths along the path from `x` to `y`.
    fn path(&self, x: usize, y: usize) -> Vec<(usize, f64)> {
        let mut back = vec![(usize::MAX, 0.0); self.adjacency.len()];
        back[x] = (x, 0.0);
        let mut queue = VecDeque::from([x]);
        while let Some(u) = queue.pop_front() {
            if u == y {
                break;
            }
            for &(v, len) in &self.adjacency[u] {
                if back[v].0 == usize::MAX {
                    back[v] = (u, len);
                    queue.push_back(v);
                }
            }
        }
        // entry k: vertex k of the path and the length of the edge into it
        let mut out = Vec::new();
        let mut v = y;
        while v != x {
            let (u, len) = back[v];
            out.push((v, len));
            v = u;
        }
        out.push((x, 0.0));
        out.reverse();
        out
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            for &(v, len) in nbrs {
                if u < v {
                    out.push((u, v, len));
                }
            }
        }
        out
    }
}

/// Rebuilds the reduced tree of an additive metric by inserting leaves one
/// at a time at the point fixed by Gromov products.
///
/// Fails with [`Error::FourPointViolation`] when the matrix is not a tree
/// metric within `eps`, and with [`Error::Degenerate`] when a leaf lands
/// within `eps` of an existing vertex or on the tree itself.
pub fn reconstruct_reduced_tree(mat: &DistanceMatrix, eps: f64) -> Result<ReducedTree> {
    let m = mat.size();
    if m < 2 {
        return Err(Error::invalid("matrix", "need at least two points"));
    }
    if !(eps >= 0.0) {
        return Err(Error::invalid("eps", format!("tolerance must be nonnegative, got {eps}")));
    }
    let fp = four_point_check(mat);
    if fp.max_violation > eps {
        return Err(Error::FourPointViolation {
            quadruple: fp.worst.expect("violation has a witness"),
            violation: fp.max_violation,
        });
    }
    let d = |i: usize, j: usize| mat.get(i, j);
    if d(0, 1) <= eps {
        return Err(Error::Degenerate("leaves 1 and 2 coincide".into()));
    }
    let mut tree = Builder::new(m);
    tree.connect(0, 1, d(0, 1));
    for z in 2..m {
        let mut best = (f64::INFINITY, 0, 0);
        for x in 0..z {
            for y in x + 1..z {
                let g = 0.5 * (d(x, z) + d(y, z) - d(x, y));
                if g < best.0 {
                    best = (g, x, y);
                }
            }
        }
        let (pendant, x, y) = best;
        if pendant <= eps {
            return Err(Error::Degenerate(format!("leaf {} lies on the tree spanned by the others", z + 1)));
        }
        let offset = 0.5 * (d(x, z) + d(x, y) - d(y, z));
        let path = tree.path(x, y);
        let mut travelled = 0.0;
        let mut attached = false;
        for k in 1..path.len() {
            let (v, len) = path[k];
            let (u, _) = path[k - 1];
            let reach = travelled + len;
            if (offset - travelled).abs() <= eps || (offset - reach).abs() <= eps {
                return Err(Error::Degenerate(format!("leaf {} attaches at an existing vertex", z + 1)));
            }
            if offset < reach || k + 1 == path.len() {
                let near = (offset - travelled).clamp(0.0, len);
                let w = tree.add_vertex();
                tree.disconnect(u, v);
                tree.connect(u, w, near);
                tree.connect(w, v, len - near);
                tree.connect(w, z, pendant);
                attached = true;
                break;
            }
            travelled = reach;
        }
        if !attached {
            return Err(Error::Degenerate(format!("leaf {} has no attachment point", z + 1)));
        }
    }

    let weighted = tree.edges();
    let plain: Vec<(usize, usize)> = weighted.iter().map(|&(u, v, _)| (u, v)).collect();
    let (shape, keys) = TreeShape::classify_edges(m, tree.adjacency.len(), &plain)?;
    let mut lengths = vec![0.0; shape.edge_count()];
    for (key, &(_, _, len)) in keys.iter().zip(&weighted) {
        let idx = shape.edge_index(*key).ok_or_else(|| Error::InvalidTree(format!("unknown edge {key:?}")))?;
        lengths[idx] = len;
    }
    if let Some(i) = lengths.iter().position(|&l| l <= eps) {
        return Err(Error::Degenerate(format!("edge {i} is shorter than the tolerance")));
    }
    let reduced = ReducedTree::new(shape, lengths)?;
    for i in 0..m {
        for j in i + 1..m {
            let gap = (reduced.leaf_distance(i + 1, j + 1) - d(i, j)).abs();
            if gap > 2.0 * eps {
                return Err(Error::InvalidTree(format!("leaves {} and {} are off by {gap:e}", i + 1, j + 1)));
            }
        }
    }
    Ok(reduced)
}

/// Reduced tree spanned by `m` points drawn from the tree's mass measure.
pub fn reduced_tree<T: MeasuredTree + ?Sized>(tree: &T, m: usize, rng: &mut dyn RngCore, eps: f64) -> Result<ReducedTree> {
    if m < 2 {
        return Err(Error::invalid("m", "a reduced tree needs at least two points"));
    }
    let points = sample_points(tree, m, rng);
    reconstruct_reduced_tree(&distance_matrix(tree, &points)?, eps)
}
