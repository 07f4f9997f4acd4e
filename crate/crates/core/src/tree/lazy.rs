use std::sync::Mutex;

use rand::RngCore;

use super::{MeasuredTree, PointRef};
use crate::error::{Error, Result};
use crate::randomness::{sample_rayleigh, uniform_open, Stream};

/// A Brownian CRT revealed one sampled leaf at a time by line-breaking.
///
/// The `k`-th call to `sample_point` returns `Atom(k)`; the subtree spanned by
/// the first `k` leaves has the exact reduced-tree law of the BCRT. All
/// randomness comes from the tree's own stream, so the caller's generator is
/// not consumed.
#[derive(Debug)]
pub struct LazyBcrt {
    state: Mutex<LineBreaking>,
}

#[derive(Debug)]
struct LineBreaking {
    rng: Stream,
    /// Parent of every vertex; vertex 0 (the first leaf) is the root.
    parent: Vec<usize>,
    parent_len: Vec<f64>,
    depth: Vec<f64>,
    leaves: Vec<usize>,
    total: f64,
}

impl LazyBcrt {
    pub fn new(rng: Stream) -> Self {
        LazyBcrt {
            state: Mutex::new(LineBreaking {
                rng,
                parent: Vec::new(),
                parent_len: Vec::new(),
                depth: Vec::new(),
                leaves: Vec::new(),
                total: 0.0,
            }),
        }
    }

    /// Number of leaves revealed so far.
    pub fn revealed(&self) -> usize {
        self.state.lock().expect("lazy tree lock").leaves.len()
    }
}

impl LineBreaking {
    fn add_vertex(&mut self, parent: usize, len: f64) -> usize {
        let v = self.parent.len();
        self.parent.push(parent);
        self.parent_len.push(len);
        let d = if v == 0 { 0.0 } else { self.depth[parent] + len };
        self.depth.push(d);
        v
    }

    fn grow(&mut self) -> usize {
        let k = self.leaves.len();
        let leaf = match k {
            0 => self.add_vertex(0, 0.0),
            1 => {
                self.total = sample_rayleigh(&mut self.rng);
                self.add_vertex(0, self.total)
            }
            _ => {
                // C_k^2 = C_{k-1}^2 + 2 E with E standard exponential
                let e = -uniform_open(&mut self.rng).ln();
                let next = (self.total * self.total + 2.0 * e).sqrt();
                let branch = next - self.total;
                let mut at = uniform_open(&mut self.rng) * self.total;
                let mut edge = 1;
                while edge + 1 < self.parent.len() && at > self.parent_len[edge] {
                    at -= self.parent_len[edge];
                    edge += 1;
                }
                let at = at.min(self.parent_len[edge]);
                let top = self.parent[edge];
                let mid = self.add_vertex(top, at);
                self.parent[edge] = mid;
                self.parent_len[edge] -= at;
                self.total = next;
                self.add_vertex(mid, branch)
            }
        };
        self.leaves.push(leaf);
        k
    }

    fn distance(&self, u: usize, v: usize) -> f64 {
        if u == v {
            return 0.0;
        }
        let mut on_path = vec![false; self.parent.len()];
        let mut x = u;
        loop {
            on_path[x] = true;
            if x == 0 {
                break;
            }
            x = self.parent[x];
        }
        let mut y = v;
        while !on_path[y] {
            y = self.parent[y];
        }
        ((self.depth[u] - self.depth[y]) + (self.depth[v] - self.depth[y])).max(0.0)
    }
}

impl MeasuredTree for LazyBcrt {
    fn sample_point(&self, _rng: &mut dyn RngCore) -> PointRef {
        PointRef::Atom(self.state.lock().expect("lazy tree lock").grow())
    }

    fn distance(&self, p: &PointRef, q: &PointRef) -> Result<f64> {
        let state = self.state.lock().expect("lazy tree lock");
        let vertex = |r: &PointRef| match r {
            PointRef::Atom(k) if *k < state.leaves.len() => Ok(state.leaves[*k]),
            other => Err(Error::ForeignPoint(format!("{other:?} has not been sampled from this tree"))),
        };
        let (u, v) = (vertex(p)?, vertex(q)?);
        Ok(state.distance(u, v))
    }

    fn contains(&self, p: &PointRef) -> bool {
        matches!(p, PointRef::Atom(k) if *k < self.revealed())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{distance_matrix, four_point_check, sample_points};

    #[test]
    fn two_point_distance_is_rayleigh_mean() {
        let n = 100_000;
        let mut s = 0.0;
        for i in 0..n {
            let t = LazyBcrt::new(Stream::derive(7, &crate::randomness::WordPath::root(), &format!("lazy{i}")));
            let mut rng = Stream::from_seed(0, "unused");
            let p = sample_points(&t, 2, &mut rng);
            s += t.distance(&p[0], &p[1]).unwrap();
        }
        let mean = s / n as f64;
        assert!((mean - (std::f64::consts::PI / 2.0).sqrt()).abs() < 0.01, "{mean}");
    }

    #[test]
    fn revealed_leaves_form_a_tree_metric() {
        let t = LazyBcrt::new(Stream::from_seed(8, "lazy"));
        let mut rng = Stream::from_seed(0, "unused");
        let p = sample_points(&t, 9, &mut rng);
        let mat = distance_matrix(&t, &p).unwrap();
        assert!(four_point_check(&mat).max_violation < 1e-12);
        assert!(t.distance(&PointRef::Atom(9), &p[0]).is_err());
        assert!(mat.get(0, 1) > 0.0);
    }
}
