//! The three-way gluing operator, its iterates, and the shared-randomness
//! coupling of an iterate with a BCRT-based copy.

mod base;
mod coupling;
mod iterated;

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::randomness::{sample_dirichlet_half, sample_multinomial, Stream};
use crate::tree::{reconstruct_reduced_tree, GluedTree, MeasuredTree, PointRef, ReducedTree};

pub use base::{stick_length, BaseLaw, BaseLawSpec, RESIDUAL_POOL, STICK_ATOMS};
pub use coupling::CouplingContext;
pub use iterated::{IteratedTree, ResolveOptions, Resolution};

/// Resolution of the excursion-backed input trees of the BCRT side of a
/// coupled pair.
pub const COUPLED_FLOOR_RESOLUTION: usize = 1 << 14;

/// One application of the gluing operator to independent draws from `base`.
pub fn apply_f(base: &BaseLaw, mut stream: Stream) -> Result<GluedTree> {
    let mut children = Vec::with_capacity(3);
    let mut glue = Vec::with_capacity(3);
    for k in 1..=3 {
        let t = base.sample(stream.fork(&format!("child:{k}")))?;
        let mut pick = stream.fork(&format!("pick:{k}"));
        glue.push(t.sample_point(&mut pick));
        children.push(t);
    }
    let delta = sample_dirichlet_half(&mut stream);
    let children: [_; 3] = children.try_into().expect("three children");
    let glue: [PointRef; 3] = glue.try_into().expect("three gluing points");
    GluedTree::new(children, glue, delta)
}

/// `n` nested applications of the gluing operator over input trees drawn
/// from `base`, all randomness derived from `root`.
pub fn iterate_f(base: Arc<BaseLaw>, n: usize, root: u64) -> IteratedTree {
    IteratedTree::new(Arc::new(CouplingContext::new(root, n)), base, "T")
}

/// Two iterates sharing every scaling triple and gluing-point label.
#[derive(Debug)]
pub struct CoupledPair {
    pub t: IteratedTree,
    pub t_tilde: IteratedTree,
    pub ctx: Arc<CouplingContext>,
}

/// Couples `n + 1` levels of gluing over `base` with the same levels over
/// excursion-backed BCRT input trees.
pub fn coupled_pair(base: Arc<BaseLaw>, n: usize, root: u64) -> Result<CoupledPair> {
    let tilde = BaseLawSpec::BcrtExcursion { resolution: COUPLED_FLOOR_RESOLUTION }.instantiate()?;
    Ok(coupled_pair_with(base, Arc::new(tilde), n, root))
}

/// [`coupled_pair`] with an explicit law for the input trees of the BCRT
/// side.
pub fn coupled_pair_with(base: Arc<BaseLaw>, tilde: Arc<BaseLaw>, n: usize, root: u64) -> CoupledPair {
    let ctx = Arc::new(CouplingContext::new(root, n + 1));
    CoupledPair {
        t: IteratedTree::new(ctx.clone(), base, "T"),
        t_tilde: IteratedTree::new(ctx.clone(), tilde, "Ttilde"),
        ctx,
    }
}

/// Reduced trees of the two sides of a coupled pair, spanned by samples
/// that fall in identically labelled input trees.
#[derive(Debug)]
pub struct CoupledReduced {
    pub s: Result<ReducedTree>,
    pub s_tilde: Result<ReducedTree>,
    /// All branch points among the samples are gluing points, which forces
    /// equal shapes.
    pub separated: bool,
}

impl CoupledReduced {
    /// Both reconstructions succeeded and have the same shape.
    pub fn shapes_agree(&self) -> Option<bool> {
        match (&self.s, &self.s_tilde) {
            (Ok(a), Ok(b)) => Some(a.shape() == b.shape()),
            _ => None,
        }
    }
}

pub fn coupled_reduced_trees(pair: &CoupledPair, m: usize, query_seed: u64, opts: ResolveOptions, eps: f64) -> Result<CoupledReduced> {
    if m < 2 {
        return Err(Error::invalid("m", "a reduced tree needs at least two points"));
    }
    let a = pair.t.resolve_samples(m, query_seed, opts)?;
    let b = pair.t_tilde.resolve_samples(m, query_seed, opts)?;
    debug_assert_eq!(a.separated, b.separated);
    Ok(CoupledReduced {
        s: reconstruct_reduced_tree(&a.matrix, eps),
        s_tilde: reconstruct_reduced_tree(&b.matrix, eps),
        separated: a.separated,
    })
}

/// Number of gluing levels needed before no three of `m` sampled points
/// (counting gluing points) share a subtree.
pub fn sample_n<R: Rng + ?Sized>(m: u32, rng: &mut R) -> u32 {
    if m <= 2 {
        return 0;
    }
    let delta = sample_dirichlet_half(rng);
    let counts = sample_multinomial(rng, m, &delta);
    let mut deepest = 0;
    for c in counts {
        let sub = if c > 0 && c < m { c + 1 } else { c };
        deepest = deepest.max(sample_n(sub, rng));
    }
    1 + deepest
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::WordPath;
    use crate::tree::distance_matrix;

    fn stick() -> Arc<BaseLaw> {
        Arc::new(BaseLawSpec::stick().instantiate().unwrap())
    }

    #[test]
    fn point_base_stays_a_point() {
        let law = BaseLawSpec::point().instantiate().unwrap();
        let g = apply_f(&law, Stream::from_seed(1, "t")).unwrap();
        let mut s = Stream::from_seed(2, "q");
        for _ in 0..20 {
            let (p, q) = (g.sample_point(&mut s), g.sample_point(&mut s));
            assert_eq!(g.distance(&p, &q).unwrap(), 0.0);
        }
    }

    #[test]
    fn lazy_and_eager_agree() {
        let lazy = iterate_f(stick(), 2, 11);
        let eager = lazy.materialize().unwrap();
        let fresh = iterate_f(stick(), 2, 11);
        let mut s = Stream::from_seed(3, "q");
        let points: Vec<_> = (0..40).map(|_| fresh.sample_point(&mut s)).collect();
        let a = distance_matrix(&fresh, &points).unwrap();
        let b = distance_matrix(&eager, &points).unwrap();
        assert_eq!(a, b);
        // gluing points are ordinary points of the tree
        let mut glue = Vec::new();
        for w in ["", "1", "2", "3"] {
            let w = WordPath::parse(w).unwrap();
            for k in 1..=3 {
                let mut full = PointRef::in_child(k, fresh.glue_point(&w, k).unwrap());
                for &l in w.letters().iter().rev() {
                    full = PointRef::in_child(l, full);
                }
                glue.push(full);
            }
        }
        glue.extend(points.into_iter().take(5));
        assert_eq!(distance_matrix(&fresh, &glue).unwrap(), distance_matrix(&eager, &glue).unwrap());
    }

    #[test]
    fn resolved_samples_match_direct_distances() {
        let t = iterate_f(stick(), 4, 5);
        let r = t.resolve_samples(6, 99, ResolveOptions::exact()).unwrap();
        assert_eq!(r.residual_draws, 0);
        assert!(crate::tree::four_point_check(&r.matrix).max_violation < 1e-9);
        let again = iterate_f(stick(), 4, 5).resolve_samples(6, 99, ResolveOptions::exact()).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn coupled_sides_share_scaling() {
        let pair = coupled_pair_with(stick(), Arc::new(BaseLawSpec::BcrtExactReduced.instantiate().unwrap()), 3, 8);
        let root = WordPath::root();
        assert_eq!(pair.t.context().delta(&root).masses(), pair.t_tilde.context().delta(&root).masses());
        let r = coupled_reduced_trees(&pair, 2, 1, ResolveOptions::exact(), 1e-9).unwrap();
        assert!(r.separated);
    }

    #[test]
    fn sample_n_small_values() {
        let mut s = Stream::from_seed(4, "n");
        assert_eq!(sample_n(2, &mut s), 0);
        let mean3: f64 = (0..4000).map(|_| sample_n(3, &mut s) as f64).sum::<f64>() / 4000.0;
        assert!((mean3 - 17.5).abs() < 1.5, "{mean3}");
    }
}
