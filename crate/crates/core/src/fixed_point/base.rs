use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::analytics::rayleigh_mean;
use crate::error::{Error, Result};
use crate::excursion::ExcursionTree;
use crate::randomness::{sample_rayleigh, Stream, WordPath};
use crate::smoothing::{apply_fsm, EmpiricalDist};
use crate::tree::{deserialize_tree, load_tree, FiniteTree, LazyBcrt, MeasuredTree, Tree};

/// Default atom count of the stick base law.
pub const STICK_ATOMS: usize = 1024;

/// Stick length whose two-point mean is `sqrt(pi/2)`.
pub fn stick_length() -> f64 {
    3.0 * rayleigh_mean()
}

fn default_resolution() -> usize {
    crate::excursion::DEFAULT_RESOLUTION
}

fn default_atoms() -> usize {
    STICK_ATOMS
}

/// Law of the input trees, as written in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseLawSpec {
    /// Excursion-encoded BCRT on a grid of the given resolution.
    BcrtExcursion {
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
    /// BCRT revealed leaf by leaf through the exact reduced-tree law.
    BcrtExactReduced,
    /// Deterministic segment with equal atoms at cell midpoints.
    Stick {
        #[serde(default = "stick_length")]
        length: f64,
        #[serde(default = "default_atoms")]
        atoms: usize,
    },
    /// A fixed tree read from a JSON tree file, or given inline.
    FiniteTree {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tree: Option<serde_json::Value>,
    },
}

impl BaseLawSpec {
    pub fn stick() -> Self {
        BaseLawSpec::Stick { length: stick_length(), atoms: STICK_ATOMS }
    }

    /// A single vertex carrying all the mass.
    pub fn point() -> Self {
        BaseLawSpec::FiniteTree {
            file: None,
            tree: Some(serde_json::json!({"kind": "finite", "vertices": 1, "edges": [], "mass": [[0, 1.0]]})),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaseLawSpec::BcrtExcursion { resolution } if *resolution < 2 => {
                Err(Error::invalid("resolution", format!("must be at least 2, got {resolution}")))
            }
            BaseLawSpec::Stick { length, atoms } if !(*length > 0.0 && length.is_finite()) || *atoms == 0 => {
                Err(Error::invalid("stick", "length and atom count must be positive"))
            }
            BaseLawSpec::FiniteTree { file, tree } if file.is_some() == tree.is_some() => {
                Err(Error::invalid("finite-tree", "give exactly one of `file` or `tree`"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_bcrt(&self) -> bool {
        matches!(self, BaseLawSpec::BcrtExcursion { .. } | BaseLawSpec::BcrtExactReduced)
    }

    pub fn instantiate(&self) -> Result<BaseLaw> {
        self.validate()?;
        let source = match self {
            BaseLawSpec::BcrtExcursion { resolution } => Source::Excursion(*resolution),
            BaseLawSpec::BcrtExactReduced => Source::Lazy,
            BaseLawSpec::Stick { length, atoms } => Source::Fixed(Arc::new(Tree::Finite(FiniteTree::stick(*length, *atoms)?))),
            BaseLawSpec::FiniteTree { file: Some(path), .. } => Source::Fixed(Arc::new(load_tree(path)?)),
            BaseLawSpec::FiniteTree { tree: Some(value), .. } => Source::Fixed(Arc::new(deserialize_tree(&value.to_string())?)),
            BaseLawSpec::FiniteTree { .. } => unreachable!("validated"),
        };
        Ok(BaseLaw { spec: self.clone(), source, residual_pools: Mutex::new(Vec::new()), residual_pool_size: RESIDUAL_POOL })
    }
}

#[derive(Debug)]
enum Source {
    Excursion(usize),
    Lazy,
    Fixed(Arc<Tree>),
}

/// Default size of the pools approximating iterated two-point laws.
pub const RESIDUAL_POOL: usize = 100_000;

/// An instantiated base law: draws input trees and knows the two-point
/// distance law of its `r`-fold iterates.
#[derive(Debug)]
pub struct BaseLaw {
    spec: BaseLawSpec,
    source: Source,
    residual_pools: Mutex<Vec<Arc<EmpiricalDist>>>,
    residual_pool_size: usize,
}

impl BaseLaw {
    pub fn spec(&self) -> &BaseLawSpec {
        &self.spec
    }

    pub fn with_residual_pool_size(mut self, size: usize) -> Self {
        self.residual_pool_size = size.max(1);
        self
    }

    /// One input tree. Fixed laws hand out the same shared tree.
    pub fn sample(&self, mut stream: Stream) -> Result<Arc<Tree>> {
        Ok(match &self.source {
            Source::Excursion(n) => Arc::new(Tree::Excursion(ExcursionTree::sample(&mut stream, *n)?)),
            Source::Lazy => Arc::new(Tree::Lazy(LazyBcrt::new(stream))),
            Source::Fixed(t) => t.clone(),
        })
    }

    /// Distance between two independent mass-measure points of an
    /// independent `r`-fold iterate of this law.
    pub fn sample_two_point(&self, r: usize, stream: &mut Stream) -> Result<f64> {
        if self.spec.is_bcrt() {
            return Ok(sample_rayleigh(stream));
        }
        let pool = self.two_point_pool(r)?;
        Ok(pool.resample(stream))
    }

    /// Pooled approximation of the two-point law after `r` smoothing steps.
    pub fn two_point_pool(&self, r: usize) -> Result<Arc<EmpiricalDist>> {
        let mut pools = self.residual_pools.lock().expect("residual pool lock");
        if pools.is_empty() {
            let mut s = Stream::derive(0, &WordPath::root(), "residual-base");
            let mut draws = Vec::with_capacity(self.residual_pool_size);
            for i in 0..self.residual_pool_size {
                let t = self.sample(Stream::derive(i as u64, &WordPath::root(), "residual-tree"))?;
                let p = t.sample_point(&mut s);
                let q = t.sample_point(&mut s);
                draws.push(t.distance(&p, &q)?);
            }
            pools.push(Arc::new(EmpiricalDist::new(draws)?));
        }
        while pools.len() <= r {
            let k = pools.len();
            let mut s = Stream::derive(k as u64, &WordPath::root(), "residual-smoothing");
            let next = apply_fsm(pools.last().expect("nonempty"), self.residual_pool_size, &mut s)?;
            pools.push(Arc::new(next));
        }
        Ok(pools[r].clone())
    }
}
