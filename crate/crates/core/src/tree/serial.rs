//! JSON encodings of trees and reduced trees.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FiniteTree, GluedTree, PointRef, ReducedTree, Tree};
use crate::error::{Error, Result};
use crate::excursion::{Excursion, ExcursionTree};
use crate::randomness::{Simplex3, TreeShape};

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum TreeWire {
    Finite {
        vertices: usize,
        edges: Vec<(usize, usize, f64)>,
        mass: Vec<(usize, f64)>,
    },
    Glued {
        delta: [f64; 3],
        glue: [PointRef; 3],
        children: Box<[TreeWire; 3]>,
    },
    ExcursionRef {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
    },
}

fn to_wire(tree: &Tree) -> Result<TreeWire> {
    Ok(match tree {
        Tree::Finite(t) => TreeWire::Finite { vertices: t.vertex_count(), edges: t.edges().to_vec(), mass: t.mass().to_vec() },
        Tree::Excursion(t) => TreeWire::ExcursionRef { values: Some(t.excursion().values().to_vec()), path: None },
        Tree::Glued(g) => {
            let [a, b, c] = g.children();
            TreeWire::Glued {
                delta: g.delta().masses(),
                glue: g.glue_points().clone(),
                children: Box::new([to_wire(a)?, to_wire(b)?, to_wire(c)?]),
            }
        }
        Tree::Lazy(_) => return Err(Error::invalid("tree", "a lazily revealed tree has no finite encoding")),
    })
}

fn from_wire(wire: TreeWire, base: Option<&Path>, location: &str) -> Result<Tree> {
    let at = |e: Error| match e {
        Error::Parse { .. } | Error::Io(_) => e,
        other => Error::parse(location, other.to_string()),
    };
    Ok(match wire {
        TreeWire::Finite { vertices, edges, mass } => Tree::Finite(FiniteTree::new(vertices, edges, mass).map_err(at)?),
        TreeWire::ExcursionRef { values, path } => {
            let exc = match (values, path) {
                (Some(v), None) => Excursion::new(v).map_err(at)?,
                (None, Some(p)) => {
                    let full = match base {
                        Some(dir) if p.is_relative() => dir.join(p),
                        _ => p,
                    };
                    Excursion::load(&full)?
                }
                _ => return Err(Error::parse(location, "excursion-ref needs exactly one of `values` or `path`")),
            };
            Tree::Excursion(ExcursionTree::new(Arc::new(exc)))
        }
        TreeWire::Glued { delta, glue, children } => {
            let [a, b, c] = *children;
            let kids = [
                Arc::new(from_wire(a, base, &format!("{location}.children[0]"))?),
                Arc::new(from_wire(b, base, &format!("{location}.children[1]"))?),
                Arc::new(from_wire(c, base, &format!("{location}.children[2]"))?),
            ];
            let delta = Simplex3::new(delta).map_err(at)?;
            Tree::Glued(GluedTree::new(kids, glue, delta).map_err(at)?)
        }
    })
}

fn json_error(e: serde_json::Error) -> Error {
    Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
}

pub fn serialize_tree(tree: &Tree) -> Result<String> {
    serde_json::to_string(&to_wire(tree)?).map_err(|e| Error::Io(e.to_string()))
}

/// Parses a tree; relative excursion paths resolve against the current
/// directory.
pub fn deserialize_tree(text: &str) -> Result<Tree> {
    let wire: TreeWire = serde_json::from_str(text).map_err(json_error)?;
    from_wire(wire, None, "$")
}

/// Reads a tree file; relative excursion paths resolve against its directory.
pub fn load_tree(path: &Path) -> Result<Tree> {
    let text = std::fs::read_to_string(path)?;
    let wire: TreeWire = serde_json::from_str(&text).map_err(json_error)?;
    from_wire(wire, path.parent(), "$")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReducedWire {
    m: usize,
    shape: Vec<Vec<u8>>,
    lengths: Vec<f64>,
}

impl Serialize for ReducedTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ReducedWire { m: self.leaf_count(), shape: self.shape().split_lists(), lengths: self.lengths().to_vec() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReducedTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = ReducedWire::deserialize(d)?;
        let mut masks = Vec::with_capacity(wire.shape.len());
        for split in &wire.shape {
            let mut mask = 0u64;
            for &leaf in split {
                if leaf == 0 || leaf as usize > wire.m {
                    return Err(serde::de::Error::custom(format!("leaf {leaf} outside 1..={}", wire.m)));
                }
                mask |= 1 << (leaf - 1);
            }
            masks.push(mask);
        }
        let shape = TreeShape::from_splits(wire.m, &masks).map_err(serde::de::Error::custom)?;
        ReducedTree::new(shape, wire.lengths).map_err(serde::de::Error::custom)
    }
}

pub fn serialize_reduced(tree: &ReducedTree) -> String {
    serde_json::to_string(tree).expect("reduced trees always encode")
}

pub fn deserialize_reduced(text: &str) -> Result<ReducedTree> {
    serde_json::from_str(text).map_err(json_error)
}
