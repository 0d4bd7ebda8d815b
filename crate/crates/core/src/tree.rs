//! Rooted finite trees with level sets and path coordinates.
//!
//! Vertices are enumerated level by level; inside a level, the successors of
//! earlier vertices come first and each successor list keeps the order of the
//! input. Every vertex therefore has a global index, and the ball
//! `Λ_[0,n]` is always an index prefix `0..ball_len(n)`.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("successor count list ends before vertex {0} (level {1})")]
    MissingCount(VertexId, usize),
    #[error("vertex {0} sits at the last level {1} but has successor count {2}")]
    LeafLevelCount(VertexId, usize, usize),
    #[error("successor count list has {extra} entries beyond the last vertex {last}")]
    TrailingCounts { last: VertexId, extra: usize },
    #[error("level {0} out of range (depth {1})")]
    LevelOutOfRange(usize, usize),
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
}

/// Path coordinate of a vertex: the root is the empty path, child `i` of `x`
/// is `x` followed by `i` (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId(pub Vec<u32>);

impl VertexId {
    pub fn root() -> Self {
        VertexId(Vec::new())
    }

    pub fn child(&self, i: u32) -> Self {
        let mut path = self.0.clone();
        path.push(i);
        VertexId(path)
    }

    pub fn level(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, ")")
    }
}

/// Immutable rooted tree truncated at `depth`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeGraph {
    depth: usize,
    vertices: Vec<VertexId>,
    children: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
    levels: Vec<Range<usize>>,
    lookup: HashMap<VertexId, usize>,
}

/// Builds a tree from a breadth-first list of successor counts.
///
/// The list must hold one count for every vertex of levels `0..depth`.
/// Counts for the vertices of level `depth` may also be listed, in which case
/// they must all be zero: the tree is cut at `depth`.
pub fn build_tree(successor_counts: &[usize], depth: usize) -> Result<TreeGraph, TreeError> {
    let mut vertices = vec![VertexId::root()];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut parent = vec![None];
    let mut levels = vec![0..1];
    let mut next = 0usize;

    for lvl in 0..depth {
        let range = levels[lvl].clone();
        let start = vertices.len();
        for v in range {
            let k = *successor_counts
                .get(next)
                .ok_or_else(|| TreeError::MissingCount(vertices[v].clone(), lvl))?;
            next += 1;
            for i in 1..=k {
                let id = vertices[v].child(i as u32);
                let idx = vertices.len();
                vertices.push(id);
                children.push(Vec::new());
                parent.push(Some(v));
                children[v].push(idx);
            }
        }
        levels.push(start..vertices.len());
    }

    let rest = &successor_counts[next.min(successor_counts.len())..];
    if !rest.is_empty() {
        let last_level = levels[depth].clone();
        if rest.len() != last_level.len() {
            return Err(TreeError::TrailingCounts {
                last: vertices.last().cloned().unwrap_or_else(VertexId::root),
                extra: rest.len(),
            });
        }
        for (v, &k) in last_level.zip(rest) {
            if k != 0 {
                return Err(TreeError::LeafLevelCount(vertices[v].clone(), depth, k));
            }
        }
    }

    let lookup = vertices.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    Ok(TreeGraph { depth, vertices, children, parent, levels, lookup })
}

impl TreeGraph {
    /// Constant branching `k` at every vertex above `depth`.
    pub fn cayley(k: usize, depth: usize) -> Self {
        let interior: usize = (0..depth).map(|n| k.pow(n as u32)).sum();
        build_tree(&vec![k; interior], depth).expect("cayley counts are consistent")
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, idx: usize) -> &VertexId {
        &self.vertices[idx]
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn index_of(&self, x: &VertexId) -> Option<usize> {
        self.lookup.get(x).copied()
    }

    /// Vertices of `Λ_n` in enumeration order.
    pub fn level(&self, n: usize) -> Result<Vec<VertexId>, TreeError> {
        Ok(self.level_indices(n)?.map(|i| self.vertices[i].clone()).collect())
    }

    pub fn level_indices(&self, n: usize) -> Result<Range<usize>, TreeError> {
        self.levels
            .get(n)
            .cloned()
            .ok_or(TreeError::LevelOutOfRange(n, self.depth))
    }

    /// Number of vertices in `Λ_[0,n]`.
    pub fn ball_len(&self, n: usize) -> usize {
        self.levels[n.min(self.depth)].end
    }

    pub fn successors(&self, x: &VertexId) -> Result<Vec<VertexId>, TreeError> {
        let idx = self.index_of(x).ok_or_else(|| TreeError::UnknownVertex(x.clone()))?;
        Ok(self.children[idx].iter().map(|&c| self.vertices[c].clone()).collect())
    }

    pub fn children(&self, idx: usize) -> &[usize] {
        &self.children[idx]
    }

    pub fn parent(&self, idx: usize) -> Option<usize> {
        self.parent[idx]
    }

    pub fn level_of(&self, idx: usize) -> usize {
        self.vertices[idx].level()
    }

    pub fn is_leaf(&self, idx: usize) -> bool {
        self.children[idx].is_empty()
    }
}
