//! Binary kd-tree partition of observation locations.
//!
//! Median split along the axis of largest extent; a node splits while it
//! holds at least `2 * leaf_min` points, so every leaf ends up with
//! between `leaf_min` and `2 * leaf_min - 1` points. Construction is
//! deterministic for a fixed input order (coordinate ties break toward the
//! lower original index).

use crate::data::Points;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KdNode {
    /// Depth in the tree; the root is level 1.
    pub level: usize,
    /// Range into `KdTree::order` holding this node's point indices.
    pub start: usize,
    pub end: usize,
    /// Children node ids, None for a leaf.
    pub children: Option<(usize, usize)>,
    /// Split axis and value for internal nodes.
    pub split: Option<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<KdNode>,
    /// Permutation of 0..N; each node owns a contiguous slice.
    order: Vec<usize>,
    levels: usize,
    leaf_min: usize,
}

impl KdTree {
    /// Recursive median-split construction.
    pub fn build(locations: &Points, leaf_min: usize) -> Result<Self> {
        let n = locations.len();
        if leaf_min == 0 {
            return Err(Error::ParamDomain("leaf_min must be positive".into()));
        }
        if n < leaf_min {
            return Err(Error::InsufficientData(format!(
                "need at least leaf_min = {leaf_min} points, got {n}"
            )));
        }
        let mut tree = KdTree {
            nodes: Vec::new(),
            order: (0..n).collect(),
            levels: 0,
            leaf_min,
        };
        tree.split_node(locations, 0, n, 1);
        tree.levels = tree.nodes.iter().map(|nd| nd.level).max().unwrap_or(1);
        Ok(tree)
    }

    fn split_node(&mut self, locations: &Points, start: usize, end: usize, level: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(KdNode {
            level,
            start,
            end,
            children: None,
            split: None,
        });
        let len = end - start;
        if len < 2 * self.leaf_min {
            return id;
        }
        // widest-extent axis over this node's points
        let dim = locations.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.order[start..end] {
            for (k, &v) in locations.point(i).iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        let axis = (0..dim)
            .max_by(|&a, &b| {
                (hi[a] - lo[a])
                    .partial_cmp(&(hi[b] - lo[b]))
                    .unwrap()
                    .then(b.cmp(&a)) // tie -> lower axis
            })
            .unwrap();
        self.order[start..end].sort_unstable_by(|&a, &b| {
            locations.point(a)[axis]
                .partial_cmp(&locations.point(b)[axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mid = start + len / 2;
        let split_value = locations.point(self.order[mid])[axis];
        let left = self.split_node(locations, start, mid, level + 1);
        let right = self.split_node(locations, mid, end, level + 1);
        self.nodes[id].children = Some((left, right));
        self.nodes[id].split = Some((axis, split_value));
        id
    }

    pub fn len_points(&self) -> usize {
        self.order.len()
    }

    /// Number of levels t (root = 1).
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn leaf_min(&self) -> usize {
        self.leaf_min
    }

    pub fn nodes(&self) -> &[KdNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        0
    }

    /// Original point indices owned by node `id`.
    pub fn node_indices(&self, id: usize) -> &[usize] {
        let nd = &self.nodes[id];
        &self.order[nd.start..nd.end]
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.nodes[id].children.is_none()
    }

    /// Leaf node ids in traversal (construction) order.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.is_leaf(i)).collect()
    }

    /// Internal node ids grouped by level, deepest level first.
    pub fn internal_by_level_desc(&self) -> Vec<Vec<usize>> {
        let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); self.levels + 1];
        for (i, nd) in self.nodes.iter().enumerate() {
            if nd.children.is_some() {
                by_level[nd.level].push(i);
            }
        }
        by_level.into_iter().rev().filter(|v| !v.is_empty()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> Points {
        let mut rng = stream_rng(seed, 1000);
        Points::new((0..n * dim).map(|_| rng.gen::<f64>()).collect(), dim).unwrap()
    }

    fn leaf_sizes(tree: &KdTree) -> Vec<usize> {
        tree.leaves()
            .iter()
            .map(|&l| tree.node_indices(l).len())
            .collect()
    }

    #[test]
    fn single_leaf_when_too_small_to_split() {
        let pts = random_points(32, 2, 3);
        let tree = KdTree::build(&pts, 32).unwrap();
        assert_eq!(tree.levels(), 1);
        assert_eq!(tree.leaves().len(), 1);
        assert_eq!(tree.node_indices(0).len(), 32);
    }

    #[test]
    fn four_leaves_at_quadruple_leaf_min() {
        let pts = random_points(128, 3, 4);
        let tree = KdTree::build(&pts, 32).unwrap();
        assert_eq!(tree.levels(), 3);
        assert_eq!(tree.leaves().len(), 4);
        for s in leaf_sizes(&tree) {
            assert!((32..64).contains(&s), "leaf size {s}");
        }
    }

    #[test]
    fn partition_covers_every_index_once() {
        let pts = random_points(777, 2, 5);
        let tree = KdTree::build(&pts, 16).unwrap();
        let mut seen: Vec<usize> = tree
            .leaves()
            .iter()
            .flat_map(|&l| tree.node_indices(l).iter().copied())
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..777).collect::<Vec<_>>());
        for s in leaf_sizes(&tree) {
            assert!((16..32).contains(&s), "leaf size {s}");
        }
    }

    #[test]
    fn level_count_tracks_log2() {
        let pts = random_points(128_000, 3, 6);
        let tree = KdTree::build(&pts, 32).unwrap();
        let bound = ((128_000.0f64 / 32.0).log2().ceil() as usize) + 1;
        assert!(tree.levels() <= bound, "t = {} > {}", tree.levels(), bound);
        assert!(
            tree.levels() >= 12 && tree.levels() <= 13,
            "t = {}",
            tree.levels()
        );
    }

    #[test]
    fn deterministic_for_fixed_input() {
        let pts = random_points(500, 2, 7);
        let t1 = KdTree::build(&pts, 20).unwrap();
        let t2 = KdTree::build(&pts, 20).unwrap();
        assert_eq!(t1.order, t2.order);
        assert_eq!(t1.levels(), t2.levels());
    }

    #[test]
    fn too_few_points_rejected() {
        let pts = random_points(10, 2, 8);
        assert!(KdTree::build(&pts, 11).is_err());
    }
}
