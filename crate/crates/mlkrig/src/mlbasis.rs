//! Sparse orthogonal multilevel operators W and L over a kd-tree.
//!
//! The construction cascades local orthogonal factorizations up the tree.
//! At each leaf the local design block X_j is factored; the trailing
//! orthonormal directions become W rows supported on that leaf and the
//! leading p directions (with their p x p coefficient block) are passed
//! upward. Each internal node re-factors its children's stacked
//! coefficient blocks: the p new detail directions, expanded through the
//! children's scaling vectors, become W rows supported on the node; the
//! rest cascades on. The root's p scaling vectors form L. Stacked, [W; L]
//! is orthogonal, W X = 0, and rows(W) = N - p.

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::linalg::{full_qr, pivot_rank};
use crate::par;
use crate::sparse::SparseRowMat;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct MultilevelBasis {
    w: SparseRowMat,
    wt: SparseRowMat,
    l: SparseRowMat,
    tree: KdTree,
    /// kd-tree node that generated each W row.
    row_node: Vec<usize>,
}

/// Scaling state passed up the cascade for one node.
struct NodeState {
    /// Original point indices covered by the node (tree order).
    indices: Vec<usize>,
    /// Orthonormal columns spanning the local trend space, |indices| x p.
    u: DMatrix<f64>,
    /// Coefficient block: X restricted to `indices` equals u * g.
    g: DMatrix<f64>,
}

/// One node's contribution: detail rows plus the state for its parent.
struct StagePiece {
    node: usize,
    level: usize,
    rows: Vec<Vec<(usize, f64)>>,
    state: NodeState,
}

fn sorted_row(indices: &[usize], weights: impl Iterator<Item = f64>) -> Vec<(usize, f64)> {
    let mut row: Vec<(usize, f64)> = indices.iter().copied().zip(weights).collect();
    row.sort_unstable_by_key(|&(c, _)| c);
    row
}

fn factor_leaf(x: &DMatrix<f64>, tree: &KdTree, leaf: usize) -> Result<StagePiece> {
    let p = x.ncols();
    let indices: Vec<usize> = tree.node_indices(leaf).to_vec();
    let n_j = indices.len();
    if n_j < p {
        return Err(Error::InsufficientLeaf { got: n_j, needed: p });
    }
    let mut block = DMatrix::<f64>::zeros(n_j, p);
    for (r, &i) in indices.iter().enumerate() {
        block.row_mut(r).copy_from(&x.row(i));
    }
    let (q, r, perm) = full_qr(&block);
    if pivot_rank(&r) < p {
        return Err(Error::DegenerateDesign {
            deficient: p - pivot_rank(&r),
            p,
            context: format!(" in the local block of kd-tree node {leaf}"),
        });
    }
    // g[:, perm[k]] = r[:, k] undoes the column pivoting
    let mut g = DMatrix::<f64>::zeros(p, p);
    for k in 0..p {
        for i in 0..p {
            g[(i, perm[k])] = r[(i, k)];
        }
    }
    let rows = (p..n_j)
        .map(|c| sorted_row(&indices, (0..n_j).map(|rr| q[(rr, c)])))
        .collect();
    Ok(StagePiece {
        node: leaf,
        level: tree.nodes()[leaf].level,
        rows,
        state: NodeState {
            indices,
            u: q.columns(0, p).into_owned(),
            g,
        },
    })
}

fn merge_children(node: usize, level: usize, left: NodeState, right: NodeState) -> StagePiece {
    let p = left.g.ncols();
    let (n1, n2) = (left.indices.len(), right.indices.len());
    let mut stacked = DMatrix::<f64>::zeros(2 * p, p);
    stacked.view_mut((0, 0), (p, p)).copy_from(&left.g);
    stacked.view_mut((p, 0), (p, p)).copy_from(&right.g);
    let (q, r, perm) = full_qr(&stacked);
    let mut g = DMatrix::<f64>::zeros(p, p);
    for k in 0..p {
        for i in 0..p {
            g[(i, perm[k])] = r[(i, k)];
        }
    }
    // expand a 2p coefficient vector through the children's scaling columns
    let expand = |coeff: nalgebra::DVectorView<f64>| -> DVector<f64> {
        let mut out = DVector::<f64>::zeros(n1 + n2);
        out.rows_mut(0, n1)
            .gemv(1.0, &left.u, &coeff.rows(0, p), 0.0);
        out.rows_mut(n1, n2)
            .gemv(1.0, &right.u, &coeff.rows(p, p), 0.0);
        out
    };
    let mut indices = left.indices;
    indices.extend_from_slice(&right.indices);
    let mut u = DMatrix::<f64>::zeros(n1 + n2, p);
    for k in 0..p {
        u.column_mut(k).copy_from(&expand(q.column(k)));
    }
    let rows = (p..2 * p)
        .map(|c| {
            let w = expand(q.column(c));
            sorted_row(&indices, w.iter().copied())
        })
        .collect();
    StagePiece {
        node,
        level,
        rows,
        state: NodeState { indices, u, g },
    }
}

impl MultilevelBasis {
    /// Hierarchical construction over `tree` for the design matrix `x`.
    ///
    /// Every leaf must hold at least p points; rank collapse in any local
    /// block is reported as a degenerate design naming the node.
    pub fn build(x: &DMatrix<f64>, tree: &KdTree) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if tree.len_points() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("tree over {n} points"),
                got: format!("{}", tree.len_points()),
            });
        }
        let leaves = tree.leaves();
        let leaf_pieces: Vec<Result<StagePiece>> =
            par::map_indexed(leaves.len(), |k| factor_leaf(x, tree, leaves[k]));

        let mut states: Vec<Option<NodeState>> = (0..tree.nodes().len()).map(|_| None).collect();
        // rows tagged (level, node, local index) for the level-major sort
        let mut tagged: Vec<(usize, usize, usize, Vec<(usize, f64)>)> = Vec::new();
        for piece in leaf_pieces {
            let piece = piece?;
            for (li, row) in piece.rows.into_iter().enumerate() {
                tagged.push((piece.level, piece.node, li, row));
            }
            states[piece.node] = Some(piece.state);
        }

        for level_nodes in tree.internal_by_level_desc() {
            let work: Vec<(usize, usize, NodeState, NodeState)> = level_nodes
                .iter()
                .map(|&v| {
                    let (c1, c2) = tree.nodes()[v].children.expect("internal node");
                    (
                        v,
                        tree.nodes()[v].level,
                        states[c1].take().expect("child state ready"),
                        states[c2].take().expect("child state ready"),
                    )
                })
                .collect();
            let pieces: Vec<StagePiece> = par::map_indexed(work.len(), |k| {
                let (v, level, l, r) = &work[k];
                // states move by value; map_indexed hands us &work, so clone the
                // small matrices out via a manual move-equivalent
                merge_children(
                    *v,
                    *level,
                    NodeState {
                        indices: l.indices.clone(),
                        u: l.u.clone(),
                        g: l.g.clone(),
                    },
                    NodeState {
                        indices: r.indices.clone(),
                        u: r.u.clone(),
                        g: r.g.clone(),
                    },
                )
            });
            drop(work);
            for piece in pieces {
                for (li, row) in piece.rows.into_iter().enumerate() {
                    tagged.push((piece.level, piece.node, li, row));
                }
                states[piece.node] = Some(piece.state);
            }
        }

        // a globally deficient X implies every leaf block is deficient, so
        // the per-leaf pivot checks already cover the root
        let root = states[tree.root()].take().expect("root state");

        // level-major, finest level first
        tagged.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        debug_assert_eq!(tagged.len(), n - p);
        let row_node: Vec<usize> = tagged.iter().map(|t| t.1).collect();
        let w = SparseRowMat::from_rows(n, tagged.into_iter().map(|t| t.3).collect());

        let l_rows: Vec<Vec<(usize, f64)>> = (0..p)
            .map(|k| sorted_row(&root.indices, root.u.column(k).iter().copied()))
            .collect();
        let l = SparseRowMat::from_rows(n, l_rows);

        let wt = w.transpose();
        Ok(Self {
            w,
            wt,
            l,
            tree: tree.clone(),
            row_node,
        })
    }

    pub fn n(&self) -> usize {
        self.w.ncols()
    }

    pub fn p(&self) -> usize {
        self.l.nrows()
    }

    /// Number of W rows, always N - p.
    pub fn w_rows(&self) -> usize {
        self.w.nrows()
    }

    pub fn levels(&self) -> usize {
        self.tree.levels()
    }

    pub fn nnz_w(&self) -> usize {
        self.w.nnz()
    }

    pub fn nnz_l(&self) -> usize {
        self.l.nnz()
    }

    pub fn w(&self) -> &SparseRowMat {
        &self.w
    }

    pub fn l(&self) -> &SparseRowMat {
        &self.l
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    pub(crate) fn row_node(&self) -> &[usize] {
        &self.row_node
    }

    /// W v, length N - p.
    pub fn apply_w(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n() {
            return Err(self.shape_err(v.len(), self.n()));
        }
        Ok(self.w.matvec(v))
    }

    /// W^T u, length N.
    pub fn apply_wt(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.w_rows() {
            return Err(self.shape_err(u.len(), self.w_rows()));
        }
        Ok(self.wt.matvec(u))
    }

    /// L v, length p.
    pub fn apply_l(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n() {
            return Err(self.shape_err(v.len(), self.n()));
        }
        Ok(self.l.matvec(v))
    }

    fn shape_err(&self, got: usize, expected: usize) -> Error {
        Error::ShapeMismatch {
            expected: format!("vector of length {expected}"),
            got: format!("{got}"),
        }
    }
}

/// Dense single-shot orthonormal complement of span(X): the oracle the
/// sparse construction is tested against. Returns (W, L) with W of shape
/// (N-p) x N and L of shape p x N.
pub fn dense_orthonormal_complement(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, p) = (x.nrows(), x.ncols());
    let (q, r, _) = full_qr(x);
    if pivot_rank(&r) < p {
        return Err(Error::DegenerateDesign {
            deficient: p - pivot_rank(&r),
            p,
            context: String::new(),
        });
    }
    let w = q.columns(p, n - p).transpose().into_owned();
    let l = q.columns(0, p).transpose().into_owned();
    Ok((w, l))
}
