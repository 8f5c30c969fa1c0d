//! Minimum-spanning-tree k-nearest-neighbor graph.
//!
//! A Kruskal tree guarantees that the underlying undirected graph is
//! connected; each vertex whose in-degree is still below `delta` then
//! receives directed edges from its nearest non-neighbors.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;

use crate::error::{LsiError, Result};
use crate::geometry::DistanceMatrix;
use crate::par;

pub const DEFAULT_DELTA: usize = 8;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub fn set_count(&self) -> usize {
        self.sets
    }
}

/// Undirected tree edge with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// One direction of a symmetrized spanning-tree edge.
    Tree,
    /// Directed nearest-neighbor edge added to reach the minimum in-degree.
    Augmented,
    /// Supplied directly through [`NeighborGraph::from_edges`].
    Manual,
}

/// Directed edge `src -> dst` as stored in the in-adjacency list of `dst`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InEdge {
    pub src: usize,
    pub weight: f64,
    pub kind: EdgeKind,
}

/// Kruskal's algorithm over the complete graph defined by `d`.
///
/// Candidate edges are ordered by `(weight, u, v)`, so equal weights resolve
/// toward smaller vertex indices and the tree is fully determined by `d`.
pub fn build_mst(d: &DistanceMatrix) -> Result<Vec<TreeEdge>> {
    let n = d.n();
    if n < 2 {
        return Err(LsiError::invalid(format!(
            "spanning tree needs at least 2 vertices, got {n}"
        )));
    }
    if n > u32::MAX as usize {
        return Err(LsiError::TooLarge {
            what: "spanning tree",
            size: n,
            cap: u32::MAX as usize,
        });
    }
    let mut cand: Vec<(f64, u32, u32)> = Vec::with_capacity(n * (n - 1) / 2);
    for u in 0..n {
        let row = d.row(u);
        for (v, &w) in row.iter().enumerate().skip(u + 1) {
            cand.push((w, u as u32, v as u32));
        }
    }
    par::sort_unstable_by(&mut cand, |a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut uf = UnionFind::new(n);
    let mut tree = Vec::with_capacity(n - 1);
    for (w, u, v) in cand {
        if uf.union(u as usize, v as usize) {
            tree.push(TreeEdge {
                u: u as usize,
                v: v as usize,
                weight: w,
            });
            if tree.len() == n - 1 {
                break;
            }
        }
    }
    Ok(tree)
}

/// Directed graph over `n` vertices stored as sorted in-adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    delta: usize,
    in_edges: Vec<Vec<InEdge>>,
}

impl NeighborGraph {
    /// Builds a graph from explicit directed edges `(src, dst, weight)`,
    /// bypassing the spanning tree. Duplicate edges keep the first weight.
    pub fn from_edges(n: usize, delta: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut in_edges: Vec<Vec<InEdge>> = vec![Vec::new(); n];
        for &(src, dst, weight) in edges {
            for idx in [src, dst] {
                if idx >= n {
                    return Err(LsiError::IndexOutOfRange { index: idx, len: n });
                }
            }
            if src == dst {
                return Err(LsiError::invalid(format!("self-loop on vertex {src}")));
            }
            if !in_edges[dst].iter().any(|e| e.src == src) {
                in_edges[dst].push(InEdge {
                    src,
                    weight,
                    kind: EdgeKind::Manual,
                });
            }
        }
        for list in &mut in_edges {
            list.sort_by_key(|e| e.src);
        }
        Ok(Self { delta, in_edges })
    }

    pub fn n(&self) -> usize {
        self.in_edges.len()
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn edge_count(&self) -> usize {
        self.in_edges.iter().map(Vec::len).sum()
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.in_edges[i].len()
    }

    /// Edges into `i`, sorted by source index.
    pub fn in_edges(&self, i: usize) -> Result<&[InEdge]> {
        self.in_edges
            .get(i)
            .map(Vec::as_slice)
            .ok_or(LsiError::IndexOutOfRange {
                index: i,
                len: self.n(),
            })
    }

    /// Sorted sources `j` of edges `j -> i`.
    pub fn in_neighbors(&self, i: usize) -> Result<Vec<usize>> {
        Ok(self.in_edges(i)?.iter().map(|e| e.src).collect())
    }

    /// All directed edges as `(src, dst, weight)`, ordered by `(dst, src)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.in_edges
            .iter()
            .enumerate()
            .flat_map(|(dst, list)| list.iter().map(move |e| (e.src, dst, e.weight)))
    }

    /// Whether the underlying undirected graph is connected.
    pub fn is_connected(&self) -> bool {
        let mut uf = UnionFind::new(self.n());
        for (src, dst, _) in self.edges() {
            uf.union(src, dst);
        }
        uf.set_count() <= 1
    }

    /// True iff every vertex `>= p` can be reached from some vertex `< p`
    /// by following directed edges.
    pub fn assert_anchor_reachability(&self, p: usize) -> Result<bool> {
        let n = self.n();
        if p == 0 {
            return Err(LsiError::NoAnchors);
        }
        if p > n {
            return Err(LsiError::IndexOutOfRange { index: p, len: n });
        }
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (src, dst, _) in self.edges() {
            out[src].push(dst);
        }
        Ok(first_unreachable(&out, p).is_none())
    }

    pub fn stats(&self) -> GraphStats {
        let degrees = self.in_edges.iter().map(Vec::len);
        GraphStats {
            vertices: self.n(),
            edges: self.edge_count(),
            min_in_degree: degrees.clone().min().unwrap_or(0),
            max_in_degree: degrees.max().unwrap_or(0),
            connected: self.is_connected(),
        }
    }
}

/// Multi-source BFS from `0..p` over out-adjacency lists; returns the first
/// vertex that is never visited.
pub(crate) fn first_unreachable(out: &[Vec<usize>], p: usize) -> Option<usize> {
    let n = out.len();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = (0..p.min(n)).collect();
    for &a in &queue {
        seen[a] = true;
    }
    while let Some(u) = queue.pop_front() {
        for &v in &out[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.iter().position(|s| !s)
}

/// Symmetrizes `tree` and adds directed nearest-neighbor edges into every
/// vertex whose in-degree is below `delta`.
///
/// Candidate sources for vertex `i` are the vertices with no edge into `i`,
/// taken in order of `(distance, index)`. Vertices that already meet the
/// bound are left alone.
pub fn augment_to_min_degree(
    tree: &[TreeEdge],
    d: &DistanceMatrix,
    delta: usize,
) -> Result<NeighborGraph> {
    let n = d.n();
    if delta == 0 {
        return Err(LsiError::invalid("delta must be at least 1"));
    }
    if delta >= n {
        return Err(LsiError::invalid(format!(
            "delta = {delta} needs at least {} vertices, have {n}",
            delta + 1
        )));
    }
    if tree.len() != n - 1 {
        return Err(LsiError::invalid(format!(
            "spanning tree over {n} vertices needs {} edges, got {}",
            n - 1,
            tree.len()
        )));
    }
    let mut uf = UnionFind::new(n);
    let mut tree_in: Vec<Vec<InEdge>> = vec![Vec::new(); n];
    for e in tree {
        if e.u >= n || e.v >= n || e.u == e.v {
            return Err(LsiError::invalid(format!("bad tree edge ({}, {})", e.u, e.v)));
        }
        if !uf.union(e.u, e.v) {
            return Err(LsiError::invalid("tree edges contain a cycle"));
        }
        for (src, dst) in [(e.u, e.v), (e.v, e.u)] {
            tree_in[dst].push(InEdge {
                src,
                weight: e.weight,
                kind: EdgeKind::Tree,
            });
        }
    }

    let in_edges = par::map_range(n, |i| {
        let mut list = tree_in[i].clone();
        if list.len() < delta {
            let need = delta - list.len();
            let mut linked = vec![false; n];
            linked[i] = true;
            for e in &list {
                linked[e.src] = true;
            }
            let row = d.row(i);
            let mut cand: Vec<usize> = (0..n).filter(|&j| !linked[j]).collect();
            let by_distance =
                |a: &usize, b: &usize| -> Ordering { row[*a].total_cmp(&row[*b]).then(a.cmp(b)) };
            if cand.len() > need {
                cand.select_nth_unstable_by(need - 1, by_distance);
                cand.truncate(need);
            }
            cand.sort_unstable_by(by_distance);
            list.extend(cand.into_iter().map(|src| InEdge {
                src,
                weight: row[src],
                kind: EdgeKind::Augmented,
            }));
        }
        list.sort_by_key(|e| e.src);
        list
    });
    Ok(NeighborGraph { delta, in_edges })
}

/// Spanning tree plus nearest-neighbor augmentation in one call.
pub fn mst_knn_graph(d: &DistanceMatrix, delta: usize) -> Result<NeighborGraph> {
    let tree = build_mst(d)?;
    augment_to_min_degree(&tree, d, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphStats {
    pub vertices: usize,
    pub edges: usize,
    pub min_in_degree: usize,
    pub max_in_degree: usize,
    pub connected: bool,
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vertices={}", self.vertices)?;
        writeln!(f, "edges={}", self.edges)?;
        writeln!(f, "min_in_degree={}", self.min_in_degree)?;
        writeln!(f, "max_in_degree={}", self.max_in_degree)?;
        writeln!(f, "connected={}", self.connected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euclidean_distance_matrix, DomainMatrix};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(points: &[f64]) -> DistanceMatrix {
        let x = Array2::from_shape_vec((points.len(), 1), points.to_vec()).unwrap();
        let ids = (0..points.len()).map(|i| i.to_string()).collect();
        euclidean_distance_matrix(&DomainMatrix::new(ids, x).unwrap())
    }

    fn random(n: usize, d: usize, seed: u64) -> DistanceMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let ids = (0..n).map(|i| i.to_string()).collect();
        euclidean_distance_matrix(&DomainMatrix::new(ids, x).unwrap())
    }

    #[test]
    fn path_mst() {
        let t = build_mst(&line(&[0.0, 1.0, 3.0])).unwrap();
        assert_eq!(
            t,
            vec![
                TreeEdge { u: 0, v: 1, weight: 1.0 },
                TreeEdge { u: 1, v: 2, weight: 2.0 }
            ]
        );
        assert_eq!(build_mst(&line(&[0.0, 5.0])).unwrap().len(), 1);
        let single = DistanceMatrix::from_row_major(1, vec![0.0]).unwrap();
        assert!(build_mst(&single).is_err());
    }

    #[test]
    fn ties_prefer_smaller_index() {
        // Equilateral-ish: all three distances equal.
        let d = DistanceMatrix::from_row_major(3, vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0])
            .unwrap();
        let t = build_mst(&d).unwrap();
        assert_eq!((t[0].u, t[0].v), (0, 1));
        assert_eq!((t[1].u, t[1].v), (0, 2));
    }

    #[test]
    fn path_augmentation_delta_two() {
        let d = line(&[0.0, 1.0, 3.0]);
        let g = mst_knn_graph(&d, 2).unwrap();
        assert_eq!(g.in_neighbors(0).unwrap(), vec![1, 2]);
        assert_eq!(g.in_neighbors(1).unwrap(), vec![0, 2]);
        assert_eq!(g.in_neighbors(2).unwrap(), vec![0, 1]);
        let kinds: Vec<_> = g.in_edges(1).unwrap().iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EdgeKind::Tree, EdgeKind::Tree]);
        assert_eq!(g.in_edges(0).unwrap()[1].kind, EdgeKind::Augmented);
        assert_eq!(g.in_edges(2).unwrap()[0].kind, EdgeKind::Augmented);
        let s = g.stats();
        assert_eq!(s.min_in_degree, 2);
        assert!(s.connected);
    }

    #[test]
    fn delta_one_leaves_tree_unchanged() {
        let d = random(15, 3, 5);
        let tree = build_mst(&d).unwrap();
        let g = augment_to_min_degree(&tree, &d, 1).unwrap();
        assert_eq!(g.edge_count(), 2 * tree.len());
        assert!(g
            .edges()
            .all(|(s, t, _)| g.in_edges(t).unwrap().iter().any(|e| e.src == s && e.kind == EdgeKind::Tree)));
    }

    #[test]
    fn delta_too_large() {
        let d = line(&[0.0, 1.0, 3.0]);
        assert!(mst_knn_graph(&d, 3).is_err());
        assert!(mst_knn_graph(&d, 0).is_err());
    }

    #[test]
    fn augmented_sources_are_nearest_non_neighbors() {
        let d = random(20, 4, 9);
        let g = mst_knn_graph(&d, 4).unwrap();
        for i in 0..20 {
            let edges = g.in_edges(i).unwrap();
            assert!(edges.len() >= 4);
            let tree: Vec<usize> = edges
                .iter()
                .filter(|e| e.kind == EdgeKind::Tree)
                .map(|e| e.src)
                .collect();
            let added: Vec<usize> = edges
                .iter()
                .filter(|e| e.kind == EdgeKind::Augmented)
                .map(|e| e.src)
                .collect();
            if tree.len() >= 4 {
                assert!(added.is_empty());
                continue;
            }
            assert_eq!(added.len(), 4 - tree.len());
            // Brute force: rank every non-tree vertex by (distance, index).
            let mut rank: Vec<usize> = (0..20).filter(|&j| j != i && !tree.contains(&j)).collect();
            rank.sort_by(|&a, &b| d.get(i, a).partial_cmp(&d.get(i, b)).unwrap().then(a.cmp(&b)));
            let mut expect = rank[..added.len()].to_vec();
            expect.sort();
            assert_eq!(added, expect, "vertex {i}");
        }
    }

    #[test]
    fn in_neighbors_out_of_range() {
        let g = mst_knn_graph(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        assert!(matches!(
            g.in_neighbors(3),
            Err(LsiError::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn in_neighbors_matches_edge_scan() {
        let g = mst_knn_graph(&random(30, 3, 1), 5).unwrap();
        let all: Vec<_> = g.edges().collect();
        for i in 0..30 {
            let mut expect: Vec<usize> = all.iter().filter(|e| e.1 == i).map(|e| e.0).collect();
            expect.sort();
            assert_eq!(g.in_neighbors(i).unwrap(), expect);
        }
    }

    #[test]
    fn reachability() {
        let g = mst_knn_graph(&random(12, 2, 4), 3).unwrap();
        for p in 1..=12 {
            assert!(g.assert_anchor_reachability(p).unwrap());
        }
        assert!(matches!(g.assert_anchor_reachability(0), Err(LsiError::NoAnchors)));

        // 0 <-> 1 and 2 <-> 3 with no bridge.
        let split = NeighborGraph::from_edges(
            4,
            1,
            &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)],
        )
        .unwrap();
        assert!(!split.assert_anchor_reachability(1).unwrap());
        assert!(!split.is_connected());
        // Directed edge 3 -> 0 connects the undirected graph but not the flow.
        let one_way =
            NeighborGraph::from_edges(3, 1, &[(0, 1, 1.0), (2, 0, 1.0)]).unwrap();
        assert!(one_way.is_connected());
        assert!(!one_way.assert_anchor_reachability(1).unwrap());
    }

    #[test]
    fn from_edges_rejects_self_loop() {
        assert!(NeighborGraph::from_edges(2, 1, &[(1, 1, 0.0)]).is_err());
        assert!(NeighborGraph::from_edges(2, 1, &[(0, 2, 0.0)]).is_err());
    }

    #[test]
    fn stats_format() {
        let g = mst_knn_graph(&line(&[0.0, 1.0, 3.0]), 2).unwrap();
        assert_eq!(
            g.stats().to_string(),
            "vertices=3\nedges=6\nmin_in_degree=2\nmax_in_degree=2\nconnected=true\n"
        );
    }
}
