//! Rooted (multi)graphs, balls, and local statistics.
//!
//! Vertices are dense ids `0..n`. Multi-edges are stored repeated, loops as
//! `(v, v)`; a loop contributes 2 to the degree of its endpoint, matching
//! half-edge semantics of the configuration model.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::canon;
use crate::error::{Error, Result};

/// Spin assignment, one value in {-1,+1} per vertex.
pub type SpinConfig = Vec<i8>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootedGraph {
    n: usize,
    root: usize,
    /// Normalized edge list: each edge as (min, max), sorted lexicographically.
    edges: Vec<(usize, usize)>,
    /// Sorted neighbor multisets; a loop at v lists v twice in adj[v].
    adj: Vec<Vec<usize>>,
    /// Optional vertex types, labels in 0..q.
    types: Option<Vec<usize>>,
}

impl RootedGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>, root: usize) -> Result<Self> {
        Self::build(n, edges, root, None)
    }

    pub fn with_types(
        n: usize,
        edges: Vec<(usize, usize)>,
        root: usize,
        types: Vec<usize>,
    ) -> Result<Self> {
        Self::build(n, edges, root, Some(types))
    }

    fn build(
        n: usize,
        edges: Vec<(usize, usize)>,
        root: usize,
        types: Option<Vec<usize>>,
    ) -> Result<Self> {
        if root >= n {
            return Err(Error::VertexOutOfRange(root, n));
        }
        if let Some(t) = &types {
            if t.len() != n {
                return Err(Error::BadParameter(format!(
                    "types length {} != n {}",
                    t.len(),
                    n
                )));
            }
        }
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(u, v) in &edges {
            if u >= n {
                return Err(Error::VertexOutOfRange(u, n));
            }
            if v >= n {
                return Err(Error::VertexOutOfRange(v, n));
            }
            norm.push((u.min(v), u.max(v)));
        }
        norm.sort_unstable();
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &norm {
            adj[u].push(v);
            adj[v].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        Ok(RootedGraph {
            n,
            root,
            edges: norm,
            adj,
            types,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn set_root(&mut self, root: usize) -> Result<()> {
        if root >= self.n {
            return Err(Error::VertexOutOfRange(root, self.n));
        }
        self.root = root;
        Ok(())
    }

    /// Undirected edge list, (min,max) sorted; loops as (v,v).
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// No loops and no repeated edges. Edges are stored normalized and
    /// sorted, so defects are adjacent in the list.
    pub fn is_simple(&self) -> bool {
        self.edges.iter().all(|&(u, v)| u != v) && self.edges.windows(2).all(|w| w[0] != w[1])
    }

    /// Neighbor multiset of v (sorted); a loop lists v twice.
    pub fn adj(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// Degree; loops count twice.
    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn types(&self) -> Option<&[usize]> {
        self.types.as_deref()
    }

    pub fn vertex_type(&self, v: usize) -> Option<usize> {
        self.types.as_ref().map(|t| t[v])
    }

    /// Connected, n-1 edges, no loops/multi-edges.
    pub fn is_tree(&self) -> bool {
        if self.edges.len() + 1 != self.n {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.n
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.n
    }

    /// BFS distances from v; usize::MAX where unreachable.
    pub fn distances(&self, v: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n];
        dist[v] = 0;
        let mut queue = std::collections::VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Parent map of a tree, oriented away from the root. parent[root] = usize::MAX.
    pub fn tree_parents(&self) -> Result<Vec<usize>> {
        if !self.is_tree() {
            return Err(Error::NotATree);
        }
        let mut parent = vec![usize::MAX; self.n];
        let mut order = vec![self.root];
        let mut seen = vec![false; self.n];
        seen[self.root] = true;
        let mut i = 0;
        while i < order.len() {
            let v = order[i];
            i += 1;
            for &w in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = v;
                    order.push(w);
                }
            }
        }
        Ok(parent)
    }

    /// Vertices in BFS order from the root (tree or general graph).
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut order = vec![self.root];
        let mut seen = vec![false; self.n];
        seen[self.root] = true;
        let mut i = 0;
        while i < order.len() {
            let v = order[i];
            i += 1;
            for &w in &self.adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    order.push(w);
                }
            }
        }
        order
    }
}

/// A rooted graph together with spin marks.
#[derive(Clone, Debug)]
pub struct RootedNetwork {
    pub graph: RootedGraph,
    pub marks: SpinConfig,
}

impl RootedNetwork {
    pub fn new(graph: RootedGraph, marks: SpinConfig) -> Result<Self> {
        if marks.len() != graph.n() {
            return Err(Error::BadParameter(format!(
                "marks length {} != n {}",
                marks.len(),
                graph.n()
            )));
        }
        Ok(RootedNetwork { graph, marks })
    }
}

/// Induced subgraph on the ball of radius t around a center, re-rooted there.
#[derive(Clone, Debug)]
pub struct BallView {
    graph: RootedGraph,
    radius: usize,
    /// local id -> vertex id in the parent graph; center is local 0.
    to_parent: Vec<usize>,
    /// local id -> distance from center.
    dist: Vec<usize>,
}

impl BallView {
    pub fn graph(&self) -> &RootedGraph {
        &self.graph
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn to_parent(&self) -> &[usize] {
        &self.to_parent
    }

    pub fn dist(&self) -> &[usize] {
        &self.dist
    }

    /// Local ids at distance exactly `radius`.
    pub fn frontier(&self) -> Vec<usize> {
        (0..self.graph.n())
            .filter(|&v| self.dist[v] == self.radius)
            .collect()
    }
}

/// Ball of radius t around v: BFS-induced subgraph with all edges among its vertices.
pub fn ball(g: &RootedGraph, v: usize, t: usize) -> Result<BallView> {
    if v >= g.n() {
        return Err(Error::VertexOutOfRange(v, g.n()));
    }
    let mut dist_of = HashMap::new();
    dist_of.insert(v, 0usize);
    let mut order = vec![v];
    let mut i = 0;
    while i < order.len() {
        let u = order[i];
        i += 1;
        let du = dist_of[&u];
        if du == t {
            continue;
        }
        for &w in g.adj(u) {
            if !dist_of.contains_key(&w) {
                dist_of.insert(w, du + 1);
                order.push(w);
            }
        }
    }
    let mut local = HashMap::new();
    for (idx, &u) in order.iter().enumerate() {
        local.insert(u, idx);
    }
    let mut edges = Vec::new();
    for &(a, b) in g.edges() {
        if let (Some(&la), Some(&lb)) = (local.get(&a), local.get(&b)) {
            edges.push((la, lb));
        }
    }
    let types = g
        .types()
        .map(|t| order.iter().map(|&u| t[u]).collect::<Vec<_>>());
    let graph = match types {
        Some(ty) => RootedGraph::with_types(order.len(), edges, 0, ty)?,
        None => RootedGraph::new(order.len(), edges, 0)?,
    };
    let dist = order.iter().map(|u| dist_of[u]).collect();
    Ok(BallView {
        graph,
        radius: t,
        to_parent: order,
        dist,
    })
}

/// (1/n) Σ_i Δ_i 1{Δ_i ≥ ell}: tail degree mass used as the sparseness statistic.
pub fn uniform_sparseness_stat(g: &RootedGraph, ell: usize) -> f64 {
    let total: usize = (0..g.n())
        .map(|v| g.degree(v))
        .filter(|&d| d >= ell)
        .sum();
    total as f64 / g.n() as f64
}

/// Empirical law of the rooted t-ball over all centers: canonical code -> frequency.
///
/// Type decorations participate in the code when present. Frequencies sum to 1.
pub fn empirical_ball_law(g: &RootedGraph, t: usize) -> Result<HashMap<Vec<u8>, f64>> {
    let mut counts: HashMap<Vec<u8>, usize> = HashMap::new();
    for v in 0..g.n() {
        let b = ball(g, v, t)?;
        let code = canon::canonical_code(b.graph())?;
        *counts.entry(code).or_insert(0) += 1;
    }
    let n = g.n() as f64;
    Ok(counts
        .into_iter()
        .map(|(code, c)| (code, c as f64 / n))
        .collect())
}

/// Text format: header `n m [typed]`, one `i j` line per edge, then `type i q` lines
/// when typed. Writing a graph read from this format reproduces the bytes exactly.
pub fn write_graph(g: &RootedGraph) -> String {
    let mut out = String::new();
    if g.types().is_some() {
        let _ = writeln!(out, "{} {} typed", g.n(), g.m());
    } else {
        let _ = writeln!(out, "{} {}", g.n(), g.m());
    }
    for &(u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    if let Some(types) = g.types() {
        for (i, q) in types.iter().enumerate() {
            let _ = writeln!(out, "type {i} {q}");
        }
    }
    out
}

pub fn read_graph(text: &str) -> Result<RootedGraph> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::BadGraphFile("empty file".into()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() < 2 {
        return Err(Error::BadGraphFile(format!("bad header: {header}")));
    }
    let n: usize = head[0]
        .parse()
        .map_err(|_| Error::BadGraphFile(format!("bad n: {}", head[0])))?;
    let m: usize = head[1]
        .parse()
        .map_err(|_| Error::BadGraphFile(format!("bad m: {}", head[1])))?;
    let typed = head.get(2) == Some(&"typed");
    let mut edges = Vec::with_capacity(m);
    let mut types = if typed { Some(vec![0usize; n]) } else { None };
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.is_empty() {
            continue;
        }
        if parts[0] == "type" {
            if parts.len() != 3 {
                return Err(Error::BadGraphFile(format!("bad type line: {line}")));
            }
            let i: usize = parts[1]
                .parse()
                .map_err(|_| Error::BadGraphFile(format!("bad type line: {line}")))?;
            let q: usize = parts[2]
                .parse()
                .map_err(|_| Error::BadGraphFile(format!("bad type line: {line}")))?;
            match &mut types {
                Some(t) if i < n => t[i] = q,
                _ => return Err(Error::BadGraphFile(format!("unexpected type line: {line}"))),
            }
        } else {
            if parts.len() != 2 {
                return Err(Error::BadGraphFile(format!("bad edge line: {line}")));
            }
            let u: usize = parts[0]
                .parse()
                .map_err(|_| Error::BadGraphFile(format!("bad edge line: {line}")))?;
            let v: usize = parts[1]
                .parse()
                .map_err(|_| Error::BadGraphFile(format!("bad edge line: {line}")))?;
            edges.push((u, v));
        }
    }
    if edges.len() != m {
        return Err(Error::BadGraphFile(format!(
            "edge count {} != declared {m}",
            edges.len()
        )));
    }
    match types {
        Some(t) => RootedGraph::with_types(n, edges, 0, t),
        None => RootedGraph::new(n, edges, 0),
    }
}

pub fn read_graph_file(path: &Path) -> Result<RootedGraph> {
    read_graph(&std::fs::read_to_string(path)?)
}

pub fn write_graph_file(g: &RootedGraph, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, write_graph(g))?)
}

/// Path graph 0-1-...-(n-1), rooted at 0.
pub fn path_graph(n: usize) -> RootedGraph {
    let edges = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    RootedGraph::new(n, edges, 0).unwrap()
}

/// Cycle on n vertices, rooted at 0.
pub fn cycle_graph(n: usize) -> RootedGraph {
    let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
    RootedGraph::new(n, edges, 0).unwrap()
}

/// Complete graph on n vertices, rooted at 0.
pub fn complete_graph(n: usize) -> RootedGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((i, j));
        }
    }
    RootedGraph::new(n, edges, 0).unwrap()
}

/// Rooted k-regular tree truncated at the given depth: root has k children,
/// every later internal vertex k-1. Depth 0 is a single vertex.
pub fn regular_tree(k: usize, depth: usize) -> RootedGraph {
    let mut edges = Vec::new();
    let mut prev_level = vec![0usize];
    let mut next_id = 1usize;
    for d in 0..depth {
        let mut level = Vec::new();
        for &v in &prev_level {
            let children = if d == 0 { k } else { k - 1 };
            for _ in 0..children {
                edges.push((v, next_id));
                level.push(next_id);
                next_id += 1;
            }
        }
        prev_level = level;
    }
    RootedGraph::new(next_id, edges, 0).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_radius_one_on_path() {
        let g = path_graph(3);
        let b = ball(&g, 0, 1).unwrap();
        assert_eq!(b.graph().n(), 2);
        assert_eq!(b.graph().m(), 1);
    }

    #[test]
    fn ball_radius_zero() {
        let g = cycle_graph(5);
        let b = ball(&g, 3, 0).unwrap();
        assert_eq!(b.graph().n(), 1);
        assert_eq!(b.graph().m(), 0);
        assert_eq!(b.to_parent(), &[3]);
    }

    #[test]
    fn ball_counts_on_regular_tree() {
        let g = regular_tree(3, 3);
        let b = ball(&g, 0, 2).unwrap();
        assert_eq!(b.graph().n(), 1 + 3 + 6);
        assert_eq!(b.frontier().len(), 6);
    }

    #[test]
    fn ball_nesting() {
        let g = regular_tree(3, 4);
        let b2 = ball(&g, 0, 2).unwrap();
        let b3 = ball(&g, 0, 3).unwrap();
        let inner = ball(b3.graph(), 0, 2).unwrap();
        assert_eq!(
            canon::canonical_code(inner.graph()).unwrap(),
            canon::canonical_code(b2.graph()).unwrap()
        );
    }

    #[test]
    fn sparseness_stat() {
        let g = regular_tree(3, 1); // star K_{1,3}
        assert_eq!(uniform_sparseness_stat(&g, 4), 0.0);
        assert!((uniform_sparseness_stat(&g, 0) - 6.0 / 4.0).abs() < 1e-15);
        let mut edges = Vec::new();
        for i in 1..6 {
            edges.push((0, i));
        }
        let star5 = RootedGraph::new(6, edges, 0).unwrap();
        assert!((uniform_sparseness_stat(&star5, 5) - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn loops_count_twice() {
        let g = RootedGraph::new(2, vec![(0, 0), (0, 1)], 0).unwrap();
        assert_eq!(g.degree(0), 3);
        assert_eq!(g.degree(1), 1);
    }

    #[test]
    fn ball_law_cycle_is_single_class() {
        let g = cycle_graph(6);
        let law = empirical_ball_law(&g, 1).unwrap();
        assert_eq!(law.len(), 1);
        let total: f64 = law.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ball_law_path_two_classes() {
        let g = path_graph(3);
        let law = empirical_ball_law(&g, 1).unwrap();
        assert_eq!(law.len(), 2);
        let mut freqs: Vec<f64> = law.values().copied().collect();
        freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((freqs[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((freqs[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn file_round_trip() {
        let g = RootedGraph::with_types(
            4,
            vec![(0, 1), (1, 2), (2, 3), (0, 0), (1, 2)],
            0,
            vec![0, 1, 0, 1],
        )
        .unwrap();
        let text = write_graph(&g);
        let h = read_graph(&text).unwrap();
        assert_eq!(write_graph(&h), text);
        assert_eq!(g, h);
    }

    #[test]
    fn tree_checks() {
        assert!(path_graph(5).is_tree());
        assert!(!cycle_graph(5).is_tree());
        assert!(regular_tree(3, 4).is_tree());
        let loopy = RootedGraph::new(1, vec![(0, 0)], 0).unwrap();
        assert!(!loopy.is_tree());
    }
}
