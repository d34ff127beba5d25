//! Labeled trees on `{1..n}` and the edge-set distance between them.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

/// A vertex label. Labels are 1-based everywhere outside this crate.
pub type Vertex = u32;

/// An undirected edge stored with its smaller endpoint first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    lo: Vertex,
    hi: Vertex,
}

impl Edge {
    /// Builds the canonical form of `{u, v}`. Self-loops are representable
    /// here; tree validation rejects them.
    pub fn new(u: Vertex, v: Vertex) -> Self {
        if u <= v {
            Edge { lo: u, hi: v }
        } else {
            Edge { lo: v, hi: u }
        }
    }

    pub fn lo(self) -> Vertex {
        self.lo
    }

    pub fn hi(self) -> Vertex {
        self.hi
    }

    pub fn contains(self, v: Vertex) -> bool {
        self.lo == v || self.hi == v
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

/// A sorted, duplicate-free set of canonical edges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct EdgeSet(Vec<Edge>);

impl EdgeSet {
    pub fn from_edges(edges: impl IntoIterator<Item = Edge>) -> Self {
        let mut v: Vec<Edge> = edges.into_iter().collect();
        counting_sort(&mut v);
        v.dedup();
        EdgeSet(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.0.binary_search(&e).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = Edge> + '_ {
        self.0.iter().copied()
    }

    /// `|self ∩ other|` by a linear merge of the two sorted vectors.
    pub fn intersection_len(&self, other: &EdgeSet) -> usize {
        let (mut i, mut j, mut common) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    common += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        common
    }
}

/// Two stable counting passes, by `hi` then by `lo`. Linear for labels up to
/// a small multiple of the edge count, which holds for trees.
fn counting_sort(v: &mut Vec<Edge>) {
    let max = v.iter().map(|e| e.hi).max().unwrap_or(0) as usize;
    if v.len() < 64 || max > 4 * v.len() {
        v.sort_unstable();
        return;
    }
    let mut buf = vec![Edge { lo: 0, hi: 0 }; v.len()];
    let mut count = vec![0usize; max + 2];
    for key in [|e: &Edge| e.hi, |e: &Edge| e.lo] {
        count.iter_mut().for_each(|c| *c = 0);
        for e in v.iter() {
            count[key(e) as usize + 1] += 1;
        }
        for i in 1..count.len() {
            count[i] += count[i - 1];
        }
        for e in v.iter() {
            let slot = &mut count[key(e) as usize];
            buf[*slot] = *e;
            *slot += 1;
        }
        std::mem::swap(v, &mut buf);
    }
}

/// Why an edge list failed to describe a tree on `{1..n}`.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum NotATree {
    #[error("a tree needs at least 2 vertices, got n = {0}")]
    TooFewVertices(u32),
    #[error("expected {expected} edges, found {found}")]
    EdgeCount { expected: usize, found: usize },
    #[error("vertex {vertex} is outside 1..={n}")]
    LabelOutOfRange { vertex: Vertex, n: u32 },
    #[error("self-loop at vertex {0}")]
    SelfLoop(Vertex),
    #[error("duplicate edge {0}")]
    DuplicateEdge(Edge),
    #[error("edge {0} closes a cycle")]
    Cycle(Edge),
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("not a tree: {0}")]
    NotATree(#[from] NotATree),
    #[error("trees have different vertex counts ({0} vs {1})")]
    SizeMismatch(u32, u32),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A validated tree on the vertex set `{1..n}`.
///
/// Edges keep the order they were supplied in (the decoder emits them in
/// step order), while equality and distance are defined on the edge set.
#[derive(Clone, Debug)]
pub struct LabeledTree {
    n: u32,
    edges: Vec<Edge>,
    set: EdgeSet,
}

impl LabeledTree {
    /// Validates `edges` as a spanning tree of `{1..n}`.
    pub fn new(
        n: u32,
        edges: impl IntoIterator<Item = (Vertex, Vertex)>,
    ) -> Result<Self, NotATree> {
        if n < 2 {
            return Err(NotATree::TooFewVertices(n));
        }
        let edges: Vec<Edge> = edges.into_iter().map(|(u, v)| Edge::new(u, v)).collect();
        let expected = n as usize - 1;
        if edges.len() != expected {
            return Err(NotATree::EdgeCount {
                expected,
                found: edges.len(),
            });
        }
        let mut dsu = DisjointSets::new(n as usize + 1);
        for (i, &e) in edges.iter().enumerate() {
            for v in [e.lo, e.hi] {
                if v == 0 || v > n {
                    return Err(NotATree::LabelOutOfRange { vertex: v, n });
                }
            }
            if e.lo == e.hi {
                return Err(NotATree::SelfLoop(e.lo));
            }
            // n - 1 acyclic edges on n vertices are necessarily connected.
            if !dsu.union(e.lo as usize, e.hi as usize) {
                if edges[..i].contains(&e) {
                    return Err(NotATree::DuplicateEdge(e));
                }
                return Err(NotATree::Cycle(e));
            }
        }
        let set = EdgeSet::from_edges(edges.iter().copied());
        Ok(LabeledTree { n, edges, set })
    }

    /// Builds a tree from edges already known to form one.
    pub(crate) fn from_trusted(n: u32, edges: Vec<Edge>) -> Self {
        debug_assert_eq!(edges.len() + 1, n as usize);
        let set = EdgeSet::from_edges(edges.iter().copied());
        LabeledTree { n, edges, set }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Edges in the order they were supplied.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_set(&self) -> &EdgeSet {
        &self.set
    }

    /// Vertex degrees indexed by label; index 0 is unused.
    pub fn degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.n as usize + 1];
        for e in &self.edges {
            deg[e.lo as usize] += 1;
            deg[e.hi as usize] += 1;
        }
        deg
    }

    /// A random tree built by attaching each vertex of a shuffled labelling
    /// to a uniformly chosen earlier vertex. Not uniform over all trees, but
    /// independent of any Prüfer machinery.
    pub fn random_attachment<R: Rng + ?Sized>(n: u32, rng: &mut R) -> Self {
        assert!(n >= 2, "a tree needs at least 2 vertices");
        let mut labels: Vec<Vertex> = (1..=n).collect();
        labels.shuffle(rng);
        let edges = (1..labels.len())
            .map(|i| Edge::new(labels[i], labels[rng.random_range(0..i)]))
            .collect();
        LabeledTree::from_trusted(n, edges)
    }

    /// Parses one line of the `n; u1-v1, u2-v2, ...` format.
    pub fn parse_line(line: &str) -> Result<Self, String> {
        let (n_part, edge_part) = line
            .split_once(';')
            .ok_or_else(|| "expected `n; u-v, ...`".to_string())?;
        let n: u32 = n_part
            .trim()
            .parse()
            .map_err(|_| format!("bad vertex count `{}`", n_part.trim()))?;
        let mut edges = Vec::new();
        for tok in edge_part
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
        {
            let (u, v) = tok
                .split_once('-')
                .ok_or_else(|| format!("bad edge `{tok}`"))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<Vertex>()
                    .map_err(|_| format!("bad vertex `{}` in edge `{tok}`", s.trim()))
            };
            edges.push((parse(u)?, parse(v)?));
        }
        LabeledTree::new(n, edges).map_err(|e| e.to_string())
    }

    /// Parses a file of trees, one per line. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn parse_many(text: &str) -> Result<Vec<Self>, TreeError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|(i, l)| {
                LabeledTree::parse_line(l).map_err(|message| TreeError::Parse {
                    line: i + 1,
                    message,
                })
            })
            .collect()
    }
}

impl PartialEq for LabeledTree {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.set == other.set
    }
}

impl Eq for LabeledTree {}

impl fmt::Display for LabeledTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};", self.n)?;
        for (i, e) in self.edges.iter().enumerate() {
            let sep = if i == 0 { " " } else { ", " };
            write!(f, "{sep}{e}")?;
        }
        Ok(())
    }
}

/// `Δ(T, T*) = n − 1 − |E(T) ∩ E(T*)|`.
pub fn tree_distance(t: &LabeledTree, tstar: &LabeledTree) -> Result<usize, TreeError> {
    if t.n != tstar.n {
        return Err(TreeError::SizeMismatch(t.n, tstar.n));
    }
    Ok(t.n as usize - 1 - t.set.intersection_len(&tstar.set))
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(len: usize) -> Self {
        DisjointSets {
            parent: (0..len).collect(),
            rank: vec![0; len],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn worked_tree() -> LabeledTree {
        LabeledTree::new(7, [(1, 4), (4, 3), (3, 2), (5, 2), (2, 7), (6, 7)]).unwrap()
    }

    #[test]
    fn two_vertices() {
        let t = LabeledTree::new(2, [(1, 2)]).unwrap();
        assert_eq!(t.edges(), &[Edge::new(2, 1)]);
    }

    #[test]
    fn duplicate_edge_rejected() {
        assert_eq!(
            LabeledTree::new(3, [(1, 2), (2, 1)]),
            Err(NotATree::DuplicateEdge(Edge::new(1, 2)))
        );
    }

    #[test]
    fn seven_vertex_example_is_a_tree() {
        assert_eq!(worked_tree().edge_set().len(), 6);
    }

    #[test]
    fn invalid_edge_lists() {
        assert_eq!(
            LabeledTree::new(4, [(1, 2), (2, 3)]),
            Err(NotATree::EdgeCount {
                expected: 3,
                found: 2
            })
        );
        assert_eq!(
            LabeledTree::new(4, [(1, 2), (2, 3), (3, 1)]),
            Err(NotATree::Cycle(Edge::new(3, 1)))
        );
        assert_eq!(
            LabeledTree::new(3, [(1, 2), (2, 4)]),
            Err(NotATree::LabelOutOfRange { vertex: 4, n: 3 })
        );
        assert_eq!(
            LabeledTree::new(3, [(1, 2), (0, 2)]),
            Err(NotATree::LabelOutOfRange { vertex: 0, n: 3 })
        );
        assert_eq!(
            LabeledTree::new(3, [(1, 1), (2, 3)]),
            Err(NotATree::SelfLoop(1))
        );
        // disconnected: 4 vertices, 3 edges, a triangle plus an isolated vertex
        assert!(matches!(
            LabeledTree::new(4, [(1, 2), (2, 3), (1, 3)]),
            Err(NotATree::Cycle(_))
        ));
        assert_eq!(LabeledTree::new(1, []), Err(NotATree::TooFewVertices(1)));
    }

    #[test]
    fn distance_examples() {
        let t = worked_tree();
        assert_eq!(tree_distance(&t, &t).unwrap(), 0);
        let path = LabeledTree::new(3, [(1, 2), (2, 3)]).unwrap();
        let star = LabeledTree::new(3, [(1, 2), (1, 3)]).unwrap();
        assert_eq!(tree_distance(&path, &star).unwrap(), 1);
        assert_eq!(tree_distance(&path, &t), Err(TreeError::SizeMismatch(3, 7)));
    }

    #[test]
    fn text_format() {
        let t = worked_tree();
        assert_eq!(t.to_string(), "7; 1-4, 3-4, 2-3, 2-5, 2-7, 6-7");
        assert_eq!(LabeledTree::parse_line(&t.to_string()).unwrap(), t);

        let err = LabeledTree::parse_many("3; 1-2, 2-3\n\n# comment\n3; 1-2 2-3\n").unwrap_err();
        assert!(matches!(err, TreeError::Parse { line: 4, .. }), "{err:?}");
        let err = LabeledTree::parse_many("x; 1-2").unwrap_err();
        assert!(matches!(err, TreeError::Parse { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn distance_is_a_symmetric_bounded_metric(n in 2u32..40, s1: u64, s2: u64) {
            let a = LabeledTree::random_attachment(n, &mut ChaCha8Rng::seed_from_u64(s1));
            let b = LabeledTree::random_attachment(n, &mut ChaCha8Rng::seed_from_u64(s2));
            let d = tree_distance(&a, &b).unwrap();
            prop_assert_eq!(d, tree_distance(&b, &a).unwrap());
            prop_assert!(d < n as usize);
            prop_assert_eq!(d == 0, a.edge_set() == b.edge_set());
            prop_assert_eq!(tree_distance(&a, &a).unwrap(), 0);
        }

        #[test]
        fn counting_sort_matches_comparison_sort(
            pairs in proptest::collection::vec((1u32..300, 1u32..300), 0..400)
        ) {
            let mut edges: Vec<Edge> = pairs
                .into_iter()
                .filter(|(u, v)| u != v)
                .map(|(u, v)| Edge::new(u, v))
                .collect();
            let mut expected = edges.clone();
            expected.sort_unstable();
            counting_sort(&mut edges);
            prop_assert_eq!(edges, expected);
        }
    }
}
