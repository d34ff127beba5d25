//! The Prüfer bijection: the leaf-stripping encoder and the rear-to-front
//! decoder, plus the first-neighbour map `h`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use thiserror::Error;

use crate::tree::{Edge, LabeledTree, Vertex};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("Prüfer strings need n >= 3, got n = {0}")]
    TooSmall(u32),
    #[error("a string of order {n} has length {expected}, found {found}")]
    Length {
        n: u32,
        expected: usize,
        found: usize,
    },
    #[error("entry p_{position} = {value} is outside 1..={n}")]
    EntryOutOfRange {
        position: usize,
        value: Vertex,
        n: u32,
    },
    #[error("{0}")]
    Parse(String),
}

/// A string `(p_1, ..., p_{n-2})` over `{1..n}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PruferString {
    n: u32,
    entries: Vec<Vertex>,
}

impl PruferString {
    pub fn new(n: u32, entries: Vec<Vertex>) -> Result<Self, CodecError> {
        if n < 3 {
            return Err(CodecError::TooSmall(n));
        }
        let expected = n as usize - 2;
        if entries.len() != expected {
            return Err(CodecError::Length {
                n,
                expected,
                found: entries.len(),
            });
        }
        if let Some((i, &value)) = entries.iter().enumerate().find(|(_, &p)| p == 0 || p > n) {
            return Err(CodecError::EntryOutOfRange {
                position: i + 1,
                value,
                n,
            });
        }
        Ok(PruferString { n, entries })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// The stored entries; `entries()[i - 1]` is `p_i`.
    pub fn entries(&self) -> &[Vertex] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [Vertex] {
        &mut self.entries
    }

    /// `p_i` for `0 <= i <= n - 1`. Positions 0 and `n - 1` are virtual and
    /// read as `n`: the decoder attaches its first vertex to `n`, and step 0
    /// (which takes the last unplaced vertex) behaves as if `p_0` were
    /// already placed.
    #[inline]
    pub fn entry(&self, i: usize) -> Vertex {
        if i == 0 || i == self.entries.len() + 1 {
            self.n
        } else {
            self.entries[i - 1]
        }
    }

    /// Parses `n; p1,p2,...`.
    pub fn parse_line(line: &str) -> Result<Self, CodecError> {
        let (n_part, rest) = line
            .split_once(';')
            .ok_or_else(|| CodecError::Parse("expected `n; p1,p2,...`".into()))?;
        let n = n_part
            .trim()
            .parse()
            .map_err(|_| CodecError::Parse(format!("bad order `{}`", n_part.trim())))?;
        PruferString::new(n, parse_entries(rest)?)
    }
}

/// Parses a comma-separated entry list such as `4,3,2,2,7`.
pub fn parse_entries(s: &str) -> Result<Vec<Vertex>, CodecError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| CodecError::Parse(format!("bad entry `{t}`")))
        })
        .collect()
}

impl fmt::Display for PruferString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}; ", self.n)?;
        for (i, p) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Encodes a tree by repeatedly deleting the smallest leaf and recording its
/// neighbour. `O(n log n)`.
pub fn encode(tree: &LabeledTree) -> Result<PruferString, CodecError> {
    let n = tree.n();
    if n < 3 {
        return Err(CodecError::TooSmall(n));
    }
    let len = n as usize + 1;
    let mut degree = vec![0u32; len];
    // XOR of all current neighbours: for a leaf this is its only neighbour.
    let mut neighbours = vec![0u32; len];
    for e in tree.edges() {
        degree[e.lo() as usize] += 1;
        degree[e.hi() as usize] += 1;
        neighbours[e.lo() as usize] ^= e.hi();
        neighbours[e.hi() as usize] ^= e.lo();
    }
    let mut leaves: BinaryHeap<Reverse<Vertex>> = (1..=n)
        .filter(|&v| degree[v as usize] == 1)
        .map(Reverse)
        .collect();
    let mut entries = Vec::with_capacity(n as usize - 2);
    while entries.len() < n as usize - 2 {
        let Reverse(leaf) = leaves.pop().expect("a tree always has a leaf");
        let parent = neighbours[leaf as usize];
        entries.push(parent);
        degree[leaf as usize] = 0;
        neighbours[parent as usize] ^= leaf;
        degree[parent as usize] -= 1;
        if degree[parent as usize] == 1 {
            leaves.push(Reverse(parent));
        }
    }
    Ok(PruferString { n, entries })
}

/// One step of the rear-to-front decoder: at step `index` the vertex
/// `vertex` (`y_i`) joins the tree through an edge to `attach` (`p_{i+1}`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodeStep {
    pub index: usize,
    pub vertex: Vertex,
    pub attach: Vertex,
}

impl DecodeStep {
    pub fn edge(&self) -> Edge {
        Edge::new(self.vertex, self.attach)
    }
}

/// Incremental state of the rear-to-front decoder.
///
/// The unplaced set `X` only ever shrinks, so its maximum is tracked by a
/// cursor that moves downward; membership is a flag per vertex. A full decode
/// is therefore linear.
#[derive(Clone, Debug)]
pub struct Decoder {
    n: u32,
    unplaced: Vec<bool>,
    cursor: Vertex,
    // h(v); 0 while v is unplaced, and always 0 for v = n.
    attach: Vec<Vertex>,
    remaining: usize,
}

impl Decoder {
    /// A decoder positioned before step `n - 2`: `X = {1..n-1}`, `V = {n}`.
    pub fn new(n: u32) -> Self {
        let mut d = Decoder {
            n: 0,
            unplaced: Vec::new(),
            cursor: 0,
            attach: Vec::new(),
            remaining: 0,
        };
        d.reset(n);
        d
    }

    /// Reinitialises for order `n`, reusing allocations.
    pub fn reset(&mut self, n: u32) {
        let len = n as usize + 1;
        self.n = n;
        self.unplaced.clear();
        self.unplaced.resize(len, true);
        self.unplaced[0] = false;
        self.unplaced[n as usize] = false;
        self.attach.clear();
        self.attach.resize(len, 0);
        self.cursor = n - 1;
        self.remaining = n as usize - 1;
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// `|X|`, the number of vertices not yet in the tree.
    pub fn remaining(&self) -> usize {
        self.remaining
    }

    #[inline]
    pub fn is_unplaced(&self, v: Vertex) -> bool {
        self.unplaced[v as usize]
    }

    #[inline]
    pub fn is_placed(&self, v: Vertex) -> bool {
        !self.unplaced[v as usize]
    }

    /// `max X`, or `None` once every vertex is placed.
    #[inline]
    pub fn max_unplaced(&mut self) -> Option<Vertex> {
        while self.cursor > 0 && !self.unplaced[self.cursor as usize] {
            self.cursor -= 1;
        }
        (self.cursor > 0).then_some(self.cursor)
    }

    /// The vertex the decoding rule selects for entry `p`: `p` itself if it
    /// is unplaced, otherwise `max X`.
    #[inline]
    pub fn choose(&mut self, p: Vertex) -> Vertex {
        if self.unplaced[p as usize] {
            p
        } else {
            self.max_unplaced().expect("decoder stepped past step 0")
        }
    }

    /// Places `y` with an edge to `attach`.
    #[inline]
    pub fn place(&mut self, y: Vertex, attach: Vertex) {
        debug_assert!(self.unplaced[y as usize]);
        debug_assert!(!self.unplaced[attach as usize]);
        self.unplaced[y as usize] = false;
        self.attach[y as usize] = attach;
        self.remaining -= 1;
    }

    /// Runs one step with entry `p_i` and attachment `p_{i+1}`.
    #[inline]
    pub fn step(&mut self, p: Vertex, attach: Vertex) -> Vertex {
        let y = self.choose(p);
        self.place(y, attach);
        y
    }

    /// `h(v)` if `v` has been placed and is not the root `n`.
    #[inline]
    pub fn attachment(&self, v: Vertex) -> Option<Vertex> {
        match self.attach[v as usize] {
            0 => None,
            a => Some(a),
        }
    }

    /// Whether `{u, v}` is an edge of the partial tree. Every edge is
    /// `{v, h(v)}` for some placed `v != n`.
    #[inline]
    pub fn has_edge(&self, u: Vertex, v: Vertex) -> bool {
        self.attach[u as usize] == v || self.attach[v as usize] == u
    }
}

/// Decodes `p`, reporting each step to `on_step` in execution order
/// (`i = n - 2` down to `0`).
pub fn decode_with(p: &PruferString, mut on_step: impl FnMut(DecodeStep)) -> LabeledTree {
    let n = p.n();
    let mut decoder = Decoder::new(n);
    let mut edges = Vec::with_capacity(n as usize - 1);
    for i in (0..=n as usize - 2).rev() {
        let attach = p.entry(i + 1);
        let vertex = decoder.step(p.entry(i), attach);
        let step = DecodeStep {
            index: i,
            vertex,
            attach,
        };
        edges.push(step.edge());
        on_step(step);
    }
    // Report edges by step index, step 0 first.
    edges.reverse();
    LabeledTree::from_trusted(n, edges)
}

pub fn decode(p: &PruferString) -> LabeledTree {
    decode_with(p, |_| {})
}

/// The first-neighbour map: `h(y_j) = p_{j+1}` for every vertex but `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HMap {
    n: u32,
    h: Vec<Vertex>,
}

impl HMap {
    pub fn n(&self) -> u32 {
        self.n
    }

    /// `h(v)` for `1 <= v <= n - 1`.
    pub fn get(&self, v: Vertex) -> Option<Vertex> {
        match self.h.get(v as usize) {
            Some(&a) if a != 0 => Some(a),
            _ => None,
        }
    }

    /// `(v, h(v))` for `v = 1..n-1`.
    pub fn iter(&self) -> impl Iterator<Item = (Vertex, Vertex)> + '_ {
        (1..self.n).map(move |v| (v, self.h[v as usize]))
    }
}

pub fn h_map(p: &PruferString) -> HMap {
    let n = p.n();
    let mut h = vec![0; n as usize + 1];
    decode_with(p, |s| h[s.vertex as usize] = s.attach);
    HMap { n, h }
}
