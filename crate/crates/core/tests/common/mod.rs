#![allow(dead_code)]

use prufer_core::{LabeledTree, PruferString, Vertex};

/// Every string of length `n − 2` over `1..=n`, in lexicographic order.
pub fn all_strings(n: u32) -> impl Iterator<Item = PruferString> {
    let len = n as usize - 2;
    let total = (n as u64).pow(len as u32);
    (0..total).map(move |mut k| {
        let mut e = vec![0 as Vertex; len];
        for d in e.iter_mut().rev() {
            *d = (k % n as u64) as Vertex + 1;
            k /= n as u64;
        }
        PruferString::new(n, e).unwrap()
    })
}

/// Textbook forward decoder: repeatedly join the smallest leaf to the next
/// entry. Shares nothing with the library decoder.
pub fn forward_decode(p: &PruferString) -> LabeledTree {
    let n = p.n() as usize;
    let mut degree = vec![1usize; n + 1];
    for &v in p.entries() {
        degree[v as usize] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &v in p.entries() {
        let leaf = (1..=n).find(|&u| degree[u] == 1).unwrap();
        edges.push((leaf as Vertex, v));
        degree[leaf] -= 1;
        degree[v as usize] -= 1;
    }
    let rest: Vec<usize> = (1..=n).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0] as Vertex, rest[1] as Vertex));
    LabeledTree::new(n as u32, edges).unwrap()
}

/// `n − 1 − |E ∩ E*|` by a quadratic scan.
pub fn naive_distance(t: &LabeledTree, tstar: &LabeledTree) -> usize {
    let shared = t
        .edges()
        .iter()
        .filter(|e| tstar.edges().contains(e))
        .count();
    t.n() as usize - 1 - shared
}
