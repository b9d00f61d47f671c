//! Labeled undirected simple graphs stored as edge bit vectors.
//!
//! A graph on `N` nodes has `M = N(N-1)/2` possible edges. Edge bits follow
//! the lower-triangular row-major half-vectorization of the adjacency matrix:
//! with 1-based nodes the pair order is `(2,1), (3,1), (3,2), (4,1), ...`.
//! In 0-based terms the pair `{i, j}` with `i > j` sits at bit
//! `i(i-1)/2 + j`. This order is part of the file formats and is stable.

use std::fmt;

use crate::error::{Error, Result};

/// Largest supported node count; keeps every edge index inside `u32`.
pub const MAX_NODES: usize = 4096;

/// Number of node pairs on `n` nodes.
pub const fn n_pairs(n_nodes: usize) -> usize {
    n_nodes * n_nodes.saturating_sub(1) / 2
}

/// Bit index of the unordered pair `{i, j}` (0-based, `i != j`).
pub fn pair_index(i: usize, j: usize) -> usize {
    debug_assert_ne!(i, j);
    let (hi, lo) = if i > j { (i, j) } else { (j, i) };
    hi * (hi - 1) / 2 + lo
}

/// Inverse of [`pair_index`]: returns `(hi, lo)` with `hi > lo`.
pub fn pair_of(index: usize) -> (usize, usize) {
    // hi is the largest integer with hi(hi-1)/2 <= index.
    let mut hi = ((1.0 + (1.0 + 8.0 * index as f64).sqrt()) / 2.0) as usize;
    while hi * (hi - 1) / 2 > index {
        hi -= 1;
    }
    while (hi + 1) * hi / 2 <= index {
        hi += 1;
    }
    (hi, index - hi * (hi - 1) / 2)
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n_nodes: usize,
    words: Vec<u64>,
}

impl Graph {
    /// Graph with no edges.
    ///
    /// Panics if `n_nodes` is zero or exceeds [`MAX_NODES`]; file readers
    /// validate sizes before reaching this point.
    pub fn empty(n_nodes: usize) -> Self {
        assert!(
            (1..=MAX_NODES).contains(&n_nodes),
            "node count {n_nodes} outside 1..={MAX_NODES}"
        );
        let m = n_pairs(n_nodes);
        Graph {
            n_nodes,
            words: vec![0; m.div_ceil(64)],
        }
    }

    pub fn complete(n_nodes: usize) -> Self {
        let mut g = Graph::empty(n_nodes);
        for idx in 0..g.n_pairs() {
            g.set_bit(idx, true);
        }
        g
    }

    /// Build from 0-based node pairs.
    pub fn from_edges<I>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::empty(n_nodes);
        for (i, j) in edges {
            if i == j {
                return Err(Error::invalid(format!("self-loop on node {i}")));
            }
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::invalid(format!(
                    "edge ({i}, {j}) outside {n_nodes} nodes"
                )));
            }
            g.set_edge(i, j, true);
        }
        Ok(g)
    }

    /// Build from an edge bit iterator in pair order.
    pub fn from_bits<I: IntoIterator<Item = bool>>(n_nodes: usize, bits: I) -> Self {
        let mut g = Graph::empty(n_nodes);
        for (idx, b) in bits.into_iter().take(g.n_pairs()).enumerate() {
            g.set_bit(idx, b);
        }
        g
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// `M`, the number of node pairs.
    pub fn n_pairs(&self) -> usize {
        n_pairs(self.n_nodes)
    }

    #[inline]
    pub fn bit(&self, index: usize) -> bool {
        debug_assert!(index < self.n_pairs());
        (self.words[index / 64] >> (index % 64)) & 1 == 1
    }

    #[inline]
    pub fn set_bit(&mut self, index: usize, value: bool) {
        debug_assert!(index < self.n_pairs());
        let mask = 1u64 << (index % 64);
        if value {
            self.words[index / 64] |= mask;
        } else {
            self.words[index / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip_bit(&mut self, index: usize) {
        self.words[index / 64] ^= 1u64 << (index % 64);
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.bit(pair_index(i, j))
    }

    pub fn set_edge(&mut self, i: usize, j: usize, value: bool) {
        assert_ne!(i, j, "self-loops are not representable");
        self.set_bit(pair_index(i, j), value);
    }

    pub fn edge_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Edge bits in pair order.
    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.n_pairs()).map(move |idx| self.bit(idx))
    }

    /// Present edges as 0-based `(hi, lo)` pairs, in pair order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_pairs())
            .filter(move |&idx| self.bit(idx))
            .map(pair_of)
    }

    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        (0..self.n_nodes)
            .filter(|&other| self.has_edge(node, other))
            .collect()
    }

    /// Hamming distance: number of node pairs on which the graphs disagree.
    pub fn hamming(&self, other: &Graph) -> Result<usize> {
        if self.n_nodes != other.n_nodes {
            return Err(Error::DimensionMismatch {
                expected: self.n_nodes,
                found: other.n_nodes,
            });
        }
        Ok(self.distance(other))
    }

    /// Hamming distance without the dimension check.
    #[inline]
    pub(crate) fn distance(&self, other: &Graph) -> usize {
        debug_assert_eq!(self.n_nodes, other.n_nodes);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Induced subgraph on `nodes`, relabeled `0..nodes.len()` in the given order.
    pub fn induced(&self, nodes: &[usize]) -> Graph {
        let mut g = Graph::empty(nodes.len().max(1));
        for (a, &u) in nodes.iter().enumerate() {
            for (b, &v) in nodes.iter().enumerate().take(a) {
                if self.has_edge(u, v) {
                    g.set_edge(a, b, true);
                }
            }
        }
        g
    }

    /// Edge bits as hex: bit `4k` is the high bit of digit `k`, zero padded.
    pub fn to_hex(&self) -> String {
        let m = self.n_pairs();
        let mut out = String::with_capacity(m.div_ceil(4));
        for chunk in 0..m.div_ceil(4) {
            let mut nibble = 0u32;
            for off in 0..4 {
                let idx = 4 * chunk + off;
                nibble <<= 1;
                if idx < m && self.bit(idx) {
                    nibble |= 1;
                }
            }
            out.push(char::from_digit(nibble, 16).expect("nibble < 16"));
        }
        out
    }

    pub fn from_hex(n_nodes: usize, hex: &str) -> Result<Graph> {
        let m = n_pairs(n_nodes);
        if hex.len() != m.div_ceil(4) {
            return Err(Error::invalid(format!(
                "hex mode has {} digits, expected {} for {n_nodes} nodes",
                hex.len(),
                m.div_ceil(4)
            )));
        }
        let mut g = Graph::empty(n_nodes);
        for (chunk, ch) in hex.chars().enumerate() {
            let nibble = ch
                .to_digit(16)
                .ok_or_else(|| Error::invalid(format!("bad hex digit {ch:?}")))?;
            for off in 0..4 {
                let idx = 4 * chunk + off;
                let set = (nibble >> (3 - off)) & 1 == 1;
                if idx < m {
                    g.set_bit(idx, set);
                } else if set {
                    return Err(Error::invalid("nonzero padding bit in hex mode"));
                }
            }
        }
        Ok(g)
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(n={}, {})", self.n_nodes, self.to_hex())
    }
}

/// An ordered, non-empty collection of graphs on a shared node set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphPopulation {
    n_nodes: usize,
    graphs: Vec<Graph>,
}

impl GraphPopulation {
    pub fn new(graphs: Vec<Graph>) -> Result<Self> {
        let first = graphs.first().ok_or(Error::Empty("graph population"))?;
        let n_nodes = first.n_nodes();
        if let Some(bad) = graphs.iter().find(|g| g.n_nodes() != n_nodes) {
            return Err(Error::DimensionMismatch {
                expected: n_nodes,
                found: bad.n_nodes(),
            });
        }
        Ok(GraphPopulation { n_nodes, graphs })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_pairs(&self) -> usize {
        n_pairs(self.n_nodes)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn get(&self, index: usize) -> &Graph {
        &self.graphs[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Graph> {
        self.graphs.iter()
    }

    pub fn into_graphs(self) -> Vec<Graph> {
        self.graphs
    }

    /// Sub-population with the given member indices.
    pub fn select(&self, members: &[usize]) -> Result<GraphPopulation> {
        GraphPopulation::new(members.iter().map(|&l| self.graphs[l].clone()).collect())
    }
}

impl<'a> IntoIterator for &'a GraphPopulation {
    type Item = &'a Graph;
    type IntoIter = std::slice::Iter<'a, Graph>;

    fn into_iter(self) -> Self::IntoIter {
        self.graphs.iter()
    }
}

/// How an edge present in exactly half the graphs is resolved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieRule {
    Absent,
    #[default]
    Present,
}

/// Per-pair edge counts over `graphs`.
pub fn edge_counts<'a, I>(n_pairs: usize, graphs: I) -> Vec<u32>
where
    I: IntoIterator<Item = &'a Graph>,
{
    let mut counts = vec![0u32; n_pairs];
    for g in graphs {
        for (w, &word) in g.words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let tz = bits.trailing_zeros() as usize;
                counts[w * 64 + tz] += 1;
                bits &= bits - 1;
            }
        }
    }
    counts
}

/// Majority-vote graph, which minimizes total Hamming distance to `pop`.
pub fn frechet_mean(pop: &GraphPopulation, tie_rule: TieRule) -> Result<Graph> {
    if pop.is_empty() {
        return Err(Error::Empty("graph population"));
    }
    let n = pop.len() as u64;
    let counts = edge_counts(pop.n_pairs(), pop.iter());
    let bits = counts.iter().map(|&c| {
        let twice = 2 * c as u64;
        match tie_rule {
            TieRule::Present => twice >= n,
            TieRule::Absent => twice > n,
        }
    });
    Ok(Graph::from_bits(pop.n_nodes(), bits))
}
