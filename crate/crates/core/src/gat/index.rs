use crate::graph::{incoming_adjacency, Edge, InteractionGraph};

/// Why a (source, destination) pair takes part in attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    /// Graph edge with this index.
    Edge(usize),
    /// Added self-loop; attends like any neighbour.
    SelfLoop,
    /// Node without in-edges (self-loops disabled): its own transform, α fixed at 1.
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnEntry {
    pub src: usize,
    pub dst: usize,
    pub kind: EntryKind,
}

/// Attention neighbourhoods grouped by destination (CSR), plus the reverse
/// grouping by source used by the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnIndex {
    pub entries: Vec<AttnEntry>,
    pub dst_offsets: Vec<usize>,
    pub src_offsets: Vec<usize>,
    pub by_src: Vec<usize>,
    pub edge_entry: Vec<usize>,
}

impl AttnIndex {
    /// Entries for node `i` are its in-edges in edge order, then its
    /// self-loop (`self_loops`) or a fallback self entry when it has none.
    pub fn new(graph: &InteractionGraph, self_loops: bool) -> Self {
        Self::from_edges(graph.n_nodes(), &graph.edges, self_loops)
    }

    pub fn from_edges(n: usize, edges: &[Edge], self_loops: bool) -> Self {
        let (in_offsets, in_edges) = incoming_adjacency(edges, n);
        let mut entries = Vec::with_capacity(edges.len() + n);
        let mut dst_offsets = Vec::with_capacity(n + 1);
        let mut edge_entry = vec![0; edges.len()];
        dst_offsets.push(0);
        for i in 0..n {
            let incoming = &in_edges[in_offsets[i]..in_offsets[i + 1]];
            for &k in incoming {
                edge_entry[k] = entries.len();
                entries.push(AttnEntry {
                    src: edges[k].src,
                    dst: i,
                    kind: EntryKind::Edge(k),
                });
            }
            if self_loops {
                entries.push(AttnEntry {
                    src: i,
                    dst: i,
                    kind: EntryKind::SelfLoop,
                });
            } else if incoming.is_empty() {
                entries.push(AttnEntry {
                    src: i,
                    dst: i,
                    kind: EntryKind::Fallback,
                });
            }
            dst_offsets.push(entries.len());
        }
        let mut src_offsets = vec![0usize; n + 1];
        for e in &entries {
            src_offsets[e.src + 1] += 1;
        }
        for i in 0..n {
            src_offsets[i + 1] += src_offsets[i];
        }
        let mut fill = src_offsets.clone();
        let mut by_src = vec![0; entries.len()];
        for (idx, e) in entries.iter().enumerate() {
            by_src[fill[e.src]] = idx;
            fill[e.src] += 1;
        }
        AttnIndex {
            entries,
            dst_offsets,
            src_offsets,
            by_src,
            edge_entry,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.dst_offsets.len() - 1
    }

    pub fn group(&self, dst: usize) -> std::ops::Range<usize> {
        self.dst_offsets[dst]..self.dst_offsets[dst + 1]
    }

    pub fn sourced_from(&self, src: usize) -> &[usize] {
        &self.by_src[self.src_offsets[src]..self.src_offsets[src + 1]]
    }
}
