//! Interaction graph assembly, train/val/test masks, oversampling and class
//! weights.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::featurize::{EmbeddingTable, FeatureRow, EMBED_DIM};
use crate::nn::{Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Parent,
    Child,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub comment_id: String,
    pub role: NodeRole,
    pub entity: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub sample_id: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: usize,
    pub pair_id: String,
    pub entity: String,
    pub label: Label,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphOptions {
    /// Merge nodes sharing `(comment_id, entity)` instead of one node per sample side.
    pub dedup_nodes: bool,
}

/// Directed comment graph. Node `i` has embedding row `i` and sentiment `i`;
/// edge `k` belongs to sample `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionGraph {
    pub nodes: Vec<NodeMeta>,
    pub embeddings: Matrix,
    pub sentiments: Vec<f64>,
    pub edges: Vec<Edge>,
    pub samples: Vec<Sample>,
    in_offsets: Vec<usize>,
    in_edges: Vec<usize>,
}

/// CSR adjacency of incoming edges: edges into node `i` are
/// `in_edges[in_offsets[i]..in_offsets[i + 1]]`, in edge order.
pub fn incoming_adjacency(edges: &[Edge], n_nodes: usize) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = vec![0usize; n_nodes + 1];
    for e in edges {
        offsets[e.dst + 1] += 1;
    }
    for i in 0..n_nodes {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut idx = vec![0usize; edges.len()];
    for (k, e) in edges.iter().enumerate() {
        idx[fill[e.dst]] = k;
        fill[e.dst] += 1;
    }
    (offsets, idx)
}

impl InteractionGraph {
    pub fn from_parts(
        nodes: Vec<NodeMeta>,
        embeddings: Matrix,
        sentiments: Vec<f64>,
        edges: Vec<Edge>,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        let n = nodes.len();
        if embeddings.shape() != (n, EMBED_DIM) || sentiments.len() != n {
            return Err(Error::shape(
                "InteractionGraph",
                format!(
                    "{n} nodes, embeddings {:?}, {} sentiments",
                    embeddings.shape(),
                    sentiments.len()
                ),
            ));
        }
        if edges.len() != samples.len() {
            return Err(Error::shape(
                "InteractionGraph",
                format!("{} edges for {} samples", edges.len(), samples.len()),
            ));
        }
        for (k, (e, s)) in edges.iter().zip(&samples).enumerate() {
            if e.src >= n || e.dst >= n || e.src == e.dst || e.sample_id != k || s.sample_id != k {
                return Err(Error::SchemaMismatch(format!("invalid edge {k}: {e:?}")));
            }
        }
        if let Some(s) = sentiments.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
            return Err(Error::SchemaMismatch(format!("node sentiment {s} outside [-1, 1]")));
        }
        let (in_offsets, in_edges) = incoming_adjacency(&edges, n);
        Ok(InteractionGraph {
            nodes,
            embeddings,
            sentiments,
            edges,
            samples,
            in_offsets,
            in_edges,
        })
    }

    /// Induced subgraph on the `hops`-step in-neighbourhood of the given
    /// samples' endpoints: a `hops`-layer model computes the same outputs for
    /// those samples on it. Node and edge order are preserved. Returns the
    /// subgraph and each original sample's id in it, if kept.
    pub fn receptive_subgraph(&self, samples: &[usize], hops: usize) -> Result<(InteractionGraph, Vec<Option<usize>>)> {
        let n = self.n_nodes();
        let mut keep = vec![false; n];
        let mut frontier = Vec::new();
        for &s in samples {
            let e = self
                .edges
                .get(s)
                .ok_or_else(|| Error::SchemaMismatch(format!("sample {s} of {}", self.n_samples())))?;
            for v in [e.src, e.dst] {
                if !keep[v] {
                    keep[v] = true;
                    frontier.push(v);
                }
            }
        }
        for _ in 0..hops {
            let mut next = Vec::new();
            for &v in &frontier {
                for &k in self.incoming(v) {
                    let u = self.edges[k].src;
                    if !keep[u] {
                        keep[u] = true;
                        next.push(u);
                    }
                }
            }
            frontier = next;
        }
        let mut new_id = vec![usize::MAX; n];
        let mut nodes = Vec::new();
        let mut data = Vec::new();
        let mut sentiments = Vec::new();
        for v in (0..n).filter(|&v| keep[v]) {
            new_id[v] = nodes.len();
            nodes.push(self.nodes[v].clone());
            data.extend_from_slice(self.embeddings.row(v));
            sentiments.push(self.sentiments[v]);
        }
        let mut sample_map = vec![None; self.n_samples()];
        let mut edges = Vec::new();
        let mut kept = Vec::new();
        for (k, e) in self.edges.iter().enumerate() {
            if keep[e.src] && keep[e.dst] {
                let id = edges.len();
                sample_map[k] = Some(id);
                edges.push(Edge {
                    src: new_id[e.src],
                    dst: new_id[e.dst],
                    sample_id: id,
                });
                kept.push(Sample {
                    sample_id: id,
                    ..self.samples[k].clone()
                });
            }
        }
        let embeddings = Matrix::from_vec(nodes.len(), EMBED_DIM, data)?;
        Ok((InteractionGraph::from_parts(nodes, embeddings, sentiments, edges, kept)?, sample_map))
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Indices of edges ending at `node`.
    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.in_edges[self.in_offsets[node]..self.in_offsets[node + 1]]
    }

    pub fn in_adjacency(&self) -> (&[usize], &[usize]) {
        (&self.in_offsets, &self.in_edges)
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// `(parent node, child node)` of a sample.
    pub fn sample_nodes(&self, sample_id: usize) -> (usize, usize) {
        let e = self.edges[sample_id];
        (e.src, e.dst)
    }
}

/// One parent node and one child node per row (or shared by
/// `(comment_id, entity)` with `dedup_nodes`), plus a parent → child edge.
pub fn build_graph(rows: &[FeatureRow], table: &EmbeddingTable, options: GraphOptions) -> Result<InteractionGraph> {
    let mut nodes = Vec::new();
    let mut embed_data = Vec::new();
    let mut sentiments = Vec::new();
    let mut edges = Vec::with_capacity(rows.len());
    let mut samples = Vec::with_capacity(rows.len());
    let mut index: HashMap<(String, String), usize> = HashMap::new();

    let mut node_for = |comment_id: &str, entity: &str, role: NodeRole, sentiment: f64| -> Result<usize> {
        let key = (comment_id.to_string(), entity.to_string());
        if options.dedup_nodes {
            if let Some(&i) = index.get(&key) {
                return Ok(i);
            }
        }
        let vector = table.get(comment_id)?;
        let i = nodes.len();
        nodes.push(NodeMeta {
            comment_id: key.0.clone(),
            role,
            entity: key.1.clone(),
        });
        embed_data.extend_from_slice(vector);
        sentiments.push(sentiment);
        if options.dedup_nodes {
            index.insert(key, i);
        }
        Ok(i)
    };

    for (k, row) in rows.iter().enumerate() {
        let src = node_for(&row.parent_id, &row.entity, NodeRole::Parent, row.sentiment_parent.value)?;
        let dst = node_for(&row.child_id, &row.entity, NodeRole::Child, row.sentiment_child.value)?;
        if src == dst {
            return Err(Error::SchemaMismatch(format!(
                "pair `{}` replies to itself",
                row.pair_id
            )));
        }
        edges.push(Edge { src, dst, sample_id: k });
        samples.push(Sample {
            sample_id: k,
            pair_id: row.pair_id.clone(),
            entity: row.entity.clone(),
            label: row.label,
        });
    }
    let n = nodes.len();
    let embeddings = Matrix::from_vec(n, EMBED_DIM, embed_data)?;
    InteractionGraph::from_parts(nodes, embeddings, sentiments, edges, samples)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum DumpLine {
    Node {
        id: usize,
        comment_id: String,
        role: NodeRole,
        entity: String,
        sentiment: f64,
        embed: Vec<f64>,
    },
    Edge {
        src: usize,
        dst: usize,
        sample_id: usize,
        pair_id: String,
        entity: String,
        label: Label,
    },
}

/// JSON lines: every node (`kind: "node"`) in id order, then every edge
/// (`kind: "edge"`) in sample order.
pub fn write_graph(graph: &InteractionGraph, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut emit = |line: &DumpLine| -> Result<()> {
        serde_json::to_writer(&mut w, line)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))
    };
    for (i, n) in graph.nodes.iter().enumerate() {
        emit(&DumpLine::Node {
            id: i,
            comment_id: n.comment_id.clone(),
            role: n.role,
            entity: n.entity.clone(),
            sentiment: graph.sentiments[i],
            embed: graph.embeddings.row(i).to_vec(),
        })?;
    }
    for (e, s) in graph.edges.iter().zip(&graph.samples) {
        emit(&DumpLine::Edge {
            src: e.src,
            dst: e.dst,
            sample_id: e.sample_id,
            pair_id: s.pair_id.clone(),
            entity: s.entity.clone(),
            label: s.label,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_graph(path: &Path) -> Result<InteractionGraph> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut nodes = Vec::new();
    let mut embed = Vec::new();
    let mut sentiments = Vec::new();
    let mut edges = Vec::new();
    let mut samples = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line)? {
            DumpLine::Node {
                id,
                comment_id,
                role,
                entity,
                sentiment,
                embed: v,
            } => {
                if id != nodes.len() || !edges.is_empty() {
                    return Err(Error::SchemaMismatch(format!("node {id} out of order")));
                }
                if v.len() != EMBED_DIM {
                    return Err(Error::DimMismatch {
                        id: comment_id,
                        expected: EMBED_DIM,
                        found: v.len(),
                    });
                }
                nodes.push(NodeMeta {
                    comment_id,
                    role,
                    entity,
                });
                embed.extend(v);
                sentiments.push(sentiment);
            }
            DumpLine::Edge {
                src,
                dst,
                sample_id,
                pair_id,
                entity,
                label,
            } => {
                edges.push(Edge { src, dst, sample_id });
                samples.push(Sample {
                    sample_id,
                    pair_id,
                    entity,
                    label,
                });
            }
        }
    }
    let n = nodes.len();
    InteractionGraph::from_parts(nodes, Matrix::from_vec(n, EMBED_DIM, embed)?, sentiments, edges, samples)
}

/// Disjoint train/validation/test sample ids, each sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitMasks {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

/// Sizes by floor of `ratio · n` for train and validation; the rest is test.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<(usize, usize, usize)> {
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::BadRatios(ratios));
    }
    // The small epsilon keeps e.g. 0.7 · 100 = 69.999… from flooring to 69.
    let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let train = floor(ratios[0]).min(n);
    let val = floor(ratios[1]).min(n - train);
    Ok((train, val, n - train - val))
}

/// Seeded shuffle of the samples, cut into train/validation/test. With
/// `group_by_pair`, whole pairs are shuffled and cut so that every entity
/// row of a pair lands in the same split.
pub fn split_masks(graph: &InteractionGraph, ratios: [f64; 3], seed: u64, group_by_pair: bool) -> Result<SplitMasks> {
    let mut rng = RngStream::new(seed);
    let mut masks = if group_by_pair {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        let mut order = Vec::new();
        for s in &graph.samples {
            let entry = groups.entry(s.pair_id.as_str()).or_default();
            if entry.is_empty() {
                order.push(s.pair_id.as_str());
            }
            entry.push(s.sample_id);
        }
        rng.shuffle(&mut order);
        let (tr, va, _) = split_sizes(order.len(), ratios)?;
        let collect = |keys: &[&str]| -> Vec<usize> { keys.iter().flat_map(|k| groups[k].iter().copied()).collect() };
        SplitMasks {
            train: collect(&order[..tr]),
            val: collect(&order[tr..tr + va]),
            test: collect(&order[tr + va..]),
        }
    } else {
        let mut ids: Vec<usize> = (0..graph.n_samples()).collect();
        rng.shuffle(&mut ids);
        let (tr, va, _) = split_sizes(ids.len(), ratios)?;
        SplitMasks {
            train: ids[..tr].to_vec(),
            val: ids[tr..tr + va].to_vec(),
            test: ids[tr + va..].to_vec(),
        }
    };
    masks.train.sort_unstable();
    masks.val.sort_unstable();
    masks.test.sort_unstable();
    Ok(masks)
}

/// Training multiset after oversampling, plus any class that had no members.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Oversampled {
    pub ids: Vec<usize>,
    pub missing_classes: Vec<Label>,
}

/// Raises every present class to the majority count by seeded sampling with
/// replacement. Output: the original ids in input order, then the draws,
/// class by class.
pub fn oversample_minority(train_ids: &[usize], labels: &[Label], seed: u64) -> Result<Oversampled> {
    if train_ids.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let mut members: [Vec<usize>; 3] = Default::default();
    for &id in train_ids {
        let label = labels.get(id).ok_or(Error::BadClass(id))?;
        members[label.index()].push(id);
    }
    let majority = members.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = RngStream::new(seed);
    let mut ids = train_ids.to_vec();
    let mut missing_classes = Vec::new();
    for (c, group) in members.iter().enumerate() {
        if group.is_empty() {
            let label = Label::from_index(c).expect("three classes");
            log::warn!("class {label} absent from the training set; not oversampled");
            missing_classes.push(label);
            continue;
        }
        for _ in group.len()..majority {
            ids.push(group[rng.below(group.len())]);
        }
    }
    Ok(Oversampled { ids, missing_classes })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f64; 3]);

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights([1.0; 3]);

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Inverse frequency `w_c = N / (3 · count_c)`; classes with no samples get 0.
pub fn class_weights(labels: &[Label]) -> Result<ClassWeights> {
    if labels.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    let n = labels.len() as f64;
    let mut w = [0.0; 3];
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            log::warn!("class {} has no samples; weight set to 0", Label::ALL[c]);
        } else {
            w[c] = n / (3.0 * count as f64);
        }
    }
    Ok(ClassWeights(w))
}
