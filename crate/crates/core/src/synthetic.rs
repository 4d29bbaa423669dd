//! Seeded synthetic data for tests, benchmarks and the self-check.

use crate::corpus::Label;
use crate::featurize::{fallback_embed, EmbeddingSource, EmbeddingTable, FeatureRow, SentimentScore, EMBED_DIM};
use crate::graph::{build_graph, GraphOptions, InteractionGraph};
use crate::nn::RngStream;

/// Minimum gap between parent and child sentiment for non-neutral rows.
pub const SENTIMENT_MARGIN: f64 = 0.3;

/// Rows whose label is a function of the parent-minus-child sentiment sign:
/// positive → disagree, negative → agree, exactly zero → neutral.
/// Classes cycle so the set is balanced. Every comment shares one fallback
/// embedding, so the label is only recoverable from sentiment.
pub fn sentiment_sign_rows(n: usize, seed: u64) -> (Vec<FeatureRow>, EmbeddingTable) {
    let mut rng = RngStream::new(seed);
    let mut rows = Vec::with_capacity(n);
    let mut table = EmbeddingTable::new(EmbeddingSource::Fallback);
    let shared = fallback_embed("a synthetic comment about the climate");
    for i in 0..n {
        let label = Label::ALL[i % 3];
        let lo = rng.uniform(-1.0, 1.0 - SENTIMENT_MARGIN);
        let hi = rng.uniform(lo + SENTIMENT_MARGIN, 1.0);
        let (sp, sc) = match label {
            Label::Disagree => (hi, lo),
            Label::Agree => (lo, hi),
            Label::Neutral => {
                let v = rng.uniform(-1.0, 1.0);
                (v, v)
            }
        };
        let (parent_id, child_id) = (format!("s{i}p"), format!("s{i}c"));
        table.insert(parent_id.clone(), shared.clone()).expect("fallback vectors are 384-d");
        table.insert(child_id.clone(), shared.clone()).expect("fallback vectors are 384-d");
        rows.push(FeatureRow {
            pair_id: format!("pair{i}"),
            parent_id,
            child_id,
            entity: format!("entity{}", i % 7),
            sentiment_parent: SentimentScore::from_value(sp),
            sentiment_child: SentimentScore::from_value(sc),
            label,
        });
    }
    (rows, table)
}

/// Label rule of [`sentiment_sign_rows`].
pub fn sign_rule(parent: f64, child: f64) -> Label {
    let d = parent - child;
    if d > 0.0 {
        Label::Disagree
    } else if d < 0.0 {
        Label::Agree
    } else {
        Label::Neutral
    }
}

/// Random rows over a pool of `n_comments` comment ids with Gaussian-ish
/// embeddings; small pools make shared nodes (with `dedup_nodes`) likely.
pub fn random_rows(n_samples: usize, n_comments: usize, seed: u64) -> (Vec<FeatureRow>, EmbeddingTable) {
    let mut rng = RngStream::new(seed);
    let mut table = EmbeddingTable::new(EmbeddingSource::Fallback);
    for c in 0..n_comments {
        let v = (0..EMBED_DIM)
            .map(|_| (0..4).map(|_| rng.uniform(-0.5, 0.5)).sum::<f64>())
            .collect();
        table.insert(format!("c{c}"), v).expect("384-d");
    }
    let rows = (0..n_samples)
        .map(|i| {
            let p = rng.below(n_comments);
            let mut c = rng.below(n_comments);
            if c == p {
                c = (c + 1) % n_comments;
            }
            FeatureRow {
                pair_id: format!("pair{i}"),
                parent_id: format!("c{p}"),
                child_id: format!("c{c}"),
                entity: format!("e{}", rng.below(2)),
                sentiment_parent: SentimentScore::from_value(rng.uniform(-1.0, 1.0)),
                sentiment_child: SentimentScore::from_value(rng.uniform(-1.0, 1.0)),
                label: Label::ALL[rng.below(3)],
            }
        })
        .collect();
    (rows, table)
}

pub fn random_graph(n_samples: usize, n_comments: usize, seed: u64, dedup_nodes: bool) -> InteractionGraph {
    let (rows, table) = random_rows(n_samples, n_comments.max(2), seed);
    build_graph(&rows, &table, GraphOptions { dedup_nodes }).expect("synthetic rows resolve")
}
