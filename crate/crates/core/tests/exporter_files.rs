//! Embedding files as an external exporter writes them, assembled byte by
//! byte here rather than through `write_embeddings`.

use std::fs;
use std::path::Path;

use disagree_gat::corpus::{CommentPair, Dataset, EntityList, Label};
use disagree_gat::featurize::{build_feature_rows, load_embeddings, LexiconProvider, MentionPolicy, EMBED_DIM};
use disagree_gat::graph::{build_graph, GraphOptions};
use disagree_gat::Error;

fn vector(seed: usize) -> Vec<f32> {
    (0..EMBED_DIM).map(|k| ((seed * 31 + k) % 97) as f32 / 97.0 - 0.5).collect()
}

fn emb1(records: &[(&str, Vec<f32>)], dim: u32) -> Vec<u8> {
    let mut out = b"EMB1".to_vec();
    out.extend(dim.to_le_bytes());
    out.extend((records.len() as u32).to_le_bytes());
    for (id, v) in records {
        out.extend((id.len() as u16).to_le_bytes());
        out.extend(id.as_bytes());
        for x in v {
            out.extend(x.to_le_bytes());
        }
    }
    out
}

fn load(dir: &Path, name: &str, bytes: &[u8]) -> disagree_gat::Result<disagree_gat::featurize::EmbeddingTable> {
    let path = dir.join(name);
    fs::write(&path, bytes).unwrap();
    load_embeddings(&path)
}

#[test]
fn binary_records_load_with_f32_values() {
    let dir = tempfile::tempdir().unwrap();
    let records = [("c1", vector(1)), ("réponse-2", vector(2))];
    let table = load(dir.path(), "e.emb", &emb1(&records, EMBED_DIM as u32)).unwrap();
    assert_eq!(table.len(), 2);
    for (id, v) in &records {
        let got = table.get(id).unwrap();
        assert_eq!(got.len(), EMBED_DIM);
        assert!(got.iter().zip(v).all(|(a, b)| *a == *b as f64));
    }
}

#[test]
fn jsonl_records_load() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = (0..3)
        .map(|i| serde_json::json!({"id": format!("c{i}"), "vec": vector(i)}).to_string() + "\n")
        .collect();
    let table = load(dir.path(), "e.jsonl", text.as_bytes()).unwrap();
    assert_eq!(table.len(), 3);
    assert_eq!(table.get("c2").unwrap()[0], vector(2)[0] as f64);
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = emb1(&[("a", vector(0))], EMBED_DIM as u32);
    bad[..4].copy_from_slice(b"EMB2");
    assert!(matches!(load(dir.path(), "bad.emb", &bad), Err(Error::BadMagic(_))));

    let short = emb1(&[("short", vector(0)[..383].to_vec())], 383);
    assert!(matches!(load(dir.path(), "short.emb", &short), Err(Error::DimMismatch { .. })));

    let line = serde_json::json!({"id": "short", "vec": vec![0.0; 383]}).to_string();
    let err = load(dir.path(), "short.jsonl", line.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("short"), "{err}");

    let full = emb1(&[("a", vector(0))], EMBED_DIM as u32);
    assert!(load(dir.path(), "cut.emb", &full[..full.len() - 3]).is_err());
}

#[test]
fn imported_vectors_become_node_rows_and_gaps_are_missing_ids() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = vec![
        CommentPair::new("p0", "c0", "c1", "The carbon tax is good", "The carbon tax is bad", Label::Disagree),
        CommentPair::new("p1", "c2", "c3", "Solar is great", "Solar is great indeed", Label::Agree),
    ];
    let dataset = Dataset::new(pairs, "test").unwrap();
    let entities = EntityList::from_lines(["carbon tax", "solar"], "test").unwrap();
    let rows = build_feature_rows(&dataset, &entities, &LexiconProvider::builtin(), MentionPolicy::First).unwrap();

    let records: Vec<(String, Vec<f32>)> = (0..4).map(|i| (format!("c{i}"), vector(i))).collect();
    let borrowed: Vec<(&str, Vec<f32>)> = records.iter().map(|(id, v)| (id.as_str(), v.clone())).collect();
    let table = load(dir.path(), "e.emb", &emb1(&borrowed, EMBED_DIM as u32)).unwrap();
    let graph = build_graph(&rows, &table, GraphOptions::default()).unwrap();
    for (i, node) in graph.nodes.iter().enumerate() {
        let idx: usize = node.comment_id[1..].parse().unwrap();
        assert!(graph.embeddings.row(i).iter().zip(&vector(idx)).all(|(a, b)| *a == *b as f64));
    }

    let table = load(dir.path(), "gap.emb", &emb1(&borrowed[..3], EMBED_DIM as u32)).unwrap();
    let err = build_graph(&rows, &table, GraphOptions::default()).unwrap_err();
    assert!(matches!(err, Error::MissingId(ref id) if id == "c3"), "{err}");
}
