use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::word_tokens;
use crate::error::{Error, Result};

pub const EMBED_DIM: usize = 384;
const MAGIC: [u8; 4] = *b"EMB1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Imported,
    Fallback,
}

/// Comment id → 384-d vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vectors: BTreeMap<String, Vec<f64>>,
    pub source: EmbeddingSource,
}

impl EmbeddingTable {
    pub fn new(source: EmbeddingSource) -> Self {
        EmbeddingTable {
            vectors: BTreeMap::new(),
            source,
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != EMBED_DIM {
            return Err(Error::DimMismatch {
                id,
                expected: EMBED_DIM,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding `{id}`")));
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&[f64]> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingId(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.vectors.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Fallback-embeds every `(id, text)` not already present.
    pub fn fill_fallback<'a>(&mut self, comments: impl IntoIterator<Item = (&'a str, &'a str)>) {
        for (id, text) in comments {
            if !self.vectors.contains_key(id) {
                self.vectors.insert(id.to_string(), fallback_embed(text));
            }
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Hashed bag-of-words: each case-folded token adds ±1 to bucket
/// `fnv1a(token) mod 384` (sign from the hash's top bit), then the vector is
/// L2-normalised. Texts without tokens map to the zero vector. If the signed
/// counts cancel exactly, unsigned counts are used instead.
pub fn fallback_embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBED_DIM];
    let mut unsigned = vec![0.0; EMBED_DIM];
    for token in word_tokens(text) {
        let h = fnv1a(token.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        let bucket = (h % EMBED_DIM as u64) as usize;
        v[bucket] += sign;
        unsigned[bucket] += 1.0;
    }
    if v.iter().all(|&x| x == 0.0) {
        v = unsigned;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Reads the binary `EMB1` format, or JSON lines when the path ends in `.jsonl`.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        return parse_jsonl(&bytes);
    }
    parse_binary(&bytes)
}

fn parse_jsonl(bytes: &[u8]) -> Result<EmbeddingTable> {
    #[derive(Deserialize)]
    struct Record {
        id: String,
        vec: Vec<f64>,
    }
    let text = String::from_utf8_lossy(bytes);
    let mut table = EmbeddingTable::new(EmbeddingSource::Imported);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let r: Record = serde_json::from_str(line)?;
        table.insert(r.id, r.vec)?;
    }
    Ok(table)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::SchemaMismatch(format!("embeddings file truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}

fn parse_binary(bytes: &[u8]) -> Result<EmbeddingTable> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = match cur.take(4) {
        Ok(m) => m.try_into().unwrap(),
        Err(_) => {
            let mut m = [0u8; 4];
            m[..bytes.len()].copy_from_slice(bytes);
            return Err(Error::BadMagic(m));
        }
    };
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let dim = cur.u32()? as usize;
    let count = cur.u32()? as usize;
    let mut table = EmbeddingTable::new(EmbeddingSource::Imported);
    for _ in 0..count {
        let id_len = cur.u16()? as usize;
        let id = String::from_utf8(cur.take(id_len)?.to_vec())
            .map_err(|_| Error::SchemaMismatch("embedding id is not UTF-8".into()))?;
        let raw = cur.take(dim * 4)?;
        let vector = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        table.insert(id, vector)?;
    }
    if cur.pos != bytes.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} trailing bytes after {count} records",
            bytes.len() - cur.pos
        )));
    }
    Ok(table)
}

/// Writes the binary `EMB1` format (values narrowed to f32).
pub fn write_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + table.len() * (EMBED_DIM * 4 + 16));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&(EMBED_DIM as u32).to_le_bytes());
    buf.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for (id, v) in table.iter() {
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::SchemaMismatch(format!("embedding id `{id}` longer than 65535 bytes")))?;
        buf.extend_from_slice(&id_len.to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        for &x in v {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / (na * nb)
    }

    #[test]
    fn fallback_basics() {
        assert_eq!(fallback_embed("Sea level rise"), fallback_embed("Sea level rise"));
        assert_eq!(fallback_embed(""), vec![0.0; EMBED_DIM]);
        assert_eq!(fallback_embed("  ,,, "), vec![0.0; EMBED_DIM]);
        let a = fallback_embed("climate climate");
        let b = fallback_embed("climate");
        assert!((cosine(&a, &b) - 1.0).abs() <= 1e-12);
        assert_eq!(fallback_embed("Climate"), fallback_embed("climate"));
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        let mut t = EmbeddingTable::new(EmbeddingSource::Fallback);
        t.fill_fallback([("c1", "first comment"), ("c2", "second one")]);
        write_embeddings(&t, &path).unwrap();
        let back = load_embeddings(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.source, EmbeddingSource::Imported);
        for (id, v) in t.iter() {
            let w = back.get(id).unwrap();
            assert!(v.iter().zip(w).all(|(a, b)| (*a as f32) as f64 == *b));
        }
    }

    #[test]
    fn dim_mismatch_names_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        let mut buf = Vec::new();
        buf.extend_from_slice(b"EMB1");
        buf.extend_from_slice(&383u32.to_le_bytes());
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&2u16.to_le_bytes());
        buf.extend_from_slice(b"c9");
        buf.extend(std::iter::repeat_n(0u8, 383 * 4));
        fs::write(&path, buf).unwrap();
        match load_embeddings(&path) {
            Err(Error::DimMismatch { id, found, .. }) => {
                assert_eq!(id, "c9");
                assert_eq!(found, 383);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        fs::write(&path, b"EMB2\0\0\0\0").unwrap();
        assert!(matches!(load_embeddings(&path), Err(Error::BadMagic(m)) if &m == b"EMB2"));
        let mut buf = b"EMB1".to_vec();
        buf.extend_from_slice(&384u32.to_le_bytes());
        buf.extend_from_slice(&1u32.to_le_bytes());
        fs::write(&path, buf).unwrap();
        assert!(matches!(load_embeddings(&path), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn jsonl_variant() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        let v: Vec<String> = (0..EMBED_DIM).map(|i| format!("{}", i as f64 / 1000.0)).collect();
        fs::write(&path, format!("{{\"id\": \"a\", \"vec\": [{}]}}\n", v.join(","))).unwrap();
        let t = load_embeddings(&path).unwrap();
        assert_eq!(t.get("a").unwrap()[5], 0.005);
        assert!(matches!(t.get("b"), Err(Error::MissingId(_))));
    }

    proptest! {
        #[test]
        fn fallback_unit_norm(text in "\\PC{0,200}") {
            let v = fallback_embed(&text);
            prop_assert_eq!(v.len(), EMBED_DIM);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if word_tokens(&text).next().is_some() {
                prop_assert!((norm - 1.0).abs() <= 1e-9);
            } else {
                prop_assert_eq!(norm, 0.0);
            }
        }
    }
}
