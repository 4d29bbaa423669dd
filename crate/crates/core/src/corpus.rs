//! Labeled comment-reply pairs, the entity list, and dataset statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::EntityMatcher;

/// Interaction class. The discriminants are the classifier's output indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Disagree = 0,
    Neutral = 1,
    Agree = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Disagree, Label::Neutral, Label::Agree];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Disagree => "disagree",
            Label::Neutral => "neutral",
            Label::Agree => "agree",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_lowercase().as_str() {
            "disagree" => Ok(Label::Disagree),
            "neutral" => Ok(Label::Neutral),
            "agree" => Ok(Label::Agree),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommentPair {
    pub pair_id: String,
    pub parent_id: String,
    pub child_id: String,
    pub parent_text: String,
    pub child_text: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_author: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child_author: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_id: Option<String>,
}

impl CommentPair {
    /// Minimal constructor; optional metadata left empty.
    pub fn new(
        pair_id: impl Into<String>,
        parent_id: impl Into<String>,
        child_id: impl Into<String>,
        parent_text: impl Into<String>,
        child_text: impl Into<String>,
        label: Label,
    ) -> Self {
        CommentPair {
            pair_id: pair_id.into(),
            parent_id: parent_id.into(),
            child_id: child_id.into(),
            parent_text: parent_text.into(),
            child_text: child_text.into(),
            label,
            timestamp: None,
            parent_author: None,
            child_author: None,
            post_id: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub pairs: Vec<CommentPair>,
    pub provenance: String,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate pair ids.
    pub fn new(pairs: Vec<CommentPair>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &pairs {
            if !seen.insert(p.pair_id.as_str()) {
                return Err(Error::DuplicatePairId(p.pair_id.clone()));
            }
        }
        Ok(Dataset {
            pairs,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Writes the pairs as JSON lines (the format read back by [`load_pairs`]).
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Writes the pairs as CSV with every known column; absent optional
    /// fields are left empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::SchemaMismatch(format!("{other:?}")),
        })?;
        w.write_record(REQUIRED.iter().chain(OPTIONAL.iter()))?;
        for p in &self.pairs {
            let opt = |v: &Option<String>| v.clone().unwrap_or_default();
            w.write_record([
                p.pair_id.clone(),
                p.parent_id.clone(),
                p.child_id.clone(),
                p.parent_text.clone(),
                p.child_text.clone(),
                p.label.as_str().to_string(),
                opt(&p.timestamp),
                opt(&p.parent_author),
                opt(&p.child_author),
                opt(&p.post_id),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write(&self, path: &Path, format: PairFormat) -> Result<()> {
        match format {
            PairFormat::Csv => self.write_csv(path),
            PairFormat::Jsonl => self.write_jsonl(path),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairFormat {
    Csv,
    Jsonl,
}

impl PairFormat {
    /// `.jsonl`/`.json` means JSON lines, anything else CSV.
    pub fn from_path(path: &Path) -> PairFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => PairFormat::Jsonl,
            _ => PairFormat::Csv,
        }
    }
}

impl FromStr for PairFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(PairFormat::Csv),
            "jsonl" => Ok(PairFormat::Jsonl),
            other => Err(format!("unknown pair format `{other}` (expected csv or jsonl)")),
        }
    }
}

const REQUIRED: [&str; 6] = [
    "pair_id",
    "parent_id",
    "child_id",
    "parent_text",
    "child_text",
    "label",
];
const OPTIONAL: [&str; 4] = ["timestamp", "parent_author", "child_author", "post_id"];

/// Comment length bounds of the source corpus, in words. Outliers are logged only.
pub const WORD_BOUNDS: (usize, usize) = (10, 100);

pub fn load_pairs(path: &Path, format: PairFormat) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let pairs = match format {
        PairFormat::Csv => parse_csv(&text)?,
        PairFormat::Jsonl => parse_jsonl(&text)?,
    };
    let outliers = pairs
        .iter()
        .flat_map(|p| [&p.parent_text, &p.child_text])
        .filter(|t| {
            let n = t.split_whitespace().count();
            n < WORD_BOUNDS.0 || n > WORD_BOUNDS.1
        })
        .count();
    if outliers > 0 {
        log::warn!(
            "{outliers} comments outside {}-{} words in {}",
            WORD_BOUNDS.0,
            WORD_BOUNDS.1,
            path.display()
        );
    }
    Dataset::new(pairs, path.display().to_string())
}

fn build_pair(row: usize, get: impl Fn(&str) -> Option<String>) -> Result<CommentPair> {
    let field = |name: &str| get(name).unwrap_or_default();
    let raw_label = field("label");
    let label = raw_label.parse().map_err(|_| Error::BadLabel {
        row,
        value: raw_label.clone(),
    })?;
    let pair = CommentPair {
        pair_id: field("pair_id").trim().to_string(),
        parent_id: field("parent_id").trim().to_string(),
        child_id: field("child_id").trim().to_string(),
        parent_text: field("parent_text"),
        child_text: field("child_text"),
        label,
        timestamp: get("timestamp").filter(|s| !s.trim().is_empty()),
        parent_author: get("parent_author").filter(|s| !s.trim().is_empty()),
        child_author: get("child_author").filter(|s| !s.trim().is_empty()),
        post_id: get("post_id").filter(|s| !s.trim().is_empty()),
    };
    for (name, value) in [
        ("pair_id", &pair.pair_id),
        ("parent_id", &pair.parent_id),
        ("child_id", &pair.child_id),
        ("parent_text", &pair.parent_text),
        ("child_text", &pair.child_text),
    ] {
        if value.trim().is_empty() {
            return Err(Error::BadRow {
                row,
                reason: format!("empty {name}"),
            });
        }
    }
    Ok(pair)
}

fn parse_csv(text: &str) -> Result<Vec<CommentPair>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let index = |name: &str| headers.iter().position(|h| h.trim() == name);
    for name in REQUIRED {
        if index(name).is_none() {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }
    let columns: BTreeMap<&str, usize> = REQUIRED
        .iter()
        .chain(OPTIONAL.iter())
        .filter_map(|&n| index(n).map(|i| (n, i)))
        .collect();
    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let pair = build_pair(row, |name| {
            columns
                .get(name)
                .and_then(|&c| record.get(c))
                .map(str::to_string)
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

fn parse_jsonl(text: &str) -> Result<Vec<CommentPair>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(line)?;
        for name in REQUIRED {
            if !obj.contains_key(name) {
                return Err(Error::MissingColumn(name.to_string()));
            }
        }
        let pair = build_pair(row, |name| {
            obj.get(name).and_then(|v| match v {
                serde_json::Value::String(s) => Some(s.clone()),
                serde_json::Value::Null => None,
                other => Some(other.to_string()),
            })
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Ordered, case-fold-unique list of entity surface forms.
#[derive(Clone, Debug, PartialEq)]
pub struct EntityList {
    entities: Vec<String>,
    pub source_path: String,
}

impl EntityList {
    /// Trims, drops blanks and `#` comments, and keeps the first of any
    /// case-folded duplicates.
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>, source: impl Into<String>) -> Result<Self> {
        let source = source.into();
        let mut seen = HashSet::new();
        let mut entities = Vec::new();
        for line in lines {
            let e = line.trim();
            if e.is_empty() || e.starts_with('#') {
                continue;
            }
            if seen.insert(e.to_lowercase()) {
                entities.push(e.to_string());
            }
        }
        if entities.is_empty() {
            return Err(Error::EmptyList(PathBuf::from(source)));
        }
        Ok(EntityList {
            entities,
            source_path: source,
        })
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn position(&self, entity: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == entity)
    }
}

pub fn load_entity_list(path: &Path) -> Result<EntityList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let list = EntityList::from_lines(text.lines(), path.display().to_string())?;
    log::info!("loaded {} entities from {}", list.len(), path.display());
    Ok(list)
}

/// Keeps pairs whose parent or child text mentions at least one entity.
pub fn filter_pairs_by_entities(dataset: &Dataset, entities: &EntityList) -> Dataset {
    let matcher = EntityMatcher::new(entities);
    let pairs = dataset
        .pairs
        .iter()
        .filter(|p| matcher.has_any(&p.parent_text) || matcher.has_any(&p.child_text))
        .cloned()
        .collect();
    Dataset {
        pairs,
        provenance: format!("{} (entity-filtered)", dataset.provenance),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_pairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_users: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_posts: Option<usize>,
    pub label_counts: BTreeMap<Label, usize>,
    pub label_fractions: BTreeMap<Label, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub date_range: Option<(String, String)>,
}

pub fn dataset_stats(dataset: &Dataset) -> StatsReport {
    let n = dataset.len();
    let mut label_counts = BTreeMap::new();
    for p in &dataset.pairs {
        *label_counts.entry(p.label).or_insert(0usize) += 1;
    }
    let label_fractions = label_counts
        .iter()
        .map(|(&l, &c)| (l, c as f64 / n as f64))
        .collect();

    let authors: HashSet<&str> = dataset
        .pairs
        .iter()
        .flat_map(|p| [p.parent_author.as_deref(), p.child_author.as_deref()])
        .flatten()
        .collect();
    let posts: HashSet<&str> = dataset.pairs.iter().filter_map(|p| p.post_id.as_deref()).collect();
    let mut stamps: Vec<&str> = dataset.pairs.iter().filter_map(|p| p.timestamp.as_deref()).collect();
    stamps.sort_unstable();

    StatsReport {
        n_pairs: n,
        n_users: (!authors.is_empty()).then_some(authors.len()),
        n_posts: (!posts.is_empty()).then_some(posts.len()),
        label_counts,
        label_fractions,
        date_range: match (stamps.first(), stamps.last()) {
            (Some(a), Some(b)) => Some((a.to_string(), b.to_string())),
            _ => None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let path = dir.path().join(name);
        fs::File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        path
    }

    const HEADER: &str = "pair_id,parent_id,child_id,parent_text,child_text,label\n";

    #[test]
    fn label_strings_map_to_class_indices() {
        assert_eq!(" Disagree ".parse::<Label>(), Ok(Label::Disagree));
        assert_eq!(Label::Disagree.index(), 0);
        assert_eq!(Label::Neutral.index(), 1);
        assert_eq!("AGREE".parse::<Label>().unwrap().index(), 2);
        assert!("maybe".parse::<Label>().is_err());
    }

    #[test]
    fn csv_with_quoting() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}p1,a,b,\"Hello, world\",\"She said \"\"no\"\"\",disagree\n"
        );
        let path = write(&dir, "pairs.csv", &body);
        let d = load_pairs(&path, PairFormat::Csv).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.pairs[0].parent_text, "Hello, world");
        assert_eq!(d.pairs[0].child_text, "She said \"no\"");
        assert_eq!(d.pairs[0].label, Label::Disagree);
    }

    #[test]
    fn empty_csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "pairs.csv", HEADER);
        assert!(load_pairs(&path, PairFormat::Csv).unwrap().is_empty());
    }

    #[test]
    fn duplicate_pair_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}p1,a,b,x,y,agree\np1,c,d,x,y,agree\n");
        let path = write(&dir, "pairs.csv", &body);
        match load_pairs(&path, PairFormat::Csv) {
            Err(Error::DuplicatePairId(id)) => assert_eq!(id, "p1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_label_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}p1,a,b,x,y,agree\np2,c,d,x,y,sorta\n");
        let path = write(&dir, "pairs.csv", &body);
        match load_pairs(&path, PairFormat::Csv) {
            Err(Error::BadLabel { row, value }) => {
                assert_eq!(row, 2);
                assert_eq!(value, "sorta");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "pairs.csv", "pair_id,parent_id,child_id,parent_text,label\n");
        assert!(matches!(
            load_pairs(&path, PairFormat::Csv),
            Err(Error::MissingColumn(c)) if c == "child_text"
        ));
    }

    #[test]
    fn jsonl_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"pair_id":"p1","parent_id":"a","child_id":"b","parent_text":"x","child_text":"y","label":"Neutral","timestamp":"2016-01-02"}
{"pair_id":"p2","parent_id":"a","child_id":"c","parent_text":"x","child_text":"z","label":"agree"}
"#;
        let path = write(&dir, "pairs.jsonl", body);
        let d = load_pairs(&path, PairFormat::Jsonl).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.pairs[0].label, Label::Neutral);
        assert_eq!(d.pairs[0].timestamp.as_deref(), Some("2016-01-02"));
        let missing = write(&dir, "bad.jsonl", r#"{"pair_id":"p1"}"#);
        assert!(matches!(load_pairs(&missing, PairFormat::Jsonl), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn blank_text_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}p1,a,b,\"   \",y,agree\n");
        let path = write(&dir, "pairs.csv", &body);
        assert!(matches!(load_pairs(&path, PairFormat::Csv), Err(Error::BadRow { row: 1, .. })));
    }

    #[test]
    fn entity_list_case_fold_dedup() {
        let list = EntityList::from_lines(["Greta", "greta", "IPCC"], "mem").unwrap();
        assert_eq!(list.entities(), &["Greta".to_string(), "IPCC".to_string()]);
        let commented = EntityList::from_lines(["# header", "  COP26  ", ""], "mem").unwrap();
        assert_eq!(commented.entities(), &["COP26".to_string()]);
    }

    #[test]
    fn entity_list_blank_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "e.txt", "\n   \n\n");
        assert!(matches!(load_entity_list(&path), Err(Error::EmptyList(_))));
    }

    #[test]
    fn filter_keeps_child_only_mentions() {
        let d = Dataset::new(
            vec![
                CommentPair::new("1", "a", "b", "nothing relevant", "I trust the IPCC", Label::Agree),
                CommentPair::new("2", "c", "d", "nothing", "at all", Label::Neutral),
            ],
            "mem",
        )
        .unwrap();
        let e = EntityList::from_lines(["IPCC"], "mem").unwrap();
        let f = filter_pairs_by_entities(&d, &e);
        assert_eq!(f.pairs.len(), 1);
        assert_eq!(f.pairs[0].pair_id, "1");
    }

    #[test]
    fn stats_counts_and_fractions() {
        let labels = [0, 0, 0, 0, 1, 1, 1, 2, 2, 2];
        let pairs = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                CommentPair::new(i.to_string(), "p", "c", "x", "y", Label::from_index(l).unwrap())
            })
            .collect();
        let s = dataset_stats(&Dataset::new(pairs, "mem").unwrap());
        assert_eq!(s.n_pairs, 10);
        assert_eq!(s.label_fractions[&Label::Disagree], 0.4);
        assert_eq!(s.label_fractions[&Label::Neutral], 0.3);
        assert_eq!(s.label_fractions[&Label::Agree], 0.3);
        assert!(s.n_users.is_none());

        let empty = dataset_stats(&Dataset::default());
        assert_eq!(empty.n_pairs, 0);
        assert!(empty.label_fractions.is_empty());
    }

    #[test]
    fn stats_optional_columns() {
        let mut a = CommentPair::new("1", "p", "c", "x", "y", Label::Agree);
        a.parent_author = Some("u1".into());
        a.child_author = Some("u2".into());
        a.timestamp = Some("2015-01-03T00:00:00".into());
        let mut b = CommentPair::new("2", "p", "d", "x", "z", Label::Agree);
        b.parent_author = Some("u1".into());
        b.child_author = Some("u3".into());
        b.timestamp = Some("2015-01-01T00:00:00".into());
        let s = dataset_stats(&Dataset::new(vec![a, b], "mem").unwrap());
        assert_eq!(s.n_users, Some(3));
        assert_eq!(
            s.date_range,
            Some(("2015-01-01T00:00:00".into(), "2015-01-03T00:00:00".into()))
        );
    }

    #[test]
    fn written_datasets_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = CommentPair::new("p1", "c1", "c2", "Says \"hi\", then\nleaves", "ok, fine", Label::Agree);
        a.timestamp = Some("2020-05-01T10:00:00".into());
        let b = CommentPair::new("p2", "c3", "c4", "second", "reply", Label::Disagree);
        let d = Dataset::new(vec![a, b], "test").unwrap();
        for (name, format) in [("d.csv", PairFormat::Csv), ("d.jsonl", PairFormat::Jsonl)] {
            let path = dir.path().join(name);
            d.write(&path, format).unwrap();
            assert_eq!(load_pairs(&path, format).unwrap().pairs, d.pairs);
        }
    }
}
