use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mentions::EntityMatcher;
use super::sentiment::{score_mentions, MentionPolicy, Polarity, SentimentProvider, SentimentScore};
use crate::corpus::{Dataset, EntityList, Label};
use crate::error::{Error, Result};
use crate::par;

/// One (pair, entity) sample: the unit of classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub pair_id: String,
    pub parent_id: String,
    pub child_id: String,
    pub entity: String,
    pub sentiment_parent: SentimentScore,
    pub sentiment_child: SentimentScore,
    pub label: Label,
}

/// One row per (pair, entity) co-occurrence, in pair order then entity-list
/// order. An entity absent from one side scores neutral zero on that side.
pub fn build_feature_rows(
    dataset: &Dataset,
    entities: &EntityList,
    provider: &dyn SentimentProvider,
    policy: MentionPolicy,
) -> Result<Vec<FeatureRow>> {
    let matcher = EntityMatcher::new(entities);
    let per_pair = par::map_slice(&dataset.pairs, |pair| -> Result<Vec<FeatureRow>> {
        let parent = matcher.find(&pair.parent_text);
        let child = matcher.find(&pair.child_text);
        let mut present: Vec<usize> = parent.iter().chain(&child).map(|m| m.entity_index).collect();
        present.sort_unstable();
        present.dedup();
        present
            .into_iter()
            .map(|idx| {
                Ok(FeatureRow {
                    pair_id: pair.pair_id.clone(),
                    parent_id: pair.parent_id.clone(),
                    child_id: pair.child_id.clone(),
                    entity: matcher.names()[idx].clone(),
                    sentiment_parent: score_mentions(&pair.parent_text, &parent, idx, provider, policy)?,
                    sentiment_child: score_mentions(&pair.child_text, &child, idx, provider, policy)?,
                    label: pair.label,
                })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_pair {
        rows.extend(r?);
    }
    Ok(rows)
}

const HEADER: [&str; 7] = [
    "pair_id",
    "entity",
    "sent_parent",
    "sent_label_parent",
    "sent_child",
    "sent_label_child",
    "label",
];

/// `pair_id,entity,sent_parent,sent_label_parent,sent_child,sent_label_child,label`
pub fn write_feature_rows(rows: &[FeatureRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.pair_id.as_str(),
            r.entity.as_str(),
            &r.sentiment_parent.value.to_string(),
            r.sentiment_parent.label.as_str(),
            &r.sentiment_child.value.to_string(),
            r.sentiment_child.label.as_str(),
            r.label.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a feature-rows CSV; comment ids are resolved through `dataset`.
pub fn read_feature_rows(path: &Path, dataset: &Dataset) -> Result<Vec<FeatureRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let by_pair: HashMap<&str, (&str, &str)> = dataset
        .pairs
        .iter()
        .map(|p| (p.pair_id.as_str(), (p.parent_id.as_str(), p.child_id.as_str())))
        .collect();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut cols = [0usize; 7];
    for (slot, name) in cols.iter_mut().zip(HEADER) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |k: usize| rec.get(cols[k]).unwrap_or("");
        let bad = |reason: String| Error::BadRow { row, reason };
        let score = |v: usize, l: usize| -> Result<SentimentScore> {
            let value: f64 = field(v)
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad sentiment value `{}`", field(v))))?;
            let label = Polarity::parse(field(l)).ok_or_else(|| bad(format!("bad sentiment label `{}`", field(l))))?;
            if !(value.is_finite() && (-1.0..=1.0).contains(&value)) {
                return Err(bad(format!("sentiment {value} outside [-1, 1]")));
            }
            Ok(SentimentScore { value, label })
        };
        let pair_id = field(0).to_string();
        let &(parent_id, child_id) = by_pair
            .get(pair_id.as_str())
            .ok_or_else(|| bad(format!("pair `{pair_id}` not in dataset")))?;
        rows.push(FeatureRow {
            parent_id: parent_id.to_string(),
            child_id: child_id.to_string(),
            entity: field(1).to_string(),
            sentiment_parent: score(2, 3)?,
            sentiment_child: score(4, 5)?,
            label: field(6).parse().map_err(|_| Error::BadLabel {
                row,
                value: field(6).to_string(),
            })?,
            pair_id,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CommentPair;
    use crate::featurize::LexiconProvider;

    fn entities(items: &[&str]) -> EntityList {
        EntityList::from_lines(items.iter().copied(), "t").unwrap()
    }

    fn lexicon() -> LexiconProvider {
        LexiconProvider::parse("t", "good\t1\nbad\t-1\n").unwrap()
    }

    #[test]
    fn one_row_per_entity() {
        let d = Dataset::new(
            vec![CommentPair::new("1", "p", "c", "Greta and the IPCC", "fine", Label::Agree)],
            "t",
        )
        .unwrap();
        let rows = build_feature_rows(&d, &entities(&["IPCC", "Greta", "NASA"]), &lexicon(), MentionPolicy::First)
            .unwrap();
        assert_eq!(rows.len(), 2);
        // entity-list order
        assert_eq!(rows[0].entity, "IPCC");
        assert_eq!(rows[1].entity, "Greta");
    }

    #[test]
    fn absent_side_is_neutral() {
        let d = Dataset::new(
            vec![CommentPair::new("1", "p", "c", "NASA is good", "no mention", Label::Disagree)],
            "t",
        )
        .unwrap();
        let rows = build_feature_rows(&d, &entities(&["NASA"]), &lexicon(), MentionPolicy::First).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].sentiment_child, SentimentScore::NEUTRAL);
        assert_eq!(rows[0].sentiment_parent.value, 1.0);
    }

    #[test]
    fn row_count_matches_brute_force_cooccurrence() {
        let ents = ["IPCC", "Greta", "NASA", "coal"];
        let texts = [
            ("Greta and coal", "IPCC says coal"),
            ("nothing", "NASA NASA"),
            ("greta greta IPCC", "Coal, nasa, greta"),
        ];
        let pairs = texts
            .iter()
            .enumerate()
            .map(|(i, (p, c))| CommentPair::new(i.to_string(), format!("p{i}"), format!("c{i}"), *p, *c, Label::Neutral))
            .collect();
        let d = Dataset::new(pairs, "t").unwrap();
        let rows = build_feature_rows(&d, &entities(&ents), &lexicon(), MentionPolicy::First).unwrap();
        let expected: usize = texts
            .iter()
            .map(|(p, c)| {
                let (p, c) = (p.to_lowercase(), c.to_lowercase());
                ents.iter()
                    .filter(|e| {
                        let e = e.to_lowercase();
                        p.contains(&e) || c.contains(&e)
                    })
                    .count()
            })
            .sum();
        assert_eq!(rows.len(), expected);
        assert_eq!(rows.len(), 3 + 1 + 4);
    }

    #[test]
    fn csv_round_trip() {
        let d = Dataset::new(
            vec![CommentPair::new("1", "p", "c", "NASA is good, really", "NASA bad", Label::Disagree)],
            "t",
        )
        .unwrap();
        let rows = build_feature_rows(&d, &entities(&["NASA"]), &lexicon(), MentionPolicy::First).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        write_feature_rows(&rows, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("pair_id,entity,sent_parent,sent_label_parent,sent_child,sent_label_child,label\n"));
        assert!(text.contains("1,NASA,1,positive,-1,negative,disagree"));
        assert_eq!(read_feature_rows(&path, &d).unwrap(), rows);
    }
}
