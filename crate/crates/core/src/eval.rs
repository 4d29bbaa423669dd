//! Classification metrics, the feature-ablation harness, attention
//! histograms and per-entity reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::featurize::FeatureRow;
use crate::gat::{predict, AttentionRecord, GatConfig, Prediction, SentimentGat, N_CLASSES};
use crate::graph::{InteractionGraph, SplitMasks};
use crate::pipeline::{train_and_evaluate, RunOutcome};
use crate::train::TrainConfig;

fn csv_string(rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    rows(&mut w)?;
    let bytes = w.into_inner().map_err(|e| Error::SchemaMismatch(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; N_CLASSES]; N_CLASSES]);

impl ConfusionMatrix {
    pub fn from_predictions(preds: &[usize], labels: &[usize]) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::LengthMismatch(preds.len(), labels.len()));
        }
        let mut m = [[0u64; N_CLASSES]; N_CLASSES];
        for (&p, &t) in preds.iter().zip(labels) {
            if p >= N_CLASSES {
                return Err(Error::BadClass(p));
            }
            if t >= N_CLASSES {
                return Err(Error::BadClass(t));
            }
            m[t][p] += 1;
        }
        Ok(ConfusionMatrix(m))
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.0[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.0.iter().map(|row| row[class]).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// No sample was predicted as this class; precision reported as 0.
    pub precision_undefined: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: [ClassMetrics; N_CLASSES],
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub accuracy: f64,
    pub total: u64,
    pub confusion: ConfusionMatrix,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let total = confusion.total();
        let per_class: [ClassMetrics; N_CLASSES] = std::array::from_fn(|c| {
            let tp = confusion.0[c][c];
            let predicted = confusion.predicted(c);
            let support = confusion.support(c);
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassMetrics {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support,
                precision_undefined: predicted == 0,
            }
        });
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / N_CLASSES as f64;
        let weighted = |f: fn(&ClassMetrics) -> f64| {
            if total == 0 {
                0.0
            } else {
                per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
            }
        };
        MetricsReport {
            per_class,
            macro_avg: Averages {
                precision: mean(|m| m.precision),
                recall: mean(|m| m.recall),
                f1: mean(|m| m.f1),
            },
            weighted_avg: Averages {
                precision: weighted(|m| m.precision),
                recall: weighted(|m| m.recall),
                f1: weighted(|m| m.f1),
            },
            accuracy: ratio((0..N_CLASSES).map(|c| confusion.0[c][c]).sum(), total),
            total,
            confusion,
        }
    }

    /// Class-major rows: per-class precision/recall/F1, then the overall block.
    pub fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record(["section", "metric", "value", "support", "undefined"])?;
            for (c, m) in self.per_class.iter().enumerate() {
                let label = Label::ALL[c];
                let section = format!("Class {c} - {}", capitalised(label.as_str()));
                let support = m.support.to_string();
                let flag = if m.precision_undefined { "1" } else { "0" };
                w.write_record([&section, "Precision", &m.precision.to_string(), &support, flag])?;
                w.write_record([&section, "Recall", &m.recall.to_string(), &support, "0"])?;
                w.write_record([&section, "F1-score", &m.f1.to_string(), &support, "0"])?;
            }
            let total = self.total.to_string();
            for (name, avg) in [("Macro Avg", self.macro_avg), ("Weighted Avg", self.weighted_avg)] {
                w.write_record(["Overall", &format!("{name} Precision"), &avg.precision.to_string(), &total, "0"])?;
                w.write_record(["Overall", &format!("{name} Recall"), &avg.recall.to_string(), &total, "0"])?;
                w.write_record(["Overall", &format!("{name} F1-score"), &avg.f1.to_string(), &total, "0"])?;
            }
            w.write_record(["Overall", "Accuracy", &self.accuracy.to_string(), &total, "0"])
        })
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_text(&dir.join(format!("{stem}.csv")), &self.to_csv()?)?;
        write_text(&dir.join(format!("{stem}.json")), &serde_json::to_string_pretty(self)?)
    }
}

fn capitalised(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

pub fn compute_metrics(preds: &[usize], labels: &[usize]) -> Result<MetricsReport> {
    Ok(MetricsReport::from_confusion(ConfusionMatrix::from_predictions(preds, labels)?))
}

/// Test-set predictions and metrics of `model` over `ids`.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<Prediction>,
    pub metrics: MetricsReport,
}

pub fn evaluate_model(model: &SentimentGat, graph: &InteractionGraph, ids: &[usize]) -> Result<Evaluation> {
    let predictions = predict(model, graph, ids)?;
    let preds: Vec<usize> = predictions.iter().map(|p| p.label).collect();
    let truth: Vec<usize> = ids.iter().map(|&s| graph.samples[s].label.index()).collect();
    Ok(Evaluation {
        metrics: compute_metrics(&preds, &truth)?,
        predictions,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoParentEmbed,
    NoChildEmbed,
    NoParentSent,
    NoChildSent,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoParentEmbed,
        Ablation::NoChildEmbed,
        Ablation::NoParentSent,
        Ablation::NoChildSent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoParentEmbed => "no_parent_embed",
            Ablation::NoChildEmbed => "no_child_embed",
            Ablation::NoParentSent => "no_parent_sent",
            Ablation::NoChildSent => "no_child_sent",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim())
            .ok_or_else(|| format!("unknown ablation variant `{s}`"))
    }
}

/// Copy of `graph` with the variant's feature block zeroed. Roles come from
/// the edges, so a shared node that is both a parent and a child is zeroed
/// by either side's variant.
pub fn ablate_graph(graph: &InteractionGraph, variant: Ablation) -> InteractionGraph {
    let mut g = graph.clone();
    let (parents, embed) = match variant {
        Ablation::Full => return g,
        Ablation::NoParentEmbed => (true, true),
        Ablation::NoChildEmbed => (false, true),
        Ablation::NoParentSent => (true, false),
        Ablation::NoChildSent => (false, false),
    };
    for e in &graph.edges {
        let node = if parents { e.src } else { e.dst };
        if embed {
            g.embeddings.row_mut(node).fill(0.0);
        } else {
            g.sentiments[node] = 0.0;
        }
    }
    g
}

#[derive(Clone, Debug)]
pub struct AblationResult {
    pub variant: Ablation,
    pub outcome: RunOutcome,
}

/// Zeroes the variant's features, then trains and evaluates on the test mask
/// with the same seed as every other variant.
pub fn run_ablation(
    graph: &InteractionGraph,
    masks: &SplitMasks,
    model_config: &GatConfig,
    train_config: &TrainConfig,
    variant: Ablation,
) -> Result<AblationResult> {
    let ablated = ablate_graph(graph, variant);
    Ok(AblationResult {
        variant,
        outcome: train_and_evaluate(&ablated, masks, model_config, train_config)?,
    })
}

/// Metric rows by variant columns.
pub fn ablation_csv(results: &[(Ablation, MetricsReport)]) -> Result<String> {
    type Getter = fn(&MetricsReport) -> f64;
    let rows: [(&str, Getter); 11] = [
        ("Accuracy", |m| m.accuracy),
        ("Macro Avg F1", |m| m.macro_avg.f1),
        ("Disagree F1", |m| m.per_class[0].f1),
        ("Neutral F1", |m| m.per_class[1].f1),
        ("Agree F1", |m| m.per_class[2].f1),
        ("Disagree Precision", |m| m.per_class[0].precision),
        ("Neutral Precision", |m| m.per_class[1].precision),
        ("Agree Precision", |m| m.per_class[2].precision),
        ("Disagree Recall", |m| m.per_class[0].recall),
        ("Neutral Recall", |m| m.per_class[1].recall),
        ("Agree Recall", |m| m.per_class[2].recall),
    ];
    csv_string(|w| {
        let mut header = vec!["metric".to_string()];
        header.extend(results.iter().map(|(v, _)| v.to_string()));
        w.write_record(&header)?;
        for (name, get) in rows {
            let mut rec = vec![name.to_string()];
            rec.extend(results.iter().map(|(_, m)| get(m).to_string()));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: u64,
}

/// Equal-width bins over `[min, max]` of the combined scores; the maximum
/// falls in the last bin. When every score is equal all bins collapse to
/// that value and the first one holds every record.
pub fn attention_histogram(records: &[AttentionRecord], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::BadBins);
    }
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let scores: Vec<f64> = records.iter().map(|r| r.combined).collect();
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("attention score {bad}")));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for s in scores {
        let b = if width > 0.0 { (((s - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[b] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            bin_low: lo + width * b as f64,
            bin_high: if b + 1 == bins { hi } else { lo + width * (b + 1) as f64 },
            count,
        })
        .collect())
}

pub fn histogram_csv(bins: &[HistogramBin]) -> Result<String> {
    csv_string(|w| {
        w.write_record(["bin_low", "bin_high", "count"])?;
        for b in bins {
            w.write_record([b.bin_low.to_string(), b.bin_high.to_string(), b.count.to_string()])?;
        }
        Ok(())
    })
}

/// Minimum, lower quartile, median, upper quartile, maximum (linear
/// interpolation between order statistics).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles(pub [f64; 5]);

impl Quartiles {
    pub fn of(values: &[f64]) -> Quartiles {
        if values.is_empty() {
            return Quartiles([f64::NAN; 5]);
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < v.len() {
                v[i] + frac * (v[i + 1] - v[i])
            } else {
                v[i]
            }
        };
        Quartiles([v[0], at(0.25), at(0.5), at(0.75), v[v.len() - 1]])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityStats {
    pub entity: String,
    pub frequency: usize,
    pub agree_pct: f64,
    pub disagree_pct: f64,
    pub neutral_pct: f64,
    pub mean_parent_sentiment: f64,
    pub mean_child_sentiment: f64,
    /// Mean combined attention over the entity's samples that have a record.
    pub mean_attention: Option<f64>,
    pub parent_quartiles: Quartiles,
    pub child_quartiles: Quartiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityReport {
    /// Most frequent first; ties by entity name.
    pub entities: Vec<EntityStats>,
}

pub const DEFAULT_TOP_N: usize = 30;

/// Per-entity label percentages, sentiment means and attention means.
/// `attention` is matched to rows by sample id (the row index).
pub fn entity_report(rows: &[FeatureRow], attention: &[AttentionRecord]) -> EntityReport {
    let mut by_sample: HashMap<usize, (f64, usize)> = HashMap::new();
    for r in attention {
        let e = by_sample.entry(r.sample_id).or_insert((0.0, 0));
        e.0 += r.combined;
        e.1 += 1;
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        groups.entry(row.entity.as_str()).or_default().push(i);
    }
    let mut entities: Vec<EntityStats> = groups
        .into_iter()
        .map(|(entity, idx)| {
            let n = idx.len();
            let mut counts = [0usize; N_CLASSES];
            for &i in &idx {
                counts[rows[i].label.index()] += 1;
            }
            let pct = |l: Label| 100.0 * counts[l.index()] as f64 / n as f64;
            let parent: Vec<f64> = idx.iter().map(|&i| rows[i].sentiment_parent.value).collect();
            let child: Vec<f64> = idx.iter().map(|&i| rows[i].sentiment_child.value).collect();
            let (sum, k) = idx
                .iter()
                .filter_map(|i| by_sample.get(i))
                .fold((0.0, 0), |(s, k), &(v, c)| (s + v / c as f64, k + 1));
            EntityStats {
                entity: entity.to_string(),
                frequency: n,
                agree_pct: pct(Label::Agree),
                disagree_pct: pct(Label::Disagree),
                neutral_pct: pct(Label::Neutral),
                mean_parent_sentiment: parent.iter().sum::<f64>() / n as f64,
                mean_child_sentiment: child.iter().sum::<f64>() / n as f64,
                mean_attention: (k > 0).then(|| sum / k as f64),
                parent_quartiles: Quartiles::of(&parent),
                child_quartiles: Quartiles::of(&child),
            }
        })
        .collect();
    entities.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.entity.cmp(&b.entity)));
    EntityReport { entities }
}

impl EntityReport {
    pub fn get(&self, entity: &str) -> Option<&EntityStats> {
        self.entities.iter().find(|e| e.entity == entity)
    }

    pub fn top_n(&self, n: usize) -> EntityReport {
        EntityReport {
            entities: self.entities.iter().take(n).cloned().collect(),
        }
    }

    /// Ascending disagreement percentage; ties keep frequency order.
    pub fn sorted_by_disagreement(&self) -> EntityReport {
        let mut entities = self.entities.clone();
        entities.sort_by(|a, b| a.disagree_pct.total_cmp(&b.disagree_pct));
        EntityReport { entities }
    }

    pub fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record([
                "entity",
                "frequency",
                "agree_pct",
                "disagree_pct",
                "neutral_pct",
                "parent_sentiment",
                "child_sentiment",
                "mean_attention",
            ])?;
            for e in &self.entities {
                w.write_record([
                    e.entity.clone(),
                    e.frequency.to_string(),
                    e.agree_pct.to_string(),
                    e.disagree_pct.to_string(),
                    e.neutral_pct.to_string(),
                    e.mean_parent_sentiment.to_string(),
                    e.mean_child_sentiment.to_string(),
                    e.mean_attention.map(|a| a.to_string()).unwrap_or_default(),
                ])?;
            }
            Ok(())
        })
    }

    /// Box-plot statistics: one row per entity and side.
    pub fn quartiles_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record(["entity", "side", "min", "q1", "median", "q3", "max"])?;
            for e in &self.entities {
                for (side, q) in [("parent", e.parent_quartiles), ("child", e.child_quartiles)] {
                    let mut rec = vec![e.entity.clone(), side.to_string()];
                    rec.extend(q.0.iter().map(f64::to_string));
                    w.write_record(&rec)?;
                }
            }
            Ok(())
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    MostAgree,
    MostDisagree,
    MostNeutral,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::MostAgree => "most-agree",
            Category::MostDisagree => "most-disagree",
            Category::MostNeutral => "most-neutral",
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [Category::MostAgree, Category::MostDisagree, Category::MostNeutral]
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryAttention {
    pub category: Category,
    pub entities: usize,
    /// Mean of per-entity mean attentions; `None` when none had records.
    pub mean_attention: Option<f64>,
}

pub fn attention_by_category(report: &EntityReport, categories: &BTreeMap<String, Category>) -> Result<Vec<CategoryAttention>> {
    if categories.is_empty() {
        return Err(Error::EmptyCategories);
    }
    let mut acc: BTreeMap<Category, (f64, usize, usize)> = BTreeMap::new();
    for (entity, &cat) in categories {
        let stats = report.get(entity).ok_or_else(|| Error::UnknownEntity(entity.clone()))?;
        let e = acc.entry(cat).or_insert((0.0, 0, 0));
        e.2 += 1;
        if let Some(a) = stats.mean_attention {
            e.0 += a;
            e.1 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(category, (sum, k, n))| CategoryAttention {
            category,
            entities: n,
            mean_attention: (k > 0).then(|| sum / k as f64),
        })
        .collect())
}

pub fn category_csv(rows: &[CategoryAttention]) -> Result<String> {
    csv_string(|w| {
        w.write_record(["category", "entities", "mean_attention"])?;
        for r in rows {
            w.write_record([
                r.category.as_str().to_string(),
                r.entities.to_string(),
                r.mean_attention.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        Ok(())
    })
}

/// `entity,category` CSV with a header; categories are kebab-case names.
pub fn read_categories(path: &Path) -> Result<BTreeMap<String, Category>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_categories(&text)
}

pub fn parse_categories(text: &str) -> Result<BTreeMap<String, Category>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (ec, cc) = (col("entity")?, col("category")?);
    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| Error::BadRow { row: i + 2, reason };
        let entity = rec.get(ec).unwrap_or("").trim();
        if entity.is_empty() {
            return Err(bad("empty entity".into()));
        }
        let category = rec.get(cc).unwrap_or("").parse::<Category>().map_err(bad)?;
        out.insert(entity.to_string(), category);
    }
    Ok(out)
}

/// `sample_id,combined,l1_h0,..,l2_h0,..`: one row per record, head columns
/// from the first record's layout.
pub fn attention_csv(records: &[AttentionRecord]) -> Result<String> {
    let layout: Vec<usize> = records.first().map(|r| r.layers.iter().map(Vec::len).collect()).unwrap_or_default();
    csv_string(|w| {
        let mut header = vec!["sample_id".to_string(), "combined".to_string()];
        for (l, &heads) in layout.iter().enumerate() {
            header.extend((0..heads).map(|k| format!("l{}_h{k}", l + 1)));
        }
        w.write_record(&header)?;
        for r in records {
            let mut row = vec![r.sample_id.to_string(), r.combined.to_string()];
            row.extend(r.layers.iter().flatten().map(|a| a.to_string()));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

fn parse_attention_csv(text: &str) -> Result<Vec<AttentionRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("sample_id") || headers.get(1) != Some("combined") {
        return Err(Error::MissingColumn("sample_id,combined".into()));
    }
    let mut layout: Vec<usize> = Vec::new();
    for h in headers.iter().skip(2) {
        let layer = h
            .strip_prefix('l')
            .and_then(|rest| rest.split_once("_h"))
            .and_then(|(l, _)| l.parse::<usize>().ok())
            .filter(|&l| l >= 1)
            .ok_or_else(|| Error::MissingColumn(format!("attention head column, found `{h}`")))?;
        if layout.len() < layer {
            layout.resize(layer, 0);
        }
        layout[layer - 1] += 1;
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| Error::BadRow { row: i + 2, reason };
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| bad(format!("column {j}: {e}")))
        };
        let sample_id = rec.get(0).unwrap_or("").parse::<usize>().map_err(|e| bad(e.to_string()))?;
        let combined = num(1)?;
        let mut col = 2;
        let mut layers = Vec::with_capacity(layout.len());
        for &heads in &layout {
            layers.push((col..col + heads).map(num).collect::<Result<Vec<_>>>()?);
            col += heads;
        }
        out.push(AttentionRecord {
            sample_id,
            layers,
            combined,
        });
    }
    Ok(out)
}

/// Writes JSON lines when `path` ends in `.jsonl`, CSV otherwise.
pub fn write_attention(records: &[AttentionRecord], path: &Path) -> Result<()> {
    let text = if is_jsonl(path) {
        let mut s = String::new();
        for r in records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        s
    } else {
        attention_csv(records)?
    };
    write_text(path, &text)
}

pub fn read_attention(path: &Path) -> Result<Vec<AttentionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if is_jsonl(path) {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    } else {
        parse_attention_csv(&text)
    }
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("jsonl")
}
