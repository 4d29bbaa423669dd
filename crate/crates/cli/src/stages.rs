//! One function per subcommand. Each stage reads the files earlier stages
//! left in the output directory and writes its own next to them.

use std::fs;
use std::path::{Path, PathBuf};

use disagree_gat::checks;
use disagree_gat::corpus::{dataset_stats, filter_pairs_by_entities, load_entity_list, load_pairs, Dataset, Label, PairFormat};
use disagree_gat::eval::{
    ablation_csv, attention_by_category, attention_histogram, entity_report, evaluate_model, histogram_csv,
    read_attention, read_categories, run_ablation, write_attention, Ablation, category_csv,
};
use disagree_gat::featurize::{
    build_feature_rows, load_embeddings, read_feature_rows, write_embeddings, write_feature_rows, EmbeddingSource,
    EmbeddingTable, LexiconProvider, SentimentProvider,
};
use disagree_gat::gat::{extract_attention, load_checkpoint, save_checkpoint, Prediction, SentimentGat};
use disagree_gat::graph::{build_graph, read_graph, split_masks, write_graph, GraphOptions, InteractionGraph, SplitMasks};
use disagree_gat::train::fit;
use serde_json::json;

use crate::config::{RunConfig, SortOrder};
use crate::error::{CliError, CliResult};

pub const ENTITIES: &str = "entities.txt";
pub const STATS: &str = "stats.json";
pub const FEATURES: &str = "features.csv";
pub const EMBEDDINGS: &str = "embeddings.emb";
pub const FEATURIZE_SUMMARY: &str = "featurize.json";
pub const GRAPH: &str = "graph.jsonl";
pub const SPLITS: &str = "splits.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const TRAIN_LOG: &str = "train_log";
pub const METRICS: &str = "metrics";
pub const ABLATION: &str = "ablation.csv";
pub const HISTOGRAM: &str = "attention_histogram.csv";
pub const ENTITY_REPORT: &str = "entity_report.csv";
pub const ENTITY_QUARTILES: &str = "entity_quartiles.csv";
pub const CATEGORY_ATTENTION: &str = "category_attention.csv";
pub const SELFCHECK: &str = "selfcheck.json";

fn ext(format: PairFormat) -> &'static str {
    match format {
        PairFormat::Csv => "csv",
        PairFormat::Jsonl => "jsonl",
    }
}

fn other(format: PairFormat) -> PairFormat {
    match format {
        PairFormat::Csv => PairFormat::Jsonl,
        PairFormat::Jsonl => PairFormat::Csv,
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn require(stage: &'static str, path: PathBuf) -> CliResult<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::StageInputMissing { stage, path })
    }
}

/// `<stem>.<format>` if present, else the other format's file.
fn find_either(out: &Path, stem: &str, format: PairFormat) -> Option<PathBuf> {
    [format, other(format)]
        .into_iter()
        .map(|f| out.join(format!("{stem}.{}", ext(f))))
        .find(|p| p.is_file())
}

fn stage_pairs(stage: &'static str, config: &RunConfig) -> CliResult<Dataset> {
    let out = &config.paths.out;
    let format = config.data.format;
    let path = find_either(out, "pairs", format).ok_or_else(|| CliError::StageInputMissing {
        stage,
        path: out.join(format!("pairs.{}", ext(format))),
    })?;
    Ok(load_pairs(&path, PairFormat::from_path(&path))?)
}

fn stage_graph(stage: &'static str, out: &Path) -> CliResult<(InteractionGraph, SplitMasks)> {
    let graph = read_graph(&require(stage, out.join(GRAPH))?)?;
    let masks = SplitMasks::read(&require(stage, out.join(SPLITS))?)?;
    Ok((graph, masks))
}

fn stage_model(stage: &'static str, out: &Path) -> CliResult<SentimentGat> {
    Ok(load_checkpoint(&require(stage, out.join(CHECKPOINT))?)?.0)
}

pub fn ingest(config: &RunConfig) -> CliResult<()> {
    let p = &config.paths;
    let pairs_path = p.pairs.as_ref().ok_or_else(|| CliError::Config("ingest needs --pairs or paths.pairs".into()))?;
    let entities_path = p
        .entities
        .as_ref()
        .ok_or_else(|| CliError::Config("ingest needs --entities or paths.entities".into()))?;
    let raw = load_pairs(pairs_path, PairFormat::from_path(pairs_path))?;
    let entities = load_entity_list(entities_path)?;
    let kept = if config.data.filter_entities {
        filter_pairs_by_entities(&raw, &entities)
    } else {
        raw.clone()
    };
    log::info!("kept {} of {} pairs", kept.len(), raw.len());

    let format = config.data.format;
    kept.write(&p.out.join(format!("pairs.{}", ext(format))), format)?;
    let stale = p.out.join(format!("pairs.{}", ext(other(format))));
    if stale.is_file() {
        fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
    }
    let mut list = entities.entities().join("\n");
    list.push('\n');
    write_text(&p.out.join(ENTITIES), &list)?;
    let stats = json!({
        "input": dataset_stats(&raw),
        "kept": dataset_stats(&kept),
        "entities": entities.len(),
    });
    write_text(&p.out.join(STATS), &serde_json::to_string_pretty(&stats).expect("plain json"))
}

pub fn featurize(config: &RunConfig) -> CliResult<()> {
    let out = &config.paths.out;
    let dataset = stage_pairs("featurize", config)?;
    let entities = load_entity_list(&require("featurize", out.join(ENTITIES))?)?;
    let provider = match &config.paths.lexicon {
        Some(path) => LexiconProvider::load(path)?,
        None => LexiconProvider::builtin(),
    };
    let rows = build_feature_rows(&dataset, &entities, &provider, config.data.mention_policy)?;
    write_feature_rows(&rows, &out.join(FEATURES))?;

    let table = match &config.paths.embeddings {
        Some(path) => load_embeddings(path)?,
        None => {
            let mut t = EmbeddingTable::new(EmbeddingSource::Fallback);
            t.fill_fallback(
                dataset
                    .pairs
                    .iter()
                    .flat_map(|p| [(p.parent_id.as_str(), p.parent_text.as_str()), (p.child_id.as_str(), p.child_text.as_str())]),
            );
            t
        }
    };
    write_embeddings(&table, &out.join(EMBEDDINGS))?;
    let summary = json!({
        "rows": rows.len(),
        "pairs": dataset.len(),
        "provider": provider.name(),
        "mention_policy": config.data.mention_policy,
        "embedding_source": table.source,
        "embeddings": table.len(),
    });
    log::info!("{} feature rows from {} pairs", rows.len(), dataset.len());
    write_text(&out.join(FEATURIZE_SUMMARY), &serde_json::to_string_pretty(&summary).expect("plain json"))
}

pub fn build(config: &RunConfig) -> CliResult<()> {
    let out = &config.paths.out;
    let dataset = stage_pairs("build-graph", config)?;
    let rows = read_feature_rows(&require("build-graph", out.join(FEATURES))?, &dataset)?;
    let table = load_embeddings(&require("build-graph", out.join(EMBEDDINGS))?)?;
    let graph = build_graph(&rows, &table, GraphOptions { dedup_nodes: config.flags.dedup_nodes })?;
    write_graph(&graph, &out.join(GRAPH))?;
    let masks = split_masks(&graph, config.data.split, config.train.seed, config.flags.group_split)?;
    masks.write(&out.join(SPLITS))?;
    log::info!(
        "{} nodes, {} edges; split {}/{}/{}",
        graph.n_nodes(),
        graph.edges.len(),
        masks.train.len(),
        masks.val.len(),
        masks.test.len()
    );
    Ok(())
}

pub fn train(config: &RunConfig) -> CliResult<()> {
    let out = &config.paths.out;
    let (graph, masks) = stage_graph("train", out)?;
    let model = SentimentGat::new(config.model, config.train.seed)?;
    let outcome = fit(model, &graph, &masks, &config.train)?;
    save_checkpoint(&outcome.model, config.train.seed, &out.join(CHECKPOINT))?;
    outcome.report.write(out, TRAIN_LOG, Some(&config.train))?;
    log::info!(
        "stopped after {} epochs ({:?}); best epoch {}",
        outcome.report.epochs_run,
        outcome.report.stop_reason,
        outcome.report.best_epoch
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

fn predictions_text(preds: &[Prediction], graph: &InteractionGraph, format: PairFormat) -> CliResult<String> {
    let name = |i: usize| Label::from_index(i).map(Label::as_str).unwrap_or("?");
    if format == PairFormat::Jsonl {
        let mut s = String::new();
        for p in preds {
            let sample = &graph.samples[p.sample_id];
            let row = json!({
                "sample_id": p.sample_id,
                "pair_id": sample.pair_id,
                "entity": sample.entity,
                "label": sample.label.as_str(),
                "predicted": name(p.label),
                "probabilities": p.probabilities,
            });
            s.push_str(&row.to_string());
            s.push('\n');
        }
        return Ok(s);
    }
    let csv_err = |e: csv::Error| CliError::Config(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "pair_id", "entity", "label", "predicted", "p_disagree", "p_neutral", "p_agree"])
        .map_err(csv_err)?;
    for p in preds {
        let sample = &graph.samples[p.sample_id];
        let [a, b, c] = p.probabilities;
        w.write_record([
            p.sample_id.to_string(),
            sample.pair_id.clone(),
            sample.entity.clone(),
            sample.label.as_str().to_string(),
            name(p.label).to_string(),
            a.to_string(),
            b.to_string(),
            c.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("utf-8 fields"))
}

pub fn evaluate(config: &RunConfig, split: SplitName) -> CliResult<()> {
    let out = &config.paths.out;
    let (graph, masks) = stage_graph("evaluate", out)?;
    let model = stage_model("evaluate", out)?;
    let ids: Vec<usize> = match split {
        SplitName::Train => masks.train,
        SplitName::Val => masks.val,
        SplitName::Test => masks.test,
        SplitName::All => (0..graph.n_samples()).collect(),
    };
    let evaluation = evaluate_model(&model, &graph, &ids)?;
    evaluation.metrics.write(out, METRICS)?;
    let format = config.data.format;
    write_text(
        &out.join(format!("predictions.{}", ext(format))),
        &predictions_text(&evaluation.predictions, &graph, format)?,
    )?;
    log::info!(
        "accuracy {:.4}, macro-F1 {:.4} over {} samples",
        evaluation.metrics.accuracy,
        evaluation.metrics.macro_avg.f1,
        ids.len()
    );
    Ok(())
}

pub fn ablate(config: &RunConfig) -> CliResult<()> {
    let out = &config.paths.out;
    let (graph, masks) = stage_graph("ablate", out)?;
    let mut table = Vec::with_capacity(Ablation::ALL.len());
    for variant in Ablation::ALL {
        let result = run_ablation(&graph, &masks, &config.model, &config.train, variant)?;
        let metrics = result.outcome.test.metrics;
        metrics.write(out, &format!("metrics_{variant}"))?;
        log::info!("{variant}: macro-F1 {:.4}", metrics.macro_avg.f1);
        table.push((variant, metrics));
    }
    write_text(&out.join(ABLATION), &ablation_csv(&table)?)
}

pub fn attention(config: &RunConfig) -> CliResult<()> {
    let out = &config.paths.out;
    let (graph, _) = stage_graph("attention", out)?;
    let model = stage_model("attention", out)?;
    let records = extract_attention(&model, &graph)?;
    let format = config.data.format;
    write_attention(&records, &out.join(format!("attention.{}", ext(format))))?;
    let bins = attention_histogram(&records, config.report.bins)?;
    write_text(&out.join(HISTOGRAM), &histogram_csv(&bins)?)
}

pub fn entity(config: &RunConfig) -> CliResult<()> {
    let out = &config.paths.out;
    let dataset = stage_pairs("entity-report", config)?;
    let rows = read_feature_rows(&require("entity-report", out.join(FEATURES))?, &dataset)?;
    let records = match find_either(out, "attention", config.data.format) {
        Some(path) => read_attention(&path)?,
        None => {
            log::warn!("no attention file in {}; attention columns stay empty", out.display());
            Vec::new()
        }
    };
    let report = entity_report(&rows, &records);
    let top = report.top_n(config.report.top_n);
    let shown = match config.report.sort {
        SortOrder::Frequency => top,
        SortOrder::Disagreement => top.sorted_by_disagreement(),
    };
    write_text(&out.join(ENTITY_REPORT), &shown.to_csv()?)?;
    write_text(&out.join(ENTITY_QUARTILES), &shown.quartiles_csv()?)?;
    if let Some(path) = &config.paths.categories {
        let categories = read_categories(path)?;
        let rows = attention_by_category(&report, &categories)?;
        write_text(&out.join(CATEGORY_ATTENTION), &category_csv(&rows)?)?;
    }
    Ok(())
}

pub fn selfcheck(config: &RunConfig, trials: usize) -> CliResult<()> {
    let results = checks::run_all(config.train.seed, trials)?;
    for r in &results {
        println!(
            "{} {} (worst {:e}, tolerance {:e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.value,
            r.tolerance
        );
    }
    let path = config.paths.out.join(SELFCHECK);
    write_text(&path, &serde_json::to_string_pretty(&results).expect("plain json"))?;
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::SelfCheckFailed(failed))
    }
}
