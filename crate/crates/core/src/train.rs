//! Training loop: per-epoch oversampling, weighted loss, Adam, early
//! stopping on validation loss, best-epoch checkpoint.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::eval::compute_metrics;
use crate::gat::{argmax, AttnIndex, SentimentGat, N_CLASSES};
use crate::graph::{class_weights, oversample_minority, InteractionGraph, SplitMasks};
use crate::nn::{derive_seed, weighted_cross_entropy, AdamConfig, AdamState, Matrix, RngStream};

/// Validation loss must drop below `best - IMPROVEMENT_TOL` to count.
pub const IMPROVEMENT_TOL: f64 = 1e-6;

// Stream ids for seeds derived from the run seed.
const OVERSAMPLE_STREAM: u64 = 1 << 32;
const DROPOUT_STREAM: u64 = 2 << 32;
const SHUFFLE_STREAM: u64 = 3 << 32;

/// Gradient steps per epoch: one over the whole (oversampled) train set, or
/// shuffled fixed-size minibatches of samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BatchMode {
    #[default]
    Full,
    Size(usize),
}

impl fmt::Display for BatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchMode::Full => f.write_str("full"),
            BatchMode::Size(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for BatchMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(BatchMode::Full);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(BatchMode::Size(n)),
            _ => Err(format!("batch must be `full` or a positive size, got `{s}`")),
        }
    }
}

impl Serialize for BatchMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BatchMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => BatchMode::from_str(&n.to_string()),
            Raw::Str(s) => BatchMode::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Attention dropout used during training; overrides the model's setting.
    pub dropout: f64,
    pub batch: BatchMode,
    /// Draw the oversampled train set once instead of every epoch.
    pub static_oversample: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 42,
            lr: 1e-3,
            weight_decay: 5e-4,
            patience: 20,
            max_epochs: 500,
            dropout: 0.5,
            batch: BatchMode::Full,
            static_oversample: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::SchemaMismatch("patience and max_epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::BadRate(self.dropout));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0 && self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::SchemaMismatch(format!(
                "lr {} and weight_decay {} must be finite and non-negative",
                self.lr, self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
    /// Best validation loss seen up to and including this epoch.
    pub best_val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Serialize)]
struct Summary<'a> {
    epochs_run: usize,
    best_epoch: usize,
    best_val_loss: f64,
    stop_reason: StopReason,
    config: Option<&'a TrainConfig>,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss,val_macro_f1`, one line per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_macro_f1\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.val_macro_f1));
        }
        out
    }

    pub fn summary_json(&self, config: Option<&TrainConfig>) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Summary {
            epochs_run: self.epochs_run,
            best_epoch: self.best_epoch,
            best_val_loss: self.best_val_loss,
            stop_reason: self.stop_reason,
            config,
        })?)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str, config: Option<&TrainConfig>) -> Result<()> {
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, self.summary_json(config)?).map_err(|e| Error::io(&json, e))
    }
}

/// What the epoch driver needs from a trainable thing. Epochs are 1-based.
pub trait Learner {
    /// One epoch of parameter updates; returns the training loss.
    fn train_epoch(&mut self, epoch: usize) -> Result<f64>;
    /// Inference-mode validation loss and macro-F1.
    fn validate(&mut self, epoch: usize) -> Result<(f64, f64)>;
    /// Called when `epoch` sets a new best validation loss.
    fn keep_best(&mut self, epoch: usize);
}

/// Runs epochs until `patience` epochs pass without an improvement or
/// `max_epochs` is reached.
pub fn run_epochs<L: Learner>(learner: &mut L, patience: usize, max_epochs: usize) -> Result<TrainReport> {
    if patience == 0 || max_epochs == 0 {
        return Err(Error::SchemaMismatch("patience and max_epochs must be at least 1".into()));
    }
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    for epoch in 1..=max_epochs {
        let train_loss = learner.train_epoch(epoch)?;
        if !train_loss.is_finite() {
            return Err(Error::DivergedLoss { epoch, loss: train_loss });
        }
        let (val_loss, val_macro_f1) = learner.validate(epoch)?;
        if !val_loss.is_finite() {
            return Err(Error::DivergedLoss { epoch, loss: val_loss });
        }
        if val_loss < best - IMPROVEMENT_TOL {
            best = val_loss;
            best_epoch = epoch;
            learner.keep_best(epoch);
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_macro_f1,
            best_val_loss: best,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} f1 {val_macro_f1:.4}");
        if epoch - best_epoch >= patience {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    Ok(TrainReport {
        epochs_run: epochs.len(),
        best_epoch,
        best_val_loss: best,
        stop_reason,
        epochs,
    })
}

struct GatLearner<'a> {
    model: SentimentGat,
    best: SentimentGat,
    graph: &'a InteractionGraph,
    index: AttnIndex,
    labels: Vec<Label>,
    train: Vec<usize>,
    /// Ids monitored for early stopping: validation, or train when empty.
    monitor: Vec<usize>,
    static_ids: Option<Vec<usize>>,
    config: TrainConfig,
    adam: AdamState,
}

impl GatLearner<'_> {
    fn epoch_ids(&self, epoch: usize) -> Result<Vec<usize>> {
        if let Some(ids) = &self.static_ids {
            return Ok(ids.clone());
        }
        let seed = derive_seed(self.config.seed, OVERSAMPLE_STREAM + epoch as u64);
        Ok(oversample_minority(&self.train, &self.labels, seed)?.ids)
    }

    fn step(&mut self, batch: &[usize], weights: &[f64], rng: &mut RngStream) -> Result<f64> {
        self.model.zero_grad();
        let loss = match self.config.batch {
            BatchMode::Full => self.model.loss(self.graph, &self.index, batch, weights, Some(rng), true)?,
            BatchMode::Size(_) => {
                // Only the batch's two-layer receptive field matters.
                let (sub, map) = self.graph.receptive_subgraph(batch, 2)?;
                let index = AttnIndex::new(&sub, self.model.config.self_loops);
                let ids: Vec<usize> = batch.iter().map(|&s| map[s].expect("batch samples are kept")).collect();
                self.model.loss(&sub, &index, &ids, weights, Some(rng), true)?
            }
        };
        self.adam.step(&mut self.model.params_mut());
        Ok(loss)
    }
}

impl Learner for GatLearner<'_> {
    fn train_epoch(&mut self, epoch: usize) -> Result<f64> {
        let mut ids = self.epoch_ids(epoch)?;
        let batch_labels: Vec<Label> = ids.iter().map(|&i| self.labels[i]).collect();
        let weights = class_weights(&batch_labels)?;
        let mut rng = RngStream::new(derive_seed(self.config.seed, DROPOUT_STREAM + epoch as u64));
        match self.config.batch {
            BatchMode::Full => self.step(&ids, weights.as_slice(), &mut rng),
            BatchMode::Size(size) => {
                RngStream::new(derive_seed(self.config.seed, SHUFFLE_STREAM + epoch as u64)).shuffle(&mut ids);
                let mut total = 0.0;
                for chunk in ids.chunks(size) {
                    total += self.step(chunk, weights.as_slice(), &mut rng)? * chunk.len() as f64;
                }
                Ok(total / ids.len() as f64)
            }
        }
    }

    fn validate(&mut self, _epoch: usize) -> Result<(f64, f64)> {
        let logits = self.model.forward(self.graph, &self.index, None)?.logits;
        evaluate_ids(&logits, &self.labels, &self.monitor)
    }

    fn keep_best(&mut self, _epoch: usize) {
        self.best.clone_from(&self.model);
    }
}

/// Unweighted cross-entropy and macro-F1 of `logits` over `ids`.
pub fn evaluate_ids(logits: &Matrix, labels: &[Label], ids: &[usize]) -> Result<(f64, f64)> {
    let mut gathered = Matrix::zeros(ids.len(), N_CLASSES);
    for (r, &s) in ids.iter().enumerate() {
        gathered.row_mut(r).copy_from_slice(logits.row(s));
    }
    let truth: Vec<usize> = ids.iter().map(|&s| labels[s].index()).collect();
    let (loss, _) = weighted_cross_entropy(&gathered, &truth, &[1.0; N_CLASSES])?;
    let preds: Vec<usize> = (0..ids.len()).map(|r| argmax(gathered.row(r))).collect();
    Ok((loss, compute_metrics(&preds, &truth)?.macro_avg.f1))
}

/// Best-epoch model and the per-epoch report.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: SentimentGat,
    pub report: TrainReport,
}

/// Trains `model` on `masks.train`, early-stopping on the validation loss
/// (the training ids stand in when the validation mask is empty).
pub fn fit(mut model: SentimentGat, graph: &InteractionGraph, masks: &SplitMasks, config: &TrainConfig) -> Result<FitOutcome> {
    config.validate()?;
    if masks.train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let n = graph.n_samples();
    if let Some(&bad) = masks.train.iter().chain(&masks.val).chain(&masks.test).find(|&&s| s >= n) {
        return Err(Error::SchemaMismatch(format!("split references sample {bad} of {n}")));
    }
    model.config.dropout = config.dropout;
    let labels = graph.labels();
    let monitor = if masks.val.is_empty() {
        log::warn!("validation split is empty; early stopping monitors the training loss");
        masks.train.clone()
    } else {
        masks.val.clone()
    };
    let static_ids = if config.static_oversample {
        Some(oversample_minority(&masks.train, &labels, derive_seed(config.seed, OVERSAMPLE_STREAM))?.ids)
    } else {
        None
    };
    let adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..AdamConfig::default()
        },
        &model.params_mut(),
    );
    let index = AttnIndex::new(graph, model.config.self_loops);
    let mut learner = GatLearner {
        best: model.clone(),
        model,
        graph,
        index,
        labels,
        train: masks.train.clone(),
        monitor,
        static_ids,
        config: *config,
        adam,
    };
    let report = run_epochs(&mut learner, config.patience, config.max_epochs)?;
    Ok(FitOutcome {
        model: learner.best,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gat::{checkpoint_json, GatConfig, LayerConfig};
    use crate::graph::{split_masks, DEFAULT_RATIOS};
    use crate::synthetic::random_graph;

    struct Scripted {
        val: Vec<f64>,
        kept: Vec<usize>,
    }

    impl Learner for Scripted {
        fn train_epoch(&mut self, _epoch: usize) -> Result<f64> {
            Ok(1.0)
        }
        fn validate(&mut self, epoch: usize) -> Result<(f64, f64)> {
            Ok((self.val[(epoch - 1).min(self.val.len() - 1)], 0.5))
        }
        fn keep_best(&mut self, epoch: usize) {
            self.kept.push(epoch);
        }
    }

    fn scripted(val: Vec<f64>) -> Scripted {
        Scripted { val, kept: Vec::new() }
    }

    #[test]
    fn never_improving_after_first_epoch_stops_at_21() {
        let mut s = scripted(vec![1.0]);
        let r = run_epochs(&mut s, 20, 500).unwrap();
        assert_eq!((r.epochs_run, r.best_epoch, r.stop_reason), (21, 1, StopReason::EarlyStop));
        assert_eq!(s.kept, vec![1]);
    }

    #[test]
    fn improvements_below_tolerance_do_not_count() {
        let mut val = vec![1.0, 0.9];
        val.extend(std::iter::repeat_n(0.9 - 9e-7, 30));
        let r = run_epochs(&mut scripted(val), 20, 500).unwrap();
        assert_eq!((r.best_epoch, r.epochs_run), (2, 22));

        let val: Vec<f64> = (0..10).map(|i| 1.0 - 2e-6 * i as f64).collect();
        let r = run_epochs(&mut scripted(val), 20, 500).unwrap();
        assert_eq!((r.best_epoch, r.epochs_run), (10, 30));
    }

    #[test]
    fn max_epochs_bounds_the_run() {
        let r = run_epochs(&mut scripted(vec![3.0, 2.0]), 20, 1).unwrap();
        assert_eq!((r.epochs_run, r.stop_reason), (1, StopReason::MaxEpochs));
        assert!(run_epochs(&mut scripted(vec![1.0]), 0, 5).is_err());
    }

    #[test]
    fn best_loss_is_monotone_and_window_has_no_improvement() {
        let val = vec![2.0, 1.5, 1.7, 1.2, 1.3, 1.25, 1.4, 1.1, 1.9, 1.5, 1.6];
        let r = run_epochs(&mut scripted(val), 3, 100).unwrap();
        for w in r.epochs.windows(2) {
            assert!(w[1].best_val_loss <= w[0].best_val_loss);
        }
        assert_eq!((r.best_epoch, r.epochs_run), (4, 7));
        assert!(r.epochs[r.best_epoch..].iter().all(|e| e.val_loss >= r.best_val_loss - IMPROVEMENT_TOL));
        let min = r.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_val_loss, min);
    }

    struct Diverging;

    impl Learner for Diverging {
        fn train_epoch(&mut self, epoch: usize) -> Result<f64> {
            Ok(if epoch == 3 { f64::NAN } else { 1.0 })
        }
        fn validate(&mut self, _epoch: usize) -> Result<(f64, f64)> {
            Ok((1.0, 0.0))
        }
        fn keep_best(&mut self, _epoch: usize) {}
    }

    #[test]
    fn non_finite_loss_aborts() {
        let err = run_epochs(&mut Diverging, 20, 10).unwrap_err();
        assert!(matches!(err, Error::DivergedLoss { epoch: 3, .. }));
    }

    fn small_model(seed: u64) -> SentimentGat {
        let l = LayerConfig {
            heads: 2,
            embed_out: 3,
            sent_out: 1,
        };
        SentimentGat::new(
            GatConfig {
                layer1: l,
                layer2: l,
                ..GatConfig::default()
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn fit_is_deterministic_and_returns_best_epoch() {
        let graph = random_graph(40, 80, 3, false);
        let masks = split_masks(&graph, DEFAULT_RATIOS, 42, false).unwrap();
        let config = TrainConfig {
            max_epochs: 15,
            patience: 5,
            ..TrainConfig::default()
        };
        let a = fit(small_model(1), &graph, &masks, &config).unwrap();
        let b = fit(small_model(1), &graph, &masks, &config).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(checkpoint_json(&a.model, 42).unwrap(), checkpoint_json(&b.model, 42).unwrap());
        assert!(a.report.epochs_run <= 15);
        assert_eq!(a.report.to_csv().lines().count(), a.report.epochs_run + 1);

        let logits = a.model.forward(&graph, &AttnIndex::new(&graph, true), None).unwrap().logits;
        let (val, _) = evaluate_ids(&logits, &graph.labels(), &masks.val).unwrap();
        assert_eq!(val, a.report.best_val_loss);
    }

    #[test]
    fn minibatches_and_static_oversampling_run() {
        let graph = random_graph(30, 60, 5, false);
        let masks = split_masks(&graph, DEFAULT_RATIOS, 42, false).unwrap();
        for config in [
            TrainConfig {
                max_epochs: 3,
                batch: BatchMode::Size(7),
                ..TrainConfig::default()
            },
            TrainConfig {
                max_epochs: 3,
                static_oversample: true,
                ..TrainConfig::default()
            },
        ] {
            let out = fit(small_model(2), &graph, &masks, &config).unwrap();
            assert_eq!(out.report.epochs_run, 3);
        }
    }

    #[test]
    fn empty_train_split_is_an_error() {
        let graph = random_graph(5, 10, 7, false);
        let masks = SplitMasks {
            train: vec![],
            val: vec![0, 1],
            test: vec![2, 3, 4],
        };
        assert!(matches!(
            fit(small_model(3), &graph, &masks, &TrainConfig::default()),
            Err(Error::EmptyTrainSet)
        ));
    }

    #[test]
    fn batch_mode_parses() {
        assert_eq!("full".parse::<BatchMode>().unwrap(), BatchMode::Full);
        assert_eq!("32".parse::<BatchMode>().unwrap(), BatchMode::Size(32));
        assert!("0".parse::<BatchMode>().is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"batch": 16, "patience": 3}"#).unwrap();
        assert_eq!((c.batch, c.patience, c.seed), (BatchMode::Size(16), 3, 42));
    }
}
