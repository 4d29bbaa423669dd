//! Train-then-test routine shared by the CLI, the ablation harness and the
//! acceptance checks.

use crate::error::Result;
use crate::eval::{evaluate_model, Evaluation};
use crate::gat::{GatConfig, SentimentGat};
use crate::graph::{InteractionGraph, SplitMasks};
use crate::train::{fit, TrainConfig, TrainReport};

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub model: SentimentGat,
    pub report: TrainReport,
    pub test: Evaluation,
}

/// Initialises a model from `train_config.seed`, fits it and evaluates the
/// best checkpoint on the test mask.
pub fn train_and_evaluate(
    graph: &InteractionGraph,
    masks: &SplitMasks,
    model_config: &GatConfig,
    train_config: &TrainConfig,
) -> Result<RunOutcome> {
    let model = SentimentGat::new(*model_config, train_config.seed)?;
    let out = fit(model, graph, masks, train_config)?;
    let test = evaluate_model(&out.model, graph, &masks.test)?;
    log::info!(
        "best epoch {} of {}; test accuracy {:.4}, macro-F1 {:.4}",
        out.report.best_epoch,
        out.report.epochs_run,
        test.metrics.accuracy,
        test.metrics.macro_avg.f1
    );
    Ok(RunOutcome {
        model: out.model,
        report: out.report,
        test,
    })
}
