use serde::{Deserialize, Serialize};

use super::index::AttnIndex;
use super::layer::{GatLayer, LayerCache, LayerConfig};
use crate::error::{Error, Result};
use crate::featurize::EMBED_DIM;
use crate::graph::InteractionGraph;
use crate::nn::{softmax_row, weighted_cross_entropy, Matrix, Parameter, RngStream};

pub const N_CLASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatConfig {
    pub layer1: LayerConfig,
    pub layer2: LayerConfig,
    /// Dropout on attention coefficients during training.
    pub dropout: f64,
    /// Every node attends to itself as well as to its in-neighbours.
    pub self_loops: bool,
    /// Feed the original sentiment scalar to layer 2 (zeros otherwise).
    pub layer2_sentiment: bool,
    /// Append the two raw sentiment scalars to the classifier input.
    pub append_raw_sentiment: bool,
}

impl Default for GatConfig {
    fn default() -> Self {
        GatConfig {
            layer1: LayerConfig::default(),
            layer2: LayerConfig::default(),
            dropout: 0.5,
            self_loops: true,
            layer2_sentiment: true,
            append_raw_sentiment: false,
        }
    }
}

impl GatConfig {
    pub fn classifier_in(&self) -> usize {
        2 * self.layer2.total_out() + if self.append_raw_sentiment { 2 } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, l) in [("layer1", self.layer1), ("layer2", self.layer2)] {
            if l.heads == 0 || l.head_width() == 0 {
                return Err(Error::SchemaMismatch(format!("{name} has no heads or zero head width")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::BadRate(self.dropout));
        }
        Ok(())
    }
}

/// Two attention layers over the interaction graph and a linear pair
/// classifier on `[parent ‖ child]` node representations.
#[derive(Clone, Debug, PartialEq)]
pub struct SentimentGat {
    pub config: GatConfig,
    pub layer1: GatLayer,
    pub layer2: GatLayer,
    pub classifier: Parameter,
    pub bias: Parameter,
}

/// Everything the backward pass and attention extraction need from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub sentiment: Matrix,
    pub sentiment2: Matrix,
    pub layer1: LayerCache,
    pub layer2: LayerCache,
    pub classifier_input: Matrix,
    pub logits: Matrix,
}

impl SentimentGat {
    pub fn new(config: GatConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(seed);
        let layer1 = GatLayer::init(config.layer1, EMBED_DIM, 1, &mut rng);
        let layer2 = GatLayer::init(config.layer2, config.layer1.total_out(), 1, &mut rng);
        let c_in = config.classifier_in();
        let bound = (6.0 / (c_in + N_CLASSES) as f64).sqrt();
        let data = (0..N_CLASSES * c_in).map(|_| rng.uniform(-bound, bound)).collect();
        Ok(SentimentGat {
            config,
            layer1,
            layer2,
            classifier: Parameter::new(Matrix::from_vec(N_CLASSES, c_in, data)?),
            bias: Parameter::zeros(1, N_CLASSES),
        })
    }

    /// All parameters zero; shapes follow `config`.
    pub fn zeros(config: GatConfig) -> Result<Self> {
        config.validate()?;
        Ok(SentimentGat {
            config,
            layer1: GatLayer::zeros(config.layer1, EMBED_DIM, 1),
            layer2: GatLayer::zeros(config.layer2, config.layer1.total_out(), 1),
            classifier: Parameter::zeros(N_CLASSES, config.classifier_in()),
            bias: Parameter::zeros(1, N_CLASSES),
        })
    }

    /// Named parameters in a fixed order (the checkpoint and optimizer order).
    pub fn named_params(&self) -> Vec<(String, &Parameter)> {
        let mut out = Vec::with_capacity(12);
        for (prefix, layer) in [("layer1", &self.layer1), ("layer2", &self.layer2)] {
            for (name, p) in layer.params() {
                out.push((format!("{prefix}.{name}"), p));
            }
        }
        out.push(("classifier.weight".to_string(), &self.classifier));
        out.push(("classifier.bias".to_string(), &self.bias));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = Vec::with_capacity(12);
        out.extend(self.layer1.params_mut());
        out.extend(self.layer2.params_mut());
        out.push(&mut self.classifier);
        out.push(&mut self.bias);
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Parameter::zero_grad);
    }

    pub fn n_params(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.named_params()
            .iter()
            .flat_map(|(_, p)| p.value.as_slice().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.named_params()
            .iter()
            .flat_map(|(_, p)| p.grad.as_slice().iter().copied())
            .collect()
    }

    pub fn set_flat_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(Error::shape(
                "set_flat_values",
                format!("{} values for {} parameters", values.len(), self.n_params()),
            ));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.value.as_mut_slice().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn sentiment_inputs(&self, graph: &InteractionGraph) -> (Matrix, Matrix) {
        let n = graph.n_nodes();
        let s = Matrix::from_vec(n, 1, graph.sentiments.clone()).expect("one scalar per node");
        let s2 = if self.config.layer2_sentiment { s.clone() } else { Matrix::zeros(n, 1) };
        (s, s2)
    }

    /// Runs both layers and the classifier for every sample. Dropout is
    /// active only when `rng` is supplied.
    pub fn forward(&self, graph: &InteractionGraph, index: &AttnIndex, mut rng: Option<&mut RngStream>) -> Result<ForwardPass> {
        if graph.embeddings.cols() != self.layer1.in_embed {
            return Err(Error::shape(
                "SentimentGat::forward",
                format!("embedding width {} vs {}", graph.embeddings.cols(), self.layer1.in_embed),
            ));
        }
        let (sentiment, sentiment2) = self.sentiment_inputs(graph);
        let rate = self.config.dropout;
        let layer1 = self.layer1.forward(&graph.embeddings, &sentiment, index, rate, rng.as_deref_mut())?;
        let layer2 = self.layer2.forward(&layer1.output, &sentiment2, index, rate, rng)?;

        let out_w = self.config.layer2.total_out();
        let c_in = self.config.classifier_in();
        let mut classifier_input = Matrix::zeros(graph.n_samples(), c_in);
        for s in 0..graph.n_samples() {
            let (p, c) = graph.sample_nodes(s);
            let row = classifier_input.row_mut(s);
            row[..out_w].copy_from_slice(layer2.output.row(p));
            row[out_w..2 * out_w].copy_from_slice(layer2.output.row(c));
            if self.config.append_raw_sentiment {
                row[2 * out_w] = graph.sentiments[p];
                row[2 * out_w + 1] = graph.sentiments[c];
            }
        }
        let mut logits = classifier_input.matmul_transposed(&self.classifier.value)?;
        for s in 0..logits.rows() {
            for (l, b) in logits.row_mut(s).iter_mut().zip(self.bias.value.as_slice()) {
                *l += b;
            }
        }
        Ok(ForwardPass {
            sentiment,
            sentiment2,
            layer1,
            layer2,
            classifier_input,
            logits,
        })
    }

    /// Accumulates all parameter gradients for `∂L/∂logits`.
    pub fn backward(&mut self, graph: &InteractionGraph, index: &AttnIndex, pass: &ForwardPass, d_logits: &Matrix) -> Result<()> {
        if d_logits.shape() != pass.logits.shape() {
            return Err(Error::shape(
                "SentimentGat::backward",
                format!("{:?} vs {:?}", d_logits.shape(), pass.logits.shape()),
            ));
        }
        let d_input = crate::nn::linear_backward(&pass.classifier_input, &mut self.classifier, d_logits)?;
        for s in 0..d_logits.rows() {
            for (g, d) in self.bias.grad.as_mut_slice().iter_mut().zip(d_logits.row(s)) {
                *g += d;
            }
        }
        let out_w = self.config.layer2.total_out();
        let mut d_out2 = Matrix::zeros(graph.n_nodes(), out_w);
        for s in 0..graph.n_samples() {
            let (p, c) = graph.sample_nodes(s);
            let row = d_input.row(s);
            for (o, d) in d_out2.row_mut(p).iter_mut().zip(&row[..out_w]) {
                *o += d;
            }
            for (o, d) in d_out2.row_mut(c).iter_mut().zip(&row[out_w..2 * out_w]) {
                *o += d;
            }
        }
        let d_out1 = self
            .layer2
            .backward(&pass.layer1.output, &pass.sentiment2, index, &pass.layer2, &d_out2, true)?
            .expect("input gradient requested");
        self.layer1
            .backward(&graph.embeddings, &pass.sentiment, index, &pass.layer1, &d_out1, false)?;
        Ok(())
    }

    /// Weighted cross-entropy over the multiset `batch` of sample ids, with
    /// gradients accumulated into the parameters when `accumulate` is set.
    pub fn loss(
        &mut self,
        graph: &InteractionGraph,
        index: &AttnIndex,
        batch: &[usize],
        weights: &[f64],
        rng: Option<&mut RngStream>,
        accumulate: bool,
    ) -> Result<f64> {
        let pass = self.forward(graph, index, rng)?;
        let labels: Vec<usize> = batch.iter().map(|&s| graph.samples[s].label.index()).collect();
        let mut gathered = Matrix::zeros(batch.len(), N_CLASSES);
        for (r, &s) in batch.iter().enumerate() {
            gathered.row_mut(r).copy_from_slice(pass.logits.row(s));
        }
        let (loss, d_gathered) = weighted_cross_entropy(&gathered, &labels, weights)?;
        if accumulate {
            let mut d_logits = Matrix::zeros(pass.logits.rows(), N_CLASSES);
            for (r, &s) in batch.iter().enumerate() {
                for (o, d) in d_logits.row_mut(s).iter_mut().zip(d_gathered.row(r)) {
                    *o += d;
                }
            }
            self.backward(graph, index, &pass, &d_logits)?;
        }
        Ok(loss)
    }
}

/// Attention on one graph edge: per layer, per head, plus the mean over
/// layers of the per-layer head means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub sample_id: usize,
    pub layers: Vec<Vec<f64>>,
    pub combined: f64,
}

impl AttentionRecord {
    pub fn from_layers(sample_id: usize, layers: Vec<Vec<f64>>) -> Self {
        let means: Vec<f64> = layers.iter().map(|h| h.iter().sum::<f64>() / h.len() as f64).collect();
        let combined = means.iter().sum::<f64>() / means.len() as f64;
        AttentionRecord {
            sample_id,
            layers,
            combined,
        }
    }
}

fn records(graph: &InteractionGraph, index: &AttnIndex, pass: &ForwardPass, config: &GatConfig) -> Vec<AttentionRecord> {
    (0..graph.edges.len())
        .map(|k| {
            let idx = index.edge_entry[k];
            let layers = [(&pass.layer1, config.layer1.heads), (&pass.layer2, config.layer2.heads)]
                .iter()
                .map(|(cache, heads)| cache.alpha[idx * heads..(idx + 1) * heads].to_vec())
                .collect();
            AttentionRecord::from_layers(graph.edges[k].sample_id, layers)
        })
        .collect()
}

/// Logits for every sample and the attention on every edge.
pub fn model_forward(
    model: &SentimentGat,
    graph: &InteractionGraph,
    rng: Option<&mut RngStream>,
) -> Result<(Matrix, Vec<AttentionRecord>)> {
    let index = AttnIndex::new(graph, model.config.self_loops);
    let pass = model.forward(graph, &index, rng)?;
    let recs = records(graph, &index, &pass, &model.config);
    Ok((pass.logits, recs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: usize,
    pub label: usize,
    pub probabilities: [f64; N_CLASSES],
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict_from_logits(logits: &Matrix, sample_ids: &[usize]) -> Vec<Prediction> {
    sample_ids
        .iter()
        .map(|&s| {
            let p = softmax_row(logits.row(s));
            Prediction {
                sample_id: s,
                label: argmax(logits.row(s)),
                probabilities: [p[0], p[1], p[2]],
            }
        })
        .collect()
}

/// Inference-mode class predictions for `sample_ids`.
pub fn predict(model: &SentimentGat, graph: &InteractionGraph, sample_ids: &[usize]) -> Result<Vec<Prediction>> {
    let (logits, _) = model_forward(model, graph, None)?;
    Ok(predict_from_logits(&logits, sample_ids))
}

/// Inference-mode attention records, one per graph edge.
pub fn extract_attention(model: &SentimentGat, graph: &InteractionGraph) -> Result<Vec<AttentionRecord>> {
    Ok(model_forward(model, graph, None)?.1)
}
