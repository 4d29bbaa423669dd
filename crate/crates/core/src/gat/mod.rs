//! The entity-sentiment graph attention model: attention layers with
//! hand-derived gradients, the pair classifier, attention extraction and
//! checkpoints.

mod checkpoint;
mod index;
mod layer;
mod model;

pub use checkpoint::{checkpoint_json, load_checkpoint, parse_checkpoint, save_checkpoint};
pub use index::{AttnEntry, AttnIndex, EntryKind};
pub use layer::{GatLayer, LayerCache, LayerConfig};
pub use model::{
    argmax, extract_attention, model_forward, predict, predict_from_logits, AttentionRecord, ForwardPass, GatConfig,
    Prediction, SentimentGat, N_CLASSES,
};
