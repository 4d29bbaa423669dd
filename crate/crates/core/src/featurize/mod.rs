//! Entity mentions, context windows, entity-conditioned sentiment, and
//! comment embeddings, combined into one feature row per (pair, entity).

mod embedding;
mod mentions;
mod rows;
mod sentiment;

pub use embedding::{
    fallback_embed, load_embeddings, write_embeddings, EmbeddingSource, EmbeddingTable, EMBED_DIM,
};
pub use mentions::{
    extract_context_window, find_entity_mentions, ContextWindow, EntityMatcher, EntityMention,
    CONTEXT_RADIUS,
};
pub use rows::{build_feature_rows, read_feature_rows, write_feature_rows, FeatureRow};
pub use sentiment::{
    score_entity_sentiment, LexiconProvider, MentionPolicy, Polarity, SentimentProvider,
    SentimentScore, NEUTRAL_BAND,
};

/// Case-folded alphanumeric word tokens.
pub(crate) fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}
