use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mentions::{extract_context_window, EntityMatcher, EntityMention, CONTEXT_RADIUS};
use super::word_tokens;
use crate::error::{Error, Result};

/// Scores with `|value|` below this are labelled neutral.
pub const NEUTRAL_BAND: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }

    pub fn parse(s: &str) -> Option<Polarity> {
        match s.trim().to_lowercase().as_str() {
            "positive" => Some(Polarity::Positive),
            "negative" => Some(Polarity::Negative),
            "neutral" => Some(Polarity::Neutral),
            _ => None,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Signed sentiment in `[-1, 1]` with a label consistent with its sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub value: f64,
    pub label: Polarity,
}

impl SentimentScore {
    pub const NEUTRAL: SentimentScore = SentimentScore {
        value: 0.0,
        label: Polarity::Neutral,
    };

    /// Clamps to `[-1, 1]` and derives the label from the neutral band.
    pub fn from_value(value: f64) -> SentimentScore {
        let value = value.clamp(-1.0, 1.0);
        let label = if value.abs() < NEUTRAL_BAND {
            Polarity::Neutral
        } else if value > 0.0 {
            Polarity::Positive
        } else {
            Polarity::Negative
        };
        SentimentScore { value, label }
    }

    /// Classifier convention: confidence times the sign of the predicted label.
    pub fn from_classifier(label: Polarity, confidence: f64) -> SentimentScore {
        let sign = match label {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
            Polarity::Neutral => 0.0,
        };
        SentimentScore::from_value(sign * confidence)
    }
}

/// Anything that maps a snippet to a sentiment score. Must be deterministic.
pub trait SentimentProvider: Sync {
    fn name(&self) -> &str;
    fn score(&self, snippet: &str) -> std::result::Result<SentimentScore, String>;
}

/// Averages signed token weights over the lexicon hits in a snippet.
#[derive(Clone, Debug)]
pub struct LexiconProvider {
    name: String,
    weights: HashMap<String, f64>,
}

const DEFAULT_LEXICON: &str = include_str!("default_lexicon.tsv");

impl LexiconProvider {
    pub fn new(name: impl Into<String>, weights: HashMap<String, f64>) -> Self {
        LexiconProvider {
            name: name.into(),
            weights: weights.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect(),
        }
    }

    /// Parses `token<TAB>weight` lines; blank and `#` lines are skipped.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut weights = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| Error::BadLexicon {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (token, weight) = line.split_once('\t').ok_or_else(|| bad("expected token<TAB>weight"))?;
            let weight: f64 = weight.trim().parse().map_err(|_| bad("weight is not a number"))?;
            if !(-1.0..=1.0).contains(&weight) {
                return Err(bad("weight outside [-1, 1]"));
            }
            weights.insert(token.trim().to_lowercase(), weight);
        }
        Ok(LexiconProvider {
            name: name.into(),
            weights,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(format!("lexicon:{}", path.display()), &text)
    }

    /// Small built-in English polarity lexicon.
    pub fn builtin() -> Self {
        Self::parse("lexicon:builtin", DEFAULT_LEXICON).expect("built-in lexicon is well formed")
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl SentimentProvider for LexiconProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, snippet: &str) -> std::result::Result<SentimentScore, String> {
        let (sum, hits) = word_tokens(snippet)
            .filter_map(|t| self.weights.get(&t))
            .fold((0.0, 0usize), |(s, n), w| (s + w, n + 1));
        if hits == 0 {
            return Ok(SentimentScore::NEUTRAL);
        }
        Ok(SentimentScore::from_value(sum / hits as f64))
    }
}

/// Which mentions of an entity feed its score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionPolicy {
    #[default]
    First,
    Mean,
}

impl std::str::FromStr for MentionPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "first" => Ok(MentionPolicy::First),
            "mean" => Ok(MentionPolicy::Mean),
            other => Err(format!("unknown mention policy `{other}` (expected first or mean)")),
        }
    }
}

pub(crate) fn score_mentions(
    text: &str,
    mentions: &[EntityMention],
    entity_index: usize,
    provider: &dyn SentimentProvider,
    policy: MentionPolicy,
) -> Result<SentimentScore> {
    let mut own = mentions.iter().filter(|m| m.entity_index == entity_index);
    let targets: Vec<&EntityMention> = match policy {
        MentionPolicy::First => own.next().into_iter().collect(),
        MentionPolicy::Mean => own.collect(),
    };
    if targets.is_empty() {
        return Ok(SentimentScore::NEUTRAL);
    }
    let mut total = 0.0;
    for m in &targets {
        let window = extract_context_window(text, m, CONTEXT_RADIUS);
        let fail = |reason: String| Error::ProviderFailure {
            provider: provider.name().to_string(),
            snippet: window.snippet.clone(),
            reason,
        };
        let s = provider.score(&window.snippet).map_err(fail)?;
        if !(s.value.is_finite() && (-1.0..=1.0).contains(&s.value)) {
            return Err(fail(format!("score {} outside [-1, 1]", s.value)));
        }
        if targets.len() == 1 {
            return Ok(s);
        }
        total += s.value;
    }
    Ok(SentimentScore::from_value(total / targets.len() as f64))
}

/// Sentiment towards `entity` in `text`: neutral zero when it is not
/// mentioned, otherwise the provider's score of the context window.
pub fn score_entity_sentiment(
    text: &str,
    entity: &str,
    provider: &dyn SentimentProvider,
    matcher: &EntityMatcher,
    policy: MentionPolicy,
) -> Result<SentimentScore> {
    let Some(index) = matcher.names().iter().position(|e| e == entity) else {
        return Ok(SentimentScore::NEUTRAL);
    };
    score_mentions(text, &matcher.find(text), index, provider, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityList;
    use proptest::prelude::*;

    fn lexicon() -> LexiconProvider {
        LexiconProvider::parse("t", "good\t1\ngreat\t1\nbad\t-1\nawful\t-0.5\n").unwrap()
    }

    fn matcher(items: &[&str]) -> EntityMatcher {
        EntityMatcher::new(&EntityList::from_lines(items.iter().copied(), "t").unwrap())
    }

    #[test]
    fn absent_entity_is_neutral_zero() {
        let m = matcher(&["IPCC"]);
        let s = score_entity_sentiment("great news", "IPCC", &lexicon(), &m, MentionPolicy::First).unwrap();
        assert_eq!(s, SentimentScore::NEUTRAL);
    }

    #[test]
    fn single_positive_token() {
        let m = matcher(&["IPCC"]);
        let s = score_entity_sentiment("the IPCC is good", "IPCC", &lexicon(), &m, MentionPolicy::First).unwrap();
        assert_eq!(s.label, Polarity::Positive);
        assert!(s.value > 0.0);
    }

    #[test]
    fn lexicon_average_by_hand() {
        let m = matcher(&["IPCC"]);
        let s = score_entity_sentiment("good IPCC, great but bad", "IPCC", &lexicon(), &m, MentionPolicy::First)
            .unwrap();
        // (1 + 1 - 1) / 3
        assert!((s.value - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.label, Polarity::Positive);
    }

    #[test]
    fn first_mention_only() {
        let m = matcher(&["IPCC"]);
        let text = format!("IPCC good{}IPCC bad", " ".repeat(70));
        let first = score_entity_sentiment(&text, "IPCC", &lexicon(), &m, MentionPolicy::First).unwrap();
        assert_eq!(first.value, 1.0);
        let mean = score_entity_sentiment(&text, "IPCC", &lexicon(), &m, MentionPolicy::Mean).unwrap();
        assert_eq!(mean, SentimentScore::NEUTRAL);
    }

    #[test]
    fn neutral_band() {
        assert_eq!(SentimentScore::from_value(0.049).label, Polarity::Neutral);
        assert_eq!(SentimentScore::from_value(-0.05).label, Polarity::Negative);
        assert_eq!(SentimentScore::from_classifier(Polarity::Negative, 0.9).value, -0.9);
    }

    #[test]
    fn lexicon_parse_errors() {
        assert!(matches!(
            LexiconProvider::parse("t", "good 1"),
            Err(Error::BadLexicon { line: 1, .. })
        ));
        assert!(LexiconProvider::parse("t", "good\t1.5").is_err());
        assert!(!LexiconProvider::builtin().is_empty());
    }

    struct Failing;
    impl SentimentProvider for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn score(&self, _: &str) -> std::result::Result<SentimentScore, String> {
            Err("model offline".into())
        }
    }

    #[test]
    fn provider_failure_carries_snippet() {
        let m = matcher(&["IPCC"]);
        match score_entity_sentiment("the IPCC", "IPCC", &Failing, &m, MentionPolicy::First) {
            Err(Error::ProviderFailure { snippet, provider, .. }) => {
                assert_eq!(snippet, "the IPCC");
                assert_eq!(provider, "failing");
            }
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn totality(text in "\\PC{0,120}") {
            let m = matcher(&["IPCC", "good"]);
            let p = LexiconProvider::builtin();
            for e in ["IPCC", "good"] {
                let s = score_entity_sentiment(&text, e, &p, &m, MentionPolicy::First).unwrap();
                prop_assert!((-1.0..=1.0).contains(&s.value));
                match s.label {
                    Polarity::Neutral => prop_assert!(s.value.abs() < NEUTRAL_BAND),
                    Polarity::Positive => prop_assert!(s.value >= NEUTRAL_BAND),
                    Polarity::Negative => prop_assert!(s.value <= -NEUTRAL_BAND),
                }
            }
        }
    }
}
