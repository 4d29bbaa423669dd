use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::EntityList;

/// Characters kept on each side of a mention.
pub const CONTEXT_RADIUS: usize = 30;

/// A mention located in a text. Offsets count Unicode scalar values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub entity: String,
    pub entity_index: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub snippet: String,
    pub window_start: usize,
    pub window_end: usize,
}

pub(crate) fn fold_char(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

/// Pre-folded entity patterns indexed by their first character.
#[derive(Clone, Debug)]
pub struct EntityMatcher {
    names: Vec<String>,
    patterns: Vec<Vec<char>>,
    by_first: HashMap<char, Vec<usize>>,
}

impl EntityMatcher {
    pub fn new(list: &EntityList) -> Self {
        let names = list.entities().to_vec();
        let patterns: Vec<Vec<char>> = names.iter().map(|e| e.chars().map(fold_char).collect()).collect();
        let mut by_first: HashMap<char, Vec<usize>> = HashMap::new();
        for (i, p) in patterns.iter().enumerate() {
            if let Some(&c) = p.first() {
                by_first.entry(c).or_default().push(i);
            }
        }
        // Longest first; list order among equal lengths.
        for ids in by_first.values_mut() {
            ids.sort_by(|&a, &b| patterns[b].len().cmp(&patterns[a].len()).then(a.cmp(&b)));
        }
        EntityMatcher {
            names,
            patterns,
            by_first,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Leftmost-longest, non-overlapping, case-insensitive matches that do
    /// not start or end inside a longer alphanumeric token.
    pub fn find(&self, text: &str) -> Vec<EntityMention> {
        let raw: Vec<char> = text.chars().collect();
        let folded: Vec<char> = raw.iter().copied().map(fold_char).collect();
        let n = folded.len();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < n {
            let hit = self.by_first.get(&folded[pos]).and_then(|cands| {
                cands.iter().copied().find(|&i| {
                    let p = &self.patterns[i];
                    let end = pos + p.len();
                    end <= n
                        && folded[pos..end] == p[..]
                        && !(pos > 0 && is_word(raw[pos - 1]) && is_word(p[0]))
                        && !(end < n && is_word(raw[end]) && is_word(p[p.len() - 1]))
                })
            });
            match hit {
                Some(i) => {
                    let end = pos + self.patterns[i].len();
                    out.push(EntityMention {
                        entity: self.names[i].clone(),
                        entity_index: i,
                        start: pos,
                        end,
                    });
                    pos = end;
                }
                None => pos += 1,
            }
        }
        out
    }

    pub fn has_any(&self, text: &str) -> bool {
        !self.find(text).is_empty()
    }
}

pub fn find_entity_mentions(text: &str, entities: &EntityList) -> Vec<EntityMention> {
    EntityMatcher::new(entities).find(text)
}

/// Slices `radius` characters either side of the mention, clipped to the text.
pub fn extract_context_window(text: &str, mention: &EntityMention, radius: usize) -> ContextWindow {
    let len = text.chars().count();
    let window_start = mention.start.saturating_sub(radius).min(len);
    let window_end = mention.end.saturating_add(radius).min(len);
    let snippet = text
        .chars()
        .skip(window_start)
        .take(window_end.saturating_sub(window_start))
        .collect();
    ContextWindow {
        snippet,
        window_start,
        window_end,
    }
}
