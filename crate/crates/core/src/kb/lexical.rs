use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::KnowledgeBase;
use crate::error::{Error, Result};
use crate::text::tokenize;

/// Anything that maps a phrase to a ranked list of entity ids.
pub trait LookupProvider {
    fn lookup(&self, phrase: &str, k: usize) -> Result<Vec<String>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextField {
    Label,
    Anchor,
}

#[derive(Debug, Clone)]
struct IndexedText {
    chars: usize,
    tokens: BTreeSet<String>,
}

/// Token-level inverted index over entity labels and anchor text.
///
/// Literal objects are never indexed. Ranking is token Jaccard between the
/// phrase and an entity's best-matching label or anchor, with ties broken by
/// the shorter matching text and then by entity id.
#[derive(Debug, Clone, Default)]
pub struct LexicalIndex {
    postings: BTreeMap<String, BTreeSet<(String, TextField)>>,
    texts: BTreeMap<String, Vec<IndexedText>>,
    concatenated: BTreeMap<String, String>,
}

pub(crate) fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

impl LexicalIndex {
    pub fn build(kb: &KnowledgeBase) -> Self {
        let mut index = LexicalIndex::default();
        for (e, labels) in kb.all_labels() {
            for l in labels {
                index.add(e, TextField::Label, l);
            }
        }
        for (e, text) in kb.all_anchors() {
            index.add(e, TextField::Anchor, text);
        }
        index
    }

    fn add(&mut self, entity: &str, field: TextField, text: &str) {
        let tokens: BTreeSet<String> = tokenize(text).into_iter().collect();
        if tokens.is_empty() {
            return;
        }
        for t in &tokens {
            self.postings
                .entry(t.clone())
                .or_default()
                .insert((entity.to_string(), field));
        }
        let joined = self.concatenated.entry(entity.to_string()).or_default();
        if !joined.is_empty() {
            joined.push(' ');
        }
        joined.push_str(&crate::text::fold(text));
        self.texts.entry(entity.to_string()).or_default().push(IndexedText {
            chars: text.chars().count(),
            tokens,
        });
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    /// Folded label and anchor text of `entity`, space-joined.
    pub fn entity_text(&self, entity: &str) -> Option<&str> {
        self.concatenated.get(entity).map(String::as_str)
    }

    pub fn entities_for_token(&self, token: &str) -> impl Iterator<Item = &(String, TextField)> {
        self.postings.get(token).into_iter().flatten()
    }

    /// Best similarity of `entity` to the phrase tokens, with the length of
    /// the text that achieved it.
    pub fn similarity(&self, entity: &str, phrase: &BTreeSet<String>) -> Option<(f64, usize)> {
        let texts = self.texts.get(entity)?;
        let mut best: Option<(f64, usize)> = None;
        for t in texts {
            let score = jaccard(phrase, &t.tokens);
            best = match best {
                None => Some((score, t.chars)),
                Some((b, len)) if score > b || (score == b && t.chars < len) => {
                    Some((score, t.chars))
                }
                keep => keep,
            };
        }
        best
    }

    /// Ranked entities sharing at least one token with `phrase`, with scores.
    pub fn lookup_scored(&self, phrase: &str, k: usize) -> Vec<(String, f64)> {
        let q: BTreeSet<String> = tokenize(phrase).into_iter().collect();
        let mut hits: BTreeSet<&str> = BTreeSet::new();
        for t in &q {
            if let Some(ps) = self.postings.get(t) {
                hits.extend(ps.iter().map(|(e, _)| e.as_str()));
            }
        }
        let mut scored: Vec<(&str, f64, usize)> = hits
            .into_iter()
            .filter_map(|e| self.similarity(e, &q).map(|(s, len)| (e, s, len)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then(a.2.cmp(&b.2))
                .then(a.0.cmp(b.0))
        });
        scored
            .into_iter()
            .take(k)
            .map(|(e, s, _)| (e.to_string(), s))
            .collect()
    }

    pub fn lookup(&self, phrase: &str, k: usize) -> Vec<String> {
        self.lookup_scored(phrase, k)
            .into_iter()
            .map(|(e, _)| e)
            .collect()
    }
}

impl LookupProvider for LexicalIndex {
    fn lookup(&self, phrase: &str, k: usize) -> Result<Vec<String>> {
        Ok(LexicalIndex::lookup(self, phrase, k))
    }
}

/// Lookup over HTTP: `GET <endpoint>?q=<phrase>&max=<k>` answering a JSON
/// array of entity ids in rank order. The provider's order is trusted.
#[derive(Debug, Clone)]
pub struct RemoteLookup {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemoteLookup {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(30))
            .build();
        RemoteLookup {
            endpoint: endpoint.into(),
            agent,
        }
    }
}

impl LookupProvider for RemoteLookup {
    fn lookup(&self, phrase: &str, k: usize) -> Result<Vec<String>> {
        let fail = |message: String| Error::Lookup {
            phrase: phrase.to_string(),
            message,
        };
        let response = self
            .agent
            .get(&self.endpoint)
            .query("q", phrase)
            .query("max", &k.to_string())
            .call()
            .map_err(|e| fail(e.to_string()))?;
        let mut ids: Vec<String> = response.into_json().map_err(|e| fail(e.to_string()))?;
        let mut seen = BTreeSet::new();
        ids.retain(|id| seen.insert(id.clone()));
        ids.truncate(k);
        Ok(ids)
    }
}
