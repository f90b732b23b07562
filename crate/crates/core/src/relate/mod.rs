//! Related entity estimation: ranked candidate substitutes for the object of
//! each target assertion.
//!
//! Three generators are provided. [`lookup_star`] repeats a lexical lookup over
//! longest-first sub-phrases, [`edit_candidates`] ranks every labelled entity
//! by edit distance, and [`wordvec_candidates`] ranks by cosine similarity of
//! averaged word vectors.

mod stopwords;
mod target;
mod wordvec;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, LookupProvider};
use crate::text::{fold, tokenize};

pub use stopwords::{StopWords, STOP_WORDS_VERSION};
pub use target::{read_targets, write_targets, GroundTruth, TargetAssertion};
pub use wordvec::WordVecModel;

pub const DEFAULT_LOOKUP_K: usize = 30;
pub const DEFAULT_EDIT_K: usize = 76;

/// Tokenize, lowercase, drop stop words; order is preserved.
pub fn normalize_phrase(phrase: &str, stop: &StopWords) -> Vec<String> {
    tokenize(phrase)
        .into_iter()
        .filter(|t| !stop.contains(t))
        .collect()
}

/// Every contiguous token run, longest first, left to right within a length.
pub fn sub_phrases(tokens: &[String]) -> Vec<String> {
    let n = tokens.len();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for len in (1..=n).rev() {
        for start in 0..=n - len {
            out.push(tokens[start..start + len].join(" "));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub entity: String,
    /// Method-specific relatedness; higher is more related.
    pub score: f64,
}

/// Ranked, duplicate-free candidate substitutes for one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub target: TargetAssertion,
    pub entities: Vec<Candidate>,
    pub k: usize,
}

impl CandidateList {
    pub fn new(target: TargetAssertion, mut entities: Vec<Candidate>, k: usize) -> Self {
        let mut seen = BTreeSet::new();
        entities.retain(|c| seen.insert(c.entity.clone()));
        entities.truncate(k);
        CandidateList {
            target,
            entities,
            k,
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(|c| c.entity.as_str())
    }

    /// 1-based rank of `entity`.
    pub fn rank_of(&self, entity: &str) -> Option<usize> {
        self.ids().position(|e| e == entity).map(|i| i + 1)
    }

    pub fn truncated(&self, k: usize) -> CandidateList {
        CandidateList::new(self.target.clone(), self.entities.clone(), k.min(self.k))
    }
}

/// Lookup repeated over sub-phrases; lists are concatenated in sub-phrase
/// order, keeping the first occurrence of each entity, until `k` entities
/// have been collected. Scores are reciprocal ranks in the merged list.
pub fn lookup_star<L: LookupProvider + ?Sized>(
    provider: &L,
    phrase: &str,
    k: usize,
    stop: &StopWords,
) -> Result<Vec<Candidate>> {
    let tokens = normalize_phrase(phrase, stop);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for sub in sub_phrases(&tokens) {
        if out.len() >= k {
            break;
        }
        let hits = provider.lookup(&sub, k).map_err(|e| match e {
            Error::Lookup { .. } => e,
            other => Error::Lookup {
                phrase: sub.clone(),
                message: other.to_string(),
            },
        })?;
        for e in hits {
            if out.len() >= k {
                break;
            }
            if seen.insert(e.clone()) {
                out.push(e);
            }
        }
    }
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(i, entity)| Candidate {
            entity,
            score: 1.0 / (i + 1) as f64,
        })
        .collect())
}

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    strsim::levenshtein(a, b)
}

fn normalized_text(text: &str, stop: &StopWords) -> String {
    let tokens = normalize_phrase(text, stop);
    if tokens.is_empty() {
        // all stop words: fall back to the folded string rather than ""
        fold(text)
    } else {
        tokens.join(" ")
    }
}

/// Labelled entities ranked by their smallest edit distance to the phrase;
/// ties by entity id. The score is the negated distance.
pub fn edit_candidates(kb: &KnowledgeBase, phrase: &str, k: usize, stop: &StopWords) -> Vec<Candidate> {
    let query = normalized_text(phrase, stop);
    let mut ranked: Vec<(usize, &str)> = kb
        .all_labels()
        .iter()
        .filter(|(_, labels)| !labels.is_empty())
        .map(|(e, labels)| {
            let best = labels
                .iter()
                .map(|l| edit_distance(&query, &normalized_text(l, stop)))
                .min()
                .unwrap_or(usize::MAX);
            (best, e.as_str())
        })
        .collect();
    ranked.sort();
    ranked
        .into_iter()
        .take(k)
        .map(|(d, e)| Candidate {
            entity: e.to_string(),
            score: -(d as f64),
        })
        .collect()
}

/// Labelled entities ranked by descending cosine similarity between the
/// phrase vector and the entity's best label vector; ties by entity id.
pub fn wordvec_candidates(
    model: &WordVecModel,
    kb: &KnowledgeBase,
    phrase: &str,
    k: usize,
    stop: &StopWords,
) -> Vec<Candidate> {
    let query = model.phrase_vector(phrase, stop);
    let mut ranked: Vec<(f64, &str)> = kb
        .all_labels()
        .iter()
        .filter(|(_, labels)| !labels.is_empty())
        .map(|(e, labels)| {
            let best = labels
                .iter()
                .map(|l| wordvec::cosine(&query, &model.phrase_vector(l, stop)))
                .fold(f64::NEG_INFINITY, f64::max);
            (best, e.as_str())
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    ranked
        .into_iter()
        .take(k)
        .map(|(s, e)| Candidate {
            entity: e.to_string(),
            score: s,
        })
        .collect()
}

/// The phrase that stands for a target's object: the literal itself, or the
/// object entity's first label (its id with underscores as spaces when it
/// has none).
pub fn target_phrase(kb: &KnowledgeBase, target: &TargetAssertion) -> String {
    match &target.o {
        crate::kb::Term::Literal(l) => l.clone(),
        crate::kb::Term::Entity(e) => kb
            .labels(e)
            .first()
            .cloned()
            .unwrap_or_else(|| e.replace('_', " ")),
    }
}

/// Candidate generation strategy with its cap `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CandidateMethod {
    Lookup { k: usize },
    EditDistance { k: usize },
    WordVec { k: usize },
}

impl CandidateMethod {
    pub fn k(&self) -> usize {
        match self {
            CandidateMethod::Lookup { k }
            | CandidateMethod::EditDistance { k }
            | CandidateMethod::WordVec { k } => *k,
        }
    }
}

impl Default for CandidateMethod {
    fn default() -> Self {
        CandidateMethod::Lookup {
            k: DEFAULT_LOOKUP_K,
        }
    }
}

/// Inputs shared by all candidate generators.
pub struct Relater<'a> {
    pub kb: &'a KnowledgeBase,
    pub lookup: &'a dyn LookupProvider,
    pub wordvec: Option<&'a WordVecModel>,
    pub stop: &'a StopWords,
}

impl Relater<'_> {
    /// Candidates for one target. An entity target's own object is never
    /// proposed as its substitute.
    pub fn candidates(&self, method: &CandidateMethod, target: &TargetAssertion) -> Result<CandidateList> {
        let phrase = target_phrase(self.kb, target);
        let k = method.k();
        if k == 0 {
            return Err(Error::Config("candidate k must be at least 1".into()));
        }
        // one spare slot so dropping the original object still leaves k
        let want = if target.o.is_entity() { k + 1 } else { k };
        let mut found = match method {
            CandidateMethod::Lookup { .. } => lookup_star(self.lookup, &phrase, want, self.stop)?,
            CandidateMethod::EditDistance { .. } => edit_candidates(self.kb, &phrase, want, self.stop),
            CandidateMethod::WordVec { .. } => {
                let model = self
                    .wordvec
                    .ok_or_else(|| Error::Config("word-vector method needs a vector file".into()))?;
                wordvec_candidates(model, self.kb, &phrase, want, self.stop)
            }
        };
        if let Some(o) = target.o.as_entity() {
            found.retain(|c| c.entity != o);
        }
        Ok(CandidateList::new(target.clone(), found, k))
    }
}

/// One line of a candidate dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub s: String,
    pub p: String,
    pub o: String,
    pub o_kind: String,
    pub k: usize,
    pub candidates: Vec<RankedCandidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub entity: String,
    pub score: f64,
    pub rank: usize,
}

impl From<&CandidateList> for CandidateRecord {
    fn from(list: &CandidateList) -> Self {
        CandidateRecord {
            s: list.target.s.clone(),
            p: list.target.p.clone(),
            o: list.target.o.value().to_string(),
            o_kind: list.target.o.kind_name().to_string(),
            k: list.k,
            candidates: list
                .entities
                .iter()
                .enumerate()
                .map(|(i, c)| RankedCandidate {
                    entity: c.entity.clone(),
                    score: c.score,
                    rank: i + 1,
                })
                .collect(),
        }
    }
}

pub fn write_candidates<W: std::io::Write>(mut w: W, lists: &[CandidateList]) -> Result<()> {
    for list in lists {
        serde_json::to_writer(&mut w, &CandidateRecord::from(list))?;
        w.write_all(b"\n").map_err(|e| Error::io("candidates", e))?;
    }
    Ok(())
}

/// Reads a candidate dump back, pairing each line with its target in order.
pub fn read_candidates<R: std::io::BufRead>(r: R, targets: &[TargetAssertion]) -> Result<Vec<CandidateList>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("candidates", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CandidateRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse("candidates", i + 1, e.to_string()))?;
        let target = targets
            .get(out.len())
            .ok_or_else(|| Error::parse("candidates", i + 1, "more candidate lists than targets"))?;
        if target.s != rec.s || target.p != rec.p || target.o.value() != rec.o {
            return Err(Error::parse("candidates", i + 1, "candidate list does not match target order"));
        }
        let entities = rec
            .candidates
            .into_iter()
            .map(|c| Candidate {
                entity: c.entity,
                score: c.score,
            })
            .collect();
        out.push(CandidateList::new(target.clone(), entities, rec.k));
    }
    Ok(out)
}
