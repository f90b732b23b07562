//! In-memory triple store with `rdfs:subClassOf` inference.
//!
//! Property assertions are indexed by property, subject and entity object.
//! Class membership is answered against the transitive closure of the class
//! hierarchy, which is computed once when the store is built. Property
//! entailment is declared-only: there is no sub-property reasoning.

mod io;
mod lexical;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_anchors, load_labels, load_triples, write_kb, write_labels, write_triples};
pub use lexical::{LexicalIndex, LookupProvider, RemoteLookup, TextField};

pub const RDF_TYPE: &str = "rdf:type";
pub const RDFS_SUBCLASS_OF: &str = "rdfs:subClassOf";
pub const DEFAULT_TOP_CLASSES: [&str; 2] = ["owl:Thing", "rdfs:Resource"];

/// Object of a triple: an entity identifier or a literal's lexical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Term {
    Entity(String),
    Literal(String),
}

impl Term {
    pub fn entity(id: impl Into<String>) -> Self {
        Term::Entity(id.into())
    }

    pub fn literal(text: impl Into<String>) -> Self {
        Term::Literal(text.into())
    }

    pub fn as_entity(&self) -> Option<&str> {
        match self {
            Term::Entity(e) => Some(e),
            Term::Literal(_) => None,
        }
    }

    pub fn is_entity(&self) -> bool {
        matches!(self, Term::Entity(_))
    }

    /// Entity id or lexical form.
    pub fn value(&self) -> &str {
        match self {
            Term::Entity(v) | Term::Literal(v) => v,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Term::Entity(_) => "entity",
            Term::Literal(_) => "literal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub s: String,
    pub p: String,
    pub o: Term,
}

impl Triple {
    pub fn new(s: impl Into<String>, p: impl Into<String>, o: Term) -> Self {
        Triple {
            s: s.into(),
            p: p.into(),
            o,
        }
    }

    pub fn entity(s: impl Into<String>, p: impl Into<String>, o: impl Into<String>) -> Self {
        Triple::new(s, p, Term::Entity(o.into()))
    }

    pub fn literal(s: impl Into<String>, p: impl Into<String>, o: impl Into<String>) -> Self {
        Triple::new(s, p, Term::Literal(o.into()))
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.o {
            Term::Entity(o) => write!(f, "<{}, {}, {}>", self.s, self.p, o),
            Term::Literal(o) => write!(f, "<{}, {}, \"{}\">", self.s, self.p, o),
        }
    }
}

/// Accumulates assertions and validates them into a [`KnowledgeBase`].
#[derive(Debug, Default, Clone)]
pub struct KbBuilder {
    triples: BTreeSet<Triple>,
    types: BTreeMap<String, BTreeSet<String>>,
    parents: BTreeMap<String, BTreeSet<String>>,
    labels: BTreeMap<String, Vec<String>>,
    anchors: BTreeMap<String, String>,
    top_classes: Option<BTreeSet<String>>,
}

impl KbBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Routes `rdf:type` and `rdfs:subClassOf` entity triples to the class
    /// model; everything else is a property assertion.
    pub fn add_triple(&mut self, triple: Triple) -> &mut Self {
        match (&*triple.p, &triple.o) {
            (RDF_TYPE, Term::Entity(c)) => {
                let c = c.clone();
                self.add_type(triple.s, c)
            }
            (RDFS_SUBCLASS_OF, Term::Entity(sup)) => {
                let sup = sup.clone();
                self.add_subclass(triple.s, sup)
            }
            _ => {
                self.triples.insert(triple);
                self
            }
        }
    }

    pub fn add_type(&mut self, entity: impl Into<String>, class: impl Into<String>) -> &mut Self {
        self.types
            .entry(entity.into())
            .or_default()
            .insert(class.into());
        self
    }

    pub fn add_subclass(&mut self, sub: impl Into<String>, sup: impl Into<String>) -> &mut Self {
        self.parents.entry(sub.into()).or_default().insert(sup.into());
        self
    }

    pub fn add_label(&mut self, entity: impl Into<String>, label: impl Into<String>) -> &mut Self {
        let labels = self.labels.entry(entity.into()).or_default();
        let label = label.into();
        if !labels.contains(&label) {
            labels.push(label);
        }
        self
    }

    pub fn add_anchor(&mut self, entity: impl Into<String>, text: impl Into<String>) -> &mut Self {
        self.anchors.insert(entity.into(), text.into());
        self
    }

    pub fn top_classes<I, S>(&mut self, classes: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.top_classes = Some(classes.into_iter().map(Into::into).collect());
        self
    }

    pub fn build(self) -> Result<KnowledgeBase> {
        if let Some(member) = find_cycle(&self.parents) {
            return Err(Error::Cycle(member));
        }

        let mut ancestors: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut classes: BTreeSet<&String> = self.parents.keys().collect();
        classes.extend(self.parents.values().flatten());
        classes.extend(self.types.values().flatten());
        for class in classes {
            closure(class, &self.parents, &mut ancestors);
        }

        let triples: Vec<Triple> = self.triples.into_iter().collect();
        let mut by_property: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_subject: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_object: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut entities: BTreeSet<String> = BTreeSet::new();
        for (i, t) in triples.iter().enumerate() {
            by_property.entry(t.p.clone()).or_default().push(i);
            by_subject.entry(t.s.clone()).or_default().push(i);
            entities.insert(t.s.clone());
            if let Term::Entity(o) = &t.o {
                by_object.entry(o.clone()).or_default().push(i);
                entities.insert(o.clone());
            }
        }
        entities.extend(self.types.keys().cloned());
        entities.extend(self.labels.keys().cloned());
        entities.extend(self.anchors.keys().cloned());
        let triple_set = triples.iter().cloned().collect();

        Ok(KnowledgeBase {
            triples,
            triple_set,
            by_property,
            by_subject,
            by_object,
            types: self.types,
            parents: self.parents,
            ancestors,
            labels: self.labels,
            anchors: self.anchors,
            top_classes: self.top_classes.unwrap_or_else(|| {
                DEFAULT_TOP_CLASSES.iter().map(|c| c.to_string()).collect()
            }),
            entities,
        })
    }
}

fn find_cycle(parents: &BTreeMap<String, BTreeSet<String>>) -> Option<String> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: BTreeMap<&str, Mark> = BTreeMap::new();
    for root in parents.keys() {
        if marks.contains_key(root.as_str()) {
            continue;
        }
        // iterative DFS: (node, next child index)
        let mut stack: Vec<(&str, Vec<&str>)> = Vec::new();
        marks.insert(root, Mark::Open);
        stack.push((root, children(parents, root)));
        while let Some((node, pending)) = stack.last_mut() {
            match pending.pop() {
                Some(next) => match marks.get(next) {
                    Some(Mark::Open) => return Some(next.to_string()),
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(next, Mark::Open);
                        let kids = children(parents, next);
                        stack.push((next, kids));
                    }
                },
                None => {
                    marks.insert(node, Mark::Done);
                    stack.pop();
                }
            }
        }
    }
    None
}

fn children<'a>(parents: &'a BTreeMap<String, BTreeSet<String>>, node: &str) -> Vec<&'a str> {
    parents
        .get(node)
        .map(|ps| ps.iter().rev().map(String::as_str).collect())
        .unwrap_or_default()
}

fn closure(
    class: &str,
    parents: &BTreeMap<String, BTreeSet<String>>,
    memo: &mut BTreeMap<String, BTreeSet<String>>,
) -> BTreeSet<String> {
    if let Some(done) = memo.get(class) {
        return done.clone();
    }
    let mut acc = BTreeSet::new();
    if let Some(ps) = parents.get(class) {
        for p in ps {
            acc.insert(p.clone());
            acc.extend(closure(p, parents, memo));
        }
    }
    memo.insert(class.to_string(), acc.clone());
    acc
}

/// Immutable knowledge base: property assertions, class assertions, the
/// class hierarchy, and entity labels.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    by_property: BTreeMap<String, Vec<usize>>,
    by_subject: BTreeMap<String, Vec<usize>>,
    by_object: BTreeMap<String, Vec<usize>>,
    types: BTreeMap<String, BTreeSet<String>>,
    parents: BTreeMap<String, BTreeSet<String>>,
    ancestors: BTreeMap<String, BTreeSet<String>>,
    labels: BTreeMap<String, Vec<String>>,
    anchors: BTreeMap<String, String>,
    top_classes: BTreeSet<String>,
    entities: BTreeSet<String>,
}

impl KnowledgeBase {
    pub fn builder() -> KbBuilder {
        KbBuilder::new()
    }

    /// All property assertions in canonical (sorted) order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(String::as_str)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn has_entity(&self, e: &str) -> bool {
        self.entities.contains(e)
    }

    pub fn properties(&self) -> impl Iterator<Item = &str> {
        self.by_property.keys().map(String::as_str)
    }

    pub fn top_classes(&self) -> &BTreeSet<String> {
        &self.top_classes
    }

    pub fn labels(&self, e: &str) -> &[String] {
        self.labels.get(e).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn anchor(&self, e: &str) -> Option<&str> {
        self.anchors.get(e).map(String::as_str)
    }

    pub(crate) fn all_labels(&self) -> &BTreeMap<String, Vec<String>> {
        &self.labels
    }

    pub(crate) fn all_anchors(&self) -> &BTreeMap<String, String> {
        &self.anchors
    }

    pub(crate) fn declared_types(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.types
    }

    pub(crate) fn subclass_edges(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.parents
    }

    /// Declared-only property entailment.
    pub fn entails_property(&self, s: &str, p: &str, o: &Term) -> bool {
        // Avoid building a Triple on the hot path when the subject is unknown.
        if !self.by_subject.contains_key(s) {
            return false;
        }
        self.triple_set.contains(&Triple::new(s, p, o.clone()))
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    fn indexed<'a>(
        &'a self,
        index: &'a BTreeMap<String, Vec<usize>>,
        key: &str,
    ) -> impl Iterator<Item = &'a Triple> + 'a {
        index
            .get(key)
            .into_iter()
            .flatten()
            .map(move |&i| &self.triples[i])
    }

    pub fn assertions_of_property<'a>(&'a self, p: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        self.indexed(&self.by_property, p)
    }

    pub fn assertions_of_subject<'a>(&'a self, e: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        self.indexed(&self.by_subject, e)
    }

    /// Assertions whose object is the entity `e` (literal objects never match).
    pub fn assertions_of_object<'a>(&'a self, e: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        self.indexed(&self.by_object, e)
    }

    /// Distinct entity objects of `(s, p, ·)`.
    pub fn entity_objects(&self, s: &str, p: &str) -> BTreeSet<&str> {
        self.assertions_of_subject(s)
            .filter(|t| t.p == p)
            .filter_map(|t| t.o.as_entity())
            .collect()
    }

    /// Strict superclasses of `c` under the subclass closure.
    pub fn ancestors(&self, c: &str) -> impl Iterator<Item = &str> {
        self.ancestors.get(c).into_iter().flatten().map(String::as_str)
    }

    pub fn is_subclass_of(&self, sub: &str, sup: &str) -> bool {
        sub == sup || self.ancestors.get(sub).is_some_and(|a| a.contains(sup))
    }

    pub fn declared_classes(&self, e: &str) -> impl Iterator<Item = &str> {
        self.types.get(e).into_iter().flatten().map(String::as_str)
    }

    /// `K ⊨ ⟨e rdf:type c⟩`: declared, or reachable from a declared class.
    pub fn entails_type(&self, e: &str, c: &str) -> bool {
        self.declared_classes(e).any(|d| self.is_subclass_of(d, c))
    }

    /// Declared and inferred classes of `e`.
    pub fn classes(&self, e: &str) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for d in self.declared_classes(e) {
            out.insert(d);
            out.extend(self.ancestors(d));
        }
        out
    }

    /// Most specific declared classes: declared classes that are not a strict
    /// ancestor of another declared class of `e`.
    pub fn specific_classes(&self, e: &str) -> BTreeSet<&str> {
        let declared: Vec<&str> = self.declared_classes(e).collect();
        declared
            .iter()
            .copied()
            .filter(|&c| {
                !declared
                    .iter()
                    .any(|&other| other != c && self.is_subclass_of(other, c))
            })
            .collect()
    }

    /// Strict ancestors of the specific classes, excluding top classes.
    pub fn general_classes(&self, e: &str) -> BTreeSet<&str> {
        let specific = self.specific_classes(e);
        let mut out = BTreeSet::new();
        for c in &specific {
            for a in self.ancestors(c) {
                if !self.top_classes.contains(a) && !specific.contains(a) {
                    out.insert(a);
                }
            }
        }
        out
    }
}
