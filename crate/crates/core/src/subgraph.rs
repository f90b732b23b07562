//! Task-specific sub-graph extraction and balanced training samples.
//!
//! The sub-graph is built in three steps: seeds (target subjects, target
//! properties, candidate entities and entity objects of the targets), their
//! neighbourhoods in the knowledge base, and a re-closure of entities and
//! properties over the collected triples. Only entity-object triples enter
//! the sub-graph.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{KbBuilder, KnowledgeBase, Term, Triple};
use crate::relate::{CandidateList, TargetAssertion};

pub const NEGATIVE_RETRY_BUDGET: usize = 100;

/// An entity-to-entity triple.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub s: String,
    pub p: String,
    pub o: String,
}

impl Edge {
    pub fn new(s: impl Into<String>, p: impl Into<String>, o: impl Into<String>) -> Self {
        Edge {
            s: s.into(),
            p: p.into(),
            o: o.into(),
        }
    }

    pub fn from_triple(t: &Triple) -> Option<Edge> {
        t.o.as_entity().map(|o| Edge::new(t.s.clone(), t.p.clone(), o))
    }

    pub fn to_triple(&self) -> Triple {
        Triple::entity(self.s.clone(), self.p.clone(), self.o.clone())
    }
}

/// How neighbourhood triples are collected around the seed entities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractMode {
    /// Triples whose subject or object is a seed entity.
    #[default]
    Incident,
    /// Triples whose subject and object are both seed entities.
    Strict,
    /// Skip extraction and use every entity triple of the knowledge base.
    WholeKb,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGraph {
    pub entities: BTreeSet<String>,
    pub properties: BTreeSet<String>,
    pub triples: BTreeSet<Edge>,
    /// Subjects of the target assertions.
    pub seeds: BTreeSet<String>,
    /// Union of all candidate substitutes.
    pub related: BTreeSet<String>,
    /// Properties of the target assertions, before re-closure.
    pub target_properties: BTreeSet<String>,
}

pub fn extract_subgraph(
    kb: &KnowledgeBase,
    targets: &[TargetAssertion],
    candidates: &[CandidateList],
    mode: ExtractMode,
) -> Result<SubGraph> {
    let mut sub = SubGraph::default();
    for t in targets {
        sub.seeds.insert(t.s.clone());
        sub.properties.insert(t.p.clone());
        sub.target_properties.insert(t.p.clone());
    }
    for list in candidates {
        for e in list.ids() {
            if !kb.has_entity(e) {
                return Err(Error::UnknownEntity(e.to_string()));
            }
            sub.related.insert(e.to_string());
        }
    }
    sub.entities.extend(sub.seeds.iter().cloned());
    sub.entities.extend(sub.related.iter().cloned());
    for t in targets {
        if let Term::Entity(o) = &t.o {
            sub.entities.insert(o.clone());
        }
    }

    let edges = |it: &mut dyn Iterator<Item = &Triple>, out: &mut BTreeSet<Edge>| {
        out.extend(it.filter_map(Edge::from_triple));
    };
    match mode {
        ExtractMode::WholeKb => edges(&mut kb.triples().iter(), &mut sub.triples),
        ExtractMode::Incident | ExtractMode::Strict => {
            for p in &sub.properties {
                edges(&mut kb.assertions_of_property(p), &mut sub.triples);
            }
            for e in &sub.entities {
                if mode == ExtractMode::Incident {
                    edges(&mut kb.assertions_of_subject(e), &mut sub.triples);
                    edges(&mut kb.assertions_of_object(e), &mut sub.triples);
                } else {
                    let both = kb
                        .assertions_of_subject(e)
                        .filter(|t| t.o.as_entity().is_some_and(|o| sub.entities.contains(o)));
                    sub.triples.extend(both.filter_map(Edge::from_triple));
                }
            }
        }
    }

    for t in &sub.triples {
        sub.entities.insert(t.s.clone());
        sub.entities.insert(t.o.clone());
        sub.properties.insert(t.p.clone());
    }
    Ok(sub)
}

/// `(T_sp, T_pr)`: triples from seed subjects over target properties, and
/// triples over target properties pointing at related entities.
///
/// Only the target properties count, not the re-closed property set.
pub fn sample_positives(sub: &SubGraph) -> (BTreeSet<Edge>, BTreeSet<Edge>) {
    let mut sp = BTreeSet::new();
    let mut pr = BTreeSet::new();
    for t in &sub.triples {
        if !sub.target_properties.contains(&t.p) {
            continue;
        }
        if sub.seeds.contains(&t.s) {
            sp.insert(t.clone());
        }
        if sub.related.contains(&t.o) {
            pr.insert(t.clone());
        }
    }
    (sp, pr)
}

/// Which end of a positive is replaced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corrupt {
    Subject,
    Object,
}

/// Replace one end of `positive` with a uniformly drawn entity so that the
/// result is neither in the sub-graph nor in `taken`.
pub fn corrupt<R: Rng>(
    rng: &mut R,
    positive: &Edge,
    side: Corrupt,
    entities: &[&String],
    triples: &BTreeSet<Edge>,
    taken: &BTreeSet<Edge>,
    budget: usize,
) -> Option<Edge> {
    if entities.is_empty() {
        return None;
    }
    for _ in 0..budget {
        let pick = entities[rng.gen_range(0..entities.len())];
        let cand = match side {
            Corrupt::Object => Edge::new(positive.s.clone(), positive.p.clone(), pick.clone()),
            Corrupt::Subject => Edge::new(pick.clone(), positive.p.clone(), positive.o.clone()),
        };
        if !triples.contains(&cand) && !taken.contains(&cand) {
            return Some(cand);
        }
    }
    None
}

/// Balanced positives and negatives; `negatives[i]` corrupts `positives[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub positives: Vec<Edge>,
    pub negatives: Vec<Edge>,
    pub seed: u64,
}

impl SampleSet {
    /// Positives labelled 1 followed by negatives labelled 0.
    pub fn labelled(&self) -> impl Iterator<Item = (&Edge, f64)> {
        self.positives
            .iter()
            .map(|e| (e, 1.0))
            .chain(self.negatives.iter().map(|e| (e, 0.0)))
    }
}

/// Object-corrupted negatives for `t_sp`, subject-corrupted negatives for the
/// members of `t_pr` not already in `t_sp`. A positive whose corruption runs
/// out of retries is dropped with a warning, keeping the two sides balanced.
pub fn sample_negatives(
    sub: &SubGraph,
    t_sp: &BTreeSet<Edge>,
    t_pr: &BTreeSet<Edge>,
    seed: u64,
) -> Result<SampleSet> {
    if sub.entities.len() < 2 {
        return Err(Error::Config("negative sampling needs at least two entities".into()));
    }
    let entities: Vec<&String> = sub.entities.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = BTreeSet::new();
    let mut out = SampleSet {
        positives: Vec::new(),
        negatives: Vec::new(),
        seed,
    };
    let jobs = t_sp
        .iter()
        .map(|t| (t, Corrupt::Object))
        .chain(t_pr.difference(t_sp).map(|t| (t, Corrupt::Subject)));
    for (pos, side) in jobs {
        match corrupt(&mut rng, pos, side, &entities, &sub.triples, &taken, NEGATIVE_RETRY_BUDGET) {
            Some(neg) => {
                taken.insert(neg.clone());
                out.positives.push(pos.clone());
                out.negatives.push(neg);
            }
            None => log::warn!(
                "no corruption for <{}, {}, {}> within {NEGATIVE_RETRY_BUDGET} draws; dropping it",
                pos.s,
                pos.p,
                pos.o
            ),
        }
    }
    Ok(out)
}

/// Positives and negatives in one call.
pub fn sample(sub: &SubGraph, seed: u64) -> Result<SampleSet> {
    let (sp, pr) = sample_positives(sub);
    sample_negatives(sub, &sp, &pr, seed)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    #[serde(rename = "SE")]
    seeds: BTreeSet<String>,
    #[serde(rename = "RE")]
    related: BTreeSet<String>,
    #[serde(rename = "P")]
    properties: BTreeSet<String>,
    target_properties: BTreeSet<String>,
    seed: Option<u64>,
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn read_edges<R: BufRead>(r: R, name: &str) -> Result<BTreeSet<Edge>> {
    let mut b = KbBuilder::new();
    crate::kb::load_triples(r, name, &mut b)?;
    let kb = b.build()?;
    Ok(kb.triples().iter().filter_map(Edge::from_triple).collect())
}

impl SubGraph {
    /// Writes the triples as TSV and the seed sets as a JSON sidecar.
    pub fn save(&self, tsv: &Path, sidecar: &Path, seed: Option<u64>) -> Result<()> {
        let mut w = create(tsv)?;
        let triples: Vec<Triple> = self.triples.iter().map(Edge::to_triple).collect();
        crate::kb::write_triples(&mut w, &triples).map_err(|e| Error::io(tsv, e))?;
        w.flush().map_err(|e| Error::io(tsv, e))?;
        let side = Sidecar {
            seeds: self.seeds.clone(),
            related: self.related.clone(),
            properties: self.properties.clone(),
            target_properties: self.target_properties.clone(),
            seed,
        };
        serde_json::to_writer_pretty(create(sidecar)?, &side)?;
        Ok(())
    }

    pub fn load(tsv: &Path, sidecar: &Path) -> Result<(SubGraph, Option<u64>)> {
        let f = std::fs::File::open(tsv).map_err(|e| Error::io(tsv, e))?;
        let triples = read_edges(std::io::BufReader::new(f), &tsv.display().to_string())?;
        let f = std::fs::File::open(sidecar).map_err(|e| Error::io(sidecar, e))?;
        let side: Sidecar = serde_json::from_reader(std::io::BufReader::new(f))?;
        let mut sub = SubGraph {
            entities: BTreeSet::new(),
            properties: side.properties,
            triples,
            seeds: side.seeds,
            related: side.related,
            target_properties: side.target_properties,
        };
        sub.entities.extend(sub.seeds.iter().cloned());
        sub.entities.extend(sub.related.iter().cloned());
        for t in &sub.triples {
            sub.entities.insert(t.s.clone());
            sub.entities.insert(t.o.clone());
            sub.properties.insert(t.p.clone());
        }
        Ok((sub, side.seed))
    }
}

impl SampleSet {
    /// Positives then negatives as TSV, with a JSON sidecar carrying the seed.
    pub fn save(&self, tsv: &Path, sidecar: &Path) -> Result<()> {
        let mut w = create(tsv)?;
        for (e, label) in self.labelled() {
            writeln!(w, "{}\t{}\t{}\tentity\t{}", e.s, e.p, e.o, label as u8)
                .map_err(|err| Error::io(tsv, err))?;
        }
        w.flush().map_err(|e| Error::io(tsv, e))?;
        serde_json::to_writer_pretty(
            create(sidecar)?,
            &serde_json::json!({ "seed": self.seed, "positives": self.positives.len() }),
        )?;
        Ok(())
    }

    pub fn load(tsv: &Path, sidecar: &Path) -> Result<SampleSet> {
        let name = tsv.display().to_string();
        let f = std::fs::File::open(tsv).map_err(|e| Error::io(tsv, e))?;
        let mut out = SampleSet {
            positives: Vec::new(),
            negatives: Vec::new(),
            seed: 0,
        };
        for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(tsv, e))?;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(Error::parse(&name, i + 1, "expected s, p, o, kind and label"));
            }
            let e = Edge::new(f[0], f[1], f[2]);
            match f[4] {
                "1" => out.positives.push(e),
                "0" => out.negatives.push(e),
                other => return Err(Error::parse(&name, i + 1, format!("bad label `{other}`"))),
            }
        }
        if out.positives.len() != out.negatives.len() {
            return Err(Error::parse(&name, 0, "positives and negatives are unbalanced"));
        }
        let f = std::fs::File::open(sidecar).map_err(|e| Error::io(sidecar, e))?;
        let side: serde_json::Value = serde_json::from_reader(std::io::BufReader::new(f))?;
        out.seed = side["seed"]
            .as_u64()
            .ok_or_else(|| Error::parse(&sidecar.display().to_string(), 0, "missing seed"))?;
        Ok(out)
    }
}
