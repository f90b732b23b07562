//! Target assertions and their JSON Lines file format.
//!
//! Each record is `{s, p, o, o_kind, gt}` where `gt` is an entity id, `""`
//! for "no valid substitute", or `null` when unannotated.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{Term, Triple};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroundTruth {
    Entity(String),
    Empty,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "TargetRecord", into = "TargetRecord")]
pub struct TargetAssertion {
    pub s: String,
    pub p: String,
    pub o: Term,
    pub ground_truth: GroundTruth,
}

impl TargetAssertion {
    pub fn new(s: impl Into<String>, p: impl Into<String>, o: Term, ground_truth: GroundTruth) -> Self {
        TargetAssertion {
            s: s.into(),
            p: p.into(),
            o,
            ground_truth,
        }
    }

    pub fn triple(&self) -> Triple {
        Triple::new(self.s.clone(), self.p.clone(), self.o.clone())
    }

    pub fn is_literal(&self) -> bool {
        !self.o.is_entity()
    }

    /// Stable identifier used in error messages and artifact keys.
    pub fn id(&self) -> String {
        format!("{}|{}|{}", self.s, self.p, self.o.value())
    }
}

#[derive(Serialize, Deserialize)]
struct TargetRecord {
    s: String,
    p: String,
    o: String,
    o_kind: String,
    #[serde(default)]
    gt: Option<String>,
}

impl TryFrom<TargetRecord> for TargetAssertion {
    type Error = String;

    fn try_from(r: TargetRecord) -> std::result::Result<Self, String> {
        if r.s.is_empty() || r.p.is_empty() {
            return Err("empty subject or property".into());
        }
        let o = match r.o_kind.as_str() {
            "entity" => Term::Entity(r.o),
            "literal" => Term::Literal(r.o),
            other => return Err(format!("unknown o_kind `{other}`")),
        };
        let ground_truth = match r.gt {
            None => GroundTruth::Unknown,
            Some(g) if g.is_empty() => GroundTruth::Empty,
            Some(g) => GroundTruth::Entity(g),
        };
        Ok(TargetAssertion {
            s: r.s,
            p: r.p,
            o,
            ground_truth,
        })
    }
}

impl From<TargetAssertion> for TargetRecord {
    fn from(t: TargetAssertion) -> Self {
        TargetRecord {
            o_kind: t.o.kind_name().to_string(),
            o: t.o.value().to_string(),
            s: t.s,
            p: t.p,
            gt: match t.ground_truth {
                GroundTruth::Entity(e) => Some(e),
                GroundTruth::Empty => Some(String::new()),
                GroundTruth::Unknown => None,
            },
        }
    }
}

pub fn read_targets<R: BufRead>(r: R) -> Result<Vec<TargetAssertion>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("targets", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TargetAssertion = serde_json::from_str(&line)
            .map_err(|e| Error::parse("targets", i + 1, e.to_string()))?;
        out.push(t);
    }
    Ok(out)
}

pub fn write_targets<W: Write>(mut w: W, targets: &[TargetAssertion]) -> Result<()> {
    for t in targets {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n").map_err(|e| Error::io("targets", e))?;
    }
    Ok(())
}
