//! Correction decisions: normalise model scores over all predictions,
//! average them, filter candidates by a threshold and pick the top survivor.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, Term};
use crate::relate::{CandidateList, TargetAssertion};
use crate::text::fold;

/// Min-max normalisation over every value of the map. A constant input maps
/// to 0.5.
pub fn normalize<K: Ord + Clone>(raw: &BTreeMap<K, f64>) -> Result<BTreeMap<K, f64>> {
    normalize_by(raw, |_| ())
}

/// Min-max normalisation within each group of keys.
pub fn normalize_by<K, G, F>(raw: &BTreeMap<K, f64>, group: F) -> Result<BTreeMap<K, f64>>
where
    K: Ord + Clone,
    G: Ord,
    F: Fn(&K) -> G,
{
    if raw.values().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("score before normalisation".into()));
    }
    let mut bounds: BTreeMap<G, (f64, f64)> = BTreeMap::new();
    for (k, &v) in raw {
        let b = bounds.entry(group(k)).or_insert((v, v));
        b.0 = b.0.min(v);
        b.1 = b.1.max(v);
    }
    Ok(raw
        .iter()
        .map(|(k, &v)| {
            let (lo, hi) = bounds[&group(k)];
            let y = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            (k.clone(), y)
        })
        .collect())
}

/// Mean of the available scores; `None` when neither is present.
pub fn ensemble(y_l: Option<f64>, y_c: Option<f64>) -> Option<f64> {
    match (y_l, y_c) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        (a, b) => a.or(b),
    }
}

/// How a literal is compared with candidate labels by the keep rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMatch {
    /// Case-folded, whitespace-trimmed equality.
    #[default]
    Folded,
    /// Byte equality.
    Exact,
    /// Rule disabled.
    Off,
}

impl std::str::FromStr for LabelMatch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "folded" => Ok(LabelMatch::Folded),
            "exact" => Ok(LabelMatch::Exact),
            "off" => Ok(LabelMatch::Off),
            _ => Err(Error::Config(format!("unknown label match mode `{s}`"))),
        }
    }
}

fn label_matches(kb: &KnowledgeBase, literal: &str, entity: &str, mode: LabelMatch) -> bool {
    match mode {
        LabelMatch::Off => false,
        LabelMatch::Exact => kb.labels(entity).iter().any(|l| l == literal),
        LabelMatch::Folded => {
            let lit = fold(literal.trim());
            kb.labels(entity).iter().any(|l| fold(l.trim()) == lit)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub entity: String,
    /// 1-based position in the candidate list.
    pub rank: usize,
    #[serde(rename = "yL")]
    pub y_l: Option<f64>,
    #[serde(rename = "yC")]
    pub y_c: Option<f64>,
    pub y: f64,
    pub kept: bool,
    pub kept_by_label_rule: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Substitute(String),
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionResult {
    pub target: TargetAssertion,
    pub decision: Decision,
    /// Kept candidates in their original order.
    pub survivors: Vec<ScoredCandidate>,
    pub tau: f64,
}

impl CorrectionResult {
    pub fn substitute(&self) -> Option<&str> {
        match &self.decision {
            Decision::Substitute(e) => Some(e),
            Decision::None => None,
        }
    }
}

/// Normalised per-candidate scores of one target, aligned with its
/// candidate list.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TargetScores {
    pub y_l: Option<Vec<f64>>,
    pub y_c: Option<Vec<f64>>,
}

/// Filters one target's candidates at `tau` and picks the first survivor.
pub fn decide(
    kb: &KnowledgeBase,
    candidates: &CandidateList,
    scores: &TargetScores,
    tau: f64,
    label_match: LabelMatch,
) -> Result<CorrectionResult> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    let n = candidates.len();
    for (name, s) in [("likelihood", &scores.y_l), ("consistency", &scores.y_c)] {
        if let Some(v) = s {
            if v.len() != n {
                return Err(Error::Config(format!(
                    "{name} scores cover {} of {n} candidates",
                    v.len()
                )));
            }
        }
    }
    if n > 0 && scores.y_l.is_none() && scores.y_c.is_none() {
        return Err(Error::Config("no model scores to decide with".into()));
    }
    let literal = match &candidates.target.o {
        Term::Literal(l) => Some(l.as_str()),
        Term::Entity(_) => None,
    };
    let mut survivors = Vec::new();
    for (i, c) in candidates.entities.iter().enumerate() {
        let y_l = scores.y_l.as_ref().map(|v| v[i]);
        let y_c = scores.y_c.as_ref().map(|v| v[i]);
        let y = ensemble(y_l, y_c).unwrap_or(0.0);
        let by_label = literal.is_some_and(|l| label_matches(kb, l, &c.entity, label_match));
        let kept = y >= tau || by_label;
        if kept {
            survivors.push(ScoredCandidate {
                entity: c.entity.clone(),
                rank: i + 1,
                y_l,
                y_c,
                y,
                kept,
                kept_by_label_rule: by_label,
            });
        }
    }
    let decision = survivors
        .first()
        .map(|c| Decision::Substitute(c.entity.clone()))
        .unwrap_or(Decision::None);
    Ok(CorrectionResult {
        target: candidates.target.clone(),
        decision,
        survivors,
        tau,
    })
}

/// Normalises raw per-candidate scores of one model across all targets,
/// globally or within each target property.
pub fn normalize_model(
    candidates: &[CandidateList],
    raw: &[Vec<f64>],
    per_property: bool,
) -> Result<Vec<Vec<f64>>> {
    if raw.len() != candidates.len() {
        return Err(Error::Config(format!(
            "scores for {} targets, candidates for {}",
            raw.len(),
            candidates.len()
        )));
    }
    let mut flat: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (t, row) in raw.iter().enumerate() {
        if row.len() != candidates[t].len() {
            return Err(Error::Config(format!(
                "target {} has {} scores for {} candidates",
                candidates[t].target.id(),
                row.len(),
                candidates[t].len()
            )));
        }
        for (i, &v) in row.iter().enumerate() {
            flat.insert((t, i), v);
        }
    }
    let norm = if per_property {
        normalize_by(&flat, |&(t, _)| candidates[t].target.p.clone())?
    } else {
        normalize(&flat)?
    };
    let mut out: Vec<Vec<f64>> = candidates.iter().map(|c| Vec::with_capacity(c.len())).collect();
    for ((t, _), v) in norm {
        out[t].push(v);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecideConfig {
    pub tau: f64,
    pub per_property: bool,
    pub label_match: LabelMatch,
}

impl Default for DecideConfig {
    fn default() -> Self {
        DecideConfig {
            tau: 0.5,
            per_property: false,
            label_match: LabelMatch::Folded,
        }
    }
}

/// Normalised scores of every target, ready for decisions at any threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub targets: Vec<TargetScores>,
}

impl ScoreTable {
    pub fn new(
        candidates: &[CandidateList],
        raw_likelihood: Option<&[Vec<f64>]>,
        raw_consistency: Option<&[Vec<f64>]>,
        per_property: bool,
    ) -> Result<Self> {
        let norm = |raw: Option<&[Vec<f64>]>| -> Result<Option<Vec<Vec<f64>>>> {
            raw.map(|r| normalize_model(candidates, r, per_property)).transpose()
        };
        let l = norm(raw_likelihood)?;
        let c = norm(raw_consistency)?;
        let targets = (0..candidates.len())
            .map(|t| TargetScores {
                y_l: l.as_ref().map(|v| v[t].clone()),
                y_c: c.as_ref().map(|v| v[t].clone()),
            })
            .collect();
        Ok(ScoreTable { targets })
    }

    pub fn decide_all(
        &self,
        kb: &KnowledgeBase,
        candidates: &[CandidateList],
        tau: f64,
        label_match: LabelMatch,
    ) -> Result<Vec<CorrectionResult>> {
        candidates
            .iter()
            .zip(&self.targets)
            .map(|(c, s)| decide(kb, c, s, tau, label_match))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct SurvivorRecord {
    entity: String,
    y: f64,
    #[serde(rename = "yL")]
    y_l: Option<f64>,
    #[serde(rename = "yC")]
    y_c: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct CorrectionRecord {
    s: String,
    p: String,
    o: String,
    decision: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    substitute: Option<String>,
    survivors: Vec<SurvivorRecord>,
    tau: f64,
}

/// One JSON object per target.
pub fn write_corrections<W: Write>(mut w: W, results: &[CorrectionResult]) -> Result<()> {
    for r in results {
        let rec = CorrectionRecord {
            s: r.target.s.clone(),
            p: r.target.p.clone(),
            o: r.target.o.value().to_string(),
            decision: match r.decision {
                Decision::Substitute(_) => "substitute".into(),
                Decision::None => "none".into(),
            },
            substitute: r.substitute().map(str::to_string),
            survivors: r
                .survivors
                .iter()
                .map(|c| SurvivorRecord {
                    entity: c.entity.clone(),
                    y: c.y,
                    y_l: c.y_l,
                    y_c: c.y_c,
                })
                .collect(),
            tau: r.tau,
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w).map_err(|e| Error::io("corrections", e))?;
    }
    Ok(())
}

/// `(s, p, o, substitute)` of one corrections line.
pub type DecisionRecord = (String, String, String, Option<String>);

/// Decisions read back from a corrections file.
pub fn read_decisions<R: BufRead>(r: R) -> Result<Vec<DecisionRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("corrections", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorrectionRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse("corrections", i + 1, e.to_string()))?;
        out.push((rec.s, rec.p, rec.o, rec.substitute));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::KbBuilder;
    use crate::relate::{Candidate, GroundTruth};
    use proptest::prelude::*;

    fn list(target: TargetAssertion, ids: &[&str]) -> CandidateList {
        let n = ids.len();
        CandidateList::new(
            target,
            ids.iter()
                .enumerate()
                .map(|(i, e)| Candidate {
                    entity: e.to_string(),
                    score: (n - i) as f64,
                })
                .collect(),
            30,
        )
    }

    fn kb() -> KnowledgeBase {
        let mut b = KbBuilder::new();
        b.add_label("a", "Alder").add_label("b", "Alder United").add_label("c", "Birch");
        b.build().unwrap()
    }

    fn lit_target(text: &str) -> TargetAssertion {
        TargetAssertion::new("x", "bornIn", Term::literal(text), GroundTruth::Unknown)
    }

    #[test]
    fn normalize_examples() {
        let raw: BTreeMap<u32, f64> = [(0, 2.0), (1, 4.0), (2, 6.0)].into();
        let n = normalize(&raw).unwrap();
        assert_eq!(n.values().copied().collect::<Vec<_>>(), [0.0, 0.5, 1.0]);
        let flat: BTreeMap<u32, f64> = [(0, 3.0), (1, 3.0)].into();
        assert!(normalize(&flat).unwrap().values().all(|&v| v == 0.5));
        let bad: BTreeMap<u32, f64> = [(0, f64::NAN)].into();
        assert!(matches!(normalize(&bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn per_group_normalisation() {
        let raw: BTreeMap<(char, u32), f64> = [(('a', 0), 0.0), (('a', 1), 10.0), (('b', 0), 5.0), (('b', 1), 6.0)].into();
        let n = normalize_by(&raw, |k| k.0).unwrap();
        assert_eq!(n[&('b', 0)], 0.0);
        assert_eq!(n[&('b', 1)], 1.0);
        let g = normalize(&raw).unwrap();
        assert_eq!(g[&('b', 0)], 0.5);
    }

    #[test]
    fn ensemble_examples() {
        assert_eq!(ensemble(Some(0.0), Some(0.0)), Some(0.0));
        assert_eq!(ensemble(Some(1.0), Some(0.0)), Some(0.5));
        assert_eq!(ensemble(None, Some(0.3)), Some(0.3));
        assert_eq!(ensemble(None, None), None);
    }

    #[test]
    fn all_below_tau_gives_none() {
        let c = list(lit_target("Cedar"), &["a", "b", "c"]);
        let s = TargetScores {
            y_l: Some(vec![0.1, 0.2, 0.3]),
            y_c: None,
        };
        let r = decide(&kb(), &c, &s, 0.5, LabelMatch::Folded).unwrap();
        assert_eq!(r.decision, Decision::None);
        assert!(r.survivors.is_empty());
    }

    #[test]
    fn zero_tau_keeps_everything() {
        let c = list(lit_target("Cedar"), &["a", "b", "c"]);
        let s = TargetScores {
            y_l: Some(vec![0.0, 0.0, 0.0]),
            y_c: Some(vec![0.0, 1.0, 0.0]),
        };
        let r = decide(&kb(), &c, &s, 0.0, LabelMatch::Folded).unwrap();
        assert_eq!(r.substitute(), Some("a"));
        assert_eq!(r.survivors.len(), 3);
    }

    #[test]
    fn second_candidate_wins_when_first_is_filtered() {
        let c = list(lit_target("Cedar"), &["a", "b", "c"]);
        let s = TargetScores {
            y_l: Some(vec![0.2, 0.9, 1.0]),
            y_c: Some(vec![0.2, 0.7, 0.9]),
        };
        let r = decide(&kb(), &c, &s, 0.6, LabelMatch::Folded).unwrap();
        assert_eq!(r.substitute(), Some("b"));
        let ranks: Vec<usize> = r.survivors.iter().map(|c| c.rank).collect();
        assert_eq!(ranks, [2, 3]);
        assert!((r.survivors[0].y - 0.8).abs() < 1e-12);
    }

    #[test]
    fn label_rule_keeps_exact_literal_match() {
        let c = list(lit_target("  ALDER united "), &["a", "b", "c"]);
        let s = TargetScores {
            y_l: Some(vec![0.0, 0.0, 0.0]),
            y_c: None,
        };
        let r = decide(&kb(), &c, &s, 0.9, LabelMatch::Folded).unwrap();
        assert_eq!(r.substitute(), Some("b"));
        assert!(r.survivors[0].kept_by_label_rule);
        let r = decide(&kb(), &c, &s, 0.9, LabelMatch::Exact).unwrap();
        assert_eq!(r.decision, Decision::None);
        let entity = TargetAssertion::new("x", "p", Term::entity("Alder"), GroundTruth::Unknown);
        let r = decide(&kb(), &list(entity, &["a"]), &TargetScores { y_l: Some(vec![0.0]), y_c: None }, 0.9, LabelMatch::Folded).unwrap();
        assert_eq!(r.decision, Decision::None);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let c = list(lit_target("Cedar"), &["a", "b"]);
        let short = TargetScores {
            y_l: Some(vec![0.1]),
            y_c: None,
        };
        assert!(decide(&kb(), &c, &short, 0.5, LabelMatch::Folded).is_err());
        assert!(decide(&kb(), &c, &TargetScores::default(), 0.5, LabelMatch::Folded).is_err());
        let ok = TargetScores {
            y_l: Some(vec![0.1, 0.2]),
            y_c: None,
        };
        assert!(decide(&kb(), &c, &ok, 1.5, LabelMatch::Folded).is_err());
        let empty = list(lit_target("Cedar"), &[]);
        let r = decide(&kb(), &empty, &TargetScores::default(), 0.5, LabelMatch::Folded).unwrap();
        assert_eq!(r.decision, Decision::None);
    }

    #[test]
    fn corrections_round_trip() {
        let c = list(lit_target("Cedar"), &["a", "b"]);
        let s = TargetScores {
            y_l: Some(vec![0.7, 0.2]),
            y_c: None,
        };
        let r = decide(&kb(), &c, &s, 0.5, LabelMatch::Folded).unwrap();
        let mut buf = Vec::new();
        write_corrections(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains(r#""decision":"substitute","substitute":"a""#));
        assert!(text.contains(r#""yC":null"#));
        let back = read_decisions(buf.as_slice()).unwrap();
        assert_eq!(back, [("x".into(), "bornIn".into(), "Cedar".into(), Some("a".into()))]);
    }

    fn random_case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        prop::collection::vec(1usize..6, 1..6).prop_flat_map(|sizes| {
            let rows = |sizes: &Vec<usize>| {
                sizes
                    .iter()
                    .map(|&n| prop::collection::vec(-50.0f64..50.0, n))
                    .collect::<Vec<_>>()
            };
            (rows(&sizes), rows(&sizes))
        })
    }

    fn lists(rows: &[Vec<f64>]) -> Vec<CandidateList> {
        rows.iter()
            .enumerate()
            .map(|(t, r)| {
                let ids: Vec<String> = (0..r.len()).map(|i| format!("e{i}")).collect();
                let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
                list(lit_target(&format!("t{t}")), &ids)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn affine_maps_leave_decisions_unchanged(
            (l, c) in random_case(),
            a in 0.1f64..10.0,
            b in -20.0f64..20.0,
            tau in 0.0f64..=1.0,
        ) {
            let cands = lists(&l);
            let kb = kb();
            let base = ScoreTable::new(&cands, Some(&l), Some(&c), false).unwrap();
            let moved: Vec<Vec<f64>> = l.iter().map(|r| r.iter().map(|x| a * x + b).collect()).collect();
            let other = ScoreTable::new(&cands, Some(&moved), Some(&c), false).unwrap();
            // rounding may move a score across a threshold it sits on
            let near = base.targets.iter().any(|t| {
                let (l, c) = (t.y_l.as_ref().unwrap(), t.y_c.as_ref().unwrap());
                l.iter().zip(c).any(|(x, y)| ((x + y) / 2.0 - tau).abs() < 1e-9)
            });
            prop_assume!(!near);
            let d1: Vec<_> = base.decide_all(&kb, &cands, tau, LabelMatch::Folded).unwrap().into_iter().map(|r| r.decision).collect();
            let d2: Vec<_> = other.decide_all(&kb, &cands, tau, LabelMatch::Folded).unwrap().into_iter().map(|r| r.decision).collect();
            prop_assert_eq!(d1, d2);
            for t in &base.targets {
                for v in t.y_l.iter().flatten().chain(t.y_c.iter().flatten()) {
                    prop_assert!((0.0..=1.0).contains(v));
                }
            }
        }

        #[test]
        fn raising_tau_shrinks_survivors((l, c) in random_case(), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let cands = lists(&l);
            let kb = kb();
            let table = ScoreTable::new(&cands, Some(&l), Some(&c), false).unwrap();
            let a = table.decide_all(&kb, &cands, lo, LabelMatch::Folded).unwrap();
            let b = table.decide_all(&kb, &cands, hi, LabelMatch::Folded).unwrap();
            for ((ra, rb), cl) in a.iter().zip(&b).zip(&cands) {
                let sa: Vec<&str> = ra.survivors.iter().map(|c| c.entity.as_str()).collect();
                let sb: Vec<&str> = rb.survivors.iter().map(|c| c.entity.as_str()).collect();
                prop_assert!(sb.iter().all(|e| sa.contains(e)));
                let order: Vec<&str> = cl.ids().filter(|e| sb.contains(e)).collect();
                prop_assert_eq!(&order, &sb);
                prop_assert_eq!(ra.decision == Decision::None, ra.survivors.is_empty());
            }
        }

        #[test]
        fn ensemble_matches_recomputation(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            prop_assert_eq!(ensemble(Some(a), Some(b)), Some((a + b) / 2.0));
        }
    }
}
