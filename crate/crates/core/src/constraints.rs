//! Soft property constraints mined from the ABox, and consistency checking
//! of candidate assertions against them.
//!
//! A cardinality constraint is the distribution of the number of entity
//! objects per subject. A range constraint holds, for the most specific and
//! for the more general classes of a property's objects, the fraction of
//! objects carrying each class.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CardinalityConstraint {
    pub dist: BTreeMap<usize, f64>,
    #[serde(rename = "onMax")]
    pub on_max: usize,
}

impl CardinalityConstraint {
    /// Probability that a subject has more than `n` objects.
    pub fn tail(&self, n: usize) -> f64 {
        self.dist.range(n + 1..=self.on_max.max(n + 1)).map(|(_, p)| p).sum()
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.dist.get(&k).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RangeConstraint {
    #[serde(default)]
    pub specific: BTreeMap<String, f64>,
    #[serde(default)]
    pub general: BTreeMap<String, f64>,
}

/// Constraints of one property. Either part may be absent in an override
/// file; mined sets always carry both.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyConstraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<CardinalityConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeConstraint>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    Multiply,
    #[default]
    Average,
}

impl std::str::FromStr for CombineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiply" => Ok(CombineMode::Multiply),
            "average" => Ok(CombineMode::Average),
            _ => Err(Error::Config(format!("unknown combine mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyParams {
    pub sigma: f64,
    pub w_specific: f64,
    pub w_general: f64,
    pub combine: CombineMode,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        ConsistencyParams {
            sigma: 1.0,
            w_specific: 0.8,
            w_general: 0.2,
            combine: CombineMode::Average,
        }
    }
}

impl ConsistencyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::Config(format!("sigma must lie in (0, 1], got {}", self.sigma)));
        }
        if self.w_specific < 0.0 || self.w_general < 0.0 || (self.w_specific + self.w_general - 1.0).abs() > 1e-9 {
            return Err(Error::Config("range weights must be non-negative and sum to 1".into()));
        }
        Ok(())
    }
}

/// Entity-object count distribution of `p` over its subjects.
pub fn mine_cardinality(kb: &KnowledgeBase, p: &str) -> CardinalityConstraint {
    let mut per_subject: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for t in kb.assertions_of_property(p) {
        if let Some(o) = t.o.as_entity() {
            per_subject.entry(&t.s).or_default().insert(o);
        }
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for objs in per_subject.values() {
        *counts.entry(objs.len()).or_insert(0) += 1;
    }
    let subjects = per_subject.len() as f64;
    CardinalityConstraint {
        on_max: counts.keys().next_back().copied().unwrap_or(0),
        dist: counts.into_iter().map(|(k, c)| (k, c as f64 / subjects)).collect(),
    }
}

/// Specific and general class degrees over the entity objects of `p`.
pub fn mine_range(kb: &KnowledgeBase, p: &str) -> RangeConstraint {
    let objects: BTreeSet<&str> = kb
        .assertions_of_property(p)
        .filter_map(|t| t.o.as_entity())
        .collect();
    let mut specific: BTreeMap<String, usize> = BTreeMap::new();
    let mut general: BTreeMap<String, usize> = BTreeMap::new();
    for oe in &objects {
        for c in kb.specific_classes(oe) {
            *specific.entry(c.to_string()).or_insert(0) += 1;
        }
        for c in kb.general_classes(oe) {
            *general.entry(c.to_string()).or_insert(0) += 1;
        }
    }
    let n = objects.len() as f64;
    let ratio = |m: BTreeMap<String, usize>| m.into_iter().map(|(c, k)| (c, k as f64 / n)).collect();
    RangeConstraint {
        specific: ratio(specific),
        general: ratio(general),
    }
}

/// Mined constraints per property.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConstraintSet {
    pub properties: BTreeMap<String, PropertyConstraints>,
}

impl ConstraintSet {
    /// Mines every property of the knowledge base.
    pub fn mine(kb: &KnowledgeBase) -> Self {
        Self::mine_properties(kb, kb.properties())
    }

    pub fn mine_properties<'a>(kb: &KnowledgeBase, props: impl IntoIterator<Item = &'a str>) -> Self {
        let properties = props
            .into_iter()
            .map(|p| {
                let pc = PropertyConstraints {
                    cardinality: Some(mine_cardinality(kb, p)),
                    range: Some(mine_range(kb, p)),
                };
                (p.to_string(), pc)
            })
            .collect();
        ConstraintSet { properties }
    }

    /// Replaces mined parts with those present in `overrides`.
    pub fn merge(&mut self, overrides: ConstraintSet) {
        for (p, o) in overrides.properties {
            let entry = self.properties.entry(p).or_default();
            if o.cardinality.is_some() {
                entry.cardinality = o.cardinality;
            }
            if o.range.is_some() {
                entry.range = o.range;
            }
        }
    }

    pub fn get(&self, p: &str) -> Option<&PropertyConstraints> {
        self.properties.get(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let set: ConstraintSet = serde_json::from_reader(std::io::BufReader::new(f))?;
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        let bad = |x: f64| !(0.0..=1.0).contains(&x);
        for (p, pc) in &self.properties {
            let card = pc.cardinality.iter().flat_map(|c| c.dist.values());
            let range = pc.range.iter().flat_map(|r| r.specific.values().chain(r.general.values()));
            if card.chain(range).any(|&x| bad(x)) {
                return Err(Error::Config(format!("constraint of `{p}` has a probability outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Consistency {
    pub y_car: f64,
    pub y_ran_c: f64,
    pub y_ran_g: f64,
    pub y_ran: f64,
}

impl Consistency {
    pub fn combined(&self, mode: CombineMode) -> f64 {
        combine(self.y_car, self.y_ran, mode)
    }
}

/// Cardinality score for a subject that would have `n` objects.
pub fn cardinality_score(card: &CardinalityConstraint, n: usize, sigma: f64) -> f64 {
    if card.on_max == 0 {
        return 0.0;
    }
    let r = (n as f64 - card.on_max as f64) / card.on_max as f64;
    if r >= sigma {
        return 0.0;
    }
    if n == 1 {
        return card.prob(1);
    }
    let tail = card.tail(1);
    if r <= 0.0 {
        tail
    } else {
        tail * (1.0 - r)
    }
}

fn noisy_or<'a>(degrees: &BTreeMap<String, f64>, classes: impl Iterator<Item = &'a str>) -> f64 {
    1.0 - classes
        .filter_map(|c| degrees.get(c))
        .map(|d| 1.0 - d)
        .product::<f64>()
}

/// Range scores of an entity with classes `classes`.
pub fn range_score<'a>(
    range: &RangeConstraint,
    classes: impl IntoIterator<Item = &'a str> + Clone,
    params: &ConsistencyParams,
) -> (f64, f64, f64) {
    let c = noisy_or(&range.specific, classes.clone().into_iter());
    let g = noisy_or(&range.general, classes.into_iter());
    (c, g, params.w_specific * c + params.w_general * g)
}

/// Scores `⟨s, p, e⟩` against the constraints of `p`.
///
/// `n` counts the distinct entity objects of `s` under `p` with `e` added.
/// When the candidate replaces an existing object `replaced`, that object is
/// left out of the count.
pub fn check_consistency(
    kb: &KnowledgeBase,
    s: &str,
    p: &str,
    e: &str,
    replaced: Option<&str>,
    constraints: Option<&PropertyConstraints>,
    params: &ConsistencyParams,
) -> Result<Consistency> {
    if !kb.has_entity(e) {
        return Err(Error::UnknownEntity(e.to_string()));
    }
    let mut objects = kb.entity_objects(s, p);
    if let Some(r) = replaced {
        objects.remove(r);
    }
    objects.insert(e);
    let n = objects.len();

    let empty_card = CardinalityConstraint::default();
    let empty_range = RangeConstraint::default();
    let card = constraints.and_then(|c| c.cardinality.as_ref()).unwrap_or(&empty_card);
    let range = constraints.and_then(|c| c.range.as_ref()).unwrap_or(&empty_range);

    let mut y_car = cardinality_score(card, n, params.sigma);
    if y_car < 0.0 {
        log::warn!("cardinality score of <{s}, {p}, {e}> fell below 0 (n = {n}, onMax = {}); clamping", card.on_max);
        y_car = 0.0;
    }
    let classes = kb.classes(e);
    let (y_ran_c, y_ran_g, y_ran) = range_score(range, classes.iter().copied(), params);
    Ok(Consistency {
        y_car,
        y_ran_c,
        y_ran_g,
        y_ran,
    })
}

pub fn combine(y_car: f64, y_ran: f64, mode: CombineMode) -> f64 {
    match mode {
        CombineMode::Multiply => y_car * y_ran,
        CombineMode::Average => (y_car + y_ran) / 2.0,
    }
}
