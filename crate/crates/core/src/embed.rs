//! Latent-feature link prediction with TransE and DistMult embeddings.
//!
//! TransE scores a triple by the distance `‖e_s + e_p − e_o‖₂` (lower is
//! better); DistMult by the trilinear product `Σ e_p·e_s·e_o` (higher is
//! better). Both are trained with a margin ranking loss against one
//! corrupted triple per positive per epoch.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subgraph::{Edge, SubGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmbeddingKind {
    TransE,
    DistMult,
}

impl std::str::FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(EmbeddingKind::TransE),
            "distmult" => Ok(EmbeddingKind::DistMult),
            _ => Err(Error::Config(format!("unknown embedding kind `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub margin_start: f64,
    pub margin_end: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub negatives_per_positive: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            margin_start: 1.0,
            margin_end: 4.0,
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
            negatives_per_positive: 1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if !(self.margin_start > 0.0 && self.margin_end > 0.0) {
            return Err(Error::Config("margins must be positive".into()));
        }
        if self.batch_size == 0 || self.negatives_per_positive == 0 {
            return Err(Error::Config("batch size and negatives per positive must be positive".into()));
        }
        Ok(())
    }

    /// Margin at training step `step` of `total`, rising linearly.
    pub fn margin_at(&self, step: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.margin_start;
        }
        let f = step as f64 / (total - 1) as f64;
        self.margin_start + (self.margin_end - self.margin_start) * f
    }
}

type Ix = (usize, usize, usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct EmbeddingModel {
    kind: EmbeddingKind,
    dim: usize,
    seed: u64,
    entities: Vec<String>,
    properties: Vec<String>,
    entity_vectors: Vec<Vec<f64>>,
    property_vectors: Vec<Vec<f64>>,
    entity_index: HashMap<String, usize>,
    property_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: EmbeddingKind,
    d: usize,
    entity_count: usize,
    property_count: usize,
    seed: u64,
    entities: Vec<String>,
    properties: Vec<String>,
    entity_vectors: Vec<Vec<f64>>,
    property_vectors: Vec<Vec<f64>>,
}

const FORMAT_VERSION: u32 = 1;

impl From<EmbeddingModel> for ModelFile {
    fn from(m: EmbeddingModel) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            kind: m.kind,
            d: m.dim,
            entity_count: m.entities.len(),
            property_count: m.properties.len(),
            seed: m.seed,
            entities: m.entities,
            properties: m.properties,
            entity_vectors: m.entity_vectors,
            property_vectors: m.property_vectors,
        }
    }
}

impl TryFrom<ModelFile> for EmbeddingModel {
    type Error = String;

    fn try_from(f: ModelFile) -> std::result::Result<Self, String> {
        if f.format_version != FORMAT_VERSION {
            return Err(format!("unsupported model format version {}", f.format_version));
        }
        if f.entities.len() != f.entity_count
            || f.properties.len() != f.property_count
            || f.entity_vectors.len() != f.entity_count
            || f.property_vectors.len() != f.property_count
        {
            return Err("row counts do not match the header".into());
        }
        if f.entity_vectors.iter().chain(&f.property_vectors).any(|v| v.len() != f.d) {
            return Err(format!("a vector does not have dimension {}", f.d));
        }
        Ok(EmbeddingModel::from_parts(
            f.kind,
            f.d,
            f.seed,
            f.entities,
            f.properties,
            f.entity_vectors,
            f.property_vectors,
        ))
    }
}

fn index_of(ids: &[String]) -> HashMap<String, usize> {
    ids.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v {
            *x /= n;
        }
    }
}

/// Sparse gradient keyed by entity and property id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradient {
    pub entities: BTreeMap<String, Vec<f64>>,
    pub properties: BTreeMap<String, Vec<f64>>,
}

#[derive(Default)]
struct IxGradient {
    entities: HashMap<usize, Vec<f64>>,
    properties: HashMap<usize, Vec<f64>>,
}

impl IxGradient {
    fn add(map: &mut HashMap<usize, Vec<f64>>, row: usize, dim: usize, scale: f64, v: impl Iterator<Item = f64>) {
        let g = map.entry(row).or_insert_with(|| vec![0.0; dim]);
        for (gi, vi) in g.iter_mut().zip(v) {
            *gi += scale * vi;
        }
    }
}

impl EmbeddingModel {
    fn from_parts(
        kind: EmbeddingKind,
        dim: usize,
        seed: u64,
        entities: Vec<String>,
        properties: Vec<String>,
        entity_vectors: Vec<Vec<f64>>,
        property_vectors: Vec<Vec<f64>>,
    ) -> Self {
        EmbeddingModel {
            kind,
            dim,
            seed,
            entity_index: index_of(&entities),
            property_index: index_of(&properties),
            entities,
            properties,
            entity_vectors,
            property_vectors,
        }
    }

    /// Uniform initialisation in `±6/√d`.
    pub fn init(kind: EmbeddingKind, entities: Vec<String>, properties: Vec<String>, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 6.0 / (dim as f64).sqrt();
        let mut table = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect())
                .collect()
        };
        let ev = table(entities.len());
        let pv = table(properties.len());
        EmbeddingModel::from_parts(kind, dim, seed, entities, properties, ev, pv)
    }

    /// A model with the given vectors, mainly for tests and tools.
    pub fn from_vectors(
        kind: EmbeddingKind,
        entities: impl IntoIterator<Item = (String, Vec<f64>)>,
        properties: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self> {
        let (eids, ev): (Vec<String>, Vec<Vec<f64>>) = entities.into_iter().unzip();
        let (pids, pv): (Vec<String>, Vec<Vec<f64>>) = properties.into_iter().unzip();
        let dim = ev.first().or(pv.first()).map(Vec::len).unwrap_or(0);
        if dim == 0 || ev.iter().chain(&pv).any(|v| v.len() != dim) {
            return Err(Error::Config("embedding vectors must share a positive dimension".into()));
        }
        Ok(EmbeddingModel::from_parts(kind, dim, 0, eids, pids, ev, pv))
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn properties(&self) -> &[String] {
        &self.properties
    }

    pub fn entity_vector(&self, e: &str) -> Option<&[f64]> {
        self.entity_index.get(e).map(|&i| self.entity_vectors[i].as_slice())
    }

    pub fn property_vector(&self, p: &str) -> Option<&[f64]> {
        self.property_index.get(p).map(|&i| self.property_vectors[i].as_slice())
    }

    pub fn entity_vector_mut(&mut self, e: &str) -> Option<&mut Vec<f64>> {
        let i = *self.entity_index.get(e)?;
        Some(&mut self.entity_vectors[i])
    }

    pub fn property_vector_mut(&mut self, p: &str) -> Option<&mut Vec<f64>> {
        let i = *self.property_index.get(p)?;
        Some(&mut self.property_vectors[i])
    }

    fn ix(&self, s: &str, p: &str, o: &str) -> Result<Ix> {
        let e = |id: &str| {
            self.entity_index
                .get(id)
                .copied()
                .ok_or_else(|| Error::MissingVector(id.to_string()))
        };
        let p = self
            .property_index
            .get(p)
            .copied()
            .ok_or_else(|| Error::MissingVector(p.to_string()))?;
        Ok((e(s)?, p, e(o)?))
    }

    fn transe_ix(&self, (s, p, o): Ix) -> f64 {
        let (es, ep, eo) = (&self.entity_vectors[s], &self.property_vectors[p], &self.entity_vectors[o]);
        (0..self.dim)
            .map(|i| {
                let d = es[i] + ep[i] - eo[i];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    fn distmult_ix(&self, (s, p, o): Ix) -> f64 {
        let (es, ep, eo) = (&self.entity_vectors[s], &self.property_vectors[p], &self.entity_vectors[o]);
        (0..self.dim).map(|i| ep[i] * es[i] * eo[i]).sum()
    }

    /// `‖e_s + e_p − e_o‖₂`, whatever the model kind.
    pub fn transe_score(&self, s: &str, p: &str, o: &str) -> Result<f64> {
        Ok(self.transe_ix(self.ix(s, p, o)?))
    }

    /// `Σ e_p·e_s·e_o`, whatever the model kind.
    pub fn distmult_score(&self, s: &str, p: &str, o: &str) -> Result<f64> {
        Ok(self.distmult_ix(self.ix(s, p, o)?))
    }

    fn likelihood_ix(&self, t: Ix) -> f64 {
        match self.kind {
            EmbeddingKind::TransE => -self.transe_ix(t),
            EmbeddingKind::DistMult => self.distmult_ix(t),
        }
    }

    /// Plausibility of `⟨s, p, e⟩`, higher is better for both kinds.
    pub fn likelihood(&self, s: &str, p: &str, e: &str) -> Result<f64> {
        Ok(self.likelihood_ix(self.ix(s, p, e)?))
    }

    fn pair_loss_ix(&self, pos: Ix, neg: Ix, gamma: f64) -> f64 {
        (gamma - self.likelihood_ix(pos) + self.likelihood_ix(neg)).max(0.0)
    }

    /// Adds `scale · ∂likelihood/∂θ` for triple `t`.
    fn add_likelihood_grad(&self, t: Ix, scale: f64, g: &mut IxGradient) {
        let (s, p, o) = t;
        let (es, ep, eo) = (&self.entity_vectors[s], &self.property_vectors[p], &self.entity_vectors[o]);
        let d = self.dim;
        match self.kind {
            EmbeddingKind::TransE => {
                let dist = self.transe_ix(t);
                if dist == 0.0 {
                    return;
                }
                // likelihood = −dist; ∂dist/∂e_s = (e_s + e_p − e_o)/dist
                let r: Vec<f64> = (0..d).map(|i| (es[i] + ep[i] - eo[i]) / dist).collect();
                IxGradient::add(&mut g.entities, s, d, -scale, r.iter().copied());
                IxGradient::add(&mut g.properties, p, d, -scale, r.iter().copied());
                IxGradient::add(&mut g.entities, o, d, scale, r.iter().copied());
            }
            EmbeddingKind::DistMult => {
                IxGradient::add(&mut g.entities, s, d, scale, (0..d).map(|i| ep[i] * eo[i]));
                IxGradient::add(&mut g.properties, p, d, scale, (0..d).map(|i| es[i] * eo[i]));
                IxGradient::add(&mut g.entities, o, d, scale, (0..d).map(|i| ep[i] * es[i]));
            }
        }
    }

    /// Mean margin loss over the pairs and its gradient.
    fn loss_and_grad_ix(&self, pairs: &[(Ix, Ix)], gamma: f64) -> (f64, IxGradient) {
        let mut g = IxGradient::default();
        let mut total = 0.0;
        let n = pairs.len().max(1) as f64;
        for &(pos, neg) in pairs {
            let l = self.pair_loss_ix(pos, neg, gamma);
            total += l;
            if l > 0.0 {
                self.add_likelihood_grad(pos, -1.0 / n, &mut g);
                self.add_likelihood_grad(neg, 1.0 / n, &mut g);
            }
        }
        (total / n, g)
    }

    fn pairs_ix(&self, pairs: &[(Edge, Edge)]) -> Result<Vec<(Ix, Ix)>> {
        pairs
            .iter()
            .map(|(a, b)| Ok((self.ix(&a.s, &a.p, &a.o)?, self.ix(&b.s, &b.p, &b.o)?)))
            .collect()
    }

    /// Mean of `[γ − likelihood(t) + likelihood(t̃)]₊` over `(t, t̃)` pairs.
    /// For TransE this is `[γ + g(t) − g(t̃)]₊`, for DistMult the same loss
    /// with the score sign flipped.
    pub fn margin_loss(&self, pairs: &[(Edge, Edge)], gamma: f64) -> Result<f64> {
        let ix = self.pairs_ix(pairs)?;
        Ok(self.loss_and_grad_ix(&ix, gamma).0)
    }

    /// Gradient of [`EmbeddingModel::margin_loss`].
    pub fn margin_gradient(&self, pairs: &[(Edge, Edge)], gamma: f64) -> Result<Gradient> {
        let ix = self.pairs_ix(pairs)?;
        let (_, g) = self.loss_and_grad_ix(&ix, gamma);
        Ok(Gradient {
            entities: g.entities.into_iter().map(|(i, v)| (self.entities[i].clone(), v)).collect(),
            properties: g
                .properties
                .into_iter()
                .map(|(i, v)| (self.properties[i].clone(), v))
                .collect(),
        })
    }

    fn apply(&mut self, g: &IxGradient, lr: f64) {
        for (&i, v) in &g.entities {
            for (x, gi) in self.entity_vectors[i].iter_mut().zip(v) {
                *x -= lr * gi;
            }
        }
        for (&i, v) in &g.properties {
            for (x, gi) in self.property_vectors[i].iter_mut().zip(v) {
                *x -= lr * gi;
            }
        }
    }

    fn normalize_entities(&mut self) {
        for v in &mut self.entity_vectors {
            normalize(v);
        }
    }

    fn check_finite(&self, epoch: usize) -> Result<()> {
        let bad = self
            .entity_vectors
            .iter()
            .chain(&self.property_vectors)
            .any(|v| v.iter().any(|x| !x.is_finite()));
        if bad {
            return Err(Error::NonFinite(format!("embedding parameters after epoch {epoch}")));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// A trained model with the mean margin loss of every epoch.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: EmbeddingModel,
    pub epoch_losses: Vec<f64>,
}

fn corrupt_ix<R: Rng>(rng: &mut R, t: Ix, n: usize, known: &HashSet<Ix>) -> Ix {
    let mut cand = t;
    for _ in 0..crate::subgraph::NEGATIVE_RETRY_BUDGET {
        let e = rng.gen_range(0..n);
        cand = if rng.gen_bool(0.5) { (e, t.1, t.2) } else { (t.0, t.1, e) };
        if cand != t && !known.contains(&cand) {
            break;
        }
    }
    cand
}

/// Trains on an explicit triple list. Every entity and property listed gets
/// a vector, whether or not it occurs in a triple.
pub fn train_triples(
    kind: EmbeddingKind,
    entities: Vec<String>,
    properties: Vec<String>,
    triples: &[Edge],
    cfg: &TrainConfig,
) -> Result<Trained> {
    cfg.validate()?;
    if triples.is_empty() {
        return Err(Error::Empty("embedding training triples"));
    }
    if entities.len() < 2 {
        return Err(Error::Config("embedding training needs at least two entities".into()));
    }
    let mut model = EmbeddingModel::init(kind, entities, properties, cfg.dim, cfg.seed);
    let ix: Vec<Ix> = triples
        .iter()
        .map(|t| model.ix(&t.s, &t.p, &t.o))
        .collect::<Result<_>>()?;
    let known: HashSet<Ix> = ix.iter().copied().collect();
    let n = model.entities.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..ix.len()).collect();
    let batches = ix.len().div_ceil(cfg.batch_size);
    let total = cfg.epochs * batches;
    let mut step = 0;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if kind == EmbeddingKind::TransE {
            model.normalize_entities();
        }
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut pairs = Vec::with_capacity(chunk.len() * cfg.negatives_per_positive);
            for &i in chunk {
                for _ in 0..cfg.negatives_per_positive {
                    pairs.push((ix[i], corrupt_ix(&mut rng, ix[i], n, &known)));
                }
            }
            let gamma = cfg.margin_at(step, total);
            let (loss, g) = model.loss_and_grad_ix(&pairs, gamma);
            sum += loss * pairs.len() as f64;
            count += pairs.len();
            model.apply(&g, cfg.learning_rate);
            step += 1;
        }
        model.check_finite(epoch)?;
        epoch_losses.push(sum / count as f64);
    }
    if kind == EmbeddingKind::TransE {
        model.normalize_entities();
    }
    Ok(Trained { model, epoch_losses })
}

/// Trains on the sub-graph's triples; every sub-graph entity and property
/// (target properties included) gets a vector.
pub fn train(sub: &SubGraph, kind: EmbeddingKind, cfg: &TrainConfig) -> Result<Trained> {
    let mut entities = sub.entities.clone();
    let mut properties = sub.properties.clone();
    properties.extend(sub.target_properties.iter().cloned());
    for t in &sub.triples {
        entities.insert(t.s.clone());
        entities.insert(t.o.clone());
        properties.insert(t.p.clone());
    }
    let triples: Vec<Edge> = sub.triples.iter().cloned().collect();
    train_triples(
        kind,
        entities.into_iter().collect(),
        properties.into_iter().collect(),
        &triples,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn model(kind: EmbeddingKind, ents: &[(&str, &[f64])], props: &[(&str, &[f64])]) -> EmbeddingModel {
        EmbeddingModel::from_vectors(
            kind,
            ents.iter().map(|(e, x)| (e.to_string(), v(x))),
            props.iter().map(|(p, x)| (p.to_string(), v(x))),
        )
        .unwrap()
    }

    #[test]
    fn distmult_hand_example() {
        let m = model(EmbeddingKind::DistMult, &[("s", &[1.0, 2.0]), ("o", &[5.0, 6.0])], &[("p", &[3.0, 4.0])]);
        assert_eq!(m.distmult_score("s", "p", "o").unwrap(), 63.0);
        assert_eq!(m.distmult_score("o", "p", "s").unwrap(), 63.0);
        assert_eq!(m.likelihood("s", "p", "o").unwrap(), 63.0);
    }

    #[test]
    fn transe_identities() {
        let m = model(
            EmbeddingKind::TransE,
            &[("s", &[0.3, 0.4]), ("o", &[1.3, 0.9]), ("z", &[0.0, 0.0]), ("u", &[0.6, 0.8])],
            &[("p", &[1.0, 0.5]), ("zero", &[0.0, 0.0])],
        );
        assert!(m.transe_score("s", "p", "o").unwrap() < 1e-12);
        assert!((m.transe_score("z", "zero", "u").unwrap() - 1.0).abs() < 1e-12);
        assert!(m.likelihood("s", "p", "o").unwrap() >= m.likelihood("s", "p", "u").unwrap());
    }

    #[test]
    fn missing_vectors_name_the_term() {
        let m = model(EmbeddingKind::TransE, &[("a", &[1.0])], &[("p", &[1.0])]);
        match m.transe_score("a", "p", "ghost") {
            Err(Error::MissingVector(id)) => assert_eq!(id, "ghost"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(m.likelihood("a", "q", "a"), Err(Error::MissingVector(_))));
    }

    #[test]
    fn config_validation() {
        let tri = [Edge::new("a", "p", "b")];
        let ents = vec!["a".to_string(), "b".to_string()];
        let props = vec!["p".to_string()];
        let bad = TrainConfig {
            dim: 0,
            ..TrainConfig::default()
        };
        assert!(train_triples(EmbeddingKind::TransE, ents.clone(), props.clone(), &tri, &bad).is_err());
        let bad = TrainConfig {
            margin_start: 0.0,
            ..TrainConfig::default()
        };
        assert!(train_triples(EmbeddingKind::TransE, ents.clone(), props.clone(), &tri, &bad).is_err());
        let err = train_triples(EmbeddingKind::TransE, ents, props, &[], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Empty(_)));
    }

    #[test]
    fn margin_schedule_is_linear() {
        let c = TrainConfig::default();
        assert_eq!(c.margin_at(0, 11), 1.0);
        assert!((c.margin_at(5, 11) - 2.5).abs() < 1e-12);
        assert_eq!(c.margin_at(10, 11), 4.0);
        assert_eq!(c.margin_at(0, 1), 1.0);
    }

    fn toy_cfg() -> TrainConfig {
        TrainConfig {
            dim: 10,
            epochs: 50,
            batch_size: 2,
            learning_rate: 0.05,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn abc() -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    #[test]
    fn single_positive_is_separated() {
        let tri = [Edge::new("a", "p", "b")];
        let t = train_triples(EmbeddingKind::TransE, abc(), vec!["p".into()], &tri, &toy_cfg()).unwrap();
        let m = &t.model;
        assert!(m.transe_score("a", "p", "b").unwrap() < m.transe_score("a", "p", "a").unwrap());
        for e in m.entities() {
            let n: f64 = m.entity_vector(e).unwrap().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn toy_loss_decreases_over_first_epochs() {
        let tri = [Edge::new("a", "p", "b"), Edge::new("b", "p", "c")];
        // a fixed margin and several negatives per positive keep the epoch
        // means comparable
        let cfg = TrainConfig {
            margin_end: 1.0,
            negatives_per_positive: 32,
            learning_rate: 0.1,
            ..toy_cfg()
        };
        for kind in [EmbeddingKind::TransE, EmbeddingKind::DistMult] {
            let t = train_triples(kind, abc(), vec!["p".into()], &tri, &cfg).unwrap();
            let l = &t.epoch_losses;
            for w in l[..5].windows(2) {
                assert!(w[1] < w[0], "{kind:?}: {l:?}");
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let tri = [Edge::new("a", "p", "b"), Edge::new("b", "q", "c")];
        let props = vec!["p".to_string(), "q".to_string()];
        let a = train_triples(EmbeddingKind::DistMult, abc(), props.clone(), &tri, &toy_cfg()).unwrap();
        let b = train_triples(EmbeddingKind::DistMult, abc(), props, &tri, &toy_cfg()).unwrap();
        assert_eq!(a.model, b.model);
        let text = serde_json::to_string(&a.model).unwrap();
        let back: EmbeddingModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, a.model);
        let header: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(header["d"], 10);
        assert_eq!(header["entity_count"], 3);
        assert_eq!(header["kind"], "DistMult");
    }

    #[test]
    fn corrupted_header_is_rejected() {
        let m = model(EmbeddingKind::TransE, &[("a", &[1.0])], &[("p", &[1.0])]);
        let mut json: serde_json::Value = serde_json::to_value(&m).unwrap();
        json["entity_count"] = 2.into();
        assert!(serde_json::from_value::<EmbeddingModel>(json).is_err());
    }

    fn random_model(kind: EmbeddingKind, seed: u64) -> EmbeddingModel {
        let ents = (0..6).map(|i| format!("e{i}")).collect();
        let props = (0..2).map(|i| format!("p{i}")).collect();
        EmbeddingModel::init(kind, ents, props, 4, seed)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn scores_match_recomputation(seed in 0u64..10_000, s in 0usize..6, o in 0usize..6, p in 0usize..2) {
            let m = random_model(EmbeddingKind::TransE, seed);
            let (s, p, o) = (format!("e{s}"), format!("p{p}"), format!("e{o}"));
            let (es, ep, eo) = (m.entity_vector(&s).unwrap(), m.property_vector(&p).unwrap(), m.entity_vector(&o).unwrap());
            let mut sq = 0.0;
            let mut dm = 0.0;
            for i in 0..4 {
                sq += (es[i] + ep[i] - eo[i]).powi(2);
                dm += es[i] * ep[i] * eo[i];
            }
            prop_assert!((m.transe_score(&s, &p, &o).unwrap() - sq.sqrt()).abs() < 1e-12);
            prop_assert!((m.distmult_score(&s, &p, &o).unwrap() - dm).abs() < 1e-12);
            prop_assert_eq!(m.likelihood(&s, &p, &o).unwrap(), -m.transe_score(&s, &p, &o).unwrap());
        }

        #[test]
        fn likelihood_ranking_matches_sort(seed in 0u64..10_000, dm in any::<bool>()) {
            let kind = if dm { EmbeddingKind::DistMult } else { EmbeddingKind::TransE };
            let ents: Vec<String> = (0..10).map(|i| format!("e{i}")).collect();
            let m = EmbeddingModel::init(kind, ents.clone(), vec!["p".into()], 5, seed);
            let mut ranked = ents.clone();
            ranked.sort_by(|a, b| m.likelihood("e0", "p", b).unwrap().total_cmp(&m.likelihood("e0", "p", a).unwrap()));
            let mut raw: Vec<(f64, &String)> = ents
                .iter()
                .map(|e| {
                    let x = if dm { m.distmult_score("e0", "p", e).unwrap() } else { m.transe_score("e0", "p", e).unwrap() };
                    (x, e)
                })
                .collect();
            if dm {
                raw.sort_by(|a, b| b.0.total_cmp(&a.0));
            } else {
                raw.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
            let oracle: Vec<String> = raw.into_iter().map(|(_, e)| e.clone()).collect();
            prop_assert_eq!(ranked, oracle);
        }

        #[test]
        fn gradients_match_finite_differences(
            seed in 0u64..10_000,
            dm in any::<bool>(),
            picks in prop::collection::vec((0usize..6, 0usize..2, 0usize..6, 0usize..6, any::<bool>()), 1..5),
        ) {
            let kind = if dm { EmbeddingKind::DistMult } else { EmbeddingKind::TransE };
            let m = random_model(kind, seed);
            let pairs: Vec<(Edge, Edge)> = picks
                .iter()
                .filter(|(s, _, o, c, _)| s != o && c != s && c != o)
                .map(|&(s, p, o, c, subj)| {
                    let pos = Edge::new(format!("e{s}"), format!("p{p}"), format!("e{o}"));
                    let neg = if subj {
                        Edge::new(format!("e{c}"), format!("p{p}"), format!("e{o}"))
                    } else {
                        Edge::new(format!("e{s}"), format!("p{p}"), format!("e{c}"))
                    };
                    (pos, neg)
                })
                .collect();
            prop_assume!(!pairs.is_empty());
            // a large margin keeps every hinge active, away from the kink
            let gamma = 50.0;
            let g = m.margin_gradient(&pairs, gamma).unwrap();
            let h = 1e-6;
            for (id, grad) in &g.entities {
                for (i, &gi) in grad.iter().enumerate() {
                    let mut plus = m.clone();
                    plus.entity_vector_mut(id).unwrap()[i] += h;
                    let mut minus = m.clone();
                    minus.entity_vector_mut(id).unwrap()[i] -= h;
                    let num = (plus.margin_loss(&pairs, gamma).unwrap() - minus.margin_loss(&pairs, gamma).unwrap()) / (2.0 * h);
                    prop_assert!(rel_err(num, gi) < 1e-4 || (num - gi).abs() < 1e-8, "{} {} {}", id, num, gi);
                }
            }
            for (id, grad) in &g.properties {
                for (i, &gi) in grad.iter().enumerate() {
                    let mut plus = m.clone();
                    plus.property_vector_mut(id).unwrap()[i] += h;
                    let mut minus = m.clone();
                    minus.property_vector_mut(id).unwrap()[i] -= h;
                    let num = (plus.margin_loss(&pairs, gamma).unwrap() - minus.margin_loss(&pairs, gamma).unwrap()) / (2.0 * h);
                    prop_assert!(rel_err(num, gi) < 1e-4 || (num - gi).abs() < 1e-8, "{} {} {}", id, num, gi);
                }
            }
        }
    }
}
