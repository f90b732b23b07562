//! Observed-feature link prediction.
//!
//! An assertion `⟨s, p, o⟩` is described by the relation paths of depth one
//! and two connecting `s` and `o` in the sub-graph, in both directions, and by
//! two node bits: whether `s` is a subject of `p` and whether `o` is an
//! object of `p`. Paths are multi-hot encoded over a vocabulary collected
//! from the training samples and fed to a small feed-forward classifier.

mod mlp;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subgraph::{Edge, SampleSet, SubGraph};

pub use mlp::{train_mlp, Mlp, MlpConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// From the subject to the object.
    So,
    /// From the object back to the subject.
    Os,
}

/// A relation path of depth one or two between subject and object.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathKey {
    pub direction: Direction,
    pub properties: Vec<String>,
}

impl PathKey {
    pub fn new<S: Into<String>>(direction: Direction, properties: impl IntoIterator<Item = S>) -> Self {
        PathKey {
            direction,
            properties: properties.into_iter().map(Into::into).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.properties.len()
    }
}

impl std::fmt::Display for PathKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let dir = match self.direction {
            Direction::So => "so",
            Direction::Os => "os",
        };
        write!(f, "{dir}{}:{}", self.depth(), self.properties.join("/"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Collapse `so` and `os` paths with the same property sequence into one
    /// slot.
    #[serde(default)]
    pub merge_directions: bool,
    /// Leave the encoded assertion's own edge out of its paths and node
    /// bits, so training positives do not carry their label as a feature.
    #[serde(default)]
    pub mask_own_edge: bool,
}


/// Adjacency view of a sub-graph for path and node queries.
#[derive(Debug, Clone, Default)]
pub struct GraphIndex {
    out: HashMap<String, Vec<(String, String)>>,
    subject_of: HashMap<(String, String), usize>,
    object_of: HashMap<(String, String), usize>,
    edges: HashSet<(String, String, String)>,
}

impl GraphIndex {
    pub fn new<'a>(triples: impl IntoIterator<Item = &'a Edge>) -> Self {
        let mut idx = GraphIndex::default();
        for t in triples {
            if !idx.edges.insert((t.s.clone(), t.p.clone(), t.o.clone())) {
                continue;
            }
            idx.out
                .entry(t.s.clone())
                .or_default()
                .push((t.p.clone(), t.o.clone()));
            *idx.subject_of.entry((t.s.clone(), t.p.clone())).or_default() += 1;
            *idx.object_of.entry((t.p.clone(), t.o.clone())).or_default() += 1;
        }
        for edges in idx.out.values_mut() {
            edges.sort();
        }
        idx
    }

    pub fn from_subgraph(sub: &SubGraph) -> Self {
        GraphIndex::new(&sub.triples)
    }

    fn out(&self, e: &str) -> &[(String, String)] {
        self.out.get(e).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `[v_s, v_o]`: `s` has some `p`-object, `o` has some `p`-subject.
    pub fn node_feature(&self, s: &str, p: &str, o: &str) -> [bool; 2] {
        self.node_feature_masked(s, p, o, false)
    }

    /// As [`node_feature`](Self::node_feature), optionally ignoring the edge
    /// `(s, p, o)` itself.
    pub fn node_feature_masked(&self, s: &str, p: &str, o: &str, mask: bool) -> [bool; 2] {
        let own = usize::from(mask && self.has_edge(s, p, o));
        let count = |m: &HashMap<(String, String), usize>, k: (&str, &str)| {
            m.get(&(k.0.to_string(), k.1.to_string())).copied().unwrap_or(0)
        };
        [count(&self.subject_of, (s, p)) > own, count(&self.object_of, (p, o)) > own]
    }

    pub fn has_edge(&self, s: &str, p: &str, o: &str) -> bool {
        self.edges.contains(&(s.to_string(), p.to_string(), o.to_string()))
    }

    fn paths_from(&self, from: &str, to: &str, dir: Direction, skip: Option<(&str, &str, &str)>, out: &mut BTreeSet<PathKey>) {
        let skipped = |s: &str, p: &str, o: &str| skip == Some((s, p, o));
        for (p1, mid) in self.out(from) {
            if skipped(from, p1, mid) {
                continue;
            }
            if mid == to {
                out.insert(PathKey::new(dir, [p1.as_str()]));
            }
            for (p2, end) in self.out(mid) {
                if end == to && !skipped(mid, p2, end) {
                    out.insert(PathKey::new(dir, [p1.as_str(), p2.as_str()]));
                }
            }
        }
    }

    /// Paths of depth one and two from `s` to `o` and from `o` to `s`.
    pub fn path_features(&self, s: &str, o: &str, cfg: FeatureConfig) -> BTreeSet<PathKey> {
        self.paths(s, o, cfg, None)
    }

    /// Paths between `s` and `o` that do not use the edge `(s, p, o)`.
    pub fn path_features_without(&self, s: &str, p: &str, o: &str, cfg: FeatureConfig) -> BTreeSet<PathKey> {
        self.paths(s, o, cfg, Some((s, p, o)))
    }

    fn paths(&self, s: &str, o: &str, cfg: FeatureConfig, skip: Option<(&str, &str, &str)>) -> BTreeSet<PathKey> {
        let mut out = BTreeSet::new();
        self.paths_from(s, o, Direction::So, skip, &mut out);
        let back = if cfg.merge_directions {
            Direction::So
        } else {
            Direction::Os
        };
        self.paths_from(o, s, back, skip, &mut out);
        out
    }

    /// The paths used to encode `(s, p, o)` under `cfg`.
    pub fn assertion_paths(&self, s: &str, p: &str, o: &str, cfg: FeatureConfig) -> BTreeSet<PathKey> {
        if cfg.mask_own_edge {
            self.path_features_without(s, p, o, cfg)
        } else {
            self.path_features(s, o, cfg)
        }
    }
}

/// Ordered, duplicate-free path slots.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<PathKey>", into = "Vec<PathKey>")]
pub struct PathVocabulary {
    keys: Vec<PathKey>,
    slots: HashMap<PathKey, usize>,
}

impl From<Vec<PathKey>> for PathVocabulary {
    fn from(keys: Vec<PathKey>) -> Self {
        let mut v = PathVocabulary::default();
        for k in keys {
            v.insert(k);
        }
        v
    }
}

impl From<PathVocabulary> for Vec<PathKey> {
    fn from(v: PathVocabulary) -> Self {
        v.keys
    }
}

impl PathVocabulary {
    fn insert(&mut self, key: PathKey) {
        if !self.slots.contains_key(&key) {
            self.slots.insert(key.clone(), self.keys.len());
            self.keys.push(key);
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[PathKey] {
        &self.keys
    }

    pub fn slot(&self, key: &PathKey) -> Option<usize> {
        self.slots.get(key).copied()
    }
}

/// Union of the samples' paths in first-seen order (positives, then
/// negatives; each sample's paths in key order).
pub fn build_vocabulary(samples: &SampleSet, index: &GraphIndex, cfg: FeatureConfig) -> PathVocabulary {
    let mut vocab = PathVocabulary::default();
    for (e, _) in samples.labelled() {
        for key in index.assertion_paths(&e.s, &e.p, &e.o, cfg) {
            vocab.insert(key);
        }
    }
    vocab
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureVector {
    pub path_bits: Vec<bool>,
    pub node_bits: [bool; 2],
}

impl FeatureVector {
    pub fn width(&self) -> usize {
        self.path_bits.len() + 2
    }

    pub fn to_input(&self) -> Vec<f64> {
        self.path_bits
            .iter()
            .chain(self.node_bits.iter())
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Multi-hot path bits over `vocab` followed by the node bits. Paths outside
/// the vocabulary are ignored. With `mask_own_edge` the edge `(s, p, o)` is
/// treated as absent.
pub fn encode(
    vocab: &PathVocabulary,
    index: &GraphIndex,
    s: &str,
    p: &str,
    o: &str,
    cfg: FeatureConfig,
) -> FeatureVector {
    let mut path_bits = vec![false; vocab.len()];
    for key in index.assertion_paths(s, p, o, cfg) {
        if let Some(i) = vocab.slot(&key) {
            path_bits[i] = true;
        }
    }
    FeatureVector {
        path_bits,
        node_bits: index.node_feature_masked(s, p, o, cfg.mask_own_edge),
    }
}

/// A trained path/node classifier with the vocabulary it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub format_version: u32,
    pub config: FeatureConfig,
    pub vocabulary: PathVocabulary,
    pub mlp: Mlp,
}

impl FeatureModel {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn train(
        samples: &SampleSet,
        index: &GraphIndex,
        cfg: FeatureConfig,
        mlp_cfg: &MlpConfig,
        seed: u64,
    ) -> Result<FeatureModel> {
        let vocabulary = build_vocabulary(samples, index, cfg);
        let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = samples
            .labelled()
            .map(|(e, y)| (encode(&vocabulary, index, &e.s, &e.p, &e.o, cfg).to_input(), y))
            .unzip();
        let mlp = train_mlp(&xs, &ys, vocabulary.len() + 2, mlp_cfg, seed)?;
        Ok(FeatureModel {
            format_version: Self::FORMAT_VERSION,
            config: cfg,
            vocabulary,
            mlp,
        })
    }

    pub fn score(&self, index: &GraphIndex, s: &str, p: &str, o: &str) -> Result<f64> {
        let f = encode(&self.vocabulary, index, s, p, o, self.config);
        self.mlp.score(&f.to_input())
    }
}

/// Path/node classifiers: one per target property, plus a pooled model over
/// all samples for properties that have none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyModels {
    pub pooled: FeatureModel,
    pub by_property: BTreeMap<String, FeatureModel>,
}

impl PropertyModels {
    /// With `per_property` false only the pooled model is trained.
    pub fn train(
        samples: &SampleSet,
        index: &GraphIndex,
        cfg: FeatureConfig,
        mlp_cfg: &MlpConfig,
        seed: u64,
        per_property: bool,
    ) -> Result<PropertyModels> {
        let pooled = FeatureModel::train(samples, index, cfg, mlp_cfg, seed)?;
        let mut by_property = BTreeMap::new();
        if per_property {
            let mut groups: BTreeMap<&str, SampleSet> = BTreeMap::new();
            for (pos, neg) in samples.positives.iter().zip(&samples.negatives) {
                let g = groups.entry(pos.p.as_str()).or_insert_with(|| SampleSet {
                    positives: Vec::new(),
                    negatives: Vec::new(),
                    seed: samples.seed,
                });
                g.positives.push(pos.clone());
                g.negatives.push(neg.clone());
            }
            for (p, group) in groups {
                let model = FeatureModel::train(&group, index, cfg, mlp_cfg, seed)?;
                by_property.insert(p.to_string(), model);
            }
        }
        Ok(PropertyModels { pooled, by_property })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<PropertyModels> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let m: PropertyModels = serde_json::from_reader(std::io::BufReader::new(f))?;
        for model in std::iter::once(&m.pooled).chain(m.by_property.values()) {
            if model.format_version != FeatureModel::FORMAT_VERSION {
                return Err(Error::Config(format!(
                    "{}: unsupported feature model version {}",
                    path.display(),
                    model.format_version
                )));
            }
            if model.mlp.input_width() != model.vocabulary.len() + 2 {
                return Err(Error::WidthMismatch {
                    expected: model.vocabulary.len() + 2,
                    got: model.mlp.input_width(),
                });
            }
        }
        Ok(m)
    }

    pub fn model(&self, p: &str) -> &FeatureModel {
        self.by_property.get(p).unwrap_or(&self.pooled)
    }

    pub fn score(&self, index: &GraphIndex, s: &str, p: &str, o: &str) -> Result<f64> {
        self.model(p).score(index, s, p, o)
    }
}

/// Sigmoid output of the classifier for one encoded assertion.
pub fn mlp_score(model: &Mlp, feature: &FeatureVector) -> Result<f64> {
    model.score(&feature.to_input())
}

/// Writes one TSV row per sample: `s p o label` then the feature bits, with a
/// header naming every column.
pub fn write_feature_matrix<W: Write>(
    mut w: W,
    vocab: &PathVocabulary,
    index: &GraphIndex,
    samples: &SampleSet,
    cfg: FeatureConfig,
) -> Result<()> {
    let io = |e| Error::io("features", e);
    let mut header = vec!["s".to_string(), "p".into(), "o".into(), "label".into()];
    header.extend(vocab.keys().iter().map(ToString::to_string));
    header.extend(["v_s".to_string(), "v_o".to_string()]);
    writeln!(w, "{}", header.join("\t")).map_err(io)?;
    for (e, y) in samples.labelled() {
        let f = encode(vocab, index, &e.s, &e.p, &e.o, cfg);
        let bits: Vec<&str> = f
            .path_bits
            .iter()
            .chain(f.node_bits.iter())
            .map(|&b| if b { "1" } else { "0" })
            .collect();
        writeln!(w, "{}\t{}\t{}\t{}\t{}", e.s, e.p, e.o, y as u8, bits.join("\t")).map_err(io)?;
    }
    Ok(())
}

/// Feature rows grouped by path depth, for inspection.
pub fn depth_histogram(vocab: &PathVocabulary) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for k in vocab.keys() {
        *h.entry(k.depth()).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn edges(list: &[(&str, &str, &str)]) -> Vec<Edge> {
        list.iter().map(|(s, p, o)| Edge::new(*s, *p, *o)).collect()
    }

    const CFG: FeatureConfig = FeatureConfig {
        merge_directions: false,
        mask_own_edge: false,
    };

    #[test]
    fn node_bits() {
        let g = GraphIndex::new(&edges(&[("a", "p", "b"), ("c", "q", "d")]));
        assert_eq!(g.node_feature("x", "p", "y"), [false, false]);
        assert_eq!(g.node_feature("a", "p", "b"), [true, true]);
        assert_eq!(g.node_feature("a", "p", "d"), [true, false]);
        assert_eq!(g.node_feature("c", "p", "b"), [false, true]);
    }

    #[test]
    fn masking_hides_the_encoded_edge_only() {
        let g = GraphIndex::new(&edges(&[
            ("s", "p", "o"),
            ("s", "q", "o"),
            ("s", "k", "x"),
            ("x", "p", "o"),
        ]));
        let masked = FeatureConfig {
            mask_own_edge: true,
            ..CFG
        };
        assert_eq!(
            g.assertion_paths("s", "p", "o", masked),
            BTreeSet::from([
                PathKey::new(Direction::So, ["q"]),
                PathKey::new(Direction::So, ["k", "p"]),
            ])
        );
        assert!(g.assertion_paths("s", "p", "o", CFG).contains(&PathKey::new(Direction::So, ["p"])));
        assert_eq!(g.node_feature_masked("s", "p", "o", true), [false, true]);
        assert_eq!(g.node_feature_masked("s", "q", "o", true), [false, false]);
        assert_eq!(g.node_feature_masked("x", "p", "o", true), [false, true]);
        assert_eq!(g.node_feature_masked("s", "p", "x", true), [true, false]);
    }

    #[test]
    fn self_loop_in_both_directions() {
        let g = GraphIndex::new(&edges(&[("s", "p", "s")]));
        let paths = g.path_features("s", "s", CFG);
        assert!(paths.contains(&PathKey::new(Direction::So, ["p"])));
        assert!(paths.contains(&PathKey::new(Direction::Os, ["p"])));
    }

    #[test]
    fn disjoint_components_have_no_paths() {
        let g = GraphIndex::new(&edges(&[("a", "p", "b"), ("c", "p", "d")]));
        assert!(g.path_features("a", "d", CFG).is_empty());
    }

    #[test]
    fn depth_two_paths_and_merge_flag() {
        let g = GraphIndex::new(&edges(&[
            ("s", "knows", "x"),
            ("x", "playsFor", "o"),
            ("o", "locatedIn", "s"),
        ]));
        let paths = g.path_features("s", "o", CFG);
        assert_eq!(
            paths,
            BTreeSet::from([
                PathKey::new(Direction::So, ["knows", "playsFor"]),
                PathKey::new(Direction::Os, ["locatedIn"]),
            ])
        );
        let merged = g.path_features(
            "s",
            "o",
            FeatureConfig {
                merge_directions: true,
                ..CFG
            },
        );
        assert!(merged.contains(&PathKey::new(Direction::So, ["locatedIn"])));
    }

    fn samples(pos: &[(&str, &str, &str)], neg: &[(&str, &str, &str)]) -> SampleSet {
        SampleSet {
            positives: edges(pos),
            negatives: edges(neg),
            seed: 0,
        }
    }

    #[test]
    fn vocabulary_dedups_shared_paths() {
        let g = GraphIndex::new(&edges(&[("a", "r", "b"), ("c", "r", "d")]));
        let s = samples(&[("a", "p", "b"), ("c", "p", "d")], &[]);
        let v = build_vocabulary(&s, &g, CFG);
        assert_eq!(v.keys(), [PathKey::new(Direction::So, ["r"])]);

        let none = samples(&[("a", "p", "d")], &[("c", "p", "b")]);
        let v = build_vocabulary(&none, &g, CFG);
        assert!(v.is_empty());
        let f = encode(&v, &g, "a", "p", "d", CFG);
        assert_eq!(f.width(), 2);
    }

    #[test]
    fn encode_edge_cases() {
        let g = GraphIndex::new(&edges(&[("a", "r", "b"), ("b", "r", "a")]));
        let s = samples(&[("a", "p", "b")], &[]);
        let v = build_vocabulary(&s, &g, CFG);
        assert_eq!(v.len(), 2);
        let f = encode(&v, &g, "a", "p", "b", CFG);
        assert!(f.path_bits.iter().all(|&b| b));
        let f = encode(&v, &g, "x", "p", "y", CFG);
        assert!(f.to_input().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn feature_matrix_has_header_and_rows() {
        let g = GraphIndex::new(&edges(&[("a", "r", "b")]));
        let s = samples(&[("a", "r", "b")], &[("b", "r", "a")]);
        let v = build_vocabulary(&s, &g, CFG);
        let mut buf = Vec::new();
        write_feature_matrix(&mut buf, &v, &g, &s, CFG).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("s\tp\to\tlabel\tso1:r"));
        assert!(lines[1].starts_with("a\tr\tb\t1\t1"));
        assert_eq!(depth_histogram(&v).get(&1), Some(&2));
    }

    /// All paths by brute force over every intermediate entity.
    fn brute_paths(t: &[(usize, usize, usize)], n: usize, s: usize, o: usize) -> BTreeSet<PathKey> {
        let has = |a: usize, p: usize, b: usize| t.contains(&(a, p, b));
        let mut out = BTreeSet::new();
        for p in 0..3 {
            if has(s, p, o) {
                out.insert(PathKey::new(Direction::So, [format!("p{p}")]));
            }
            if has(o, p, s) {
                out.insert(PathKey::new(Direction::Os, [format!("p{p}")]));
            }
        }
        for e in 0..n {
            for p1 in 0..3 {
                for p2 in 0..3 {
                    if has(s, p1, e) && has(e, p2, o) {
                        out.insert(PathKey::new(Direction::So, [format!("p{p1}"), format!("p{p2}")]));
                    }
                    if has(o, p1, e) && has(e, p2, s) {
                        out.insert(PathKey::new(Direction::Os, [format!("p{p1}"), format!("p{p2}")]));
                    }
                }
            }
        }
        out
    }

    fn to_edges(t: &[(usize, usize, usize)]) -> Vec<Edge> {
        t.iter()
            .map(|(s, p, o)| Edge::new(format!("e{s}"), format!("p{p}"), format!("e{o}")))
            .collect()
    }

    proptest! {
        #[test]
        fn paths_match_brute_force(
            raw in prop::collection::vec((0usize..30, 0usize..3, 0usize..30), 0..90),
            s in 0usize..30,
            o in 0usize..30,
        ) {
            let mut t = raw.clone();
            t.sort();
            t.dedup();
            let g = GraphIndex::new(&to_edges(&t));
            let got = g.path_features(&format!("e{s}"), &format!("e{o}"), CFG);
            prop_assert_eq!(got, brute_paths(&t, 30, s, o));
        }

        #[test]
        fn node_bits_match_scan(
            raw in prop::collection::vec((0usize..10, 0usize..3, 0usize..10), 0..40),
            s in 0usize..10, p in 0usize..3, o in 0usize..10,
        ) {
            let g = GraphIndex::new(&to_edges(&raw));
            let vs = raw.iter().any(|&(a, q, _)| a == s && q == p);
            let vo = raw.iter().any(|&(_, q, b)| b == o && q == p);
            prop_assert_eq!(g.node_feature(&format!("e{s}"), &format!("p{p}"), &format!("e{o}")), [vs, vo]);
        }

        #[test]
        fn encode_sets_membership_bits(
            raw in prop::collection::vec((0usize..12, 0usize..3, 0usize..12), 0..50),
            train in prop::collection::vec((0usize..12, 0usize..12), 1..10),
            s in 0usize..12, o in 0usize..12,
        ) {
            let g = GraphIndex::new(&to_edges(&raw));
            let set = SampleSet {
                positives: train.iter().map(|(a, b)| Edge::new(format!("e{a}"), "p0", format!("e{b}"))).collect(),
                negatives: vec![],
                seed: 0,
            };
            let v = build_vocabulary(&set, &g, CFG);
            let union: BTreeSet<PathKey> = train.iter().flat_map(|(a, b)| brute_paths(&raw, 12, *a, *b)).collect();
            prop_assert_eq!(v.len(), union.len());

            let (ss, oo) = (format!("e{s}"), format!("e{o}"));
            let f = encode(&v, &g, &ss, "p0", &oo, CFG);
            let paths = brute_paths(&raw, 12, s, o);
            for (i, key) in v.keys().iter().enumerate() {
                prop_assert_eq!(f.path_bits[i], paths.contains(key));
            }
        }
    }
}
