//! The end-to-end correction pipeline with content-addressed stage caching.
//!
//! Stages: input, candidates, sub-graph, samples, link-prediction model,
//! constraints, scores, decisions. Every stage except the last writes its
//! artifact to the work directory together with a key hashed from its inputs
//! and configuration; a later run with the same key reloads the artifact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{best_tau, evaluate, tau_grid, tau_sweep, GenConfig, Metrics, SweepRow};
use crate::constraints::{check_consistency, combine, ConsistencyParams, ConstraintSet};
use crate::decide::{write_corrections, CorrectionResult, DecideConfig, ScoreTable};
use crate::embed::{self, EmbeddingKind, EmbeddingModel, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, GraphIndex, MlpConfig, PropertyModels};
use crate::kb::{KnowledgeBase, LexicalIndex, LookupProvider, RemoteLookup};
use crate::relate::{
    read_candidates, read_targets, write_candidates, CandidateList, CandidateMethod, GroundTruth, Relater, StopWords,
    TargetAssertion, WordVecModel, STOP_WORDS_VERSION,
};
use crate::subgraph::{extract_subgraph, sample, ExtractMode, SampleSet, SubGraph};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkModel {
    /// Path and node features with the feed-forward classifier.
    #[default]
    Pn,
    TransE,
    DistMult,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ConsistencyModel {
    #[serde(rename = "car")]
    Car,
    #[serde(rename = "ran")]
    Ran,
    #[default]
    #[serde(rename = "car+ran")]
    CarRan,
    #[serde(rename = "none")]
    None,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    pub triples: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub anchors: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    /// Manual constraints merged over the mined ones.
    pub constraints: Option<PathBuf>,
    /// Remote lookup service used instead of the local lexical index.
    pub lookup_endpoint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub model: LinkModel,
    pub features: FeatureConfig,
    /// One path/node classifier per target property instead of a pooled one.
    pub per_property: bool,
    pub mlp: MlpConfig,
    pub embedding: TrainConfig,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            model: LinkModel::Pn,
            features: FeatureConfig::default(),
            per_property: true,
            mlp: MlpConfig::default(),
            embedding: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyConfig {
    pub model: ConsistencyModel,
    #[serde(flatten)]
    pub params: ConsistencyParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub enabled: bool,
    pub step: f64,
    /// Share of each ground-truth kind used to choose τ.
    pub dev_share: f64,
    pub split_seed: u64,
    /// Decide at the τ chosen on the dev split instead of the configured one.
    pub use_chosen_tau: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            enabled: true,
            step: 0.05,
            dev_share: 0.5,
            split_seed: 0,
            use_chosen_tau: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub work_dir: PathBuf,
    pub seed: u64,
    /// Generate a synthetic case instead of reading `input` files.
    pub synthetic: Option<GenConfig>,
    pub input: InputConfig,
    pub candidates: CandidateMethod,
    pub subgraph: ExtractMode,
    pub link: LinkConfig,
    pub consistency: ConsistencyConfig,
    pub decide: DecideConfig,
    pub sweep: SweepConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            work_dir: PathBuf::from("work"),
            seed: 0,
            synthetic: None,
            input: InputConfig::default(),
            candidates: CandidateMethod::default(),
            subgraph: ExtractMode::default(),
            link: LinkConfig::default(),
            consistency: ConsistencyConfig::default(),
            decide: DecideConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let i = &mut cfg.input;
        for p in [
            &mut i.triples,
            &mut i.labels,
            &mut i.schema,
            &mut i.anchors,
            &mut i.targets,
            &mut i.word_vectors,
            &mut i.constraints,
        ] {
            resolve(base, p);
        }
        if cfg.work_dir.is_relative() {
            cfg.work_dir = base.join(&cfg.work_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.consistency.params.validate()?;
        if !(0.0..=1.0).contains(&self.decide.tau) {
            return Err(Error::Config("tau must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.sweep.dev_share) {
            return Err(Error::Config("dev_share must lie in [0, 1)".into()));
        }
        if self.synthetic.is_none() {
            if self.input.triples.is_none() || self.input.targets.is_none() {
                return Err(Error::Config("input.triples and input.targets are required".into()));
            }
            let i = &self.input;
            for p in [&i.triples, &i.labels, &i.schema, &i.anchors, &i.targets, &i.word_vectors, &i.constraints]
                .into_iter()
                .flatten()
            {
                if !p.exists() {
                    return Err(Error::Config(format!("{} does not exist", p.display())));
                }
            }
        }
        if self.link.model == LinkModel::None && self.consistency.model == ConsistencyModel::None {
            return Err(Error::Config("at least one of link and consistency models is needed".into()));
        }
        Ok(())
    }
}

struct Hasher(Sha256);

impl Hasher {
    fn new(stage: &str) -> Self {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        Hasher(h)
    }

    fn str(mut self, s: &str) -> Self {
        self.0.update((s.len() as u64).to_le_bytes());
        self.0.update(s.as_bytes());
        self
    }

    fn json<T: Serialize>(self, v: &T) -> Result<Self> {
        Ok(self.str(&serde_json::to_string(v)?))
    }

    fn file(self, p: Option<&Path>) -> Result<Self> {
        match p {
            None => Ok(self.str("-")),
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                Ok(self.str(&hex::encode(Sha256::digest(&bytes))))
            }
        }
    }

    fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

/// Stage keys of the last run, stored as `manifest.json`.
#[derive(Default, Serialize, Deserialize)]
struct Manifest {
    stages: BTreeMap<String, String>,
}

struct Cache {
    dir: PathBuf,
    manifest: Manifest,
    hits: Vec<&'static str>,
}

impl Cache {
    fn open(dir: &Path) -> Result<Cache> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("manifest.json");
        let manifest = match File::open(&path) {
            Ok(f) => serde_json::from_reader(BufReader::new(f)).unwrap_or_default(),
            Err(_) => Manifest::default(),
        };
        Ok(Cache {
            dir: dir.to_path_buf(),
            manifest,
            hits: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Reloads the stage artifact when its key is unchanged, otherwise
    /// computes and saves it.
    fn stage<T>(
        &mut self,
        stage: &'static str,
        key: &str,
        load: impl FnOnce(&Self) -> Result<T>,
        compute: impl FnOnce() -> Result<T>,
        save: impl FnOnce(&Self, &T) -> Result<()>,
    ) -> Result<T> {
        let started = Instant::now();
        if self.manifest.stages.get(stage).map(String::as_str) == Some(key) {
            match load(self) {
                Ok(v) => {
                    self.hits.push(stage);
                    log::info!("{stage}: reused cached artifact");
                    return Ok(v);
                }
                Err(e) => log::warn!("{stage}: cached artifact unusable ({e}); recomputing"),
            }
        }
        let v = compute().map_err(|e| wrap(e, stage))?;
        save(self, &v).map_err(|e| wrap(e, stage))?;
        self.manifest.stages.insert(stage.to_string(), key.to_string());
        self.flush()?;
        log::info!("{stage}: done in {:.2?}", started.elapsed());
        Ok(v)
    }

    fn flush(&self) -> Result<()> {
        let path = self.path("manifest.json");
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &self.manifest)?;
        Ok(())
    }
}

fn wrap(e: Error, stage: &'static str) -> Error {
    match e {
        Error::Stage { .. } => e,
        other => other.in_stage(stage, None),
    }
}

fn open(p: &Path) -> Result<BufReader<File>> {
    File::open(p).map(BufReader::new).map_err(|e| Error::io(p, e))
}

fn create(p: &Path) -> Result<BufWriter<File>> {
    File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e))
}

/// Stratified split of target indices into dev and test halves.
pub fn split_dev_test(targets: &[TargetAssertion], dev_share: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<&'static str, Vec<usize>> = BTreeMap::new();
    for (i, t) in targets.iter().enumerate() {
        groups.entry(super::gt_kind(t)).or_default().push(i);
    }
    let (mut dev, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let cut = (idx.len() as f64 * dev_share).round() as usize;
        dev.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    dev.sort_unstable();
    test.sort_unstable();
    (dev, test)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
    pub dev_rows: Vec<SweepRow>,
    pub test_rows: Vec<SweepRow>,
    pub chosen_tau: Option<f64>,
}

/// Raw, unnormalised model scores per target and candidate, in candidate
/// order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub likelihood: Option<Vec<Vec<f64>>>,
    pub consistency: Option<Vec<Vec<f64>>>,
}

impl ScoreFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ScoreFile> {
        Ok(serde_json::from_reader(open(path)?)?)
    }

    pub fn table(&self, candidates: &[CandidateList], per_property: bool) -> Result<ScoreTable> {
        ScoreTable::new(
            candidates,
            self.likelihood.as_deref(),
            self.consistency.as_deref(),
            per_property,
        )
    }
}

pub struct PipelineOutput {
    pub kb: KnowledgeBase,
    pub candidates: Vec<CandidateList>,
    pub table: ScoreTable,
    pub tau: f64,
    pub corrections: Vec<CorrectionResult>,
    /// `None` when some target lacks a ground truth or there are no targets.
    pub metrics: Option<Metrics>,
    pub sweep: Option<SweepReport>,
    /// Stages whose artifacts were reused.
    pub cache_hits: Vec<&'static str>,
    pub corrections_path: PathBuf,
}

impl PipelineOutput {
    /// Decisions for the targets at `idx` (all when `None`) at threshold `tau`.
    pub fn decide_at(&self, tau: f64, idx: Option<&[usize]>, cfg: &DecideConfig) -> Result<Vec<CorrectionResult>> {
        let all = self.table.decide_all(&self.kb, &self.candidates, tau, cfg.label_match)?;
        Ok(match idx {
            None => all,
            Some(idx) => super::select(&all, idx),
        })
    }
}

fn load_input(cfg: &PipelineConfig, work: &Path) -> Result<(KnowledgeBase, Vec<TargetAssertion>, String)> {
    if let Some(gen) = &cfg.synthetic {
        let key = Hasher::new("input").json(gen)?.str(&cfg.seed.to_string()).finish();
        let case = super::generate_synthetic_case(gen, cfg.seed)?;
        case.write(&work.join("input"))?;
        return Ok((case.kb, case.targets, key));
    }
    let i = &cfg.input;
    let triples = i.triples.as_deref().ok_or_else(|| Error::Config("input.triples is required".into()))?;
    let targets_path = i.targets.as_deref().ok_or_else(|| Error::Config("input.targets is required".into()))?;
    let key = Hasher::new("input")
        .file(Some(triples))?
        .file(i.labels.as_deref())?
        .file(i.schema.as_deref())?
        .file(i.anchors.as_deref())?
        .file(Some(targets_path))?
        .finish();
    let kb = KnowledgeBase::load_files(triples, i.labels.as_deref(), i.schema.as_deref(), i.anchors.as_deref())?;
    let targets = read_targets(open(targets_path)?)?;
    Ok((kb, targets, key))
}

fn link_scores(
    cfg: &PipelineConfig,
    cache: &mut Cache,
    sub: &SubGraph,
    samples_key: &str,
    samples: &dyn Fn(&mut Cache) -> Result<SampleSet>,
    candidates: &[CandidateList],
) -> Result<(Option<Vec<Vec<f64>>>, String)> {
    let link = &cfg.link;
    let model_key = Hasher::new("model")
        .str(samples_key)
        .json(&link.model)?
        .json(&link.features)?
        .json(&link.per_property)?
        .json(&link.mlp)?
        .json(&link.embedding)?
        .str(&cfg.seed.to_string())
        .finish();
    let scores = match link.model {
        LinkModel::None => None,
        LinkModel::Pn => {
            let samples = samples(cache)?;
            let index = GraphIndex::from_subgraph(sub);
            let model = cache.stage(
                "model",
                &model_key,
                |c| PropertyModels::load(&c.path("feat_model.json")),
                || PropertyModels::train(&samples, &index, link.features, &link.mlp, cfg.seed, link.per_property),
                |c, m| m.save(&c.path("feat_model.json")),
            )?;
            Some(score_candidates(candidates, "score", |s, p, o| model.score(&index, s, p, o))?)
        }
        LinkModel::TransE | LinkModel::DistMult => {
            let kind = if link.model == LinkModel::TransE {
                EmbeddingKind::TransE
            } else {
                EmbeddingKind::DistMult
            };
            let train_cfg = TrainConfig {
                seed: cfg.seed,
                ..link.embedding.clone()
            };
            let model = cache.stage(
                "model",
                &model_key,
                |c| EmbeddingModel::load(&c.path("embed_model.json")),
                || embed::train(sub, kind, &train_cfg).map(|t| t.model),
                |c, m| m.save(&c.path("embed_model.json")),
            )?;
            Some(score_candidates(candidates, "score", |s, p, o| model.likelihood(s, p, o))?)
        }
    };
    Ok((scores, model_key))
}

/// Scores every candidate `e` of every target as `score(s, p, e)`; failures
/// name the stage and target.
pub fn score_candidates(
    candidates: &[CandidateList],
    stage: &'static str,
    score: impl Fn(&str, &str, &str) -> Result<f64>,
) -> Result<Vec<Vec<f64>>> {
    candidates
        .iter()
        .map(|c| {
            let t = &c.target;
            c.ids()
                .map(|e| score(&t.s, &t.p, e).map_err(|err| err.in_stage(stage, Some(t.id()))))
                .collect()
        })
        .collect()
}

/// Consistency of every candidate under the chosen model; `None` for
/// [`ConsistencyModel::None`]. An entity target's own object is treated as
/// the object being replaced.
pub fn consistency_scores(
    kb: &KnowledgeBase,
    constraints: &ConstraintSet,
    candidates: &[CandidateList],
    model: ConsistencyModel,
    params: &ConsistencyParams,
) -> Result<Option<Vec<Vec<f64>>>> {
    if model == ConsistencyModel::None {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(candidates.len());
    for c in candidates {
        let t = &c.target;
        let replaced = t.o.as_entity();
        let cons = constraints.get(&t.p);
        let row = c
            .ids()
            .map(|e| {
                let y = check_consistency(kb, &t.s, &t.p, e, replaced, cons, params)
                    .map_err(|err| err.in_stage("consistency", Some(t.id())))?;
                Ok(match model {
                    ConsistencyModel::Car => y.y_car,
                    ConsistencyModel::Ran => y.y_ran,
                    _ => combine(y.y_car, y.y_ran, params.combine),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    Ok(Some(out))
}

/// Runs every stage and writes corrections, metrics and the τ sweep into the
/// work directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let work = cfg.work_dir.clone();
    let mut cache = Cache::open(&work)?;
    let (kb, targets, input_key) = load_input(cfg, &work).map_err(|e| wrap(e, "input"))?;
    let stop = StopWords::default();

    let wordvec = match &cfg.input.word_vectors {
        Some(p) => Some(WordVecModel::load(open(p)?).map_err(|e| wrap(e, "candidates"))?),
        None => None,
    };
    let cand_key = Hasher::new("candidates")
        .str(&input_key)
        .json(&cfg.candidates)?
        .json(&cfg.input.lookup_endpoint)?
        .file(cfg.input.word_vectors.as_deref())?
        .str(&STOP_WORDS_VERSION.to_string())
        .finish();
    let candidates = cache.stage(
        "candidates",
        &cand_key,
        |c| read_candidates(open(&c.path("candidates.jsonl"))?, &targets),
        || {
            let local;
            let remote;
            let lookup: &dyn LookupProvider = match &cfg.input.lookup_endpoint {
                Some(url) => {
                    remote = RemoteLookup::new(url.clone());
                    &remote
                }
                None => {
                    local = LexicalIndex::build(&kb);
                    &local
                }
            };
            let relater = Relater {
                kb: &kb,
                lookup,
                wordvec: wordvec.as_ref(),
                stop: &stop,
            };
            targets
                .iter()
                .map(|t| {
                    relater
                        .candidates(&cfg.candidates, t)
                        .map_err(|e| e.in_stage("candidates", Some(t.id())))
                })
                .collect()
        },
        |c, lists: &Vec<CandidateList>| {
            let mut w = create(&c.path("candidates.jsonl"))?;
            write_candidates(&mut w, lists)?;
            w.flush().map_err(|e| Error::io(c.path("candidates.jsonl"), e))
        },
    )?;

    let sub_key = Hasher::new("subgraph").str(&cand_key).json(&cfg.subgraph)?.finish();
    let sub = cache.stage(
        "subgraph",
        &sub_key,
        |c| SubGraph::load(&c.path("subgraph.tsv"), &c.path("subgraph.json")).map(|(s, _)| s),
        || extract_subgraph(&kb, &targets, &candidates, cfg.subgraph),
        |c, s| s.save(&c.path("subgraph.tsv"), &c.path("subgraph.json"), Some(cfg.seed)),
    )?;

    let samples_key = Hasher::new("samples").str(&sub_key).str(&cfg.seed.to_string()).finish();
    let samples_fn = |cache: &mut Cache| -> Result<SampleSet> {
        cache.stage(
            "samples",
            &samples_key,
            |c| SampleSet::load(&c.path("samples.tsv"), &c.path("samples.json")),
            || sample(&sub, cfg.seed),
            |c, s| s.save(&c.path("samples.tsv"), &c.path("samples.json")),
        )
    };
    let (likelihood, model_key) = link_scores(cfg, &mut cache, &sub, &samples_key, &samples_fn, &candidates)?;

    let cons_key = Hasher::new("constraints")
        .str(&input_key)
        .file(cfg.input.constraints.as_deref())?
        .finish();
    let constraints = cache.stage(
        "constraints",
        &cons_key,
        |c| ConstraintSet::load(&c.path("constraints.json")),
        || {
            let mut set = ConstraintSet::mine(&kb);
            if let Some(p) = &cfg.input.constraints {
                set.merge(ConstraintSet::load(p)?);
            }
            Ok(set)
        },
        |c, s| s.save(&c.path("constraints.json")),
    )?;

    let scores_key = Hasher::new("scores")
        .str(&model_key)
        .str(&cons_key)
        .str(&sub_key)
        .json(&cfg.consistency)?
        .finish();
    let raw = cache.stage(
        "scores",
        &scores_key,
        |c| ScoreFile::load(&c.path("scores.json")),
        || {
            Ok(ScoreFile {
                likelihood: likelihood.clone(),
                consistency: consistency_scores(
                    &kb,
                    &constraints,
                    &candidates,
                    cfg.consistency.model,
                    &cfg.consistency.params,
                )?,
            })
        },
        |c, r| r.save(&c.path("scores.json")),
    )?;

    let table = raw
        .table(&candidates, cfg.decide.per_property)
        .map_err(|e| wrap(e, "decide"))?;
    let mut out = PipelineOutput {
        kb,
        candidates,
        table,
        tau: cfg.decide.tau,
        corrections: Vec::new(),
        metrics: None,
        sweep: None,
        cache_hits: std::mem::take(&mut cache.hits),
        corrections_path: cache.path("corrections.jsonl"),
    };

    let annotated = !targets.is_empty() && targets.iter().all(|t| t.ground_truth != GroundTruth::Unknown);
    if cfg.sweep.enabled && annotated {
        let grid = tau_grid(cfg.sweep.step)?;
        let (dev, test) = split_dev_test(&targets, cfg.sweep.dev_share, cfg.sweep.split_seed);
        let dev_rows = tau_sweep(&grid, |tau| out.decide_at(tau, Some(&dev), &cfg.decide))?;
        let test_rows = tau_sweep(&grid, |tau| out.decide_at(tau, Some(&test), &cfg.decide))?;
        let chosen_tau = best_tau(&dev_rows).map(|r| r.tau);
        if cfg.sweep.use_chosen_tau {
            if let Some(t) = chosen_tau {
                out.tau = t;
            }
        }
        let report = SweepReport {
            dev,
            test,
            dev_rows,
            test_rows,
            chosen_tau,
        };
        serde_json::to_writer_pretty(create(&cache.path("sweep.json"))?, &report)?;
        out.sweep = Some(report);
    }

    out.corrections = out.decide_at(out.tau, None, &cfg.decide)?;
    let mut w = create(&out.corrections_path)?;
    write_corrections(&mut w, &out.corrections)?;
    w.flush().map_err(|e| Error::io(&out.corrections_path, e))?;

    if annotated {
        let at_zero = out.decide_at(0.0, None, &cfg.decide)?;
        let metrics = evaluate(&out.candidates, &at_zero, &out.corrections)?;
        serde_json::to_writer_pretty(create(&cache.path("metrics.json"))?, &metrics)?;
        out.metrics = Some(metrics);
    }
    Ok(out)
}
