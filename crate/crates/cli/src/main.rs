use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;

use kbrepair::constraints::{CombineMode, ConstraintSet};
use kbrepair::decide::{read_decisions, write_corrections, CorrectionResult, Decision, LabelMatch};
use kbrepair::embed::{self, EmbeddingKind, EmbeddingModel};
use kbrepair::features::{depth_histogram, write_feature_matrix, GraphIndex, PropertyModels};
use kbrepair::harness::{
    best_tau, consistency_scores, evaluate, generate_synthetic_case, run_pipeline,
    score_candidates, split_dev_test, tau_grid, tau_sweep, ConsistencyModel, GenConfig, LinkModel,
    PipelineConfig, ScoreFile,
};
use kbrepair::kb::{KnowledgeBase, LexicalIndex, LookupProvider, RemoteLookup};
use kbrepair::relate::{
    read_candidates, read_targets, write_candidates, CandidateList, CandidateMethod, Relater, StopWords,
    TargetAssertion, WordVecModel,
};
use kbrepair::subgraph::{extract_subgraph, sample, ExtractMode, SampleSet, SubGraph};
use kbrepair::{Error, Result};

#[derive(Parser)]
#[command(name = "kbrepair", version, about = "Correct erroneous assertions in a knowledge base")]
struct Cli {
    /// TOML configuration supplying defaults for model and decision options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a knowledge base and print its statistics.
    Load(KbArgs),
    /// Rank candidate substitutes for each target.
    Candidates(CandidatesArgs),
    /// Extract the sub-graph around targets and candidates.
    Subgraph(SubgraphArgs),
    /// Train path/node feature classifiers.
    TrainFeat(TrainFeatArgs),
    /// Train a TransE or DistMult embedding.
    #[command(alias = "embed-train")]
    TrainEmbed(TrainEmbedArgs),
    /// Score candidates or a single triple with an embedding model.
    EmbedScore(EmbedScoreArgs),
    /// Dump the feature matrix of a sample set as TSV.
    Featurize(FeaturizeArgs),
    /// Mine cardinality and range constraints.
    Mine(MineArgs),
    /// Compute raw likelihood and consistency scores for all candidates.
    Score(ScoreArgs),
    /// Filter candidates at a threshold and write corrections.
    Decide(DecideArgs),
    /// Compute metrics for annotated targets.
    Eval(EvalArgs),
    /// Evaluate a grid of thresholds on a dev/test split.
    Sweep(SweepArgs),
    /// Generate a synthetic benchmark case.
    Bench(BenchArgs),
    /// Run every stage from a configuration file.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct KbArgs {
    #[arg(long)]
    triples: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    anchors: Option<PathBuf>,
}

impl KbArgs {
    fn load(&self) -> Result<KnowledgeBase> {
        KnowledgeBase::load_files(
            &self.triples,
            self.labels.as_deref(),
            self.schema.as_deref(),
            self.anchors.as_deref(),
        )
    }
}

#[derive(Args)]
struct CandidatesArgs {
    #[command(flatten)]
    kb: KbArgs,
    #[arg(long)]
    targets: PathBuf,
    /// lookup, edit_distance or word_vec.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    word_vectors: Option<PathBuf>,
    /// Remote lookup service queried with `q` and `max`.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SubgraphArgs {
    #[command(flatten)]
    kb: KbArgs,
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    /// incident, strict or whole_kb.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the output path with a `.json` extension.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Also draw training samples and write them here.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SubgraphInput {
    #[arg(long)]
    subgraph: PathBuf,
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

impl SubgraphInput {
    fn load(&self) -> Result<(SubGraph, Option<u64>)> {
        SubGraph::load(&self.subgraph, &sidecar_for(&self.subgraph, self.sidecar.as_deref()))
    }
}

#[derive(Args)]
struct SamplesInput {
    /// Sample TSV; drawn from the sub-graph with the seed when absent.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    samples_sidecar: Option<PathBuf>,
}

impl SamplesInput {
    fn load(&self, sub: &SubGraph, seed: u64) -> Result<SampleSet> {
        match &self.samples {
            Some(p) => SampleSet::load(p, &sidecar_for(p, self.samples_sidecar.as_deref())),
            None => sample(sub, seed),
        }
    }
}

#[derive(Args)]
struct TrainFeatArgs {
    #[command(flatten)]
    sub: SubgraphInput,
    #[command(flatten)]
    samples: SamplesInput,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    merge_directions: bool,
    /// Train one pooled classifier instead of one per property.
    #[arg(long)]
    pooled: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainEmbedArgs {
    #[command(flatten)]
    sub: SubgraphInput,
    /// transe or distmult.
    #[arg(long)]
    kind: Option<EmbeddingKind>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedScoreArgs {
    #[arg(long)]
    model: PathBuf,
    /// Score one triple and print the likelihood.
    #[arg(long, num_args = 3, value_names = ["S", "P", "O"])]
    triple: Option<Vec<String>>,
    #[arg(long, requires = "candidates")]
    targets: Option<PathBuf>,
    #[arg(long, requires = "targets")]
    candidates: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[command(flatten)]
    sub: SubgraphInput,
    #[command(flatten)]
    samples: SamplesInput,
    /// Reuse the vocabulary of this feature model (its pooled classifier).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    merge_directions: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MineArgs {
    #[command(flatten)]
    kb: KbArgs,
    /// Manual constraints that replace mined ones per property and part.
    #[arg(long)]
    overrides: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    properties: Option<Vec<String>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    kb: KbArgs,
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    /// pn, transe, distmult or none.
    #[arg(long)]
    link_model: Option<String>,
    /// Feature or embedding model file; required unless the link model is none.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sub-graph TSV used for path features.
    #[arg(long)]
    subgraph: Option<PathBuf>,
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// car, ran, car+ran or none.
    #[arg(long)]
    consistency: Option<String>,
    /// Mined constraints; mined from the knowledge base when absent.
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long)]
    combine: Option<CombineMode>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoredInput {
    #[command(flatten)]
    kb: KbArgs,
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    /// Normalise scores within each property.
    #[arg(long)]
    per_property: bool,
    /// folded, exact or off.
    #[arg(long)]
    label_match: Option<LabelMatch>,
}

struct Scored {
    kb: KnowledgeBase,
    candidates: Vec<CandidateList>,
    table: kbrepair::decide::ScoreTable,
    label_match: LabelMatch,
}

impl Scored {
    fn decide(&self, tau: f64) -> Result<Vec<CorrectionResult>> {
        self.table.decide_all(&self.kb, &self.candidates, tau, self.label_match)
    }
}

impl ScoredInput {
    fn load(&self, cfg: &PipelineConfig) -> Result<Scored> {
        let kb = self.kb.load()?;
        let targets = load_targets(&self.targets)?;
        let candidates = read_candidates(open(&self.candidates)?, &targets)?;
        let per_property = self.per_property || cfg.decide.per_property;
        let table = ScoreFile::load(&self.scores)?.table(&candidates, per_property)?;
        Ok(Scored {
            kb,
            candidates,
            table,
            label_match: self.label_match.unwrap_or(cfg.decide.label_match),
        })
    }
}

#[derive(Args)]
struct DecideArgs {
    #[command(flatten)]
    input: ScoredInput,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: ScoredInput,
    #[arg(long)]
    tau: Option<f64>,
    /// Take decisions from this corrections file instead of deciding at τ.
    #[arg(long)]
    corrections: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: ScoredInput,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    dev_share: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 500)]
    entities: usize,
    #[arg(long, default_value_t = 8)]
    properties: usize,
    #[arg(long, default_value_t = 40)]
    entity_targets: usize,
    #[arg(long, default_value_t = 20)]
    empty_targets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    work_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Decide at the threshold chosen on the dev split.
    #[arg(long)]
    use_chosen_tau: bool,
}

fn open(p: &Path) -> Result<BufReader<File>> {
    File::open(p).map(BufReader::new).map_err(|e| Error::io(p, e))
}

fn create(p: &Path) -> Result<BufWriter<File>> {
    File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e))
}

fn sidecar_for(tsv: &Path, given: Option<&Path>) -> PathBuf {
    given.map(Path::to_path_buf).unwrap_or_else(|| tsv.with_extension("json"))
}

fn load_targets(p: &Path) -> Result<Vec<TargetAssertion>> {
    read_targets(open(p)?)
}

/// Parses a config enum from its serialised name.
fn named<T: DeserializeOwned>(what: &str, s: &str) -> Result<T> {
    serde_json::from_value(json!(s)).map_err(|_| Error::Config(format!("unknown {what} `{s}`")))
}

fn write_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w).map_err(|e| Error::io(p, e))
        }
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Load(a) => {
            let kb = a.load()?;
            let classes: std::collections::BTreeSet<&str> =
                kb.entities().flat_map(|e| kb.declared_classes(e)).collect();
            write_json(
                None,
                &json!({
                    "triples": kb.len(),
                    "entities": kb.entity_count(),
                    "properties": kb.properties().count(),
                    "classes": classes.len(),
                }),
            )
        }
        Command::Candidates(a) => {
            let kb = a.kb.load()?;
            let targets = load_targets(&a.targets)?;
            let mut method = cfg.candidates.clone();
            if let Some(m) = &a.method {
                let k = a.k.unwrap_or(method.k());
                method = serde_json::from_value(json!({ "method": m, "k": k }))
                    .map_err(|_| Error::Config(format!("unknown candidate method `{m}`")))?;
            } else if let Some(k) = a.k {
                method = serde_json::from_value(json!({ "method": method_name(&method), "k": k }))?;
            }
            let wv = a.word_vectors.as_ref().or(cfg.input.word_vectors.as_ref());
            let wordvec = wv.map(|p| WordVecModel::load(open(p)?)).transpose()?;
            let endpoint = a.endpoint.clone().or(cfg.input.lookup_endpoint.clone());
            let remote;
            let local;
            let lookup: &dyn LookupProvider = match endpoint {
                Some(url) => {
                    remote = RemoteLookup::new(url);
                    &remote
                }
                None => {
                    local = LexicalIndex::build(&kb);
                    &local
                }
            };
            let stop = StopWords::default();
            let relater = Relater {
                kb: &kb,
                lookup,
                wordvec: wordvec.as_ref(),
                stop: &stop,
            };
            let lists = targets
                .iter()
                .map(|t| relater.candidates(&method, t).map_err(|e| e.in_stage("candidates", Some(t.id()))))
                .collect::<Result<Vec<_>>>()?;
            let mut w = create(&a.out)?;
            write_candidates(&mut w, &lists)?;
            w.flush().map_err(|e| Error::io(&a.out, e))
        }
        Command::Subgraph(a) => {
            let kb = a.kb.load()?;
            let targets = load_targets(&a.targets)?;
            let candidates = read_candidates(open(&a.candidates)?, &targets)?;
            let mode = match &a.mode {
                Some(m) => named::<ExtractMode>("extraction mode", m)?,
                None => cfg.subgraph,
            };
            let seed = a.seed.unwrap_or(cfg.seed);
            let sub = extract_subgraph(&kb, &targets, &candidates, mode)?;
            sub.save(&a.out, &sidecar_for(&a.out, a.sidecar.as_deref()), Some(seed))?;
            if let Some(p) = &a.samples {
                sample(&sub, seed)?.save(p, &p.with_extension("json"))?;
            }
            log::info!("{} triples, {} entities", sub.triples.len(), sub.entities.len());
            Ok(())
        }
        Command::TrainFeat(a) => {
            let (sub, sub_seed) = a.sub.load()?;
            let seed = a.seed.or(sub_seed).unwrap_or(cfg.seed);
            let samples = a.samples.load(&sub, seed)?;
            let mut mlp = cfg.link.mlp.clone();
            if let Some(h) = a.hidden {
                mlp.hidden = h;
            }
            if let Some(e) = a.epochs {
                mlp.epochs = e;
            }
            if let Some(lr) = a.learning_rate {
                mlp.learning_rate = lr;
            }
            let mut features = cfg.link.features;
            features.merge_directions |= a.merge_directions;
            let index = GraphIndex::from_subgraph(&sub);
            let per_property = cfg.link.per_property && !a.pooled;
            let models = PropertyModels::train(&samples, &index, features, &mlp, seed, per_property)?;
            models.save(&a.out)?;
            write_json(
                None,
                &json!({
                    "samples": samples.positives.len() * 2,
                    "paths_by_depth": depth_histogram(&models.pooled.vocabulary),
                    "properties": models.by_property.keys().collect::<Vec<_>>(),
                }),
            )
        }
        Command::TrainEmbed(a) => {
            let (sub, _) = a.sub.load()?;
            let mut tc = cfg.link.embedding.clone();
            tc.seed = a.seed.unwrap_or(cfg.seed);
            if let Some(d) = a.dim {
                tc.dim = d;
            }
            if let Some(e) = a.epochs {
                tc.epochs = e;
            }
            if let Some(lr) = a.learning_rate {
                tc.learning_rate = lr;
            }
            if let Some(n) = a.negatives {
                tc.negatives_per_positive = n;
            }
            let kind = a.kind.unwrap_or(match cfg.link.model {
                LinkModel::TransE => EmbeddingKind::TransE,
                _ => EmbeddingKind::DistMult,
            });
            let trained = embed::train(&sub, kind, &tc)?;
            trained.model.save(&a.out)?;
            write_json(
                None,
                &json!({
                    "first_epoch_loss": trained.epoch_losses.first(),
                    "last_epoch_loss": trained.epoch_losses.last(),
                }),
            )
        }
        Command::EmbedScore(a) => {
            let model = EmbeddingModel::load(&a.model)?;
            if let Some(t) = &a.triple {
                let y = model.likelihood(&t[0], &t[1], &t[2])?;
                return write_json(a.out.as_deref(), &json!({ "s": t[0], "p": t[1], "o": t[2], "likelihood": y }));
            }
            let (Some(tp), Some(cp)) = (&a.targets, &a.candidates) else {
                return Err(Error::Config("give --triple or --targets with --candidates".into()));
            };
            let targets = load_targets(tp)?;
            let candidates = read_candidates(open(cp)?, &targets)?;
            let scores = ScoreFile {
                likelihood: Some(score_candidates(&candidates, "score", |s, p, o| model.likelihood(s, p, o))?),
                consistency: None,
            };
            match &a.out {
                Some(p) => scores.save(p),
                None => write_json(None, &scores),
            }
        }
        Command::Featurize(a) => {
            let (sub, sub_seed) = a.sub.load()?;
            let samples = a.samples.load(&sub, a.seed.or(sub_seed).unwrap_or(cfg.seed))?;
            let index = GraphIndex::from_subgraph(&sub);
            let (vocab, features) = match &a.model {
                Some(p) => {
                    let m = PropertyModels::load(p)?;
                    (m.pooled.vocabulary.clone(), m.pooled.config)
                }
                None => {
                    let mut f = cfg.link.features;
                    f.merge_directions |= a.merge_directions;
                    (kbrepair::features::build_vocabulary(&samples, &index, f), f)
                }
            };
            let mut w = create(&a.out)?;
            write_feature_matrix(&mut w, &vocab, &index, &samples, features)?;
            w.flush().map_err(|e| Error::io(&a.out, e))
        }
        Command::Mine(a) => {
            let kb = a.kb.load()?;
            let mut set = match &a.properties {
                Some(ps) => ConstraintSet::mine_properties(&kb, ps.iter().map(String::as_str)),
                None => ConstraintSet::mine(&kb),
            };
            if let Some(p) = a.overrides.as_ref().or(cfg.input.constraints.as_ref()) {
                set.merge(ConstraintSet::load(p)?);
            }
            set.save(&a.out)
        }
        Command::Score(a) => {
            let kb = a.kb.load()?;
            let targets = load_targets(&a.targets)?;
            let candidates = read_candidates(open(&a.candidates)?, &targets)?;
            let link = match &a.link_model {
                Some(m) => named::<LinkModel>("link model", m)?,
                None => cfg.link.model,
            };
            let likelihood = match link {
                LinkModel::None => None,
                LinkModel::Pn => {
                    let path = a.model.as_ref().ok_or_else(|| Error::Config("--model is required".into()))?;
                    let sub_path = a.subgraph.as_ref().ok_or_else(|| Error::Config("--subgraph is required".into()))?;
                    let models = PropertyModels::load(path)?;
                    let (sub, _) = SubGraph::load(sub_path, &sidecar_for(sub_path, a.sidecar.as_deref()))?;
                    let index = GraphIndex::from_subgraph(&sub);
                    Some(score_candidates(&candidates, "score", |s, p, o| models.score(&index, s, p, o))?)
                }
                LinkModel::TransE | LinkModel::DistMult => {
                    let path = a.model.as_ref().ok_or_else(|| Error::Config("--model is required".into()))?;
                    let model = EmbeddingModel::load(path)?;
                    Some(score_candidates(&candidates, "score", |s, p, o| model.likelihood(s, p, o))?)
                }
            };
            let cons_model = match &a.consistency {
                Some(m) => named::<ConsistencyModel>("consistency model", m)?,
                None => cfg.consistency.model,
            };
            let constraints = match &a.constraints {
                Some(p) => ConstraintSet::load(p)?,
                None => ConstraintSet::mine(&kb),
            };
            let mut params = cfg.consistency.params;
            if let Some(c) = a.combine {
                params.combine = c;
            }
            params.validate()?;
            let consistency = consistency_scores(&kb, &constraints, &candidates, cons_model, &params)?;
            if likelihood.is_none() && consistency.is_none() {
                return Err(Error::Config("both link and consistency models are none".into()));
            }
            ScoreFile {
                likelihood,
                consistency,
            }
            .save(&a.out)
        }
        Command::Decide(a) => {
            let scored = a.input.load(&cfg)?;
            let results = scored.decide(a.tau.unwrap_or(cfg.decide.tau))?;
            let mut w = create(&a.out)?;
            write_corrections(&mut w, &results)?;
            w.flush().map_err(|e| Error::io(&a.out, e))
        }
        Command::Eval(a) => {
            let scored = a.input.load(&cfg)?;
            let at_zero = scored.decide(0.0)?;
            let results = match &a.corrections {
                Some(p) => decisions_from_file(p, &at_zero)?,
                None => scored.decide(a.tau.unwrap_or(cfg.decide.tau))?,
            };
            let metrics = evaluate(&scored.candidates, &at_zero, &results)?;
            write_json(a.out.as_deref(), &metrics)
        }
        Command::Sweep(a) => {
            let scored = a.input.load(&cfg)?;
            let grid = tau_grid(a.step.unwrap_or(cfg.sweep.step))?;
            let targets: Vec<TargetAssertion> = scored.candidates.iter().map(|c| c.target.clone()).collect();
            let (dev, test) = split_dev_test(
                &targets,
                a.dev_share.unwrap_or(cfg.sweep.dev_share),
                a.split_seed.unwrap_or(cfg.sweep.split_seed),
            );
            let subset = |idx: &[usize], tau: f64| -> Result<Vec<CorrectionResult>> {
                Ok(kbrepair::harness::select(&scored.decide(tau)?, idx))
            };
            let dev_rows = tau_sweep(&grid, |tau| subset(&dev, tau))?;
            let test_rows = tau_sweep(&grid, |tau| subset(&test, tau))?;
            let chosen = best_tau(&dev_rows).map(|r| r.tau);
            let at_chosen = chosen
                .and_then(|t| test_rows.iter().find(|r| r.tau == t))
                .map(|r| r.metrics);
            write_json(
                a.out.as_deref(),
                &json!({
                    "dev": dev, "test": test,
                    "dev_rows": dev_rows, "test_rows": test_rows,
                    "chosen_tau": chosen, "test_at_chosen_tau": at_chosen,
                }),
            )
        }
        Command::Bench(a) => {
            let gen = GenConfig {
                entities: a.entities,
                properties: a.properties,
                entity_targets: a.entity_targets,
                empty_targets: a.empty_targets,
                ..cfg.synthetic.clone().unwrap_or_default()
            };
            let case = generate_synthetic_case(&gen, a.seed)?;
            case.write(&a.out)?;
            write_json(
                None,
                &json!({ "triples": case.kb.len(), "entities": case.kb.entity_count(), "targets": case.targets.len() }),
            )
        }
        Command::Pipeline(a) => {
            if cli.config.is_none() {
                return Err(Error::Config("pipeline needs --config".into()));
            }
            let mut cfg = cfg;
            if let Some(w) = a.work_dir {
                cfg.work_dir = w;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            cfg.sweep.use_chosen_tau |= a.use_chosen_tau;
            let out = run_pipeline(&cfg)?;
            let correction = out
                .metrics
                .as_ref()
                .map(serde_json::to_value)
                .transpose()?
                .unwrap_or_else(|| json!("n/a"));
            write_json(
                None,
                &json!({
                    "corrections": out.corrections_path,
                    "targets": out.corrections.len(),
                    "substituted": out.corrections.iter().filter(|r| r.substitute().is_some()).count(),
                    "tau": out.tau,
                    "chosen_tau": out.sweep.as_ref().and_then(|s| s.chosen_tau),
                    "cached_stages": out.cache_hits,
                    "metrics": correction,
                }),
            )
        }
    }
}

fn method_name(m: &CandidateMethod) -> String {
    serde_json::to_value(m)
        .ok()
        .and_then(|v| v.get("method").and_then(|s| s.as_str().map(str::to_string)))
        .unwrap_or_else(|| "lookup".into())
}

/// Decisions read from a corrections file, matched to the targets in order.
fn decisions_from_file(p: &Path, like: &[CorrectionResult]) -> Result<Vec<CorrectionResult>> {
    let decisions = read_decisions(open(p)?)?;
    if decisions.len() != like.len() {
        return Err(Error::Config(format!(
            "{} has {} decisions for {} targets",
            p.display(),
            decisions.len(),
            like.len()
        )));
    }
    decisions
        .into_iter()
        .zip(like)
        .map(|((s, pr, _, sub), r)| {
            if s != r.target.s || pr != r.target.p {
                return Err(Error::Config(format!("{}: decision for <{s}, {pr}> out of order", p.display())));
            }
            Ok(CorrectionResult {
                target: r.target.clone(),
                decision: sub.map(Decision::Substitute).unwrap_or(Decision::None),
                survivors: Vec::new(),
                tau: r.tau,
            })
        })
        .collect()
}

fn error_record(e: &Error) -> serde_json::Value {
    let mut rec = json!({ "error": e.kind(), "message": e.to_string() });
    let mut cause = e;
    while let Error::Stage { stage, target, source } = cause {
        if rec.get("stage").is_none() {
            rec["stage"] = json!(stage);
            rec["target"] = json!(target);
        }
        cause = source;
    }
    if !std::ptr::eq(cause, e) {
        rec["cause"] = json!(cause.kind());
    }
    rec
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_errors_name_the_cause() {
        let e = Error::SingleClass.in_stage("model", Some("t1".into()));
        let rec = error_record(&e);
        assert_eq!(rec["error"], "stage");
        assert_eq!(rec["stage"], "model");
        assert_eq!(rec["target"], "t1");
        assert_eq!(rec["cause"], "single_class");
        assert!(error_record(&Error::Empty("x")).get("cause").is_none());
    }

    #[test]
    fn enum_names_parse() {
        assert_eq!(named::<LinkModel>("m", "distmult").unwrap(), LinkModel::DistMult);
        assert_eq!(named::<ConsistencyModel>("m", "car+ran").unwrap(), ConsistencyModel::CarRan);
        assert!(named::<ExtractMode>("m", "nope").is_err());
    }
}
