//! Seeded synthetic knowledge bases with corrupted target assertions.
//!
//! The generated world has people, settlements, clubs, universities, books
//! and films. Clubs and universities are named after settlements and people
//! share surnames, so many labels overlap lexically. Targets are made by
//! corrupting true assertions, either into a literal mention of the right
//! object or into a swap for a lexically confusable entity, and by adding
//! literals that have no valid entity substitute.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{write_kb, write_labels, KbBuilder, KnowledgeBase, Term, Triple};
use crate::relate::{write_targets, GroundTruth, StopWords, TargetAssertion};
use crate::subgraph::Edge;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub entities: usize,
    /// Number of properties, 2 to 8; at least two are functional.
    pub properties: usize,
    /// 2 or 3; depth 3 adds an intermediate Settlement class.
    pub class_depth: usize,
    /// Share of literal corruptions that use a variant mention instead of
    /// the full label.
    pub confusable_rate: f64,
    /// Share of entity-ground-truth targets made by swapping the object.
    pub swap_rate: f64,
    pub entity_targets: usize,
    pub empty_targets: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            entities: 500,
            properties: 8,
            class_depth: 3,
            confusable_rate: 0.3,
            swap_rate: 0.4,
            entity_targets: 40,
            empty_targets: 20,
        }
    }
}

/// Property order; a configuration with `n` properties uses the first `n`.
pub const SYNTHETIC_PROPERTIES: [&str; 8] = [
    "bornIn",
    "playsFor",
    "locatedIn",
    "worksAt",
    "author",
    "directedBy",
    "knows",
    "hasName",
];

const SYLLABLES: [&str; 30] = [
    "al", "der", "bri", "ton", "ka", "mor", "vel", "sen", "dra", "lin", "tho", "rag", "pel", "ush", "can", "fer",
    "gol", "hai", "jur", "ken", "lom", "nar", "ost", "pri", "quel", "ros", "sta", "tiv", "wen", "zor",
];
const CLUB_SUFFIX: [&str; 3] = ["United", "Rovers", "Athletic"];
const TITLE_WORDS: [&str; 12] = [
    "Silent", "Winter", "Harbour", "Glass", "Crimson", "Hollow", "Iron", "Paper", "Distant", "Golden", "Broken", "Quiet",
];
const TITLE_NOUNS: [&str; 10] = ["Garden", "Letters", "Road", "Tide", "Empire", "Lantern", "Season", "Mirror", "Voyage", "Orchard"];

#[derive(Clone, Debug)]
pub struct SyntheticCase {
    pub kb: KnowledgeBase,
    pub targets: Vec<TargetAssertion>,
}

impl SyntheticCase {
    /// Writes `kb.tsv` (with type and subclass lines), `labels.tsv` and
    /// `targets.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::io(p, e))
        };
        let mut w = open("kb.tsv")?;
        write_kb(&mut w, &self.kb).map_err(|e| Error::io(dir.join("kb.tsv"), e))?;
        w.flush().map_err(|e| Error::io(dir.join("kb.tsv"), e))?;
        let mut w = open("labels.tsv")?;
        write_labels(&mut w, &self.kb).map_err(|e| Error::io(dir.join("labels.tsv"), e))?;
        w.flush().map_err(|e| Error::io(dir.join("labels.tsv"), e))?;
        let mut w = open("targets.jsonl")?;
        write_targets(&mut w, &self.targets)?;
        w.flush().map_err(|e| Error::io(dir.join("targets.jsonl"), e))?;
        Ok(())
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Unique pseudo-words built from syllables.
fn words<R: Rng>(rng: &mut R, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let stop = StopWords::default();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.gen_range(2..=3);
        let w: String = (0..len).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        if stop.contains(&w) || !taken.insert(w.clone()) {
            continue;
        }
        out.push(capitalize(&w));
    }
    out
}

struct World {
    b: KbBuilder,
    labels: BTreeMap<String, String>,
    class_of: BTreeMap<String, &'static str>,
    facts: BTreeSet<Edge>,
    literals: Vec<Triple>,
}

impl World {
    fn entity(&mut self, id: String, label: String, class: &'static str) -> String {
        self.b.add_label(id.clone(), label.clone());
        self.b.add_type(id.clone(), class);
        self.labels.insert(id.clone(), label);
        self.class_of.insert(id.clone(), class);
        id
    }
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &'a [String]) -> &'a String {
    &xs[rng.gen_range(0..xs.len())]
}

/// Builds a knowledge base and targets; deterministic in `seed`.
pub fn generate_synthetic_case(cfg: &GenConfig, seed: u64) -> Result<SyntheticCase> {
    if !(2..=8).contains(&cfg.properties) {
        return Err(Error::Config("synthetic property count must be between 2 and 8".into()));
    }
    if !(2..=3).contains(&cfg.class_depth) {
        return Err(Error::Config("synthetic class depth must be 2 or 3".into()));
    }
    if cfg.entities < 100 {
        return Err(Error::Config("synthetic knowledge base needs at least 100 entities".into()));
    }
    for (name, r) in [("confusable_rate", cfg.confusable_rate), ("swap_rate", cfg.swap_rate)] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Config(format!("{name} must lie in [0, 1]")));
        }
    }
    let props: BTreeSet<&str> = SYNTHETIC_PROPERTIES[..cfg.properties].iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = World {
        b: KbBuilder::new(),
        labels: BTreeMap::new(),
        class_of: BTreeMap::new(),
        facts: BTreeSet::new(),
        literals: Vec::new(),
    };

    let settlement_parent = if cfg.class_depth == 3 {
        w.b.add_subclass("Settlement", "Place");
        "Settlement"
    } else {
        "Place"
    };
    w.b.add_subclass("City", settlement_parent)
        .add_subclass("Town", settlement_parent)
        .add_subclass("Athlete", "Person")
        .add_subclass("Scientist", "Person")
        .add_subclass("Club", "Organisation")
        .add_subclass("University", "Organisation")
        .add_subclass("Book", "Work")
        .add_subclass("Film", "Work");

    let n = cfg.entities;
    let n_settle = n * 16 / 100;
    let n_club = n * 8 / 100;
    let n_uni = n * 4 / 100;
    let n_book = n * 6 / 100;
    let n_film = n * 6 / 100;
    let n_person = n - n_settle - n_club - n_uni - n_book - n_film;

    let mut taken = BTreeSet::new();
    let stems = words(&mut rng, n_settle, &mut taken);
    let surnames = words(&mut rng, (n_person / 5).max(2), &mut taken);
    let given = words(&mut rng, (n_person / 4).max(2), &mut taken);
    let novel = words(&mut rng, cfg.empty_targets + 1, &mut taken);

    let mut settlements = Vec::new();
    let mut cities = Vec::new();
    for (i, stem) in stems.iter().enumerate() {
        let class = if i % 2 == 0 { "City" } else { "Town" };
        let id = w.entity(format!("place_{i:03}"), stem.clone(), class);
        if class == "City" {
            cities.push(id.clone());
        }
        settlements.push(id);
    }
    let mut home: BTreeMap<String, String> = BTreeMap::new();
    let mut clubs = Vec::new();
    for i in 0..n_club {
        let at = settlements[i % n_settle].clone();
        let label = format!("{} {}", w.labels[&at], CLUB_SUFFIX[i % CLUB_SUFFIX.len()]);
        let id = w.entity(format!("club_{i:03}"), label, "Club");
        home.insert(id.clone(), at);
        clubs.push(id);
    }
    let mut unis = Vec::new();
    for i in 0..n_uni {
        let at = settlements[(i * 3 + 1) % n_settle].clone();
        let label = format!("{} University", w.labels[&at]);
        let id = w.entity(format!("uni_{i:03}"), label, "University");
        home.insert(id.clone(), at);
        unis.push(id);
    }
    let mut athletes = Vec::new();
    let mut scientists = Vec::new();
    let mut names = BTreeSet::new();
    for i in 0..n_person {
        let label = loop {
            let l = format!("{} {}", pick(&mut rng, &given), pick(&mut rng, &surnames));
            if names.insert(l.clone()) {
                break l;
            }
        };
        if i % 20 < 11 {
            athletes.push(w.entity(format!("person_{i:03}"), label, "Athlete"));
        } else {
            scientists.push(w.entity(format!("person_{i:03}"), label, "Scientist"));
        }
    }
    let mut titles = BTreeSet::new();
    let mut title = |rng: &mut ChaCha8Rng| loop {
        let t = format!(
            "The {} {}",
            TITLE_WORDS.choose(rng).unwrap(),
            TITLE_NOUNS.choose(rng).unwrap()
        );
        let t = if titles.contains(&t) {
            format!("{t} {}", titles.len())
        } else {
            t
        };
        if titles.insert(t.clone()) {
            return t;
        }
    };
    let books: Vec<String> = (0..n_book)
        .map(|i| {
            let t = title(&mut rng);
            w.entity(format!("book_{i:03}"), t, "Book")
        })
        .collect();
    let films: Vec<String> = (0..n_film)
        .map(|i| {
            let t = title(&mut rng);
            w.entity(format!("film_{i:03}"), t, "Film")
        })
        .collect();

    let fact = |w: &mut World, s: &str, p: &str, o: &str| {
        if props.contains(p) {
            w.facts.insert(Edge::new(s, p, o));
        }
    };
    let mut team: BTreeMap<String, String> = BTreeMap::new();
    for a in &athletes {
        let c = pick(&mut rng, &clubs).clone();
        fact(&mut w, a, "playsFor", &c);
        team.insert(a.clone(), c);
    }
    let mut employer: BTreeMap<String, String> = BTreeMap::new();
    for s in &scientists {
        let u = pick(&mut rng, &unis).clone();
        fact(&mut w, s, "worksAt", &u);
        if rng.gen_bool(0.3) {
            let v = pick(&mut rng, &unis).clone();
            fact(&mut w, s, "worksAt", &v);
        }
        employer.insert(s.clone(), u);
    }
    for (org, at) in &home {
        fact(&mut w, org, "locatedIn", at);
    }
    let towns: Vec<String> = settlements.iter().filter(|s| w.class_of[*s] == "Town").cloned().collect();
    for t in &towns {
        let c = pick(&mut rng, &cities).clone();
        fact(&mut w, t, "locatedIn", &c);
    }
    for p in athletes.iter().chain(&scientists) {
        let near = team.get(p).or_else(|| employer.get(p)).map(|o| home[o].clone());
        let born = match near {
            Some(h) if rng.gen_bool(0.6) => h,
            _ => pick(&mut rng, &settlements).clone(),
        };
        fact(&mut w, p, "bornIn", &born);
    }
    let people: Vec<String> = athletes.iter().chain(&scientists).cloned().collect();
    for p in &people {
        let peers: Vec<&String> = people
            .iter()
            .filter(|q| *q != p && (team.get(*q) == team.get(p) || employer.get(*q) == employer.get(p)))
            .collect();
        for _ in 0..rng.gen_range(1..=3) {
            let q = if !peers.is_empty() && rng.gen_bool(0.7) {
                (*peers.choose(&mut rng).unwrap()).clone()
            } else {
                pick(&mut rng, &people).clone()
            };
            if &q != p {
                fact(&mut w, p, "knows", &q);
            }
        }
    }
    for b in &books {
        let a = pick(&mut rng, &scientists).clone();
        fact(&mut w, b, "author", &a);
    }
    for f in &films {
        let d = pick(&mut rng, &people).clone();
        fact(&mut w, f, "directedBy", &d);
    }
    let has_name = props.contains("hasName");
    if has_name {
        for p in &people {
            let label = &w.labels[p];
            let (first, last) = label.split_once(' ').unwrap();
            let initial = capitalize(&SYLLABLES[rng.gen_range(0..SYLLABLES.len())][..1]);
            w.literals
                .push(Triple::literal(p.clone(), "hasName", format!("{first} {initial}. {last}")));
        }
    }

    let targets = corrupt_facts(&mut w, cfg, &novel, &mut rng)?;
    for e in &w.facts {
        w.b.add_triple(e.to_triple());
    }
    for t in std::mem::take(&mut w.literals) {
        w.b.add_triple(t);
    }
    for t in &targets {
        w.b.add_triple(t.triple());
    }
    Ok(SyntheticCase {
        kb: w.b.build()?,
        targets,
    })
}

/// Entities sharing `e`'s stem but of another kind: clubs and universities
/// for a settlement, the settlement for a club or university. Empty for
/// other entities.
fn confusables(w: &World, e: &str) -> Vec<String> {
    let family = |c: &str| match c {
        "City" | "Town" => Some("Settlement"),
        "Club" => Some("Club"),
        "University" => Some("University"),
        _ => None,
    };
    let Some(own) = family(w.class_of[e]) else {
        return Vec::new();
    };
    let stem = w.labels[e].split(' ').next().unwrap_or_default();
    w.labels
        .iter()
        .filter(|(id, l)| {
            let f = family(w.class_of[id.as_str()]);
            let kind_ok = if own == "Settlement" {
                f.is_some_and(|f| f != own)
            } else {
                f == Some("Settlement")
            };
            kind_ok && l.split(' ').next() == Some(stem)
        })
        .map(|(id, _)| id.clone())
        .collect()
}

/// A variant mention of `e`'s label that is not itself a label: an
/// abbreviated club or university name, or an inverted person name.
fn partial_mention(w: &World, e: &str) -> Option<String> {
    let label = &w.labels[e];
    let stem = label.split(' ').next()?;
    match w.class_of[e] {
        "Club" => Some(format!("{stem} FC")),
        "University" => Some(format!("{stem} Univ")),
        "Athlete" | "Scientist" => label.split_once(' ').map(|(g, s)| format!("{s}, {g}")),
        _ => None,
    }
}

fn corrupt_facts(w: &mut World, cfg: &GenConfig, novel: &[String], rng: &mut ChaCha8Rng) -> Result<Vec<TargetAssertion>> {
    let object_facts: Vec<Edge> = w.facts.iter().filter(|e| e.p != "knows").cloned().collect();
    if cfg.entity_targets > object_facts.len() {
        return Err(Error::Config(format!(
            "{} entity-ground-truth corruptions requested but only {} assertions are eligible",
            cfg.entity_targets,
            object_facts.len()
        )));
    }
    let mut chosen = object_facts;
    chosen.shuffle(rng);
    let mut used_subjects = BTreeSet::new();
    chosen.retain(|e| used_subjects.insert((e.s.clone(), e.p.clone())));
    if cfg.entity_targets > chosen.len() {
        return Err(Error::Config("not enough distinct subjects to corrupt".into()));
    }
    let mut targets = Vec::new();
    for fact in chosen.into_iter().take(cfg.entity_targets) {
        w.facts.remove(&fact);
        let swap = rng.gen_bool(cfg.swap_rate);
        let gt = GroundTruth::Entity(fact.o.clone());
        let swapped = if swap {
            let mut c = confusables(w, &fact.o);
            c.retain(|x| !w.facts.contains(&Edge::new(fact.s.clone(), fact.p.clone(), x.clone())));
            c.choose(rng).cloned()
        } else {
            None
        };
        let o = match swapped {
            Some(x) => Term::entity(x),
            None => {
                let partial = rng.gen_bool(cfg.confusable_rate);
                let mention = partial
                    .then(|| partial_mention(w, &fact.o))
                    .flatten()
                    .unwrap_or_else(|| w.labels[&fact.o].clone());
                Term::literal(mention)
            }
        };
        targets.push(TargetAssertion::new(fact.s, fact.p, o, gt));
    }

    // literals with no valid entity substitute
    let name_literals: Vec<Triple> = w.literals.clone();
    let n_names = if name_literals.is_empty() {
        0
    } else {
        cfg.empty_targets / 2
    };
    if n_names > name_literals.len() {
        return Err(Error::Config("not enough name literals for empty targets".into()));
    }
    let mut names = name_literals;
    names.shuffle(rng);
    for t in names.into_iter().take(n_names) {
        w.literals.retain(|x| x != &t);
        targets.push(TargetAssertion::new(t.s, t.p, t.o, GroundTruth::Empty));
    }
    let mention_suffix = |p: &str| match p {
        "bornIn" | "locatedIn" => "Rovers",
        "playsFor" | "worksAt" => "Harbour",
        _ => "University",
    };
    let subjects: Vec<Edge> = w.facts.iter().filter(|e| e.p != "knows").cloned().collect();
    if cfg.empty_targets - n_names > subjects.len() {
        return Err(Error::Config("not enough assertions for empty targets".into()));
    }
    let mut picks = subjects;
    picks.shuffle(rng);
    let mut seen = targets.iter().map(|t| (t.s.clone(), t.p.clone())).collect::<BTreeSet<_>>();
    let mut made = 0;
    for e in picks {
        if made == cfg.empty_targets - n_names {
            break;
        }
        if !seen.insert((e.s.clone(), e.p.clone())) {
            continue;
        }
        // the subject's real object is unknown to the KB
        w.facts.remove(&e);
        let mention = format!("{} {}", novel[made], mention_suffix(&e.p));
        targets.push(TargetAssertion::new(e.s, e.p, Term::literal(mention), GroundTruth::Empty));
        made += 1;
    }
    if made < cfg.empty_targets - n_names {
        return Err(Error::Config("not enough distinct subjects for empty targets".into()));
    }
    Ok(targets)
}

/// A multi-relational graph with cluster structure for embedding checks.
#[derive(Clone, Debug)]
pub struct RelationalBenchmark {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub train: Vec<Edge>,
    pub test: Vec<Edge>,
    pub all: BTreeSet<Edge>,
}

/// Entities in `clusters` groups of `size`. Each cluster gets a distinct
/// `relations`-bit code; relation `j` links every member of a cluster whose
/// code has bit `j` clear to every member of the cluster with that bit set
/// and the other bits equal. Codes are redrawn until the pool holds
/// `triples` edges. `triples` edges are drawn from the pool and `test_share`
/// of them held out; `all` is the whole pool.
pub fn relational_benchmark(
    clusters: usize,
    size: usize,
    relations: usize,
    triples: usize,
    test_share: f64,
    seed: u64,
) -> Result<RelationalBenchmark> {
    if clusters < 2 || size == 0 || relations == 0 || relations >= usize::BITS as usize || clusters > 1 << relations {
        return Err(Error::Config(format!(
            "need 2 to 2^relations non-empty clusters, got {clusters} clusters for {relations} relations"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities: Vec<String> = (0..clusters * size).map(|i| format!("e{i:02}")).collect();
    let rels: Vec<String> = (0..relations).map(|r| format!("r{r}")).collect();
    let mut pool = Vec::new();
    for _ in 0..1000 {
        let mut codes: Vec<usize> = (0..1 << relations).collect();
        codes.shuffle(&mut rng);
        codes.truncate(clusters);
        let cluster_of: HashMap<usize, usize> = codes.iter().enumerate().map(|(c, &code)| (code, c)).collect();
        pool.clear();
        for (head, &code) in codes.iter().enumerate() {
            for (j, r) in rels.iter().enumerate() {
                let Some(&tail) = cluster_of.get(&(code | 1 << j)).filter(|_| code & 1 << j == 0) else {
                    continue;
                };
                for i in 0..size {
                    for k in 0..size {
                        pool.push(Edge::new(
                            entities[head * size + i].clone(),
                            r.clone(),
                            entities[tail * size + k].clone(),
                        ));
                    }
                }
            }
        }
        if pool.len() >= triples {
            break;
        }
    }
    if triples > pool.len() {
        return Err(Error::Config(format!("only {} triples available", pool.len())));
    }
    let all: BTreeSet<Edge> = pool.iter().cloned().collect();
    pool.shuffle(&mut rng);
    pool.truncate(triples);
    let n_test = ((triples as f64) * test_share).round() as usize;
    let test = pool[..n_test].to_vec();
    let train = pool[n_test..].to_vec();
    Ok(RelationalBenchmark {
        entities,
        relations: rels,
        all,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::LexicalIndex;
    use crate::relate::lookup_star;

    #[test]
    fn default_case_shape() {
        let case = generate_synthetic_case(&GenConfig::default(), 7).unwrap();
        let entity_gt = case
            .targets
            .iter()
            .filter(|t| matches!(t.ground_truth, GroundTruth::Entity(_)))
            .count();
        assert_eq!(entity_gt, 40);
        assert_eq!(case.targets.len(), 60);
        assert!(case.kb.entity_count() >= 500);
        let props: BTreeSet<&str> = case.kb.properties().collect();
        assert_eq!(props.len(), 8);
        for t in &case.targets {
            assert!(case.kb.contains(&t.triple()), "{}", t.id());
        }
    }

    #[test]
    fn zero_corruptions_give_no_targets() {
        let cfg = GenConfig {
            entity_targets: 0,
            empty_targets: 0,
            ..GenConfig::default()
        };
        assert!(generate_synthetic_case(&cfg, 1).unwrap().targets.is_empty());
    }

    #[test]
    fn inconsistent_config_is_rejected() {
        let cfg = GenConfig {
            entity_targets: 100_000,
            ..GenConfig::default()
        };
        assert!(generate_synthetic_case(&cfg, 1).is_err());
        let cfg = GenConfig {
            properties: 9,
            ..GenConfig::default()
        };
        assert!(generate_synthetic_case(&cfg, 1).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let dump = |seed| {
            let case = generate_synthetic_case(&GenConfig::default(), seed).unwrap();
            let mut buf = Vec::new();
            write_kb(&mut buf, &case.kb).unwrap();
            write_labels(&mut buf, &case.kb).unwrap();
            write_targets(&mut buf, &case.targets).unwrap();
            buf
        };
        assert_eq!(dump(3), dump(3));
        assert_ne!(dump(3), dump(4));
    }

    #[test]
    fn literal_targets_recall_their_ground_truth() {
        let case = generate_synthetic_case(&GenConfig::default(), 11).unwrap();
        let idx = LexicalIndex::build(&case.kb);
        let stop = StopWords::default();
        let k = case.kb.entity_count();
        for t in &case.targets {
            if let (Term::Literal(l), GroundTruth::Entity(gt)) = (&t.o, &t.ground_truth) {
                let found = lookup_star(&idx, l, k, &stop).unwrap();
                assert!(found.iter().any(|c| &c.entity == gt), "{l} misses {gt}");
            }
        }
    }

    #[test]
    fn relational_benchmark_shape() {
        let b = relational_benchmark(10, 5, 4, 300, 0.1, 1).unwrap();
        assert_eq!(b.entities.len(), 50);
        assert_eq!(b.train.len() + b.test.len(), 300);
        assert!(b.all.len() >= 300 && b.all.len().is_multiple_of(25));
        let heads: BTreeSet<(&str, &str)> = b.all.iter().map(|t| (t.s.as_str(), t.p.as_str())).collect();
        assert!(b.all.iter().all(|t| !heads.contains(&(t.o.as_str(), t.p.as_str()))));
        assert!(relational_benchmark(17, 5, 4, 10, 0.1, 1).is_err());
        assert!(relational_benchmark(4, 5, 2, 1000, 0.1, 1).is_err());
    }
}
