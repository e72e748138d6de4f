//! Seeded template-grammar corpus with jointly generated AMR graphs.
//!
//! Every argument is introduced by a marker word that two roles may share
//! (`by` marks both Agent and Instrument, for instance). Which of the two
//! applies depends on the semantic class of the noun, and that class is
//! visible only through the word's identity. Labeled sentences draw their
//! nouns from a restricted part of the inventory, so a model trained on
//! them alone has to guess for unseen nouns. The AMR graph attaches each
//! argument to its trigger with a relation that identifies the role.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::{ArgumentAnnotation, EventMention, LabeledSentence, TriggerAnnotation};
use crate::amr::{parse_penman, to_penman, AmrEdge, AmrGraph, AmrNode, RelationGroup, TokenSpan};
use crate::error::{Error, Result};
use crate::event::LabelSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_event_types: usize,
    pub n_roles: usize,
    /// Size of the noun inventory.
    pub vocab_size: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_heldout: usize,
    pub n_test: usize,
    /// Probability that a clause expresses an event.
    pub event_rate: f64,
    /// Fraction of each noun class that may appear in labeled sentences.
    pub labeled_vocab_fraction: f64,
    pub amr_edge_noise_rate: f64,
    /// Fraction of pseudo-label roles the self-training loops corrupt;
    /// copied into `StfConfig::label_noise_rate` by the run config.
    pub label_noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_event_types: 4,
            n_roles: 6,
            vocab_size: 400,
            n_labeled: 900,
            n_unlabeled: 2800,
            n_heldout: 100,
            n_test: 300,
            event_rate: 0.25,
            labeled_vocab_fraction: 0.3,
            amr_edge_noise_rate: 0.0,
            label_noise_rate: 0.0,
            seed: 13,
        }
    }
}

pub const MAX_ROLES: usize = 8;
const TRIGGERS_PER_TYPE: usize = 3;
const N_FILLER_VERBS: usize = 8;
const N_ADJECTIVES: usize = 20;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_event_types == 0 {
            return bad("n_event_types must be positive");
        }
        if !(2..=MAX_ROLES).contains(&self.n_roles) {
            return bad("n_roles must be between 2 and 8");
        }
        if self.vocab_size < 4 * 2 {
            return bad("vocab_size must be at least 8");
        }
        if self.n_labeled == 0 {
            return bad("n_labeled must be positive");
        }
        for (name, v) in [
            ("event_rate", self.event_rate),
            ("labeled_vocab_fraction", self.labeled_vocab_fraction),
            ("amr_edge_noise_rate", self.amr_edge_noise_rate),
            ("label_noise_rate", self.label_noise_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.labeled_vocab_fraction == 0.0 {
            return bad("labeled_vocab_fraction must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NounClass {
    Person,
    Tool,
    Location,
    Period,
}

const CLASSES: [NounClass; 4] = [
    NounClass::Person,
    NounClass::Tool,
    NounClass::Location,
    NounClass::Period,
];

struct RoleSpec {
    name: &'static str,
    relation: &'static str,
    marker: Option<&'static str>,
    classes: &'static [NounClass],
}

const ROLES: [RoleSpec; MAX_ROLES] = [
    RoleSpec {
        name: "Agent",
        relation: ":ARG0",
        marker: Some("by"),
        classes: &[NounClass::Person],
    },
    RoleSpec {
        name: "Instrument",
        relation: ":instrument",
        marker: Some("by"),
        classes: &[NounClass::Tool],
    },
    RoleSpec {
        name: "Place",
        relation: ":location",
        marker: Some("at"),
        classes: &[NounClass::Location],
    },
    RoleSpec {
        name: "Time",
        relation: ":time",
        marker: Some("at"),
        classes: &[NounClass::Period],
    },
    RoleSpec {
        name: "Recipient",
        relation: ":ARG2",
        marker: Some("to"),
        classes: &[NounClass::Person],
    },
    RoleSpec {
        name: "Destination",
        relation: ":destination",
        marker: Some("to"),
        classes: &[NounClass::Location],
    },
    RoleSpec {
        name: "Patient",
        relation: ":ARG1",
        marker: None,
        classes: &[NounClass::Person, NounClass::Tool],
    },
    RoleSpec {
        name: "Source",
        relation: ":source",
        marker: Some("from"),
        classes: &[NounClass::Location],
    },
];

const TYPE_NAMES: [&str; 8] = [
    "Conflict:Attack",
    "Life:Die",
    "Movement:Transport",
    "Transaction:Transfer-Money",
    "Contact:Meet",
    "Justice:Arrest-Jail",
    "Life:Injure",
    "Personnel:Elect",
];

/// The relation group the generator attaches role `name` with.
pub fn role_relation_group(name: &str) -> Option<RelationGroup> {
    ROLES
        .iter()
        .find(|r| r.name == name)
        .map(|r| crate::amr::group_relation(r.relation))
}

/// A predicted `(trigger, argument, role)` with its ground-truth
/// correctness, for scorer-agreement evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedPrediction {
    pub sent_id: String,
    pub trigger: TokenSpan,
    pub event_type: String,
    pub argument: TokenSpan,
    pub role: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub schema: LabelSchema,
    pub labeled: Vec<LabeledSentence>,
    /// Unlabeled pool with annotations stripped.
    pub unlabeled: Vec<LabeledSentence>,
    /// Annotations of the unlabeled pool, for diagnostics and oracles only.
    pub unlabeled_gold: Vec<LabeledSentence>,
    pub heldout: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
    pub amr: BTreeMap<String, AmrGraph>,
    pub gold_flags: Vec<FlaggedPrediction>,
}

struct Lexicon {
    nouns: Vec<(String, NounClass)>,
    /// Noun indices per class; the first `labeled_cut[c]` may appear in
    /// labeled sentences.
    by_class: Vec<Vec<usize>>,
    labeled_cut: Vec<usize>,
    allowed_roles: Vec<Vec<usize>>,
}

impl Lexicon {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut classes: Vec<NounClass> = (0..cfg.vocab_size).map(|i| CLASSES[i % 4]).collect();
        classes.shuffle(rng);
        let nouns: Vec<(String, NounClass)> = classes
            .into_iter()
            .enumerate()
            .map(|(i, c)| (format!("n{i:03}"), c))
            .collect();
        let by_class: Vec<Vec<usize>> = CLASSES
            .iter()
            .map(|c| (0..nouns.len()).filter(|&i| nouns[i].1 == *c).collect())
            .collect();
        let labeled_cut = by_class
            .iter()
            .map(|v: &Vec<usize>| ((v.len() as f64 * cfg.labeled_vocab_fraction).ceil() as usize).clamp(1, v.len()))
            .collect();
        let per_type = cfg.n_roles.min(4);
        let allowed_roles = (0..cfg.n_event_types)
            .map(|_| {
                let mut r: Vec<usize> = (0..cfg.n_roles).collect();
                r.shuffle(rng);
                r.truncate(per_type);
                r.sort_unstable();
                r
            })
            .collect();
        Self {
            nouns,
            by_class,
            labeled_cut,
            allowed_roles,
        }
    }

    fn noun(&self, class: NounClass, restricted: bool, rng: &mut ChaCha8Rng) -> usize {
        let c = CLASSES.iter().position(|x| *x == class).expect("known class");
        let pool = &self.by_class[c];
        let n = if restricted { self.labeled_cut[c] } else { pool.len() };
        pool[rng.gen_range(0..n)]
    }
}

struct Builder {
    tokens: Vec<String>,
    nodes: Vec<AmrNode>,
    edges: Vec<AmrEdge>,
    events: Vec<EventMention>,
}

impl Builder {
    fn push_token(&mut self, t: impl Into<String>) -> usize {
        self.tokens.push(t.into());
        self.tokens.len() - 1
    }

    fn push_node(&mut self, id: String, concept: String, at: usize) {
        self.nodes.push(AmrNode {
            id,
            concept,
            constant: false,
            quoted: false,
            token_span: Some(TokenSpan::new(at, at + 1)),
        });
    }

    /// Optional determiner and modifier, then the noun; returns the noun's
    /// token index.
    fn noun_phrase(&mut self, var: &str, word: &str, rng: &mut ChaCha8Rng) -> usize {
        if rng.gen_bool(0.5) {
            self.push_token("the");
        }
        let adj = if rng.gen_bool(0.3) {
            let a = format!("adj{:02}", rng.gen_range(0..N_ADJECTIVES));
            Some((self.push_token(a.clone()), a))
        } else {
            None
        };
        let at = self.push_token(word);
        self.push_node(var.to_string(), word.to_string(), at);
        if let Some((pos, a)) = adj {
            let mid = format!("{var}m");
            self.push_node(mid.clone(), a, pos);
            self.edges.push(AmrEdge::new(var, mid, ":mod"));
        }
        at
    }
}

fn clause(
    b: &mut Builder,
    c: usize,
    event_type: Option<usize>,
    cfg: &SynthConfig,
    lex: &Lexicon,
    restricted: bool,
    rng: &mut ChaCha8Rng,
) -> String {
    let head = format!("e{c}");
    let (verb, roles) = match event_type {
        Some(t) => {
            let verb = format!("ev{t}_{}", rng.gen_range(0..TRIGGERS_PER_TYPE));
            let allowed = &lex.allowed_roles[t];
            let k = rng.gen_range(1..=allowed.len().min(3));
            let mut roles: Vec<usize> = allowed.choose_multiple(rng, k).copied().collect();
            roles.sort_unstable();
            (verb, roles)
        }
        None => {
            let verb = format!("do{}", rng.gen_range(0..N_FILLER_VERBS));
            let k = rng.gen_range(1..=2);
            let mut roles: Vec<usize> = (0..cfg.n_roles).collect();
            roles.shuffle(rng);
            roles.truncate(k);
            (verb, roles)
        }
    };
    let at = b.push_token(verb.clone());
    b.push_node(head.clone(), format!("{verb}-01"), at);

    // The unmarked role sits right after the verb; marked ones follow in
    // random order.
    let mut order: Vec<usize> = roles.iter().copied().filter(|&r| ROLES[r].marker.is_none()).collect();
    let mut marked: Vec<usize> = roles.iter().copied().filter(|&r| ROLES[r].marker.is_some()).collect();
    marked.shuffle(rng);
    order.extend(marked);

    let mut args = Vec::new();
    for (k, &r) in order.iter().enumerate() {
        let spec = &ROLES[r];
        if let Some(m) = spec.marker {
            b.push_token(m);
        }
        let class = *spec.classes.choose(rng).expect("non-empty");
        let word = lex.nouns[lex.noun(class, restricted, rng)].0.clone();
        let var = format!("x{c}{k}");
        let pos = b.noun_phrase(&var, &word, rng);
        b.edges.push(AmrEdge::new(head.clone(), var, spec.relation));
        args.push(ArgumentAnnotation {
            start: pos,
            end: pos + 1,
            role: spec.name.to_string(),
        });
    }
    if let Some(t) = event_type {
        b.events.push(EventMention {
            trigger: TriggerAnnotation {
                start: at,
                end: at + 1,
                event_type: type_name(t),
            },
            args,
        });
    }
    head
}

fn type_name(t: usize) -> String {
    TYPE_NAMES
        .get(t)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("Type{t}"))
}

fn sentence(
    id: String,
    cfg: &SynthConfig,
    lex: &Lexicon,
    restricted: bool,
    rng: &mut ChaCha8Rng,
) -> (LabeledSentence, AmrGraph) {
    let mut b = Builder {
        tokens: Vec::new(),
        nodes: Vec::new(),
        edges: Vec::new(),
        events: Vec::new(),
    };
    let n_clauses = if rng.gen_bool(0.2) { 2 } else { 1 };
    let mut heads = Vec::new();
    let mut and_at = None;
    for c in 0..n_clauses {
        if c > 0 {
            and_at = Some(b.push_token("and"));
        }
        let ty = rng
            .gen_bool(cfg.event_rate)
            .then(|| rng.gen_range(0..cfg.n_event_types));
        heads.push(clause(&mut b, c, ty, cfg, lex, restricted, rng));
    }
    b.push_token(".");
    let root = if heads.len() == 1 {
        heads[0].clone()
    } else {
        b.nodes.push(AmrNode {
            id: "a".into(),
            concept: "and".into(),
            constant: false,
            quoted: false,
            token_span: and_at.map(|i| TokenSpan::new(i, i + 1)),
        });
        for (k, h) in heads.iter().enumerate() {
            b.edges.push(AmrEdge::new("a", h.clone(), &format!(":op{}", k + 1)));
        }
        "a".to_string()
    };
    let graph = canonical_order(&AmrGraph::new(root, b.nodes, b.edges).expect("generator builds valid graphs"));
    let s = LabeledSentence {
        sent_id: id,
        tokens: b.tokens,
        events: b.events,
    };
    (s, graph)
}

/// The role sharing a marker with `role`, if it is in the schema.
fn partner(role: usize, n_roles: usize) -> Option<usize> {
    let m = ROLES[role].marker?;
    (0..n_roles).find(|&r| r != role && ROLES[r].marker == Some(m))
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lex = Lexicon::new(cfg, &mut rng);
    let schema = LabelSchema::new(
        (0..cfg.n_event_types).map(type_name).collect(),
        ROLES[..cfg.n_roles].iter().map(|r| r.name.to_string()).collect(),
    )?;

    let mut amr = BTreeMap::new();
    let mut split = |prefix: &str, n: usize, restricted: bool, rng: &mut ChaCha8Rng| {
        (0..n)
            .map(|i| {
                let (s, g) = sentence(format!("{prefix}{i:05}"), cfg, &lex, restricted, rng);
                amr.insert(s.sent_id.clone(), g);
                s
            })
            .collect::<Vec<_>>()
    };
    let labeled = split("L", cfg.n_labeled, true, &mut rng);
    let unlabeled_gold = split("U", cfg.n_unlabeled, false, &mut rng);
    let heldout = split("H", cfg.n_heldout, false, &mut rng);
    let test = split("T", cfg.n_test, false, &mut rng);

    let mut gold_flags = Vec::new();
    for s in &heldout {
        for ev in &s.events {
            for a in &ev.args {
                let gold = schema.role_id(&a.role)? - 1;
                let correct = rng.gen_bool(0.5);
                let role = if correct {
                    gold
                } else {
                    partner(gold, cfg.n_roles).unwrap_or_else(|| {
                        let others: Vec<usize> = (0..cfg.n_roles).filter(|&r| r != gold).collect();
                        *others.choose(&mut rng).expect("at least two roles")
                    })
                };
                gold_flags.push(FlaggedPrediction {
                    sent_id: s.sent_id.clone(),
                    trigger: ev.trigger_span(),
                    event_type: ev.trigger.event_type.clone(),
                    argument: a.span(),
                    role: ROLES[role].name.to_string(),
                    correct,
                });
            }
        }
    }

    if cfg.amr_edge_noise_rate > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_a3a0_0000_0001);
        for g in amr.values_mut() {
            *g = inject_amr_noise(g, cfg.amr_edge_noise_rate, &mut noise_rng)?;
        }
    }

    let unlabeled = unlabeled_gold
        .iter()
        .map(|s| LabeledSentence {
            events: Vec::new(),
            ..s.clone()
        })
        .collect();
    Ok(SyntheticCorpus {
        schema,
        labeled,
        unlabeled,
        unlabeled_gold,
        heldout,
        test,
        amr,
        gold_flags,
    })
}

/// Reorders nodes and edges as a PENMAN round trip would, so generated
/// graphs compare equal to their saved and reloaded copies.
fn canonical_order(g: &AmrGraph) -> AmrGraph {
    let mut out = parse_penman(&to_penman(g)).expect("generated graphs serialise");
    for n in g.nodes() {
        if let Some(span) = n.token_span {
            out.set_alignment(&n.id, span).expect("node exists");
        }
    }
    out
}

/// Relabels each edge, with probability `rate`, to a uniformly drawn
/// different relation group. Endpoints and direction are kept; the raw
/// relation is rewritten to a name of the new group so the graph
/// serialises consistently.
pub fn inject_amr_noise<R: Rng>(graph: &AmrGraph, rate: f64, rng: &mut R) -> Result<AmrGraph> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::OutOfRange(format!("noise rate {rate}")));
    }
    let mut out = graph.clone();
    for e in out.edges_mut() {
        if rate > 0.0 && rng.gen::<f64>() < rate {
            let k = rng.gen_range(0..RelationGroup::COUNT - 1);
            let k = if k >= e.group.index() { k + 1 } else { k };
            let g = RelationGroup::from_index(k).expect("in range");
            e.group = g;
            e.raw_relation = g.canonical_relation().to_string();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small() -> SynthConfig {
        SynthConfig {
            n_labeled: 200,
            n_unlabeled: 50,
            n_heldout: 40,
            n_test: 20,
            event_rate: 0.5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn sizes_and_empty_pools() {
        let cfg = SynthConfig {
            n_labeled: 10,
            n_unlabeled: 0,
            n_heldout: 0,
            n_test: 0,
            ..SynthConfig::default()
        };
        let c = generate_synthetic(&cfg).unwrap();
        assert_eq!(c.labeled.len(), 10);
        assert!(c.unlabeled.is_empty() && c.heldout.is_empty() && c.test.is_empty());
        assert_eq!(c.amr.len(), 10);
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            SynthConfig { n_roles: 1, ..small() },
            SynthConfig { n_roles: 9, ..small() },
            SynthConfig { amr_edge_noise_rate: 1.5, ..small() },
            SynthConfig { n_labeled: 0, ..small() },
        ] {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthConfig { seed: 14, ..small() }).unwrap();
        assert_ne!(a.labeled, c.labeled);
    }

    #[test]
    fn sentences_validate_and_args_connect() {
        let c = generate_synthetic(&small()).unwrap();
        for s in c.labeled.iter().chain(&c.unlabeled_gold).chain(&c.heldout) {
            s.validate().unwrap();
            let g = &c.amr[&s.sent_id];
            for ev in &s.events {
                let spans = [ev.trigger_span()];
                let t = g.align_nodes(s.tokens.len(), &spans)[0].clone().unwrap();
                for a in &ev.args {
                    let n = g.align_nodes(s.tokens.len(), &[a.span()])[0].clone().unwrap();
                    let p = g.shortest_path(&t, &n).unwrap();
                    assert!(!p.synthetic_fallback);
                }
            }
        }
    }

    #[test]
    fn first_edge_stump_predicts_role() {
        let c = generate_synthetic(&small()).unwrap();
        let mut pairs = Vec::new();
        for s in &c.labeled {
            let g = &c.amr[&s.sent_id];
            for ev in &s.events {
                let t = g.align_nodes(s.tokens.len(), &[ev.trigger_span()])[0].clone().unwrap();
                for a in &ev.args {
                    let n = g.align_nodes(s.tokens.len(), &[a.span()])[0].clone().unwrap();
                    pairs.push((g.shortest_path(&t, &n).unwrap().first_group(), a.role.clone()));
                }
            }
        }
        // majority role per group
        let mut counts: HashMap<(RelationGroup, &str), usize> = HashMap::new();
        for (g, r) in &pairs {
            *counts.entry((*g, r.as_str())).or_default() += 1;
        }
        let mut best: HashMap<RelationGroup, (&str, usize)> = HashMap::new();
        for (&(g, r), &n) in &counts {
            let e = best.entry(g).or_insert((r, 0));
            if n > e.1 || (n == e.1 && r < e.0) {
                *e = (r, n);
            }
        }
        let correct = pairs.iter().filter(|(g, r)| best[g].0 == r).count();
        assert!(pairs.len() > 50);
        assert!(correct as f64 / pairs.len() as f64 >= 0.9);
    }

    #[test]
    fn labeled_nouns_are_restricted() {
        let c = generate_synthetic(&small()).unwrap();
        let labeled: std::collections::HashSet<&String> =
            c.labeled.iter().flat_map(|s| &s.tokens).collect();
        let unseen = c
            .unlabeled
            .iter()
            .flat_map(|s| &s.tokens)
            .filter(|t| t.starts_with('n') && !labeled.contains(t))
            .count();
        assert!(unseen > 0);
    }

    #[test]
    fn flags_cover_heldout_arguments() {
        let c = generate_synthetic(&small()).unwrap();
        let n: usize = c.heldout.iter().map(|s| s.n_arguments()).sum();
        assert_eq!(c.gold_flags.len(), n);
        for f in &c.gold_flags {
            let s = c.heldout.iter().find(|s| s.sent_id == f.sent_id).unwrap();
            let gold = s
                .events
                .iter()
                .find(|e| e.trigger_span() == f.trigger)
                .and_then(|e| e.args.iter().find(|a| a.span() == f.argument))
                .unwrap();
            assert_eq!(f.correct, gold.role == f.role);
        }
    }

    #[test]
    fn noise_rates() {
        let c = generate_synthetic(&small()).unwrap();
        let g = c.amr.values().next().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(&inject_amr_noise(g, 0.0, &mut rng).unwrap(), g);
        let all = inject_amr_noise(g, 1.0, &mut rng).unwrap();
        for (a, b) in all.edges().iter().zip(g.edges()) {
            assert_ne!(a.group, b.group);
            assert_eq!((&a.src, &a.dst), (&b.src, &b.dst));
        }
        assert!(matches!(inject_amr_noise(g, -0.1, &mut rng), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn noise_frequency() {
        let nodes: Vec<AmrNode> = (0..=10_000)
            .map(|i| AmrNode {
                id: format!("v{i}"),
                concept: "c".into(),
                constant: false,
                quoted: false,
                token_span: None,
            })
            .collect();
        let edges = (1..=10_000)
            .map(|i| AmrEdge::new("v0", format!("v{i}"), ":ARG0"))
            .collect();
        let g = AmrGraph::new("v0", nodes, edges).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = inject_amr_noise(&g, 0.3, &mut rng).unwrap();
        let changed = n
            .edges()
            .iter()
            .filter(|e| e.group != RelationGroup::Arg0)
            .count();
        assert!((changed as f64 / 10_000.0 - 0.3).abs() <= 0.02);
    }
}
