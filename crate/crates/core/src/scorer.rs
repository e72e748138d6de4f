//! Compatibility scorer over `[event type, AMR path, role]` sequences.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amr::{serialize_path, AmrGraph, RelationGroup, ScoringSequence, SeqElement, TokenSpan};
use crate::autograd::{Gradients, Graph, ParamId, ParamStore, Var};
use crate::corpus::LabeledSentence;
use crate::error::{Error, Result};
use crate::event::LabelSchema;
use crate::nn::{AttentionBlock, Encoder, Linear, Vocab};
use crate::optim::{OptimConfig, Optimizer};
use crate::tensor::{sigmoid, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub d_model: usize,
    /// Self-attention layers over the scoring sequence.
    pub layers: usize,
    /// Layers of the scorer's own sentence encoder.
    pub encoder_layers: usize,
    pub max_len: usize,
    pub max_seq_len: usize,
    pub use_position: bool,
    pub use_token_type: bool,
    /// `false` gives the path-free ablation.
    pub use_amr: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: OptimConfig,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            layers: 2,
            encoder_layers: 1,
            max_len: 64,
            max_seq_len: 32,
            use_position: true,
            use_token_type: true,
            use_amr: true,
            epochs: 20,
            batch_size: 16,
            optim: OptimConfig::default(),
            seed: 0,
        }
    }
}

pub const SCORER_ENCODER_PREFIX: &str = "encoder.";

const TT_NODE: usize = 0;
const TT_RELATION: usize = 1;
const TT_TYPE: usize = 2;
const TT_ROLE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringExample {
    pub sequence: ScoringSequence,
    pub tokens: Vec<String>,
    pub label: bool,
}

/// Builds the scorer input for one `(trigger, argument, role)` prediction.
///
/// With a graph, both spans are aligned to nodes and joined by their
/// shortest path. A span that aligns to no node stands in as a bare span
/// node linked through an `Others` edge, as for disconnected pairs. Without
/// a graph the path-free form is returned.
pub fn build_sequence(
    graph: Option<&AmrGraph>,
    n_tokens: usize,
    event_type: usize,
    trigger: TokenSpan,
    argument: TokenSpan,
    role: usize,
) -> Result<ScoringSequence> {
    trigger.check(n_tokens)?;
    argument.check(n_tokens)?;
    let Some(graph) = graph else {
        return Ok(ScoringSequence::without_path(event_type, trigger, argument, role));
    };
    let ids = graph.align_nodes(n_tokens, &[trigger, argument]);
    match (&ids[0], &ids[1]) {
        (Some(t), Some(a)) => Ok(serialize_path(event_type, &graph.shortest_path(t, a)?, role)),
        _ => {
            let node = |id: &Option<String>, span: TokenSpan, name: &str| match id {
                Some(id) => {
                    let n = graph.node(id).expect("aligned node exists");
                    SeqElement::Node {
                        id: n.id.clone(),
                        concept: n.concept.clone(),
                        span: n.token_span,
                    }
                }
                None => SeqElement::Node {
                    id: name.to_string(),
                    concept: name.to_string(),
                    span: Some(span),
                },
            };
            Ok(ScoringSequence {
                event_type,
                elements: vec![
                    node(&ids[0], trigger, "trigger"),
                    SeqElement::Edge(RelationGroup::Others),
                    node(&ids[1], argument, "argument"),
                ],
                role,
            })
        }
    }
}

/// Positive examples: every gold argument with its gold role.
pub fn gold_examples(
    sentences: &[LabeledSentence],
    schema: &LabelSchema,
    amr: Option<&BTreeMap<String, AmrGraph>>,
) -> Result<Vec<ScoringExample>> {
    let mut out = Vec::new();
    for s in sentences {
        let graph = match amr {
            Some(m) => Some(m.get(&s.sent_id).ok_or_else(|| Error::MissingAmr(s.sent_id.clone()))?),
            None => None,
        };
        for ev in &s.events {
            let t = schema.type_id(&ev.trigger.event_type)?;
            for a in &ev.args {
                let seq = build_sequence(
                    graph,
                    s.tokens.len(),
                    t,
                    ev.trigger_span(),
                    a.span(),
                    schema.role_id(&a.role)?,
                )?;
                out.push(ScoringExample {
                    sequence: seq,
                    tokens: s.tokens.clone(),
                    label: true,
                });
            }
        }
    }
    Ok(out)
}

/// One negative per positive, with the role replaced by a uniformly drawn
/// different named role.
pub fn make_negatives<R: Rng>(
    gold: &[ScoringExample],
    n_roles: usize,
    rng: &mut R,
) -> Result<Vec<ScoringExample>> {
    if n_roles < 2 {
        return Err(Error::DegenerateLabelSpace(format!(
            "{n_roles} argument role(s); role swapping needs at least 2"
        )));
    }
    Ok(gold
        .iter()
        .map(|ex| {
            let gold_role = ex.sequence.role;
            let choices: Vec<usize> = (1..=n_roles).filter(|&r| r != gold_role).collect();
            let role = *choices.choose(rng).expect("non-empty");
            ScoringExample {
                sequence: ex.sequence.with_role(role),
                tokens: ex.tokens.clone(),
                label: false,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerTrainReport {
    pub initial_loss: f64,
    /// Mean training BCE after each epoch.
    pub curve: Vec<f64>,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct CompatibilityScorer {
    pub schema: LabelSchema,
    pub vocab: Vocab,
    pub config: ScorerConfig,
    pub params: ParamStore,
    encoder: Encoder,
    rel: ParamId,
    tri: ParamId,
    arg: ParamId,
    pos: ParamId,
    token_type: ParamId,
    blocks: Vec<AttentionBlock>,
    out: Linear,
}

impl CompatibilityScorer {
    pub fn new(schema: LabelSchema, vocab: Vocab, config: ScorerConfig) -> Result<Self> {
        if config.layers == 0 || config.d_model == 0 {
            return Err(Error::Config("scorer needs d_model > 0 and at least one layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let d = config.d_model;
        let encoder = Encoder::new(
            &mut params,
            "encoder",
            vocab.len(),
            d,
            config.encoder_layers,
            config.max_len,
            &mut rng,
        );
        let rel = params.add("rel", Tensor::uniform(RelationGroup::COUNT, d, 0.5, &mut rng));
        let tri = params.add("tri", Tensor::uniform(schema.n_types(), d, 0.5, &mut rng));
        let arg = params.add("arg", Tensor::uniform(schema.n_role_labels(), d, 0.5, &mut rng));
        let pos = params.add("pos", Tensor::uniform(config.max_seq_len, d, 0.5, &mut rng));
        let token_type = params.add("token_type", Tensor::uniform(4, d, 0.5, &mut rng));
        let blocks = (0..config.layers)
            .map(|l| AttentionBlock::new(&mut params, &format!("layer{l}"), d, &mut rng))
            .collect();
        let out = Linear::new(&mut params, "out", d, 1, &mut rng);
        Ok(Self {
            schema,
            vocab,
            config,
            params,
            encoder,
            rel,
            tri,
            arg,
            pos,
            token_type,
            blocks,
            out,
        })
    }

    pub fn output_layer(&self) -> &Linear {
        &self.out
    }

    pub fn position_table(&self) -> ParamId {
        self.pos
    }

    /// Sequence for a prediction, honouring the path-free ablation flag.
    pub fn sequence_for(
        &self,
        graph: Option<&AmrGraph>,
        n_tokens: usize,
        event_type: usize,
        trigger: TokenSpan,
        argument: TokenSpan,
        role: usize,
    ) -> Result<ScoringSequence> {
        let graph = if self.config.use_amr { graph } else { None };
        build_sequence(graph, n_tokens, event_type, trigger, argument, role)
    }

    /// `H^init`: one row per sequence element, with position and token-type
    /// embeddings added when enabled.
    pub fn embed_sequence(&self, g: &mut Graph, seq: &ScoringSequence, tokens: &[String]) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        let ids = self.vocab.encode(tokens);
        let reps = self.encoder.forward(g, &ids);
        let mut rows = Vec::with_capacity(seq.len());
        let mut types = Vec::with_capacity(seq.len());
        if seq.event_type >= self.schema.n_types() {
            return Err(Error::OutOfRange(format!("event type id {}", seq.event_type)));
        }
        if seq.role >= self.schema.n_role_labels() {
            return Err(Error::OutOfRange(format!("role id {}", seq.role)));
        }
        rows.push(g.gather(self.tri, &[seq.event_type]));
        types.push(TT_TYPE);
        for e in &seq.elements {
            match e {
                SeqElement::Node { id, span, .. } => {
                    let span = span.ok_or_else(|| Error::UnalignedNode(id.clone()))?;
                    span.check(tokens.len())?;
                    rows.push(g.mean_rows(reps, span.start, span.end));
                    types.push(TT_NODE);
                }
                SeqElement::Edge(group) => {
                    rows.push(g.gather(self.rel, &[group.index()]));
                    types.push(TT_RELATION);
                }
            }
        }
        rows.push(g.gather(self.arg, &[seq.role]));
        types.push(TT_ROLE);
        let mut h = g.concat_rows(&rows);
        if self.config.use_position {
            let max = self.config.max_seq_len - 1;
            let positions: Vec<usize> = (0..rows.len()).map(|i| i.min(max)).collect();
            let p = g.gather(self.pos, &positions);
            h = g.add(h, p);
        }
        if self.config.use_token_type {
            let t = g.gather(self.token_type, &types);
            h = g.add(h, t);
        }
        Ok(h)
    }

    fn logit(&self, g: &mut Graph, seq: &ScoringSequence, tokens: &[String]) -> Result<Var> {
        let mut h = self.embed_sequence(g, seq, tokens)?;
        for b in &self.blocks {
            h = b.forward(g, h);
        }
        let n = g.value(h).rows;
        let pooled = g.mean_rows(h, 0, n);
        Ok(self.out.forward(g, pooled))
    }

    /// `c` in `(0, 1)`.
    pub fn score(&self, seq: &ScoringSequence, tokens: &[String]) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let l = self.logit(&mut g, seq, tokens)?;
        let c = sigmoid(g.value(l).item());
        Ok(c.clamp(f64::EPSILON, 1.0 - f64::EPSILON))
    }

    /// Scores a path-free `[type, trigger, argument, role]` sequence.
    pub fn score_no_amr(&self, seq: &ScoringSequence, tokens: &[String]) -> Result<f64> {
        if seq.elements.len() != 2 || seq.elements.iter().any(|e| !e.is_node()) {
            return Err(Error::ShapeMismatch(
                "path-free sequences hold exactly a trigger node and an argument node".into(),
            ));
        }
        self.score(seq, tokens)
    }

    /// Scores every example independently, in parallel.
    pub fn score_all(&self, items: &[(ScoringSequence, &[String])]) -> Result<Vec<f64>> {
        items
            .par_iter()
            .map(|(seq, toks)| self.score(seq, toks))
            .collect()
    }

    /// Mean BCE over `batch` and its gradients.
    pub fn bce_loss(&self, batch: &[ScoringExample]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput);
        }
        let per: Vec<Result<(f64, Gradients)>> = batch
            .par_iter()
            .map(|ex| {
                let mut g = Graph::new(&self.params);
                let l = self.logit(&mut g, &ex.sequence, &ex.tokens)?;
                let loss = g.bce_with_logits(l, if ex.label { 1.0 } else { 0.0 });
                Ok((g.value(loss).item(), g.backward(loss)))
            })
            .collect();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut grads = Gradients::zeros_like(&self.params);
        for r in per {
            let (l, gr) = r?;
            total += scale * l;
            grads.add_scaled(&gr, scale);
        }
        Ok((total, grads))
    }

    pub fn accuracy(&self, examples: &[ScoringExample]) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let items: Vec<_> = examples
            .iter()
            .map(|e| (e.sequence.clone(), e.tokens.as_slice()))
            .collect();
        let scores = self.score_all(&items)?;
        let hits = scores
            .iter()
            .zip(examples)
            .filter(|(c, e)| (**c > 0.5) == e.label)
            .count();
        Ok(hits as f64 / examples.len() as f64)
    }

    /// Minimises mean BCE with minibatch updates. The parameters are meant
    /// to stay fixed afterwards.
    pub fn train(&mut self, examples: &[ScoringExample]) -> Result<ScorerTrainReport> {
        let pos = examples.iter().filter(|e| e.label).count();
        if pos == 0 || pos == examples.len() {
            return Err(Error::DegenerateLabelSpace(
                "scorer training needs both positive and negative examples".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5c0);
        let mut opt = Optimizer::new(self.config.optim, &self.params, &[SCORER_ENCODER_PREFIX]);
        let initial_loss = self.mean_loss(examples)?;
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut curve = Vec::with_capacity(self.config.epochs);
        let bs = self.config.batch_size.max(1);
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut sum = 0.0;
            for chunk in order.chunks(bs) {
                let batch: Vec<ScoringExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
                let (loss, grads) = self.bce_loss(&batch)?;
                if !loss.is_finite() || !grads.is_finite() {
                    return Err(Error::NonFiniteLoss(format!(
                        "scorer epoch {epoch}, batch of {} starting at example {}",
                        chunk.len(),
                        chunk[0]
                    )));
                }
                opt.step(&mut self.params, &grads);
                sum += loss * chunk.len() as f64;
            }
            let mean = sum / examples.len() as f64;
            log::debug!("scorer epoch {epoch}: bce {mean:.4}");
            curve.push(mean);
        }
        Ok(ScorerTrainReport {
            initial_loss,
            curve,
            accuracy: self.accuracy(examples)?,
        })
    }

    fn mean_loss(&self, examples: &[ScoringExample]) -> Result<f64> {
        let mut sum = 0.0;
        for chunk in examples.chunks(64) {
            sum += self.bce_loss(chunk)?.0 * chunk.len() as f64;
        }
        Ok(sum / examples.len() as f64)
    }

    pub fn load_params(&mut self, other: &ParamStore) -> Result<()> {
        copy_params(&mut self.params, other)
    }
}

pub(crate) fn copy_params(dst: &mut ParamStore, src: &ParamStore) -> Result<()> {
    for id in dst.ids().collect::<Vec<_>>() {
        let name = dst.name(id).to_string();
        let sid = src
            .find(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
        let t = src.get(sid);
        if t.shape() != dst.get(id).shape() {
            return Err(Error::Checkpoint(format!("shape mismatch for {name}")));
        }
        *dst.get_mut(id) = t.clone();
    }
    Ok(())
}

/// Gold positives plus role-swap negatives, ready for [`CompatibilityScorer::train`].
pub fn training_set<R: Rng>(
    sentences: &[LabeledSentence],
    schema: &LabelSchema,
    amr: Option<&BTreeMap<String, AmrGraph>>,
    rng: &mut R,
) -> Result<Vec<ScoringExample>> {
    let pos = gold_examples(sentences, schema, amr)?;
    let neg = make_negatives(&pos, schema.n_roles(), rng)?;
    let mut all = pos;
    all.extend(neg);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_penman;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn schema() -> LabelSchema {
        LabelSchema::new(
            vec!["Life:Die".into(), "Conflict:Attack".into()],
            vec!["Victim".into(), "Agent".into(), "Place".into(), "Instrument".into(), "Time".into()],
        )
        .unwrap()
    }

    fn scorer(cfg: ScorerConfig) -> CompatibilityScorer {
        let v = Vocab::build([toks("commandos killed him in Iraq").as_slice()]);
        CompatibilityScorer::new(schema(), v, cfg).unwrap()
    }

    fn small() -> ScorerConfig {
        ScorerConfig {
            d_model: 8,
            layers: 1,
            max_len: 16,
            ..ScorerConfig::default()
        }
    }

    fn kill_graph() -> AmrGraph {
        let mut g = parse_penman(
            "(k / kill-01 :ARG0 (c / commando) :ARG1 (h / he) :location (c2 / country :name (n / name :op1 \"Iraq\")))",
        )
        .unwrap();
        for (id, i) in [("c", 0), ("k", 1), ("h", 2), ("c2", 4)] {
            g.set_alignment(id, TokenSpan::new(i, i + 1)).unwrap();
        }
        g
    }

    #[test]
    fn minimal_sequence_embeds_three_rows() {
        let s = scorer(small());
        let seq = ScoringSequence {
            event_type: 0,
            elements: vec![SeqElement::Node {
                id: "k".into(),
                concept: "kill-01".into(),
                span: Some(TokenSpan::new(1, 2)),
            }],
            role: 1,
        };
        let mut g = Graph::new(&s.params);
        let h = s.embed_sequence(&mut g, &seq, &toks("commandos killed him")).unwrap();
        assert_eq!(g.value(h).shape(), (3, 8));
    }

    #[test]
    fn unaligned_path_node_is_an_error() {
        let s = scorer(small());
        let g = kill_graph();
        let seq = build_sequence(Some(&g), 5, 0, TokenSpan::new(1, 2), TokenSpan::new(4, 5), 3).unwrap();
        let mut gr = Graph::new(&s.params);
        assert!(s.embed_sequence(&mut gr, &seq, &toks("commandos killed him in Iraq")).is_ok());
        // the name node carries no alignment
        let bad = ScoringSequence {
            elements: vec![
                SeqElement::Node {
                    id: "n".into(),
                    concept: "name".into(),
                    span: None,
                },
            ],
            ..seq
        };
        let mut gr = Graph::new(&s.params);
        assert!(matches!(
            s.embed_sequence(&mut gr, &bad, &toks("commandos killed him in Iraq")),
            Err(Error::UnalignedNode(_))
        ));
    }

    #[test]
    fn zero_projection_gives_half() {
        let mut s = scorer(small());
        let (w, b) = (s.out.w, s.out.b);
        s.params.get_mut(w).data.iter_mut().for_each(|x| *x = 0.0);
        s.params.get_mut(b).data.iter_mut().for_each(|x| *x = 0.0);
        let seq = ScoringSequence::without_path(0, TokenSpan::new(1, 2), TokenSpan::new(0, 1), 1);
        assert_eq!(seq.len(), 4);
        assert_eq!(s.score_no_amr(&seq, &toks("commandos killed")).unwrap(), 0.5);
    }

    #[test]
    fn scores_in_open_interval_and_deterministic() {
        let s = scorer(small());
        let g = kill_graph();
        let t = toks("commandos killed him in Iraq");
        for role in 0..=5 {
            let seq = build_sequence(Some(&g), 5, 1, TokenSpan::new(1, 2), TokenSpan::new(0, 1), role).unwrap();
            let c = s.score(&seq, &t).unwrap();
            assert!(c > 0.0 && c < 1.0);
            assert_eq!(c.to_bits(), s.score(&seq, &t).unwrap().to_bits());
        }
    }

    #[test]
    fn unaligned_span_falls_back_to_others_edge() {
        let g = kill_graph();
        let seq = build_sequence(Some(&g), 5, 0, TokenSpan::new(1, 2), TokenSpan::new(3, 4), 1).unwrap();
        assert_eq!(seq.first_edge(), Some(RelationGroup::Others));
        assert_eq!(seq.len(), 5);
    }

    #[test]
    fn negatives_forced_with_two_roles() {
        let two = LabelSchema::new(vec!["Life:Die".into()], vec!["Victim".into(), "Attacker".into()]).unwrap();
        let pos = ScoringExample {
            sequence: ScoringSequence::without_path(0, TokenSpan::new(0, 1), TokenSpan::new(1, 2), 1),
            tokens: toks("a b"),
            label: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let neg = make_negatives(&[pos.clone(), pos.clone()], two.n_roles(), &mut rng).unwrap();
        assert_eq!(neg.len(), 2);
        assert!(neg.iter().all(|n| n.sequence.role == 2 && !n.label));
        assert!(matches!(
            make_negatives(&[pos], 1, &mut rng),
            Err(Error::DegenerateLabelSpace(_))
        ));
    }

    #[test]
    fn negative_role_frequencies_are_uniform() {
        let pos = ScoringExample {
            sequence: ScoringSequence::without_path(0, TokenSpan::new(0, 1), TokenSpan::new(1, 2), 3),
            tokens: toks("a b"),
            label: true,
        };
        let gold = vec![pos; 10_000];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let neg = make_negatives(&gold, 5, &mut rng).unwrap();
        let mut counts = [0usize; 6];
        for n in &neg {
            counts[n.sequence.role] += 1;
        }
        assert_eq!(counts[0], 0);
        assert_eq!(counts[3], 0);
        for r in [1, 2, 4, 5] {
            assert!((counts[r] as f64 / 10_000.0 - 0.25).abs() <= 0.02);
        }
    }

    #[test]
    fn constant_half_has_ln2_loss() {
        let mut s = scorer(small());
        let (w, b) = (s.out.w, s.out.b);
        s.params.get_mut(w).data.iter_mut().for_each(|x| *x = 0.0);
        s.params.get_mut(b).data.iter_mut().for_each(|x| *x = 0.0);
        let seq = ScoringSequence::without_path(0, TokenSpan::new(1, 2), TokenSpan::new(0, 1), 1);
        let batch = vec![
            ScoringExample {
                sequence: seq.clone(),
                tokens: toks("commandos killed"),
                label: true,
            },
            ScoringExample {
                sequence: seq.with_role(2),
                tokens: toks("commandos killed"),
                label: false,
            },
        ];
        let (l, _) = s.bce_loss(&batch).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn training_requires_both_labels() {
        let mut s = scorer(small());
        let ex = ScoringExample {
            sequence: ScoringSequence::without_path(0, TokenSpan::new(1, 2), TokenSpan::new(0, 1), 1),
            tokens: toks("commandos killed"),
            label: true,
        };
        assert!(matches!(s.train(&[ex]), Err(Error::DegenerateLabelSpace(_))));
    }
}
