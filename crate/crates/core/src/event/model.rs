//! The base extractor: encoder, CRF identification layers for triggers and
//! arguments, span classifiers for event types and roles, and the global
//! feature score.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::crf::{crf_nll_node, viterbi};
use super::graph::{
    EventGraphPrediction, FeatureTemplate, GlobalFeatureConfig, PredictedArgument,
    PredictedTrigger,
};
use super::schema::{BioTagset, LabelSchema};
use crate::amr::TokenSpan;
use crate::autograd::{Gradients, Graph, ParamId, ParamStore, Var};
use crate::corpus::LabeledSentence;
use crate::error::{Error, Result};
use crate::nn::{Encoder, Linear, Vocab};
use crate::tensor::{argmax, softmax, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    pub d_model: usize,
    pub layers: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            layers: 2,
            max_len: 64,
            seed: 0,
        }
    }
}

/// Parameter-name prefix of the extractor encoder.
pub const ENCODER_PREFIX: &str = "encoder.";

/// Gold (or pseudo) structure a sentence is trained towards.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceTarget {
    pub triggers: Vec<(TokenSpan, usize)>,
    pub entities: Vec<TokenSpan>,
    /// `roles[i][j]`: role id of entity `j` in event `i`, 0 when unrelated.
    pub roles: Vec<Vec<usize>>,
    pub graph: EventGraphPrediction,
}

impl SentenceTarget {
    pub fn from_graph(graph: &EventGraphPrediction) -> Self {
        let triggers: Vec<_> = graph
            .triggers
            .iter()
            .map(|t| (t.span, t.event_type))
            .collect();
        let entities = graph.entity_spans();
        let mut roles = vec![vec![0; entities.len()]; triggers.len()];
        for a in &graph.arguments {
            let j = entities.iter().position(|e| *e == a.span).expect("listed");
            if roles[a.trigger][j] == 0 {
                roles[a.trigger][j] = a.role;
            }
        }
        Self {
            triggers,
            entities,
            roles,
            graph: graph.clone(),
        }
    }

    pub fn from_sentence(s: &LabeledSentence, schema: &LabelSchema) -> Result<Self> {
        Ok(Self::from_graph(&EventGraphPrediction::from_gold(s, schema)?))
    }

    /// `(trigger, entity)` index pairs with a non-null role.
    pub fn argument_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.roles.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if r != 0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Loss terms of one sentence as graph nodes.
pub struct SentenceLoss {
    pub tri_i: Var,
    pub arg_i: Var,
    pub tri_c: Vec<Var>,
    /// `[trigger][entity]`
    pub arg_c: Vec<Vec<Var>>,
    pub global: Var,
    pub prediction: EventGraphPrediction,
}

impl SentenceLoss {
    pub fn total(&self, g: &mut Graph) -> Var {
        let mut terms = vec![self.tri_i, self.arg_i, self.global];
        terms.extend(&self.tri_c);
        terms.extend(self.arg_c.iter().flatten());
        g.sum(&terms)
    }

    pub fn components(&self, g: &Graph) -> LossComponents {
        let v = |x: Var| g.value(x).item();
        LossComponents {
            tri_i: v(self.tri_i),
            arg_i: v(self.arg_i),
            tri_c: self.tri_c.iter().map(|&x| v(x)).sum(),
            arg_c: self.arg_c.iter().flatten().map(|&x| v(x)).sum(),
            global: v(self.global),
        }
    }

    /// One loss term per non-null `(trigger, argument)` pair such that the
    /// terms sum to the sentence loss whenever every trigger has at least
    /// one argument. A pair carries its own role loss, an equal share of
    /// its trigger's type loss and null-role losses, and an equal share of
    /// the sentence-level identification and global losses.
    pub fn pair_terms(&self, g: &mut Graph, target: &SentenceTarget) -> Vec<((usize, usize), Var)> {
        let pairs = target.argument_pairs();
        if pairs.is_empty() {
            return Vec::new();
        }
        let n = pairs.len() as f64;
        let per_trigger: Vec<usize> = (0..target.triggers.len())
            .map(|i| pairs.iter().filter(|p| p.0 == i).count())
            .collect();
        pairs
            .iter()
            .map(|&(i, j)| {
                let ni = per_trigger[i] as f64;
                let mut terms = vec![
                    (self.arg_c[i][j], 1.0),
                    (self.tri_c[i], 1.0 / ni),
                    (self.tri_i, 1.0 / n),
                    (self.arg_i, 1.0 / n),
                    (self.global, 1.0 / n),
                ];
                for (k, &r) in target.roles[i].iter().enumerate() {
                    if r == 0 {
                        terms.push((self.arg_c[i][k], 1.0 / ni));
                    }
                }
                ((i, j), g.weighted_sum(&terms))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub tri_i: f64,
    pub arg_i: f64,
    pub tri_c: f64,
    pub arg_c: f64,
    pub global: f64,
}

impl LossComponents {
    pub fn total(&self) -> f64 {
        self.tri_i + self.arg_i + self.tri_c + self.arg_c + self.global
    }

    pub fn add_scaled(&mut self, o: &LossComponents, s: f64) {
        self.tri_i += s * o.tri_i;
        self.arg_i += s * o.arg_i;
        self.tri_c += s * o.tri_c;
        self.arg_c += s * o.arg_c;
        self.global += s * o.global;
    }

    pub fn scale(&mut self, s: f64) {
        let o = *self;
        *self = LossComponents::default();
        self.add_scaled(&o, s);
    }
}

/// Batch-averaged loss with its gradients.
pub struct BatchLoss {
    pub components: LossComponents,
    pub total: f64,
    pub grads: Gradients,
}

#[derive(Debug, Clone)]
pub struct EventModel {
    pub schema: LabelSchema,
    pub vocab: Vocab,
    pub config: ExtractorConfig,
    pub params: ParamStore,
    encoder: Encoder,
    trig_emit: Linear,
    trig_trans: ParamId,
    arg_emit: Linear,
    arg_trans: ParamId,
    tri_cls: Linear,
    role_cls: Linear,
    global_u: ParamId,
    templates: Vec<FeatureTemplate>,
}

impl EventModel {
    pub fn new(
        schema: LabelSchema,
        vocab: Vocab,
        config: ExtractorConfig,
        templates: Vec<FeatureTemplate>,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let d = config.d_model;
        let encoder = Encoder::new(
            &mut params,
            "encoder",
            vocab.len(),
            d,
            config.layers,
            config.max_len,
            &mut rng,
        );
        let tt = schema.n_trigger_tags();
        let trig_emit = Linear::new(&mut params, "trigger_id.emit", d, tt, &mut rng);
        let trig_trans = params.add("trigger_id.transitions", Tensor::zeros(tt, tt));
        let arg_emit = Linear::new(&mut params, "argument_id.emit", d, 3, &mut rng);
        let arg_trans = params.add("argument_id.transitions", Tensor::zeros(3, 3));
        let tri_cls = Linear::new(&mut params, "trigger_cls", d, schema.n_types(), &mut rng);
        let role_cls = Linear::new(&mut params, "role_cls", 2 * d, schema.n_role_labels(), &mut rng);
        let global_u = params.add("global.u", Tensor::zeros(1, templates.len().max(1)));
        Self {
            schema,
            vocab,
            config,
            params,
            encoder,
            trig_emit,
            trig_trans,
            arg_emit,
            arg_trans,
            tri_cls,
            role_cls,
            global_u,
            templates,
        }
    }

    /// A model with the default global feature templates for `schema`.
    pub fn with_default_features(schema: LabelSchema, vocab: Vocab, config: ExtractorConfig) -> Self {
        let templates = GlobalFeatureConfig::default_for(&schema).templates;
        Self::new(schema, vocab, config, templates)
    }

    pub fn templates(&self) -> &[FeatureTemplate] {
        &self.templates
    }

    /// Parameters kept fixed during self-training: CRF transitions and
    /// global feature weights.
    pub fn self_training_frozen(&self) -> Vec<ParamId> {
        vec![self.trig_trans, self.arg_trans, self.global_u]
    }

    pub fn global_config(&self) -> GlobalFeatureConfig {
        GlobalFeatureConfig {
            templates: self.templates.clone(),
            weights: self.params.get(self.global_u).data[..self.templates.len()].to_vec(),
        }
    }

    pub fn set_global_weights(&mut self, weights: &[f64]) {
        let u = self.params.get_mut(self.global_u);
        u.data[..weights.len()].copy_from_slice(weights);
    }

    pub fn encode_ids(&self, tokens: &[String]) -> Result<Vec<usize>> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(self.vocab.encode(tokens))
    }

    /// Contextual representations, one `d`-wide row per token.
    pub fn encode(&self, tokens: &[String]) -> Result<Tensor> {
        let ids = self.encode_ids(tokens)?;
        let mut g = Graph::new(&self.params);
        let reps = self.encoder.forward(&mut g, &ids);
        Ok(g.value(reps).clone())
    }

    fn span_rep(&self, g: &mut Graph, reps: Var, span: TokenSpan) -> Result<Var> {
        span.check(g.value(reps).rows)?;
        Ok(g.mean_rows(reps, span.start, span.end))
    }

    fn trigger_logits(&self, g: &mut Graph, span_vec: Var) -> Var {
        self.tri_cls.forward(g, span_vec)
    }

    fn role_logits(&self, g: &mut Graph, trigger_vec: Var, arg_vec: Var) -> Var {
        let cat = g.concat_cols(trigger_vec, arg_vec);
        self.role_cls.forward(g, cat)
    }

    /// Trigger-type distribution for a span representation of width `d`.
    pub fn classify_trigger(&self, span_vec: &[f64]) -> Result<Vec<f64>> {
        if span_vec.len() != self.config.d_model {
            return Err(Error::ShapeMismatch(format!(
                "span vector of width {} for d = {}",
                span_vec.len(),
                self.config.d_model
            )));
        }
        let mut g = Graph::new(&self.params);
        let x = g.constant(Tensor::row_vector(span_vec.to_vec()));
        let l = self.trigger_logits(&mut g, x);
        Ok(softmax(&g.value(l).data))
    }

    /// Role distribution (null role at index 0) for a trigger/argument pair.
    pub fn classify_role(&self, trigger_vec: &[f64], arg_vec: &[f64]) -> Result<Vec<f64>> {
        let d = self.config.d_model;
        if trigger_vec.len() != d || arg_vec.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "role classifier expects two vectors of width {d}"
            )));
        }
        let mut g = Graph::new(&self.params);
        let t = g.constant(Tensor::row_vector(trigger_vec.to_vec()));
        let a = g.constant(Tensor::row_vector(arg_vec.to_vec()));
        let l = self.role_logits(&mut g, t, a);
        Ok(softmax(&g.value(l).data))
    }

    fn decode(&self, g: &mut Graph, reps: Var) -> Result<EventGraphPrediction> {
        let tt = BioTagset::new(self.schema.n_types());
        let at = BioTagset::new(1);
        let te = self.trig_emit.forward(g, reps);
        let ae = self.arg_emit.forward(g, reps);
        let mut ttags = viterbi(g.value(te), self.params.get(self.trig_trans))?;
        tt.repair(&mut ttags);
        let mut atags = viterbi(g.value(ae), self.params.get(self.arg_trans))?;
        at.repair(&mut atags);

        let mut pred = EventGraphPrediction::default();
        let mut trigger_vecs = Vec::new();
        for (span, _) in tt.spans(&ttags) {
            let v = self.span_rep(g, reps, span)?;
            let l = self.trigger_logits(g, v);
            let p = softmax(&g.value(l).data);
            let ty = argmax(&p);
            pred.triggers.push(PredictedTrigger {
                span,
                event_type: ty,
                prob: p[ty],
            });
            trigger_vecs.push(v);
        }
        let mut arg_vecs = Vec::new();
        let entities: Vec<TokenSpan> = at.spans(&atags).into_iter().map(|(s, _)| s).collect();
        for &span in &entities {
            arg_vecs.push(self.span_rep(g, reps, span)?);
        }
        for (i, &tv) in trigger_vecs.iter().enumerate() {
            for (&span, &av) in entities.iter().zip(&arg_vecs) {
                let l = self.role_logits(g, tv, av);
                let p = softmax(&g.value(l).data);
                let r = argmax(&p);
                if r != 0 {
                    pred.arguments.push(PredictedArgument {
                        trigger: i,
                        span,
                        role: r,
                        prob: p[r],
                    });
                }
            }
        }
        Ok(pred)
    }

    pub fn predict(&self, tokens: &[String]) -> Result<EventGraphPrediction> {
        let ids = self.encode_ids(tokens)?;
        self.predict_ids(&ids)
    }

    pub fn predict_ids(&self, ids: &[usize]) -> Result<EventGraphPrediction> {
        if ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut g = Graph::new(&self.params);
        let reps = self.encoder.forward(&mut g, ids);
        self.decode(&mut g, reps)
    }

    /// Builds every loss term for one sentence inside `g`.
    pub fn sentence_loss(
        &self,
        g: &mut Graph,
        ids: &[usize],
        target: &SentenceTarget,
    ) -> Result<SentenceLoss> {
        if ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = ids.len();
        let reps = self.encoder.forward(g, ids);

        let tt = BioTagset::new(self.schema.n_types());
        let te = self.trig_emit.forward(g, reps);
        let ttrans = g.param(self.trig_trans);
        let tgold = tt.encode(n, &target.triggers);
        let tri_i = crf_nll_node(g, te, ttrans, &tgold)?;

        let at = BioTagset::new(1);
        let ae = self.arg_emit.forward(g, reps);
        let atrans = g.param(self.arg_trans);
        let ent: Vec<_> = target.entities.iter().map(|&s| (s, 0)).collect();
        let agold = at.encode(n, &ent);
        let arg_i = crf_nll_node(g, ae, atrans, &agold)?;

        let mut tri_c = Vec::with_capacity(target.triggers.len());
        let mut trigger_vecs = Vec::with_capacity(target.triggers.len());
        for &(span, ty) in &target.triggers {
            let v = self.span_rep(g, reps, span)?;
            let l = self.trigger_logits(g, v);
            tri_c.push(g.cross_entropy(l, ty));
            trigger_vecs.push(v);
        }
        let mut arg_vecs = Vec::with_capacity(target.entities.len());
        for &span in &target.entities {
            arg_vecs.push(self.span_rep(g, reps, span)?);
        }
        let mut arg_c = Vec::with_capacity(target.triggers.len());
        for (i, &tv) in trigger_vecs.iter().enumerate() {
            let mut row = Vec::with_capacity(arg_vecs.len());
            for (j, &av) in arg_vecs.iter().enumerate() {
                let l = self.role_logits(g, tv, av);
                row.push(g.cross_entropy(l, target.roles[i][j]));
            }
            arg_c.push(row);
        }

        let prediction = self.decode(g, reps)?;
        let global = self.global_loss_node(g, &prediction, &target.graph);
        Ok(SentenceLoss {
            tri_i,
            arg_i,
            tri_c,
            arg_c,
            global,
            prediction,
        })
    }

    fn global_loss_node(
        &self,
        g: &mut Graph,
        predicted: &EventGraphPrediction,
        gold: &EventGraphPrediction,
    ) -> Var {
        let width = self.params.get(self.global_u).cols;
        let mut diff = vec![0.0; width];
        for (k, t) in self.templates.iter().enumerate() {
            diff[k] = t.count(predicted) - t.count(gold);
        }
        let u = g.param(self.global_u);
        let d = g.constant(Tensor::row_vector(diff));
        let s = g.matmul_t(u, d);
        g.relu(s)
    }

    /// Batch-mean `L^E` and its gradients. Sentences are processed in
    /// parallel and reduced in batch order.
    pub fn batch_loss(&self, batch: &[(Vec<usize>, SentenceTarget)]) -> Result<BatchLoss> {
        if batch.is_empty() {
            return Err(Error::EmptyInput);
        }
        let per: Vec<Result<(LossComponents, Gradients)>> = batch
            .par_iter()
            .map(|(ids, target)| {
                let mut g = Graph::new(&self.params);
                let l = self.sentence_loss(&mut g, ids, target)?;
                let total = l.total(&mut g);
                Ok((l.components(&g), g.backward(total)))
            })
            .collect();
        let scale = 1.0 / batch.len() as f64;
        let mut components = LossComponents::default();
        let mut grads = Gradients::zeros_like(&self.params);
        for r in per {
            let (c, gr) = r?;
            components.add_scaled(&c, scale);
            grads.add_scaled(&gr, scale);
        }
        Ok(BatchLoss {
            total: components.total(),
            components,
            grads,
        })
    }

    /// Convenience form of [`EventModel::batch_loss`] over labeled sentences.
    pub fn supervised_loss(&self, batch: &[LabeledSentence]) -> Result<BatchLoss> {
        let prepared = self.prepare(batch)?;
        self.batch_loss(&prepared)
    }

    pub fn prepare(&self, sentences: &[LabeledSentence]) -> Result<Vec<(Vec<usize>, SentenceTarget)>> {
        sentences
            .iter()
            .map(|s| {
                Ok((
                    self.encode_ids(&s.tokens)?,
                    SentenceTarget::from_sentence(s, &self.schema)?,
                ))
            })
            .collect()
    }

    /// Overwrites parameter values by name from `other`.
    pub fn load_params(&mut self, other: &ParamStore) -> Result<()> {
        for id in self.params.ids().collect::<Vec<_>>() {
            let name = self.params.name(id).to_string();
            let src = other
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            let src = other.get(src);
            if src.shape() != self.params.get(id).shape() {
                return Err(Error::Checkpoint(format!("shape mismatch for {name}")));
            }
            *self.params.get_mut(id) = src.clone();
        }
        Ok(())
    }
}
