//! Two-stage training: supervised stage 1, then self-training where each
//! pseudo-labeled `(trigger, argument, role)` contributes its share of the
//! extraction loss scaled by a compatibility-derived weight.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amr::{AmrGraph, TokenSpan};
use crate::autograd::{Gradients, Graph};
use crate::checkpoint::{params_hash, Checkpoint};
use crate::corpus::LabeledSentence;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_model, prediction_compatibilities, summarize_compatibility, CheckpointRecord,
    SelectionCriterion,
};
use crate::event::{
    EventGraphPrediction, EventModel, LabelSchema, PredictedArgument, PredictedTrigger,
    SentenceTarget, ENCODER_PREFIX,
};
use crate::optim::{OptimConfig, Optimizer, OptimizerKind};
use crate::scorer::CompatibilityScorer;

/// `f^c(c) = 2c - 1`.
pub fn compat_transform(c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::OutOfRange(format!("compatibility {c} outside [0, 1]")));
    }
    Ok(2.0 * c - 1.0)
}

/// Linear ramp `epoch / total_epochs`.
pub fn beta_schedule(epoch: usize, total_epochs: usize) -> Result<f64> {
    if total_epochs == 0 || epoch > total_epochs {
        return Err(Error::OutOfRange(format!("epoch {epoch} of {total_epochs}")));
    }
    Ok(epoch as f64 / total_epochs as f64)
}

fn check_threshold(s: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&s) {
        return Err(Error::OutOfRange(format!("threshold {s} outside [0.5, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSample {
    /// Index into the unlabeled pool.
    pub sentence: usize,
    pub trigger: TokenSpan,
    pub event_type: usize,
    pub argument: TokenSpan,
    pub role: usize,
    /// Role classifier probability of the predicted role.
    pub prob: f64,
    pub compatibility: f64,
    pub weight: f64,
}

/// Keeps samples the scorer is confident about either way:
/// `c > s` or `c < 1 - s`.
pub fn threshold_filter(samples: &[PseudoSample], s: f64) -> Result<Vec<PseudoSample>> {
    check_threshold(s)?;
    Ok(samples
        .iter()
        .filter(|p| p.compatibility > s || p.compatibility < 1.0 - s)
        .cloned()
        .collect())
}

/// Vanilla self-training selection: samples whose model probability
/// exceeds `threshold`, each with weight 1.
pub fn vanilla_filter(samples: &[PseudoSample], threshold: f64) -> Vec<PseudoSample> {
    samples
        .iter()
        .filter(|s| s.prob > threshold)
        .map(|s| PseudoSample { weight: 1.0, ..s.clone() })
        .collect()
}

/// Predictions over a pool, one graph per sentence.
pub fn predict_pool(model: &EventModel, sentences: &[LabeledSentence]) -> Result<Vec<EventGraphPrediction>> {
    sentences.par_iter().map(|s| model.predict(&s.tokens)).collect()
}

/// Replaces each argument role, with probability `rate`, by a uniformly
/// drawn different named role.
pub fn corrupt_roles<R: Rng>(preds: &mut [EventGraphPrediction], rate: f64, n_roles: usize, rng: &mut R) {
    if rate <= 0.0 || n_roles < 2 {
        return;
    }
    for p in preds {
        for a in &mut p.arguments {
            if rng.gen::<f64>() < rate {
                let k = rng.gen_range(1..n_roles);
                a.role = if k >= a.role { k + 1 } else { k };
            }
        }
    }
}

/// Per-pool bookkeeping from pseudo-label generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoStats {
    pub missing_amr: usize,
    pub unscorable: usize,
}

/// Where a pseudo sample's compatibility comes from.
#[derive(Clone, Copy)]
pub enum Feedback<'a> {
    /// Learned AMR-path scorer.
    Scorer(&'a CompatibilityScorer),
    /// 1 when the prediction matches the gold pool annotation, else 0.
    Oracle(&'a [LabeledSentence]),
    /// Every sample gets compatibility 1.
    Constant,
}

fn oracle_compat(gold: &LabeledSentence, schema: &LabelSchema, t: &PredictedTrigger, a: &PredictedArgument) -> f64 {
    let hit = gold.events.iter().any(|ev| {
        ev.trigger_span() == t.span
            && schema.type_id(&ev.trigger.event_type).ok() == Some(t.event_type)
            && ev
                .args
                .iter()
                .any(|x| x.span() == a.span && schema.role_id(&x.role).ok() == Some(a.role))
    });
    if hit {
        1.0
    } else {
        0.0
    }
}

/// One sample per predicted `(trigger, argument, role)`. With a learned
/// scorer, sentences without a graph and pairs whose path crosses an
/// unaligned node are skipped and counted.
pub fn score_predictions(
    preds: &[EventGraphPrediction],
    pool: &[LabeledSentence],
    schema: &LabelSchema,
    feedback: Feedback<'_>,
    amr: &BTreeMap<String, AmrGraph>,
) -> Result<(Vec<PseudoSample>, PseudoStats)> {
    if let Feedback::Oracle(gold) = feedback {
        if gold.len() != pool.len() {
            return Err(Error::LengthMismatch {
                left: gold.len(),
                right: pool.len(),
            });
        }
    }
    let per: Vec<Result<(Vec<PseudoSample>, PseudoStats)>> = preds
        .par_iter()
        .zip(pool.par_iter())
        .enumerate()
        .map(|(i, (pred, s))| {
            let mut stats = PseudoStats::default();
            let mut out = Vec::new();
            if pred.arguments.is_empty() {
                return Ok((out, stats));
            }
            let graph = amr.get(&s.sent_id);
            if matches!(feedback, Feedback::Scorer(_)) && graph.is_none() {
                stats.missing_amr += 1;
                return Ok((out, stats));
            }
            for a in &pred.arguments {
                let t = &pred.triggers[a.trigger];
                let c = match feedback {
                    Feedback::Scorer(sc) => {
                        let seq = sc.sequence_for(graph, s.tokens.len(), t.event_type, t.span, a.span, a.role);
                        match seq.and_then(|q| sc.score(&q, &s.tokens)) {
                            Ok(c) => c,
                            Err(Error::UnalignedNode(_)) => {
                                stats.unscorable += 1;
                                continue;
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    Feedback::Oracle(gold) => oracle_compat(&gold[i], schema, t, a),
                    Feedback::Constant => 1.0,
                };
                out.push(PseudoSample {
                    sentence: i,
                    trigger: t.span,
                    event_type: t.event_type,
                    argument: a.span,
                    role: a.role,
                    prob: a.prob,
                    compatibility: c,
                    weight: compat_transform(c)?,
                });
            }
            Ok((out, stats))
        })
        .collect();
    let mut samples = Vec::new();
    let mut stats = PseudoStats::default();
    for r in per {
        let (s, st) = r?;
        samples.extend(s);
        stats.missing_amr += st.missing_amr;
        stats.unscorable += st.unscorable;
    }
    if stats.missing_amr > 0 {
        log::warn!("skipped {} unlabeled sentences without an AMR graph", stats.missing_amr);
    }
    if stats.unscorable > 0 {
        log::debug!("skipped {} pairs whose AMR path crosses an unaligned node", stats.unscorable);
    }
    Ok((samples, stats))
}

/// Predict, then score every predicted pair.
pub fn generate_pseudo_labels(
    extractor: &EventModel,
    unlabeled: &[LabeledSentence],
    scorer: &CompatibilityScorer,
    amr: &BTreeMap<String, AmrGraph>,
) -> Result<Vec<PseudoSample>> {
    let preds = predict_pool(extractor, unlabeled)?;
    Ok(score_predictions(&preds, unlabeled, &extractor.schema, Feedback::Scorer(scorer), amr)?.0)
}

/// A pseudo-labeled sentence: the target built from its retained samples
/// and one weight per retained pair.
#[derive(Debug, Clone)]
pub struct PseudoSentence {
    pub sentence: usize,
    pub ids: Vec<usize>,
    pub target: SentenceTarget,
    /// Keyed by `(trigger span, argument span)`.
    pub weights: Vec<((TokenSpan, TokenSpan), f64)>,
}

/// Groups samples by sentence, in pool order.
pub fn group_samples(
    model: &EventModel,
    samples: &[PseudoSample],
    pool: &[LabeledSentence],
) -> Result<Vec<PseudoSentence>> {
    let mut by_sentence: BTreeMap<usize, Vec<&PseudoSample>> = BTreeMap::new();
    for s in samples {
        by_sentence.entry(s.sentence).or_default().push(s);
    }
    let mut out = Vec::with_capacity(by_sentence.len());
    for (i, group) in by_sentence {
        let mut graph = EventGraphPrediction::default();
        let mut weights = Vec::new();
        for s in group {
            let t = match graph.triggers.iter().position(|t| t.span == s.trigger) {
                Some(t) => t,
                None => {
                    graph.triggers.push(PredictedTrigger {
                        span: s.trigger,
                        event_type: s.event_type,
                        prob: 1.0,
                    });
                    graph.triggers.len() - 1
                }
            };
            if weights.iter().any(|(k, _)| *k == (s.trigger, s.argument)) {
                continue;
            }
            graph.arguments.push(PredictedArgument {
                trigger: t,
                span: s.argument,
                role: s.role,
                prob: 1.0,
            });
            weights.push(((s.trigger, s.argument), s.weight));
        }
        out.push(PseudoSentence {
            sentence: i,
            ids: model.encode_ids(&pool[i].tokens)?,
            target: SentenceTarget::from_graph(&graph),
            weights,
        });
    }
    Ok(out)
}

/// `Σ_pairs w · L^E_pair` for one pseudo sentence and its gradients. The
/// weights enter as constants.
pub fn weighted_pseudo_loss(model: &EventModel, p: &PseudoSentence) -> Result<(f64, Gradients)> {
    let mut g = Graph::new(&model.params);
    let l = model.sentence_loss(&mut g, &p.ids, &p.target)?;
    let terms = l.pair_terms(&mut g, &p.target);
    let mut weighted = Vec::with_capacity(terms.len());
    for ((i, j), v) in terms {
        let key = (p.target.triggers[i].0, p.target.entities[j]);
        let w = p
            .weights
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, w)| *w)
            .expect("every target pair has a weight");
        weighted.push((v, w));
    }
    let total = g.weighted_sum(&weighted);
    Ok((g.value(total).item(), g.backward(total)))
}

#[derive(Debug)]
pub struct StfLoss {
    pub total: f64,
    pub labeled: f64,
    /// Batch-mean weighted pseudo loss, before `β`.
    pub stf: f64,
    pub grads: Gradients,
}

/// `L^E(labeled) + β · L^STF(pseudo)`, with `L^STF` averaged over the
/// pseudo sentences in the batch.
pub fn stf_loss(
    model: &EventModel,
    labeled: &[(Vec<usize>, SentenceTarget)],
    pseudo: &[PseudoSentence],
    beta: f64,
) -> Result<StfLoss> {
    if beta < 0.0 {
        return Err(Error::OutOfRange(format!("beta {beta}")));
    }
    let lab = model.batch_loss(labeled)?;
    let mut grads = lab.grads;
    let mut stf = 0.0;
    if !pseudo.is_empty() && beta > 0.0 {
        let per: Vec<Result<(f64, Gradients)>> =
            pseudo.par_iter().map(|p| weighted_pseudo_loss(model, p)).collect();
        let scale = 1.0 / pseudo.len() as f64;
        for r in per {
            let (l, g) = r?;
            stf += scale * l;
            grads.add_scaled(&g, beta * scale);
        }
    }
    Ok(StfLoss {
        total: lab.total + beta * stf,
        labeled: lab.total,
        stf,
        grads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Stage 2 without pseudo labels.
    Supervised,
    /// Retrain on the union with confident pseudo labels, weight 1.
    SelfTraining,
    /// Compatibility-weighted pseudo labels.
    Stf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Supervised => "base",
            Method::SelfTraining => "self_training",
            Method::Stf => "stf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StfConfig {
    pub stage1_epochs: usize,
    /// Stage-2 epochs; also the denominator of the `β` ramp.
    pub total_epochs: usize,
    pub labeled_batch_size: usize,
    pub pseudo_batch_size: usize,
    pub stage1_optim: OptimConfig,
    pub stage2_optim: OptimConfig,
    /// Role-probability cut for vanilla self-training.
    pub vanilla_threshold: f64,
    /// Certainty threshold `s^st`; unset keeps every scored sample.
    pub certainty_threshold: Option<f64>,
    /// Fraction of pseudo-label roles replaced with a wrong role.
    pub label_noise_rate: f64,
    pub selection: SelectionCriterion,
    pub seed: u64,
}

impl Default for StfConfig {
    fn default() -> Self {
        Self {
            stage1_epochs: 10,
            total_epochs: 70,
            labeled_batch_size: 16,
            pseudo_batch_size: 10,
            stage1_optim: OptimConfig::default(),
            stage2_optim: OptimConfig {
                kind: OptimizerKind::Sgd,
                encoder_lr: 0.05,
                encoder_weight_decay: 0.0,
                lr: 0.05,
                weight_decay: 0.0,
                clip_norm: 5.0,
            },
            vanilla_threshold: 0.9,
            certainty_threshold: None,
            label_noise_rate: 0.0,
            selection: SelectionCriterion::AvgCompat,
            seed: 0,
        }
    }
}

impl StfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 || self.labeled_batch_size == 0 || self.pseudo_batch_size == 0 {
            return Err(Error::Config("epochs and batch sizes must be positive".into()));
        }
        if !(0.5..=1.0).contains(&self.vanilla_threshold) {
            return Err(Error::Config("vanilla_threshold must lie in [0.5, 1]".into()));
        }
        if let Some(s) = self.certainty_threshold {
            if !(0.5..=1.0).contains(&s) {
                return Err(Error::Config("certainty_threshold must lie in [0.5, 1]".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.label_noise_rate) {
            return Err(Error::Config("label_noise_rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevMetrics {
    pub tri_c: f64,
    pub arg_c: f64,
}

/// One line of the training event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub method: String,
    pub stage: u8,
    pub epoch: usize,
    pub beta: f64,
    pub labeled_loss: f64,
    pub stf_loss: f64,
    pub pseudo_count: usize,
    pub mean_compatibility: Option<f64>,
    pub dev_metrics: Option<DevMetrics>,
    pub heldout_compatibility: Option<f64>,
    pub checkpoint_hash: String,
}

/// Data a training run reads. `dev` and `heldout` may be empty.
#[derive(Clone, Copy)]
pub struct RunInputs<'a> {
    pub labeled: &'a [LabeledSentence],
    pub unlabeled: &'a [LabeledSentence],
    pub amr: &'a BTreeMap<String, AmrGraph>,
    pub dev: &'a [LabeledSentence],
    pub heldout: &'a [LabeledSentence],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EventModel,
    pub best: EventModel,
    pub log: Vec<EpochLog>,
    pub checkpoints: Vec<CheckpointRecord>,
}

struct Recorder<'a> {
    inputs: RunInputs<'a>,
    scorer: Option<&'a CompatibilityScorer>,
    selection: SelectionCriterion,
    checkpoint_dir: Option<&'a Path>,
    config_hash: &'a str,
    seed: u64,
    log: Vec<EpochLog>,
    checkpoints: Vec<CheckpointRecord>,
    best: Option<(f64, EventModel)>,
}

impl Recorder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        model: &EventModel,
        method: Method,
        stage: u8,
        beta: f64,
        labeled_loss: f64,
        stf_loss: f64,
        pseudo_count: usize,
        mean_compatibility: Option<f64>,
    ) -> Result<()> {
        let epoch = self.log.len() + 1;
        let dev_metrics = if self.inputs.dev.is_empty() {
            None
        } else {
            let (t, a) = evaluate_model(model, self.inputs.dev)?;
            Some(DevMetrics {
                tri_c: t.f1,
                arg_c: a.f1,
            })
        };
        let heldout_compatibility = match self.scorer {
            Some(sc) if !self.inputs.heldout.is_empty() => {
                let c = prediction_compatibilities(model, sc, self.inputs.heldout, self.inputs.amr)?;
                Some(summarize_compatibility(&c).mean)
            }
            _ => None,
        };
        let hash = params_hash(&model.params);
        let path = match self.checkpoint_dir {
            Some(dir) => {
                let p = dir.join(format!("{}-epoch{epoch:03}.ckpt.json", method.name()));
                Checkpoint::from_extractor(model, self.config_hash, self.seed, Some(epoch)).save(&p)?;
                Some(p.display().to_string())
            }
            None => None,
        };
        let rec = CheckpointRecord {
            epoch,
            dev_f1: dev_metrics.map(|d| d.arg_c).unwrap_or(0.0),
            avg_compat: heldout_compatibility.unwrap_or(0.0),
            path,
        };
        let value = rec.criterion(self.selection);
        if self.best.as_ref().is_none_or(|(v, _)| value > *v) {
            self.best = Some((value, model.clone()));
        }
        self.checkpoints.push(rec);
        self.log.push(EpochLog {
            method: method.name().into(),
            stage,
            epoch,
            beta,
            labeled_loss,
            stf_loss,
            pseudo_count,
            mean_compatibility,
            dev_metrics,
            heldout_compatibility,
            checkpoint_hash: hash,
        });
        Ok(())
    }
}

fn non_finite(dir: Option<&Path>, what: String, ids: Vec<String>) -> Error {
    if let Some(d) = dir {
        let p: PathBuf = d.join("nonfinite_batch.json");
        let _ = std::fs::write(&p, serde_json::to_vec(&ids).unwrap_or_default());
    }
    Error::NonFiniteLoss(format!("{what}; batch sentences {ids:?}"))
}

/// Trainer for both stages. Construct with [`Trainer::new`], then run
/// [`Trainer::stage1`] and [`Trainer::stage2`].
pub struct Trainer<'a> {
    pub config: &'a StfConfig,
    pub inputs: RunInputs<'a>,
    /// Used for held-out compatibility logging and, when `feedback` is
    /// unset, as the STF feedback source.
    pub scorer: Option<&'a CompatibilityScorer>,
    /// Overrides the STF feedback source.
    pub feedback: Option<Feedback<'a>>,
    pub checkpoint_dir: Option<&'a Path>,
    pub config_hash: &'a str,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &'a StfConfig, inputs: RunInputs<'a>) -> Self {
        Self {
            config,
            inputs,
            scorer: None,
            feedback: None,
            checkpoint_dir: None,
            config_hash: "",
        }
    }

    fn recorder(&self) -> Recorder<'a> {
        Recorder {
            inputs: self.inputs,
            scorer: self.scorer,
            selection: self.config.selection,
            checkpoint_dir: self.checkpoint_dir,
            config_hash: self.config_hash,
            seed: self.config.seed,
            log: Vec::new(),
            checkpoints: Vec::new(),
            best: None,
        }
    }

    /// Supervised epochs on the labeled set.
    pub fn stage1(&self, model: &mut EventModel) -> Result<TrainOutcome> {
        self.config.validate()?;
        let labeled = model.prepare(self.inputs.labeled)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x51);
        let mut opt = Optimizer::new(self.config.stage1_optim, &model.params, &[ENCODER_PREFIX]);
        let mut rec = self.recorder();
        let bs = self.config.labeled_batch_size;
        for _ in 0..self.config.stage1_epochs {
            let mut order: Vec<usize> = (0..labeled.len()).collect();
            order.shuffle(&mut rng);
            let mut sum = 0.0;
            for chunk in order.chunks(bs) {
                let batch: Vec<_> = chunk.iter().map(|&i| labeled[i].clone()).collect();
                let l = model.batch_loss(&batch)?;
                if !l.total.is_finite() || !l.grads.is_finite() {
                    let ids = chunk.iter().map(|&i| self.inputs.labeled[i].sent_id.clone()).collect();
                    return Err(non_finite(self.checkpoint_dir, "stage 1".into(), ids));
                }
                opt.step(&mut model.params, &l.grads);
                sum += l.total * chunk.len() as f64;
            }
            let mean = sum / labeled.len().max(1) as f64;
            rec.record(model, Method::Supervised, 1, 0.0, mean, 0.0, 0, None)?;
        }
        finish(model, rec)
    }

    /// Stage-2 epochs with the given method, continuing from `model`.
    pub fn stage2(&self, model: &mut EventModel, method: Method) -> Result<TrainOutcome> {
        self.config.validate()?;
        let stf_feedback = match (self.feedback, self.scorer) {
            (Some(f), _) => Some(f),
            (None, Some(sc)) => Some(Feedback::Scorer(sc)),
            (None, None) => None,
        };
        if method == Method::Stf && stf_feedback.is_none() {
            return Err(Error::Config("STF needs a trained scorer".into()));
        }
        let cfg = self.config;
        let labeled = model.prepare(self.inputs.labeled)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x52);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4e);
        let mut opt = Optimizer::new(cfg.stage2_optim, &model.params, &[ENCODER_PREFIX]);
        opt.freeze(model.self_training_frozen());
        let mut rec = self.recorder();
        let use_pool = method != Method::Supervised && !self.inputs.unlabeled.is_empty();
        let n_roles = model.schema.n_roles();

        for e in 1..=cfg.total_epochs {
            let (beta, pseudo, mean_c) = if use_pool {
                let mut preds = predict_pool(model, self.inputs.unlabeled)?;
                corrupt_roles(&mut preds, cfg.label_noise_rate, n_roles, &mut noise_rng);
                let feedback = match method {
                    Method::Stf => stf_feedback.expect("checked above"),
                    _ => Feedback::Constant,
                };
                let (samples, _) =
                    score_predictions(&preds, self.inputs.unlabeled, &model.schema, feedback, self.inputs.amr)?;
                let mean_c = (method == Method::Stf && !samples.is_empty())
                    .then(|| samples.iter().map(|s| s.compatibility).sum::<f64>() / samples.len() as f64);
                let (beta, kept) = match method {
                    Method::Stf => {
                        let kept = match cfg.certainty_threshold {
                            Some(s) => threshold_filter(&samples, s)?,
                            None => samples,
                        };
                        (beta_schedule(e, cfg.total_epochs)?, kept)
                    }
                    _ => {
                        (1.0, vanilla_filter(&samples, cfg.vanilla_threshold))
                    }
                };
                (beta, group_samples(model, &kept, self.inputs.unlabeled)?, mean_c)
            } else {
                (
                    if method == Method::Stf { beta_schedule(e, cfg.total_epochs)? } else { 1.0 },
                    Vec::new(),
                    None,
                )
            };
            let pseudo_count: usize = pseudo.iter().map(|p| p.weights.len()).sum();

            let lab_steps = labeled.len().div_ceil(cfg.labeled_batch_size);
            let steps = lab_steps.max(pseudo.len().div_ceil(cfg.pseudo_batch_size));
            let mut lab_order: Vec<usize> = (0..labeled.len()).collect();
            lab_order.shuffle(&mut rng);
            let mut ps_order: Vec<usize> = (0..pseudo.len()).collect();
            ps_order.shuffle(&mut rng);

            let (mut lab_sum, mut stf_sum) = (0.0, 0.0);
            for step in 0..steps {
                let lb: Vec<_> = (0..cfg.labeled_batch_size)
                    .map(|k| (step * cfg.labeled_batch_size + k) % labeled.len())
                    .take(labeled.len().min(cfg.labeled_batch_size))
                    .map(|k| labeled[lab_order[k]].clone())
                    .collect();
                let lo = (step * cfg.pseudo_batch_size).min(pseudo.len());
                let hi = (lo + cfg.pseudo_batch_size).min(pseudo.len());
                let pb: Vec<PseudoSentence> = ps_order[lo..hi].iter().map(|&i| pseudo[i].clone()).collect();
                let l = stf_loss(model, &lb, &pb, beta)?;
                if !l.total.is_finite() || !l.grads.is_finite() {
                    let mut ids: Vec<String> = (0..lb.len())
                        .map(|k| {
                            let idx = lab_order[(step * cfg.labeled_batch_size + k) % labeled.len()];
                            self.inputs.labeled[idx].sent_id.clone()
                        })
                        .collect();
                    ids.extend(pb.iter().map(|p| self.inputs.unlabeled[p.sentence].sent_id.clone()));
                    return Err(non_finite(self.checkpoint_dir, format!("stage 2 epoch {e} step {step}"), ids));
                }
                opt.step(&mut model.params, &l.grads);
                lab_sum += l.labeled;
                stf_sum += l.stf;
            }
            let n = steps.max(1) as f64;
            rec.record(model, method, 2, beta, lab_sum / n, stf_sum / n, pseudo_count, mean_c)?;
        }
        finish(model, rec)
    }
}

fn finish(model: &EventModel, rec: Recorder<'_>) -> Result<TrainOutcome> {
    let best = rec.best.map(|(_, m)| m).unwrap_or_else(|| model.clone());
    Ok(TrainOutcome {
        model: model.clone(),
        best,
        log: rec.log,
        checkpoints: rec.checkpoints,
    })
}

/// Stage 1 followed by compatibility-weighted self-training. The log and
/// checkpoint series cover both stages.
pub fn run_stf(
    model: &mut EventModel,
    inputs: RunInputs<'_>,
    scorer: &CompatibilityScorer,
    config: &StfConfig,
) -> Result<TrainOutcome> {
    run_method(model, inputs, Some(scorer), config, Method::Stf)
}

/// Stage 1 followed by vanilla self-training.
pub fn vanilla_self_train(
    model: &mut EventModel,
    inputs: RunInputs<'_>,
    config: &StfConfig,
) -> Result<TrainOutcome> {
    run_method(model, inputs, None, config, Method::SelfTraining)
}

pub fn run_method(
    model: &mut EventModel,
    inputs: RunInputs<'_>,
    scorer: Option<&CompatibilityScorer>,
    config: &StfConfig,
    method: Method,
) -> Result<TrainOutcome> {
    let mut t = Trainer::new(config, inputs);
    t.scorer = scorer;
    let s1 = t.stage1(model)?;
    let s2 = t.stage2(model, method)?;
    Ok(merge(s1, s2))
}

/// Concatenates two consecutive outcomes, renumbering epochs.
pub fn merge(first: TrainOutcome, second: TrainOutcome) -> TrainOutcome {
    let offset = first.log.len();
    let mut log = first.log;
    log.extend(second.log.into_iter().map(|mut l| {
        l.epoch += offset;
        l
    }));
    let mut checkpoints = first.checkpoints;
    checkpoints.extend(second.checkpoints.into_iter().map(|mut c| {
        c.epoch += offset;
        c
    }));
    TrainOutcome {
        model: second.model,
        best: second.best,
        log,
        checkpoints,
    }
}
