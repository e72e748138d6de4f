//! Classification F1, scorer agreement, compatibility-based model
//! selection and threshold-sweep reports.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::amr::{AmrGraph, TokenSpan};
use crate::corpus::{FlaggedPrediction, LabeledSentence};
use crate::error::{Error, Result};
use crate::event::{EventGraphPrediction, EventModel};
use crate::scorer::CompatibilityScorer;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Greedy one-to-one matching in gold order; returns the match count.
fn greedy_matches<T: PartialEq>(pred: &[T], gold: &[T]) -> usize {
    let mut used = vec![false; pred.len()];
    let mut tp = 0;
    for g in gold {
        if let Some(i) = (0..pred.len()).find(|&i| !used[i] && pred[i] == *g) {
            used[i] = true;
            tp += 1;
        }
    }
    tp
}

fn micro<T: PartialEq>(
    pred: &[EventGraphPrediction],
    gold: &[EventGraphPrediction],
    items: impl Fn(&EventGraphPrediction) -> Vec<T>,
) -> Result<Prf> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let (pi, gi) = (items(p), items(g));
        tp += greedy_matches(&pi, &gi);
        np += pi.len();
        ng += gi.len();
    }
    Ok(Prf::from_counts(tp, np - tp, ng - tp))
}

/// A trigger counts when its span and type both match.
pub fn f1_trigger_classification(
    pred: &[EventGraphPrediction],
    gold: &[EventGraphPrediction],
) -> Result<Prf> {
    micro(pred, gold, |g| {
        g.triggers
            .iter()
            .map(|t| (t.span, t.event_type))
            .collect::<Vec<(TokenSpan, usize)>>()
    })
}

/// An argument counts when its span, its role and the event type of its
/// trigger all match.
pub fn f1_argument_classification(
    pred: &[EventGraphPrediction],
    gold: &[EventGraphPrediction],
) -> Result<Prf> {
    micro(pred, gold, |g| {
        g.arguments
            .iter()
            .map(|a| (a.span, a.role, g.triggers[a.trigger].event_type))
            .collect::<Vec<(TokenSpan, usize, usize)>>()
    })
}

/// Tri-C and Arg-C of `model` on annotated sentences.
pub fn evaluate_model(model: &EventModel, sentences: &[LabeledSentence]) -> Result<(Prf, Prf)> {
    use rayon::prelude::*;
    let pred: Vec<EventGraphPrediction> = sentences
        .par_iter()
        .map(|s| model.predict(&s.tokens))
        .collect::<Result<_>>()?;
    let gold: Vec<EventGraphPrediction> = sentences
        .iter()
        .map(|s| EventGraphPrediction::from_gold(s, &model.schema))
        .collect::<Result<_>>()?;
    Ok((
        f1_trigger_classification(&pred, &gold)?,
        f1_argument_classification(&pred, &gold)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub accuracy: f64,
    /// Detection of correct predictions, treating "correct" as positive.
    pub prf: Prf,
    pub n: usize,
}

/// Verdict `c > 0.5` compared with the gold flags.
pub fn agreement_from_scores(scores: &[f64], flags: &[bool]) -> Result<Agreement> {
    if scores.len() != flags.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: flags.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut agree) = (0, 0, 0, 0);
    for (&c, &f) in scores.iter().zip(flags) {
        let verdict = c > 0.5;
        if verdict == f {
            agree += 1;
        }
        match (verdict, f) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let n = flags.len();
    Ok(Agreement {
        accuracy: if n == 0 { 0.0 } else { agree as f64 / n as f64 },
        prf: Prf::from_counts(tp, fp, fn_),
        n,
    })
}

/// Scores every flagged prediction and measures agreement with its flag.
pub fn scorer_agreement(
    scorer: &CompatibilityScorer,
    flagged: &[FlaggedPrediction],
    sentences: &[LabeledSentence],
    amr: &BTreeMap<String, AmrGraph>,
) -> Result<Agreement> {
    let by_id: BTreeMap<&str, &LabeledSentence> =
        sentences.iter().map(|s| (s.sent_id.as_str(), s)).collect();
    let mut items = Vec::with_capacity(flagged.len());
    for f in flagged {
        let s = by_id
            .get(f.sent_id.as_str())
            .ok_or_else(|| Error::MissingAmr(f.sent_id.clone()))?;
        let graph = amr.get(&f.sent_id).ok_or_else(|| Error::MissingAmr(f.sent_id.clone()))?;
        let seq = scorer.sequence_for(
            Some(graph),
            s.tokens.len(),
            scorer.schema.type_id(&f.event_type)?,
            f.trigger,
            f.argument,
            scorer.schema.role_id(&f.role)?,
        )?;
        items.push((seq, s.tokens.as_slice()));
    }
    let scores = scorer.score_all(&items)?;
    let flags: Vec<bool> = flagged.iter().map(|f| f.correct).collect();
    agreement_from_scores(&scores, &flags)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompatibilitySummary {
    pub mean: f64,
    pub n_pairs: usize,
    /// Set when the extractor predicted nothing and the mean defaulted to 0.
    pub no_predictions: bool,
}

/// Compatibility of every predicted `(trigger, argument, role)` on
/// `sentences`.
pub fn prediction_compatibilities(
    extractor: &EventModel,
    scorer: &CompatibilityScorer,
    sentences: &[LabeledSentence],
    amr: &BTreeMap<String, AmrGraph>,
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let per: Vec<Result<Vec<f64>>> = sentences
        .par_iter()
        .map(|s| {
            let graph = amr.get(&s.sent_id).ok_or_else(|| Error::MissingAmr(s.sent_id.clone()))?;
            let pred = extractor.predict(&s.tokens)?;
            let mut out = Vec::with_capacity(pred.arguments.len());
            for a in &pred.arguments {
                let t = &pred.triggers[a.trigger];
                let seq = scorer.sequence_for(Some(graph), s.tokens.len(), t.event_type, t.span, a.span, a.role);
                match seq.and_then(|q| scorer.score(&q, &s.tokens)) {
                    Ok(c) => out.push(c),
                    // Paths through unaligned nodes cannot be scored.
                    Err(Error::UnalignedNode(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect();
    let mut out = Vec::new();
    for r in per {
        out.extend(r?);
    }
    Ok(out)
}

pub fn average_compatibility(
    extractor: &EventModel,
    scorer: &CompatibilityScorer,
    heldout: &[LabeledSentence],
    amr: &BTreeMap<String, AmrGraph>,
) -> Result<CompatibilitySummary> {
    let scores = prediction_compatibilities(extractor, scorer, heldout, amr)?;
    Ok(summarize_compatibility(&scores))
}

pub fn summarize_compatibility(scores: &[f64]) -> CompatibilitySummary {
    if scores.is_empty() {
        log::warn!("no predictions on the held-out set; compatibility defaults to 0");
        return CompatibilitySummary {
            mean: 0.0,
            n_pairs: 0,
            no_predictions: true,
        };
    }
    CompatibilitySummary {
        mean: scores.iter().sum::<f64>() / scores.len() as f64,
        n_pairs: scores.len(),
        no_predictions: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    DevF1,
    AvgCompat,
}

/// Per-epoch figures that model selection chooses from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub epoch: usize,
    pub dev_f1: f64,
    pub avg_compat: f64,
    pub path: Option<String>,
}

impl CheckpointRecord {
    pub fn criterion(&self, c: SelectionCriterion) -> f64 {
        match c {
            SelectionCriterion::DevF1 => self.dev_f1,
            SelectionCriterion::AvgCompat => self.avg_compat,
        }
    }
}

/// Index of the largest value; the earliest wins ties.
pub fn argmax_earliest(values: &[f64]) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn select_checkpoint(
    series: &[CheckpointRecord],
    criterion: SelectionCriterion,
) -> Result<&CheckpointRecord> {
    let values: Vec<f64> = series.iter().map(|r| r.criterion(criterion)).collect();
    Ok(&series[argmax_earliest(&values)?])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub f1: f64,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

pub fn sweep_report(mut rows: Vec<SweepRow>) -> SweepReport {
    rows.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
    SweepReport { rows }
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serialises")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,f1,retained\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.6},{}", r.threshold, r.f1, r.retained);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:>9}  {:>8}  {:>8}\n", "threshold", "f1", "retained");
        for r in &self.rows {
            let _ = writeln!(out, "{:>9.2}  {:>8.4}  {:>8}", r.threshold, r.f1, r.retained);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{PredictedArgument, PredictedTrigger};

    fn trig(s: usize, ty: usize) -> PredictedTrigger {
        PredictedTrigger {
            span: TokenSpan::new(s, s + 1),
            event_type: ty,
            prob: 1.0,
        }
    }

    fn arg(t: usize, s: usize, role: usize) -> PredictedArgument {
        PredictedArgument {
            trigger: t,
            span: TokenSpan::new(s, s + 1),
            role,
            prob: 1.0,
        }
    }

    #[test]
    fn identical_graphs_score_one() {
        let g = vec![EventGraphPrediction {
            triggers: vec![trig(1, 0)],
            arguments: vec![arg(0, 0, 1)],
        }];
        for prf in [
            f1_trigger_classification(&g, &g).unwrap(),
            f1_argument_classification(&g, &g).unwrap(),
        ] {
            assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn empty_predictions() {
        let gold = vec![EventGraphPrediction {
            triggers: vec![trig(1, 0)],
            arguments: vec![],
        }];
        let pred = vec![EventGraphPrediction::default()];
        let p = f1_trigger_classification(&pred, &gold).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn one_correct_one_spurious() {
        let gold = vec![EventGraphPrediction {
            triggers: vec![trig(1, 0), trig(4, 1)],
            arguments: vec![],
        }];
        let pred = vec![EventGraphPrediction {
            triggers: vec![trig(1, 0), trig(6, 1)],
            arguments: vec![],
        }];
        let p = f1_trigger_classification(&pred, &gold).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn argument_counts() {
        let gold = vec![EventGraphPrediction {
            triggers: vec![trig(1, 0)],
            arguments: vec![arg(0, 0, 1), arg(0, 2, 2), arg(0, 3, 3)],
        }];
        let pred = vec![EventGraphPrediction {
            triggers: vec![trig(1, 0)],
            arguments: vec![arg(0, 0, 1), arg(0, 2, 3)],
        }];
        let p = f1_argument_classification(&pred, &gold).unwrap();
        assert_eq!(p.precision, 0.5);
        assert!((p.recall - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.f1 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn wrong_event_type_is_fp_and_fn() {
        let gold = vec![EventGraphPrediction {
            triggers: vec![trig(1, 0)],
            arguments: vec![arg(0, 0, 1)],
        }];
        let pred = vec![EventGraphPrediction {
            triggers: vec![trig(1, 1)],
            arguments: vec![arg(0, 0, 1)],
        }];
        let p = f1_argument_classification(&pred, &gold).unwrap();
        assert_eq!((p.tp, p.fp, p.fn_), (0, 1, 1));
    }

    #[test]
    fn length_mismatch() {
        let one = vec![EventGraphPrediction::default()];
        assert!(matches!(
            f1_trigger_classification(&one, &[]),
            Err(Error::LengthMismatch { left: 1, right: 0 })
        ));
    }

    #[test]
    fn agreement_rules() {
        let flags = [true, false, true, true, false, true, false, true, true, false];
        let oracle: Vec<f64> = flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
        assert_eq!(agreement_from_scores(&oracle, &flags).unwrap().accuracy, 1.0);
        let half = vec![0.5; 10];
        let a = agreement_from_scores(&half, &flags).unwrap();
        assert_eq!(a.prf.tp + a.prf.fp, 0);
        // flip three verdicts of the oracle
        let mut seven = oracle.clone();
        for i in [0, 1, 2] {
            seven[i] = 1.0 - seven[i];
        }
        assert!((agreement_from_scores(&seven, &flags).unwrap().accuracy - 0.7).abs() < 1e-15);
    }

    #[test]
    fn compatibility_mean() {
        let s = summarize_compatibility(&[0.2, 0.8]);
        assert_eq!(s.mean, 0.5);
        let e = summarize_compatibility(&[]);
        assert!(e.no_predictions && e.mean == 0.0);
    }

    #[test]
    fn selection_ties_and_errors() {
        assert_eq!(argmax_earliest(&[0.3]).unwrap(), 0);
        assert_eq!(argmax_earliest(&[0.3, 0.7, 0.7]).unwrap(), 1);
        assert!(matches!(argmax_earliest(&[]), Err(Error::EmptySeries)));
        let recs: Vec<CheckpointRecord> = [0.1, 0.4, 0.2]
            .iter()
            .enumerate()
            .map(|(i, &v)| CheckpointRecord {
                epoch: i,
                dev_f1: 0.0,
                avg_compat: v,
                path: None,
            })
            .collect();
        assert_eq!(select_checkpoint(&recs, SelectionCriterion::AvgCompat).unwrap().epoch, 1);
        assert_eq!(select_checkpoint(&recs, SelectionCriterion::DevF1).unwrap().epoch, 0);
    }

    #[test]
    fn sweep_rows_sorted_and_echoed() {
        let rows: Vec<SweepRow> = [0.9, 0.5, 0.7, 0.6, 0.8]
            .iter()
            .map(|&t| SweepRow {
                threshold: t,
                f1: t / 2.0,
                retained: 10,
            })
            .collect();
        let r = sweep_report(rows);
        let ts: Vec<f64> = r.rows.iter().map(|r| r.threshold).collect();
        assert_eq!(ts, vec![0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(r.to_csv().lines().count(), 6);
        assert!(r.to_csv().contains("\n0.7,"));
        assert_eq!(r.to_table().lines().count(), 6);
    }
}
