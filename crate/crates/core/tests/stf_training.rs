mod common;

use std::collections::BTreeMap;

use common::*;
use stf_ee::checkpoint::params_hash;
use stf_ee::event::EventGraphPrediction;
use stf_ee::pipeline::RunData;
use stf_ee::stf::{
    group_samples, predict_pool, run_method, score_predictions, stf_loss, vanilla_filter,
    weighted_pseudo_loss, Feedback, Method, PseudoSample, RunInputs, Trainer,
};

#[test]
fn zero_weights_leave_the_labeled_loss() {
    let data = tiny_data(1);
    let model = tiny_extractor(&data, 1);
    let labeled = model.prepare(&data.labeled[..6]).unwrap();
    let gold = data.unlabeled_gold.as_ref().unwrap();
    let pseudo = group_samples(&model, &gold_samples(gold, &data.schema, 0.5), &data.unlabeled).unwrap();
    assert!(!pseudo.is_empty());
    let lab = model.batch_loss(&labeled).unwrap();
    let l = stf_loss(&model, &labeled, &pseudo[..3], 0.7).unwrap();
    assert_eq!(l.total, lab.total);
    assert_eq!(l.stf, 0.0);
    assert_eq!(max_grad_diff(&model.params, &l.grads, &lab.grads, 1.0), 0.0);
}

#[test]
fn zero_beta_drops_the_pseudo_batch() {
    let data = tiny_data(2);
    let model = tiny_extractor(&data, 2);
    let labeled = model.prepare(&data.labeled[..6]).unwrap();
    let gold = data.unlabeled_gold.as_ref().unwrap();
    let pseudo = group_samples(&model, &gold_samples(gold, &data.schema, 0.9), &data.unlabeled).unwrap();
    let lab = model.batch_loss(&labeled).unwrap();
    let l = stf_loss(&model, &labeled, &pseudo, 0.0).unwrap();
    assert_eq!(l.total, lab.total);
    assert_eq!(max_grad_diff(&model.params, &l.grads, &lab.grads, 1.0), 0.0);
    assert!(stf_loss(&model, &labeled, &pseudo, -0.1).is_err());
}

fn single_pair(data: &RunData, weight_c: f64) -> Vec<PseudoSample> {
    let gold = data.unlabeled_gold.as_ref().unwrap();
    let mut s = gold_samples(gold, &data.schema, weight_c);
    s.truncate(1);
    s
}

#[test]
fn pseudo_gradient_scales_with_the_weight() {
    let data = tiny_data(3);
    let model = tiny_extractor(&data, 3);
    let unit = group_samples(&model, &single_pair(&data, 1.0), &data.unlabeled).unwrap();
    let (l1, g1) = weighted_pseudo_loss(&model, &unit[0]).unwrap();
    assert!(grad_norm(&model.params, &g1) > 0.0);
    for c in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let p = group_samples(&model, &single_pair(&data, c), &data.unlabeled).unwrap();
        let w = 2.0 * c - 1.0;
        let (lw, gw) = weighted_pseudo_loss(&model, &p[0]).unwrap();
        assert!((lw - w * l1).abs() < 1e-9);
        assert!(max_grad_diff(&model.params, &gw, &g1, w) < 1e-9, "w = {w}");
    }
}

#[test]
fn stf_loss_is_additive_in_its_parts() {
    let data = tiny_data(4);
    let model = tiny_extractor(&data, 4);
    let labeled = model.prepare(&data.labeled[..5]).unwrap();
    let gold = data.unlabeled_gold.as_ref().unwrap();
    let mut samples = gold_samples(gold, &data.schema, 0.8);
    for (k, s) in samples.iter_mut().enumerate() {
        s.compatibility = (k % 5) as f64 / 4.0;
        s.weight = 2.0 * s.compatibility - 1.0;
    }
    let pseudo = group_samples(&model, &samples, &data.unlabeled).unwrap();
    let batch = &pseudo[..pseudo.len().min(4)];
    let beta = 0.35;
    let l = stf_loss(&model, &labeled, batch, beta).unwrap();
    let lab = model.batch_loss(&labeled).unwrap().total;
    let parts: f64 = batch.iter().map(|p| weighted_pseudo_loss(&model, p).unwrap().0).sum::<f64>() / batch.len() as f64;
    assert!((l.total - (lab + beta * parts)).abs() < 1e-9);
    let gs: Vec<_> = batch.iter().map(|p| weighted_pseudo_loss(&model, p).unwrap().1).collect();
    let mut expect = model.batch_loss(&labeled).unwrap().grads;
    for g in &gs {
        expect.add_scaled(g, beta / batch.len() as f64);
    }
    assert!(max_grad_diff(&model.params, &l.grads, &expect, 1.0) < 1e-9);
}

#[test]
fn empty_pool_reduces_to_supervised_training() {
    let data = tiny_data(5);
    let amr = BTreeMap::new();
    let inputs = RunInputs {
        labeled: &data.labeled,
        unlabeled: &[],
        amr: &amr,
        dev: &[],
        heldout: &[],
    };
    let cfg = tiny_stf(5);
    let mut a = tiny_extractor(&data, 5);
    let mut b = a.clone();
    let sup = run_method(&mut a, inputs, None, &cfg, Method::Supervised).unwrap();
    let mut t = Trainer::new(&cfg, inputs);
    t.feedback = Some(Feedback::Constant);
    let s1 = t.stage1(&mut b).unwrap();
    let s2 = t.stage2(&mut b, Method::Stf).unwrap();
    let stf = stf_ee::stf::merge(s1, s2);
    assert_eq!(sup.log.len(), stf.log.len());
    for (x, y) in sup.log.iter().zip(&stf.log) {
        assert_eq!(x.labeled_loss, y.labeled_loss);
        assert_eq!(x.checkpoint_hash, y.checkpoint_hash);
        assert_eq!(y.pseudo_count, 0);
    }
    assert_eq!(params_hash(&a.params), params_hash(&b.params));
}

#[test]
fn one_checkpoint_per_epoch_across_both_stages() {
    let data = tiny_data(6);
    let cfg = tiny_stf(6);
    let dir = tempfile::tempdir().unwrap();
    let mut model = tiny_extractor(&data, 6);
    let mut t = Trainer::new(&cfg, data.inputs());
    t.checkpoint_dir = Some(dir.path());
    t.feedback = Some(Feedback::Oracle(data.unlabeled_gold.as_deref().unwrap()));
    let s1 = t.stage1(&mut model).unwrap();
    let s2 = t.stage2(&mut model, Method::Stf).unwrap();
    let out = stf_ee::stf::merge(s1, s2);
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(files, cfg.stage1_epochs + cfg.total_epochs);
    assert_eq!(out.checkpoints.len(), cfg.stage1_epochs + cfg.total_epochs);
    let epochs: Vec<usize> = out.log.iter().map(|l| l.epoch).collect();
    assert_eq!(epochs, (1..=4).collect::<Vec<_>>());
    let betas: Vec<f64> = out.log.iter().filter(|l| l.stage == 2).map(|l| l.beta).collect();
    assert_eq!(betas, vec![0.5, 1.0]);
}

#[test]
fn vanilla_threshold_one_is_supervised_continuation() {
    let data = tiny_data(7);
    let mut cfg = tiny_stf(7);
    cfg.vanilla_threshold = 1.0;
    let start = tiny_extractor(&data, 7);
    let t = Trainer::new(&cfg, data.inputs());
    let mut a = start.clone();
    let mut b = start.clone();
    let st = t.stage2(&mut a, Method::SelfTraining).unwrap();
    t.stage2(&mut b, Method::Supervised).unwrap();
    assert!(st.log.iter().all(|l| l.pseudo_count == 0));
    assert_eq!(params_hash(&a.params), params_hash(&b.params));
}

#[test]
fn vanilla_selection_is_monotone() {
    let data = tiny_data(8);
    let mut s = gold_samples(data.unlabeled_gold.as_ref().unwrap(), &data.schema, 0.5);
    for (k, x) in s.iter_mut().enumerate() {
        x.prob = (k % 11) as f64 / 10.0;
    }
    let kept = vanilla_filter(&s, 0.9);
    assert!(kept.iter().all(|x| x.prob > 0.9 && x.weight == 1.0));
    let mut last = usize::MAX;
    for t in [0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
        let n = vanilla_filter(&s, t).len();
        assert!(n <= last);
        last = n;
    }
    assert_eq!(last, 0);
}

#[test]
fn pseudo_labels_count_every_predicted_pair() {
    let data = tiny_data(9);
    // An untrained extractor predicts plenty of pairs.
    let model = tiny_extractor(&data, 9);
    let preds = predict_pool(&model, &data.unlabeled).unwrap();
    let expected: usize = data
        .unlabeled
        .iter()
        .map(|s| model.predict(&s.tokens).unwrap().arguments.len())
        .sum();
    let (samples, stats) =
        score_predictions(&preds, &data.unlabeled, &data.schema, Feedback::Constant, &data.amr).unwrap();
    assert!(expected > 0);
    assert_eq!(samples.len(), expected);
    assert_eq!(stats.missing_amr, 0);
    for (i, p) in preds.iter().enumerate() {
        if p.arguments.is_empty() {
            assert!(samples.iter().all(|s| s.sentence != i));
        }
    }
}

#[test]
fn oracle_feedback_on_gold_predictions_gives_unit_weights() {
    let data = tiny_data(10);
    let gold = data.unlabeled_gold.as_ref().unwrap();
    let preds: Vec<EventGraphPrediction> = gold
        .iter()
        .map(|s| EventGraphPrediction::from_gold(s, &data.schema).unwrap())
        .collect();
    let (samples, _) = score_predictions(&preds, &data.unlabeled, &data.schema, Feedback::Oracle(gold), &data.amr).unwrap();
    assert!(!samples.is_empty());
    assert!(samples.iter().all(|s| s.weight == 1.0));
    let mut wrong = preds.clone();
    for p in &mut wrong {
        for a in &mut p.arguments {
            a.role = if a.role == 1 { 2 } else { 1 };
        }
    }
    let (samples, _) = score_predictions(&wrong, &data.unlabeled, &data.schema, Feedback::Oracle(gold), &data.amr).unwrap();
    assert!(samples.iter().all(|s| s.weight == -1.0));
}

#[test]
fn sentences_without_amr_are_skipped_and_counted() {
    let data = tiny_data(11);
    let gold = data.unlabeled_gold.as_ref().unwrap();
    let preds: Vec<EventGraphPrediction> = gold
        .iter()
        .map(|s| EventGraphPrediction::from_gold(s, &data.schema).unwrap())
        .collect();
    let (scorer, _) = stf_ee::pipeline::train_scorer(
        &data,
        &stf_ee::scorer::ScorerConfig {
            d_model: 8,
            layers: 1,
            epochs: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let with_args = preds.iter().filter(|p| !p.arguments.is_empty()).count();
    let (samples, stats) =
        score_predictions(&preds, &data.unlabeled, &data.schema, Feedback::Scorer(&scorer), &BTreeMap::new()).unwrap();
    assert!(samples.is_empty());
    assert_eq!(stats.missing_amr, with_args);
    let (samples, _) =
        score_predictions(&preds, &data.unlabeled, &data.schema, Feedback::Scorer(&scorer), &data.amr).unwrap();
    let pairs: usize = preds.iter().map(|p| p.arguments.len()).sum();
    assert_eq!(samples.len(), pairs);
    for s in &samples {
        assert!(s.compatibility > 0.0 && s.compatibility < 1.0);
        assert_eq!(s.weight, 2.0 * s.compatibility - 1.0);
    }
}

#[test]
fn seeded_runs_are_bit_identical() {
    let data = tiny_data(12);
    let cfg = tiny_stf(12);
    let run = || {
        let mut m = tiny_extractor(&data, 12);
        let mut t = Trainer::new(&cfg, data.inputs());
        t.feedback = Some(Feedback::Oracle(data.unlabeled_gold.as_deref().unwrap()));
        t.stage1(&mut m).unwrap();
        let out = t.stage2(&mut m, Method::Stf).unwrap();
        (out.log, params_hash(&m.params))
    };
    assert_eq!(run(), run());
}
