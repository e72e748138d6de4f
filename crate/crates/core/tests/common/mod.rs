#![allow(dead_code)]

use stf_ee::amr::TokenSpan;
use stf_ee::autograd::{Gradients, ParamStore};
use stf_ee::corpus::{generate_synthetic, LabeledSentence, SynthConfig};
use stf_ee::event::{EventModel, ExtractorConfig, LabelSchema};
use stf_ee::pipeline::{new_extractor, RunData};
use stf_ee::stf::{PseudoSample, StfConfig};

pub fn tiny_data(seed: u64) -> RunData {
    let cfg = SynthConfig {
        n_labeled: 24,
        n_unlabeled: 24,
        n_heldout: 8,
        n_test: 8,
        vocab_size: 40,
        event_rate: 0.6,
        seed,
        ..SynthConfig::default()
    };
    RunData::from_synthetic(generate_synthetic(&cfg).unwrap())
}

pub fn tiny_extractor(data: &RunData, seed: u64) -> EventModel {
    new_extractor(
        data,
        &ExtractorConfig {
            d_model: 8,
            layers: 1,
            max_len: 64,
            seed,
        },
    )
}

pub fn tiny_stf(seed: u64) -> StfConfig {
    StfConfig {
        stage1_epochs: 2,
        total_epochs: 2,
        labeled_batch_size: 8,
        pseudo_batch_size: 4,
        seed,
        ..StfConfig::default()
    }
}

/// One sample per gold `(trigger, argument)` pair of `pool`, all with
/// compatibility `c`.
pub fn gold_samples(pool: &[LabeledSentence], schema: &LabelSchema, c: f64) -> Vec<PseudoSample> {
    let mut out = Vec::new();
    for (i, s) in pool.iter().enumerate() {
        for ev in &s.events {
            for a in &ev.args {
                out.push(PseudoSample {
                    sentence: i,
                    trigger: TokenSpan::new(ev.trigger.start, ev.trigger.end),
                    event_type: schema.type_id(&ev.trigger.event_type).unwrap(),
                    argument: TokenSpan::new(a.start, a.end),
                    role: schema.role_id(&a.role).unwrap(),
                    prob: 1.0,
                    compatibility: c,
                    weight: 2.0 * c - 1.0,
                });
            }
        }
    }
    out
}

/// Largest absolute difference between `a` and `scale * b` over every
/// parameter; missing gradients count as zero.
pub fn max_grad_diff(store: &ParamStore, a: &Gradients, b: &Gradients, scale: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for id in store.ids() {
        let shape = store.get(id).shape();
        let n = shape.0 * shape.1;
        let av = a.get(id).map(|t| t.data.clone()).unwrap_or_else(|| vec![0.0; n]);
        let bv = b.get(id).map(|t| t.data.clone()).unwrap_or_else(|| vec![0.0; n]);
        for (x, y) in av.iter().zip(&bv) {
            worst = worst.max((x - scale * y).abs());
        }
    }
    worst
}

pub fn grad_norm(store: &ParamStore, g: &Gradients) -> f64 {
    store
        .ids()
        .filter_map(|id| g.get(id))
        .map(|t| t.data.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Compares analytic gradients with central differences on up to
/// `per_param` coordinates of every parameter. Returns the worst relative
/// error; coordinates where both values are below `1e-7` in magnitude are
/// compared absolutely instead.
pub fn finite_difference_check(
    store: &ParamStore,
    analytic: &Gradients,
    per_param: usize,
    mut loss: impl FnMut(&ParamStore) -> f64,
) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = store.clone();
    for id in store.ids() {
        let n = store.get(id).data.len();
        let step = (n / per_param).max(1);
        for k in (0..n).step_by(step).take(per_param) {
            let x = store.get(id).data[k];
            probe.get_mut(id).data[k] = x + h;
            let up = loss(&probe);
            probe.get_mut(id).data[k] = x - h;
            let down = loss(&probe);
            probe.get_mut(id).data[k] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(id).map(|t| t.data[k]).unwrap_or(0.0);
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-7 { (a - numeric).abs() } else { (a - numeric).abs() / scale };
            if std::env::var("FD_DEBUG").is_ok() && err > 1e-3 {
                eprintln!("{} [{k}]: analytic {a:e} numeric {numeric:e}", store.name(id));
            }
            worst = worst.max(err);
        }
    }
    worst
}
