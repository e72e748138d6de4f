//! SGD and Adam with per-group learning rates and frozen parameters.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Learning rate and decoupled weight decay for the encoder and for
/// everything else.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub encoder_lr: f64,
    pub encoder_weight_decay: f64,
    pub lr: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub clip_norm: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            encoder_lr: 1e-3,
            encoder_weight_decay: 0.0,
            lr: 1e-3,
            weight_decay: 0.0,
            clip_norm: 5.0,
        }
    }
}

pub struct Optimizer {
    config: OptimConfig,
    encoder: HashSet<ParamId>,
    frozen: HashSet<ParamId>,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
    t: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    /// Parameters whose name starts with any of `encoder_prefixes` use the
    /// encoder learning rate.
    pub fn new(config: OptimConfig, store: &ParamStore, encoder_prefixes: &[&str]) -> Self {
        let encoder = store
            .iter()
            .filter(|(_, n, _)| encoder_prefixes.iter().any(|p| n.starts_with(p)))
            .map(|(id, _, _)| id)
            .collect();
        Self {
            config,
            encoder,
            frozen: HashSet::new(),
            m: vec![None; store.len()],
            v: vec![None; store.len()],
            t: 0,
        }
    }

    pub fn freeze(&mut self, ids: impl IntoIterator<Item = ParamId>) {
        self.frozen.extend(ids);
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen.contains(&id)
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.t += 1;
        let clip = if self.config.clip_norm > 0.0 {
            let norm = grads
                .iter()
                .filter(|(id, _)| !self.frozen.contains(id))
                .map(|(_, g)| g.sq_norm())
                .sum::<f64>()
                .sqrt();
            if norm > self.config.clip_norm {
                self.config.clip_norm / norm
            } else {
                1.0
            }
        } else {
            1.0
        };
        for (id, g) in grads.iter() {
            if self.frozen.contains(&id) {
                continue;
            }
            let (lr, wd) = if self.encoder.contains(&id) {
                (self.config.encoder_lr, self.config.encoder_weight_decay)
            } else {
                (self.config.lr, self.config.weight_decay)
            };
            let p = store.get_mut(id);
            match self.config.kind {
                OptimizerKind::Sgd => {
                    for (x, gv) in p.data.iter_mut().zip(&g.data) {
                        *x -= lr * (clip * gv + wd * *x);
                    }
                }
                OptimizerKind::Adam => {
                    let m = self.m[id.0].get_or_insert_with(|| Tensor::zeros(g.rows, g.cols));
                    let v = self.v[id.0].get_or_insert_with(|| Tensor::zeros(g.rows, g.cols));
                    let bc1 = 1.0 - BETA1.powi(self.t as i32);
                    let bc2 = 1.0 - BETA2.powi(self.t as i32);
                    for (((x, gv), mv), vv) in p
                        .data
                        .iter_mut()
                        .zip(&g.data)
                        .zip(m.data.iter_mut())
                        .zip(v.data.iter_mut())
                    {
                        let gc = clip * gv;
                        *mv = BETA1 * *mv + (1.0 - BETA1) * gc;
                        *vv = BETA2 * *vv + (1.0 - BETA2) * gc * gc;
                        let update = (*mv / bc1) / ((*vv / bc2).sqrt() + EPS);
                        *x -= lr * (update + wd * *x);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Graph;

    fn quadratic_descends(kind: OptimizerKind) {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::row_vector(vec![3.0, -2.0]));
        let cfg = OptimConfig {
            kind,
            lr: 0.1,
            clip_norm: 0.0,
            ..OptimConfig::default()
        };
        let mut opt = Optimizer::new(cfg, &store, &[]);
        let loss = |store: &ParamStore| {
            let mut g = Graph::new(store);
            let p = g.param(w);
            let sq = g.matmul_t(p, p);
            let v = g.value(sq).item();
            (v, g.backward(sq))
        };
        let (l0, _) = loss(&store);
        for _ in 0..50 {
            let (_, grads) = loss(&store);
            opt.step(&mut store, &grads);
        }
        assert!(loss(&store).0 < 0.1 * l0);
    }

    #[test]
    fn sgd_descends() {
        quadratic_descends(OptimizerKind::Sgd);
    }

    #[test]
    fn adam_descends() {
        quadratic_descends(OptimizerKind::Adam);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::row_vector(vec![1.0]));
        let mut opt = Optimizer::new(OptimConfig::default(), &store, &[]);
        opt.freeze([w]);
        let mut g = Graph::new(&store);
        let p = g.param(w);
        let grads = g.backward(p);
        opt.step(&mut store, &grads);
        assert_eq!(store.get(w).data, vec![1.0]);
    }
}
