//! Linear-chain CRF scoring, likelihood and decoding.
//!
//! A tag sequence `y` over `N` positions scores
//! `S(y) = sum_i E[i, y_i] + sum_i A[y_i, y_{i+1}]`, with no start or end
//! transitions.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{argmax, log_sum_exp, Tensor};

fn check_shapes(emissions: &Tensor, transitions: &Tensor, n_tags: Option<usize>) -> Result<()> {
    let k = emissions.cols;
    if emissions.rows == 0 {
        return Err(Error::EmptyInput);
    }
    if transitions.rows != k || transitions.cols != k {
        return Err(Error::ShapeMismatch(format!(
            "transitions {}x{} for {k} tags",
            transitions.rows, transitions.cols
        )));
    }
    if let Some(n) = n_tags {
        if n != emissions.rows {
            return Err(Error::ShapeMismatch(format!(
                "{n} gold tags for {} positions",
                emissions.rows
            )));
        }
    }
    Ok(())
}

/// `S(y)` for a given tag sequence.
pub fn sequence_score(emissions: &Tensor, transitions: &Tensor, tags: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, &t) in tags.iter().enumerate() {
        s += emissions.get(i, t);
        if i + 1 < tags.len() {
            s += transitions.get(t, tags[i + 1]);
        }
    }
    s
}

/// Forward log-potentials `alpha[i][t]`.
fn forward(emissions: &Tensor, transitions: &Tensor) -> Vec<Vec<f64>> {
    let (n, k) = emissions.shape();
    let mut alpha = vec![emissions.row(0).to_vec()];
    let mut buf = vec![0.0; k];
    for i in 1..n {
        let prev = &alpha[i - 1];
        let mut cur = vec![0.0; k];
        for (t, c) in cur.iter_mut().enumerate() {
            for (s, b) in buf.iter_mut().enumerate() {
                *b = prev[s] + transitions.get(s, t);
            }
            *c = log_sum_exp(&buf) + emissions.get(i, t);
        }
        alpha.push(cur);
    }
    alpha
}

fn backward_potentials(emissions: &Tensor, transitions: &Tensor) -> Vec<Vec<f64>> {
    let (n, k) = emissions.shape();
    let mut beta = vec![vec![0.0; k]; n];
    let mut buf = vec![0.0; k];
    for i in (0..n - 1).rev() {
        for s in 0..k {
            for (t, b) in buf.iter_mut().enumerate() {
                *b = transitions.get(s, t) + emissions.get(i + 1, t) + beta[i + 1][t];
            }
            beta[i][s] = log_sum_exp(&buf);
        }
    }
    beta
}

/// Log partition function over all `k^N` tag sequences.
pub fn log_partition(emissions: &Tensor, transitions: &Tensor) -> Result<f64> {
    check_shapes(emissions, transitions, None)?;
    let alpha = forward(emissions, transitions);
    Ok(log_sum_exp(alpha.last().expect("non-empty")))
}

/// Negative log-likelihood of `gold` plus its gradients with respect to the
/// emissions and the transitions (forward-backward marginals).
pub fn nll_with_grad(
    emissions: &Tensor,
    transitions: &Tensor,
    gold: &[usize],
) -> Result<(f64, Tensor, Tensor)> {
    check_shapes(emissions, transitions, Some(gold.len()))?;
    let (n, k) = emissions.shape();
    if let Some(&bad) = gold.iter().find(|&&t| t >= k) {
        return Err(Error::ShapeMismatch(format!("tag {bad} outside {k} tags")));
    }
    let alpha = forward(emissions, transitions);
    let beta = backward_potentials(emissions, transitions);
    let log_z = log_sum_exp(&alpha[n - 1]);
    let nll = log_z - sequence_score(emissions, transitions, gold);

    let mut ge = Tensor::zeros(n, k);
    for i in 0..n {
        for t in 0..k {
            ge.set(i, t, (alpha[i][t] + beta[i][t] - log_z).exp());
        }
        let g = ge.get(i, gold[i]);
        ge.set(i, gold[i], g - 1.0);
    }
    let mut gt = Tensor::zeros(k, k);
    for i in 0..n.saturating_sub(1) {
        for s in 0..k {
            for t in 0..k {
                let p = (alpha[i][s] + transitions.get(s, t) + emissions.get(i + 1, t)
                    + beta[i + 1][t]
                    - log_z)
                    .exp();
                gt.data[s * k + t] += p;
            }
        }
        gt.data[gold[i] * k + gold[i + 1]] -= 1.0;
    }
    Ok((nll, ge, gt))
}

/// Plain-value NLL.
pub fn crf_negative_log_likelihood(
    emissions: &Tensor,
    transitions: &Tensor,
    gold: &[usize],
) -> Result<f64> {
    nll_with_grad(emissions, transitions, gold).map(|(l, _, _)| l)
}

/// NLL as a node in `graph`, differentiable in both inputs.
pub fn crf_nll_node(graph: &mut Graph, emissions: Var, transitions: Var, gold: &[usize]) -> Result<Var> {
    let (nll, ge, gt) = nll_with_grad(graph.value(emissions), graph.value(transitions), gold)?;
    Ok(graph.fused_scalar(nll, vec![(emissions, ge), (transitions, gt)]))
}

/// Viterbi argmax of `S(y)`. At every step ties resolve to the smallest tag
/// id.
pub fn viterbi(emissions: &Tensor, transitions: &Tensor) -> Result<Vec<usize>> {
    check_shapes(emissions, transitions, None)?;
    let (n, k) = emissions.shape();
    let mut score = emissions.row(0).to_vec();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 1..n {
        let mut next = vec![0.0; k];
        let mut ptr = vec![0; k];
        for t in 0..k {
            let mut best = 0;
            let mut best_v = score[0] + transitions.get(0, t);
            for s in 1..k {
                let v = score[s] + transitions.get(s, t);
                if v > best_v {
                    best_v = v;
                    best = s;
                }
            }
            next[t] = best_v + emissions.get(i, t);
            ptr[t] = best;
        }
        score = next;
        back.push(ptr);
    }
    let mut tags = vec![argmax(&score)];
    for ptr in back.iter().rev() {
        let last = *tags.last().expect("non-empty");
        tags.push(ptr[last]);
    }
    tags.reverse();
    Ok(tags)
}
