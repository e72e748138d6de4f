use proptest::prelude::*;

use stf_ee::amr::{parse_penman, to_penman, AmrEdge, AmrGraph, AmrNode, RelationGroup, TokenSpan};
use stf_ee::eval::{f1_argument_classification, f1_trigger_classification};
use stf_ee::event::{
    crf_negative_log_likelihood, log_partition, viterbi, EventGraphPrediction, PredictedArgument,
    PredictedTrigger,
};
use stf_ee::stf::{compat_transform, threshold_filter, PseudoSample};
use stf_ee::tensor::Tensor;

fn all_sequences(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |t| {
                    let mut q = p.clone();
                    q.push(t);
                    q
                })
            })
            .collect();
    }
    out
}

fn path_score(e: &Tensor, tr: &Tensor, y: &[usize]) -> f64 {
    let mut s = e.get(0, y[0]);
    for i in 1..y.len() {
        s += tr.get(y[i - 1], y[i]) + e.get(i, y[i]);
    }
    s
}

fn crf_instance() -> impl Strategy<Value = (Tensor, Tensor, Vec<usize>)> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(-3.0f64..3.0, n * k),
            prop::collection::vec(-3.0f64..3.0, k * k),
            prop::collection::vec(0..k, n),
        )
            .prop_map(move |(e, t, y)| (Tensor::from_vec(n, k, e), Tensor::from_vec(k, k, t), y))
    })
}

proptest! {
    #[test]
    fn crf_matches_enumeration((e, tr, y) in crf_instance()) {
        let (n, k) = e.shape();
        let seqs = all_sequences(n, k);
        let scores: Vec<f64> = seqs.iter().map(|s| path_score(&e, &tr, s)).collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        prop_assert!((log_partition(&e, &tr).unwrap() - log_z).abs() < 1e-9);
        let nll = crf_negative_log_likelihood(&e, &tr, &y).unwrap();
        prop_assert!((nll - (log_z - path_score(&e, &tr, &y))).abs() < 1e-9);
        let best = viterbi(&e, &tr).unwrap();
        prop_assert!((path_score(&e, &tr, &best) - m).abs() < 1e-9);
    }
}

fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    const INF: usize = usize::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in edges {
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

const RELS: [&str; 8] = [":ARG0", ":ARG1", ":location", ":mod", ":time", ":op1", ":ARG2-of", ":snt1"];

fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, usize)>)> {
    (2usize..=12).prop_flat_map(|n| {
        let e = (0..n, 0..n, 0..RELS.len());
        (Just(n), prop::collection::vec(e, 0..(2 * n)))
    })
}

fn build(n: usize, edges: &[(usize, usize, usize)]) -> AmrGraph {
    let nodes = (0..n)
        .map(|i| AmrNode {
            id: format!("v{i:02}"),
            concept: format!("c{i}"),
            constant: false,
            quoted: false,
            token_span: None,
        })
        .collect();
    let edges = edges
        .iter()
        .filter(|(a, b, _)| a != b)
        .map(|&(a, b, r)| AmrEdge::new(format!("v{a:02}"), format!("v{b:02}"), RELS[r]))
        .collect();
    AmrGraph::new("v00", nodes, edges).unwrap()
}

proptest! {
    #[test]
    fn bfs_hops_equal_floyd_warshall((n, raw) in random_graph()) {
        let g = build(n, &raw);
        let plain: Vec<(usize, usize)> = raw.iter().filter(|(a, b, _)| a != b).map(|&(a, b, _)| (a, b)).collect();
        let d = floyd_warshall(n, &plain);
        for s in 0..n {
            for t in 0..n {
                if s == t {
                    continue;
                }
                let p = g.shortest_path(&format!("v{s:02}"), &format!("v{t:02}")).unwrap();
                if d[s][t] >= usize::MAX / 4 {
                    prop_assert!(p.synthetic_fallback);
                    prop_assert_eq!(p.hops(), 1);
                    prop_assert_eq!(p.first_group(), RelationGroup::Others);
                } else {
                    prop_assert!(!p.synthetic_fallback);
                    prop_assert_eq!(p.hops(), d[s][t]);
                    prop_assert_eq!(p.nodes.first().unwrap().id.clone(), format!("v{s:02}"));
                    prop_assert_eq!(p.nodes.last().unwrap().id.clone(), format!("v{t:02}"));
                    // consecutive path nodes are adjacent
                    for w in p.nodes.windows(2) {
                        let (a, b) = (&w[0].id, &w[1].id);
                        prop_assert!(g.edges().iter().any(|e| (&e.src == a && &e.dst == b) || (&e.src == b && &e.dst == a)));
                    }
                }
            }
        }
    }
}

/// Random tree written directly as PENMAN text.
fn penman_tree() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (0u32..50).prop_map(|i| format!("(x{i} / thing-{i})")),
        (0u32..50).prop_map(|i| format!("{i}")),
        "[a-z]{1,6}".prop_map(|s| format!("\"{s}\"")),
    ];
    leaf.prop_recursive(4, 24, 4, |inner| {
        (0u32..50, prop::collection::vec((0..RELS.len(), inner), 1..4)).prop_map(|(i, kids)| {
            let mut s = format!("(y{i} / event-{i:02}");
            for (r, k) in kids {
                s.push_str(&format!(" {} {}", RELS[r], k));
            }
            s.push(')');
            s
        })
    })
    .prop_filter("root must be a variable", |s| s.starts_with('('))
}

fn unique_variables(text: &str) -> bool {
    let mut seen = std::collections::HashSet::new();
    text.split('(').skip(1).all(|chunk| seen.insert(chunk.split_whitespace().next().unwrap_or("").to_string()))
}

proptest! {
    #[test]
    fn penman_round_trip(text in penman_tree().prop_filter("distinct variables", |t| unique_variables(t))) {
        let g = parse_penman(&text).unwrap();
        let again = parse_penman(&to_penman(&g)).unwrap();
        prop_assert_eq!(&g, &again);
        prop_assert_eq!(to_penman(&g), to_penman(&again));
    }
}

fn samples() -> impl Strategy<Value = Vec<PseudoSample>> {
    prop::collection::vec(0.0f64..=1.0, 0..40).prop_map(|cs| {
        cs.into_iter()
            .enumerate()
            .map(|(i, c)| PseudoSample {
                sentence: i,
                trigger: TokenSpan::new(0, 1),
                event_type: 0,
                argument: TokenSpan::new(1, 2),
                role: 1,
                prob: 0.5,
                compatibility: c,
                weight: compat_transform(c).unwrap(),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn filter_is_nested(s in samples(), a in 0.5f64..=1.0, b in 0.5f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let strict = threshold_filter(&s, hi).unwrap();
        let loose = threshold_filter(&s, lo).unwrap();
        prop_assert!(strict.iter().all(|x| loose.contains(x)));
        prop_assert!(loose.iter().all(|x| s.contains(x)));
        for x in &strict {
            prop_assert!(x.compatibility > hi || x.compatibility < 1.0 - hi);
        }
    }

    #[test]
    fn transform_is_exact_and_bounded(c in 0.0f64..=1.0) {
        let w = compat_transform(c).unwrap();
        prop_assert_eq!(w, 2.0 * c - 1.0);
        prop_assert!((-1.0..=1.0).contains(&w));
    }
}

fn event_graph() -> impl Strategy<Value = EventGraphPrediction> {
    (
        prop::collection::vec((0usize..6, 0usize..3), 0..4),
        prop::collection::vec((0usize..4, 0usize..8, 1usize..4), 0..6),
    )
        .prop_map(|(ts, args)| {
            let mut g = EventGraphPrediction::default();
            for (s, ty) in ts {
                if g.triggers.iter().all(|t| t.span.start != s) {
                    g.triggers.push(PredictedTrigger {
                        span: TokenSpan::new(s, s + 1),
                        event_type: ty,
                        prob: 1.0,
                    });
                }
            }
            if !g.triggers.is_empty() {
                for (t, s, r) in args {
                    g.arguments.push(PredictedArgument {
                        trigger: t % g.triggers.len(),
                        span: TokenSpan::new(s, s + 1),
                        role: r,
                        prob: 1.0,
                    });
                }
            }
            g
        })
}

proptest! {
    #[test]
    fn metric_invariants(pred in prop::collection::vec(event_graph(), 1..6), gold in prop::collection::vec(event_graph(), 1..6)) {
        let n = pred.len().min(gold.len());
        let (pred, gold) = (&pred[..n], &gold[..n]);
        for f in [f1_trigger_classification, f1_argument_classification] {
            let p = f(pred, gold).unwrap();
            prop_assert!((0.0..=1.0).contains(&p.f1));
            prop_assert!(p.f1 <= p.precision.max(p.recall) + 1e-12);
            let swapped = f(gold, pred).unwrap();
            prop_assert_eq!(p.tp, swapped.tp);
            prop_assert!((p.precision - swapped.recall).abs() < 1e-12);
            prop_assert!((p.f1 - swapped.f1).abs() < 1e-12);
            let same = f(gold, gold).unwrap();
            prop_assert_eq!(same.fp + same.fn_, 0);
            if same.tp > 0 {
                prop_assert_eq!(same.f1, 1.0);
            }
        }
    }
}
