//! Predicted event graphs and the global feature score over them.

use serde::{Deserialize, Serialize};

use super::schema::LabelSchema;
use crate::amr::TokenSpan;
use crate::corpus::{ArgumentAnnotation, EventMention, LabeledSentence, TriggerAnnotation};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTrigger {
    pub span: TokenSpan,
    pub event_type: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedArgument {
    /// Index into [`EventGraphPrediction::triggers`].
    pub trigger: usize,
    pub span: TokenSpan,
    /// Role id (never the null role).
    pub role: usize,
    pub prob: f64,
}

/// Triggers and arguments predicted for one sentence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventGraphPrediction {
    pub triggers: Vec<PredictedTrigger>,
    pub arguments: Vec<PredictedArgument>,
}

impl EventGraphPrediction {
    /// Gold annotations as a graph with probability 1 everywhere.
    pub fn from_gold(sentence: &LabeledSentence, schema: &LabelSchema) -> Result<Self> {
        let mut g = Self::default();
        for ev in &sentence.events {
            let t = g.triggers.len();
            g.triggers.push(PredictedTrigger {
                span: ev.trigger_span(),
                event_type: schema.type_id(&ev.trigger.event_type)?,
                prob: 1.0,
            });
            for a in &ev.args {
                g.arguments.push(PredictedArgument {
                    trigger: t,
                    span: a.span(),
                    role: schema.role_id(&a.role)?,
                    prob: 1.0,
                });
            }
        }
        Ok(g)
    }

    pub fn to_sentence(
        &self,
        sent_id: &str,
        tokens: &[String],
        schema: &LabelSchema,
    ) -> LabeledSentence {
        let events = self
            .triggers
            .iter()
            .enumerate()
            .map(|(i, t)| EventMention {
                trigger: TriggerAnnotation {
                    start: t.span.start,
                    end: t.span.end,
                    event_type: schema.type_name(t.event_type).to_string(),
                },
                args: self
                    .arguments
                    .iter()
                    .filter(|a| a.trigger == i)
                    .map(|a| ArgumentAnnotation {
                        start: a.span.start,
                        end: a.span.end,
                        role: schema.role_name(a.role).to_string(),
                    })
                    .collect(),
            })
            .collect();
        LabeledSentence {
            sent_id: sent_id.to_string(),
            tokens: tokens.to_vec(),
            events,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triggers.is_empty()
    }

    /// Distinct argument spans in order of first appearance.
    pub fn entity_spans(&self) -> Vec<TokenSpan> {
        let mut out: Vec<TokenSpan> = Vec::new();
        for a in &self.arguments {
            if !out.contains(&a.span) {
                out.push(a.span);
            }
        }
        out
    }
}

/// An indicator template over a sentence's event graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureTemplate {
    /// Counts arguments with `role` attached to triggers of `event_type`.
    RoleInEvent { event_type: usize, role: usize },
    /// Counts argument spans that take role `first` in one event and
    /// `second` in another event of the same sentence (unordered).
    SharedArgument { first: usize, second: usize },
}

impl FeatureTemplate {
    pub fn count(&self, graph: &EventGraphPrediction) -> f64 {
        match *self {
            FeatureTemplate::RoleInEvent { event_type, role } => graph
                .arguments
                .iter()
                .filter(|a| a.role == role && graph.triggers[a.trigger].event_type == event_type)
                .count() as f64,
            FeatureTemplate::SharedArgument { first, second } => {
                let mut n = 0;
                for (i, a) in graph.arguments.iter().enumerate() {
                    for b in &graph.arguments[i + 1..] {
                        if a.span != b.span || a.trigger == b.trigger {
                            continue;
                        }
                        if (a.role, b.role) == (first, second) || (a.role, b.role) == (second, first) {
                            n += 1;
                        }
                    }
                }
                n as f64
            }
        }
    }
}

/// Feature templates and one weight per template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalFeatureConfig {
    pub templates: Vec<FeatureTemplate>,
    pub weights: Vec<f64>,
}

impl GlobalFeatureConfig {
    /// Every role-within-type indicator plus every unordered shared-argument
    /// role pair, all with zero weight.
    pub fn default_for(schema: &LabelSchema) -> Self {
        let mut templates = Vec::new();
        for t in 0..schema.n_types() {
            for r in 1..=schema.n_roles() {
                templates.push(FeatureTemplate::RoleInEvent {
                    event_type: t,
                    role: r,
                });
            }
        }
        for a in 1..=schema.n_roles() {
            for b in a..=schema.n_roles() {
                templates.push(FeatureTemplate::SharedArgument { first: a, second: b });
            }
        }
        let weights = vec![0.0; templates.len()];
        Self { templates, weights }
    }

    pub fn empty() -> Self {
        Self {
            templates: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn features(&self, graph: &EventGraphPrediction) -> Vec<f64> {
        self.templates.iter().map(|t| t.count(graph)).collect()
    }
}

/// `u . f(graph)`.
pub fn global_score(graph: &EventGraphPrediction, config: &GlobalFeatureConfig) -> f64 {
    config
        .features(graph)
        .iter()
        .zip(&config.weights)
        .map(|(f, w)| f * w)
        .sum()
}

/// `max(0, score(predicted) - score(gold))`.
pub fn global_loss(
    predicted: &EventGraphPrediction,
    gold: &EventGraphPrediction,
    config: &GlobalFeatureConfig,
) -> f64 {
    (global_score(predicted, config) - global_score(gold, config)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> LabelSchema {
        LabelSchema::new(
            vec!["Life:Die".into(), "Conflict:Attack".into()],
            vec!["Victim".into(), "Attacker".into()],
        )
        .unwrap()
    }

    fn die_with_two_victims() -> EventGraphPrediction {
        let t = PredictedTrigger {
            span: TokenSpan::new(1, 2),
            event_type: 0,
            prob: 1.0,
        };
        let arg = |s| PredictedArgument {
            trigger: 0,
            span: TokenSpan::new(s, s + 1),
            role: 1,
            prob: 1.0,
        };
        EventGraphPrediction {
            triggers: vec![t],
            arguments: vec![arg(0), arg(3)],
        }
    }

    #[test]
    fn victim_within_die_fires_twice() {
        let cfg = GlobalFeatureConfig {
            templates: vec![FeatureTemplate::RoleInEvent {
                event_type: 0,
                role: 1,
            }],
            weights: vec![0.5],
        };
        assert_eq!(global_score(&die_with_two_victims(), &cfg), 1.0);
    }

    #[test]
    fn empty_templates_score_zero() {
        assert_eq!(
            global_score(&die_with_two_victims(), &GlobalFeatureConfig::empty()),
            0.0
        );
    }

    #[test]
    fn identical_graphs_have_zero_loss() {
        let mut cfg = GlobalFeatureConfig::default_for(&schema());
        cfg.weights.iter_mut().enumerate().for_each(|(i, w)| *w = i as f64 - 2.0);
        let g = die_with_two_victims();
        assert_eq!(global_loss(&g, &g, &cfg), 0.0);
    }

    #[test]
    fn shared_argument_counts_across_events() {
        let mut g = die_with_two_victims();
        g.triggers.push(PredictedTrigger {
            span: TokenSpan::new(5, 6),
            event_type: 1,
            prob: 1.0,
        });
        g.arguments.push(PredictedArgument {
            trigger: 1,
            span: TokenSpan::new(0, 1),
            role: 2,
            prob: 1.0,
        });
        let t = FeatureTemplate::SharedArgument { first: 2, second: 1 };
        assert_eq!(t.count(&g), 1.0);
    }

    #[test]
    fn gold_round_trip() {
        let s = schema();
        let g = die_with_two_victims();
        let toks: Vec<String> = "a b c d".split(' ').map(String::from).collect();
        let sent = g.to_sentence("x", &toks, &s);
        assert_eq!(EventGraphPrediction::from_gold(&sent, &s).unwrap(), g);
    }
}
