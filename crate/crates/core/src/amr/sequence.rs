//! Scorer input sequences: `[event type, path..., role]`.

use serde::{Deserialize, Serialize};

use super::graph::{AmrPath, PathElement, TokenSpan};
use super::relation::RelationGroup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SeqElement {
    Node {
        id: String,
        concept: String,
        span: Option<TokenSpan>,
    },
    Edge(RelationGroup),
}

impl SeqElement {
    pub fn is_node(&self) -> bool {
        matches!(self, SeqElement::Node { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringSequence {
    pub event_type: usize,
    pub elements: Vec<SeqElement>,
    pub role: usize,
}

impl ScoringSequence {
    /// Total length including the event-type and role positions.
    pub fn len(&self) -> usize {
        self.elements.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The path-free variant: `[type, trigger node, argument node, role]`.
    pub fn without_path(
        event_type: usize,
        trigger_span: TokenSpan,
        argument_span: TokenSpan,
        role: usize,
    ) -> Self {
        let node = |name: &str, span| SeqElement::Node {
            id: name.to_string(),
            concept: name.to_string(),
            span: Some(span),
        };
        Self {
            event_type,
            elements: vec![node("trigger", trigger_span), node("argument", argument_span)],
            role,
        }
    }

    /// Same sequence with a different role.
    pub fn with_role(&self, role: usize) -> Self {
        Self {
            role,
            ..self.clone()
        }
    }

    /// The first relation group on the path, if any.
    pub fn first_edge(&self) -> Option<RelationGroup> {
        self.elements.iter().find_map(|e| match e {
            SeqElement::Edge(g) => Some(*g),
            SeqElement::Node { .. } => None,
        })
    }

    /// Human-readable rendering. Nodes show their surface tokens when
    /// `tokens` is given and the node is aligned, else their concept.
    pub fn render(
        &self,
        event_types: &[String],
        roles: &[String],
        tokens: Option<&[String]>,
    ) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        out.push(label(event_types, self.event_type));
        for e in &self.elements {
            out.push(match e {
                SeqElement::Edge(g) => g.tag().to_string(),
                SeqElement::Node { concept, span, .. } => match (tokens, span) {
                    (Some(t), Some(s)) if s.end <= t.len() => t[s.start..s.end].join(" "),
                    _ => concept.clone(),
                },
            });
        }
        out.push(label(roles, self.role));
        out
    }
}

fn label(names: &[String], i: usize) -> String {
    names.get(i).cloned().unwrap_or_else(|| format!("#{i}"))
}

/// Builds `[event_type, n0, e0, n1, ..., nk, role]`, keeping the path's
/// order from the trigger end to the argument end. Edges render as their
/// relation group.
pub fn serialize_path(event_type: usize, path: &AmrPath, role: usize) -> ScoringSequence {
    let elements = path
        .elements()
        .map(|e| match e {
            PathElement::Node(n) => SeqElement::Node {
                id: n.id.clone(),
                concept: n.concept.clone(),
                span: n.token_span,
            },
            PathElement::Edge(e) => SeqElement::Edge(e.group),
        })
        .collect();
    ScoringSequence {
        event_type,
        elements,
        role,
    }
}
