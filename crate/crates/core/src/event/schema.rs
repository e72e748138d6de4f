use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::amr::TokenSpan;
use crate::error::{Error, Result};

/// Name of the null argument role (id 0).
pub const NULL_ROLE: &str = "O";

/// Trigger types and argument roles.
///
/// Trigger type ids are `0..|T|`. Role ids reserve 0 for the null role, so
/// named roles occupy `1..=|A|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub trigger_types: Vec<String>,
    pub argument_roles: Vec<String>,
}

impl LabelSchema {
    pub fn new(trigger_types: Vec<String>, argument_roles: Vec<String>) -> Result<Self> {
        let dup = |xs: &[String]| {
            let mut seen = std::collections::HashSet::new();
            xs.iter().find(|x| !seen.insert(x.as_str())).cloned()
        };
        if trigger_types.is_empty() || argument_roles.is_empty() {
            return Err(Error::Config("label schema needs types and roles".into()));
        }
        if let Some(d) = dup(&trigger_types).or_else(|| dup(&argument_roles)) {
            return Err(Error::Config(format!("duplicate label `{d}`")));
        }
        if argument_roles.iter().any(|r| r == NULL_ROLE) {
            return Err(Error::Config(format!("`{NULL_ROLE}` is reserved")));
        }
        Ok(Self {
            trigger_types,
            argument_roles,
        })
    }

    pub fn n_types(&self) -> usize {
        self.trigger_types.len()
    }

    pub fn n_roles(&self) -> usize {
        self.argument_roles.len()
    }

    /// Role classifier output size, null role included.
    pub fn n_role_labels(&self) -> usize {
        self.argument_roles.len() + 1
    }

    pub fn n_trigger_tags(&self) -> usize {
        1 + 2 * self.n_types()
    }

    pub fn type_id(&self, name: &str) -> Result<usize> {
        self.trigger_types
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn role_id(&self, name: &str) -> Result<usize> {
        if name == NULL_ROLE {
            return Ok(0);
        }
        self.argument_roles
            .iter()
            .position(|t| t == name)
            .map(|i| i + 1)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn type_name(&self, id: usize) -> &str {
        &self.trigger_types[id]
    }

    pub fn role_name(&self, id: usize) -> &str {
        if id == 0 {
            NULL_ROLE
        } else {
            &self.argument_roles[id - 1]
        }
    }

    /// Role names indexed by role id, null role first.
    pub fn role_labels(&self) -> Vec<String> {
        std::iter::once(NULL_ROLE.to_string())
            .chain(self.argument_roles.iter().cloned())
            .collect()
    }

    pub fn type_index(&self) -> HashMap<&str, usize> {
        self.trigger_types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect()
    }
}

/// BIO tags over `n_types` span types: `O = 0`, `B-x = 1 + 2x`,
/// `I-x = 2 + 2x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BioTagset {
    pub n_types: usize,
}

impl BioTagset {
    pub fn new(n_types: usize) -> Self {
        Self { n_types }
    }

    pub fn size(&self) -> usize {
        1 + 2 * self.n_types
    }

    pub fn begin(&self, ty: usize) -> usize {
        1 + 2 * ty
    }

    pub fn inside(&self, ty: usize) -> usize {
        2 + 2 * ty
    }

    fn decode(&self, tag: usize) -> Option<(bool, usize)> {
        if tag == 0 {
            None
        } else {
            Some(((tag - 1).is_multiple_of(2), (tag - 1) / 2))
        }
    }

    pub fn encode(&self, n: usize, spans: &[(TokenSpan, usize)]) -> Vec<usize> {
        let mut tags = vec![0; n];
        for &(span, ty) in spans {
            for (i, t) in tags.iter_mut().enumerate().take(span.end).skip(span.start) {
                *t = if i == span.start {
                    self.begin(ty)
                } else {
                    self.inside(ty)
                };
            }
        }
        tags
    }

    /// Turns an `I-x` that does not continue a `B-x`/`I-x` into `B-x`.
    pub fn repair(&self, tags: &mut [usize]) {
        let mut prev: Option<usize> = None;
        for t in tags.iter_mut() {
            match self.decode(*t) {
                None => prev = None,
                Some((true, ty)) => prev = Some(ty),
                Some((false, ty)) => {
                    if prev != Some(ty) {
                        *t = self.begin(ty);
                    }
                    prev = Some(ty);
                }
            }
        }
    }

    /// Spans of a repaired tag sequence.
    pub fn spans(&self, tags: &[usize]) -> Vec<(TokenSpan, usize)> {
        let mut out = Vec::new();
        let mut cur: Option<(usize, usize)> = None;
        for (i, &t) in tags.iter().enumerate() {
            match self.decode(t) {
                Some((false, ty)) if cur.map(|c| c.1) == Some(ty) => {}
                other => {
                    if let Some((s, ty)) = cur.take() {
                        out.push((TokenSpan::new(s, i), ty));
                    }
                    if let Some((_, ty)) = other {
                        cur = Some((i, ty));
                    }
                }
            }
        }
        if let Some((s, ty)) = cur {
            out.push((TokenSpan::new(s, tags.len()), ty));
        }
        out
    }
}
