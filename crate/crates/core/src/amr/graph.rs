use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::relation::{group_relation, split_inverse, RelationGroup};
use crate::error::{Error, Result};

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &TokenSpan) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }

    pub fn check(&self, len: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptySpan);
        }
        if self.end > len {
            return Err(Error::OutOfBounds {
                start: self.start,
                end: self.end,
                len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmrNode {
    pub id: String,
    pub concept: String,
    /// Constant (attribute value) leaf rather than a variable.
    pub constant: bool,
    /// Whether a constant was written as a quoted string.
    pub quoted: bool,
    pub token_span: Option<TokenSpan>,
}

/// A relation edge. `src`/`dst` follow the normalised direction: an inverted
/// relation written as `(a :ARG0-of b)` is stored as `b -> a`, while
/// `raw_relation` keeps the written form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmrEdge {
    pub src: String,
    pub dst: String,
    pub raw_relation: String,
    pub group: RelationGroup,
}

impl AmrEdge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, raw_relation: &str) -> Self {
        let raw = if raw_relation.starts_with(':') {
            raw_relation.to_string()
        } else {
            format!(":{raw_relation}")
        };
        Self {
            src: src.into(),
            dst: dst.into(),
            group: group_relation(&raw),
            raw_relation: raw,
        }
    }

    pub fn is_inverted(&self) -> bool {
        split_inverse(&self.raw_relation).1
    }

    /// Relation name with the inversion removed and no leading colon.
    pub fn base_relation(&self) -> &str {
        split_inverse(&self.raw_relation).0
    }

    /// The node the relation was written under in PENMAN.
    pub fn written_parent(&self) -> &str {
        if self.is_inverted() {
            &self.dst
        } else {
            &self.src
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmrGraph {
    nodes: Vec<AmrNode>,
    edges: Vec<AmrEdge>,
    root: String,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for AmrGraph {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl AmrGraph {
    /// Builds a graph, checking id uniqueness and edge endpoints.
    pub fn new(root: impl Into<String>, nodes: Vec<AmrNode>, edges: Vec<AmrEdge>) -> Result<Self> {
        let root = root.into();
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::penman(0, format!("duplicate node id `{}`", n.id)));
            }
        }
        if !index.contains_key(&root) {
            return Err(Error::UnknownNode(root));
        }
        for e in &edges {
            for end in [&e.src, &e.dst] {
                if !index.contains_key(end) {
                    return Err(Error::UnknownNode(end.clone()));
                }
            }
        }
        Ok(Self {
            nodes,
            edges,
            root,
            index,
        })
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn nodes(&self) -> &[AmrNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[AmrEdge] {
        &self.edges
    }

    pub fn edges_mut(&mut self) -> &mut [AmrEdge] {
        &mut self.edges
    }

    pub fn node(&self, id: &str) -> Option<&AmrNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        if self.index.len() == self.nodes.len() {
            self.index.get(id).copied()
        } else {
            // deserialised without the index
            self.nodes.iter().position(|n| n.id == id)
        }
    }

    pub fn set_alignment(&mut self, id: &str, span: TokenSpan) -> Result<()> {
        let i = self
            .index_of(id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))?;
        self.nodes[i].token_span = Some(span);
        Ok(())
    }

    /// Number of nodes reachable from the root ignoring edge direction.
    pub fn reachable_from_root(&self) -> usize {
        let adj = self.adjacency();
        let start = self.index_of(&self.root).expect("root exists");
        let mut seen = vec![false; self.nodes.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count
    }

    /// Undirected adjacency: node index -> (neighbour index, edge index).
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            let s = self.index_of(&e.src).expect("edge endpoint exists");
            let d = self.index_of(&e.dst).expect("edge endpoint exists");
            adj[s].push((d, k));
            if s != d {
                adj[d].push((s, k));
            }
        }
        adj
    }

    /// Minimum-hop path between two nodes, edges treated as undirected.
    ///
    /// Among equally short paths the lexicographically smallest node-id
    /// sequence wins; between a fixed pair of nodes the first edge in graph
    /// order is used. Disconnected pairs (and `src == dst`) get a synthetic
    /// `Others` edge.
    pub fn shortest_path(&self, src: &str, dst: &str) -> Result<AmrPath> {
        let s = self
            .index_of(src)
            .ok_or_else(|| Error::UnknownNode(src.to_string()))?;
        let d = self
            .index_of(dst)
            .ok_or_else(|| Error::UnknownNode(dst.to_string()))?;
        if s == d {
            return Ok(AmrPath::fallback(&self.nodes[s], &self.nodes[d]));
        }
        let adj = self.adjacency();
        // distances to dst
        let mut dist = vec![usize::MAX; self.nodes.len()];
        dist[d] = 0;
        let mut queue = VecDeque::from([d]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if dist[s] == usize::MAX {
            return Ok(AmrPath::fallback(&self.nodes[s], &self.nodes[d]));
        }
        let mut nodes = vec![PathNode::from(&self.nodes[s])];
        let mut edges = Vec::new();
        let mut cur = s;
        while cur != d {
            let mut best: Option<(usize, usize)> = None;
            for &(v, k) in &adj[cur] {
                if dist[v] + 1 != dist[cur] {
                    continue;
                }
                best = match best {
                    None => Some((v, k)),
                    Some((bv, bk)) => {
                        let ord = self.nodes[v].id.cmp(&self.nodes[bv].id);
                        if ord.is_lt() || (ord.is_eq() && k < bk) {
                            Some((v, k))
                        } else {
                            Some((bv, bk))
                        }
                    }
                };
            }
            let (v, k) = best.expect("BFS distance implies a predecessor");
            let e = &self.edges[k];
            edges.push(PathEdge {
                raw_relation: e.raw_relation.clone(),
                group: e.group,
                forward: self.nodes[cur].id == e.src,
            });
            nodes.push(PathNode::from(&self.nodes[v]));
            cur = v;
        }
        Ok(AmrPath {
            nodes,
            edges,
            synthetic_fallback: false,
        })
    }

    /// Aligns each token span to the node whose `token_span` overlaps it
    /// most. Ties go to the node with the leftmost span, then to the node
    /// that comes first in the graph.
    pub fn align_nodes(&self, n_tokens: usize, spans: &[TokenSpan]) -> Vec<Option<String>> {
        spans
            .iter()
            .map(|span| {
                if span.is_empty() || span.end > n_tokens {
                    return None;
                }
                let mut best: Option<(usize, &AmrNode)> = None;
                for node in &self.nodes {
                    let Some(ns) = node.token_span else { continue };
                    let ov = span.overlap(&ns);
                    if ov == 0 {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bov, bn)) => {
                            ov > bov
                                || (ov == bov
                                    && ns.start < bn.token_span.expect("aligned").start)
                        }
                    };
                    if better {
                        best = Some((ov, node));
                    }
                }
                best.map(|(_, n)| n.id.clone())
            })
            .collect()
    }
}

/// Free-function form of [`AmrGraph::align_nodes`].
pub fn align_nodes(
    graph: &AmrGraph,
    tokens: &[String],
    spans: &[TokenSpan],
) -> Vec<Option<String>> {
    graph.align_nodes(tokens.len(), spans)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathNode {
    pub id: String,
    pub concept: String,
    pub token_span: Option<TokenSpan>,
}

impl From<&AmrNode> for PathNode {
    fn from(n: &AmrNode) -> Self {
        Self {
            id: n.id.clone(),
            concept: n.concept.clone(),
            token_span: n.token_span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEdge {
    pub raw_relation: String,
    pub group: RelationGroup,
    /// Traversed along the normalised edge direction.
    pub forward: bool,
}

/// Alternating node/edge sequence from the trigger node to the argument node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmrPath {
    pub nodes: Vec<PathNode>,
    pub edges: Vec<PathEdge>,
    pub synthetic_fallback: bool,
}

pub enum PathElement<'a> {
    Node(&'a PathNode),
    Edge(&'a PathEdge),
}

impl AmrPath {
    fn fallback(a: &AmrNode, b: &AmrNode) -> Self {
        Self {
            nodes: vec![PathNode::from(a), PathNode::from(b)],
            edges: vec![PathEdge {
                raw_relation: ":other".to_string(),
                group: RelationGroup::Others,
                forward: true,
            }],
            synthetic_fallback: true,
        }
    }

    pub fn hops(&self) -> usize {
        self.edges.len()
    }

    /// `2k + 1` for a path with `k` edges.
    pub fn len(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = PathElement<'_>> {
        (0..self.len()).map(move |i| {
            if i % 2 == 0 {
                PathElement::Node(&self.nodes[i / 2])
            } else {
                PathElement::Edge(&self.edges[i / 2])
            }
        })
    }

    pub fn first_group(&self) -> RelationGroup {
        self.edges[0].group
    }
}
