//! AMR graphs: PENMAN I/O, relation grouping, token alignment and
//! trigger-to-argument paths.

mod graph;
mod penman;
mod relation;
mod sequence;

pub use graph::{
    align_nodes, AmrEdge, AmrGraph, AmrNode, AmrPath, PathEdge, PathElement, PathNode, TokenSpan,
};
pub use penman::{parse_bundle, parse_penman, to_penman, write_bundle, write_entry, AmrEntry};
pub use relation::{group_relation, split_inverse, RelationGroup};
pub use sequence::{serialize_path, ScoringSequence, SeqElement};

/// Alignment record as carried in JSON Lines side files.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AlignmentRecord {
    pub sent_id: String,
    pub node_id: String,
    pub start: usize,
    pub end: usize,
}
