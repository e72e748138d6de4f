//! PENMAN reading and writing.
//!
//! Attribute constants (`:op1 "Iraq"`, `:polarity -`, `:quant 5`) become leaf
//! nodes whose concept is the constant. Their ids are derived from the
//! parent variable as `<var>.<k>` so that alignment comments can name them.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use super::graph::{AmrEdge, AmrGraph, AmrNode, TokenSpan};
use super::relation::split_inverse;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Slash,
    Role(String),
    Str(String),
    Sym(String),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            b'/' => {
                out.push((i, Tok::Slash));
                i += 1;
            }
            b'"' => {
                let start = i;
                i += 1;
                let mut s = String::new();
                loop {
                    match bytes.get(i) {
                        None => return Err(Error::penman(start, "unterminated string")),
                        Some(b'\\') if i + 1 < bytes.len() => {
                            s.push(bytes[i + 1] as char);
                            i += 2;
                        }
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(_) => {
                            let ch = text[i..].chars().next().expect("in bounds");
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                // drop alignment markers like "Iraq"~e.5
                while i < bytes.len() && !is_delim(bytes[i]) {
                    i += 1;
                }
                out.push((start, Tok::Str(s)));
            }
            _ => {
                let start = i;
                while i < bytes.len() && !is_delim(bytes[i]) && bytes[i] != b'/' {
                    i += 1;
                }
                let word = &text[start..i];
                let word = word.split('~').next().unwrap_or(word);
                if let Some(role) = word.strip_prefix(':') {
                    if role.is_empty() {
                        return Err(Error::penman(start, "empty role name"));
                    }
                    out.push((start, Tok::Role(word.to_string())));
                } else {
                    out.push((start, Tok::Sym(word.to_string())));
                }
            }
        }
    }
    Ok(out)
}

fn is_delim(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b'(' | b')')
}

enum Value {
    Node(Tree),
    Str(String),
    Sym(String),
}

struct Tree {
    var: String,
    concept: String,
    pos: usize,
    children: Vec<(String, Value)>,
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(_, t)| t.clone());
        self.at += 1;
        t
    }

    fn node(&mut self) -> Result<Tree> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Open) => {}
            _ => return Err(Error::penman(pos, "expected `(`")),
        }
        let var = match self.next() {
            Some(Tok::Sym(v)) => v,
            _ => return Err(Error::penman(pos, "expected a variable after `(`")),
        };
        match self.next() {
            Some(Tok::Slash) => {}
            _ => return Err(Error::penman(pos, format!("missing concept for `{var}`"))),
        }
        let concept = match self.next() {
            Some(Tok::Sym(c)) => c,
            Some(Tok::Str(c)) => c,
            _ => return Err(Error::penman(pos, format!("missing concept for `{var}`"))),
        };
        let mut children = Vec::new();
        loop {
            let p = self.pos();
            match self.next() {
                Some(Tok::Close) => break,
                Some(Tok::Role(role)) => {
                    let value = match self.peek() {
                        Some(Tok::Open) => Value::Node(self.node()?),
                        Some(Tok::Str(_)) => match self.next() {
                            Some(Tok::Str(s)) => Value::Str(s),
                            _ => unreachable!(),
                        },
                        Some(Tok::Sym(_)) => match self.next() {
                            Some(Tok::Sym(s)) => Value::Sym(s),
                            _ => unreachable!(),
                        },
                        _ => {
                            return Err(Error::penman(
                                self.pos(),
                                format!("missing value for role {role}"),
                            ))
                        }
                    };
                    children.push((role, value));
                }
                None => return Err(Error::penman(p, "unbalanced parentheses")),
                Some(_) => return Err(Error::penman(p, "unexpected token")),
            }
        }
        Ok(Tree {
            var,
            concept,
            pos,
            children,
        })
    }
}

fn collect_vars(
    tree: &Tree,
    concepts: &mut HashMap<String, String>,
    order: &mut Vec<String>,
) -> Result<()> {
    match concepts.get(&tree.var) {
        Some(c) if c != &tree.concept => {
            return Err(Error::penman(
                tree.pos,
                format!(
                    "variable `{}` defined as both `{c}` and `{}`",
                    tree.var, tree.concept
                ),
            ))
        }
        Some(_) => {}
        None => {
            concepts.insert(tree.var.clone(), tree.concept.clone());
            order.push(tree.var.clone());
        }
    }
    for (_, v) in &tree.children {
        if let Value::Node(t) = v {
            collect_vars(t, concepts, order)?;
        }
    }
    Ok(())
}

struct Builder<'a> {
    vars: &'a HashMap<String, String>,
    nodes: Vec<AmrNode>,
    seen: HashSet<String>,
    edges: Vec<AmrEdge>,
}

impl Builder<'_> {
    fn visit(&mut self, tree: &Tree) {
        if self.seen.insert(tree.var.clone()) {
            self.nodes.push(AmrNode {
                id: tree.var.clone(),
                concept: tree.concept.clone(),
                constant: false,
                quoted: false,
                token_span: None,
            });
        }
        let mut k = 0;
        for (role, value) in &tree.children {
            let (child, quoted, constant) = match value {
                Value::Node(t) => (t.var.clone(), false, None),
                Value::Sym(s) if self.vars.contains_key(s) => (s.clone(), false, None),
                Value::Sym(s) => (String::new(), false, Some(s.clone())),
                Value::Str(s) => (String::new(), true, Some(s.clone())),
            };
            let child = match constant {
                Some(c) => {
                    k += 1;
                    let mut id = format!("{}.{k}", tree.var);
                    while self.seen.contains(&id) || self.vars.contains_key(&id) {
                        k += 1;
                        id = format!("{}.{k}", tree.var);
                    }
                    self.seen.insert(id.clone());
                    self.nodes.push(AmrNode {
                        id: id.clone(),
                        concept: c,
                        constant: true,
                        quoted,
                        token_span: None,
                    });
                    id
                }
                None => child,
            };
            let (_, inverted) = split_inverse(role);
            let edge = if inverted {
                AmrEdge::new(child, tree.var.clone(), role)
            } else {
                AmrEdge::new(tree.var.clone(), child, role)
            };
            self.edges.push(edge);
            if let Value::Node(t) = value {
                self.visit(t);
            }
        }
    }
}

/// Parses a single PENMAN expression.
pub fn parse_penman(text: &str) -> Result<AmrGraph> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(Error::penman(0, "empty input"));
    }
    let mut parser = Parser {
        toks,
        at: 0,
        end: text.len(),
    };
    let tree = parser.node()?;
    if parser.at < parser.toks.len() {
        let pos = parser.pos();
        return Err(Error::penman(
            pos,
            match parser.peek() {
                Some(Tok::Close) => "unbalanced parentheses",
                _ => "trailing content after graph",
            },
        ));
    }
    let mut vars = HashMap::new();
    let mut order = Vec::new();
    collect_vars(&tree, &mut vars, &mut order)?;
    let mut b = Builder {
        vars: &vars,
        nodes: Vec::new(),
        seen: HashSet::new(),
        edges: Vec::new(),
    };
    b.visit(&tree);
    let Builder { nodes, edges, .. } = b;
    AmrGraph::new(tree.var, nodes, edges)
}

fn write_constant(out: &mut String, node: &AmrNode) {
    if node.quoted {
        out.push('"');
        for ch in node.concept.chars() {
            if ch == '"' || ch == '\\' {
                out.push('\\');
            }
            out.push(ch);
        }
        out.push('"');
    } else {
        out.push_str(&node.concept);
    }
}

/// Serialises a graph back to PENMAN, walking it as a tree from the root.
/// Edges traversed against their written direction get an `-of` inversion.
pub fn to_penman(graph: &AmrGraph) -> String {
    let mut out = String::new();
    let mut visited = HashSet::new();
    let mut used = vec![false; graph.edges().len()];
    write_node(graph, graph.root(), 0, &mut out, &mut visited, &mut used);
    // Anything the root cannot reach is dropped; parser output is always
    // connected.
    out
}

fn inverse_name(raw: &str) -> String {
    let (base, inverted) = split_inverse(raw);
    if inverted {
        format!(":{base}")
    } else {
        format!(":{base}-of")
    }
}

fn write_node(
    graph: &AmrGraph,
    id: &str,
    depth: usize,
    out: &mut String,
    visited: &mut HashSet<String>,
    used: &mut [bool],
) {
    let node = graph.node(id).expect("node exists");
    visited.insert(id.to_string());
    let _ = write!(out, "({} / {}", node.id, node.concept);
    for (k, e) in graph.edges().iter().enumerate() {
        if used[k] {
            continue;
        }
        let parent = e.written_parent();
        let (role, child) = if parent == id {
            let child = if e.is_inverted() { &e.src } else { &e.dst };
            (e.raw_relation.clone(), child.as_str())
        } else if e.src == id || e.dst == id {
            let child = if e.src == id { &e.dst } else { &e.src };
            (inverse_name(&e.raw_relation), child.as_str())
        } else {
            continue;
        };
        used[k] = true;
        out.push('\n');
        out.push_str(&"    ".repeat(depth + 1));
        out.push_str(&role);
        out.push(' ');
        let child_node = graph.node(child).expect("node exists");
        if child_node.constant {
            write_constant(out, child_node);
        } else if visited.contains(child) {
            out.push_str(child);
        } else {
            write_node(graph, child, depth + 1, out, visited, used);
        }
    }
    out.push(')');
}

/// One block of a PENMAN bundle file.
#[derive(Debug, Clone, PartialEq)]
pub struct AmrEntry {
    pub id: Option<String>,
    pub tokens: Option<Vec<String>>,
    pub graph: AmrGraph,
}

/// Parses a bundle: blank-line separated blocks, each with optional
/// `# ::id`, `# ::tok` and `# ::align <node>-<start>:<end>` comment lines.
pub fn parse_bundle(text: &str) -> Result<Vec<AmrEntry>> {
    let mut entries = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if line.trim().is_empty() {
            if !block.is_empty() {
                entries.push(parse_block(&block)?);
                block.clear();
            }
        } else {
            block.push((offset, line));
        }
        offset += line.len();
    }
    if !block.is_empty() {
        entries.push(parse_block(&block)?);
    }
    Ok(entries)
}

fn parse_block(lines: &[(usize, &str)]) -> Result<AmrEntry> {
    let mut id = None;
    let mut tokens = None;
    let mut aligns = Vec::new();
    let mut body = String::new();
    let base = lines[0].0;
    for &(off, line) in lines {
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(rest) = comment.strip_prefix("::id") {
                id = Some(rest.split_whitespace().next().unwrap_or("").to_string());
            } else if let Some(rest) = comment.strip_prefix("::tok") {
                tokens = Some(rest.split_whitespace().map(str::to_string).collect());
            } else if let Some(rest) = comment.strip_prefix("::align") {
                for item in rest.split_whitespace() {
                    aligns.push((off, parse_align(off, item)?));
                }
            }
        } else {
            body.push_str(line);
        }
    }
    let mut graph = parse_penman(&body).map_err(|e| match e {
        Error::MalformedPenman { pos, msg } => Error::MalformedPenman {
            pos: pos + base,
            msg,
        },
        other => other,
    })?;
    for (off, (node, span)) in aligns {
        if let Some(toks) = &tokens {
            let toks: &Vec<String> = toks;
            if span.end > toks.len() {
                return Err(Error::penman(
                    off,
                    format!("alignment {node} beyond {} tokens", toks.len()),
                ));
            }
        }
        graph.set_alignment(&node, span)?;
    }
    Ok(AmrEntry { id, tokens, graph })
}

fn parse_align(off: usize, item: &str) -> Result<(String, TokenSpan)> {
    let bad = || Error::penman(off, format!("bad alignment `{item}`"));
    let (node, range) = item.rsplit_once('-').ok_or_else(bad)?;
    let (s, e) = range.split_once(':').ok_or_else(bad)?;
    let start: usize = s.parse().map_err(|_| bad())?;
    let end: usize = e.parse().map_err(|_| bad())?;
    if start >= end {
        return Err(bad());
    }
    Ok((node.to_string(), TokenSpan::new(start, end)))
}

/// Writes one bundle block, including alignment comments for every aligned
/// node.
pub fn write_entry(entry: &AmrEntry) -> String {
    let mut out = String::new();
    if let Some(id) = &entry.id {
        let _ = writeln!(out, "# ::id {id}");
    }
    if let Some(toks) = &entry.tokens {
        let _ = writeln!(out, "# ::tok {}", toks.join(" "));
    }
    let aligned: Vec<String> = entry
        .graph
        .nodes()
        .iter()
        .filter_map(|n| {
            n.token_span
                .map(|s| format!("{}-{}:{}", n.id, s.start, s.end))
        })
        .collect();
    if !aligned.is_empty() {
        let _ = writeln!(out, "# ::align {}", aligned.join(" "));
    }
    out.push_str(&to_penman(&entry.graph));
    out.push('\n');
    out
}

pub fn write_bundle(entries: &[AmrEntry]) -> String {
    entries
        .iter()
        .map(write_entry)
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::RelationGroup;

    #[test]
    fn smallest_expression() {
        let g = parse_penman("(k / kill-01)").unwrap();
        assert_eq!(g.nodes().len(), 1);
        assert_eq!(g.nodes()[0].concept, "kill-01");
        assert!(g.edges().is_empty());
    }

    #[test]
    fn kill_example_hand_parsed() {
        let g = parse_penman(
            "(k / kill-01 :ARG0 (c / commando) :location (i / country :name (n / name :op1 \"Iraq\")))",
        )
        .unwrap();
        let concepts: Vec<_> = g.nodes().iter().map(|n| n.concept.as_str()).collect();
        // four variables plus the "Iraq" constant leaf
        assert_eq!(concepts, ["kill-01", "commando", "country", "name", "Iraq"]);
        let rels: Vec<_> = g.edges().iter().map(|e| e.raw_relation.as_str()).collect();
        assert_eq!(rels, [":ARG0", ":location", ":name", ":op1"]);
        let iraq = &g.nodes()[4];
        assert!(iraq.constant && iraq.quoted);
        assert_eq!(iraq.id, "n.1");
        assert_eq!(g.edges()[3].src, "n");
        assert_eq!(g.edges()[3].dst, "n.1");
        assert_eq!(g.edges()[3].group, RelationGroup::OpRoles);
    }

    #[test]
    fn unbalanced_is_malformed() {
        assert!(matches!(
            parse_penman("(k / kill-01 :ARG0"),
            Err(Error::MalformedPenman { .. })
        ));
        assert!(matches!(
            parse_penman("(k / kill-01))"),
            Err(Error::MalformedPenman { .. })
        ));
    }

    #[test]
    fn missing_concept_is_malformed() {
        assert!(parse_penman("(k)").is_err());
        assert!(parse_penman("(k / )").is_err());
    }

    #[test]
    fn conflicting_redefinition_is_malformed() {
        let err = parse_penman("(a / want-01 :ARG0 (b / boy) :ARG1 (b / girl))").unwrap_err();
        assert!(err.to_string().contains("defined as both"));
    }

    #[test]
    fn reentrancy_resolves_to_one_node() {
        let g = parse_penman("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))").unwrap();
        assert_eq!(g.nodes().len(), 3);
        assert_eq!(g.edges().len(), 3);
        assert_eq!(g.edges()[2].dst, "b");
    }

    #[test]
    fn reference_before_definition() {
        let g = parse_penman("(w / want-01 :ARG1 b :ARG0 (b / boy))").unwrap();
        assert_eq!(g.nodes().len(), 2);
    }

    #[test]
    fn inverted_relation_flips_direction() {
        let g = parse_penman("(c / commando :ARG0-of (k / kill-01))").unwrap();
        let e = &g.edges()[0];
        assert_eq!((e.src.as_str(), e.dst.as_str()), ("k", "c"));
        assert_eq!(e.raw_relation, ":ARG0-of");
        assert_eq!(e.group, RelationGroup::Arg0);
    }

    #[test]
    fn bundle_with_alignments() {
        let text = "# ::id s1\n# ::tok commandos killed him\n# ::align k-1:2 c-0:1\n(k / kill-01\n   :ARG0 (c / commando))\n\n# ::id s2\n(x / thing)\n";
        let entries = parse_bundle(text).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].id.as_deref(), Some("s1"));
        assert_eq!(entries[0].tokens.as_ref().unwrap().len(), 3);
        let k = entries[0].graph.node("k").unwrap();
        assert_eq!(k.token_span, Some(TokenSpan::new(1, 2)));
        let c = entries[0].graph.node("c").unwrap();
        assert_eq!(c.token_span, Some(TokenSpan::new(0, 1)));
        let again = parse_bundle(&write_bundle(&entries)).unwrap();
        assert_eq!(again, entries);
    }
}
