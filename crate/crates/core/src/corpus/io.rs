use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::types::{schema_error, LabeledSentence};
use crate::amr::{parse_bundle, write_bundle, AlignmentRecord, AmrEntry, AmrGraph, TokenSpan};
use crate::error::{Error, Result};

/// Reads a JSON Lines file, skipping blank lines. Parse failures are
/// reported against their 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| schema_error(&name, i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_labeled(path: &Path) -> Result<Vec<LabeledSentence>> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: LabeledSentence =
            serde_json::from_str(line).map_err(|e| schema_error(&name, i + 1, e.to_string()))?;
        s.validate().map_err(|m| schema_error(&name, i + 1, m))?;
        out.push(s);
    }
    Ok(out)
}

pub fn save_labeled(path: &Path, sentences: &[LabeledSentence]) -> Result<()> {
    write_jsonl(path, sentences)
}

/// Sentence id to graph. Blocks without `# ::id` are keyed by their
/// 0-based position.
pub fn load_amr_bundle(path: &Path) -> Result<BTreeMap<String, AmrGraph>> {
    parse_amr_bundle(&fs::read_to_string(path)?)
}

pub fn parse_amr_bundle(text: &str) -> Result<BTreeMap<String, AmrGraph>> {
    let mut out = BTreeMap::new();
    for (i, entry) in parse_bundle(text)?.into_iter().enumerate() {
        let id = entry.id.unwrap_or_else(|| i.to_string());
        if out.contains_key(&id) {
            return Err(Error::DuplicateSentId(id));
        }
        out.insert(id, entry.graph);
    }
    Ok(out)
}

/// Writes graphs in sentence-id order; `tokens` supplies `# ::tok` lines
/// where known.
pub fn save_amr_bundle(
    path: &Path,
    graphs: &BTreeMap<String, AmrGraph>,
    tokens: &BTreeMap<String, Vec<String>>,
) -> Result<()> {
    let entries: Vec<AmrEntry> = graphs
        .iter()
        .map(|(id, g)| AmrEntry {
            id: Some(id.clone()),
            tokens: tokens.get(id).cloned(),
            graph: g.clone(),
        })
        .collect();
    fs::write(path, write_bundle(&entries))?;
    Ok(())
}

/// Applies JSON Lines alignment records on top of loaded graphs.
pub fn apply_alignments(
    graphs: &mut BTreeMap<String, AmrGraph>,
    records: &[AlignmentRecord],
) -> Result<()> {
    for r in records {
        let g = graphs
            .get_mut(&r.sent_id)
            .ok_or_else(|| Error::MissingAmr(r.sent_id.clone()))?;
        g.set_alignment(&r.node_id, TokenSpan::new(r.start, r.end))?;
    }
    Ok(())
}
